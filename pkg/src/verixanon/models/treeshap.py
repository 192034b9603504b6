"""Exact path-dependent TreeSHAP for boosted ensembles, plus a brute-force
Shapley oracle over feature subsets.

Both use the same value function: the expected model output when features in
``S`` follow the instance and every other split is averaged by training cover.
For one leaf this value is a product over the leaf's path features,
``prod_j (o_j if j in S else z_j)``, where ``o_j`` says whether the instance
satisfies all path conditions on feature ``j`` and ``z_j`` is the product of
cover ratios along those edges. The Shapley values of such a product game
depend only on the bit pattern of ``o``, so each tree is reduced to a lookup
table indexed by (leaf, pattern).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy import sparse

from .trees import LEAF, DecisionTree, GbdtModel


class TooManyFeatures(ValueError):
    pass


@dataclass(frozen=True)
class ShapAttribution:
    """Per-feature attributions in raw-margin space.

    ``per_feature`` is ``(p,)`` for one row or ``(n, p)`` for a batch.
    """

    per_feature: np.ndarray
    base_value: float

    def total(self) -> np.ndarray:
        return self.per_feature.sum(axis=-1) + self.base_value


@dataclass(frozen=True, eq=False)
class _LeafTable:
    feat: np.ndarray    # (L, D) path feature per slot (padding slots: 0)
    lo: np.ndarray      # (L, D) instance satisfies the slot iff lo < x <= hi
    hi: np.ndarray
    table: np.ndarray   # (L * 2**D, p) attribution for each (leaf, pattern)
    expected: float     # cover-weighted mean leaf value


def _leaf_paths(tree: DecisionTree):
    """Yield (leaf, {feature: [lo, hi, cover_fraction]}) for every leaf."""
    stack = [(0, {})]
    while stack:
        node, conds = stack.pop()
        if tree.left[node] == LEAF:
            yield node, conds
            continue
        f, thr = int(tree.feature[node]), float(tree.threshold[node])
        cover = tree.cover[node]
        for child, is_left in ((tree.right[node], False), (tree.left[node], True)):
            lo, hi, z = conds.get(f, (-np.inf, np.inf, 1.0))
            if is_left:
                hi = min(hi, thr)
            else:
                lo = max(lo, thr)
            nc = dict(conds)
            nc[f] = (lo, hi, z * tree.cover[child] / cover)
            stack.append((child, nc))


def _slot_weights(d: int) -> np.ndarray:
    return np.array([factorial(s) * factorial(d - s - 1) / factorial(d) for s in range(d)])


def _leaf_table(tree: DecisionTree, n_features: int) -> _LeafTable | None:
    root_cover = tree.cover[0]
    leaves = list(_leaf_paths(tree))
    expected = float(sum(tree.value[l] * tree.cover[l] for l, _ in leaves) / root_cover)
    if tree.left[0] == LEAF:
        return None
    L = len(leaves)
    D = max(len(c) for _, c in leaves)
    feat = np.zeros((L, D), dtype=np.int64)
    lo = np.full((L, D), -np.inf)
    hi = np.full((L, D), np.inf)
    z = np.ones((L, D))
    v = np.empty(L)
    for k, (leaf, conds) in enumerate(leaves):
        v[k] = tree.value[leaf]
        for s, f in enumerate(sorted(conds)):
            feat[k, s] = f
            lo[k, s], hi[k, s], z[k, s] = conds[f]

    P = 1 << D
    bits = ((np.arange(P)[:, None] >> np.arange(D)) & 1).astype(float)  # (P, D)
    o = np.broadcast_to(bits[None], (L, P, D))
    zz = np.broadcast_to(z[:, None, :], (L, P, D))
    w = _slot_weights(D)
    phi = np.empty((L, P, D))
    for i in range(D):
        # coefficients of prod_{j != i} (z_j + o_j t), degrees 0..D-1
        coef = np.zeros((L, P, D))
        coef[..., 0] = 1.0
        for j in range(D):
            if j == i:
                continue
            shifted = np.zeros_like(coef)
            shifted[..., 1:] = coef[..., :-1]
            coef = coef * zz[..., j:j + 1] + shifted * o[..., j:j + 1]
        phi[..., i] = (o[..., i] - zz[..., i]) * (coef @ w)
    phi *= v[:, None, None]

    # fold slots onto model features: table[l * P + pattern, f]
    onehot = np.zeros((L, D, n_features))
    onehot[np.arange(L)[:, None], np.arange(D)[None, :], feat] = 1.0
    table = np.einsum("lpd,ldf->lpf", phi, onehot).reshape(L * P, n_features)
    return _LeafTable(feat, lo, hi, table, expected)


@dataclass(frozen=True, eq=False)
class _Ensemble:
    stacked: np.ndarray     # every tree's lookup table, stacked row-wise
    leaf_row: np.ndarray    # (n_leaves,) row of pattern 0 for each leaf
    slots: list             # per feature: (leaf columns, bit shifts, lo, hi)
    base_value: float


def _ensemble(m: GbdtModel) -> _Ensemble:
    cached = getattr(m, "_shap_cache", None)
    if cached is not None:
        return cached
    tabs, base = [], m.base_score
    for t in m.trees:
        tab = _leaf_table(t, m.n_features)
        if tab is None:
            base += float(t.value[0])
        else:
            base += tab.expected
            tabs.append(tab)
    leaf_row, cols, shifts, feats, los, his = [], [], [], [], [], []
    row = col = 0
    for tab in tabs:
        L, D = tab.feat.shape
        # padding slots always match, so their bits are fixed in the base row
        real = np.isfinite(tab.lo) | np.isfinite(tab.hi)
        pad_bits = (~real * (1 << np.arange(D))).sum(axis=1)
        leaf_row.append(row + (np.arange(L) << D) + pad_bits)
        li, si = np.nonzero(real)
        cols.append(col + li)
        shifts.append(si)
        feats.append(tab.feat[li, si])
        los.append(tab.lo[li, si])
        his.append(tab.hi[li, si])
        row += len(tab.table)
        col += L
    slots = []
    if tabs:
        cols, shifts, feats, los, his = map(np.concatenate, (cols, shifts, feats, los, his))
        for f in range(m.n_features):
            k = feats == f
            slots.append((cols[k], shifts[k].astype(np.uint8), los[k], his[k]))
        stacked = np.concatenate([t.table for t in tabs])
        leaf_row = np.concatenate(leaf_row)
    else:
        stacked, leaf_row = np.zeros((0, m.n_features)), np.zeros(0, dtype=np.int64)
    cached = _Ensemble(stacked, leaf_row, slots, base)
    object.__setattr__(m, "_shap_cache", cached)
    return cached


def _table_rows(ens: _Ensemble, X: np.ndarray) -> np.ndarray:
    """Row of ``ens.stacked`` selected by every (instance, leaf) pair."""
    bits = np.zeros((len(ens.leaf_row), len(X)), dtype=np.uint8)
    for f, (cols, shift, lo, hi) in enumerate(ens.slots):
        if len(cols) == 0:
            continue
        x = X[:, f]
        sat = (x > lo[:, None]) & (x <= hi[:, None])
        # a leaf path holds at most one slot per feature, so rows are unique
        bits[cols] |= sat.view(np.uint8) << shift[:, None]
    return bits.T + ens.leaf_row


def _check_arity(m: GbdtModel, X: np.ndarray) -> None:
    if X.shape[1] != m.n_features:
        raise ValueError(f"expected {m.n_features} features, got {X.shape[1]}")


def tree_shap(m: GbdtModel, row, background=None, chunk: int = 4096) -> ShapAttribution:
    """Exact path-dependent TreeSHAP values summed over the ensemble.

    ``row`` may be one feature vector or an ``(n, p)`` matrix. ``background``
    is accepted for interface compatibility only: the path-dependent
    expectation uses the training cover stored in the trees.
    """
    X = np.asarray(row, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    _check_arity(m, X)
    if background is not None:
        _check_arity(m, np.atleast_2d(np.asarray(getattr(background, "X", background), float)))
    ens = _ensemble(m)
    out = np.zeros(X.shape)
    n_leaves = len(ens.leaf_row)
    if n_leaves:
        # the attribution is a sum of one table row per leaf, i.e. a sparse
        # 0/1 selection matrix times the stacked tables
        for a in range(0, len(X), chunk):
            Xc = X[a:a + chunk]
            rows = _table_rows(ens, Xc)
            indptr = np.arange(len(Xc) + 1, dtype=np.int64) * n_leaves
            pick = sparse.csr_matrix(
                (np.ones(rows.size), rows.ravel(), indptr), shape=(len(Xc), len(ens.stacked))
            )
            out[a:a + chunk] = pick @ ens.stacked
    base = ens.base_value
    per = out[0] if single else out
    return ShapAttribution(per, base)


# --------------------------------------------------------------------------
# brute-force oracle


def _cond_expectation(tree: DecisionTree, x: np.ndarray, known: frozenset) -> float:
    def walk(node):
        if tree.left[node] == LEAF:
            return tree.value[node]
        f = tree.feature[node]
        left, right = tree.left[node], tree.right[node]
        if f in known:
            return walk(left if x[f] <= tree.threshold[node] else right)
        return (tree.cover[left] * walk(left) + tree.cover[right] * walk(right)) / tree.cover[node]

    return float(walk(0))


def brute_shapley(m: GbdtModel, row, background=None, max_features: int = 12) -> ShapAttribution:
    """Shapley values by enumerating every feature subset (``2**p`` games)."""
    x = np.asarray(row, dtype=float)
    p = m.n_features
    if p > max_features:
        raise TooManyFeatures(f"{p} features exceeds the enumeration limit of {max_features}")
    _check_arity(m, x[None])

    def value(S):
        return m.base_score + sum(_cond_expectation(t, x, S) for t in m.trees)

    values = {}
    for r in range(p + 1):
        for S in itertools.combinations(range(p), r):
            values[frozenset(S)] = value(frozenset(S))
    phi = np.zeros(p)
    for i in range(p):
        others = [j for j in range(p) if j != i]
        for r in range(p):
            w = factorial(r) * factorial(p - r - 1) / factorial(p)
            for S in itertools.combinations(others, r):
                S = frozenset(S)
                phi[i] += w * (values[S | {i}] - values[S])
    return ShapAttribution(phi, values[frozenset()])
