"""Decision-tree ensembles fit from scratch: a Gini random forest and a
logistic-loss gradient-boosted ensemble with Newton leaf weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import Table

LEAF = -1


class DegenerateTarget(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat binary tree. Rows with ``x[feature] <= threshold`` go left.

    ``value`` holds the leaf output (class-1 proportion for forest trees, the
    shrunken Newton weight for boosted trees); ``cover`` is the training mass
    reaching each node (row count or hessian sum).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self) -> np.ndarray:
        return self.left == LEAF

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.left[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf each row of ``X`` lands in."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            active = self.left[node] != LEAF
            if not active.any():
                return node
            n = node[active]
            go_left = X[rows[active], self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "cover")}


class _TreeBuilder:
    """Accumulates nodes in creation order."""

    def __init__(self):
        self.feature, self.threshold = [], []
        self.left, self.right = [], []
        self.value, self.cover = [], []

    def add(self, value: float, cover: float) -> int:
        self.feature.append(0)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        self.cover.append(cover)
        return len(self.feature) - 1

    def split(self, node: int, feature: int, threshold: float, left: int, right: int) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def build(self) -> DecisionTree:
        return DecisionTree(np.array(self.feature, dtype=np.int64),
                            np.array(self.threshold, dtype=float),
                            np.array(self.left, dtype=np.int64),
                            np.array(self.right, dtype=np.int64),
                            np.array(self.value, dtype=float),
                            np.array(self.cover, dtype=float))


def _check_binary(y: np.ndarray) -> None:
    if len(y) < 10:
        raise ValueError("need at least 10 training rows")
    if np.all(y == y[0]):
        raise DegenerateTarget("training target has a single class")


# --------------------------------------------------------------------------
# random forest


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[DecisionTree, ...]
    max_depth: int
    seed: int
    n_features: int


def _best_gini_split(x: np.ndarray, y: np.ndarray):
    """Lowest weighted child Gini over thresholds between distinct values of ``x``."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    valid = np.flatnonzero(xs[:-1] < xs[1:])
    if valid.size == 0:
        return None
    n_left = valid + 1.0
    pos_left = np.cumsum(ys)[valid]
    n_right = n - n_left
    pos_right = ys.sum() - pos_left
    p_l, p_r = pos_left / n_left, pos_right / n_right
    child = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
    best = int(np.argmin(child))
    i = valid[best]
    return float(child[best]), 0.5 * (xs[i] + xs[i + 1])


def _fit_gini_tree(X, y, max_depth, n_sub, rng) -> DecisionTree:
    b = _TreeBuilder()
    p = X.shape[1]

    def grow(idx, depth):
        ys = y[idx]
        frac = float(ys.mean())
        node = b.add(frac, float(len(idx)))
        parent = 2 * frac * (1 - frac)
        if depth >= max_depth or parent == 0.0 or len(idx) < 2:
            return node
        feats = np.sort(rng.choice(p, size=n_sub, replace=False))
        best = None
        for f in feats:
            cand = _best_gini_split(X[idx, f], ys)
            if cand is not None and (best is None or cand[0] < best[0]):
                best = (cand[0], int(f), cand[1])
        if best is None or best[0] >= parent - 1e-12:
            return node
        _, f, thr = best
        go_left = X[idx, f] <= thr
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        b.split(node, f, thr, left, right)
        return node

    grow(np.arange(len(y)), 0)
    return b.build()


def fit_forest(train: Table, seed: int, n_trees: int = 50, max_depth: int = 5) -> ForestModel:
    """Bootstrap forest of Gini trees with ``floor(sqrt(p))`` candidate features per split."""
    X, y = train.X, train.y
    _check_binary(y)
    rng = np.random.default_rng(seed)
    n, p = X.shape
    n_sub = max(1, int(np.sqrt(p)))
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, size=n)
        trees.append(_fit_gini_tree(X[boot], y[boot], max_depth, n_sub, rng))
    return ForestModel(tuple(trees), max_depth, seed, p)


def predict_proba(m: ForestModel, row) -> float | np.ndarray:
    """Soft-vote class-1 probability for one row or a matrix of rows."""
    X = np.asarray(row, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != m.n_features:
        raise ValueError(f"expected {m.n_features} features, got {X.shape[1]}")
    prob = np.mean([t.predict(X) for t in m.trees], axis=0)
    return float(prob[0]) if single else prob


# --------------------------------------------------------------------------
# gradient boosting


@dataclass(frozen=True, eq=False)
class GbdtModel:
    trees: tuple[DecisionTree, ...]
    base_score: float
    learning_rate: float
    max_depth: int
    n_features: int
    train_loss: tuple[float, ...] = ()

    def margin(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), self.base_score)
        for t in self.trees:
            out += t.predict(X)
        return out

    def predict_proba(self, X) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.margin(X)))


def log_loss(y: np.ndarray, margin: np.ndarray) -> float:
    # log(1 + e^m) - y m, stable for large |m|
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def _newton_tree(X, order, g, h, max_depth, reg_lambda, min_child_weight, learning_rate):
    """Grow one tree level by level with exact greedy split search.

    ``order`` is a (features, rows) matrix whose row ``f`` sorts ``X[:, f]``.
    Along every level the matrix stays grouped by frontier node (same segment
    boundaries for all features) and value-sorted inside each segment.
    Gains tie-break to the lowest feature index, then the lowest threshold.
    """
    n, p = X.shape
    feat_idx = np.arange(p)[:, None]
    b = _TreeBuilder()
    frontier = [b.add(0.0, float(h.sum()))]
    G, H = np.array([g.sum()]), np.array([h.sum()])
    rows = np.arange(n)          # active rows, grouped like ``order``
    slot = np.zeros(n, dtype=np.int64)  # frontier position of each row
    order = order.copy()

    for depth in range(max_depth + 1):
        n_front = len(frontier)
        best_f = np.full(n_front, -1)
        best_thr = np.zeros(n_front)
        if depth < max_depth:
            counts = np.bincount(slot[rows], minlength=n_front)
            starts = np.cumsum(counts) - counts
            m = len(rows)
            xs = X[order, feat_idx]
            cg = np.cumsum(g[order], axis=1)
            ch = np.cumsum(h[order], axis=1)
            nonempty = counts > 0
            st = starts[nonempty]
            # cumulative sums restarted at every segment
            before = st - 1
            base_g = np.where(before >= 0, cg[:, np.maximum(before, 0)], 0.0)
            base_h = np.where(before >= 0, ch[:, np.maximum(before, 0)], 0.0)
            reps = counts[nonempty]
            GL = cg - np.repeat(base_g, reps, axis=1)
            HL = ch - np.repeat(base_h, reps, axis=1)
            seg = np.repeat(np.arange(n_front), counts)
            GR = G[seg] - GL
            HR = H[seg] - HL
            last = np.zeros(m, dtype=bool)
            last[np.cumsum(reps) - 1] = True
            ok = np.empty((p, m), dtype=bool)
            ok[:, :-1] = xs[:, :-1] < xs[:, 1:]
            ok[:, -1] = False
            ok &= ~last
            ok &= HL >= min_child_weight
            ok &= HR >= min_child_weight
            if ok.any():
                with np.errstate(invalid="ignore"):
                    gain = 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda)
                                  - (G * G / (H + reg_lambda))[seg])
                gain = np.where(ok, gain, -np.inf)
                seg_max = np.maximum.reduceat(gain, st, axis=1)          # (p, S)
                pos = np.arange(m)
                first = np.minimum.reduceat(
                    np.where(gain == np.repeat(seg_max, reps, axis=1), pos, m), st, axis=1)
                f_star = np.argmax(seg_max, axis=0)
                cols = np.arange(len(st))
                g_star = seg_max[f_star, cols]
                front_ids = np.flatnonzero(nonempty)
                for c in np.flatnonzero(g_star > 0.0):
                    f = int(f_star[c])
                    i = first[f, c]
                    k = front_ids[c]
                    best_f[k] = f
                    best_thr[k] = 0.5 * (xs[f, i] + xs[f, i + 1])

        split = best_f >= 0
        for k in np.flatnonzero(~split):
            b.value[frontier[k]] = -G[k] / (H[k] + reg_lambda) * learning_rate
        if not split.any():
            break
        # children take consecutive frontier slots: left, right per split parent
        new_slot = np.full(n_front, -1)
        new_slot[split] = 2 * np.arange(split.sum())
        r_slot = slot[rows]
        keep = split[r_slot]
        rows_kept = rows[keep]
        ks = r_slot[keep]
        go_right = ~(X[rows_kept, best_f[ks]] <= best_thr[ks])
        child = new_slot[ks] + go_right
        slot[rows_kept] = child
        n_child = 2 * int(split.sum())
        G = np.bincount(child, weights=g[rows_kept], minlength=n_child)
        H = np.bincount(child, weights=h[rows_kept], minlength=n_child)
        nxt = []
        for k in np.flatnonzero(split):
            c = new_slot[k]
            left = b.add(0.0, float(H[c]))
            right = b.add(0.0, float(H[c + 1]))
            b.split(frontier[k], int(best_f[k]), float(best_thr[k]), left, right)
            nxt += [left, right]
        frontier = nxt
        # regroup the per-feature orders by child slot, keeping value order inside
        alive = np.zeros(n, dtype=bool)
        alive[rows_kept] = True
        order = order[alive[order]].reshape(p, -1)
        key = slot[order].astype(np.int16 if len(frontier) < 32000 else np.int64)
        order = np.take_along_axis(order, np.argsort(key, axis=1, kind="stable"), axis=1)
        rows = order[0]
    return b.build()


def fit_gbdt(train: Table, seed: int = 0, n_estimators: int = 100, max_depth: int = 6,
             learning_rate: float = 0.1, reg_lambda: float = 1.0,
             min_child_weight: float = 1.0) -> GbdtModel:
    """Logistic-loss gradient boosting with exact greedy splits.

    No row or column subsampling is done, so ``seed`` has no effect on the
    fit; it is accepted for interface symmetry with :func:`fit_forest`.
    """
    X, y = train.X, train.y
    _check_binary(y)
    n, p = X.shape
    rate = y.mean()
    base = float(np.log(rate / (1 - rate)))
    order = np.argsort(X, axis=0, kind="stable").T
    margin = np.full(n, base)
    trees, losses = [], [log_loss(y, margin)]
    for _ in range(n_estimators):
        prob = 1.0 / (1.0 + np.exp(-margin))
        g = prob - y
        h = prob * (1 - prob)
        t = _newton_tree(X, order, g, h, max_depth, reg_lambda, min_child_weight, learning_rate)
        trees.append(t)
        margin = margin + t.predict(X)
        losses.append(log_loss(y, margin))
    return GbdtModel(tuple(trees), base, learning_rate, max_depth, p, tuple(losses))
