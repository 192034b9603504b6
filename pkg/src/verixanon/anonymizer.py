"""Cloud-side anonymization: a target-driven tree whose leaves become
equivalence classes, the generalized table it induces, and a Merkle-style
digest over the tree."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace
from itertools import chain
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .canonical import canonical_number, canonical_numbers, integer_cells, number_cells, \
    render_rows, sha256_rows
from .dataset import ColumnSpec, Table

MAX_DEPTH = 50


class TooFewRows(ValueError):
    pass


class CorruptBundle(ValueError):
    pass


class MalformedTree(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PublishedDataset:
    """What the cloud receives: rows and their tracker ids, nothing else."""

    table: Table
    tracker_ids: tuple[str, ...]

    def __post_init__(self):
        if len(self.tracker_ids) != self.table.n_rows:
            raise ValueError("one tracker id per row is required")

    @property
    def n_rows(self) -> int:
        return self.table.n_rows

    def drop_rows(self, idx) -> "PublishedDataset":
        keep = np.setdiff1d(np.arange(self.n_rows), np.asarray(idx, dtype=int))
        return PublishedDataset(self.table.take(keep), tuple(self.tracker_ids[i] for i in keep))


# --------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class AdtLeaf:
    count: int
    names: tuple[str, ...]      # QI columns in schema order
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @property
    def bounds(self) -> dict[str, tuple[float, float]]:
        return {n: (a, b) for n, a, b in zip(self.names, self.lo, self.hi)}


@dataclass(frozen=True)
class AdtInternal:
    feature: str
    value: float
    left: "AdtNode"
    right: "AdtNode"


AdtNode = Union[AdtLeaf, AdtInternal]


@dataclass(frozen=True)
class SplitChoice:
    feature: int
    value: float
    gain: float


Splitter = Callable[[np.ndarray, np.ndarray, int], Union[SplitChoice, None]]


def variance_reduction(parent, left, right) -> float:
    parent, left, right = (np.asarray(a, dtype=float) for a in (parent, left, right))
    if len(left) == 0 or len(right) == 0:
        raise ValueError("both children must be non-empty")
    n = len(parent)
    return float(parent.var() - (len(left) * left.var() + len(right) * right.var()) / n)


def _median_split(x: np.ndarray, y: np.ndarray, k: int):
    med = float(np.median(x))
    go_left = x <= med
    n_left = int(go_left.sum())
    if n_left < 2 * k or len(x) - n_left < 2 * k:
        return None
    return med, go_left


def best_split(X: np.ndarray, y: np.ndarray, k: int) -> SplitChoice | None:
    """Median split with the largest variance reduction of ``y``.

    Rows with value <= median go left; a candidate needs at least ``2k`` rows
    on each side. Ties keep the lower column index.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    best = None
    for j in range(X.shape[1]):
        cand = _median_split(X[:, j], y, k)
        if cand is None:
            continue
        med, go_left = cand
        gain = variance_reduction(y, y[go_left], y[~go_left])
        if best is None or gain > best.gain:
            best = SplitChoice(j, med, gain)
    return best


def blind_splitter(seed: int) -> Splitter:
    """Splits on the first valid median of a random feature order per node,
    ignoring the target."""
    rng = np.random.RandomState(seed)

    def split(X: np.ndarray, y: np.ndarray, k: int) -> SplitChoice | None:
        for j in rng.permutation(X.shape[1]):
            cand = _median_split(X[:, j], y, k)
            if cand is not None:
                return SplitChoice(int(j), cand[0], float("nan"))
        return None

    return split


def _grow(X: np.ndarray, y: np.ndarray, names: tuple[str, ...], k: int,
          splitter: Splitter, max_depth: int):
    """Return the tree and the row indices of each leaf in pre-order."""
    leaves: list[np.ndarray] = []

    def grow(rows: np.ndarray, depth: int) -> AdtNode:
        ys = y[rows]
        choice = None
        if len(rows) >= 4 * k and ys.var() > 0 and depth < max_depth:
            choice = splitter(X[rows], ys, k)
        if choice is None:
            block = X[rows]
            lo, hi = block.min(axis=0), block.max(axis=0)
            leaves.append(rows)
            return AdtLeaf(len(rows), names, tuple(lo.tolist()), tuple(hi.tolist()))
        go_left = X[rows, choice.feature] <= choice.value
        left = grow(rows[go_left], depth + 1)
        right = grow(rows[~go_left], depth + 1)
        return AdtInternal(names[choice.feature], choice.value, left, right)

    return grow(np.arange(len(y)), 0), leaves


def build_adt(t: Table, k: int, splitter: Splitter | None = None,
              max_depth: int = MAX_DEPTH) -> AdtNode:
    return _build(t, k, splitter, max_depth)[0]


def _build(t: Table, k: int, splitter: Splitter | None, max_depth: int):
    if k < 2:
        raise ValueError("k must be at least 2")
    if t.n_rows < 2 * k:
        raise TooFewRows(f"{t.n_rows} rows cannot form a class of {2 * k}")
    return _grow(t.X, t.y, tuple(t.qi_names), k, splitter or best_split, max_depth)


def iter_preorder(tree: AdtNode):
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, AdtInternal):
            stack.append(node.right)
            stack.append(node.left)
        elif not isinstance(node, AdtLeaf):
            raise MalformedTree(f"unexpected node {type(node).__name__}")


def leaves_preorder(tree: AdtNode) -> list[AdtLeaf]:
    return [n for n in iter_preorder(tree) if isinstance(n, AdtLeaf)]


def tree_depth(tree: AdtNode) -> int:
    if isinstance(tree, AdtLeaf):
        return 0
    return 1 + max(tree_depth(tree.left), tree_depth(tree.right))


def route(tree: AdtNode, t: Table) -> np.ndarray:
    """Pre-order leaf id of every row of ``t``."""
    X = t.X
    col = {n: i for i, n in enumerate(t.qi_names)}
    out = np.empty(t.n_rows, dtype=np.int64)
    counter = iter(range(1 << 62))

    def walk(node: AdtNode, rows: np.ndarray):
        if isinstance(node, AdtLeaf):
            out[rows] = next(counter)
            return
        go_left = X[rows, col[node.feature]] <= node.value
        walk(node.left, rows[go_left])
        walk(node.right, rows[~go_left])

    walk(tree, np.arange(t.n_rows))
    return out


def assign_leaves(tree: AdtNode, ds: PublishedDataset) -> dict[str, int]:
    return dict(zip(ds.tracker_ids, route(tree, ds.table).tolist()))


# --------------------------------------------------------------------------
# generalized output


@dataclass(frozen=True, eq=False)
class GeneralizedTable:
    """Each QI cell is a closed range ``[lo, hi]``; rows keep input order."""

    schema: tuple[ColumnSpec, ...]
    lo: np.ndarray          # (n, n_qi)
    hi: np.ndarray
    y: np.ndarray
    leaf_ids: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def qi_names(self) -> list[str]:
        return [c.name for c in self.schema if c.role != "target"]

    def take(self, idx) -> GeneralizedTable:
        return GeneralizedTable(self.schema, self.lo[idx], self.hi[idx], self.y[idx],
                                self.leaf_ids[idx])


def generalize(tree: AdtNode, leaf_rows: list[np.ndarray], t: Table) -> GeneralizedTable:
    leaves = leaves_preorder(tree)
    q = len(t.qi_indices)
    lo = np.empty((t.n_rows, q))
    hi = np.empty((t.n_rows, q))
    ids = np.empty(t.n_rows, dtype=np.int64)
    for i, (leaf, rows) in enumerate(zip(leaves, leaf_rows)):
        lo[rows] = leaf.lo
        hi[rows] = leaf.hi
        ids[rows] = i
    return GeneralizedTable(t.schema, lo, hi, t.y.copy(), ids)


def flatten_midpoints(g: GeneralizedTable) -> Table:
    """Replace each range by its midpoint; integer QI columns become continuous
    since midpoints may be half-integral."""
    schema = tuple(
        replace(c, kind="continuous") if c.role != "target" and c.kind == "integer" else c
        for c in g.schema
    )
    mid = (g.lo + g.hi) / 2.0
    rows = np.empty((g.n_rows, len(schema)))
    qi = [i for i, c in enumerate(schema) if c.role != "target"]
    rows[:, qi] = mid
    rows[:, [i for i, c in enumerate(schema) if c.role == "target"][0]] = g.y
    return Table(schema, rows)


def anonymize_table(t: Table, k: int, splitter: Splitter | None = None,
                    max_depth: int = MAX_DEPTH) -> GeneralizedTable:
    tree, leaf_rows = _build(t, k, splitter, max_depth)
    return generalize(tree, leaf_rows, t)


# --------------------------------------------------------------------------
# digests


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def hash_leaf(leaf: AdtLeaf) -> str:
    """SHA-256 of ``LEAF|count|name=lo..hi|...`` with names ascending."""
    entries = sorted(zip(leaf.names, leaf.lo, leaf.hi))
    body = "|".join(f"{n}={canonical_number(a)}..{canonical_number(b)}" for n, a, b in entries)
    return _sha(f"LEAF|{leaf.count}|{body}")


def hash_internal(node: AdtInternal, h_left: str, h_right: str) -> str:
    return _sha(f"INTERNAL|{node.feature}|{canonical_number(node.value)}|{h_left}|{h_right}")


def _leaf_digests(leaves: list[AdtLeaf]) -> list[str]:
    """Same digests as :func:`hash_leaf`, rendering all leaves sharing a
    column set in one vectorized pass."""
    groups: dict[tuple[str, ...], list[int]] = {}
    for i, leaf in enumerate(leaves):
        groups.setdefault(leaf.names, []).append(i)
    out = [""] * len(leaves)
    for names, idx in groups.items():
        order = sorted(range(len(names)), key=names.__getitem__)
        flat = chain.from_iterable((*leaves[i].lo, *leaves[i].hi) for i in idx)
        bounds = np.fromiter(flat, dtype=float, count=2 * len(idx) * len(names))
        bounds = bounds.reshape(len(idx), 2, -1)[:, :, order]
        try:
            cells = number_cells(bounds.ravel()).reshape(len(idx), 2, len(order), -1)
        except ValueError:   # magnitudes beyond exact fast rendering
            for i in idx:
                out[i] = hash_leaf(leaves[i])
            continue
        pieces: list = [b"LEAF|", integer_cells([leaves[i].count for i in idx]), b"|"]
        for pos, j in enumerate(order):
            if pos:
                pieces.append(b"|")
            pieces += [f"{names[j]}=".encode(), cells[:, 0, pos], b"..", cells[:, 1, pos]]
        for i, digest in zip(idx, sha256_rows(render_rows(pieces, len(idx)))):
            out[i] = digest
    return out


def compute_root_hash(tree: AdtNode) -> str:
    leaves: list[AdtLeaf] = []
    internals: list[AdtInternal] = []
    stack = [tree]
    while stack:
        node = stack.pop()
        if type(node) is AdtInternal:
            internals.append(node)
            stack.append(node.right)
            stack.append(node.left)
        elif type(node) is AdtLeaf:
            leaves.append(node)
        else:
            raise MalformedTree(f"unexpected node {type(node).__name__}")
    digest: dict[int, str] = dict(zip(map(id, leaves), _leaf_digests(leaves)))
    values = canonical_numbers([n.value for n in internals])
    # internals are in pre-order, so every node's children are hashed before it
    sha256 = hashlib.sha256
    for node, value in zip(reversed(internals), reversed(values)):
        digest[id(node)] = sha256(
            f"INTERNAL|{node.feature}|{value}|{digest[id(node.left)]}|{digest[id(node.right)]}"
            .encode()).hexdigest()
    return digest[id(tree)]


# --------------------------------------------------------------------------
# result bundle


@dataclass(frozen=True, eq=False)
class AnonymizationResult:
    anonymized: GeneralizedTable
    tracker_ids: tuple[str, ...]      # row-aligned with ``anonymized``
    leaf_map: dict[str, int]
    root_hash: str
    tree: AdtNode


def anonymize(ds: PublishedDataset, k: int, splitter: Splitter | None = None,
              max_depth: int = MAX_DEPTH) -> AnonymizationResult:
    """Anonymize a published dataset and authenticate the tree."""
    tree, leaf_rows = _build(ds.table, k, splitter, max_depth)
    g = generalize(tree, leaf_rows, ds.table)
    leaf_map = dict(zip(ds.tracker_ids, g.leaf_ids.tolist()))
    return AnonymizationResult(g, ds.tracker_ids, leaf_map, compute_root_hash(tree), tree)


def tree_to_json(tree: AdtNode) -> list[dict]:
    out = []
    for node in iter_preorder(tree):
        if isinstance(node, AdtLeaf):
            out.append({"type": "leaf", "count": node.count,
                        "bounds": [[n, a, b] for n, a, b in zip(node.names, node.lo, node.hi)]})
        else:
            out.append({"type": "internal", "feature": node.feature, "value": node.value})
    return out


def tree_from_json(nodes: list[dict]) -> AdtNode:
    it = iter(nodes)

    def parse() -> AdtNode:
        try:
            d = next(it)
        except StopIteration:
            raise MalformedTree("node list ended before the tree was complete") from None
        try:
            if d["type"] == "leaf":
                names, lo, hi = zip(*d["bounds"]) if d["bounds"] else ((), (), ())
                leaf = AdtLeaf(int(d["count"]), tuple(map(str, names)), tuple(map(float, lo)),
                               tuple(map(float, hi)))
                if any(a > b for a, b in zip(leaf.lo, leaf.hi)):
                    raise MalformedTree("leaf bound with min > max")
                return leaf
            if d["type"] == "internal":
                feature, value = str(d["feature"]), float(d["value"])
                left = parse()
                return AdtInternal(feature, value, left, parse())
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, MalformedTree):
                raise
            raise MalformedTree(f"bad node {d!r}: {e}") from None
        raise MalformedTree(f"unknown node type {d.get('type')!r}")

    tree = parse()
    if next(it, None) is not None:
        raise MalformedTree("trailing nodes after a complete tree")
    return tree


BUNDLE_FILES = ("anonymized.csv", "leaf_map.json", "tree.json", "root_hash.txt")


def write_bundle(directory: str | Path, result: AnonymizationResult) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = result.anonymized
    names = [c.name for c in g.schema]
    qi_pos = {n: i for i, n in enumerate(g.qi_names)}
    with open(d / BUNDLE_FILES[0], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["tracker_id"])
        order = [qi_pos.get(c.name) for c in g.schema]
        for lo, hi, y, tid in zip(g.lo.tolist(), g.hi.tolist(), g.y.tolist(), result.tracker_ids):
            w.writerow([str(int(y)) if j is None else f"{lo[j]!r}..{hi[j]!r}" for j in order]
                       + [tid])
    (d / BUNDLE_FILES[1]).write_text(json.dumps(result.leaf_map, indent=0) + "\n")
    (d / BUNDLE_FILES[2]).write_text(json.dumps(tree_to_json(result.tree)) + "\n")
    (d / BUNDLE_FILES[3]).write_text(result.root_hash + "\n")


def read_bundle(directory: str | Path, schema) -> AnonymizationResult:
    d = Path(directory)
    schema = tuple(schema)
    with open(d / BUNDLE_FILES[0], newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        body = [r for r in reader if r]
    names = [c.name for c in schema]
    if header != names + ["tracker_id"]:
        raise CorruptBundle(f"unexpected anonymized header {header}")
    qi = [i for i, c in enumerate(schema) if c.role != "target"]
    t_idx = next(i for i, c in enumerate(schema) if c.role == "target")
    try:
        cells = [[r[i].split("..") for i in qi] for r in body]
        bounds = np.array(cells, dtype=float).reshape(len(body), len(qi), 2)
        y = np.array([float(r[t_idx]) for r in body])
        leaf_map = {str(k): int(v) for k, v in json.loads((d / BUNDLE_FILES[1]).read_text()).items()}
        tree_nodes = json.loads((d / BUNDLE_FILES[2]).read_text())
    except (ValueError, IndexError, AttributeError) as e:
        raise CorruptBundle(f"{d}: {e}") from None
    lo, hi = bounds[:, :, 0], bounds[:, :, 1]
    tids = tuple(r[-1] for r in body)
    tree = tree_from_json(tree_nodes)
    root = (d / BUNDLE_FILES[3]).read_text().strip()
    ids = np.array([leaf_map.get(t, -1) for t in tids], dtype=np.int64)
    return AnonymizationResult(GeneralizedTable(schema, lo, hi, y, ids), tids, leaf_map, root, tree)
