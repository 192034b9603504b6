"""Typed tabular data: schema, CSV ingestion, encoding and seeded sampling."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KINDS = ("continuous", "integer", "categorical")
ROLES = ("quasi_identifier", "target")
MISSING_MARKERS = ("?", "")


class SchemaMismatch(ValueError):
    pass


class ParseError(ValueError):
    pass


class InsufficientRows(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = "continuous"
    role: str = "quasi_identifier"
    # ordinal code -> label, filled by encode_categoricals
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaMismatch(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaMismatch(f"column {self.name!r}: unknown role {self.role!r}")

    @property
    def numeric(self) -> bool:
        return self.kind != "categorical"

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.categories is not None:
            d["categories"] = list(self.categories)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSpec":
        cats = d.get("categories")
        return cls(d["name"], d.get("kind", "continuous"), d.get("role", "quasi_identifier"),
                   tuple(cats) if cats is not None else None)


def validate_schema(schema: Sequence[ColumnSpec]) -> None:
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaMismatch("column names must be unique")
    n_target = sum(c.role == "target" for c in schema)
    if n_target != 1:
        raise SchemaMismatch(f"schema needs exactly one target column, found {n_target}")


def load_schema(path: str | Path) -> list[ColumnSpec]:
    """Read a JSON schema file: an array of ``{name, kind, role}`` objects.

    An object form ``{"columns": [...], "rename": {...}}`` is also accepted; the
    optional ``rename`` map (source header -> column name) is applied by
    :func:`load_csv` when given through ``rename=``.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    cols = raw["columns"] if isinstance(raw, dict) else raw
    schema = [ColumnSpec.from_dict(c) for c in cols]
    validate_schema(schema)
    return schema


def load_rename_map(path: str | Path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return dict(raw.get("rename", {})) if isinstance(raw, dict) else {}


def bundled_schema_path(name: str = "bank_marketing") -> Path:
    return Path(__file__).parent / "data" / f"{name}_schema.json"


@dataclass(frozen=True, eq=False)
class Table:
    """Rows of a dataset, one column per schema entry.

    ``rows`` is a float64 matrix once categoricals are encoded; before that it
    is an object matrix holding category labels as strings.
    """

    schema: tuple[ColumnSpec, ...]
    rows: np.ndarray

    def __post_init__(self):
        schema = tuple(self.schema)
        object.__setattr__(self, "schema", schema)
        validate_schema(schema)
        rows = self.rows
        if rows.ndim != 2 or rows.shape[1] != len(schema):
            raise SchemaMismatch(f"rows shape {rows.shape} does not match {len(schema)} columns")
        rows.setflags(write=False)

    @classmethod
    def from_arrays(cls, X, y, names: Sequence[str] | None = None,
                    kinds: Sequence[str] | None = None, target: str = "y") -> "Table":
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
        kinds = list(kinds) if kinds is not None else ["continuous"] * X.shape[1]
        schema = [ColumnSpec(n, k) for n, k in zip(names, kinds)]
        schema.append(ColumnSpec(target, "integer", "target"))
        rows = np.column_stack([X, np.asarray(y, dtype=float)])
        return cls(tuple(schema), rows)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def encoded(self) -> bool:
        return self.rows.dtype != object

    @property
    def target_index(self) -> int:
        return next(i for i, c in enumerate(self.schema) if c.role == "target")

    @property
    def qi_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.schema) if c.role != "target"]

    @property
    def qi_columns(self) -> list[ColumnSpec]:
        return [self.schema[i] for i in self.qi_indices]

    @property
    def qi_names(self) -> list[str]:
        return [c.name for c in self.qi_columns]

    @property
    def target_name(self) -> str:
        return self.schema[self.target_index].name

    @property
    def X(self) -> np.ndarray:
        return np.asarray(self.rows[:, self.qi_indices], dtype=float)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.rows[:, self.target_index], dtype=float)

    def take(self, idx) -> "Table":
        return Table(self.schema, self.rows[np.asarray(idx, dtype=int)])

    def with_rows(self, rows: np.ndarray) -> "Table":
        return Table(self.schema, rows)

    def column(self, name: str) -> np.ndarray:
        i = [c.name for c in self.schema].index(name)
        return self.rows[:, i]

    def to_csv(self, path: str | Path, extra: dict[str, Sequence] | None = None) -> None:
        write_csv(path, self, extra)


def _parse_number(text: str, col: ColumnSpec, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"line {line}, column {col.name!r}: cannot parse {text!r}") from None
    if not np.isfinite(v):
        raise ParseError(f"line {line}, column {col.name!r}: non-finite value {text!r}")
    if col.kind == "integer" and v != round(v):
        raise ParseError(f"line {line}, column {col.name!r}: {text!r} is not a whole number")
    return v


def _round_half_away(v: float) -> float:
    return float(np.sign(v) * np.floor(abs(v) + 0.5))


def load_csv(path: str | Path, schema: Sequence[ColumnSpec],
             rename: dict[str, str] | None = None, encoded: bool = False) -> Table:
    """Read a CSV file into a :class:`Table` and impute missing cells.

    Cells equal to ``"?"`` or empty are missing. Categorical columns take the
    column mode (ties resolved to the lexicographically smallest label),
    numeric columns the column median (rounded for integer columns).
    Categorical labels are left as strings; see :func:`encode_categoricals`.
    With ``encoded=True`` categorical cells are read as ordinal codes instead.
    """
    schema = tuple(schema)
    validate_schema(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file") from None
        if rename:
            header = [rename.get(h, h) for h in header]
        names = [c.name for c in schema]
        if sorted(header) != sorted(names) or len(header) != len(names):
            raise SchemaMismatch(f"header {header} does not match schema {names}")
        order = [header.index(n) for n in names]
        raw = []
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise SchemaMismatch(f"line {line}: expected {len(header)} cells, got {len(rec)}")
            raw.append([rec[i].strip() for i in order])

    cols = []
    for j, col in enumerate(schema):
        cells = [r[j] for r in raw]
        missing = [c in MISSING_MARKERS for c in cells]
        if col.kind == "categorical" and col.role != "target" and not encoded:
            present = [c for c, m in zip(cells, missing) if not m]
            if any(missing):
                if not present:
                    raise ParseError(f"column {col.name!r} has no observed values")
                counts = Counter(present)
                top = max(counts.values())
                fill = min(lab for lab, c in counts.items() if c == top)
                cells = [fill if m else c for c, m in zip(cells, missing)]
            cols.append(np.array(cells, dtype=object))
            continue
        values = np.empty(len(cells))
        for i, (c, m) in enumerate(zip(cells, missing)):
            values[i] = np.nan if m else _parse_number(c, col, i + 2)
        if col.role == "target":
            if np.isnan(values).any() or not np.isin(values, (0.0, 1.0)).all():
                raise ParseError(f"target column {col.name!r} must hold 0/1 values")
        elif np.isnan(values).any():
            obs = values[~np.isnan(values)]
            if obs.size == 0:
                raise ParseError(f"column {col.name!r} has no observed values")
            fill = float(np.median(obs))
            if col.kind == "integer":
                fill = _round_half_away(fill)
            values[np.isnan(values)] = fill
        cols.append(values)

    if not encoded and any(c.kind == "categorical" and c.role != "target" for c in schema):
        rows = np.empty((len(raw), len(schema)), dtype=object)
        for j, c in enumerate(cols):
            rows[:, j] = c
    else:
        rows = np.column_stack(cols) if cols else np.empty((0, len(schema)))
    return Table(schema, rows)


def encode_categoricals(t: Table) -> Table:
    """Map categorical labels to ordinal codes in ascending lexicographic order."""
    if t.encoded:
        return t
    schema = list(t.schema)
    out = np.empty(t.rows.shape, dtype=float)
    for j, col in enumerate(schema):
        values = t.rows[:, j]
        if col.kind == "categorical" and any(isinstance(v, str) for v in values):
            labels = sorted({str(v) for v in values})
            code = {lab: i for i, lab in enumerate(labels)}
            out[:, j] = [code[str(v)] for v in values]
            schema[j] = replace(col, categories=tuple(labels))
        else:
            out[:, j] = values.astype(float)
    return Table(tuple(schema), out)


def _class_quotas(class_counts: dict[float, int], n: int) -> dict[float, int]:
    """Split ``n`` draws across classes proportionally; leftovers go to the largest classes."""
    total = sum(class_counts.values())
    quota = {c: (n * m) // total for c, m in class_counts.items()}
    left = n - sum(quota.values())
    # majority first, lower label on ties
    for c in sorted(class_counts, key=lambda c: (-class_counts[c], c)):
        if left == 0:
            break
        if quota[c] < class_counts[c]:
            quota[c] += 1
            left -= 1
    return quota


def _stratified_pick(y: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    classes, counts = np.unique(y, return_counts=True)
    quota = _class_quotas(dict(zip(classes.tolist(), counts.tolist())), n)
    picked = []
    for c in classes:
        members = np.flatnonzero(y == c)
        picked.append(rng.permutation(members)[: quota[float(c)]])
    return np.concatenate(picked) if picked else np.empty(0, dtype=int)


def stratified_indices(y: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Row indices of :func:`stratified_subsample`, in output order."""
    if n > len(y):
        raise InsufficientRows(f"requested {n} rows from a table of {len(y)}")
    rng = np.random.default_rng(seed)
    return rng.permutation(_stratified_pick(y, n, rng))


def stratified_subsample(t: Table, n: int, seed: int) -> Table:
    return t.take(stratified_indices(t.y, n, seed))


def seeded_shuffle(t: Table, seed: int) -> Table:
    return t.take(np.random.default_rng(seed).permutation(t.n_rows))


def train_test_split(t: Table, test_fraction: float, seed: int) -> tuple[Table, Table]:
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n_test = int(np.floor(test_fraction * t.n_rows + 0.5))
    test = _stratified_pick(t.y, n_test, rng)
    mask = np.ones(t.n_rows, dtype=bool)
    mask[test] = False
    train = np.flatnonzero(mask)
    return t.take(rng.permutation(train)), t.take(rng.permutation(test))


def write_csv(path: str | Path, t: Table, extra: dict[str, Sequence] | None = None) -> None:
    """Write a table as CSV. Encoded categoricals are written as their codes;
    floats use the shortest round-trip representation."""
    names = [c.name for c in t.schema]
    extra = extra or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + list(extra))
        extra_cols = list(extra.values())
        for i, row in enumerate(t.rows):
            out = []
            for col, v in zip(t.schema, row):
                if isinstance(v, str):
                    out.append(v)
                elif col.kind != "continuous" and float(v).is_integer():
                    out.append(str(int(v)))
                else:
                    out.append(repr(float(v)))
            out.extend(str(c[i]) for c in extra_cols)
            w.writerow(out)


def read_columns(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [r for r in reader if r]


def schema_to_json(schema: Iterable[ColumnSpec]) -> list[dict]:
    return [c.to_dict() for c in schema]
