"""Platform-independent text rendering of numbers for hashing."""

from __future__ import annotations

import hashlib

import numpy as np

SCALE = 1e6
_PAD = 0  # byte value marking unused cells in the fixed-width renderings


def round6(values) -> np.ndarray:
    """Round to 6 decimals, halves away from zero, with -0.0 folded to 0.0."""
    v = np.asarray(values, dtype=float)
    q = np.floor(np.abs(v) * SCALE + 0.5)
    return np.copysign(q, v) / SCALE + 0.0


def canonical_number(x: float) -> str:
    """``1`` -> ``"1.000000"``, ``-2.5e-7`` -> ``"0.000000"``, ``0.0000005`` -> ``"0.000001"``."""
    return "%.6f" % round6(x)


def canonical_numbers(values) -> list[str]:
    return ["%.6f" % v for v in round6(values).tolist()]


_TRIPLES = np.frombuffer("".join(f"{i:03d}" for i in range(1000)).encode(),
                         dtype=np.uint8).reshape(1000, 3)
# the same triples packed one per uint32 (fourth byte unused) for fast lookup
_PACKED = np.frombuffer(np.pad(_TRIPLES, ((0, 0), (0, 1))).tobytes(), dtype=np.uint32)


def _triples(r: np.ndarray) -> np.ndarray:
    """ASCII of ``r`` in [0, 1000) as a ``(len(r), 3)`` zero-padded cell matrix."""
    return _PACKED[r].view(np.uint8).reshape(-1, 4)[:, :3]


def _digits(n: np.ndarray, width: int) -> np.ndarray:
    """Right-aligned ASCII digits of non-negative ints, padded on the left."""
    groups = -(-width // 3)
    out = np.empty((len(n), 3 * groups), dtype=np.uint8)
    rest = n
    for g in range(groups - 1, -1, -1):
        rest, r = np.divmod(rest, 1000)
        out[:, 3 * g:3 * g + 3] = _triples(r)
    out = out[:, 3 * groups - width:]
    powers = 10 ** np.arange(width - 1, 0, -1, dtype=np.int64)
    out[:, :-1] *= n[:, None] >= powers
    return out


def _integer_width(n: np.ndarray) -> int:
    return max(1, len(str(int(n.max())))) if len(n) else 1


def number_cells(values: np.ndarray) -> np.ndarray:
    """Fixed-width byte rendering of :func:`canonical_number` for every value.

    Returns a ``(len(values), width)`` uint8 matrix; each row holds the
    canonical text right-aligned, with unused leading cells set to zero.
    """
    v = np.asarray(values, dtype=float).ravel()
    q = np.floor(np.abs(v) * SCALE + 0.5)
    # beyond 15 significant digits the float text of q / 1e6 stops matching q
    if len(q) and q.max() >= 1e15:
        raise ValueError("value too large for exact 6-decimal rendering")
    whole, frac = np.divmod(q.astype(np.int64), 1_000_000)
    if len(whole) and whole.max() < 2 ** 31:
        whole = whole.astype(np.int32)
    w = _integer_width(whole)
    out = np.empty((len(v), w + 8), dtype=np.uint8)
    out[:, :w + 1] = _digits(whole, w + 1)      # one spare cell for the sign
    negative = (v < 0) & (q > 0)
    if negative.any():
        rows = np.flatnonzero(negative)
        n_digits = (out[rows, :w + 1] != _PAD).sum(axis=1)
        out[rows, w - n_digits] = ord("-")
    out[:, w + 1] = ord(".")
    f_hi, f_lo = np.divmod(frac.astype(np.int32), 1000)
    out[:, w + 2:w + 5] = _triples(f_hi)
    out[:, w + 5:] = _triples(f_lo)
    return out


def integer_cells(values) -> np.ndarray:
    n = np.asarray(values, dtype=np.int64).ravel()
    if len(n) and n.min() < 0:
        raise ValueError("negative integers are not supported")
    return _digits(n, _integer_width(n))


def render_rows(pieces: list, n_rows: int) -> list[bytes]:
    """Concatenate literal ``bytes`` and per-row cell matrices into one text
    per row, dropping padding cells."""
    literals = b"".join(p for p in pieces if isinstance(p, bytes))
    sep = next(c for c in range(1, 256) if c not in literals and c not in b"-.0123456789")
    widths = [len(p) if isinstance(p, bytes) else p.shape[1] for p in pieces]
    mat = np.empty((n_rows, sum(widths) + 1), dtype=np.uint8)
    col = 0
    for p, w in zip(pieces, widths):
        mat[:, col:col + w] = np.frombuffer(p, dtype=np.uint8) if isinstance(p, bytes) else p
        col += w
    mat[:, -1] = sep
    return mat[mat != _PAD].tobytes().split(bytes([sep]))[:-1]


def sha256_rows(rows: list) -> list[str]:
    return [hashlib.sha256(r).hexdigest() for r in rows]
