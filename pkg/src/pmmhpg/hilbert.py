"""Hilbert-curve ordering of particle clouds.

Keys follow Skilling's transpose construction ("Programming the Hilbert
curve", AIP Conf. Proc. 707, 2004), vectorised over points.  Keys fit in
``uint64`` when ``d * order <= 64``; wider keys fall back to Python ints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_ORDER = 16

# number of coordinates clamped into [0, 1] since import
stats = {"clamped": 0}


def _cells(points: np.ndarray, order: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    outside = (pts < 0.0) | (pts > 1.0) | np.isnan(pts)
    if np.any(outside):
        stats["clamped"] += int(outside.sum())
        pts = np.clip(np.nan_to_num(pts, nan=0.5), 0.0, 1.0)
    side = 1 << order
    cells = np.floor(pts * side).astype(np.int64)
    return np.minimum(cells, side - 1).astype(np.uint64)


def _transpose_to_key(X: list, order: int, d: int):
    wide = d * order > 64
    key = np.zeros(X[0].shape, dtype=object if wide else np.uint64)
    if wide:
        X = [x.astype(object) for x in X]
    one = 1 if wide else np.uint64(1)
    for bit in range(order - 1, -1, -1):
        b = bit if wide else np.uint64(bit)
        for i in range(d):
            key = (key << one) | ((X[i] >> b) & one)
    return key


def hilbert_keys(points, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Hilbert positions of the grid cells containing ``points`` (``(N, d)``)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, d = pts.shape
    cells = _cells(pts, order)
    if d == 1:
        return cells[:, 0]
    X = [cells[:, i].copy() for i in range(d)]
    M = np.uint64(1 << (order - 1))
    # inverse undo excess work
    Q = M
    while Q > 1:
        P = Q - np.uint64(1)
        for i in range(d):
            hit = (X[i] & Q) != 0
            X[0] = np.where(hit, X[0] ^ P, X[0])
            t = np.where(hit, np.uint64(0), (X[0] ^ X[i]) & P)
            X[0] ^= t
            X[i] ^= t
        Q >>= np.uint64(1)
    # Gray encode
    for i in range(1, d):
        X[i] ^= X[i - 1]
    t = np.zeros(n, dtype=np.uint64)
    Q = M
    while Q > 1:
        t = np.where((X[d - 1] & Q) != 0, t ^ (Q - np.uint64(1)), t)
        Q >>= np.uint64(1)
    for i in range(d):
        X[i] ^= t
    return _transpose_to_key(X, order, d)


def hilbert_index(point, order: int = DEFAULT_ORDER) -> int:
    """Key of a single point of ``[0, 1]^d``, in ``[0, 2**(d*order))``."""
    pt = np.asarray(point, dtype=np.float64).reshape(1, -1)
    return int(hilbert_keys(pt, order)[0])


def normalize_to_unit_cube(states) -> np.ndarray:
    """Per-coordinate min-max map of the cloud; constant coordinates go to 0.5."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    lo = s.min(axis=0)
    span = s.max(axis=0) - lo
    out = np.full_like(s, 0.5)
    ok = span > 0
    out[:, ok] = (s[:, ok] - lo[ok]) / span[ok]
    return out


@dataclass
class SortResult:
    zeta: np.ndarray
    zeta_inv: np.ndarray
    sorted_states: np.ndarray
    sorted_weights: np.ndarray


def sort_order(states, order: int = DEFAULT_ORDER) -> np.ndarray:
    """The permutation ``zeta`` with ``z[zeta[i]]`` non-decreasing; ties by index."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1 or s.shape[1] == 1:
        z = s.reshape(-1)
    else:
        z = hilbert_keys(normalize_to_unit_cube(s), order)
    return np.argsort(z, kind="stable")


def sort_particles(states, weights, order: int = DEFAULT_ORDER) -> SortResult:
    states = np.asarray(states)
    weights = np.asarray(weights, dtype=np.float64)
    zeta = sort_order(states, order)
    zeta_inv = np.empty_like(zeta)
    zeta_inv[zeta] = np.arange(len(zeta))
    return SortResult(zeta, zeta_inv, states[zeta], weights[zeta])
