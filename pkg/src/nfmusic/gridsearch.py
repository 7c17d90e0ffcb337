"""Local-maximum detection and golden-section refinement on sampled spectra."""

from __future__ import annotations

import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class DetectionFailure(RuntimeError):
    """A spectrum exposed fewer local maxima than requested targets."""

    def __init__(self, message: str, n_found: int, n_wanted: int):
        super().__init__(message)
        self.n_found = n_found
        self.n_wanted = n_wanted


def local_maxima_2d(values: np.ndarray) -> list[tuple[int, int]]:
    """Indices of strict local maxima of a 2D array over the 8-neighborhood.

    Border cells are compared against their existing neighbors only. Results
    are sorted by descending value; ties keep row-major scan order.
    """
    padded = np.pad(values, 1, constant_values=-np.inf)
    center = padded[1:-1, 1:-1]
    mask = np.ones(values.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = padded[1 + di : 1 + di + values.shape[0], 1 + dj : 1 + dj + values.shape[1]]
            mask &= center > shifted
    idx = np.argwhere(mask)
    order = np.argsort(-values[mask], kind="stable")
    return [tuple(pair) for pair in idx[order]]


def local_maxima_1d(values: np.ndarray) -> list[int]:
    """Strict local maxima of a 1D array, sorted by descending value."""
    padded = np.concatenate(([-np.inf], values, [-np.inf]))
    mask = (values > padded[:-2]) & (values > padded[2:])
    idx = np.flatnonzero(mask)
    order = np.argsort(-values[idx], kind="stable")
    return [int(i) for i in idx[order]]


def golden_section_max(fn, lo: float, hi: float, iters: int, seed_x: float | None = None):
    """Golden-section search for the maximum of ``fn`` on [lo, hi].

    Runs ``iters`` interval reductions and returns ``(x_best, f_best)`` over
    every probed point. When ``seed_x`` is given it is evaluated first and
    only a strictly larger probe replaces it, so refinement never moves off
    an already-optimal starting point (ties keep the seed).
    """
    if hi <= lo:
        x = seed_x if seed_x is not None else lo
        return x, fn(x)
    best_x = seed_x if seed_x is not None else 0.5 * (lo + hi)
    best_f = fn(best_x)

    a, b = lo, hi
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = fn(x1), fn(x2)
    for x, f in ((x1, f1), (x2, f2)):
        if f > best_f:
            best_x, best_f = x, f
    for _ in range(iters):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = fn(x1)
            if f1 > best_f:
                best_x, best_f = x1, f1
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = fn(x2)
            if f2 > best_f:
                best_x, best_f = x2, f2
    return best_x, best_f
