"""Subspace-fitting wideband 2D MUSIC over a joint (range, angle) grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import SPEED_OF_LIGHT, ArrayConfig, FrequencyGrid, Target, exact_distances
from .gridsearch import DetectionFailure, golden_section_max, local_maxima_2d
from .signal import ReceivedData
from .subspace import SubspaceDecomposition, decompose_received

# Relative floor applied to the spectrum denominator; exact orthogonality
# would otherwise produce infinities without moving any argmax.
DENOMINATOR_FLOOR = 1e-12


@dataclass(frozen=True)
class SearchGrid:
    """Rectangular (range, angle) search grid with optional peak refinement.

    ``refine_iters`` golden-section interval reductions are applied per
    coordinate pass when a peak is refined inside its grid cell.
    """

    r_axis: np.ndarray
    theta_axis: np.ndarray
    refine_iters: int = 20

    def __post_init__(self):
        r = np.asarray(self.r_axis, dtype=float)
        theta = np.asarray(self.theta_axis, dtype=float)
        if r.size < 2 or theta.size < 2:
            raise ValueError("both grid axes need at least 2 points")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(theta) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if r[0] <= 0:
            raise ValueError("range axis must start above 0")
        if theta[0] <= 0 or theta[-1] >= np.pi:
            raise ValueError("angle axis must lie strictly inside (0, pi)")
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be >= 0")
        object.__setattr__(self, "r_axis", r)
        object.__setattr__(self, "theta_axis", theta)

    @classmethod
    def from_bounds(
        cls,
        r_min_m: float,
        r_max_m: float,
        r_step_m: float,
        theta_min_rad: float,
        theta_max_rad: float,
        theta_step_rad: float,
        refine_iters: int = 20,
    ) -> "SearchGrid":
        n_r = int(round((r_max_m - r_min_m) / r_step_m)) + 1
        n_t = int(round((theta_max_rad - theta_min_rad) / theta_step_rad)) + 1
        return cls(
            r_axis=np.linspace(r_min_m, r_min_m + r_step_m * (n_r - 1), n_r),
            theta_axis=np.linspace(
                theta_min_rad, theta_min_rad + theta_step_rad * (n_t - 1), n_t
            ),
            refine_iters=refine_iters,
        )

    @classmethod
    def default(cls) -> "SearchGrid":
        """r in [3, 80] m step 0.25 m, theta in [30, 150] deg step 0.25 deg."""
        return cls.from_bounds(
            3.0,
            80.0,
            0.25,
            np.deg2rad(30.0),
            np.deg2rad(150.0),
            np.deg2rad(0.25),
            refine_iters=20,
        )


@dataclass(frozen=True)
class SpectrumGrid:
    """Pseudospectrum sampled on a :class:`SearchGrid`; rows follow r_axis."""

    values: np.ndarray
    grid: SearchGrid

    def __post_init__(self):
        expected = (self.grid.r_axis.size, self.grid.theta_axis.size)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != grid {expected}")


@dataclass(frozen=True)
class Estimate:
    """P localized targets with their pseudospectrum peak heights."""

    targets: tuple[Target, ...]
    peak_values: np.ndarray = field(repr=False)


def _steering_phases(array: ArrayConfig, r, theta) -> np.ndarray:
    """Propagation delays tau for a batch of angles at one range, as (N, B)."""
    return exact_distances(array, r, theta).T / SPEED_OF_LIGHT


def _signal_projection_row(
    delays: np.ndarray,
    signal_bases: Sequence[np.ndarray],
    freq_grid: FrequencyGrid,
) -> np.ndarray:
    """Sum over subcarriers of ||V_m^H a_m||^2 for a batch of steering delays.

    ``delays`` is (N, B). Subcarrier steering vectors are generated by a
    multiplicative phase recurrence over m, avoiding one complex exp per
    subcarrier.
    """
    base = np.exp(-2j * np.pi * freq_grid.carrier_freq_hz * delays)
    step = np.exp(-2j * np.pi * freq_grid.spacing_hz * delays)
    acc = np.zeros(delays.shape[1])
    carrier = base
    for m, basis in enumerate(signal_bases):
        if m:
            carrier = carrier * step
        proj = basis.conj().T @ carrier
        acc += np.sum(np.abs(proj) ** 2, axis=0)
    return acc


def _denominator_row(
    array: ArrayConfig,
    r: float,
    theta_axis: np.ndarray,
    signal_bases: Sequence[np.ndarray],
    freq_grid: FrequencyGrid,
) -> np.ndarray:
    """Spectrum denominator M*N - sum_m ||V_m^H a_m||^2 along one grid row."""
    n_total = len(signal_bases) * array.n_elements
    delays = _steering_phases(array, r, theta_axis)
    return n_total - _signal_projection_row(delays, signal_bases, freq_grid)


def _spectrum_point(
    array: ArrayConfig,
    r: float,
    theta: float,
    signal_bases: Sequence[np.ndarray],
    freq_grid: FrequencyGrid,
) -> float:
    """Floored pseudospectrum value at a single off-grid (r, theta) point."""
    denom = _denominator_row(array, r, np.array([theta]), signal_bases, freq_grid)[0]
    floor = DENOMINATOR_FLOOR * len(signal_bases) * array.n_elements
    return 1.0 / max(denom, floor)


def sf_spectrum_value(
    range_m: float,
    angle_rad: float,
    noise_bases: Sequence[np.ndarray],
    freq_grid: FrequencyGrid,
    array: ArrayConfig,
) -> float:
    """Wideband MUSIC pseudospectrum 1 / sum_m ||U_m^H a_m(r, theta)||^2.

    ``noise_bases`` holds one N x (N - P) noise-subspace basis per
    subcarrier. The denominator is floored at a tiny multiple of M*N so the
    value stays finite at exact orthogonality; peak locations are unaffected.
    """
    target = Target(range_m=range_m, angle_rad=angle_rad)
    delays = exact_distances(array, target.range_m, target.angle_rad) / SPEED_OF_LIGHT
    denom = 0.0
    for f_m, basis in zip(freq_grid.frequencies_hz, noise_bases):
        a_m = np.exp(-2j * np.pi * f_m * delays)
        denom += float(np.sum(np.abs(basis.conj().T @ a_m) ** 2))
    floor = DENOMINATOR_FLOOR * len(noise_bases) * array.n_elements
    return 1.0 / max(denom, floor)


def evaluate_spectrum(
    grid: SearchGrid,
    decompositions: Sequence[SubspaceDecomposition],
    freq_grid: FrequencyGrid,
    array: ArrayConfig,
) -> SpectrumGrid:
    """Dense pseudospectrum over the search grid.

    Uses the signal-subspace complement M*N - sum_m ||V_m^H a_m||^2, which
    equals the noise-subspace denominator of :func:`sf_spectrum_value` by
    basis completeness but costs O(P) instead of O(N - P) per point.
    """
    signal_bases = [d.signal_basis for d in decompositions]
    floor = DENOMINATOR_FLOOR * len(signal_bases) * array.n_elements
    values = np.empty((grid.r_axis.size, grid.theta_axis.size))
    for i, r in enumerate(grid.r_axis):
        denom = _denominator_row(array, r, grid.theta_axis, signal_bases, freq_grid)
        values[i] = 1.0 / np.maximum(denom, floor)
    return SpectrumGrid(values=values, grid=grid)


def _refine_peak(
    value_fn: Callable[[float, float], float],
    grid: SearchGrid,
    i: int,
    j: int,
) -> tuple[float, float, float]:
    """Coordinate-wise golden-section polish of a grid peak within its cell.

    Alternates (r, theta, r) passes bracketed by the neighboring grid points;
    each pass runs ``grid.refine_iters`` interval reductions and keeps the
    incumbent on ties, so an exactly-on-grid optimum is never abandoned.
    """
    r_axis, theta_axis = grid.r_axis, grid.theta_axis
    r_lo, r_hi = r_axis[max(i - 1, 0)], r_axis[min(i + 1, r_axis.size - 1)]
    t_lo, t_hi = theta_axis[max(j - 1, 0)], theta_axis[min(j + 1, theta_axis.size - 1)]
    r_best, t_best = float(r_axis[i]), float(theta_axis[j])
    v_best = value_fn(r_best, t_best)
    for axis in ("r", "theta", "r"):
        if axis == "r":
            r_best, v_best = golden_section_max(
                lambda x: value_fn(x, t_best), r_lo, r_hi, grid.refine_iters, seed_x=r_best
            )
        else:
            t_best, v_best = golden_section_max(
                lambda x: value_fn(r_best, x), t_lo, t_hi, grid.refine_iters, seed_x=t_best
            )
    return r_best, t_best, v_best


def pick_peaks(
    spectrum: SpectrumGrid,
    n_targets: int,
    value_fn: Callable[[float, float], float] | None = None,
) -> Estimate:
    """Select the ``n_targets`` highest strict local maxima of a spectrum.

    Local maxima are strict over the 8-neighborhood, which keeps one broad
    lobe from claiming several targets. When ``value_fn`` is given and the
    grid requests refinement, each peak is polished inside its cell before
    the estimates are sorted by descending peak value (ties keep scan order).

    Raises:
        DetectionFailure: if fewer than ``n_targets`` local maxima exist.
    """
    maxima = local_maxima_2d(spectrum.values)
    if len(maxima) < n_targets:
        raise DetectionFailure(
            f"spectrum exposes {len(maxima)} local maxima, need {n_targets}",
            n_found=len(maxima),
            n_wanted=n_targets,
        )
    grid = spectrum.grid
    peaks = []
    for rank, (i, j) in enumerate(maxima[:n_targets]):
        if value_fn is not None and grid.refine_iters > 0:
            r, theta, value = _refine_peak(value_fn, grid, i, j)
        else:
            r, theta, value = grid.r_axis[i], grid.theta_axis[j], spectrum.values[i, j]
        peaks.append((float(r), float(theta), float(value), rank))
    peaks.sort(key=lambda p: (-p[2], p[3]))
    return Estimate(
        targets=tuple(Target(range_m=p[0], angle_rad=p[1]) for p in peaks),
        peak_values=np.array([p[2] for p in peaks]),
    )


def estimate_sf(received: ReceivedData, n_targets: int, grid: SearchGrid) -> Estimate:
    """Full subspace-fitting pipeline: covariance, subspaces, 2D search, peaks."""
    decomps = decompose_received(received, n_targets)
    spectrum = evaluate_spectrum(grid, decomps, received.freq_grid, received.array)
    signal_bases = [d.signal_basis for d in decomps]

    def value_fn(r: float, theta: float) -> float:
        return _spectrum_point(received.array, r, theta, signal_bases, received.freq_grid)

    return pick_peaks(spectrum, n_targets, value_fn=value_fn)


def write_spectrum_csv(spectrum: SpectrumGrid, path) -> None:
    """Dump a 2D spectrum as ``r_m,theta_rad,J`` rows for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("r_m,theta_rad,J\n")
        for i, r in enumerate(spectrum.grid.r_axis):
            for j, theta in enumerate(spectrum.grid.theta_axis):
                fh.write(f"{r:.12g},{theta:.12g},{spectrum.values[i, j]:.12g}\n")
