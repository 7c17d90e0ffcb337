"""Low-complexity MUSIC: anti-diagonal angle decoupling plus 1D range search.

Under the Fresnel (second-order) distance expansion the anti-diagonal of the
per-subcarrier covariance carries phases 2 * offset * gamma that depend on the
target angles only. Spatial smoothing of that vector restores rank for the
angle search; distances then follow from per-angle 1D searches against the
full-array exact-steering noise subspaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import ArrayConfig, FrequencyGrid, Target
from .gridsearch import DetectionFailure, golden_section_max, local_maxima_1d
from .estimator_sf import (
    DENOMINATOR_FLOOR,
    Estimate,
    SearchGrid,
    _denominator_row,
    _spectrum_point,
)
from .signal import ReceivedData
from .subspace import decompose_covariance, sample_covariance


@dataclass(frozen=True)
class AntiDiagonalVector:
    """Anti-diagonal of an odd-sized covariance, ordered by increasing offset."""

    values: np.ndarray
    n_half: int

    def __post_init__(self):
        if self.values.size != 2 * self.n_half + 1:
            raise ValueError("anti-diagonal length must equal 2 * n_half + 1")


@dataclass(frozen=True)
class SmoothedCovariance:
    """Spatially smoothed covariance of overlapping anti-diagonal windows."""

    matrix: np.ndarray
    window_len: int
    n_windows: int

    def __post_init__(self):
        if self.matrix.shape != (self.window_len, self.window_len):
            raise ValueError("matrix shape inconsistent with window_len")


def antidiagonal_vector(sigma: np.ndarray) -> AntiDiagonalVector:
    """Extract the covariance anti-diagonal entries sigma[n, N-1-n].

    Requires an odd dimension so the offsets n - N' run symmetrically over
    {-N', ..., N'}; under the Fresnel model entry n carries the angle-only
    phase 2 * (n - N') * gamma.
    """
    n = sigma.shape[0]
    if sigma.ndim != 2 or sigma.shape[1] != n:
        raise ValueError("expected a square matrix")
    if n % 2 == 0:
        raise ValueError(f"anti-diagonal extraction needs an odd dimension, got {n}")
    idx = np.arange(n)
    return AntiDiagonalVector(values=sigma[idx, n - 1 - idx].copy(), n_half=(n - 1) // 2)


def spatial_smooth(ybar: AntiDiagonalVector, n_windows: int) -> SmoothedCovariance:
    """Average outer products of the L contiguous windows of the anti-diagonal.

    With a (2N' + 1)-entry vector, L windows of length 2N' + 2 - L tile it
    exactly; the result is Hermitian positive semidefinite and, for targets
    with distinct angle phases, has rank equal to the target count.
    """
    full_len = ybar.values.size
    if not 1 <= n_windows <= full_len:
        raise ValueError(f"n_windows must be in [1, {full_len}], got {n_windows}")
    window_len = full_len + 1 - n_windows
    acc = np.zeros((window_len, window_len), dtype=complex)
    for start in range(n_windows):
        window = ybar.values[start : start + window_len]
        acc += np.outer(window, window.conj())
    acc /= n_windows
    return SmoothedCovariance(
        matrix=(acc + acc.conj().T) / 2.0, window_len=window_len, n_windows=n_windows
    )


def ambiguity_candidates(
    angle_rad: float, wavelength_m: float, spacing_m: float
) -> list[float]:
    """Angle candidates sharing the virtual-array phase of ``angle_rad``.

    The anti-diagonal manifold has effective spacing 2d, so angles with
    cos(theta') = cos(theta) +/- wavelength / (2 d) are indistinguishable in
    the angle stage whenever that value stays inside (-1, 1). The input angle
    comes first; the distance stage disambiguates.
    """
    candidates = [angle_rad]
    base = math.cos(angle_rad)
    for shift in (wavelength_m / (2.0 * spacing_m), -wavelength_m / (2.0 * spacing_m)):
        aliased = base + shift
        if -1.0 < aliased < 1.0:
            candidates.append(math.acos(aliased))
    return candidates


def default_window_count(n_antidiagonal: int, n_targets: int) -> int:
    """Window count L targeting ~40% of the anti-diagonal length.

    Clipped so that both L and the window length 2N' + 2 - L exceed the
    target count.
    """
    proposed = int(round(0.4 * (n_antidiagonal + 1)))
    return max(n_targets + 1, min(n_antidiagonal - n_targets, proposed))


# Alias smear bands wider than this do not group peaks: a broad band would
# swallow legitimate target separations, and widely smeared alias bumps are
# weak enough for the range-verification stage to reject on its own.
MAX_GROUPING_BAND = 0.15

# Members kept per angle cluster; each member contributes its own alias
# candidates to the range stage.
MAX_CLUSTER_MEMBERS = 3


def _alias_related(cos_a: float, cos_b: float, shift_band: tuple[float, float], tol: float) -> bool:
    """Whether two cosine keys coincide or differ by a virtual-array shift.

    ``shift_band`` is the range of wavelength/(2d) shifts across subcarriers;
    the alias of one target smears over that band, so separations inside a
    narrow band count as alias-related. Wide bands only group near
    coincidences.
    """
    delta = abs(cos_a - cos_b)
    if delta <= tol:
        return True
    if shift_band[1] - shift_band[0] > MAX_GROUPING_BAND:
        return False
    return shift_band[0] - tol <= delta <= shift_band[1] + tol


def _angle_clusters(
    smoothed: Sequence[SmoothedCovariance],
    theta_axis: np.ndarray,
    n_targets: int,
    freq_grid: FrequencyGrid,
    spacing_m: float,
    n_extra: int = 0,
) -> tuple[np.ndarray, list[list[float]]]:
    """Angle spectrum plus local maxima grouped into per-target clusters.

    Local maxima are scanned strongest first. A maximum joins an existing
    cluster when its cosine is within tolerance of the cluster head
    (sidelobes and shoulders) or separated from it by a virtual-array alias
    shift; otherwise it heads a new cluster, up to ``n_targets + n_extra``
    clusters. Joining rather than discarding matters: a smeared wideband
    alias bump can outrank the true peak it aliases, and the true angle must
    stay available as a cluster member for the range stage to choose.

    The proximity tolerance scales with the virtual-array beamwidth but
    stays below the minimum resolvable target separation.
    """
    window_len = smoothed[0].window_len
    if not n_targets < window_len:
        raise ValueError("window length must exceed the number of targets")
    if not n_targets < smoothed[0].n_windows:
        raise ValueError("window count must exceed the number of targets")

    idx = np.arange(window_len)
    cos_axis = np.cos(theta_axis)
    acc = np.zeros(theta_axis.size)
    for cov, wavenumber in zip(smoothed, freq_grid.wavenumbers):
        decomp = decompose_covariance(cov.matrix, n_targets)
        gamma_m = wavenumber * spacing_m * cos_axis
        manifold = np.exp(2j * np.outer(idx, gamma_m))  # (W, T)
        proj = decomp.signal_basis.conj().T @ manifold
        acc += window_len - np.sum(np.abs(proj) ** 2, axis=0)
    floor = DENOMINATOR_FLOOR * len(smoothed) * window_len
    values = 1.0 / np.maximum(acc, floor)

    wavelengths = freq_grid.wavelengths_m
    shift_band = (
        float(np.min(wavelengths)) / (2.0 * spacing_m),
        float(np.max(wavelengths)) / (2.0 * spacing_m),
    )
    mean_wavenumber = float(np.mean(freq_grid.wavenumbers))
    beamwidth_cos = np.pi / (window_len * mean_wavenumber * spacing_m)
    cell = float(np.median(np.diff(theta_axis)))
    tol = max(3.0 * cell, 1.5 * beamwidth_cos)

    clusters: list[list[float]] = []
    heads: list[float] = []
    for i in local_maxima_1d(values):
        theta = float(theta_axis[i])
        key = math.cos(theta)
        joined = False
        for cluster, head in zip(clusters, heads):
            if _alias_related(key, head, shift_band, tol):
                if len(cluster) < MAX_CLUSTER_MEMBERS:
                    cluster.append(theta)
                joined = True
                break
        if not joined and len(clusters) < n_targets + n_extra:
            clusters.append([theta])
            heads.append(key)
    if len(clusters) < n_targets:
        raise DetectionFailure(
            f"angle spectrum exposes {len(clusters)} distinct peaks, need {n_targets}",
            n_found=len(clusters),
            n_wanted=n_targets,
        )
    return values, clusters


def angle_spectrum(
    smoothed: Sequence[SmoothedCovariance],
    theta_axis: np.ndarray,
    n_targets: int,
    freq_grid: FrequencyGrid,
    spacing_m: float,
) -> tuple[np.ndarray, list[float]]:
    """Accumulated MUSIC angle spectrum of the smoothed covariances.

    For each subcarrier the virtual steering vector has entries
    exp(j 2 i gamma_m(theta)) over the window index i, with
    gamma_m(theta) = k_m d cos(theta), matching the anti-diagonal phase
    convention. Per-subcarrier noise projections are accumulated and
    inverted.

    Returns the spectrum over ``theta_axis`` and the ``n_targets`` strongest
    peak angles, where local maxima that are virtual-array aliases (or
    immediate sidelobes) of an already-selected peak do not open a new slot:
    a narrowband alias peak matches the true peak height exactly and must
    not consume a target slot.

    Raises:
        DetectionFailure: if fewer than ``n_targets`` alias-distinct local
            maxima exist.
    """
    values, clusters = _angle_clusters(
        smoothed, theta_axis, n_targets, freq_grid, spacing_m
    )
    return values, [cluster[0] for cluster in clusters[:n_targets]]


def distance_spectrum(
    theta_hat: float,
    decompositions,
    r_axis: np.ndarray,
    freq_grid: FrequencyGrid,
    array: ArrayConfig,
    refine_iters: int = 20,
) -> tuple[np.ndarray, float, float]:
    """1D range spectrum at a fixed angle against full-array noise subspaces.

    Evaluates 1 / sum_m ||U_m^H a_m(r, theta_hat)||^2 over ``r_axis`` with
    the exact near-field steering vector and returns
    ``(values, r_hat, peak_value)``. The winning grid cell is polished by
    golden-section search bracketed by its neighbors.
    """
    signal_bases = [d.signal_basis for d in decompositions]
    floor = DENOMINATOR_FLOOR * len(signal_bases) * array.n_elements
    denom = _denominator_row(array, r_axis, theta_hat, signal_bases, freq_grid)
    values = 1.0 / np.maximum(denom, floor)
    i_best = int(np.argmax(values))
    r_hat, peak = float(r_axis[i_best]), float(values[i_best])
    if refine_iters > 0:
        lo = float(r_axis[max(i_best - 1, 0)])
        hi = float(r_axis[min(i_best + 1, r_axis.size - 1)])
        r_hat, peak = golden_section_max(
            lambda r: _spectrum_point(array, r, theta_hat, signal_bases, freq_grid),
            lo,
            hi,
            refine_iters,
            seed_x=r_hat,
        )
    return values, r_hat, peak


# Extra angle clusters scored by the range stage beyond the target count;
# weak targets can rank below spurious angle peaks at low SNR, and the range
# verification reliably reorders them.
EXTRA_ANGLE_CLUSTERS = 3

# Cap on 1D range searches per estimate; candidates are ordered by the
# angle-spectrum strength of their cluster.
MAX_RANGE_CANDIDATES = 16


def estimate_fresnel(
    received: ReceivedData,
    n_targets: int,
    grid: SearchGrid,
    smoothing_windows: int | None = None,
) -> Estimate:
    """Full low-complexity pipeline: angles from the anti-diagonal, then ranges.

    Per subcarrier: sample covariance, anti-diagonal of the odd-sized leading
    submatrix, spatial smoothing, accumulated angle spectrum. Each angle
    cluster (peak plus its virtual-array alias candidates) is scored by a 1D
    range search against the full-array exact-steering noise subspaces; the
    ``n_targets`` clusters with the highest range-spectrum peaks win, at
    most one estimate per cluster and per landing cell. When the grid
    requests refinement the winning pairs receive alternating 1D
    golden-section polish (theta, then r) on the exact-steering spectrum.

    The search cost is O(|theta| + P |r|) spectrum evaluations versus
    O(|theta| * |r|) for the joint 2D method.

    Raises:
        DetectionFailure: if the angle stage exposes fewer than ``n_targets``
            alias-distinct peaks, or fewer than ``n_targets`` distinct
            locations survive range scoring.
    """
    array = received.array
    covariances = [sample_covariance(y_m) for y_m in received.per_subcarrier]
    decomps = [decompose_covariance(sigma, n_targets) for sigma in covariances]
    signal_bases = [d.signal_basis for d in decomps]

    n_odd = array.n_elements if array.n_elements % 2 == 1 else array.n_elements - 1
    if smoothing_windows is None:
        smoothing_windows = default_window_count(n_odd, n_targets)
    smoothed = [
        spatial_smooth(antidiagonal_vector(sigma[:n_odd, :n_odd]), smoothing_windows)
        for sigma in covariances
    ]

    _, clusters = _angle_clusters(
        smoothed,
        grid.theta_axis,
        n_targets,
        received.freq_grid,
        array.spacing_m,
        n_extra=EXTRA_ANGLE_CLUSTERS,
    )

    theta_cell = float(np.median(np.diff(grid.theta_axis)))
    r_cell = float(np.median(np.diff(grid.r_axis)))

    # Flatten clusters into a deduplicated angle-candidate list. Clusters
    # only bound the candidate count; every member and each member's
    # virtual-array aliases are range-scored independently, because one
    # cluster can legitimately hold two targets whose cosine separation
    # happens to fall inside the alias shift band.
    candidates: list[float] = []
    for cluster in clusters:
        for member in cluster:
            for cand in ambiguity_candidates(
                member, array.carrier_wavelength_m, array.spacing_m
            ):
                if all(abs(cand - seen) > theta_cell for seen in candidates):
                    candidates.append(cand)

    # Only strict interior maxima of the range spectrum count: at a wrong
    # angle the spectrum often just climbs toward a grid edge, and such
    # run-offs must not outscore a genuine weak-target peak.
    scored = []
    for rank, theta_cand in enumerate(candidates[:MAX_RANGE_CANDIDATES]):
        values, _, _ = distance_spectrum(
            theta_cand,
            decomps,
            grid.r_axis,
            received.freq_grid,
            array,
            refine_iters=0,
        )
        interior = [i for i in local_maxima_1d(values) if 0 < i < values.size - 1]
        if not interior:
            continue
        i_best = interior[0]
        scored.append((theta_cand, float(grid.r_axis[i_best]), float(values[i_best]), rank))

    # Highest range-spectrum peaks win. Angles closer than the virtual
    # array's resolution to an already-selected estimate are shoulders or
    # resolved aliases of the same target (the angle stage cannot separate
    # them), so they are dropped rather than double-counting one target. The
    # radius is capped below the minimum resolvable scene separation.
    window_len = smoothed[0].window_len
    mean_wavenumber = float(np.mean(received.freq_grid.wavenumbers))
    beamwidth_cos = np.pi / (window_len * mean_wavenumber * array.spacing_m)
    dedup_cos = min(2.5 * beamwidth_cos, 0.04)
    scored.sort(key=lambda p: (-p[2], p[3]))
    selected = []
    for theta_hat, r_hat, peak, rank in scored:
        duplicate = any(
            abs(math.cos(theta_hat) - math.cos(t_sel)) <= dedup_cos
            for t_sel, _, _, _ in selected
        )
        if not duplicate:
            selected.append((theta_hat, r_hat, peak, rank))
        if len(selected) == n_targets:
            break
    if len(selected) < n_targets:
        raise DetectionFailure(
            f"range scoring left {len(selected)} distinct locations, need {n_targets}",
            n_found=len(selected),
            n_wanted=n_targets,
        )

    # Winners only: alternating 1D golden-section polish on the exact
    # spectrum (r, theta, r), each pass bracketed by one grid cell.
    results = []
    for theta_hat, r_hat, peak, rank in selected:
        if grid.refine_iters > 0:
            def value_r(r, theta=theta_hat):
                return _spectrum_point(array, r, theta, signal_bases, received.freq_grid)

            r_hat, peak = golden_section_max(
                value_r,
                max(r_hat - r_cell, grid.r_axis[0]),
                min(r_hat + r_cell, grid.r_axis[-1]),
                grid.refine_iters,
                seed_x=r_hat,
            )
            theta_hat, peak = golden_section_max(
                lambda t: _spectrum_point(array, r_hat, t, signal_bases, received.freq_grid),
                max(theta_hat - theta_cell, grid.theta_axis[0]),
                min(theta_hat + theta_cell, grid.theta_axis[-1]),
                grid.refine_iters,
                seed_x=theta_hat,
            )
            r_hat, peak = golden_section_max(
                lambda r: _spectrum_point(array, r, theta_hat, signal_bases, received.freq_grid),
                max(r_hat - r_cell, grid.r_axis[0]),
                min(r_hat + r_cell, grid.r_axis[-1]),
                grid.refine_iters,
                seed_x=r_hat,
            )
        results.append((theta_hat, r_hat, peak, rank))

    results.sort(key=lambda p: (-p[2], p[3]))
    return Estimate(
        targets=tuple(Target(range_m=p[1], angle_rad=p[0]) for p in results),
        peak_values=np.array([p[2] for p in results]),
    )


def write_angle_spectrum_csv(theta_axis: np.ndarray, values: np.ndarray, path) -> None:
    """Dump a 1D angle spectrum as ``theta_rad,value`` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("theta_rad,value\n")
        for theta, value in zip(theta_axis, values):
            fh.write(f"{theta:.12g},{value:.12g}\n")


def write_distance_spectrum_csv(r_axis: np.ndarray, values: np.ndarray, path) -> None:
    """Dump a 1D range spectrum as ``r_m,value`` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("r_m,value\n")
        for r, value in zip(r_axis, values):
            fh.write(f"{r:.12g},{value:.12g}\n")
