"""Monte Carlo NMSE sweeps over SNR and bandwidth, with CSV persistence."""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimator_fresnel import estimate_fresnel
from .estimator_sf import Estimate, SearchGrid, estimate_sf
from .geometry import ArrayConfig, Target, rayleigh_distance
from .gridsearch import DetectionFailure
from .signal import OfdmConfig, Scene, synthesize_received

ESTIMATOR_NAMES = ("sf", "fresnel")
_SNR_SWEEP_TAG = 1
_BANDWIDTH_SWEEP_TAG = 2


@dataclass(frozen=True)
class SceneSampler:
    """Uniform random scenes with minimum pairwise target separation."""

    r_min_m: float = 5.0
    r_max_m: float = 60.0
    theta_min_rad: float = np.deg2rad(40.0)
    theta_max_rad: float = np.deg2rad(140.0)
    min_separation_m: float = 2.0
    min_separation_rad: float = np.deg2rad(4.0)

    def __post_init__(self):
        # Degenerate (point) ranges are allowed: they pin a deterministic scene.
        if not 0 < self.r_min_m <= self.r_max_m:
            raise ValueError("need 0 < r_min_m <= r_max_m")
        if not 0 < self.theta_min_rad <= self.theta_max_rad < np.pi:
            raise ValueError("angle range must lie strictly inside (0, pi)")

    def sample(self, rng: np.random.Generator, n_targets: int) -> Scene:
        # Both minimum separations are enforced: angular separation keeps the
        # scene resolvable for the angle-first decoupled estimator, range
        # separation for the range stage.
        for _ in range(1000):
            ranges = rng.uniform(self.r_min_m, self.r_max_m, size=n_targets)
            angles = rng.uniform(self.theta_min_rad, self.theta_max_rad, size=n_targets)
            ok = True
            for i, j in itertools.combinations(range(n_targets), 2):
                if (
                    abs(ranges[i] - ranges[j]) < self.min_separation_m
                    or abs(angles[i] - angles[j]) < self.min_separation_rad
                ):
                    ok = False
                    break
            if ok:
                return Scene(
                    targets=tuple(
                        Target(range_m=float(r), angle_rad=float(t))
                        for r, t in zip(ranges, angles)
                    )
                )
        raise RuntimeError("scene sampler failed to satisfy separation constraints")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs: system, scenes, grids, seeds, and schedule.

    ``wavebands`` maps a label to the subcarrier spacing used for the SNR
    sweep; the bandwidth sweep instead derives the spacing from each swept
    bandwidth at fixed subcarrier count, at ``fixed_snr_db``.
    """

    array: ArrayConfig
    ofdm: OfdmConfig
    n_targets: int = 2
    n_trials: int = 50
    snr_list_db: tuple[float, ...] = (-20.0, -15.0, -10.0, -5.0, 0.0, 10.0)
    bandwidth_list_hz: tuple[float, ...] | None = None
    fixed_snr_db: float = 0.0
    wavebands: tuple[tuple[str, float], ...] = (
        ("narrowband", 480.0),
        ("wideband", 4.8e7),
    )
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    sampler: SceneSampler = field(default_factory=SceneSampler)
    grid: SearchGrid = field(default_factory=SearchGrid.default)
    smoothing_windows: int | None = None
    base_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        unknown = set(self.estimators) - set(ESTIMATOR_NAMES)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        limit = rayleigh_distance(self.array)
        if self.sampler.r_max_m >= limit:
            raise ValueError(
                f"scene range {self.sampler.r_max_m} m reaches the near-field "
                f"boundary {limit:.2f} m"
            )


@dataclass(frozen=True)
class SweepRow:
    """Aggregated NMSE for one (sweep point, estimator, waveband) cell.

    ``runtime_s`` is wall-clock metadata and excluded from equality so that
    reruns of a deterministic sweep compare equal.
    """

    sweep_param: str
    sweep_value: float
    estimator: str
    waveband: str
    nmse_distance: float
    nmse_angle: float
    nmse_location: float
    detection_failures: int
    n_trials: int
    runtime_s: float = field(compare=False)


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]

    def write_csv(self, path) -> None:
        """Long-format CSV: one line per (row, metric)."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("sweep_param,sweep_value,estimator,waveband,metric,nmse,failures,trials\n")
            for row in self.rows:
                for metric, value in (
                    ("distance", row.nmse_distance),
                    ("angle", row.nmse_angle),
                    ("location", row.nmse_location),
                ):
                    fh.write(
                        f"{row.sweep_param},{row.sweep_value:.12g},{row.estimator},"
                        f"{row.waveband},{metric},{value:.12g},"
                        f"{row.detection_failures},{row.n_trials}\n"
                    )

    def lookup(self, **conditions) -> list[SweepRow]:
        return [
            row
            for row in self.rows
            if all(getattr(row, key) == val for key, val in conditions.items())
        ]


def match_estimates(truth, estimates, r_scale: float, theta_scale: float = np.pi):
    """Assign estimates to true targets by exhaustive minimum-cost matching.

    Cost per pair is ((r_hat - r)/r_scale)^2 + ((theta_hat - theta)/theta_scale)^2;
    all P! permutations are scored, which is the exact assignment for the
    small target counts used here. Returns a tuple ``perm`` such that
    ``estimates[perm[i]]`` matches ``truth[i]``.
    """
    if len(truth) != len(estimates):
        raise ValueError(f"length mismatch: {len(truth)} truth vs {len(estimates)} estimates")
    indices = range(len(truth))
    best_perm, best_cost = None, math.inf
    for perm in itertools.permutations(indices):
        cost = 0.0
        for i, j in zip(indices, perm):
            cost += ((estimates[j].range_m - truth[i].range_m) / r_scale) ** 2
            cost += ((estimates[j].angle_rad - truth[i].angle_rad) / theta_scale) ** 2
        if cost < best_cost:
            best_perm, best_cost = perm, cost
    return best_perm


def nmse(true_r, est_r, true_theta, est_theta) -> tuple[float, float, float]:
    """Normalized MSEs (distance, angle, location) over matched pairs.

    Each NMSE is sum((x_hat - x)^2) / sum(x^2) over all (trial, target)
    pairs; the location variant compares Cartesian positions
    (r cos(theta), r sin(theta)).
    """
    true_r = np.asarray(true_r, dtype=float)
    est_r = np.asarray(est_r, dtype=float)
    true_theta = np.asarray(true_theta, dtype=float)
    est_theta = np.asarray(est_theta, dtype=float)
    if true_r.size == 0:
        raise ValueError("nmse needs at least one matched pair")
    nmse_distance = float(np.sum((est_r - true_r) ** 2) / np.sum(true_r**2))
    nmse_angle = float(np.sum((est_theta - true_theta) ** 2) / np.sum(true_theta**2))
    dx = est_r * np.cos(est_theta) - true_r * np.cos(true_theta)
    dy = est_r * np.sin(est_theta) - true_r * np.sin(true_theta)
    nmse_location = float(np.sum(dx**2 + dy**2) / np.sum(true_r**2))
    return nmse_distance, nmse_angle, nmse_location


def _run_estimator(name: str, received, config: ExperimentConfig) -> Estimate:
    if name == "sf":
        return estimate_sf(received, config.n_targets, config.grid)
    if name == "fresnel":
        return estimate_fresnel(
            received,
            config.n_targets,
            config.grid,
            smoothing_windows=config.smoothing_windows,
        )
    raise ValueError(f"unknown estimator {name!r}")


def _trial_cells(config, sweep_tag, sweep_index, trial, scheduled):
    """One trial: shared scene, one synthesis per waveband, all estimators.

    ``scheduled`` is the list of (waveband_label, spacing_hz, snr_db) for
    this sweep point. Returns {(estimator, waveband): cell} where a cell is
    either matched error arrays or a detection-failure marker, plus the
    estimator runtime.
    """
    root = np.random.SeedSequence(
        entropy=config.base_seed, spawn_key=(sweep_tag, sweep_index, trial)
    )
    scene_seq, data_root = root.spawn(2)
    scene = config.sampler.sample(np.random.default_rng(scene_seq), config.n_targets)
    data_seqs = data_root.spawn(len(scheduled))

    out = {}
    r_scale = float(config.grid.r_axis[-1])
    for (label, spacing_hz, snr_db), data_seq in zip(scheduled, data_seqs):
        ofdm = replace(config.ofdm, spacing_hz=spacing_hz)
        received = synthesize_received(config.array, ofdm, scene, snr_db, data_seq)
        for name in config.estimators:
            start = time.perf_counter()
            try:
                estimate = _run_estimator(name, received, config)
            except DetectionFailure:
                out[(name, label)] = {"failed": True, "runtime": time.perf_counter() - start}
                continue
            runtime = time.perf_counter() - start
            perm = match_estimates(scene.targets, estimate.targets, r_scale=r_scale)
            out[(name, label)] = {
                "failed": False,
                "runtime": runtime,
                "true_r": [t.range_m for t in scene.targets],
                "est_r": [estimate.targets[j].range_m for j in perm],
                "true_theta": [t.angle_rad for t in scene.targets],
                "est_theta": [estimate.targets[j].angle_rad for j in perm],
            }
    return out


def _map_trials(fn, tasks, threads: int):
    if threads <= 1:
        return [fn(*task) for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


def _aggregate(results, config, sweep_param, sweep_value, scheduled) -> list[SweepRow]:
    """Reduce per-trial cells into SweepRows, in deterministic order."""
    rows = []
    for name in config.estimators:
        for label, _, _ in scheduled:
            true_r, est_r, true_theta, est_theta = [], [], [], []
            failures, runtime = 0, 0.0
            for cells in results:
                cell = cells[(name, label)]
                runtime += cell["runtime"]
                if cell["failed"]:
                    failures += 1
                    continue
                true_r.extend(cell["true_r"])
                est_r.extend(cell["est_r"])
                true_theta.extend(cell["true_theta"])
                est_theta.extend(cell["est_theta"])
            if true_r:
                nmse_d, nmse_a, nmse_loc = nmse(true_r, est_r, true_theta, est_theta)
            else:
                nmse_d = nmse_a = nmse_loc = math.nan
            rows.append(
                SweepRow(
                    sweep_param=sweep_param,
                    sweep_value=sweep_value,
                    estimator=name,
                    waveband=label,
                    nmse_distance=nmse_d,
                    nmse_angle=nmse_a,
                    nmse_location=nmse_loc,
                    detection_failures=failures,
                    n_trials=len(results),
                    runtime_s=runtime,
                )
            )
    return rows


def run_snr_sweep(config: ExperimentConfig) -> SweepTable:
    """NMSE versus SNR: every waveband and estimator at each SNR point.

    Scenes are redrawn per trial from seeds derived from
    (base_seed, sweep index, trial), and are shared across wavebands and
    estimators so the comparison is paired. Trials that fail detection are
    excluded from the NMSE and counted.
    """
    rows = []
    for s_idx, snr_db in enumerate(config.snr_list_db):
        scheduled = [(label, spacing, snr_db) for label, spacing in config.wavebands]
        tasks = [(config, _SNR_SWEEP_TAG, s_idx, trial, scheduled) for trial in range(config.n_trials)]
        results = _map_trials(_trial_cells, tasks, config.threads)
        rows.extend(_aggregate(results, config, "snr_db", float(snr_db), scheduled))
    return SweepTable(rows=tuple(rows))


def run_bandwidth_sweep(config: ExperimentConfig) -> SweepTable:
    """NMSE versus total bandwidth at fixed subcarrier count and SNR.

    Each bandwidth B maps to subcarrier spacing B / M; otherwise the
    protocol matches :func:`run_snr_sweep`.
    """
    if not config.bandwidth_list_hz:
        raise ValueError("bandwidth_list_hz must be set for a bandwidth sweep")
    rows = []
    for b_idx, bandwidth_hz in enumerate(config.bandwidth_list_hz):
        spacing = bandwidth_hz / config.ofdm.n_subcarriers
        scheduled = [("swept", spacing, config.fixed_snr_db)]
        tasks = [
            (config, _BANDWIDTH_SWEEP_TAG, b_idx, trial, scheduled)
            for trial in range(config.n_trials)
        ]
        results = _map_trials(_trial_cells, tasks, config.threads)
        rows.extend(_aggregate(results, config, "bandwidth_hz", float(bandwidth_hz), scheduled))
    return SweepTable(rows=tuple(rows))


def write_sweep_plot(table: SweepTable, path) -> None:
    """Line chart per metric (log-log NMSE) in SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metrics = ("nmse_distance", "nmse_angle", "nmse_location")
    series = sorted({(r.estimator, r.waveband) for r in table.rows})
    sweep_param = table.rows[0].sweep_param if table.rows else "sweep"
    fig, axes = plt.subplots(1, 3, figsize=(15, 4), sharex=True)
    for ax, metric in zip(axes, metrics):
        for estimator, waveband in series:
            rows = sorted(
                table.lookup(estimator=estimator, waveband=waveband),
                key=lambda r: r.sweep_value,
            )
            ax.plot(
                [r.sweep_value for r in rows],
                [getattr(r, metric) for r in rows],
                marker="o",
                label=f"{estimator}/{waveband}",
            )
        ax.set_yscale("log")
        ax.set_xlabel(sweep_param)
        ax.set_ylabel(metric)
        ax.grid(True, which="both", alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
