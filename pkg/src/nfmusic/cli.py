"""Command-line front end: spectrum dumps, NMSE sweeps, data simulation."""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .estimator_fresnel import (
    angle_spectrum,
    antidiagonal_vector,
    default_window_count,
    distance_spectrum,
    spatial_smooth,
    write_angle_spectrum_csv,
    write_distance_spectrum_csv,
)
from .estimator_sf import SearchGrid, evaluate_spectrum, write_spectrum_csv
from .experiment import (
    ExperimentConfig,
    SceneSampler,
    run_bandwidth_sweep,
    run_snr_sweep,
    write_sweep_plot,
)
from .geometry import ArrayConfig, Target
from .signal import OfdmConfig, Scene, synthesize_received
from .subspace import decompose_covariance, decompose_received, sample_covariance

SCHEMA_VERSION = 1

# Zero-config run reproduces the reference system configuration.
DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "array": {"n_elements": 128, "carrier_freq_hz": 28e9, "spacing_m": None},
    "ofdm": {
        "n_subcarriers": 64,
        "spacing_hz": 480e3,
        "n_symbols": 200,
        "cp_fraction": 0.07,
        "modulation": "qpsk",
    },
    "targets": 2,
    "trials": 200,
    "seed": 0,
    "threads": 1,
    "estimator": "both",
    "snr_list_db": [-20.0, -15.0, -10.0, -5.0, 0.0, 10.0],
    "bandwidth_list_hz": [1e6, 1e8, 1e10],
    "fixed_snr_db": 0.0,
    "wavebands": {"narrowband": 480.0, "wideband": 4.8e7},
    "smoothing_windows": 50,
    "scene": {
        "r_min_m": 5.0,
        "r_max_m": 60.0,
        "theta_min_deg": 40.0,
        "theta_max_deg": 140.0,
        "min_dr_m": 2.0,
        "min_dtheta_deg": 4.0,
    },
    "grid": {
        "r_min_m": 3.0,
        "r_max_m": 80.0,
        "r_step_m": 0.25,
        "theta_min_deg": 30.0,
        "theta_max_deg": 150.0,
        "theta_step_deg": 0.25,
        "refine_iters": 20,
    },
    "spectrum": {"targets": [[20.0, 80.0], [40.0, 100.0]], "snr_db": 10.0},
}

# Sections whose keys are free-form (labels, targets), not schema keys.
_FREE_SECTIONS = {"wavebands"}


class ConfigError(ValueError):
    pass


def _merge(defaults: dict, override: dict, path: str = "") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {where!r}")
        if key in _FREE_SECTIONS:
            if not isinstance(value, dict) or not value:
                raise ConfigError(f"{where!r} must be a non-empty mapping")
            merged[key] = dict(value)
        elif isinstance(defaults[key], dict) and defaults[key]:
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            merged[key] = _merge(defaults[key], value, where)
        else:
            merged[key] = value
    return merged


def load_config(path: str | None) -> dict:
    """Read a JSON config file and merge it over the built-in defaults."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    version = user.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")
    return _merge(DEFAULT_CONFIG, user)


def _array_from(config: dict) -> ArrayConfig:
    section = config["array"]
    kwargs = {
        "n_elements": int(section["n_elements"]),
        "carrier_freq_hz": float(section["carrier_freq_hz"]),
    }
    if section["spacing_m"] is not None:
        kwargs["spacing_m"] = float(section["spacing_m"])
    return ArrayConfig(**kwargs)


def _ofdm_from(config: dict) -> OfdmConfig:
    section = config["ofdm"]
    return OfdmConfig(
        n_subcarriers=int(section["n_subcarriers"]),
        spacing_hz=float(section["spacing_hz"]),
        n_symbols=int(section["n_symbols"]),
        cp_fraction=float(section["cp_fraction"]),
        modulation=str(section["modulation"]),
    )


def _grid_from(config: dict) -> SearchGrid:
    g = config["grid"]
    return SearchGrid.from_bounds(
        float(g["r_min_m"]),
        float(g["r_max_m"]),
        float(g["r_step_m"]),
        np.deg2rad(float(g["theta_min_deg"])),
        np.deg2rad(float(g["theta_max_deg"])),
        np.deg2rad(float(g["theta_step_deg"])),
        refine_iters=int(g["refine_iters"]),
    )


def _sampler_from(config: dict) -> SceneSampler:
    s = config["scene"]
    return SceneSampler(
        r_min_m=float(s["r_min_m"]),
        r_max_m=float(s["r_max_m"]),
        theta_min_rad=np.deg2rad(float(s["theta_min_deg"])),
        theta_max_rad=np.deg2rad(float(s["theta_max_deg"])),
        min_separation_m=float(s["min_dr_m"]),
        min_separation_rad=np.deg2rad(float(s["min_dtheta_deg"])),
    )


def _estimators_from(config: dict) -> tuple[str, ...]:
    choice = config["estimator"]
    if choice == "both":
        return ("sf", "fresnel")
    if choice in ("sf", "fresnel"):
        return (choice,)
    raise ConfigError(f"estimator must be sf, fresnel, or both, got {choice!r}")


def experiment_config_from(config: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            array=_array_from(config),
            ofdm=_ofdm_from(config),
            n_targets=int(config["targets"]),
            n_trials=int(config["trials"]),
            snr_list_db=tuple(float(x) for x in config["snr_list_db"]),
            bandwidth_list_hz=tuple(float(x) for x in config["bandwidth_list_hz"]),
            fixed_snr_db=float(config["fixed_snr_db"]),
            wavebands=tuple((str(k), float(v)) for k, v in config["wavebands"].items()),
            estimators=_estimators_from(config),
            sampler=_sampler_from(config),
            grid=_grid_from(config),
            smoothing_windows=(
                None
                if config["smoothing_windows"] is None
                else int(config["smoothing_windows"])
            ),
            base_seed=int(config["seed"]),
            threads=int(config["threads"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _spectrum_scene(config: dict) -> Scene:
    targets = config["spectrum"]["targets"]
    if not targets:
        raise ConfigError("spectrum.targets must list at least one [range_m, angle_deg] pair")
    return Scene(
        targets=tuple(
            Target(range_m=float(r), angle_rad=float(np.deg2rad(deg))) for r, deg in targets
        )
    )


def _write_manifest(out_dir: Path, command: list[str], config: dict, outputs, timings):
    manifest = {
        "tool": "nfmusic",
        "version": __version__,
        "command": command,
        "config": config,
        "outputs": [str(p) for p in outputs],
        "timings_s": timings,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _cmd_spectrum(args, command: list[str]) -> int:
    config = load_config(args.config)
    _apply_overrides(config, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    array = _array_from(config)
    ofdm = _ofdm_from(config)
    grid = _grid_from(config)
    scene = _spectrum_scene(config)
    n_targets = scene.n_targets
    estimators = _estimators_from(config)

    start = time.perf_counter()
    received = synthesize_received(
        array, ofdm, scene, float(config["spectrum"]["snr_db"]), int(config["seed"])
    )
    outputs = []
    if "sf" in estimators:
        decomps = decompose_received(received, n_targets)
        spectrum = evaluate_spectrum(grid, decomps, received.freq_grid, array)
        path = out_dir / "spectrum_sf.csv"
        write_spectrum_csv(spectrum, path)
        outputs.append(path)
    if "fresnel" in estimators:
        covariances = [sample_covariance(y) for y in received.per_subcarrier]
        decomps = [decompose_covariance(sigma, n_targets) for sigma in covariances]
        n_odd = array.n_elements if array.n_elements % 2 == 1 else array.n_elements - 1
        windows = config["smoothing_windows"] or default_window_count(n_odd, n_targets)
        smoothed = [
            spatial_smooth(antidiagonal_vector(sigma[:n_odd, :n_odd]), windows)
            for sigma in covariances
        ]
        values, peaks = angle_spectrum(
            smoothed, grid.theta_axis, n_targets, received.freq_grid, array.spacing_m
        )
        path = out_dir / "spectrum_fresnel_angle.csv"
        write_angle_spectrum_csv(grid.theta_axis, values, path)
        outputs.append(path)
        for i, theta_peak in enumerate(peaks, start=1):
            r_values, _, _ = distance_spectrum(
                theta_peak, decomps, grid.r_axis, received.freq_grid, array, refine_iters=0
            )
            path = out_dir / f"spectrum_fresnel_distance_{i}.csv"
            write_distance_spectrum_csv(grid.r_axis, r_values, path)
            outputs.append(path)
    timings = {"total_s": time.perf_counter() - start}
    outputs.append(_write_manifest(out_dir, command, config, outputs, timings))
    return 0


def _cmd_sweep(args, command: list[str]) -> int:
    config = load_config(args.config)
    _apply_overrides(config, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    experiment = experiment_config_from(config)
    start = time.perf_counter()
    if args.kind == "snr":
        table = run_snr_sweep(experiment)
    else:
        table = run_bandwidth_sweep(experiment)
    elapsed = time.perf_counter() - start

    csv_path = out_dir / f"sweep_{args.kind}.csv"
    table.write_csv(csv_path)
    outputs = [csv_path]
    if args.plot:
        plot_path = out_dir / f"sweep_{args.kind}.svg"
        write_sweep_plot(table, plot_path)
        outputs.append(plot_path)
    timings = {"total_s": elapsed}
    timings.update(
        {
            f"{row.estimator}/{row.waveband}@{row.sweep_value:g}": round(row.runtime_s, 6)
            for row in table.rows
        }
    )
    outputs.append(_write_manifest(out_dir, command, config, outputs, timings))

    worst = max(
        (row.detection_failures / row.n_trials for row in table.rows), default=0.0
    )
    if worst > 0.5:
        print(
            f"error: detection-failure rate {worst:.0%} exceeds 50% at a sweep point",
            file=sys.stderr,
        )
        return 1
    return 0


def _cmd_simulate(args, command: list[str]) -> int:
    config = load_config(args.config)
    _apply_overrides(config, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    array = _array_from(config)
    ofdm = _ofdm_from(config)
    scene = _spectrum_scene(config)
    start = time.perf_counter()
    received = synthesize_received(
        array, ofdm, scene, float(config["spectrum"]["snr_db"]), int(config["seed"])
    )
    path = out_dir / "received.npz"
    np.savez(
        path,
        per_subcarrier=received.per_subcarrier,
        frequencies_hz=received.freq_grid.frequencies_hz,
        true_ranges_m=scene.ranges_m,
        true_angles_rad=scene.angles_rad,
        noise_std=received.realization.noise_std,
    )
    timings = {"total_s": time.perf_counter() - start}
    _write_manifest(out_dir, command, config, [path], timings)
    return 0


def _apply_overrides(config: dict, args) -> None:
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        config["trials"] = args.trials
    if getattr(args, "estimator", None) is not None:
        config["estimator"] = args.estimator
    if getattr(args, "threads", None) is not None:
        config["threads"] = args.threads


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfmusic",
        description="Wideband near-field localization benchmarks (2D and Fresnel MUSIC).",
    )
    parser.add_argument("--version", action="version", version=f"nfmusic {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=False, plot=False):
        p.add_argument("--config", help="JSON config file; defaults fill missing keys")
        p.add_argument("--seed", type=int, help="override base seed")
        p.add_argument("--estimator", choices=["sf", "fresnel", "both"], help="estimator choice")
        p.add_argument("--threads", type=int, help="worker cap for trial parallelism")
        p.add_argument("--out", default="out", help="output directory (created if missing)")
        if trials:
            p.add_argument("--trials", type=int, help="override trial count")
        if plot:
            p.add_argument("--plot", action="store_true", help="also write an SVG line chart")

    p_spec = sub.add_parser("spectrum", help="dump pseudospectra for a fixed scene")
    common(p_spec)
    p_spec.set_defaults(func=_cmd_spectrum)

    p_sweep = sub.add_parser("sweep", help="run a Monte Carlo NMSE sweep")
    p_sweep.add_argument("kind", choices=["snr", "bandwidth"])
    common(p_sweep, trials=True, plot=True)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_sim = sub.add_parser("simulate", help="dump synthesized received data to .npz")
    common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, ["nfmusic", *argv])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
