import json

import numpy as np
import pytest

from nfmusic.cli import (
    ConfigError,
    DEFAULT_CONFIG,
    experiment_config_from,
    load_config,
    main,
)

TINY = {
    "array": {"n_elements": 33, "carrier_freq_hz": 28e9},
    "ofdm": {"n_subcarriers": 4, "spacing_hz": 4.8e7, "n_symbols": 32},
    "targets": 1,
    "trials": 2,
    "seed": 7,
    "snr_list_db": [10.0],
    "bandwidth_list_hz": [1.92e8],
    "wavebands": {"wideband": 4.8e7},
    "smoothing_windows": None,
    "scene": {
        "r_min_m": 3.0,
        "r_max_m": 4.5,
        "theta_min_deg": 70.0,
        "theta_max_deg": 110.0,
    },
    "grid": {
        "r_min_m": 2.0,
        "r_max_m": 6.0,
        "r_step_m": 0.25,
        "theta_min_deg": 50.0,
        "theta_max_deg": 130.0,
        "theta_step_deg": 0.5,
        "refine_iters": 10,
    },
    "spectrum": {"targets": [[3.5, 90.0]], "snr_db": 10.0},
}


def write_tiny_config(tmp_path, extra=None):
    payload = dict(TINY)
    if extra:
        payload.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return str(path)


class TestLoadConfig:
    def test_defaults_without_file(self):
        config = load_config(None)
        assert config == DEFAULT_CONFIG
        assert config is not DEFAULT_CONFIG

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"array": {"n_antennas": 8}}))
        with pytest.raises(ConfigError, match="array.n_antennas"):
            load_config(str(path))

    def test_json_error_has_line_info(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"targets": 2,\n "oops"\n}')
        with pytest.raises(ConfigError, match="line 3"):
            load_config(str(path))

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "v9.json"
        path.write_text(json.dumps({"schema_version": 9}))
        with pytest.raises(ConfigError, match="schema_version"):
            load_config(str(path))

    def test_partial_override_keeps_defaults(self, tmp_path):
        path = tmp_path / "partial.json"
        path.write_text(json.dumps({"ofdm": {"n_subcarriers": 8}}))
        config = load_config(str(path))
        assert config["ofdm"]["n_subcarriers"] == 8
        assert config["ofdm"]["spacing_hz"] == DEFAULT_CONFIG["ofdm"]["spacing_hz"]


class TestExperimentConfigFrom:
    def test_reference_defaults(self):
        experiment = experiment_config_from(load_config(None))
        assert experiment.array.n_elements == 128
        assert experiment.ofdm.n_subcarriers == 64
        assert experiment.ofdm.n_symbols == 200
        assert experiment.n_targets == 2
        assert experiment.smoothing_windows == 50
        assert experiment.wavebands == (("narrowband", 480.0), ("wideband", 4.8e7))
        assert experiment.grid.r_axis.size == 309

    def test_tiny_config(self, tmp_path):
        experiment = experiment_config_from(load_config(write_tiny_config(tmp_path)))
        assert experiment.array.n_elements == 33
        assert experiment.base_seed == 7
        assert experiment.sampler.r_max_m == 4.5


class TestSweepCommand:
    def test_snr_sweep_writes_deterministic_outputs(self, tmp_path):
        config = write_tiny_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["sweep", "snr", "--config", config, "--out", str(out_a)]) == 0
        assert main(["sweep", "snr", "--config", config, "--out", str(out_b)]) == 0
        csv_a = (out_a / "sweep_snr.csv").read_bytes()
        csv_b = (out_b / "sweep_snr.csv").read_bytes()
        assert csv_a == csv_b
        lines = csv_a.decode().splitlines()
        assert lines[0].startswith("sweep_param,")
        # 1 SNR x 2 estimators x 1 waveband x 3 metrics
        assert len(lines) == 1 + 6
        manifest = json.loads((out_a / "manifest.json").read_text())
        assert manifest["config"]["trials"] == 2
        assert manifest["version"]

    def test_flag_overrides_config(self, tmp_path):
        config = write_tiny_config(tmp_path)
        out = tmp_path / "o"
        assert (
            main(
                [
                    "sweep",
                    "snr",
                    "--config",
                    config,
                    "--out",
                    str(out),
                    "--trials",
                    "1",
                    "--estimator",
                    "fresnel",
                ]
            )
            == 0
        )
        lines = (out / "sweep_snr.csv").read_text().splitlines()
        assert len(lines) == 1 + 3
        assert all(",fresnel," in line for line in lines[1:])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["trials"] == 1

    def test_bandwidth_sweep(self, tmp_path):
        config = write_tiny_config(tmp_path)
        out = tmp_path / "bw"
        assert main(["sweep", "bandwidth", "--config", config, "--out", str(out)]) == 0
        lines = (out / "sweep_bandwidth.csv").read_text().splitlines()
        assert len(lines) == 1 + 6
        assert all(line.split(",")[0] == "bandwidth_hz" for line in lines[1:])

    def test_plot_flag_writes_svg(self, tmp_path):
        config = write_tiny_config(tmp_path)
        out = tmp_path / "p"
        assert (
            main(
                [
                    "sweep",
                    "snr",
                    "--config",
                    config,
                    "--out",
                    str(out),
                    "--trials",
                    "1",
                    "--plot",
                ]
            )
            == 0
        )
        svg = (out / "sweep_snr.svg").read_text()
        assert svg.lstrip().startswith("<?xml")

    def test_unknown_config_key_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"mystery": 1}))
        rc = main(["sweep", "snr", "--config", str(path), "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "mystery" in capsys.readouterr().err


class TestSpectrumCommand:
    def test_outputs_and_manifest(self, tmp_path):
        config = write_tiny_config(tmp_path)
        out = tmp_path / "spec"
        assert main(["spectrum", "--config", config, "--out", str(out)]) == 0
        sf_csv = out / "spectrum_sf.csv"
        angle_csv = out / "spectrum_fresnel_angle.csv"
        dist_csv = out / "spectrum_fresnel_distance_1.csv"
        assert sf_csv.exists() and angle_csv.exists() and dist_csv.exists()
        assert sf_csv.read_text().splitlines()[0] == "r_m,theta_rad,J"
        assert angle_csv.read_text().splitlines()[0] == "theta_rad,value"
        assert dist_csv.read_text().splitlines()[0] == "r_m,value"
        manifest = json.loads((out / "manifest.json").read_text())
        # Manifest echoes the fully resolved config, defaults included.
        assert manifest["config"]["ofdm"]["cp_fraction"] == 0.07
        assert manifest["config"]["array"]["n_elements"] == 33

    def test_peak_cell_matches_estimator(self, tmp_path):
        config = write_tiny_config(tmp_path)
        out = tmp_path / "peak"
        assert main(["spectrum", "--config", config, "--estimator", "sf", "--out", str(out)]) == 0
        rows = np.loadtxt(out / "spectrum_sf.csv", delimiter=",", skiprows=1)
        r_peak, theta_peak, _ = rows[np.argmax(rows[:, 2])]

        from nfmusic import estimate_sf
        from nfmusic.cli import _array_from, _grid_from, _ofdm_from, _spectrum_scene
        from nfmusic.signal import synthesize_received

        cfg = load_config(config)
        received = synthesize_received(
            _array_from(cfg), _ofdm_from(cfg), _spectrum_scene(cfg), 10.0, cfg["seed"]
        )
        estimate = estimate_sf(received, 1, _grid_from(cfg))
        assert abs(estimate.targets[0].range_m - r_peak) <= 0.25
        assert abs(estimate.targets[0].angle_rad - theta_peak) <= np.deg2rad(0.5)


class TestSimulateCommand:
    def test_npz_contents(self, tmp_path):
        config = write_tiny_config(tmp_path)
        out = tmp_path / "sim"
        assert main(["simulate", "--config", config, "--out", str(out)]) == 0
        with np.load(out / "received.npz") as data:
            assert data["per_subcarrier"].shape == (4, 33, 32)
            assert data["frequencies_hz"].shape == (4,)
            assert data["true_ranges_m"].tolist() == [3.5]
