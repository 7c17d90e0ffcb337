"""Multi-target OFDM uplink synthesis in the per-subcarrier frequency domain."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    ArrayConfig,
    FrequencyGrid,
    Target,
    exact_distances,
    rayleigh_distance,
)


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM frame parameters: M subcarriers spaced spacing_hz, K symbols.

    The cyclic prefix enters only the frame-duration bookkeeping here; the
    per-subcarrier model is synthesized directly in the frequency domain and
    validated against the sampled time-domain chain by
    :func:`time_domain_roundtrip`.
    """

    n_subcarriers: int
    spacing_hz: float
    n_symbols: int
    cp_fraction: float = 0.07
    modulation: str = "qpsk"

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.n_symbols < 1:
            raise ValueError("n_subcarriers and n_symbols must be >= 1")
        if self.spacing_hz <= 0:
            raise ValueError("spacing_hz must be positive")
        if self.cp_fraction < 0:
            raise ValueError("cp_fraction must be >= 0")

    @property
    def bandwidth_hz(self) -> float:
        return self.n_subcarriers * self.spacing_hz

    @property
    def symbol_duration_s(self) -> float:
        """Elementary OFDM symbol duration T_d = 1 / spacing_hz."""
        return 1.0 / self.spacing_hz

    @property
    def guard_duration_s(self) -> float:
        return self.cp_fraction * self.symbol_duration_s

    @property
    def total_symbol_duration_s(self) -> float:
        return self.symbol_duration_s + self.guard_duration_s

    @property
    def sample_interval_s(self) -> float:
        """Sampling interval T_s = 1 / bandwidth."""
        return 1.0 / self.bandwidth_hz


@dataclass(frozen=True)
class Scene:
    """Collection of point targets observed by the array."""

    targets: tuple[Target, ...]

    def __post_init__(self):
        if len(self.targets) < 1:
            raise ValueError("scene needs at least one target")
        object.__setattr__(self, "targets", tuple(self.targets))

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def ranges_m(self) -> np.ndarray:
        return np.array([t.range_m for t in self.targets])

    @property
    def angles_rad(self) -> np.ndarray:
        return np.array([t.angle_rad for t in self.targets])


@dataclass(frozen=True)
class SceneRealization:
    """One random draw of symbols, gains, and noise level for a scene."""

    scene: Scene
    symbols: np.ndarray  # (K, M, P) unit-power data symbols
    path_gains: np.ndarray  # (P,) amplitude gains beta_p
    noise_std: float  # per-entry complex noise standard deviation
    seed: object


@dataclass(frozen=True)
class ReceivedData:
    """Per-subcarrier received matrices Y_m stacked as an (M, N, K) tensor."""

    per_subcarrier: np.ndarray
    freq_grid: FrequencyGrid
    array: ArrayConfig
    realization: SceneRealization | None = field(default=None, repr=False)

    def __post_init__(self):
        m, n, _ = self.per_subcarrier.shape
        if m != self.freq_grid.n_subcarriers or n != self.array.n_elements:
            raise ValueError("per_subcarrier shape inconsistent with configs")

    @property
    def n_snapshots(self) -> int:
        return self.per_subcarrier.shape[2]


def path_loss(carrier_freq_hz: float, range_m: float) -> float:
    """Frequency-independent amplitude gain c / (4 pi f_c r)."""
    if carrier_freq_hz <= 0 or range_m <= 0:
        raise ValueError("carrier frequency and range must be positive")
    return SPEED_OF_LIGHT / (4.0 * np.pi * carrier_freq_hz * range_m)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def generate_symbols(ofdm: OfdmConfig, n_targets: int, seed) -> np.ndarray:
    """Draw i.i.d. unit-modulus data symbols of shape (K, M, P).

    Deterministic for a given seed; symbols from different targets are
    independent, so their empirical cross-correlation vanishes as K grows.
    """
    if n_targets < 1:
        raise ValueError("n_targets must be >= 1")
    if ofdm.modulation != "qpsk":
        raise ValueError(f"unsupported modulation {ofdm.modulation!r}")
    rng = np.random.default_rng(_seed_sequence(seed))
    quadrant = rng.integers(0, 4, size=(ofdm.n_symbols, ofdm.n_subcarriers, n_targets))
    return np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * quadrant))


def synthesize_received(
    array: ArrayConfig,
    ofdm: OfdmConfig,
    scene: Scene,
    snr_db: float,
    seed,
) -> ReceivedData:
    """Simulate the received matrices Y_m = beta (.) A_m(r, theta) S_m + W_m.

    Column p of the steering matrix A_m is scaled by the path gain beta_p;
    W_m is i.i.d. circular complex Gaussian noise whose variance is set so
    that the mean received signal power per antenna per sample is snr_db
    decibels above the per-entry noise power. Pass ``snr_db=math.inf`` to
    disable noise.

    Raises:
        ValueError: if a target lies outside (0, rayleigh_distance) or if
            the number of targets reaches the array size (no noise subspace).
    """
    n_targets = scene.n_targets
    if n_targets >= array.n_elements:
        raise ValueError(
            f"need n_targets < n_elements, got {n_targets} >= {array.n_elements}"
        )
    r_limit = rayleigh_distance(array)
    for t in scene.targets:
        if not 0.0 < t.range_m < r_limit:
            raise ValueError(
                f"target at {t.range_m} m outside near-field region (0, {r_limit:.2f}) m"
            )

    freq_grid = FrequencyGrid(
        n_subcarriers=ofdm.n_subcarriers,
        spacing_hz=ofdm.spacing_hz,
        carrier_freq_hz=array.carrier_freq_hz,
    )
    root = _seed_sequence(seed)
    symbol_seq, noise_root = root.spawn(2)
    noise_seqs = noise_root.spawn(ofdm.n_subcarriers)

    symbols = generate_symbols(ofdm, n_targets, symbol_seq)
    gains = np.array([path_loss(array.carrier_freq_hz, t.range_m) for t in scene.targets])

    # (P, N) delays are frequency independent; steering differs only by f_m.
    delays = exact_distances(array, scene.ranges_m, scene.angles_rad) / SPEED_OF_LIGHT

    noiseless = np.empty(
        (ofdm.n_subcarriers, array.n_elements, ofdm.n_symbols), dtype=complex
    )
    for m, f_m in enumerate(freq_grid.frequencies_hz):
        a_m = np.exp(-2j * np.pi * f_m * delays).T  # (N, P)
        noiseless[m] = (a_m * gains) @ symbols[:, m, :].T

    if math.isinf(snr_db):
        noise_std = 0.0
        received = noiseless
    else:
        signal_power = float(np.mean(np.abs(noiseless) ** 2))
        noise_std = math.sqrt(signal_power / 10.0 ** (snr_db / 10.0))
        received = noiseless.copy()
        shape = (array.n_elements, ofdm.n_symbols)
        for m, sub_seq in enumerate(noise_seqs):
            rng = np.random.default_rng(sub_seq)
            received[m] += (
                noise_std
                / math.sqrt(2.0)
                * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
            )

    realization = SceneRealization(
        scene=scene,
        symbols=symbols,
        path_gains=gains,
        noise_std=noise_std,
        seed=seed,
    )
    return ReceivedData(
        per_subcarrier=received,
        freq_grid=freq_grid,
        array=array,
        realization=realization,
    )


def time_domain_roundtrip(
    array: ArrayConfig,
    ofdm: OfdmConfig,
    scene: Scene,
    seed,
    frequency_dependent_gain: bool = False,
) -> float:
    """Validate the frequency-domain shortcut against the sampled OFDM chain.

    Builds the noiseless discrete-time samples y_{k,n}[i] from the phase
    model with exact per-element delays, recovers the per-subcarrier symbols
    with a unitary DFT over i, and returns the maximum absolute deviation
    from the direct frequency-domain construction, relative to its peak
    magnitude. With ``frequency_dependent_gain`` both chains use the
    per-element, per-subcarrier gain c / (4 pi f_m r_{p,n}) instead of the
    simplified frequency-independent one.

    Restricted to small instances; this is a validator, not a simulator.
    """
    n_el, n_sub, n_sym = array.n_elements, ofdm.n_subcarriers, ofdm.n_symbols
    if n_el > 8 or n_sub > 16 or n_sym > 4:
        raise ValueError("round-trip validator is limited to N<=8, M<=16, K<=4")

    symbols = generate_symbols(ofdm, scene.n_targets, _seed_sequence(seed))
    freqs = array.carrier_freq_hz + ofdm.spacing_hz * np.arange(n_sub)
    dists = exact_distances(array, scene.ranges_m, scene.angles_rad)  # (P, N)
    delays = dists / SPEED_OF_LIGHT

    if frequency_dependent_gain:
        # (P, N, M) gains c / (4 pi f_m r_{p,n})
        gains = SPEED_OF_LIGHT / (4.0 * np.pi * freqs[None, None, :] * dists[..., None])
    else:
        beta = np.array(
            [path_loss(array.carrier_freq_hz, t.range_m) for t in scene.targets]
        )
        gains = np.broadcast_to(beta[:, None, None], (scene.n_targets, n_el, n_sub))

    # Discrete-time samples over i and the direct frequency-domain model.
    m_idx = np.arange(n_sub)
    idft = np.exp(2j * np.pi * np.outer(m_idx, m_idx) / n_sub)  # [i, m]
    time_samples = np.zeros((n_sym, n_el, n_sub), dtype=complex)
    direct = np.zeros((n_sym, n_el, n_sub), dtype=complex)
    for k in range(n_sym):
        for n in range(n_el):
            for p in range(scene.n_targets):
                carrier_phase = np.exp(-2j * np.pi * freqs * delays[p, n])  # (M,)
                coeff = gains[p, n] * symbols[k, :, p] * carrier_phase
                time_samples[k, n] += idft @ coeff / math.sqrt(n_sub)
                direct[k, n] += coeff

    recovered = np.fft.fft(time_samples, axis=2, norm="ortho")
    peak = np.max(np.abs(direct))
    return float(np.max(np.abs(recovered - direct)) / peak)
