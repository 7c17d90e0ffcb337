"""ULA geometry, propagation distances, and near-field steering vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
"Speed of light in m/s (exact)."


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array along the x-axis, centered at the origin.

    Element n (1-based) sits at (offset_n * spacing_m, 0) with
    offset_n = n - 1 - (N - 1)/2, so the offsets are symmetric about zero.

    Args:
        n_elements: Number of antenna elements (>= 2).
        carrier_freq_hz: Carrier frequency f_c in Hz.
        spacing_m: Element spacing in meters. Defaults to half the carrier
            wavelength.
    """

    n_elements: int
    carrier_freq_hz: float
    spacing_m: float = field(default=0.0)

    def __post_init__(self):
        if self.n_elements < 2:
            raise ValueError(f"n_elements must be >= 2, got {self.n_elements}")
        if self.carrier_freq_hz <= 0:
            raise ValueError("carrier_freq_hz must be positive")
        if self.spacing_m == 0.0:
            object.__setattr__(self, "spacing_m", self.carrier_wavelength_m / 2)
        if self.spacing_m <= 0:
            raise ValueError("spacing_m must be positive")

    @property
    def carrier_wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def aperture_m(self) -> float:
        """Array aperture D = N * d."""
        return self.n_elements * self.spacing_m


@dataclass(frozen=True)
class Target:
    """Point target at radial distance range_m and angle angle_rad.

    The angle is measured from the positive array axis (x-axis); the valid
    domain is the open interval (0, pi) to avoid the endfire degeneracy.
    """

    range_m: float
    angle_rad: float

    def __post_init__(self):
        if self.range_m <= 0:
            raise ValueError(f"range_m must be positive, got {self.range_m}")
        if not 0.0 < self.angle_rad < np.pi:
            raise ValueError(
                f"angle_rad must lie strictly inside (0, pi), got {self.angle_rad}"
            )

    @property
    def position_m(self) -> np.ndarray:
        """Cartesian position (r cos(theta), r sin(theta))."""
        return np.array(
            [
                self.range_m * np.cos(self.angle_rad),
                self.range_m * np.sin(self.angle_rad),
            ]
        )


@dataclass(frozen=True)
class FrequencyGrid:
    """OFDM subcarrier frequencies f_m = f_c + m * spacing_hz, m = 0..M-1."""

    n_subcarriers: int
    spacing_hz: float
    carrier_freq_hz: float

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be >= 1")
        if self.spacing_hz <= 0:
            raise ValueError("spacing_hz must be positive")
        if self.carrier_freq_hz <= 0:
            raise ValueError("carrier_freq_hz must be positive")

    @property
    def bandwidth_hz(self) -> float:
        return self.n_subcarriers * self.spacing_hz

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.carrier_freq_hz + self.spacing_hz * np.arange(self.n_subcarriers)

    @property
    def wavelengths_m(self) -> np.ndarray:
        return SPEED_OF_LIGHT / self.frequencies_hz

    @property
    def wavenumbers(self) -> np.ndarray:
        """Wavenumbers k_m = 2 pi / lambda_m in rad/m."""
        return 2.0 * np.pi / self.wavelengths_m


def element_offsets(array: ArrayConfig) -> np.ndarray:
    """Dimensionless element offsets, symmetric about zero and summing to zero."""
    n = array.n_elements
    return np.arange(n) - (n - 1) / 2.0


def exact_distances(array: ArrayConfig, range_m, angle_rad) -> np.ndarray:
    """Element-to-target distances sqrt(r^2 + o^2 d^2 - 2 r o d cos(theta)).

    ``range_m`` and ``angle_rad`` may be scalars or broadcastable arrays; the
    element axis is appended last, so the result has shape
    ``broadcast(range_m, angle_rad).shape + (N,)``.
    """
    r = np.asarray(range_m, dtype=float)[..., None]
    theta = np.asarray(angle_rad, dtype=float)[..., None]
    offs = element_offsets(array) * array.spacing_m
    return np.sqrt(r**2 + offs**2 - 2.0 * r * offs * np.cos(theta))


def exact_distance(array: ArrayConfig, target: Target, n: int) -> float:
    """Exact distance from the n-th element (1-based) to the target."""
    if not 1 <= n <= array.n_elements:
        raise IndexError(f"element index {n} outside 1..{array.n_elements}")
    return float(exact_distances(array, target.range_m, target.angle_rad)[n - 1])


def fresnel_distances(array: ArrayConfig, range_m, angle_rad) -> np.ndarray:
    """Second-order (Fresnel) approximation of :func:`exact_distances`.

    r - o d cos(theta) + o^2 d^2 sin^2(theta) / (2 r), broadcast like
    :func:`exact_distances`.
    """
    r = np.asarray(range_m, dtype=float)[..., None]
    theta = np.asarray(angle_rad, dtype=float)[..., None]
    offs = element_offsets(array) * array.spacing_m
    return r - offs * np.cos(theta) + offs**2 * np.sin(theta) ** 2 / (2.0 * r)


def fresnel_distance(array: ArrayConfig, target: Target, n: int) -> float:
    """Fresnel-approximated distance from the n-th element (1-based)."""
    if not 1 <= n <= array.n_elements:
        raise IndexError(f"element index {n} outside 1..{array.n_elements}")
    return float(fresnel_distances(array, target.range_m, target.angle_rad)[n - 1])


def steering_vector(array: ArrayConfig, freq_hz: float, target: Target) -> np.ndarray:
    """Near-field steering vector with entries exp(-j 2 pi f r_n / c).

    Every entry has unit modulus, so the squared norm equals N.
    """
    dists = exact_distances(array, target.range_m, target.angle_rad)
    return np.exp(-2j * np.pi * freq_hz * dists / SPEED_OF_LIGHT)


def steering_matrix(array: ArrayConfig, freq_hz: float, targets) -> np.ndarray:
    """N x P matrix whose p-th column is the steering vector of targets[p]."""
    return np.stack([steering_vector(array, freq_hz, t) for t in targets], axis=1)


def fresnel_phase_params(
    array: ArrayConfig, freq_hz: float, target: Target
) -> tuple[float, float, float]:
    """Quadratic phase parameters (phi, gamma, eta) of the Fresnel steering model.

    The phase of the n-th Fresnel steering entry is
    phi + gamma * offset_n + eta * offset_n^2, with

        phi   = -2 pi r / lambda          (range-only bulk phase)
        gamma = (2 pi d / lambda) cos(theta)    (angle-only linear term)
        eta   = -(pi d^2 / (lambda r)) sin^2(theta)   (curvature term)
    """
    lam = SPEED_OF_LIGHT / freq_hz
    r, theta, d = target.range_m, target.angle_rad, array.spacing_m
    phi = -2.0 * np.pi * r / lam
    gamma = 2.0 * np.pi * d / lam * np.cos(theta)
    eta = -np.pi * d**2 / (lam * r) * np.sin(theta) ** 2
    return phi, gamma, eta


def rayleigh_distance(array: ArrayConfig) -> float:
    """Near-field boundary 2 D^2 / lambda_c with aperture D = N d."""
    return 2.0 * array.aperture_m**2 / array.carrier_wavelength_m
