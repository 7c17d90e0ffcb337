"""Wideband near-field localization: subspace-fitting and Fresnel MUSIC."""

from .geometry import (
    SPEED_OF_LIGHT,
    ArrayConfig,
    FrequencyGrid,
    Target,
    element_offsets,
    exact_distance,
    exact_distances,
    fresnel_distance,
    fresnel_distances,
    fresnel_phase_params,
    rayleigh_distance,
    steering_matrix,
    steering_vector,
)
from .signal import (
    OfdmConfig,
    ReceivedData,
    Scene,
    SceneRealization,
    generate_symbols,
    path_loss,
    synthesize_received,
    time_domain_roundtrip,
)
from .subspace import (
    SubspaceDecomposition,
    decompose_covariance,
    decompose_received,
    hermitian_eig,
    sample_covariance,
    split_subspaces,
)
from .gridsearch import DetectionFailure
from .estimator_sf import (
    Estimate,
    SearchGrid,
    SpectrumGrid,
    estimate_sf,
    evaluate_spectrum,
    pick_peaks,
    sf_spectrum_value,
)
from .estimator_fresnel import (
    AntiDiagonalVector,
    SmoothedCovariance,
    ambiguity_candidates,
    angle_spectrum,
    antidiagonal_vector,
    distance_spectrum,
    estimate_fresnel,
    spatial_smooth,
)
from .experiment import (
    ExperimentConfig,
    SceneSampler,
    SweepRow,
    SweepTable,
    match_estimates,
    nmse,
    run_bandwidth_sweep,
    run_snr_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT",
    "ArrayConfig",
    "FrequencyGrid",
    "Target",
    "element_offsets",
    "exact_distance",
    "exact_distances",
    "fresnel_distance",
    "fresnel_distances",
    "fresnel_phase_params",
    "rayleigh_distance",
    "steering_matrix",
    "steering_vector",
    "OfdmConfig",
    "ReceivedData",
    "Scene",
    "SceneRealization",
    "generate_symbols",
    "path_loss",
    "synthesize_received",
    "time_domain_roundtrip",
    "SubspaceDecomposition",
    "decompose_covariance",
    "decompose_received",
    "hermitian_eig",
    "sample_covariance",
    "split_subspaces",
    "DetectionFailure",
    "Estimate",
    "SearchGrid",
    "SpectrumGrid",
    "estimate_sf",
    "evaluate_spectrum",
    "pick_peaks",
    "sf_spectrum_value",
    "AntiDiagonalVector",
    "SmoothedCovariance",
    "ambiguity_candidates",
    "angle_spectrum",
    "antidiagonal_vector",
    "distance_spectrum",
    "estimate_fresnel",
    "spatial_smooth",
    "ExperimentConfig",
    "SceneSampler",
    "SweepRow",
    "SweepTable",
    "match_estimates",
    "nmse",
    "run_bandwidth_sweep",
    "run_snr_sweep",
]
