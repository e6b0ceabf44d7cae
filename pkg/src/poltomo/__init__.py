"""Multi-photon polarization tomography with lossy detectors.

Simulation of photon-counting measurement protocols (ideal, fuzzy, and
N-fold coincidence), maximum-likelihood pure-state reconstruction, and
information-matrix accuracy analysis.
"""

__version__ = "0.1.0"

from .experiment import (
    ExperimentConfig,
    NumericalFailure,
    config_from_dict,
    derive_seed,
    load_config,
    run_experiment,
    run_pair,
)
from .information import (
    GofResult,
    InformationAnalysis,
    InformationallyIncompleteError,
    analysis_to_dict,
    analyze_protocol,
    chi_squared_gof,
    closed_form_information,
    gauge_projected_spectrum,
    information_matrix,
    loss_statistics,
    loss_to_z,
    normalized_full_information,
    sample_loss_distribution,
)
from .protocols import (
    ChannelOperator,
    ChannelOpKind,
    Protocol,
    ProtocolElement,
    ProtocolVariant,
    SingleQubitProjectorSet,
    build_coincidence_protocol,
    build_fuzzy_protocol,
    build_ideal_protocol,
    build_protocol,
    element_operator,
    element_rate,
    element_rates,
    load_protocol,
    loss_operator,
    octahedron_set,
    projector_matrix,
    protocol_fingerprint,
    protocol_from_dict,
    protocol_to_dict,
    save_protocol,
    verify_unity_decomposition,
)
from .quantum import (
    HermitianOperator,
    PureState,
    fidelity,
    ghz_state,
    realify_matrix,
    realify_operator,
    realify_state,
    tensor_product,
)
from .reconstruction import (
    ReconstructionResult,
    SolverOptions,
    fixed_point_residual,
    log_likelihood,
    ml_reconstruct,
    result_to_dict,
)
from .simulation import (
    CountsRecord,
    counts_from_dict,
    counts_to_dict,
    expected_counts,
    load_counts,
    sample_counts,
    save_counts,
)

__all__ = [
    "ChannelOpKind",
    "ChannelOperator",
    "CountsRecord",
    "ExperimentConfig",
    "GofResult",
    "HermitianOperator",
    "InformationAnalysis",
    "InformationallyIncompleteError",
    "NumericalFailure",
    "Protocol",
    "ProtocolElement",
    "ProtocolVariant",
    "PureState",
    "ReconstructionResult",
    "SingleQubitProjectorSet",
    "SolverOptions",
    "analysis_to_dict",
    "analyze_protocol",
    "build_coincidence_protocol",
    "build_fuzzy_protocol",
    "build_ideal_protocol",
    "build_protocol",
    "chi_squared_gof",
    "closed_form_information",
    "config_from_dict",
    "counts_from_dict",
    "counts_to_dict",
    "derive_seed",
    "element_operator",
    "element_rate",
    "element_rates",
    "expected_counts",
    "fidelity",
    "fixed_point_residual",
    "gauge_projected_spectrum",
    "ghz_state",
    "information_matrix",
    "load_config",
    "load_counts",
    "load_protocol",
    "log_likelihood",
    "loss_operator",
    "loss_statistics",
    "loss_to_z",
    "ml_reconstruct",
    "normalized_full_information",
    "octahedron_set",
    "projector_matrix",
    "protocol_fingerprint",
    "protocol_from_dict",
    "protocol_to_dict",
    "realify_matrix",
    "realify_operator",
    "realify_state",
    "result_to_dict",
    "run_experiment",
    "run_pair",
    "sample_counts",
    "sample_loss_distribution",
    "save_counts",
    "save_protocol",
    "tensor_product",
    "verify_unity_decomposition",
]
