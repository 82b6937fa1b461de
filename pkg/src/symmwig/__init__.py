"""Symmetry-class Wigner ensembles and their Chebyshev trace statistics."""

__version__ = "0.1.0"

from .ensemble import (
    EntryModel,
    EquivClass,
    MatrixSample,
    SymmetryClass,
    build_equivalence_classes,
    class_of,
    derive_rng,
    sample_matrix,
    symmetry_stats,
)
from .chebyshev import ChebSpec, cheb_coefficients, trace_cheb_vector
from .patterns import (
    BudgetError,
    DeltaMatrix,
    DihedralElement,
    LambdaKind,
    Pattern,
    complete_reflection_sequence,
    count_consistent_instances,
    dihedral_group,
    enumerate_delta_sequences,
    is_substantial,
    pair_partition,
    per_g_leading_term,
)
from .covariance import (
    CovReport,
    V_asymptotic,
    V_n_exact,
    cov_cheb_moment_oracle,
    cov_report,
    cov_traces_config_oracle,
    cov_traces_moment_oracle,
    good_multiindices,
)
from .montecarlo import (
    CLTReport,
    MomentAccumulator,
    SimulationConfig,
    SimulationResult,
    clt_report,
    estimate_cumulants,
    merge,
    run_simulation,
    theory_vector,
)

__all__ = [
    "__version__",
    "EntryModel",
    "EquivClass",
    "MatrixSample",
    "SymmetryClass",
    "build_equivalence_classes",
    "class_of",
    "derive_rng",
    "sample_matrix",
    "symmetry_stats",
    "ChebSpec",
    "cheb_coefficients",
    "trace_cheb_vector",
    "BudgetError",
    "DeltaMatrix",
    "DihedralElement",
    "LambdaKind",
    "Pattern",
    "complete_reflection_sequence",
    "count_consistent_instances",
    "dihedral_group",
    "enumerate_delta_sequences",
    "is_substantial",
    "pair_partition",
    "per_g_leading_term",
    "CovReport",
    "V_asymptotic",
    "V_n_exact",
    "cov_cheb_moment_oracle",
    "cov_report",
    "cov_traces_config_oracle",
    "cov_traces_moment_oracle",
    "good_multiindices",
    "CLTReport",
    "MomentAccumulator",
    "SimulationConfig",
    "SimulationResult",
    "clt_report",
    "estimate_cumulants",
    "merge",
    "run_simulation",
    "theory_vector",
]
