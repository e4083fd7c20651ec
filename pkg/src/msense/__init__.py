"""Compressed sensing with multi-sensor measurements."""

__version__ = "0.1.0"

from .levels import (  # noqa: E402
    LevelPartition,
    PartitionError,
    best_distributed_approximation,
    is_sparse_distributed,
    level_sparsities,
    sample_sparse_distributed,
    validate_partition,
)
from .profiles import (  # noqa: E402
    DiagonalProfileSet,
    banded_profiles,
    joint_isometry_residual,
    matrix_coherence,
    piecewise_constant_profiles,
    upsilon_distinct,
    upsilon_identical,
)
from .sampling import (  # noqa: E402
    MeasurementEnsemble,
    RowDistribution,
    assemble_distinct,
    assemble_identical,
    isotropy_residual,
)
from .solver import SolverOptions, basis_pursuit, l0_oracle, recovery_error  # noqa: E402
from .analysis import (  # noqa: E402
    gamma1_empirical,
    gamma2_estimate,
    log_factor_L,
    measurement_bound_proxy,
)
