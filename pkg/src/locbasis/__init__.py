"""Phase-space localized orthonormal bases of a truncated harmonic oscillator."""

from .analysis import (
    EnergyStats,
    FitResult,
    TailFit,
    energy_stats,
    fit_log,
    fit_power,
    fit_tail,
    localization_estimate,
    position_profile,
    tail_summary,
)
from .optimizer import (
    LocalizedBasis,
    OptimizationTrace,
    OptimizerConfig,
    QuadratureMoments,
    RotationProposal,
    apply_rotation,
    init_identity,
    mean_variance,
    objective_s,
    propose,
    quadrature_moments,
    run,
)
from .oscillator import (
    QuadratureMatrices,
    TruncatedSpace,
    build_quadratures,
    build_space,
    eval_eigenfunctions,
)
from .thermal import (
    BandProfile,
    ResponseSeries,
    ThermalEnsemble,
    band_profile,
    build_ensemble,
    canonical_ensemble,
    response,
)

__version__ = "0.1.0"
