"""Numerical laboratory for a disordered massless continuous-spin lattice model.

The package builds quenched Gibbs measures of gradient type on finite 2D
boxes, computes the exactly-solvable Gaussian case, constructs hitting-
probability test profiles with their Dirichlet-form entropy bound, and
cross-checks the resulting tail lower bound by brute-force quadrature and
Metropolis sampling.
"""

from .version import __version__

from .errors import (
    AsymmetricKernelError,
    ConfigError,
    CutoffInsufficientError,
    DimensionMismatchError,
    EmptySeriesError,
    IflError,
    LatticeTooLargeError,
    NoConvergenceError,
    NonpositiveCurvatureError,
    NotNormalizedError,
    ReducibleKernelError,
    SelfJumpPresentError,
    SeriesTooShortError,
    SiteOutsideInteriorError,
)
from .lattice import (
    BoxGeometry,
    Field,
    GibbsModel,
    PotentialSpec,
    WalkKernel,
    anharmonic_potential,
    flip_disorder,
    gaussian_disorder,
    local_energy_delta,
    nearest_neighbor_kernel,
    quadratic_potential,
    rademacher_disorder,
    total_energy,
    validate_kernel,
    zero_disorder,
)
from .gaussian import (
    PrecisionOperator,
    apply_precision,
    exact_shift_kl,
    exact_tail,
    groundstate_variance,
    quenched_mean,
    solve_green_column,
)
from .profiles import (
    EntropyBudget,
    dirichlet_form,
    entropy_bound,
    hitting_probability,
    scale_amplitude,
    test_profile,
    theorem_floor,
)
from .quadrature import (
    QuadratureSpec,
    check_stability,
    oracle_marginal_phi0,
    oracle_relative_entropy,
    oracle_tail,
    quadrature_partition,
)
from .mcmc import (
    ChainConfig,
    ChainResult,
    TailEstimate,
    autocorrelation_time,
    metropolis_step,
    run_chain,
    tail_estimate,
    wilson_interval,
)

__all__ = [name for name in dir() if not name.startswith("_")]
