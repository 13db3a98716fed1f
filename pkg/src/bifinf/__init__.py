"""Bifurcation from infinity for truncated 1-D Schrodinger operators.

The pipeline: discretize A = -d^2/dx^2 + V(x) on a Dirichlet box, split its
spectrum around an isolated eigenvalue, build the global invariant manifold
of the associated parabolic flow by a weighted-space fixed point, reduce the
dynamics to the kernel block, and track the solution branches that blow up
as the parameter approaches the eigenvalue from below, plus the bounded one.
"""

from .errors import (
    AssumptionViolationError,
    BifinfError,
    ConfigError,
    DivergenceDetectedError,
    EmptyBranchError,
    GateRefusedError,
    HorizonTooShortError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidShiftError,
    NonConvergenceError,
    NotAnEigenvalueError,
    NumericFailureError,
    SideMissingError,
)
from .operator import (
    DiscreteOperator,
    GridDomain,
    Potential,
    SpectralSplit,
    SpectrumData,
    assemble_operator,
    build_domain,
    compute_spectrum,
    spectral_split,
)
from .semigroup import (
    FractionalScale,
    SemigroupAction,
    estimate_decay_constant,
    fractional_norm,
    semigroup_action,
)
from .nonlinearity import (
    Nonlinearity,
    SmallnessGate,
    check_gate,
    compute_F_mu,
    estimate_lipschitz,
    find_saturation_scale,
    landesman_lazer_margin,
    make_nonlinearity,
    nemitski,
)
from .manifold import (
    ManifoldMap,
    WeightedTrajectory,
    lyapunov_perron_apply,
    manifold_point,
    measure_contraction,
    solve_fixed_point,
    xi,
    xi_bound,
)
from .reduced import (
    AnnulusBounds,
    ReducedField,
    annulus_bounds,
    annulus_check,
    dissipative_radius,
    find_equilibria,
    integrate_reduced,
    reduced_constants,
    reduced_field,
)
from .pde import (
    elliptic_newton,
    evolve,
    gradient_energy,
    manifold_distance,
    stationary_residual,
    step_parabolic,
)
from .bifurcation import (
    BifurcationBranch,
    BifurcationProblem,
    BranchPoint,
    ThreeSolutionsReport,
    continue_branch,
    detect_blowup,
    index_signature,
    three_solutions,
)
from .config import ScenarioConfig, load_config

__version__ = "0.1.0"
