"""Classical simulation of QAOA with Gauss-law preserving mixers on flow problems."""

from ._kernels import backend
from .errors import (
    BasisMismatchError,
    ConfigValidationError,
    FlowRangeError,
    InfeasibilityError,
    InvalidArgument,
    InvalidBasisError,
    InvalidCombinationError,
    NoPathError,
    NotInBasisError,
    NumericalError,
    PreconditionViolation,
    QedQaoaError,
    ResourceCapError,
)
from .graph import (
    EDP,
    SSSP,
    Commodity,
    FlowNetwork,
    GraphFamily,
    ProblemInstance,
    build_grid,
    build_triangle_chain,
    classical_cost,
    is_feasible,
    random_instance,
    seed_path,
)
from .hilbert import ConfigBasis, FeasibleBasis, StateVector, enumerate_feasible, full_basis
from .operators import cost_hamiltonian, feasible_projector, penalty_hamiltonian, qed_mixer, x_mixer
from .dynamics import EvolutionConfig, Propagator, evolve, ground_state
from .prep import PrepStrategy, prepare_initial, saturation_scan
from .qaoa import OptimizerConfig, QaoaSchedule, aar, optimize
from .duality import apply_heights, dual_heights, path_transform

__version__ = "0.1.0"
