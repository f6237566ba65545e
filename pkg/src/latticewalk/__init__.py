"""Translation-invariant quantum walks with random coins on integer lattices.

``latticewalk`` represents quantum walks -- unitary or driven by a Markov
chain of Kraus families -- in momentum space, simulates them exactly at
finite times, and computes their asymptotic position statistics in both
ballistic and diffusive scaling.

The package is organised in five layers:

``latticewalk.trigpoly``
    Matrix-valued trigonometric polynomials ``W(p) = sum_x C_x e^{i p.x}``,
    the momentum-space form of banded translation-invariant lattice
    operators, with evaluation, differentiation, products, normalization
    checks and winding-number computation.

``latticewalk.models``
    Concrete walk builders: SU(2) coined walks in one dimension, a
    two-dimensional coined walk, Markov-controlled random-coin models,
    scalar Kraus families, and momentum-shift (electric) walks, plus
    initial states localized in position or given in momentum space.

``latticewalk.simulate``
    Exact finite-time evolution on periodic grids via FFT: pure unitary
    evolution, trajectory sampling of Markov-controlled walks, scalar
    density evolution, and closed-form moment recursions.

``latticewalk.spectral``
    Asymptotics of unitary walks from their dispersion relation:
    eigenvalue bands, group velocities, weak-limit ballistic densities
    (histogram and Jacobian routes), caustics, and a first-order finite-time
    correction for the Hadamard walk.

``latticewalk.perturb``
    Asymptotics of random walks from perturbation theory of the
    momentum-space transition operator: ballistic velocity, diffusion
    matrices, Gaussian and next-order limit densities, and special-case
    routes for commuting Kraus families and momentum-shift walks.

A command-line interface (``latticewalk``) exposes the main computations
on walk descriptions stored in JSON files.
"""

from .trigpoly import (
    TrigPolyMatrix,
    NormalizationReport,
    check_unitary,
    check_kraus_normalization,
    index,
)
from .models import (
    ControlProcess,
    MarkovWalkModel,
    InitialState,
    MomentumShiftModel,
    su2_coin,
    shift_1d,
    coin_shift_walk_1d,
    hadamard_walk,
    reflection_walk,
    walk_2d,
    hadamard_reflection_model,
    dephased_hadamard_model,
    scalar_kraus_model,
    symmetrized_pair,
    momentum_shift_model,
    random_walk_model,
)
from .simulate import (
    PositionDistribution,
    evolve_unitary,
    simulate_markov,
    evolve_density_scalar,
    markov_exact_moments,
    moments,
)
from .spectral import (
    DispersionData,
    BallisticDensity,
    CausticPoint,
    dispersion,
    group_velocity,
    ballistic_density_unitary,
    jacobian_density_1d,
    caustics,
    hadamard_correction,
)
from .perturb import (
    TransitionOperator,
    InvariantState,
    AssumptionReport,
    FirstOrderResult,
    PerturbationReport,
    ComplexVarianceWarning,
    CommutingVelocityField,
    MomentumShiftAsymptotics,
    build_transition,
    check_assumptions,
    invariant_state,
    ballistic_velocity,
    mean_index_velocity,
    first_order,
    perturbation_report,
    diffusion_matrix,
    bernoulli_diffusion,
    gaussian_limit_density,
    next_order_cf,
    next_order_density,
    scalar_velocity,
    commuting_kraus_velocity,
    momentum_shift_asymptotics,
)

__version__ = "0.1.0"

__all__ = [
    "TrigPolyMatrix",
    "NormalizationReport",
    "check_unitary",
    "check_kraus_normalization",
    "index",
    "ControlProcess",
    "MarkovWalkModel",
    "InitialState",
    "MomentumShiftModel",
    "su2_coin",
    "shift_1d",
    "coin_shift_walk_1d",
    "hadamard_walk",
    "reflection_walk",
    "walk_2d",
    "hadamard_reflection_model",
    "dephased_hadamard_model",
    "scalar_kraus_model",
    "symmetrized_pair",
    "momentum_shift_model",
    "random_walk_model",
    "PositionDistribution",
    "evolve_unitary",
    "simulate_markov",
    "evolve_density_scalar",
    "markov_exact_moments",
    "moments",
    "DispersionData",
    "BallisticDensity",
    "CausticPoint",
    "dispersion",
    "group_velocity",
    "ballistic_density_unitary",
    "jacobian_density_1d",
    "caustics",
    "hadamard_correction",
    "TransitionOperator",
    "InvariantState",
    "AssumptionReport",
    "FirstOrderResult",
    "PerturbationReport",
    "ComplexVarianceWarning",
    "CommutingVelocityField",
    "MomentumShiftAsymptotics",
    "build_transition",
    "check_assumptions",
    "invariant_state",
    "ballistic_velocity",
    "mean_index_velocity",
    "first_order",
    "perturbation_report",
    "diffusion_matrix",
    "bernoulli_diffusion",
    "gaussian_limit_density",
    "next_order_cf",
    "next_order_density",
    "scalar_velocity",
    "commuting_kraus_velocity",
    "momentum_shift_asymptotics",
    "__version__",
]
