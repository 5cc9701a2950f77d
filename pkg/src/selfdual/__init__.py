"""Self-dual polar factorization of sampled vector fields.

Factor u(x) = grad1 H(S(x), x) at grid scale: S a measure preserving
involution of equal-measure cells, H an anti-symmetric convex-concave
Hamiltonian obtained by restricted conjugation of an optimal kernel.
"""

from .conjugacy import (
    RegularHamiltonian,
    ball_hamiltonian,
    grad1,
    grad2,
    lagrangian,
    lagrangian_at_field,
    regularize,
    restricted_bidual,
    restricted_dual,
)
from .domain import (
    AntiSymmetricKernel,
    BallRadius,
    DiscreteDomain,
    DualPointSet,
    Involution,
    SampledField,
    ball_radius,
    build_dual_points,
    build_grid,
    compose_check,
    interval_grid,
    make_kernel,
    sample_field,
    symmetric_square_grid,
)
from .dual_solver import (
    DualSolution,
    PairWeightMatrix,
    build_weights,
    distance_objective,
    dual_objective,
    lp_bound,
    refine_local,
    solve_brute,
    solve_matching,
)
from .factorize import (
    DecompositionReport,
    PipelineConfig,
    check_monotone,
    check_uniqueness,
    decompose,
    krauss_check,
    second_identity_check,
    selfdual_test,
)
from .primal_solver import (
    PrimalConfig,
    PrimalSolution,
    minimize_primal,
    primal_objective,
    recover_involution,
    weak_duality,
)
from .transport import (
    PairMeasure,
    build_pair_measures,
    parametrize_map,
    transport_cost,
)

__version__ = "0.1.0"
