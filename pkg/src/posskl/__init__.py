"""KL projections onto probability sets induced by possibility distributions."""

from posskl.antipignistic import (
    as_poss_vec,
    necessity_of_event,
    poss_to_prob,
    possibility_of_event,
    prob_to_poss,
)
from posskl.bregman import gap_root, project_atom, project_gap, project_subset
from posskl.dykstra import ProjectionReport, kl_project, stabilized_u
from posskl.feasible import (
    ConstraintAtom,
    ConstraintSet,
    FeasibleSet,
    LinearSystem,
    build_feasible_set,
    build_feasible_set_custom,
    build_generic_set,
    max_violation,
    shape_check,
    to_linear_system,
)
from posskl.simplex import (
    bregman_distance,
    kl_divergence,
    normalize,
    restrict_to_support,
)

__version__ = "0.1.0"
