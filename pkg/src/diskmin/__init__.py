"""diskmin: time-minimal extremals of 4D affine systems with disk control.

Propagates Pontryagin extremals z = (x, p) of

    dx/dt = F0(x) + u1 F1(x) + u2 F2(x),   |u| <= 1,

under the maximizing control u = (H1, H2)/rho, detects and crosses
transversal switches on {H1 = H2 = 0}, transports Jacobi fields across the
switch jump, and evaluates the second-order determinant test along with the
piecewise-smooth structure of the time map.
"""

from .errors import (
    AssumptionViolated,
    ConfigError,
    DiskminError,
    EvaluationError,
    NewtonDivergence,
    NonTransversalCrossing,
    SigmaPlusEncounter,
    SingularControl,
    SingularJacobian,
    StepSizeUnderflow,
)
from .tolerances import DEFAULT_TOL, Tolerances
from .systems import (
    AffineSystem,
    bracket_frame,
    check_a1,
    get_system,
    lie_bracket,
    list_systems,
    make_nilpotent_kepler,
    register_system,
    validate_jacobians,
)
from .hamiltonian import (
    ExtremalPoint,
    HamiltonianData,
    SigmaClass,
    classify_sigma,
    hmax,
    lifts,
    optimal_control,
    switch_controls,
    switching_drift,
)
from .flow import (
    Extremal,
    ExtremalArc,
    NearMiss,
    ProjectionResult,
    StratumResult,
    SwitchEvent,
    detect_switch,
    integrate_smooth_arc,
    project_to_stable_manifold,
    propagate_extremal,
    stratum_of,
)
from .jacobi import (
    JacobiField,
    JacobiProfile,
    TheoremVerdict,
    TransversalityCertificate,
    check_theorem3,
    det_m_profile,
    fiber_stable_basis,
    level_fiber_basis,
    profile_to_csv,
    propagate_jacobi,
    smooth_conjugate_test,
    switch_jump,
    switch_jump_matrix,
    transition_matrix,
    variational_matrix,
    verdict_to_json,
)
from .shooting import (
    ShootResult,
    TfMapResult,
    TfMapRow,
    shoot,
    tf_map_sample,
)
from .backends import active_backend

__version__ = "0.1.0"

__all__ = [
    "AffineSystem",
    "AssumptionViolated",
    "ConfigError",
    "DEFAULT_TOL",
    "DiskminError",
    "EvaluationError",
    "Extremal",
    "ExtremalArc",
    "ExtremalPoint",
    "HamiltonianData",
    "JacobiField",
    "JacobiProfile",
    "NearMiss",
    "NewtonDivergence",
    "NonTransversalCrossing",
    "ProjectionResult",
    "ShootResult",
    "SigmaClass",
    "SigmaPlusEncounter",
    "SingularControl",
    "SingularJacobian",
    "StepSizeUnderflow",
    "StratumResult",
    "SwitchEvent",
    "TfMapResult",
    "TfMapRow",
    "TheoremVerdict",
    "Tolerances",
    "TransversalityCertificate",
    "active_backend",
    "bracket_frame",
    "check_a1",
    "check_theorem3",
    "classify_sigma",
    "det_m_profile",
    "detect_switch",
    "fiber_stable_basis",
    "get_system",
    "hmax",
    "integrate_smooth_arc",
    "level_fiber_basis",
    "lie_bracket",
    "lifts",
    "list_systems",
    "make_nilpotent_kepler",
    "optimal_control",
    "profile_to_csv",
    "project_to_stable_manifold",
    "propagate_extremal",
    "propagate_jacobi",
    "register_system",
    "shoot",
    "smooth_conjugate_test",
    "stratum_of",
    "switch_controls",
    "switch_jump",
    "switch_jump_matrix",
    "switching_drift",
    "tf_map_sample",
    "transition_matrix",
    "validate_jacobians",
    "variational_matrix",
    "verdict_to_json",
    "__version__",
]
