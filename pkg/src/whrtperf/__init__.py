"""l2-performance certification and state-feedback synthesis for linear
discrete-time loops whose control inputs are lost under weakly-hard
window constraints."""

from .constraints import (
    Kind,
    WhrtConstraint,
    enumerate_admissible,
    is_harder,
    parse_constraint,
    satisfies,
)
from .graph import (
    NodeTracker,
    WhrtGraph,
    build_graph,
    build_lifted_graph,
    export_dot,
    generates,
    minimize,
    unlift,
)
from .lmi import (
    AnalysisCertificate,
    Infeasible,
    SynthesisResult,
    analyze_lifted,
    analyze_nonlifted,
    evaluate_lyapunov,
    synthesize,
    verify_certificate,
)
from .sim import (
    SimulationTrace,
    empirical_gain,
    random_admissible,
    simulate,
    worst_case_search,
)
from .systems import (
    LiftedFamily,
    Plant,
    Strategy,
    closed_loop,
    lift,
    lift_sequences,
    lifted_closed_loop,
)

__version__ = "0.1.0"
