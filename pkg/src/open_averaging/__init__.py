"""Performance limits and simulation of intrinsic averaging in open multi-agent systems."""

from .bounds import (
    BoundMethod,
    BoundResult,
    QuadratureError,
    general_bound,
    ping_age_distribution,
    ping_bound,
    relaxed_bound,
)
from .core import (
    INFINITE_AGE,
    AgeDistribution,
    RngStream,
    SystemParams,
    ValueDistribution,
    rate_ratio,
    sample_value,
)
from .infection import (
    CTMCError,
    InfectionChain,
    bidiagonal_resolvent_apply,
    infection_age_cdf,
    infection_bound_algebraic,
    infection_bound_matrix,
    solve_pk,
    spreading_sum,
)
from .simulator import (
    Algorithm,
    MseEstimate,
    SimEvent,
    SimState,
    empirical_age_cdf,
    next_event,
    steady_state_mse,
)

__version__ = "0.1.0"
