"""Lower bounds on the steady-state MSE of intrinsic averaging.

The generic bound integrates the error of the optimal estimator,
``1 - exp(-2 lambda_r t)``, against an age distribution that is at least as
fresh as the true one. The Ping model (every communication brings fresh
information on everybody) gives an exponential age and a closed form.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

from scipy import integrate

from .core import AgeDistribution, SystemParams

DEFAULT_RTOL = 1e-8


class BoundMethod(str, enum.Enum):
    PING = "ping"
    INFECTION_MATRIX = "infection-matrix"
    INFECTION_ALGEBRAIC = "infection-algebraic"
    RELAXED = "relaxed"
    GENERIC_QUADRATURE = "generic-quadrature"


@dataclass(frozen=True)
class BoundResult:
    """A lower bound on the steady-state expected MSE.

    ``error`` is an upper estimate of the absolute numerical error (0 for
    closed forms). ``warning`` is set when the value is a limit taken at
    ``lambda_r = 0`` rather than a direct evaluation.
    """

    value: float
    method: BoundMethod
    params: SystemParams
    error: float = 0.0
    warning: str | None = None

    def __float__(self):
        return float(self.value)


class QuadratureError(RuntimeError):
    """Raised when the bound integral misses its tolerance."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


def _no_replacement_limit(params: SystemParams, method: BoundMethod) -> BoundResult:
    # Without replacements every bound collapses to 0, unless nobody talks.
    if params.lambda_c == 0:
        raise ValueError("indeterminate: lambda_r and lambda_c are both 0")
    msg = "lambda_r = 0: returning the analytic limit 0"
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return BoundResult(0.0, method, params, warning=msg)


def ping_age_distribution(params: SystemParams) -> AgeDistribution:
    """Age of information when every communication refreshes everything.

    The age is the time since the agent's own last communication, which is
    exponential with rate ``(N - 1) * lambda_c``. With ``lambda_c = 0`` the
    age is infinite almost surely.
    """
    return AgeDistribution.exponential((params.n_agents - 1) * params.lambda_c)


def _segments(cutoff: float, decades: int = 12):
    # Geometric breakpoints so that fast transients near 0 are resolved.
    if cutoff <= 0:
        return []
    edges = [0.0] + [cutoff * 10.0 ** -k for k in range(decades, 0, -1)] + [cutoff]
    return list(zip(edges[:-1], edges[1:]))


def general_bound(params: SystemParams, age: AgeDistribution,
                  rtol: float = DEFAULT_RTOL) -> BoundResult:
    """Bound the MSE from any age distribution that dominates the true one.

    Computes ``(N-1)/N^2 * sigma^2 * E[1 - exp(-2 lambda_r T)]`` where ``T``
    follows ``age``. Mass at infinite age contributes weight 1 exactly. The
    finite part is integrated on ``[0, age.tail_cutoff]`` with adaptive
    Gauss-Kronrod, against the pdf when available and otherwise against the
    survival function (integration by parts). The neglected tail is bounded
    and folded into ``error``.

    Raises
    ------
    QuadratureError
        If the estimated error exceeds ``rtol`` times the value.
    """
    beta = 2.0 * params.lambda_r
    scale = params.ceiling
    infinite_part = age.mass_at_infinity

    if beta == 0:
        value = scale * infinite_part
        return BoundResult(value, BoundMethod.GENERIC_QUADRATURE, params)

    cutoff = age.tail_cutoff
    if age.pdf is not None:
        pdf = age.pdf

        def integrand(t):
            return float(pdf(t)) * -math.expm1(-beta * t)

        tail = float(age.finite_survival(cutoff)) if cutoff > 0 else 0.0
    else:
        surv = age.finite_survival

        def integrand(t):
            return beta * math.exp(-beta * t) * float(surv(t))

        tail = math.exp(-beta * cutoff) * float(surv(cutoff))

    total = 0.0
    abserr = 0.0
    for a, b in _segments(cutoff):
        res, err, *_ = integrate.quad(integrand, a, b, epsabs=1e-300, epsrel=1e-12,
                                      limit=200, full_output=1)
        total += res
        abserr += err

    value = scale * (infinite_part + total)
    error = scale * (abserr + tail)
    if error > rtol * abs(value) and error > 0:
        raise QuadratureError("bound integral did not reach tolerance", value, error)
    return BoundResult(value, BoundMethod.GENERIC_QUADRATURE, params, error=error)


def ping_bound(params: SystemParams) -> BoundResult:
    """Closed-form bound of the Ping model.

    ``(N-1)/N^2 * sigma^2 / (1 + (N-1)/2 * lambda_c/lambda_r)``
    """
    if params.lambda_r == 0:
        return _no_replacement_limit(params, BoundMethod.PING)
    n = params.n_agents
    ratio = params.lambda_c / params.lambda_r
    value = params.ceiling / (1.0 + 0.5 * (n - 1) * ratio)
    return BoundResult(value, BoundMethod.PING, params)


def relaxed_bound(params: SystemParams) -> BoundResult:
    """Ping bound inflated by a logarithmic factor.

    ``ping * (1 + 0.5 * log((1 + (N-2) L) / (1 + L)))`` with ``L`` the rate
    ratio. This is an empirically supported bound, not a proven one. For
    ``N = 2`` the correction comes from an empty sum and is taken as 0, so
    the expression reduces to the Ping bound.
    """
    if params.lambda_r == 0:
        return _no_replacement_limit(params, BoundMethod.RELAXED)
    n = params.n_agents
    ratio = params.lambda_c / params.lambda_r
    ping = params.ceiling / (1.0 + 0.5 * (n - 1) * ratio)
    if n == 2:
        return BoundResult(ping, BoundMethod.RELAXED, params)
    log_factor = 1.0 + 0.5 * (math.log1p((n - 2) * ratio) - math.log1p(ratio))
    return BoundResult(ping * log_factor, BoundMethod.RELAXED, params)


def bound_ceiling(params: SystemParams) -> float:
    """Largest possible bound, reached when agents never communicate."""
    return params.ceiling


__all__ = [
    "BoundMethod",
    "BoundResult",
    "QuadratureError",
    "bound_ceiling",
    "general_bound",
    "ping_age_distribution",
    "ping_bound",
    "relaxed_bound",
]

