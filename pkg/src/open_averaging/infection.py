"""Infection-model bounds.

Ignoring replacements, the information emitted by an agent spreads like an
SI epidemic on the complete graph. The number of informed agents is a pure
birth chain on ``{1, ..., N}`` whose generator ``A`` is lower bidiagonal:
``A[i, i] = -i (N - i) lambda_c`` and ``A[i+1, i] = i (N - i) lambda_c``
(1-based). A given peer is informed with probability ``(k - 1) / (N - 1)``
when ``k`` agents are, which gives the age CDF ``w^T exp(A s) e_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .bounds import BoundMethod, BoundResult, _no_replacement_limit
from .core import AgeDistribution, SystemParams

ODE_RTOL = 1e-12
ODE_ATOL = 1e-16
CONSERVATION_TOL = 1e-9
NEGATIVITY_TOL = 1e-12
TAIL_MASS = 1e-13


class CTMCError(RuntimeError):
    """The ODE solution of the infection chain failed its accuracy checks."""


@dataclass(frozen=True)
class InfectionChain:
    """Birth chain counting informed agents.

    Index ``k`` of the vectors corresponds to ``k + 1`` informed agents.
    """

    n_agents: int
    lambda_c: float
    generator_diag: np.ndarray = field(init=False, repr=False, compare=False)
    generator_sub: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n_agents)
        if n < 2:
            raise ValueError("n_agents must be >= 2")
        if not self.lambda_c >= 0:
            raise ValueError("lambda_c must be >= 0")
        i = np.arange(1, n + 1, dtype=float)
        rates = i * (n - i) * self.lambda_c
        object.__setattr__(self, "n_agents", n)
        object.__setattr__(self, "generator_diag", -rates)
        object.__setattr__(self, "generator_sub", rates[:-1].copy())
        object.__setattr__(self, "weights", (i - 1) / (n - 1))
        for name in ("generator_diag", "generator_sub", "weights"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_params(cls, params: SystemParams) -> "InfectionChain":
        return cls(params.n_agents, params.lambda_c)

    @property
    def spreading_rates(self) -> np.ndarray:
        """Rate of leaving each state, ``i (N - i) lambda_c``."""
        return -self.generator_diag

    def matrix(self) -> np.ndarray:
        """Dense generator; intended for checks on small chains."""
        return np.diag(self.generator_diag) + np.diag(self.generator_sub, -1)

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Return ``A @ p`` for a vector or for columns of a 2-D array."""
        out = self.generator_diag[:, None] * p if p.ndim == 2 else self.generator_diag * p
        out[1:] += (self.generator_sub[:, None] * p[:-1]) if p.ndim == 2 else self.generator_sub * p[:-1]
        return out

    def mean_absorption_time(self) -> float:
        """Expected time until every agent is informed."""
        if self.lambda_c == 0:
            return math.inf
        return float(np.sum(1.0 / self.spreading_rates[:-1]))


def _check_probabilities(p: np.ndarray) -> np.ndarray:
    total = p.sum(axis=0)
    drift = np.max(np.abs(total - 1.0))
    if drift > CONSERVATION_TOL:
        raise CTMCError(f"probability not conserved: max |sum P - 1| = {drift:.3e}")
    low = p.min()
    if low < -NEGATIVITY_TOL:
        raise CTMCError(f"negative probability {low:.3e}")
    return np.maximum(p, 0.0)


def _integrate(chain: InfectionChain, t_end: float, t_eval=None, dense=False):
    p0 = np.zeros(chain.n_agents)
    p0[0] = 1.0
    sol = solve_ivp(
        lambda t, p: chain.apply(p),
        (0.0, t_end),
        p0,
        method="DOP853",
        t_eval=t_eval,
        dense_output=dense,
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
        vectorized=True,
    )
    if not sol.success:
        raise CTMCError(f"ODE integration failed: {sol.message}")
    return sol


def solve_pk(chain: InfectionChain, s):
    """Probabilities of having ``k = 1..N`` informed agents after time ``s``.

    Integrates ``dP/ds = A P`` from ``P(0) = e_1`` with an adaptive
    Runge-Kutta scheme (DOP853). Returns a vector of length ``N`` for scalar
    ``s`` and an array of shape ``(len(s), N)`` otherwise.

    Raises
    ------
    CTMCError
        If the solution loses probability mass beyond 1e-9 or has entries
        below -1e-12.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0) or not np.all(np.isfinite(s_arr)):
        raise ValueError("times must be finite and >= 0")
    order = np.argsort(s_arr)
    t_sorted = s_arr[order]
    n = chain.n_agents
    out = np.zeros((s_arr.size, n))
    positive = t_sorted > 0
    out_sorted = np.zeros((s_arr.size, n))
    out_sorted[~positive, 0] = 1.0
    if positive.any() and chain.lambda_c > 0:
        sol = _integrate(chain, t_sorted[-1], t_eval=t_sorted[positive])
        out_sorted[positive] = _check_probabilities(sol.y).T
    elif positive.any():
        out_sorted[positive, 0] = 1.0
    out[order] = out_sorted
    return out[0] if np.ndim(s) == 0 else out


class _InfectionCurves:
    """Dense ODE solution with cdf, pdf and survival evaluators."""

    def __init__(self, chain: InfectionChain, tail_mass: float = TAIL_MASS):
        self.chain = chain
        n = chain.n_agents
        k = np.arange(1, n + 1, dtype=float)
        self.w = chain.weights
        self.w_complement = (n - k) / (n - 1)
        # w^T A collapses to k (N - k) lambda_c / (N - 1); nonnegative.
        self.w_a = chain.spreading_rates / (n - 1)

        horizon = chain.mean_absorption_time() + 30.0 / ((n - 1) * chain.lambda_c)
        for _ in range(60):
            self.sol = _integrate(chain, horizon, dense=True)
            end = _check_probabilities(self.sol.y[:, -1:])[:, 0]
            if self.w_complement @ end < tail_mass:
                break
            horizon *= 2.0
        else:
            raise CTMCError("could not reach the tail tolerance")
        self.horizon = horizon

    def probabilities(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        p = np.empty((self.chain.n_agents, s.size))
        inside = s <= self.horizon
        if inside.any():
            p[:, inside] = self.sol.sol(s[inside])
        if (~inside).any():
            p[:, ~inside] = solve_pk(self.chain, s[~inside]).T
        return _check_probabilities(p)

    def _evaluate(self, weights, s):
        values = weights @ self.probabilities(s)
        return values[0] if np.ndim(s) == 0 else values

    def cdf(self, s):
        return self._evaluate(self.w, s)

    def pdf(self, s):
        return self._evaluate(self.w_a, s)

    def survival(self, s):
        return self._evaluate(self.w_complement, s)


def infection_age_cdf(chain: InfectionChain) -> AgeDistribution:
    """Age distribution of the Infection model.

    With ``lambda_c = 0`` nothing spreads and the age is infinite.
    """
    if chain.lambda_c == 0:
        return AgeDistribution.point_mass(math.inf)
    curves = _InfectionCurves(chain)
    return AgeDistribution(
        cdf=curves.cdf,
        pdf=curves.pdf,
        survival=curves.survival,
        tail_cutoff=curves.horizon,
        tail_mass=TAIL_MASS,
        name=f"infection(N={chain.n_agents}, lambda_c={chain.lambda_c:g})",
    )


def forward_substitute_bidiagonal(diag, sub, rhs) -> np.ndarray:
    """Solve ``M x = rhs`` for lower bidiagonal ``M`` by forward substitution.

    ``diag`` holds ``M[i, i]`` and ``sub`` holds ``M[i+1, i]``.
    """
    diag = np.asarray(diag, dtype=float)
    sub = np.asarray(sub, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    x = np.empty_like(rhs)
    x[0] = rhs[0] / diag[0]
    for i in range(1, diag.size):
        x[i] = (rhs[i] - sub[i - 1] * x[i - 1]) / diag[i]
    return x


def _resolvent_column(chain: InfectionChain, beta: float) -> np.ndarray:
    # (beta I - A) x = e_1
    rhs = np.zeros(chain.n_agents)
    rhs[0] = 1.0
    return forward_substitute_bidiagonal(beta - chain.generator_diag, -chain.generator_sub, rhs)


def bidiagonal_resolvent_apply(chain: InfectionChain, beta: float) -> float:
    """Return ``w^T A (beta I - A)^{-1} e_1`` in O(N).

    Uses ``A (beta I - A)^{-1} = beta (beta I - A)^{-1} - I`` so only the
    first column of the resolvent is needed.
    """
    if not beta > 0:
        raise ValueError(f"resolvent undefined for beta={beta}")
    x = _resolvent_column(chain, beta)
    e1 = np.zeros(chain.n_agents)
    e1[0] = 1.0
    return float(chain.weights @ (beta * x - e1))


def infection_bound_matrix(params: SystemParams) -> BoundResult:
    """Infection-model bound from the bidiagonal resolvent.

    ``(N-1)/N^2 * (1 - w^T A (2 lambda_r I - A)^{-1} e_1) * sigma^2``
    """
    if params.lambda_r == 0:
        return _no_replacement_limit(params, BoundMethod.INFECTION_MATRIX)
    chain = InfectionChain.from_params(params)
    informed = bidiagonal_resolvent_apply(chain, 2.0 * params.lambda_r)
    return BoundResult(params.ceiling * (1.0 - informed), BoundMethod.INFECTION_MATRIX, params)


def spreading_sum(n_agents: int, ratio: float) -> float:
    """Weighted sum of partial products appearing in the algebraic bound.

    ``sum_{k=2}^{N} (k-1)/(N-1) prod_{j=1}^{k-1} j(N-j)L / (2 + (j+1)(N-j-1)L)``
    """
    n = int(n_agents)
    total = 0.0
    product = 1.0
    for k in range(2, n + 1):
        j = k - 1
        product *= j * (n - j) * ratio / (2.0 + (j + 1) * (n - j - 1) * ratio)
        total += (k - 1) / (n - 1) * product
    return total


def infection_bound_algebraic(params: SystemParams) -> BoundResult:
    """Infection-model bound in product-sum form; equal to the matrix form."""
    if params.lambda_r == 0:
        return _no_replacement_limit(params, BoundMethod.INFECTION_ALGEBRAIC)
    n = params.n_agents
    ratio = params.lambda_c / params.lambda_r
    value = params.ceiling * (1.0 - spreading_sum(n, ratio) / (1.0 + 0.5 * (n - 1) * ratio))
    return BoundResult(value, BoundMethod.INFECTION_ALGEBRAIC, params)
