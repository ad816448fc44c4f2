"""Shared parameter types, value sampling, RNG streams and age distributions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Age of information when nothing is known about a peer.
INFINITE_AGE = math.inf


class ValueDistribution(str, enum.Enum):
    """Zero-mean distributions for the intrinsic agent values."""

    NORMAL = "normal"
    TWO_POINT = "two-point"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class SystemParams:
    """Parameters of an open system of constant size.

    Parameters
    ----------
    n_agents : int
        Number of agents, at least 2.
    lambda_r : float
        Replacement rate of each agent.
    lambda_c : float
        Communication rate of each pair of agents.
    sigma_sq : float
        Variance of the agent values.
    value_dist : ValueDistribution
        Law of the agent values; always zero mean with variance ``sigma_sq``.
    """

    n_agents: int
    lambda_r: float
    lambda_c: float
    sigma_sq: float = 1.0
    value_dist: ValueDistribution = ValueDistribution.NORMAL

    def __post_init__(self):
        if isinstance(self.n_agents, bool) or int(self.n_agents) != self.n_agents:
            raise ValueError(f"n_agents must be an integer, got {self.n_agents!r}")
        object.__setattr__(self, "n_agents", int(self.n_agents))
        object.__setattr__(self, "value_dist", ValueDistribution(self.value_dist))
        if self.n_agents < 2:
            raise ValueError(f"n_agents must be >= 2, got {self.n_agents}")
        if not self.sigma_sq > 0:
            raise ValueError(f"sigma_sq must be > 0, got {self.sigma_sq}")
        if not self.lambda_r >= 0:
            raise ValueError(f"lambda_r must be >= 0, got {self.lambda_r}")
        if not self.lambda_c >= 0:
            raise ValueError(f"lambda_c must be >= 0, got {self.lambda_c}")
        if math.isinf(self.lambda_r) or math.isinf(self.lambda_c):
            raise ValueError("rates must be finite")

    @classmethod
    def from_ratio(cls, n_agents, ratio, lambda_r=1.0, sigma_sq=1.0,
                   value_dist=ValueDistribution.NORMAL):
        """Build parameters with ``lambda_c = ratio * lambda_r``."""
        return cls(n_agents, lambda_r, ratio * lambda_r, sigma_sq, value_dist)

    @property
    def n_pairs(self) -> int:
        return self.n_agents * (self.n_agents - 1) // 2

    @property
    def ceiling(self) -> float:
        """MSE of the best estimate that only knows its own value."""
        return (self.n_agents - 1) / self.n_agents**2 * self.sigma_sq

    @property
    def replacement_rate(self) -> float:
        """Total replacement rate of the system."""
        return self.n_agents * self.lambda_r

    @property
    def communication_rate(self) -> float:
        """Total communication rate of the system."""
        return self.n_pairs * self.lambda_c

    @property
    def event_rate(self) -> float:
        return self.replacement_rate + self.communication_rate


def rate_ratio(params: SystemParams) -> float:
    """Return ``lambda_c / lambda_r``."""
    if params.lambda_r == 0:
        raise ValueError("ratio undefined: lambda_r is 0")
    return params.lambda_c / params.lambda_r


def decay(lambda_r: float, age):
    """Probability that an agent survives ``age`` time units without replacement.

    Infinite ages map to exactly 0, also when ``lambda_r`` is 0.
    """
    age = np.asarray(age, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(age), 0.0, np.exp(-lambda_r * np.where(np.isinf(age), 0.0, age)))
    return out if out.ndim else float(out)


class RngStream:
    """Reproducible random stream for one replication.

    Streams are keyed by ``(master_seed, stream_index)`` plus an optional
    ``key`` tuple separating families of streams (e.g. sweep points). The
    draws only depend on the key, never on creation order.
    """

    def __init__(self, master_seed: int, stream_index: int = 0, key: tuple[int, ...] = ()):
        if master_seed < 0 or stream_index < 0:
            raise ValueError("seed and stream index must be non-negative")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=self.key + (self.stream_index,)
        )
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index}, key={self.key})"


def _generator(rng) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


def sample_value(params: SystemParams, rng, size=None):
    """Draw agent values with mean 0 and variance ``params.sigma_sq``.

    ``rng`` is an :class:`RngStream` or a numpy ``Generator``.
    """
    gen = _generator(rng)
    sigma = math.sqrt(params.sigma_sq)
    dist = params.value_dist
    if dist is ValueDistribution.NORMAL:
        return gen.normal(0.0, sigma, size)
    if dist is ValueDistribution.TWO_POINT:
        signs = gen.integers(0, 2, size) * 2 - 1
        return sigma * signs if size is not None else float(sigma * signs)
    if dist is ValueDistribution.UNIFORM:
        half_width = math.sqrt(3.0) * sigma
        return gen.uniform(-half_width, half_width, size)
    raise ValueError(f"unknown value distribution {dist!r}")


@dataclass(frozen=True)
class AgeDistribution:
    """Distribution of the age of the most recent information about a peer.

    ``cdf`` covers finite ages only; ``mass_at_infinity`` is the probability
    that nothing is known (age +inf), so ``cdf(s) -> 1 - mass_at_infinity``.
    Beyond ``tail_cutoff`` the remaining finite mass is below ``tail_mass``.

    ``survival``, when given, must return ``1 - mass_at_infinity - cdf(s)``
    computed without cancellation.
    """

    cdf: Callable
    pdf: Callable | None = None
    tail_cutoff: float = 0.0
    mass_at_infinity: float = 0.0
    survival: Callable | None = None
    tail_mass: float = 0.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not 0.0 <= self.mass_at_infinity <= 1.0:
            raise ValueError("mass_at_infinity must lie in [0, 1]")
        if not self.tail_cutoff >= 0 or math.isinf(self.tail_cutoff):
            raise ValueError("tail_cutoff must be finite and >= 0")

    def finite_survival(self, s):
        """Finite-age mass above ``s``."""
        if self.survival is not None:
            return self.survival(s)
        return np.maximum((1.0 - self.mass_at_infinity) - np.asarray(self.cdf(s)), 0.0)

    @classmethod
    def point_mass(cls, age: float) -> "AgeDistribution":
        """All ages equal to ``age``; ``math.inf`` means nothing is ever known."""
        if math.isinf(age):
            return cls(cdf=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
                       mass_at_infinity=1.0, name="never-informed")
        if age < 0:
            raise ValueError("age must be >= 0")
        return cls(cdf=lambda s: (np.asarray(s, dtype=float) >= age).astype(float),
                   tail_cutoff=float(age), name=f"point-mass({age})")

    @classmethod
    def exponential(cls, rate: float, tail_mass: float = 1e-16) -> "AgeDistribution":
        """Exponential ages; ``rate == 0`` puts all mass at infinity."""
        if rate < 0:
            raise ValueError("rate must be >= 0")
        if rate == 0:
            return cls.point_mass(math.inf)
        return cls(
            cdf=lambda s: -np.expm1(-rate * np.asarray(s, dtype=float)),
            pdf=lambda s: rate * np.exp(-rate * np.asarray(s, dtype=float)),
            survival=lambda s: np.exp(-rate * np.asarray(s, dtype=float)),
            tail_cutoff=-math.log(tail_mass) / rate,
            tail_mass=tail_mass,
            name=f"exponential({rate:g})",
        )

    @classmethod
    def empirical(cls, ages) -> "AgeDistribution":
        """Step CDF of observed ages; infinite ages count as mass at infinity."""
        ages = np.asarray(ages, dtype=float).ravel()
        if ages.size == 0:
            raise ValueError("no age samples")
        finite = np.sort(ages[np.isfinite(ages)])
        n = ages.size
        tail = float(finite[-1]) if finite.size else 0.0

        def cdf(s):
            return np.searchsorted(finite, np.asarray(s, dtype=float), side="right") / n

        return cls(cdf=cdf, tail_cutoff=tail, mass_at_infinity=(n - finite.size) / n,
                   name="empirical")
