"""Monte Carlo simulation of an open system with replacements.

Every agent is replaced at rate ``lambda_r`` (new value, memory erased) and
every pair communicates at rate ``lambda_c``. Two estimators run on the same
trajectory:

* gossip: pairwise averaging of a single scalar per agent;
* optimal: each agent keeps the most recent (value, timestamp) it knows for
  every peer and reports ``(1/N) sum_j exp(-lambda_r * age_j) * value_j``.

Replications draw their whole event sequence from their own
:class:`~open_averaging.core.RngStream` first, then a batch of replications
is advanced in lockstep with numpy. Results therefore do not depend on the
batch size or on how batches are spread over worker processes.
"""

from __future__ import annotations

import enum
import functools
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import INFINITE_AGE, AgeDistribution, RngStream, SystemParams, decay, sample_value

# A fresh start followed by 200 events is enough for N = 10 agents at
# lambda_c = lambda_r; other settings keep the same simulated time span.
REFERENCE_EVENTS = 200
REFERENCE_EVENTS_PER_REPLACEMENT_TIME = 10 * (1 + 9 / 2)

CHUNK_SIZE = 1000


class Algorithm(str, enum.Enum):
    GOSSIP = "gossip"
    OPTIMAL = "optimal"


class EventKind(str, enum.Enum):
    REPLACEMENT = "replacement"
    COMMUNICATION = "communication"


@dataclass(frozen=True)
class SimEvent:
    """A replacement of ``agent`` or a communication between ``agent < peer``."""

    time: float
    kind: EventKind
    agent: int
    peer: int = -1


@dataclass(frozen=True)
class MseEstimate:
    mean: float
    std_error: float
    n_replications: int
    algorithm: Algorithm
    params: SystemParams
    n_events: int
    seed: int


@dataclass(frozen=True)
class EventSequence:
    """Pre-drawn randomness of one replication.

    ``times`` has one more entry than the events: the last one is the
    observation instant, where the next event would have happened.
    ``second`` is -1 for replacements. ``new_values`` is used only at
    replacements.
    """

    initial_values: np.ndarray
    times: np.ndarray
    is_replacement: np.ndarray
    first: np.ndarray
    second: np.ndarray
    new_values: np.ndarray

    @property
    def n_events(self) -> int:
        return self.is_replacement.size

    def events(self):
        for k in range(self.n_events):
            if self.is_replacement[k]:
                yield SimEvent(float(self.times[k]), EventKind.REPLACEMENT, int(self.first[k]))
            else:
                yield SimEvent(float(self.times[k]), EventKind.COMMUNICATION,
                               int(self.first[k]), int(self.second[k]))


@functools.lru_cache(maxsize=64)
def _pairs(n: int):
    i, j = np.triu_indices(n, 1)
    i, j = i.astype(np.intp), j.astype(np.intp)
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


def _replacement_probability(params: SystemParams) -> float:
    rate = params.event_rate
    if rate == 0:
        raise ValueError("no dynamics: replacement and communication rates are both 0")
    return params.replacement_rate / rate


def next_event(params: SystemParams, rng, now: float) -> SimEvent:
    """Draw the next event of the merged Poisson process after ``now``."""
    p_rep = _replacement_probability(params)
    gen = rng.generator if isinstance(rng, RngStream) else rng
    time = now + gen.exponential(1.0 / params.event_rate)
    if gen.random() < p_rep:
        return SimEvent(time, EventKind.REPLACEMENT, int(gen.integers(params.n_agents)))
    i, j = _pairs(params.n_agents)
    pair = int(gen.integers(params.n_pairs))
    return SimEvent(time, EventKind.COMMUNICATION, int(i[pair]), int(j[pair]))


def draw_events(params: SystemParams, rng, n_events: int) -> EventSequence:
    """Draw the initial values and ``n_events`` events of one replication."""
    p_rep = _replacement_probability(params)
    gen = rng.generator if isinstance(rng, RngStream) else rng
    n = params.n_agents
    initial = np.asarray(sample_value(params, gen, n), dtype=float)
    times = np.cumsum(gen.exponential(1.0 / params.event_rate, n_events + 1))
    is_rep = gen.random(n_events) < p_rep
    agent = gen.integers(0, n, n_events)
    pair = gen.integers(0, params.n_pairs, n_events)
    new_values = np.asarray(sample_value(params, gen, n_events), dtype=float)
    pi, pj = _pairs(n)
    first = np.where(is_rep, agent, pi[pair])
    second = np.where(is_rep, -1, pj[pair])
    return EventSequence(initial, times, is_rep, first, second, new_values)


# --- single replication -------------------------------------------------


@dataclass
class SimState:
    """State of one replication.

    ``known_values[i, j]`` and ``known_times[i, j]`` hold the most recent
    value of ``j`` known by ``i`` and the time it was emitted; an absent
    entry has time ``-inf`` (infinite age) and value 0. The diagonal is
    the agent's own value; its timestamp is only meaningful as "now".
    """

    values: np.ndarray
    gossip_estimates: np.ndarray
    known_values: np.ndarray
    known_times: np.ndarray
    clock: float = 0.0

    @classmethod
    def fresh(cls, values, clock: float = 0.0) -> "SimState":
        values = np.array(values, dtype=float)
        n = values.size
        known_times = np.full((n, n), -np.inf)
        np.fill_diagonal(known_times, clock)
        return cls(values, values.copy(), np.diag(values), known_times, clock)

    @property
    def n_agents(self) -> int:
        return self.values.size

    def ages(self, now: float | None = None) -> np.ndarray:
        """Age of the information of ``i`` about ``j``; 0 on the diagonal."""
        now = self.clock if now is None else now
        ages = now - self.known_times
        np.fill_diagonal(ages, 0.0)
        return ages

    def n_known(self, agent: int) -> int:
        return int(np.count_nonzero(np.isfinite(self.known_times[agent])))


def apply_replacement(state: SimState, agent: int, params: SystemParams | None = None,
                      rng=None, value: float | None = None) -> SimState:
    """Replace ``agent``: new value, memory erased, gossip estimate reset.

    Peers keep whatever they knew about the departed agent.
    """
    if value is None:
        value = float(sample_value(params, rng))
    state.values[agent] = value
    state.gossip_estimates[agent] = value
    state.known_values[agent, :] = 0.0
    state.known_times[agent, :] = -np.inf
    state.known_values[agent, agent] = value
    state.known_times[agent, agent] = state.clock
    return state


def apply_communication_gossip(state: SimState, i: int, j: int) -> SimState:
    if i == j:
        raise ValueError("an agent cannot communicate with itself")
    mean = 0.5 * (state.gossip_estimates[i] + state.gossip_estimates[j])
    state.gossip_estimates[i] = mean
    state.gossip_estimates[j] = mean
    return state


def apply_communication_optimal(state: SimState, i: int, j: int, now: float | None = None) -> SimState:
    """Merge the knowledge tables of ``i`` and ``j``, keeping the newest entries."""
    if i == j:
        raise ValueError("an agent cannot communicate with itself")
    now = state.clock if now is None else now
    kv, kt = state.known_values, state.known_times
    for a in (i, j):
        kv[a, a] = state.values[a]
        kt[a, a] = now
    newer = kt[j] > kt[i]
    times = np.where(newer, kt[j], kt[i])
    vals = np.where(newer, kv[j], kv[i])
    kt[i], kt[j] = times, times
    kv[i], kv[j] = vals, vals
    return state


def optimal_estimate(state: SimState, i: int, now: float, params: SystemParams) -> float:
    """Conditional expectation of the current average given ``i``'s knowledge."""
    ages = now - state.known_times[i]
    weights = decay(params.lambda_r, ages)
    contributions = weights * state.known_values[i]
    contributions[i] = state.values[i]
    return float(contributions.sum() / state.n_agents)


def squared_error(values, estimates) -> float:
    """Mean over agents of the squared distance to the current average."""
    values = np.asarray(values)
    return float(np.mean((values.mean() - np.asarray(estimates)) ** 2))


def apply_event(state: SimState, event: SimEvent, params: SystemParams, value: float | None = None,
                rng=None) -> SimState:
    state.clock = event.time
    if event.kind is EventKind.REPLACEMENT:
        return apply_replacement(state, event.agent, params, rng, value)
    apply_communication_gossip(state, event.agent, event.peer)
    return apply_communication_optimal(state, event.agent, event.peer, event.time)


def run_replication(params: SystemParams, events: EventSequence) -> dict:
    """Play one event sequence event by event; the reference for the batch engine."""
    state = SimState.fresh(events.initial_values)
    for k, event in enumerate(events.events()):
        apply_event(state, event, params, value=float(events.new_values[k]))
    t_obs = float(events.times[-1])
    optimal = [optimal_estimate(state, i, t_obs, params) for i in range(state.n_agents)]
    return {
        Algorithm.GOSSIP: squared_error(state.values, state.gossip_estimates),
        Algorithm.OPTIMAL: squared_error(state.values, optimal),
        "ages": state.ages(t_obs),
    }


# --- batched replications -----------------------------------------------


def _batch_optimal_estimates(x, kv, kt, now, lambda_r):
    n = x.shape[1]
    absent = np.isinf(kt)
    ages = np.where(absent, 0.0, now[:, None, None] - np.where(absent, 0.0, kt))
    weights = np.where(absent, 0.0, np.exp(-lambda_r * ages))
    contrib = weights * kv
    diag = np.arange(n)
    contrib[:, diag, diag] = x
    return contrib.sum(axis=2) / n


def _batch_errors(x, estimates):
    return np.mean((x.mean(axis=1, keepdims=True) - estimates) ** 2, axis=1)


def _run_batch(params: SystemParams, sequences, track_knowledge=True, time_averaged=False,
               want_ages=False) -> dict:
    r = len(sequences)
    n = params.n_agents
    n_events = sequences[0].n_events
    times = np.stack([s.times for s in sequences])
    is_rep = np.stack([s.is_replacement for s in sequences])
    first = np.stack([s.first for s in sequences])
    second = np.stack([s.second for s in sequences])
    new_values = np.stack([s.new_values for s in sequences])

    x = np.stack([s.initial_values for s in sequences]).astype(float)
    y = x.copy()
    rows = np.arange(r)
    if track_knowledge:
        kv = np.zeros((r, n, n))
        kt = np.full((r, n, n), -np.inf)
        diag = np.arange(n)
        kv[:, diag, diag] = x
        kt[:, diag, diag] = 0.0

    window_start = n_events // 2
    sums = {Algorithm.GOSSIP: np.zeros(r), Algorithm.OPTIMAL: np.zeros(r)}

    def observe(t):
        sums[Algorithm.GOSSIP] += _batch_errors(x, y)
        if track_knowledge:
            sums[Algorithm.OPTIMAL] += _batch_errors(
                x, _batch_optimal_estimates(x, kv, kt, t, params.lambda_r))

    for k in range(n_events):
        t = times[:, k]
        if time_averaged and k >= window_start:
            # Poisson arrivals see time averages: sampling just before each
            # event is an unbiased time average.
            observe(t)
        rep = is_rep[:, k]
        rr = rows[rep]
        if rr.size:
            a = first[rr, k]
            v = new_values[rr, k]
            x[rr, a] = v
            y[rr, a] = v
            if track_knowledge:
                kv[rr, a, :] = 0.0
                kt[rr, a, :] = -np.inf
                kv[rr, a, a] = v
                kt[rr, a, a] = t[rr]
        cc = rows[~rep]
        if cc.size:
            i = first[cc, k]
            j = second[cc, k]
            mean = 0.5 * (y[cc, i] + y[cc, j])
            y[cc, i] = mean
            y[cc, j] = mean
            if track_knowledge:
                tc = t[cc]
                kv[cc, i, i] = x[cc, i]
                kt[cc, i, i] = tc
                kv[cc, j, j] = x[cc, j]
                kt[cc, j, j] = tc
                ti, tj = kt[cc, i, :], kt[cc, j, :]
                newer = tj > ti
                mt = np.where(newer, tj, ti)
                mv = np.where(newer, kv[cc, j, :], kv[cc, i, :])
                kt[cc, i, :] = mt
                kt[cc, j, :] = mt
                kv[cc, i, :] = mv
                kv[cc, j, :] = mv

    t_obs = times[:, -1]
    out = {}
    if time_averaged:
        observe(t_obs)
        count = n_events - window_start + 1
        out[Algorithm.GOSSIP] = sums[Algorithm.GOSSIP] / count
        if track_knowledge:
            out[Algorithm.OPTIMAL] = sums[Algorithm.OPTIMAL] / count
    else:
        out[Algorithm.GOSSIP] = _batch_errors(x, y)
        if track_knowledge:
            out[Algorithm.OPTIMAL] = _batch_errors(
                x, _batch_optimal_estimates(x, kv, kt, t_obs, params.lambda_r))
    if want_ages:
        ages = t_obs[:, None, None] - kt
        off = ~np.eye(n, dtype=bool)
        out["ages"] = ages[:, off].ravel()
    return out


def _float_key(value: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(value)))[0]


def params_key(params: SystemParams) -> tuple[int, ...]:
    """Stream key separating parameter points that share a master seed."""
    return (
        params.n_agents,
        _float_key(params.lambda_r),
        _float_key(params.lambda_c),
        _float_key(params.sigma_sq),
        list(type(params.value_dist)).index(params.value_dist),
    )


def default_event_count(params: SystemParams) -> int:
    """Events covering the same time span as 200 events for N = 10, L = 1.

    The span is about 3.6 / lambda_r, long enough for the effect of the
    fresh start to fade.
    """
    if params.lambda_r == 0:
        raise ValueError("lambda_r = 0 has no steady state; pass n_events explicitly")
    per_unit_time = params.event_rate / params.lambda_r
    return math.ceil(REFERENCE_EVENTS * per_unit_time / REFERENCE_EVENTS_PER_REPLACEMENT_TIME)


def _chunk_job(args):
    params, seed, key, start, stop, n_events, track_knowledge, time_averaged, want_ages = args
    sequences = [draw_events(params, RngStream(seed, idx, key), n_events) for idx in range(start, stop)]
    return _run_batch(params, sequences, track_knowledge, time_averaged, want_ages)


def simulate_replications(params: SystemParams, n_replications: int, n_events: int | None = None,
                          seed: int = 0, algorithms=(Algorithm.GOSSIP, Algorithm.OPTIMAL),
                          time_averaged: bool = False, want_ages: bool = False,
                          workers: int = 1, key: tuple[int, ...] | None = None) -> dict:
    """Per-replication squared errors (and optionally ages), in replication order.

    All requested algorithms run on the same trajectories.
    """
    if n_replications < 1:
        raise ValueError("n_replications must be >= 1")
    if n_events is None:
        n_events = default_event_count(params)
    if n_events < 1:
        raise ValueError("n_events must be >= 1")
    _replacement_probability(params)
    algorithms = {Algorithm(a) for a in algorithms}
    track_knowledge = Algorithm.OPTIMAL in algorithms or want_ages
    key = params_key(params) if key is None else tuple(key)
    jobs = [
        (params, seed, key, start, min(start + CHUNK_SIZE, n_replications), n_events,
         track_knowledge, time_averaged, want_ages)
        for start in range(0, n_replications, CHUNK_SIZE)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    else:
        parts = [_chunk_job(job) for job in jobs]
    out = {a: np.concatenate([p[a] for p in parts]) for a in algorithms}
    if want_ages:
        out["ages"] = np.concatenate([p["ages"] for p in parts])
    out["n_events"] = n_events
    return out


def summarize(samples, algorithm, params: SystemParams, n_events: int, seed: int) -> MseEstimate:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    std_error = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return MseEstimate(float(samples.mean()), std_error, n, Algorithm(algorithm), params, n_events, seed)


def steady_state_mse(params: SystemParams, algorithm, n_replications: int,
                     n_events: int | None = None, seed: int = 0, time_averaged: bool = False,
                     workers: int = 1) -> MseEstimate:
    """Estimate the steady-state expected MSE of an algorithm.

    Each replication starts fresh (i.i.d. values, estimates equal to own
    values, knowledge of self only), runs ``n_events`` events and records
    the MSE at the instant the next event would occur.
    """
    algorithm = Algorithm(algorithm)
    res = simulate_replications(params, n_replications, n_events, seed, (algorithm,),
                                time_averaged=time_averaged, workers=workers)
    return summarize(res[algorithm], algorithm, params, res["n_events"], seed)


@dataclass(frozen=True)
class EmpiricalAgeCdf:
    grid: np.ndarray
    values: np.ndarray
    n_samples: int
    distribution: AgeDistribution

    def std_error(self, reference=None) -> np.ndarray:
        """Binomial standard error at each grid point, at ``reference`` if given."""
        p = self.values if reference is None else np.asarray(reference, dtype=float)
        return np.sqrt(p * (1.0 - p) / self.n_samples)


def empirical_age_cdf(params: SystemParams, n_replications: int, n_events: int | None = None,
                      grid=None, seed: int = 0, workers: int = 1) -> EmpiricalAgeCdf:
    """CDF of the age of the information held about peers, pooled over pairs.

    Absent information counts as an infinite age.
    """
    res = simulate_replications(params, n_replications, n_events, seed, (), want_ages=True,
                                workers=workers)
    ages = res["ages"]
    ages[np.isinf(ages)] = INFINITE_AGE
    dist = AgeDistribution.empirical(ages)
    if grid is None:
        grid = np.linspace(0.0, float(np.quantile(ages[np.isfinite(ages)], 0.99)), 50) \
            if np.isfinite(ages).any() else np.zeros(1)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0):
        raise ValueError("grid must be >= 0")
    return EmpiricalAgeCdf(grid, dist.cdf(grid), ages.size, dist)
