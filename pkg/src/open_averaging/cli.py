"""Command line interface: bound sweeps, simulations, age CDFs and figure data.

Every CSV starts with a ``#`` line holding the resolved configuration as
JSON; passing those values back on the command line rebuilds the file
byte for byte (see :func:`config_to_argv`).
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bounds import general_bound, ping_age_distribution, ping_bound, relaxed_bound
from .core import SystemParams, ValueDistribution
from .infection import (
    InfectionChain,
    infection_age_cdf,
    infection_bound_algebraic,
    infection_bound_matrix,
)
from .simulator import Algorithm, empirical_age_cdf, simulate_replications, summarize

BOUND_COLUMNS = {
    "ping": ping_bound,
    "infection_matrix": infection_bound_matrix,
    "infection_algebraic": infection_bound_algebraic,
    "relaxed": relaxed_bound,
    "ping_quadrature": lambda p: general_bound(p, ping_age_distribution(p)),
    "infection_quadrature": lambda p: general_bound(
        p, infection_age_cdf(InfectionChain.from_params(p))),
}
DEFAULT_METHODS = ("ping", "infection_matrix", "infection_algebraic", "relaxed")
SIM_HEADER = ("n_agents", "ratio", "algorithm", "mse_mean", "mse_stderr",
              "n_replications", "n_events", "seed")
REPRODUCE_N = (3, 10, 100)
DEFAULT_RANGE = (1e-2, 1e3)
DEFAULT_PER_DECADE = 50


def log_grid(low: float, high: float, per_decade: int = DEFAULT_PER_DECADE) -> list[float]:
    """Log-spaced grid with ``per_decade`` points per decade, ends included."""
    if not (0 < low <= high):
        raise ValueError("ratio range must satisfy 0 < min <= max")
    if per_decade < 1:
        raise ValueError("points per decade must be >= 1")
    n = max(1, round(math.log10(high / low) * per_decade)) + 1
    return [float(v) for v in np.logspace(math.log10(low), math.log10(high), n)]


@dataclass
class SweepSpec:
    n_agents: list[int]
    ratios: list[float]
    lambda_r: float = 1.0
    sigma_sq: float = 1.0
    value_dist: str = ValueDistribution.NORMAL.value
    methods: list[str] = field(default_factory=lambda: list(DEFAULT_METHODS))
    algorithm: str = "gossip"
    replications: int = 1000
    events: int | None = None
    seed: int = 0
    time_averaged: bool = False

    def __post_init__(self):
        if not self.n_agents or not self.ratios:
            raise ValueError("n_agents and ratios must be non-empty")
        if any(n < 2 for n in self.n_agents):
            raise ValueError("n_agents values must be >= 2")
        if any(not (r >= 0 and math.isfinite(r)) for r in self.ratios):
            raise ValueError("ratios must be finite and >= 0")
        unknown = set(self.methods) - set(BOUND_COLUMNS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if not self.lambda_r > 0:
            raise ValueError("lambda_r must be > 0 in sweeps")

    def points(self):
        """Parameter points sorted by (n_agents, ratio)."""
        for n in sorted(set(self.n_agents)):
            for ratio in sorted(set(self.ratios)):
                yield ratio, SystemParams.from_ratio(n, ratio, self.lambda_r, self.sigma_sq,
                                                     self.value_dist)


@dataclass(frozen=True)
class SweepResult:
    n_agents: int
    ratio: float
    values: dict


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render_csv(config: dict, header, rows) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(config, sort_keys=True) + "\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_output(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def bound_sweep(spec: SweepSpec) -> list[SweepResult]:
    results = []
    for ratio, params in spec.points():
        values = {m: BOUND_COLUMNS[m](params).value for m in spec.methods}
        results.append(SweepResult(params.n_agents, ratio, values))
    return results


def cmd_bounds(spec: SweepSpec, command: str = "bounds") -> str:
    methods = [m for m in BOUND_COLUMNS if m in spec.methods]
    rows = [[r.n_agents, r.ratio] + [r.values[m] for m in methods] for r in bound_sweep(spec)]
    config = _config(command, spec, ("n_agents", "ratios", "lambda_r", "sigma_sq", "methods"))
    config["methods"] = methods
    return render_csv(config, ["n_agents", "ratio"] + methods, rows)


def _algorithms(name: str):
    if name == "both":
        return [Algorithm.GOSSIP, Algorithm.OPTIMAL]
    return [Algorithm(name)]


def simulation_sweep(spec: SweepSpec, workers: int = 1):
    for ratio, params in spec.points():
        algos = _algorithms(spec.algorithm)
        res = simulate_replications(params, spec.replications, spec.events, spec.seed, algos,
                                    time_averaged=spec.time_averaged, workers=workers)
        for algo in algos:
            yield ratio, summarize(res[algo], algo, params, res["n_events"], spec.seed)


def cmd_simulate(spec: SweepSpec, workers: int = 1) -> str:
    rows = [
        [est.params.n_agents, ratio, est.algorithm.value, est.mean, est.std_error,
         est.n_replications, est.n_events, est.seed]
        for ratio, est in simulation_sweep(spec, workers)
    ]
    config = _config("simulate", spec, ("n_agents", "ratios", "lambda_r", "sigma_sq", "value_dist",
                                        "algorithm", "replications", "events", "seed",
                                        "time_averaged"))
    return render_csv(config, SIM_HEADER, rows)


def cmd_age_cdf(spec: SweepSpec, grid, workers: int = 1) -> str:
    if len(spec.n_agents) != 1 or len(spec.ratios) != 1:
        raise ValueError("age-cdf takes a single --n-agents value and a single ratio")
    ((_, params),) = list(spec.points())
    grid = [float(s) for s in grid]
    emp = empirical_age_cdf(params, spec.replications, spec.events, grid, spec.seed, workers)
    ping = ping_age_distribution(params).cdf(np.asarray(grid))
    inf = infection_age_cdf(InfectionChain.from_params(params)).cdf(np.asarray(grid))
    config = _config("age-cdf", spec, ("n_agents", "ratios", "lambda_r", "sigma_sq", "value_dist",
                                       "replications", "events", "seed"))
    config["grid"] = grid
    config["n_samples"] = emp.n_samples
    rows = zip(grid, emp.values, ping, inf)
    return render_csv(config, ["s", "empirical", "ping", "infection"], rows)


FIG3_RATIOS = log_grid(1e-2, 1e3, 5)


def cmd_reproduce(figure: str, replications: int = 10_000, workers: int = 1) -> str:
    """CSV data behind one of the three figures, with unit variance."""
    grid = log_grid(*DEFAULT_RANGE)
    if figure == "fig1":
        return cmd_bounds(SweepSpec(list(REPRODUCE_N), grid, methods=["ping"]), "reproduce fig1")
    if figure == "fig2":
        spec = SweepSpec(list(REPRODUCE_N), grid, methods=["ping", "infection_matrix", "relaxed"])
        return cmd_bounds(spec, "reproduce fig2")
    if figure == "fig3":
        spec = SweepSpec([10], FIG3_RATIOS, algorithm="gossip", replications=replications,
                         events=200, seed=0)
        rows = [
            [est.params.n_agents, ratio, infection_bound_matrix(est.params).value, est.mean,
             est.std_error, est.n_replications, est.n_events, est.seed]
            for ratio, est in simulation_sweep(spec, workers)
        ]
        config = _config("reproduce fig3", spec, ("n_agents", "ratios", "lambda_r", "sigma_sq",
                                                  "algorithm", "replications", "events", "seed"))
        header = ["n_agents", "ratio", "infection_matrix", "gossip_mean", "gossip_stderr",
                  "n_replications", "n_events", "seed"]
        return render_csv(config, header, rows)
    raise ValueError(f"unknown figure {figure!r}")


def _config(command, spec: SweepSpec, keys) -> dict:
    data = asdict(spec)
    config = {"command": command}
    for k in keys:
        config[k] = data[k]
    config["n_agents"] = sorted(set(spec.n_agents))
    config["ratios"] = sorted(set(float(r) for r in spec.ratios))
    return config


def config_to_argv(config: dict) -> list[str]:
    """Command line that regenerates a CSV from its ``#`` configuration line."""
    command = config["command"].split()
    argv = list(command)
    if command[0] == "reproduce":
        argv += ["--replications", str(config.get("replications", 10_000))] \
            if command[1] == "fig3" else []
        return argv
    flags = {
        "n_agents": "--n-agents", "ratios": "--ratios", "lambda_r": "--lambda-r",
        "sigma_sq": "--sigma-sq", "methods": "--methods", "value_dist": "--value-dist",
        "algorithm": "--algorithm", "replications": "--replications", "events": "--events",
        "seed": "--seed", "grid": "--grid",
    }
    for key, flag in flags.items():
        if key not in config or config[key] is None:
            continue
        value = config[key]
        if isinstance(value, list):
            argv += [flag, ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)]
        else:
            argv += [flag, repr(value) if isinstance(value, float) else str(value)]
    if config.get("time_averaged"):
        argv.append("--time-averaged")
    return argv


def read_config(path) -> dict:
    """Parse the configuration line of a CSV written by this tool."""
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise ValueError(f"{path} has no configuration line")
    return json.loads(first[2:])


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="open-averaging",
        description="Performance limits of intrinsic averaging in open multi-agent systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def sweep_args(p, default_n):
        p.add_argument("--n-agents", type=_int_list, default=default_n,
                       help="comma-separated numbers of agents")
        grid = p.add_mutually_exclusive_group()
        grid.add_argument("--ratios", type=_float_list,
                          help="comma-separated lambda_c/lambda_r values")
        grid.add_argument("--ratio-range", type=float, nargs=2, metavar=("MIN", "MAX"),
                          help="log-spaced ratio range (default 1e-2 1e3)")
        p.add_argument("--per-decade", type=int, default=DEFAULT_PER_DECADE,
                       help="points per decade for --ratio-range")
        p.add_argument("--lambda-r", type=float, default=1.0)
        p.add_argument("--sigma-sq", type=float, default=1.0)
        p.add_argument("--out", default="-", help="output CSV path, '-' for stdout")

    def sim_args(p):
        p.add_argument("--value-dist", default=ValueDistribution.NORMAL.value,
                       choices=[d.value for d in ValueDistribution])
        p.add_argument("--replications", type=int, default=1000)
        p.add_argument("--events", type=int, default=None,
                       help="events per replication (default: scaled burn-in)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes; does not change results")

    p_bounds = sub.add_parser("bounds", help="sweep the closed-form bounds")
    sweep_args(p_bounds, [2, 3, 10, 100])
    p_bounds.add_argument("--methods", type=_str_list, default=list(DEFAULT_METHODS),
                          help=f"subset of {','.join(BOUND_COLUMNS)}")

    p_sim = sub.add_parser("simulate", help="Monte Carlo MSE of gossip and/or optimal")
    sweep_args(p_sim, [10])
    sim_args(p_sim)
    p_sim.add_argument("--algorithm", default="gossip", choices=["gossip", "optimal", "both"])
    p_sim.add_argument("--time-averaged", action="store_true",
                       help="average the MSE over the second half of each run")

    p_age = sub.add_parser("age-cdf", help="empirical vs analytic age-of-information CDF")
    sweep_args(p_age, [10])
    sim_args(p_age)
    p_age.add_argument("--grid", type=_float_list, default=None,
                       help="comma-separated ages (default: 50 points on [0, 5/((N-1) lambda_c)])")

    p_rep = sub.add_parser("reproduce", help="data behind the three reference figures")
    p_rep.add_argument("figure", choices=["fig1", "fig2", "fig3"])
    p_rep.add_argument("--out", default="-")
    p_rep.add_argument("--replications", type=int, default=10_000)
    p_rep.add_argument("--workers", type=int, default=1)
    return parser


def _spec_from_args(args) -> SweepSpec:
    if args.ratios is not None:
        ratios = args.ratios
    else:
        low, high = args.ratio_range if args.ratio_range else DEFAULT_RANGE
        ratios = log_grid(low, high, args.per_decade)
    kwargs = dict(n_agents=args.n_agents, ratios=ratios, lambda_r=args.lambda_r,
                  sigma_sq=args.sigma_sq)
    for name in ("methods", "algorithm", "replications", "events", "seed", "value_dist",
                 "time_averaged"):
        if hasattr(args, name):
            kwargs[name] = getattr(args, name)
    return SweepSpec(**kwargs)


def run(argv=None) -> str:
    args = build_parser().parse_args(argv)
    if args.command == "reproduce":
        text = cmd_reproduce(args.figure, args.replications, args.workers)
    else:
        if args.command == "age-cdf" and args.ratios is None and args.ratio_range is None:
            args.ratios = [1.0]
        spec = _spec_from_args(args)
        if args.command == "bounds":
            text = cmd_bounds(spec)
        elif args.command == "simulate":
            text = cmd_simulate(spec, args.workers)
        else:
            grid = args.grid
            if grid is None:
                lam_c = spec.ratios[0] * spec.lambda_r
                top = 5.0 / ((spec.n_agents[0] - 1) * lam_c) if lam_c > 0 else 1.0
                grid = [float(v) for v in np.linspace(0.0, top, 50)]
            text = cmd_age_cdf(spec, grid, args.workers)
    write_output(text, args.out)
    return text


def main(argv=None) -> int:
    try:
        run(argv)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
