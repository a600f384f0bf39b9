"""Command-line front end.

Subcommands: graph, analyze, synthesize, simulate, check.  Exit codes:
0 success, 1 negative check result, 2 usage/parse error, 3 infeasible,
4 solver backend failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import constraints, graph, lmi, sim, systems

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def atomic_write(path: str, text: str) -> None:
    """Write-temp-then-rename so partially written outputs never appear."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-whrtperf-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

_TOP_KEYS = {"plant", "constraint", "strategy", "K", "solver", "simulation"}
_SOLVER_KEYS = {"eps", "tol_verify", "bisection", "backend"}
_SIM_KEYS = {"horizon", "seeds", "t_sweep"}


@dataclass
class RunConfig:
    plant: systems.Plant
    constraint: constraints.WhrtConstraint
    strategy: systems.Strategy
    K: np.ndarray | None
    eps: float | None
    tol_verify: float | None
    bisection: bool
    backend: str | None
    horizon: int
    seeds: int
    t_sweep: int


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise CliError(f"{path}: config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise CliError(f"{path}: unknown config keys: {sorted(unknown)}")
    for key in ("plant", "constraint", "strategy"):
        if key not in data:
            raise CliError(f"{path}: missing config key {key!r}")
    solver = data.get("solver", {})
    simulation = data.get("simulation", {})
    for section, allowed, name in ((solver, _SOLVER_KEYS, "solver"),
                                   (simulation, _SIM_KEYS, "simulation")):
        bad = set(section) - allowed
        if bad:
            raise CliError(f"{path}: unknown {name} keys: {sorted(bad)}")
    try:
        plant = systems.plant_from_config(data["plant"])
        constraint = constraints.parse_constraint(data["constraint"])
        strategy = systems.parse_strategy(data["strategy"])
    except (systems.ConfigError, constraints.ConstraintError) as exc:
        raise CliError(f"{path}: {exc}")
    K = None
    if "K" in data:
        K = np.asarray(data["K"], dtype=float)
        if K.ndim == 1:
            K = K.reshape(1, -1)
        if K.shape != (plant.m, plant.n):
            raise CliError(f"{path}: K must be {plant.m}x{plant.n}, got {K.shape}")
    return RunConfig(
        plant=plant, constraint=constraint, strategy=strategy, K=K,
        eps=solver.get("eps"), tol_verify=solver.get("tol_verify"),
        bisection=bool(solver.get("bisection", False)),
        backend=solver.get("backend"),
        horizon=int(simulation.get("horizon", 400)),
        seeds=int(simulation.get("seeds", 10)),
        t_sweep=int(simulation.get("t_sweep", 200)),
    )


def _solver_kwargs(cfg: RunConfig) -> dict:
    return dict(solver=cfg.backend, eps=cfg.eps, tol_verify=cfg.tol_verify,
                bisection=cfg.bisection)


def _fmt(value: float) -> str:
    return f"{value:.4g}"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_graph(args) -> int:
    try:
        c = constraints.parse_constraint(args.constraint)
        g = graph.build_lifted_graph(c) if args.lifted else graph.build_graph(c)
    except (constraints.ConstraintError, graph.GraphError) as exc:
        raise CliError(str(exc))
    if args.stats:
        print(f"nodes={g.n_nodes} edges={g.n_edges}")
    if args.dot_out:
        atomic_write(args.dot_out, graph.export_dot(g))
        print(f"wrote {args.dot_out}")
    return EXIT_OK


def _lifted_setup(cfg: RunConfig):
    lg = graph.build_lifted_graph(cfg.constraint)
    labels = sorted({l for _, _, l in lg.edges})
    family = systems.lift(cfg.plant, cfg.strategy, labels)
    return lg, family


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    if cfg.K is None:
        raise CliError(f"{args.config}: analysis needs a controller K in the config")
    try:
        if args.non_lifted:
            g = graph.build_graph(cfg.constraint)
            cls = systems.closed_loop(cfg.plant, cfg.K, cfg.strategy)
            cert = lmi.analyze_nonlifted(cls, g, **_solver_kwargs(cfg))
        else:
            lg, family = _lifted_setup(cfg)
            cert = lmi.analyze_lifted(family, cfg.K, lg, **_solver_kwargs(cfg))
    except lmi.Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (lmi.SolverFailure, graph.GraphError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"certified gamma = {_fmt(cert.gamma)}")
    if args.out:
        atomic_write(args.out, lmi.format_certificate(cert))
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = load_config(args.config)
    try:
        lg, family = _lifted_setup(cfg)
        result = lmi.synthesize(family, lg, switched=args.switched,
                                **_solver_kwargs(cfg))
    except lmi.Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (lmi.SolverFailure, lmi.IllConditionedG, graph.GraphError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"certified gamma = {_fmt(result.gamma)}")
    if result.switched:
        for name in sorted(result.K):
            entries = " ".join(_fmt(v) for v in np.ravel(result.K[name]))
            print(f"K[{name}] = [{entries}]")
    else:
        entries = " ".join(_fmt(v) for v in np.ravel(result.K))
        print(f"K = [{entries}]")
    if args.out:
        atomic_write(args.out, lmi.format_certificate(result))
        print(f"wrote {args.out}")
    return EXIT_OK


def _mu_for_simulation(cfg: RunConfig, source: str, horizon: int, seed: int):
    if source == "random":
        return sim.random_admissible(cfg.constraint, horizon, seed)
    if source.startswith("periodic:"):
        pattern = constraints.parse_loss_sequence(source.split(":", 1)[1])
        reps = horizon // len(pattern) + 1
        mu = (pattern * reps)[:horizon]
    else:
        mu = constraints.parse_loss_sequence(source)
        if len(mu) < horizon:
            raise CliError(f"mu has {len(mu)} entries, horizon is {horizon}")
    if mu[0] != 1:
        raise CliError("mu must start with a successful attempt")
    if not constraints.satisfies(mu, cfg.constraint):
        window = constraints.first_violating_window(mu, cfg.constraint)
        raise CliError(f"mu violates {cfg.constraint} in window {window}")
    return mu


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if cfg.K is None:
        raise CliError(f"{args.config}: simulation needs a controller K in the config")
    horizon = cfg.horizon
    traces = []
    try:
        if args.mu == "random":
            rng_seeds = range(args.seeds if args.seeds else cfg.seeds)
            for seed in rng_seeds:
                mu = _mu_for_simulation(cfg, "random", horizon, seed)
                w = np.zeros((horizon, cfg.plant.q))
                T = min(cfg.t_sweep, horizon // 2)
                w[:T] = 1.0
                traces.append(sim.simulate(cfg.plant, cfg.K, cfg.strategy, mu, w))
        else:
            mu = _mu_for_simulation(cfg, args.mu, horizon, 0)
            for T in range(1, min(cfg.t_sweep, horizon - 1) + 1):
                w = np.zeros((horizon, cfg.plant.q))
                w[:T] = 1.0
                traces.append(sim.simulate(cfg.plant, cfg.K, cfg.strategy, mu, w))
        gain = sim.empirical_gain(traces)
    except sim.ZeroDisturbance as exc:
        raise CliError(str(exc))
    print(f"gamma_sim = {_fmt(gain)}")
    if args.csv_out:
        best = max(traces, key=lambda t: t.output_energy / t.input_energy)
        import io

        buf = io.StringIO()
        sim.trace_to_csv(best, buf)
        atomic_write(args.csv_out, buf.getvalue())
        print(f"wrote {args.csv_out}")
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        mu = constraints.parse_loss_sequence(args.mu)
        c = constraints.parse_constraint(args.constraint)
    except constraints.ConstraintError as exc:
        raise CliError(str(exc))
    window = constraints.first_violating_window(mu, c)
    if window is None:
        print(f"{args.mu} satisfies {c}")
        return EXIT_OK
    print(f"{args.mu} violates {c}: window [{window[0]},{window[1]}]")
    return EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whrtperf",
        description="l2-performance certification for control loops with "
                    "weakly-hard input losses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="build constraint graphs")
    p.add_argument("--constraint", required=True)
    p.add_argument("--lifted", action="store_true")
    p.add_argument("--stats", action="store_true")
    p.add_argument("--dot-out")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("analyze", help="certify the l2 gain of a given controller")
    p.add_argument("--config", required=True)
    p.add_argument("--non-lifted", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", help="design a state-feedback controller")
    p.add_argument("--config", required=True)
    p.add_argument("--switched", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="simulate and estimate the empirical gain")
    p.add_argument("--config", required=True)
    p.add_argument("--mu", required=True,
                   help="'random', 'periodic:BITS', or an explicit binary word")
    p.add_argument("--seeds", type=int, default=0)
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="check a loss sequence against a constraint")
    p.add_argument("--mu", required=True)
    p.add_argument("--constraint", required=True)
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
