"""Forward simulation, empirical gain estimation and worst-case search.

Simulations run the exact plant/controller/strategy recursion under a
given loss sequence.  Empirical gains sqrt(sum z'z / sum w'w) are lower
bounds on the true l2 gain; the worst-case search sharpens them by
enumerating periodic loss patterns from the constraint graph and
maximizing over the disturbance by power iteration on the input-output
operator.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field

import numpy as np

from .constraints import WhrtConstraint
from .graph import WhrtGraph, build_graph, build_lifted_graph
from .systems import (
    DimensionMismatch,
    InvalidFirstAttempt,
    Plant,
    Strategy,
    StrategyKind,
    _as_matrix,
    closed_loop,
)


class ZeroDisturbance(ValueError):
    """Empirical gain is undefined for traces with zero input energy."""


@dataclass(frozen=True)
class SimulationTrace:
    x: np.ndarray = field(repr=False)    # (horizon+1, n), includes terminal state
    u_a: np.ndarray = field(repr=False)  # (horizon, m) applied inputs
    w: np.ndarray = field(repr=False)    # (horizon, q)
    z: np.ndarray = field(repr=False)    # (horizon, p)
    mu: tuple[int, ...]
    horizon: int

    @property
    def output_energy(self) -> float:
        return float(np.sum(self.z * self.z))

    @property
    def input_energy(self) -> float:
        return float(np.sum(self.w * self.w))


def simulate(p: Plant, K, strat: Strategy, mu, w, x0=None,
             horizon: int | None = None) -> SimulationTrace:
    """Run the loss-affected closed loop step by step.

    mu drives the input channel (1 = success, 0 = loss); on a loss the
    strategy decides the applied input.  The trace records states,
    applied inputs, disturbances and outputs for replay checks.
    """
    K = _as_matrix("K", K, rows=p.m, cols=p.n)
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if w.shape[1] != p.q:
        w = w.reshape(-1, p.q)
    mu = tuple(int(b) for b in mu)
    if not mu or mu[0] != 1:
        raise InvalidFirstAttempt("the first control attempt must be successful")
    if horizon is None:
        horizon = min(len(mu), w.shape[0])
    if len(mu) < horizon or w.shape[0] < horizon:
        raise DimensionMismatch("mu and w must cover the horizon")
    x = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float).reshape(p.n)
    u_prev = strat.initial_held_input(p.m)

    xs = np.empty((horizon + 1, p.n))
    us = np.empty((horizon, p.m))
    zs = np.empty((horizon, p.p))
    xs[0] = x
    for k in range(horizon):
        if mu[k]:
            u = K @ x
        elif strat.kind is StrategyKind.HOLD:
            u = u_prev
        else:
            u = np.zeros(p.m)
        zs[k] = p.C @ x + p.D @ u + p.Dw @ w[k]
        x = p.A @ x + p.B @ u + p.Bw @ w[k]
        xs[k + 1] = x
        us[k] = u
        u_prev = u if (mu[k] or strat.kind is StrategyKind.HOLD) else u_prev
    return SimulationTrace(x=xs, u_a=us, w=w[:horizon].copy(), z=zs,
                           mu=mu[:horizon], horizon=horizon)


def empirical_gain(traces) -> float:
    """Largest energy ratio sqrt(sum z'z / sum w'w) over the traces."""
    traces = list(traces)
    if not traces:
        raise ZeroDisturbance("no traces given")
    best = 0.0
    for t in traces:
        ew = t.input_energy
        if ew <= 0.0:
            raise ZeroDisturbance("trace has zero disturbance energy")
        best = max(best, np.sqrt(t.output_energy / ew))
    return float(best)


def random_admissible(c: WhrtConstraint, length: int, seed: int) -> tuple[int, ...]:
    """Random admissible loss sequence starting with a success.

    Uniform-per-step walk on the constraint graph; deterministic for a
    given seed.
    """
    if length < 1:
        raise ValueError("length must be positive")
    g = build_graph(c)
    rng = random.Random(seed)
    starts = [i for i in g.initial_nodes if g.successors(i, 1)]
    if not starts:
        starts = [i for i in range(g.n_nodes) if g.successors(i, 1)]
    node = rng.choice(starts)
    word = []
    for k in range(length):
        out = g.out_edges[node]
        if k == 0:
            out = [(l, j) for l, j in out if l == 1]
        label, node = out[rng.randrange(len(out))]
        word.append(label)
    return tuple(word)


# ---------------------------------------------------------------------------
# worst-case search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorstCaseResult:
    mu: tuple[int, ...]
    w: np.ndarray = field(repr=False)
    gain: float
    budget_exhausted: bool


def _label_cycles(g: WhrtGraph, max_len: int, budget: int):
    """Simple cycles as label words, bounded in length and count."""
    cycles = []

    def dfs(start, node, path_nodes, labels):
        if len(cycles) >= budget or len(labels) >= max_len:
            return
        for label, succ in g.out_edges[node]:
            if len(cycles) >= budget:
                return
            if succ == start and labels:
                cycles.append(tuple(labels + [label]))
            elif succ == start and not labels:
                cycles.append((label,))
            elif succ not in path_nodes:
                dfs(start, succ, path_nodes | {succ}, labels + [label])

    for start in range(g.n_nodes):
        dfs(start, start, {start}, [])
        if len(cycles) >= budget:
            break
    return cycles


def _cycle_to_mu(alphas, horizon: int) -> tuple[int, ...]:
    block = []
    for a in alphas:
        block.extend([1] + [0] * a)
    reps = horizon // len(block) + 1
    return tuple(block * reps)[:horizon]


def _power_iteration_gain(cls, mu, horizon: int, iters: int = 100,
                          rel_tol: float = 1e-10):
    """Largest gain of the finite-horizon w -> z operator.

    Forward pass simulates the loop, the adjoint pass runs the transposed
    recursion backwards; the Rayleigh estimate is non-decreasing over
    iterations.
    """
    n = cls.n_cl
    q = cls.Bw[1].shape[1]
    p = cls.Ccl[1].shape[0]

    def forward(w):
        x = np.zeros(n)
        z = np.empty((horizon, p))
        for k in range(horizon):
            m = mu[k]
            z[k] = cls.Ccl[m] @ x + cls.Dw[m] @ w[k]
            x = cls.Acl[m] @ x + cls.Bw[m] @ w[k]
        return z

    def adjoint(z):
        lam = np.zeros(n)
        w = np.empty((horizon, q))
        for k in range(horizon - 1, -1, -1):
            m = mu[k]
            w[k] = cls.Bw[m].T @ lam + cls.Dw[m].T @ z[k]
            lam = cls.Acl[m].T @ lam + cls.Ccl[m].T @ z[k]
        return w

    rng = np.random.default_rng(0)
    w = rng.standard_normal((horizon, q))
    w /= np.linalg.norm(w)
    gain = 0.0
    estimates = []
    for _ in range(iters):
        z = forward(w)
        new_gain = float(np.linalg.norm(z))
        estimates.append(new_gain)
        if new_gain <= gain * (1.0 + rel_tol):
            break
        gain = new_gain
        w = adjoint(z)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            break
        w /= nrm
    return gain, w, estimates


def worst_case_search(p: Plant, K, strat: Strategy, c: WhrtConstraint,
                      horizon: int = 200, budget: int = 50) -> WorstCaseResult:
    """Search for a bad (mu, w) pair; the achieved ratio is a certified
    lower bound on the l2 gain.

    Periodic loss patterns come from simple cycles of the lifted
    constraint graph (plus the all-success pattern); per pattern the
    disturbance is optimized by power iteration.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    cls = closed_loop(p, K, strat)
    candidates = [(0,)]  # all-success cycle, always evaluated
    exhausted = False
    try:
        lg = build_lifted_graph(c)
        cycles = _label_cycles(lg, max_len=3 * c.s, budget=budget)
        exhausted = len(cycles) >= budget
        candidates += [cyc for cyc in cycles if cyc != (0,)]
    except Exception:
        pass  # vacuous constraint: fall back to the all-success pattern
    candidates = candidates[:budget] or [(0,)]

    best = None
    for cyc in candidates:
        mu = _cycle_to_mu(cyc, horizon)
        gain, w, _ = _power_iteration_gain(cls, mu, horizon)
        if best is None or gain > best[0] or (gain == best[0] and mu < best[1]):
            best = (gain, mu, w)
    gain, mu, w = best
    return WorstCaseResult(mu=mu, w=w, gain=gain, budget_exhausted=exhausted)


# ---------------------------------------------------------------------------
# trace export
# ---------------------------------------------------------------------------


def trace_to_csv(trace: SimulationTrace, fh) -> None:
    """Write a trace as CSV: k, mu_k, states, applied inputs,
    disturbances, outputs; one row per time step."""
    n = trace.x.shape[1]
    m = trace.u_a.shape[1]
    q = trace.w.shape[1]
    p = trace.z.shape[1]
    writer = csv.writer(fh)
    header = (["k", "mu_k"]
              + [f"x_{i + 1}" for i in range(n)]
              + [f"u_a_{i + 1}" for i in range(m)]
              + [f"w_{i + 1}" for i in range(q)]
              + [f"z_{i + 1}" for i in range(p)])
    writer.writerow(header)
    for k in range(trace.horizon):
        row = ([k, trace.mu[k]]
               + [repr(v) for v in trace.x[k]]
               + [repr(v) for v in trace.u_a[k]]
               + [repr(v) for v in trace.w[k]]
               + [repr(v) for v in trace.z[k]])
        writer.writerow(row)
