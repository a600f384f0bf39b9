"""Plant data and switched / lifted closed-loop matrix constructions.

The plant is the linear discrete-time system

    x+ = A x + B u + Bw w,    z = C x + D u + Dw w,

driven through a lossy input channel.  On a loss the actuator either
applies zero input (zero strategy) or re-applies the last successful
input (hold strategy).

Lifting re-expresses the dynamics only at the successful attempts: one
lifted step covers the block "success, then a losses", with the a+1
disturbances and outputs of the block stacked oldest-first.  Input and
output energy is preserved, so the l2 gain is unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class DimensionMismatch(ValueError):
    pass


class InvalidFirstAttempt(ValueError):
    """Loss sequences driving the control system must start with a success."""


class ConfigError(ValueError):
    pass


def _as_matrix(name: str, value, rows: int | None = None, cols: int | None = None):
    m = np.asarray(value, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionMismatch(f"{name} contains non-finite entries")
    if rows is not None and m.shape[0] != rows:
        raise DimensionMismatch(f"{name} has {m.shape[0]} rows, expected {rows}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionMismatch(f"{name} has {m.shape[1]} columns, expected {cols}")
    return m


@dataclass(frozen=True)
class Plant:
    A: np.ndarray
    B: np.ndarray
    Bw: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Dw: np.ndarray

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        n = A.shape[0]
        if A.shape[1] != n:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B = _as_matrix("B", self.B, rows=n)
        Bw = _as_matrix("Bw", self.Bw, rows=n)
        C = _as_matrix("C", self.C, cols=n)
        p = C.shape[0]
        D = _as_matrix("D", self.D, rows=p, cols=B.shape[1])
        Dw = _as_matrix("Dw", self.Dw, rows=p, cols=Bw.shape[1])
        for name, m in (("A", A), ("B", B), ("Bw", Bw), ("C", C), ("D", D), ("Dw", Dw)):
            object.__setattr__(self, name, m)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.Bw.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


class StrategyKind(Enum):
    ZERO = "zero"
    HOLD = "hold"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    u_init: np.ndarray | None = None  # held input before the first success

    @staticmethod
    def zero() -> "Strategy":
        return Strategy(StrategyKind.ZERO)

    @staticmethod
    def hold(u_init=None) -> "Strategy":
        if u_init is not None:
            u_init = np.asarray(u_init, dtype=float).reshape(-1)
        return Strategy(StrategyKind.HOLD, u_init)

    def initial_held_input(self, m: int) -> np.ndarray:
        if self.u_init is None:
            return np.zeros(m)
        if self.u_init.shape != (m,):
            raise DimensionMismatch(f"u_init has shape {self.u_init.shape}, expected ({m},)")
        return self.u_init


def parse_strategy(text: str) -> Strategy:
    try:
        return Strategy(StrategyKind(text.strip().lower()))
    except ValueError:
        raise ConfigError(f"unknown strategy {text!r}, expected 'zero' or 'hold'") from None


@dataclass(frozen=True)
class SwitchedClosedLoop:
    """Two-mode switched system x+ = Acl[mu] x + Bw[mu] w, z = Ccl[mu] x + Dw[mu] w.

    Mode 1 is a successful attempt, mode 0 a loss.  For the hold strategy
    the state is augmented with the held input, so n_cl = n + m.
    """

    Acl: dict[int, np.ndarray]
    Bw: dict[int, np.ndarray]
    Ccl: dict[int, np.ndarray]
    Dw: dict[int, np.ndarray]
    n_cl: int


def closed_loop(p: Plant, K, strat: Strategy) -> SwitchedClosedLoop:
    """Closed-loop mode matrices for the given loss strategy.

    Zero strategy: mode 0 runs the plant open loop, mode 1 applies u = Kx.
    Hold strategy: state xi = [x; u_prev]; mode 1 writes K x into the held
    input, mode 0 re-applies it.
    """
    K = _as_matrix("K", K, rows=p.m, cols=p.n)
    n, m = p.n, p.m
    if strat.kind is StrategyKind.ZERO:
        return SwitchedClosedLoop(
            Acl={0: p.A.copy(), 1: p.A + p.B @ K},
            Bw={0: p.Bw.copy(), 1: p.Bw.copy()},
            Ccl={0: p.C.copy(), 1: p.C + p.D @ K},
            Dw={0: p.Dw.copy(), 1: p.Dw.copy()},
            n_cl=n,
        )
    Z_nm = np.zeros((n, m))
    A1 = np.block([[p.A + p.B @ K, Z_nm], [K, np.zeros((m, m))]])
    A0 = np.block([[p.A, p.B], [np.zeros((m, n)), np.eye(m)]])
    Bw_aug = np.vstack([p.Bw, np.zeros((m, p.q))])
    C1 = np.hstack([p.C + p.D @ K, np.zeros((p.p, m))])
    C0 = np.hstack([p.C, p.D])
    return SwitchedClosedLoop(
        Acl={0: A0, 1: A1},
        Bw={0: Bw_aug, 1: Bw_aug.copy()},
        Ccl={0: C0, 1: C1},
        Dw={0: p.Dw.copy(), 1: p.Dw.copy()},
        n_cl=n + m,
    )


@dataclass(frozen=True)
class LiftedIndexing:
    """Success instants tau and inter-success loss counts alpha."""

    tau: tuple[int, ...]
    alpha: tuple[int, ...]


def lift_sequences(mu) -> LiftedIndexing:
    """Split a loss sequence into success instants and loss-gap counts."""
    mu = tuple(mu)
    if not mu or mu[0] != 1:
        raise InvalidFirstAttempt("the first control attempt must be successful")
    tau = tuple(k for k, bit in enumerate(mu) if bit == 1)
    alpha = tuple(tau[i + 1] - tau[i] - 1 for i in range(len(tau) - 1))
    return LiftedIndexing(tau, alpha)


def reconstruct_loss_sequence(ix: LiftedIndexing, length: int) -> tuple[int, ...]:
    """Inverse of lift_sequences, including any trailing losses."""
    mu = [0] * length
    for k in ix.tau:
        mu[k] = 1
    return tuple(mu)


@dataclass(frozen=True)
class LiftedModes:
    """Open-loop lifted matrices for one block label."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Bw: np.ndarray
    Dw: np.ndarray


@dataclass(frozen=True)
class LiftedFamily:
    plant: Plant = field(repr=False)
    strategy: Strategy
    modes: dict[int, LiftedModes]

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(sorted(self.modes))


def lift(p: Plant, strat: Strategy, labels) -> LiftedFamily:
    """Lifted block matrices for each label a: one step of the lifted
    system equals the block "success then a losses" of the original loop,
    with the a+1 disturbances stacked oldest-first and the a+1 outputs
    stacked in time order."""
    labels = sorted(set(int(a) for a in labels))
    if any(a < 0 for a in labels):
        raise ValueError("block labels must be nonnegative")
    max_a = max(labels) if labels else 0
    Apow = [np.eye(p.n)]
    for _ in range(max_a + 1):
        Apow.append(p.A @ Apow[-1])
    modes = {}
    for a in labels:
        Atil = Apow[a + 1]
        Ctil = np.vstack([p.C @ Apow[i] for i in range(a + 1)])
        Bwt = np.hstack([Apow[a - i] @ p.Bw for i in range(a + 1)])
        Dwt = np.zeros((p.p * (a + 1), p.q * (a + 1)))
        for i in range(a + 1):
            Dwt[p.p * i:p.p * (i + 1), p.q * i:p.q * (i + 1)] = p.Dw
            for j in range(i):
                Dwt[p.p * i:p.p * (i + 1), p.q * j:p.q * (j + 1)] = (
                    p.C @ Apow[i - j - 1] @ p.Bw
                )
        if strat.kind is StrategyKind.ZERO:
            Btil = Apow[a] @ p.B
            Dtil = np.vstack([p.D] + [p.C @ Apow[i] @ p.B for i in range(a)])
        else:
            partial = [np.zeros((p.n, p.m))]
            for i in range(a + 1):
                partial.append(partial[-1] + Apow[i] @ p.B)
            Btil = partial[a + 1]
            Dtil = np.vstack([p.D] + [p.C @ partial[j + 1] + p.D for j in range(a)])
        modes[a] = LiftedModes(A=Atil, B=Btil, C=Ctil, D=Dtil, Bw=Bwt, Dw=Dwt)
    return LiftedFamily(plant=p, strategy=strat, modes=modes)


def lifted_closed_loop(f: LiftedFamily, K) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per-label (Acl, Ccl) with Acl = A + B K and Ccl = C + D K."""
    K = _as_matrix("K", K, rows=f.plant.m, cols=f.plant.n)
    return {a: (m.A + m.B @ K, m.C + m.D @ K) for a, m in f.modes.items()}


# ---------------------------------------------------------------------------
# configuration ingestion
# ---------------------------------------------------------------------------

_PLANT_KEYS = ("A", "B", "Bw", "C", "D", "Dw")


def plant_from_config(data: dict) -> Plant:
    """Build a plant from a nested-array mapping, with strict validation."""
    if not isinstance(data, dict):
        raise ConfigError("plant section must be a mapping of matrix names to arrays")
    unknown = set(data) - set(_PLANT_KEYS)
    if unknown:
        raise ConfigError(f"unknown plant keys: {sorted(unknown)}")
    missing = [k for k in _PLANT_KEYS if k not in data]
    if missing:
        raise ConfigError(f"missing plant keys: {missing}")
    try:
        return Plant(**{k: data[k] for k in _PLANT_KEYS})
    except DimensionMismatch as exc:
        raise ConfigError(f"plant matrices inconsistent: {exc}") from exc


def load_plant(path: str) -> Plant:
    """Read a plant from a JSON file holding the matrix mapping.

    Syntax errors are reported with line and column.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
            ) from exc
    return plant_from_config(data)
