"""Graph-indexed LMI certification of l2 performance, and controller synthesis.

For each graph edge (i, j, l) one 4x4 block matrix inequality is required
positive definite:

    [ G_i + G_i' - S_i    0        *      *   ]
    [ 0                 gam I      *      *   ]
    [ Acl_l G_i         Bw_l      S_j     *   ]
    [ Ccl_l G_i         Dw_l      0     gam I ]  > 0

with symmetric S_i per node, square G_i per node and the gain gam entering
linearly, so minimizing gam is a single conic program.  Synthesis replaces
the closed-loop blocks with A_l G + B_l R and C_l G + D_l R for a common
(or per-node) G, R; the controller is recovered as K = R G^{-1}.

The module assembles a backend-neutral problem description (named
variables, affine block constraints, linear objective).  One adapter
solves it through cvxpy; an independent numeric evaluator substitutes a
candidate certificate into the same description to verify it a
posteriori.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .graph import NodeTracker, WhrtGraph
from .systems import LiftedFamily, SwitchedClosedLoop, _as_matrix

COND_LIMIT = 1e8  # K extraction guard on cond(G)


class LmiError(RuntimeError):
    pass


class Infeasible(LmiError):
    """No gain certifiable.  The conditions are sufficient only, so this
    does not prove poor performance."""


class SolverFailure(LmiError):
    pass


class IllConditionedG(LmiError):
    """G is too ill conditioned for a reliable K = R G^{-1} extraction."""


class SingularS(LmiError):
    pass


# ---------------------------------------------------------------------------
# backend-neutral problem description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariableSpec:
    name: str
    rows: int
    cols: int
    symmetric: bool = False


@dataclass(frozen=True)
class LinTerm:
    """Contribution left @ V @ right (V transposed first if requested)."""

    var: str
    left: np.ndarray
    right: np.ndarray
    transpose: bool = False


@dataclass(frozen=True)
class ScalarTerm:
    """Contribution value * coeff for a scalar variable."""

    var: str
    coeff: np.ndarray


@dataclass(frozen=True)
class Entry:
    shape: tuple[int, int]
    const: np.ndarray | None = None
    terms: tuple = ()


@dataclass(frozen=True)
class BlockConstraint:
    label: str
    grid: tuple  # tuple of tuples of Entry


@dataclass(frozen=True)
class LmiProblem:
    variables: tuple[VariableSpec, ...]
    constraints: tuple[BlockConstraint, ...]
    objective: str
    eps: float

    def describe(self) -> str:
        """Structured text dump of the problem, for debugging."""
        lines = [f"minimize {self.objective}   (margin eps = {self.eps:.3e})"]
        for v in self.variables:
            tag = " symmetric" if v.symmetric else ""
            lines.append(f"var {v.name} {v.rows}x{v.cols}{tag}")
        for c in self.constraints:
            rows = sum(e.shape[0] for e in (row[0] for row in c.grid))
            cols = sum(e.shape[1] for e in c.grid[0])
            lines.append(f"psd {c.label}: {rows}x{cols} block matrix")
            for bi, row in enumerate(c.grid):
                for bj, e in enumerate(row):
                    parts = []
                    if e.const is not None and np.any(e.const):
                        parts.append("const")
                    for t in e.terms:
                        if isinstance(t, ScalarTerm):
                            parts.append(f"{t.var}*coeff")
                        else:
                            name = f"{t.var}'" if t.transpose else t.var
                            parts.append(f"L@{name}@R")
                    if parts:
                        lines.append(f"  ({bi},{bj}) {e.shape[0]}x{e.shape[1]}: "
                                     + " + ".join(parts))
        return "\n".join(lines) + "\n"


def _I(d):
    return np.eye(d)


def _entry_zero(r, c):
    return Entry((r, c))


def _entry_const(m):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return Entry(m.shape, const=m)


def _edge_block(label, n, Bww, Dww, si, sj, gamma, closed_terms):
    """One edge LMI block.

    closed_terms is a pair (a_terms, c_terms) of term tuples producing the
    (2,0) block Acl G (or A G + B R) and the (3,0) block Ccl G; the (0,2)
    and (0,3) blocks are their transposes.
    """
    qd = Bww.shape[1]
    pd = Dww.shape[0]
    a_terms, c_terms = closed_terms

    def transposed(terms):
        return tuple(
            LinTerm(t.var, t.right.T, t.left.T, transpose=not t.transpose)
            for t in terms
        )

    g_name = a_terms[0].var  # shared G variable of this edge
    grid = (
        (
            Entry((n, n), terms=(
                LinTerm(g_name, _I(n), _I(n)),
                LinTerm(g_name, _I(n), _I(n), transpose=True),
                LinTerm(si, -_I(n), _I(n)),
            )),
            _entry_zero(n, qd),
            Entry((n, n), terms=transposed(a_terms)),
            Entry((n, pd), terms=transposed(c_terms)),
        ),
        (
            _entry_zero(qd, n),
            Entry((qd, qd), terms=(ScalarTerm(gamma, _I(qd)),)),
            _entry_const(Bww.T),
            _entry_const(Dww.T),
        ),
        (
            Entry((n, n), terms=a_terms),
            _entry_const(Bww),
            Entry((n, n), terms=(LinTerm(sj, _I(n), _I(n)),)),
            _entry_zero(n, pd),
        ),
        (
            Entry((pd, n), terms=c_terms),
            _entry_const(Dww),
            _entry_zero(pd, n),
            Entry((pd, pd), terms=(ScalarTerm(gamma, _I(pd)),)),
        ),
    )
    return BlockConstraint(label, grid)


def _auto_eps(matrices) -> float:
    peak = max((np.linalg.norm(m, 2) for m in matrices if m.size), default=0.0)
    return 1e-7 * (1.0 + peak)


def _assemble(g: WhrtGraph, n: int, edge_data, variables, eps):
    """Shared assembly over graph edges.

    edge_data(l) -> (Acl-or-(A,B), Ccl-or-(C,D), Bw, Dw); variables is a
    callable node -> (S_name, G_name, R_name-or-None).
    """
    blocks = []
    data_norm_pool = []
    for i, j, l in sorted(g.edges):
        mats_a, mats_c, Bww, Dww = edge_data(l)
        si, _, _ = variables(i)
        sj, _, _ = variables(j)
        _, gi, ri = variables(i)
        if ri is None:
            Acl, Ccl = mats_a, mats_c
            a_terms = (LinTerm(gi, Acl, _I(n)),)
            c_terms = (LinTerm(gi, Ccl, _I(n)),)
            data_norm_pool += [Acl, Ccl, Bww, Dww]
        else:
            (Al, Bl), (Cl, Dl) = mats_a, mats_c
            a_terms = (LinTerm(gi, Al, _I(n)), LinTerm(ri, Bl, _I(n)))
            c_terms = (LinTerm(gi, Cl, _I(n)), LinTerm(ri, Dl, _I(n)))
            data_norm_pool += [Al, Bl, Cl, Dl, Bww, Dww]
        label = f"edge {g.nodes[i]}->{g.nodes[j]} [{l}]"
        blocks.append(_edge_block(label, n, Bww, Dww, si, sj, "gamma", (a_terms, c_terms)))
    # storage matrices must be positive definite; for most nodes the edge
    # blocks imply this, but transient nodes (no incoming edges) need it
    # stated explicitly
    seen = set()
    for i in range(g.n_nodes):
        si, _, _ = variables(i)
        if si in seen:
            continue
        seen.add(si)
        blocks.append(BlockConstraint(
            f"storage {si}",
            ((Entry((n, n), terms=(LinTerm(si, _I(n), _I(n)),)),),),
        ))
    if eps is None:
        eps = _auto_eps(data_norm_pool)
    return tuple(blocks), eps


def build_analysis_problem(cls: SwitchedClosedLoop, g: WhrtGraph,
                           eps: float | None = None) -> LmiProblem:
    """Edge LMIs for a two-mode switched closed loop over a {0,1} graph."""
    if set(g.alphabet) - {0, 1}:
        raise LmiError("non-lifted analysis needs a graph over labels {0, 1}")
    n = cls.n_cl
    specs = [VariableSpec("gamma", 1, 1)]
    for name in g.nodes:
        specs.append(VariableSpec(f"S[{name}]", n, n, symmetric=True))
        specs.append(VariableSpec(f"G[{name}]", n, n))

    def variables(i):
        name = g.nodes[i]
        return f"S[{name}]", f"G[{name}]", None

    def edge_data(l):
        return cls.Acl[l], cls.Ccl[l], cls.Bw[l], cls.Dw[l]

    blocks, eps = _assemble(g, n, edge_data, variables, eps)
    return LmiProblem(tuple(specs), blocks, "gamma", eps)


def build_lifted_analysis_problem(f: LiftedFamily, K, g: WhrtGraph,
                                  eps: float | None = None) -> LmiProblem:
    """Edge LMIs for the lifted closed loop; block sizes vary per label."""
    from .systems import lifted_closed_loop

    missing = set(l for _, _, l in g.edges) - set(f.modes)
    if missing:
        raise LmiError(f"graph labels {sorted(missing)} missing from the lifted family")
    n = f.plant.n
    cl = lifted_closed_loop(f, K)
    specs = [VariableSpec("gamma", 1, 1)]
    for name in g.nodes:
        specs.append(VariableSpec(f"S[{name}]", n, n, symmetric=True))
        specs.append(VariableSpec(f"G[{name}]", n, n))

    def variables(i):
        name = g.nodes[i]
        return f"S[{name}]", f"G[{name}]", None

    def edge_data(l):
        Acl, Ccl = cl[l]
        return Acl, Ccl, f.modes[l].Bw, f.modes[l].Dw

    blocks, eps = _assemble(g, n, edge_data, variables, eps)
    return LmiProblem(tuple(specs), blocks, "gamma", eps)


def build_synthesis_problem(f: LiftedFamily, g: WhrtGraph, switched: bool = False,
                            eps: float | None = None) -> LmiProblem:
    """Edge LMIs with open-loop blocks A G + B R, C G + D R."""
    missing = set(l for _, _, l in g.edges) - set(f.modes)
    if missing:
        raise LmiError(f"graph labels {sorted(missing)} missing from the lifted family")
    n, m = f.plant.n, f.plant.m
    specs = [VariableSpec("gamma", 1, 1)]
    for name in g.nodes:
        specs.append(VariableSpec(f"S[{name}]", n, n, symmetric=True))
    if switched:
        for name in g.nodes:
            specs.append(VariableSpec(f"G[{name}]", n, n))
            specs.append(VariableSpec(f"R[{name}]", m, n))
    else:
        specs.append(VariableSpec("G", n, n))
        specs.append(VariableSpec("R", m, n))

    def variables(i):
        name = g.nodes[i]
        if switched:
            return f"S[{name}]", f"G[{name}]", f"R[{name}]"
        return f"S[{name}]", "G", "R"

    def edge_data(l):
        md = f.modes[l]
        return (md.A, md.B), (md.C, md.D), md.Bw, md.Dw

    blocks, eps = _assemble(g, n, edge_data, variables, eps)
    return LmiProblem(tuple(specs), blocks, "gamma", eps)


# ---------------------------------------------------------------------------
# numeric evaluation / verification
# ---------------------------------------------------------------------------


def _entry_value(entry: Entry, values) -> np.ndarray:
    out = np.zeros(entry.shape)
    if entry.const is not None:
        out = out + entry.const
    for t in entry.terms:
        if isinstance(t, ScalarTerm):
            out = out + float(values[t.var]) * t.coeff
        else:
            v = np.atleast_2d(values[t.var])
            if t.transpose:
                v = v.T
            out = out + t.left @ v @ t.right
    return out


def evaluate_block(block: BlockConstraint, values) -> np.ndarray:
    rows = [np.hstack([_entry_value(e, values) for e in row]) for row in block.grid]
    M = np.vstack(rows)
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    tol: float
    min_eigenvalue: float
    per_block: tuple[tuple[str, float], ...]
    failed_blocks: tuple[str, ...]
    s_positive_definite: bool


def _certificate_norm(values) -> float:
    # the scalar gain is excluded: it may dwarf the matrix variables and
    # must not loosen the verification tolerance
    return max(
        (np.linalg.norm(np.atleast_2d(v), 2) for v in values.values()
         if np.ndim(v) >= 1),
        default=0.0,
    )


def verify_certificate(cert, problem: LmiProblem,
                       tol_verify: float | None = None) -> VerificationReport:
    """Substitute certificate values into every edge LMI and report the
    per-block minimum eigenvalue.

    Passes iff every block clears half the strict margin the problem was
    solved with (minus a small tolerance for solver noise) and every S
    matrix is positive definite.  Checking against the margin, not just
    zero, rejects near-zero ghost solutions some backends emit for
    infeasible problems.
    """
    values = cert if isinstance(cert, dict) else cert.values
    if tol_verify is None:
        tol_verify = 1e-8 * (1.0 + _certificate_norm(values))
    threshold = 0.5 * problem.eps - tol_verify
    per_block = []
    failed = []
    for block in problem.constraints:
        M = evaluate_block(block, values)
        lam = float(np.linalg.eigvalsh(M)[0])
        per_block.append((block.label, lam))
        if lam < threshold:
            failed.append(block.label)
    s_ok = True
    for spec in problem.variables:
        if spec.name.startswith("S"):
            lam = float(np.linalg.eigvalsh(np.atleast_2d(values[spec.name]))[0])
            if lam <= 0:
                s_ok = False
    min_eig = min((lam for _, lam in per_block), default=float("inf"))
    return VerificationReport(
        passed=not failed and s_ok,
        tol=tol_verify,
        min_eigenvalue=min_eig,
        per_block=tuple(per_block),
        failed_blocks=tuple(failed),
        s_positive_definite=s_ok,
    )


# ---------------------------------------------------------------------------
# cvxpy backend
# ---------------------------------------------------------------------------

_SOLVER_PREFERENCE = ("CLARABEL", "SCS")


def solve_problem(problem: LmiProblem, solver: str | None = None,
                  gamma_fixed: float | None = None) -> dict:
    """Solve the conic program through cvxpy and return variable values.

    With gamma_fixed the gain is pinned and only feasibility is checked
    (used by the bisection fallback)."""
    import cvxpy as cp

    cvars = {}
    for spec in problem.variables:
        if spec.name == problem.objective:
            cvars[spec.name] = cp.Variable(name=spec.name)
        elif spec.symmetric:
            cvars[spec.name] = cp.Variable((spec.rows, spec.cols), symmetric=True,
                                           name=spec.name)
        else:
            cvars[spec.name] = cp.Variable((spec.rows, spec.cols), name=spec.name)

    def lookup(name):
        if gamma_fixed is not None and name == problem.objective:
            return gamma_fixed
        return cvars[name]

    constraints = []
    for block in problem.constraints:
        grid = []
        for row in block.grid:
            grid_row = []
            for e in row:
                expr = e.const if e.const is not None else np.zeros(e.shape)
                for t in e.terms:
                    if isinstance(t, ScalarTerm):
                        expr = expr + lookup(t.var) * t.coeff
                    else:
                        v = lookup(t.var)
                        if t.transpose:
                            v = v.T
                        expr = expr + t.left @ v @ t.right
                grid_row.append(expr)
            grid.append(grid_row)
        M = cp.bmat(grid)
        constraints.append(M >> problem.eps * np.eye(M.shape[0]))

    if gamma_fixed is None:
        objective = cp.Minimize(cvars[problem.objective])
    else:
        objective = cp.Minimize(0)
    prob = cp.Problem(objective, constraints)

    solvers = (solver,) if solver else _SOLVER_PREFERENCE
    last_exc = None
    for name in solvers:
        try:
            prob.solve(solver=name)
        except cp.error.SolverError as exc:
            last_exc = exc
            continue
        if prob.status in ("optimal", "optimal_inaccurate"):
            out = {}
            for spec in problem.variables:
                if gamma_fixed is not None and spec.name == problem.objective:
                    out[spec.name] = np.array(gamma_fixed)
                else:
                    out[spec.name] = np.atleast_2d(np.asarray(cvars[spec.name].value))
            out[problem.objective] = float(np.squeeze(out[problem.objective]))
            return out
        if prob.status in ("infeasible", "infeasible_inaccurate"):
            raise Infeasible(f"no certificate found (solver status {prob.status})")
        last_exc = RuntimeError(f"solver status {prob.status}")
    raise SolverFailure(f"all backends failed: {last_exc}")


def solve_problem_bisection(problem: LmiProblem, solver: str | None = None,
                            rel_tol: float = 1e-6) -> dict:
    """Fallback gain minimization by bisection on feasibility, for
    backends without linear-objective support."""

    def probe(gam):
        values = solve_problem(problem, solver, gamma_fixed=gam)
        # backends occasionally report near-zero ghost solutions as
        # optimal; accept a probe only if the certificate checks out
        if not verify_certificate(values, problem).passed:
            raise Infeasible(f"no verifiable certificate at gain {gam:g}")
        return values

    hi = 1.0
    feasible_values = None
    for _ in range(60):
        try:
            feasible_values = probe(hi)
            break
        except Infeasible:
            hi *= 2.0
    if feasible_values is None:
        raise Infeasible("no certificate found up to the bisection gain cap")
    lo = 0.0
    while hi - lo > rel_tol * (1.0 + hi):
        mid = 0.5 * (lo + hi)
        try:
            feasible_values = probe(mid)
            hi = mid
        except Infeasible:
            lo = mid
    feasible_values[problem.objective] = hi
    return feasible_values


# ---------------------------------------------------------------------------
# certificates and high-level operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisCertificate:
    gamma: float
    S: dict[str, np.ndarray] = field(repr=False)
    G: dict[str, np.ndarray] = field(repr=False)
    margin: float
    values: dict = field(repr=False)


@dataclass(frozen=True)
class SynthesisResult:
    K: object  # ndarray, or node-name -> ndarray when switched
    gamma: float
    certificate: AnalysisCertificate
    switched: bool


def _certify(problem, g, solver, bisection, tol_verify):
    """Solve and verify, falling back from direct gain minimization to
    fixed-gamma bisection.

    Minimizing the gain directly can make backends fail or return garbage
    when no gain is certifiable at all; the fixed-gamma feasibility probes
    of the bisection cleanly separate infeasibility from backend failure.
    """
    if not bisection:
        try:
            values = solve_problem(problem, solver)
            return _package_certificate(values, problem, g, tol_verify)
        except Infeasible:
            raise
        except SolverFailure:
            pass
    values = solve_problem_bisection(problem, solver)
    return _package_certificate(values, problem, g, tol_verify)


def _package_certificate(values, problem, g, tol_verify):
    report = verify_certificate(values, problem, tol_verify)
    if not report.passed:
        raise SolverFailure(
            f"solver returned an invalid certificate (blocks {report.failed_blocks})"
        )
    S = {name: values[f"S[{name}]"] for name in g.nodes}
    if "G" in values:
        G = {name: values["G"] for name in g.nodes}
    else:
        G = {name: values[f"G[{name}]"] for name in g.nodes}
    return AnalysisCertificate(
        gamma=float(values["gamma"]), S=S, G=G,
        margin=report.min_eigenvalue, values=dict(values),
    )


def analyze_nonlifted(cls: SwitchedClosedLoop, g: WhrtGraph, *, solver=None,
                      eps=None, tol_verify=None, bisection=False) -> AnalysisCertificate:
    """Certified l2 gain of a two-mode switched closed loop over a {0,1}
    constraint graph."""
    problem = build_analysis_problem(cls, g, eps)
    return _certify(problem, g, solver, bisection, tol_verify)


def analyze_lifted(f: LiftedFamily, K, g: WhrtGraph, *, solver=None,
                   eps=None, tol_verify=None, bisection=False) -> AnalysisCertificate:
    """Certified l2 gain through the lifted system over the block graph."""
    problem = build_lifted_analysis_problem(f, K, g, eps)
    return _certify(problem, g, solver, bisection, tol_verify)


def synthesize(f: LiftedFamily, g: WhrtGraph, switched: bool = False, *,
               solver=None, eps=None, tol_verify=None,
               bisection=False) -> SynthesisResult:
    """State-feedback gains minimizing the certified l2 gain.

    Non-switched: a single K = R G^{-1} applied at every successful
    attempt.  Switched: per-node K_i = R_i G_i^{-1} selected by the active
    graph node, i.e. by the recent loss history."""
    problem = build_synthesis_problem(f, g, switched, eps)
    cert = _certify(problem, g, solver, bisection, tol_verify)
    values = cert.values
    if switched:
        K = {}
        for name in g.nodes:
            Gv = values[f"G[{name}]"]
            if np.linalg.cond(Gv) > COND_LIMIT:
                raise IllConditionedG(f"G[{name}] condition number exceeds {COND_LIMIT:.0e}")
            K[name] = values[f"R[{name}]"] @ np.linalg.inv(Gv)
    else:
        Gv = values["G"]
        if np.linalg.cond(Gv) > COND_LIMIT:
            raise IllConditionedG(f"G condition number exceeds {COND_LIMIT:.0e}")
        K = values["R"] @ np.linalg.inv(Gv)
    return SynthesisResult(K=K, gamma=cert.gamma, certificate=cert, switched=switched)


def evaluate_lyapunov(cert: AnalysisCertificate, tracker: NodeTracker, x) -> float:
    """x' S_i^{-1} x for the tracker's current node i."""
    x = np.asarray(x, dtype=float).reshape(-1)
    S = cert.S[tracker.node_name]
    if np.linalg.cond(S) > 1e12:
        raise SingularS(f"S[{tracker.node_name}] is numerically singular")
    return float(x @ np.linalg.solve(S, x))


# ---------------------------------------------------------------------------
# certificate file format
# ---------------------------------------------------------------------------

_CERT_HEADER = "whrtperf-certificate 1"


def format_certificate(obj) -> str:
    """Serialize a certificate or synthesis result to the structured
    numeric text format (version header line, then JSON)."""
    import json

    if isinstance(obj, SynthesisResult):
        cert = obj.certificate
        if obj.switched:
            kdata = {name: np.asarray(k).tolist() for name, k in obj.K.items()}
        else:
            kdata = np.asarray(obj.K).tolist()
        body = {"kind": "synthesis", "switched": obj.switched, "K": kdata}
    else:
        cert = obj
        body = {"kind": "analysis"}
    body.update({
        "gamma": cert.gamma,
        "margin": cert.margin,
        "S": {name: m.tolist() for name, m in cert.S.items()},
        "G": {name: m.tolist() for name, m in cert.G.items()},
    })
    return _CERT_HEADER + "\n" + json.dumps(body, indent=1, sort_keys=True) + "\n"


def parse_certificate(text: str):
    import json

    header, _, rest = text.partition("\n")
    if header.strip() != _CERT_HEADER:
        raise LmiError(f"unsupported certificate header {header!r}")
    body = json.loads(rest)
    S = {name: np.asarray(m, dtype=float) for name, m in body["S"].items()}
    G = {name: np.asarray(m, dtype=float) for name, m in body["G"].items()}
    values = {"gamma": body["gamma"]}
    values.update({f"S[{k}]": v for k, v in S.items()})
    values.update({f"G[{k}]": v for k, v in G.items()})
    cert = AnalysisCertificate(gamma=body["gamma"], S=S, G=G,
                               margin=body["margin"], values=values)
    if body["kind"] == "synthesis":
        if body["switched"]:
            K = {name: np.asarray(k, dtype=float) for name, k in body["K"].items()}
        else:
            K = np.asarray(body["K"], dtype=float)
        return SynthesisResult(K=K, gamma=cert.gamma, certificate=cert,
                               switched=body["switched"])
    return cert
