"""Constraint automata generating admissible loss sequences.

Two flavours of labeled directed graph are produced per window constraint:

* the loss graph over labels {0, 1}, whose infinite label sequences are
  exactly the admissible loss sequences, and
* the lifted graph over labels {0, ..., s-1}, where an edge labeled a
  stands for a losses followed by one successful attempt.

The lifted graph is built first, as a minimized deterministic automaton
over the block alphabet; the loss graph is obtained by expanding each
block edge into a chain of 0-edges followed by a 1-edge.  This expansion
reproduces the published graph sizes, which a plain minimized automaton
over {0, 1} does not (it merges states across block boundaries).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

from .constraints import WhrtConstraint


class GraphError(ValueError):
    pass


class InfeasibleConstraint(GraphError):
    """No admissible infinite sequence exists."""


class UnliftableConstraint(GraphError):
    """The constraint admits unbounded loss runs, so no finite block
    alphabet can represent it (vacuous AnyMiss(s,s) / RowMiss(s,s))."""


class GraphNotDeterministic(GraphError):
    pass


class InadmissibleLabel(GraphError):
    """Observed label has no outgoing edge at the current node."""


@dataclass(frozen=True)
class WhrtGraph:
    """Immutable labeled directed graph.

    nodes are identifiers "v1".."vn"; edges are (src, dst, label) index
    triples; initial_nodes are the node indices valid at time 0.
    """

    nodes: tuple[str, ...]
    edges: tuple[tuple[int, int, int], ...]
    alphabet: tuple[int, ...]
    initial_nodes: tuple[int, ...]

    @cached_property
    def out_edges(self) -> dict[int, list[tuple[int, int]]]:
        """node -> list of (label, successor)."""
        out: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(self.nodes))}
        for i, j, l in self.edges:
            out[i].append((l, j))
        return out

    def successors(self, node: int, label: int) -> list[int]:
        return [j for l, j in self.out_edges[node] if l == label]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def is_deterministic(g: WhrtGraph) -> bool:
    for i in range(g.n_nodes):
        labels = [l for l, _ in g.out_edges[i]]
        if len(labels) != len(set(labels)):
            return False
    return True


def validate_structure(g: WhrtGraph) -> None:
    """Check the defining structural properties; raise GraphError if violated.

    Every node needs at least one outgoing edge (so every finite path
    extends), every non-initial node needs an incoming edge (initial
    nodes may be transient, e.g. the fresh-start state of run-based
    constraints), all labels must lie in the declared alphabet, and at
    least one initial node must exist.
    """
    if not g.nodes:
        raise GraphError("graph has no nodes")
    if not g.initial_nodes:
        raise GraphError("graph has no initial nodes")
    has_in = set()
    has_out = set()
    for i, j, l in g.edges:
        if l not in g.alphabet:
            raise GraphError(f"label {l} not in alphabet {g.alphabet}")
        has_out.add(i)
        has_in.add(j)
    no_out = set(range(g.n_nodes)) - has_out
    if no_out:
        names = sorted(g.nodes[i] for i in no_out)
        raise GraphError(f"nodes without outgoing edges: {names}")
    no_in = set(range(g.n_nodes)) - has_in - set(g.initial_nodes)
    if no_in:
        names = sorted(g.nodes[i] for i in no_in)
        raise GraphError(f"non-initial nodes without incoming edges: {names}")


# ---------------------------------------------------------------------------
# internal automaton machinery (dict-of-dicts, hashable states)
# ---------------------------------------------------------------------------


def _window_dfa(c: WhrtConstraint):
    """Deterministic automaton over {0,1} tracking the last s-1 bits.

    States are bit tuples (shorter near the start of the sequence); a
    transition appending a bit exists iff the window it completes, if any,
    meets the constraint.  States not on any infinite path are removed.
    Returns (initial_state, transitions); the initial state is the empty
    history.
    """
    init = ()
    keep = max(c.s - 1, 0)
    trans: dict[tuple, dict[int, tuple]] = {}
    queue = deque([init])
    seen = {init}
    while queue:
        st = queue.popleft()
        trans[st] = {}
        for b in (0, 1):
            h = st + (b,)
            if len(h) >= c.s and not c.window_ok(h[-c.s:]):
                continue
            nst = h[-keep:] if keep else ()
            trans[st][b] = nst
            if nst not in seen:
                seen.add(nst)
                queue.append(nst)
    _trim_live(trans)
    return init, trans


def _trim_live(trans) -> None:
    """Restrict to states with at least one infinite outgoing path."""
    live = set(trans)
    changed = True
    while changed:
        dead = {st for st in live if not any(n in live for n in trans[st].values())}
        changed = bool(dead)
        live -= dead
    for st in list(trans):
        if st not in live:
            del trans[st]
        else:
            trans[st] = {b: n for b, n in trans[st].items() if n in live}


def _minimize_dfa(init, trans, alphabet):
    """Moore partition refinement on outgoing (label -> class) signatures.

    All states are accepting (safety language); two states merge iff they
    generate the same label sequences.  Returns (initial_class, class
    transitions) with deterministic class numbering.
    """
    states = sorted(trans)
    part = {st: 0 for st in states}
    n_classes = 1
    while True:
        sigs = {}
        for st in states:
            sig = (part[st],) + tuple(
                part[trans[st][a]] if a in trans[st] else -1 for a in alphabet
            )
            sigs[st] = sig
        renum: dict[tuple, int] = {}
        for st in states:
            renum.setdefault(sigs[st], len(renum))
        part = {st: renum[sigs[st]] for st in states}
        if len(renum) == n_classes:
            break
        n_classes = len(renum)
    qtrans: dict[int, dict[int, int]] = {}
    for st in states:
        c = part[st]
        row = qtrans.setdefault(c, {})
        for a, n in trans[st].items():
            row[a] = part[n]
    return part[init], qtrans


def _canonical_graph(edges, initials, alphabet) -> WhrtGraph:
    """Renumber nodes breadth-first from the initial nodes, exploring
    edges in label order, so identifiers are stable across runs."""
    adj: dict = {}
    for u, v, l in edges:
        adj.setdefault(u, []).append((l, v))
        adj.setdefault(v, [])
    order: dict = {}
    queue = deque()
    for u in initials:
        if u not in order:
            order[u] = len(order)
            queue.append(u)
    while queue:
        u = queue.popleft()
        for l, v in sorted(adj[u], key=lambda e: (e[0], order.get(e[1], len(adj)))):
            if v not in order:
                order[v] = len(order)
                queue.append(v)
    if len(order) != len(adj):
        raise GraphError("graph has nodes unreachable from the initial nodes")
    nodes = tuple(f"v{k + 1}" for k in range(len(order)))
    new_edges = sorted((order[u], order[v], l) for u, v, l in edges)
    return WhrtGraph(
        nodes=nodes,
        edges=tuple(new_edges),
        alphabet=tuple(alphabet),
        initial_nodes=tuple(sorted(order[u] for u in set(initials))),
    )


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def build_lifted_graph(c: WhrtConstraint) -> WhrtGraph:
    """Minimized deterministic graph over block labels {0, ..., s-1}.

    An edge labeled a corresponds to the loss block (0^a 1): a losses
    followed by one success.  States are the constraint histories seen
    just after a success (plus the fresh start), merged when language
    equivalent.
    """
    if c.is_vacuous:
        raise UnliftableConstraint(
            f"{c} admits unbounded loss runs and has no lifted representation"
        )
    init, trans = _window_dfa(c)
    if init not in trans:
        raise InfeasibleConstraint(f"{c} admits no infinite sequence")

    def block_step(st, alpha):
        for _ in range(alpha):
            st = trans[st].get(0)
            if st is None:
                return None
        return trans[st].get(1)

    ltrans: dict[tuple, dict[int, tuple]] = {}
    queue = deque([init])
    seen = {init}
    while queue:
        st = queue.popleft()
        ltrans[st] = {}
        for alpha in range(c.s):
            nst = block_step(st, alpha)
            if nst is None:
                continue
            ltrans[st][alpha] = nst
            if nst not in seen:
                seen.add(nst)
                queue.append(nst)
    _trim_live(ltrans)
    if init not in ltrans:
        raise InfeasibleConstraint(f"{c} admits no infinite block sequence")
    qinit, qtrans = _minimize_dfa(init, ltrans, range(c.s))
    edges = [(i, j, l) for i in qtrans for l, j in qtrans[i].items()]
    return _canonical_graph(edges, [qinit], range(c.s))


def build_graph(c: WhrtConstraint) -> WhrtGraph:
    """Graph over {0, 1} generating exactly the admissible loss sequences.

    Built by expanding the minimized lifted graph, which matches the
    published node/edge counts.  Vacuous constraints (which admit every
    sequence) fall back to the minimized history automaton, a single node
    with 0- and 1-self-loops.
    """
    if c.is_vacuous:
        return _window_graph(c)
    return unlift(build_lifted_graph(c))


def _window_graph(c: WhrtConstraint) -> WhrtGraph:
    """Minimized deterministic history automaton over {0, 1}."""
    init, trans = _window_dfa(c)
    if init not in trans:
        raise InfeasibleConstraint(f"{c} admits no infinite sequence")
    qinit, qtrans = _minimize_dfa(init, trans, (0, 1))
    edges = [(i, j, l) for i in qtrans for l, j in qtrans[i].items()]
    return _canonical_graph(edges, [qinit], (0, 1))


def unlift(g: WhrtGraph) -> WhrtGraph:
    """Expand a lifted graph into a loss graph over {0, 1}.

    Every edge labeled a >= 1 becomes a chain of a fresh nodes carrying
    0-labels followed by a final 1-edge; edges labeled 0 become single
    1-edges.
    """
    edges = []
    fresh = 0
    for i, j, l in g.edges:
        prev = ("n", i)
        for _ in range(l):
            node = ("c", fresh)
            fresh += 1
            edges.append((prev, node, 0))
            prev = node
        edges.append((prev, ("n", j), 1))
    initials = [("n", i) for i in g.initial_nodes]
    return _canonical_graph(edges, initials, (0, 1))


def minimize(g: WhrtGraph) -> WhrtGraph:
    """Merge language-equivalent nodes of a deterministic graph."""
    if not is_deterministic(g):
        raise GraphNotDeterministic("minimize requires a deterministic graph")
    trans = {i: {l: j for l, j in g.out_edges[i]} for i in range(g.n_nodes)}
    parts = [_minimize_dfa(i, trans, g.alphabet) for i in g.initial_nodes]
    # class numbering is identical across calls; reuse the last transitions
    qtrans = parts[0][1]
    edges = [(i, j, l) for i in qtrans for l, j in qtrans[i].items()]
    initials = [p[0] for p in parts]
    return _canonical_graph(edges, initials, g.alphabet)


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------


def generates(g: WhrtGraph, word) -> bool:
    """True iff some path from an initial node spells the word."""
    current = set(g.initial_nodes)
    for label in word:
        if label not in g.alphabet:
            raise GraphError(f"label {label} not in alphabet {g.alphabet}")
        current = {j for i in current for j in g.successors(i, label)}
        if not current:
            return False
    return True


def generated_words(g: WhrtGraph, length: int) -> set[tuple[int, ...]]:
    """All label words of exactly the given length spelled from the
    initial nodes.  Exponential in the worst case; intended for tests."""
    frontier: dict[frozenset, set] = {frozenset(g.initial_nodes): {()}}
    for _ in range(length):
        nxt: dict[frozenset, set] = {}
        for nodes, words in frontier.items():
            for label in g.alphabet:
                succ = frozenset(j for i in nodes for j in g.successors(i, label))
                if not succ:
                    continue
                bucket = nxt.setdefault(succ, set())
                bucket.update(w + (label,) for w in words)
        frontier = nxt
    out: set[tuple[int, ...]] = set()
    for words in frontier.values():
        out.update(words)
    return out


def find_run(g: WhrtGraph, word) -> list[int] | None:
    """One node path spelling the word, or None.  Works on
    nondeterministic graphs via depth-first search."""
    word = tuple(word)

    def dfs(node, pos):
        if pos == len(word):
            return [node]
        for j in g.successors(node, word[pos]):
            rest = dfs(j, pos + 1)
            if rest is not None:
                return [node] + rest
        return None

    for start in g.initial_nodes:
        run = dfs(start, 0)
        if run is not None:
            return run
    return None


@dataclass(frozen=True)
class NodeTracker:
    """Tracks the active graph node while labels are observed online.

    Advancing returns a new tracker; the graph must be deterministic at
    the visited nodes so the successor is unique.
    """

    graph: WhrtGraph = field(repr=False)
    current: int

    @property
    def node_name(self) -> str:
        return self.graph.nodes[self.current]

    def step(self, label: int) -> "NodeTracker":
        succ = self.graph.successors(self.current, label)
        if not succ:
            raise InadmissibleLabel(
                f"no edge labeled {label} at node {self.node_name}: "
                "the observed loss process violates the constraint"
            )
        if len(succ) > 1:
            raise GraphNotDeterministic(
                f"label {label} ambiguous at node {self.node_name}"
            )
        return NodeTracker(self.graph, succ[0])


def step(tracker: NodeTracker, label: int) -> NodeTracker:
    return tracker.step(label)


def language_included(c2: WhrtConstraint, c1: WhrtConstraint) -> bool:
    """Exact inclusion check: every c2-admissible infinite sequence is
    c1-admissible.

    Runs a product walk of the two trimmed history automata; inclusion
    fails iff the c2 automaton can take a transition the c1 automaton
    cannot.  Trimmed safety automata make the finite-prefix check
    equivalent to inclusion of the infinite languages.
    """
    init2, trans2 = _window_dfa(c2)
    init1, trans1 = _window_dfa(c1)
    if init2 not in trans2:
        return True  # empty language is included in everything
    if init1 not in trans1:
        return False
    seen = {(init2, init1)}
    queue = deque([(init2, init1)])
    while queue:
        q2, q1 = queue.popleft()
        for b, n2 in trans2[q2].items():
            n1 = trans1[q1].get(b)
            if n1 is None:
                return False
            if (n2, n1) not in seen:
                seen.add((n2, n1))
                queue.append((n2, n1))
    return True


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def export_dot(g: WhrtGraph) -> str:
    lines = ["digraph whrt {"]
    for k, name in enumerate(g.nodes):
        shape = "doublecircle" if k in g.initial_nodes else "circle"
        lines.append(f'  {name} [shape={shape}];')
    for i, j, l in sorted(g.edges):
        lines.append(f'  {g.nodes[i]} -> {g.nodes[j]} [label="{l}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def dump_graph(g: WhrtGraph) -> str:
    """Compact structured text form, round-trippable via parse_graph."""
    lines = ["whrt-graph 1"]
    lines.append("alphabet " + " ".join(str(a) for a in g.alphabet))
    lines.append("initial " + " ".join(g.nodes[i] for i in g.initial_nodes))
    for name in g.nodes:
        lines.append(f"node {name}")
    for i, j, l in sorted(g.edges):
        lines.append(f"edge {g.nodes[i]} {g.nodes[j]} {l}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> WhrtGraph:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "whrt-graph 1":
        raise GraphError("missing or unsupported graph format header")
    alphabet: tuple[int, ...] = ()
    initial_names: list[str] = []
    nodes: list[str] = []
    raw_edges: list[tuple[str, str, int]] = []
    for ln in lines[1:]:
        head, *rest = ln.split()
        if head == "alphabet":
            alphabet = tuple(int(a) for a in rest)
        elif head == "initial":
            initial_names = rest
        elif head == "node":
            nodes.append(rest[0])
        elif head == "edge":
            raw_edges.append((rest[0], rest[1], int(rest[2])))
        else:
            raise GraphError(f"unknown line in graph dump: {ln!r}")
    index = {name: k for k, name in enumerate(nodes)}
    edges = tuple((index[u], index[v], l) for u, v, l in raw_edges)
    return WhrtGraph(
        nodes=tuple(nodes),
        edges=edges,
        alphabet=alphabet,
        initial_nodes=tuple(index[n] for n in initial_names),
    )
