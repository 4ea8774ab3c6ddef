"""Buchi automata: LTL translation, process mappings, products, emptiness.

The emptiness check is a nested depth-first search over the on-the-fly
product of the composed system with a negated-property automaton; an
explicit SCC-based oracle provides the independent cross-check used by the
test suite.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, List, Optional, Sequence, Tuple

from . import ltl
from .kernel import ActionLabel, CompositeState, ProcessDef, System, TAU, Transition


class ResourceLimit(Exception):
    """State or memory cap exceeded; the verdict is inconclusive, never Safe."""


class UnknownProposition(ValueError):
    pass


@dataclass(frozen=True)
class Guard:
    """Conjunction of literals over atomic propositions."""

    pos: frozenset
    neg: frozenset

    def satisfies(self, labels: frozenset) -> bool:
        return self.pos <= labels and not (self.neg & labels)

    @property
    def is_true(self) -> bool:
        return not self.pos and not self.neg

    def __str__(self) -> str:
        lits = sorted(self.pos) + [f"!{a}" for a in sorted(self.neg)]
        return " && ".join(lits) if lits else "true"


TRUE_GUARD = Guard(frozenset(), frozenset())


def symbol_matches(symbol: Hashable, letter: Hashable) -> bool:
    if isinstance(symbol, Guard):
        return symbol.satisfies(letter)
    return symbol == letter


@dataclass
class BuchiAutomaton:
    """(Q, Sigma, delta, Q0, F).  Transition symbols are either Guards
    (evaluated against label sets) or plain symbols (matched by equality)."""

    states: tuple
    transitions: tuple  # (source, symbol, target)
    initial: tuple
    accepting: frozenset

    def __post_init__(self) -> None:
        self.states = tuple(self.states)
        self.transitions = tuple(self.transitions)
        self.initial = tuple(self.initial)
        self.accepting = frozenset(self.accepting)
        state_set = set(self.states)
        for q, _, q2 in self.transitions:
            if q not in state_set or q2 not in state_set:
                raise ValueError("transition endpoint outside state set")
        for q in self.initial:
            if q not in state_set:
                raise ValueError("initial state outside state set")

    @property
    def alphabet(self) -> frozenset:
        return frozenset(sym for _, sym, _ in self.transitions)

    def moves_from(self, q: Hashable) -> tuple:
        return tuple((sym, q2) for q0, sym, q2 in self.transitions if q0 == q)


# -- LTL -> BA (closure tableau) ----------------------------------------------


def _subformulas(f: ltl.Formula) -> list:
    seen = []

    def walk(g: ltl.Formula) -> None:
        if g in seen:
            return
        if isinstance(g, (ltl.Not, ltl.Next)):
            walk(g.child)
        elif isinstance(g, (ltl.And, ltl.Until)):
            walk(g.left)
            walk(g.right)
        elif not isinstance(g, (ltl.TrueF, ltl.Prop)):
            raise ValueError(f"ltl_to_buchi expects core syntax, found {type(g).__name__}")
        seen.append(g)

    walk(f)
    return seen


def ltl_to_buchi(f: ltl.Formula) -> BuchiAutomaton:
    """Declarative closure-set tableau with until-obligation tracking,
    degeneralized to a single acceptance set.  States are the consistent
    valuations of the subformula closure; language equality with the input
    formula is enforced by the eval_word oracle in the test suite."""
    sub = _subformulas(f)
    free = [g for g in sub if isinstance(g, (ltl.Prop, ltl.Next, ltl.Until))]
    untils = [g for g in sub if isinstance(g, ltl.Until)]
    props = [g for g in sub if isinstance(g, ltl.Prop)]

    def extend(assignment: dict) -> Optional[frozenset]:
        val = {}
        for g in sub:  # sub is in bottom-up order
            if isinstance(g, ltl.TrueF):
                val[g] = True
            elif g in assignment:
                val[g] = assignment[g]
            elif isinstance(g, ltl.Not):
                val[g] = not val[g.child]
            elif isinstance(g, ltl.And):
                val[g] = val[g.left] and val[g.right]
            else:
                raise AssertionError(g)
        for u in untils:
            if val[u.right] and not val[u]:
                return None
            if val[u] and not val[u.right] and not val[u.left]:
                return None
        return frozenset(g for g in sub if val[g])

    states = []
    for bits in itertools.product((False, True), repeat=len(free)):
        sigma = extend(dict(zip(free, bits)))
        if sigma is not None:
            states.append(sigma)

    nexts = [g for g in sub if isinstance(g, ltl.Next)]

    def can_follow(a: frozenset, b: frozenset) -> bool:
        for g in nexts:
            if (g in a) != (g.child in b):
                return False
        for u in untils:
            holds = (u.right in a) or (u.left in a and u in b)
            if (u in a) != holds:
                return False
        return True

    def guard_of(sigma: frozenset) -> Guard:
        return Guard(
            pos=frozenset(p.name for p in props if p in sigma),
            neg=frozenset(p.name for p in props if p not in sigma),
        )

    initial = [s for s in states if f in s]

    # restrict to states reachable from the initial ones
    reachable = set(initial)
    frontier = list(initial)
    while frontier:
        a = frontier.pop()
        for b in states:
            if b not in reachable and can_follow(a, b):
                reachable.add(b)
                frontier.append(b)
    states = [s for s in states if s in reachable]

    k = len(untils)
    if k == 0:
        transitions = [(a, guard_of(a), b) for a in states for b in states if can_follow(a, b)]
        return BuchiAutomaton(tuple(states), tuple(transitions), tuple(initial), frozenset(states))

    acc_sets = [frozenset(s for s in states if u not in s or u.right in s) for u in untils]

    def advance(i: int, sigma: frozenset) -> int:
        return (i + 1) % k if sigma in acc_sets[i] else i

    dstates = [(s, i) for s in states for i in range(k)]
    dtransitions = []
    for (a, i) in dstates:
        g = guard_of(a)
        j = advance(i, a)
        for b in states:
            if can_follow(a, b):
                dtransitions.append(((a, i), g, (b, j)))
    dinitial = [(s, 0) for s in initial]
    daccepting = frozenset((s, 0) for s in states if s in acc_sets[0])
    auto = BuchiAutomaton(tuple(dstates), tuple(dtransitions), tuple(dinitial), daccepting)
    return _prune_unreachable(auto)


def _prune_unreachable(b: BuchiAutomaton) -> BuchiAutomaton:
    succ = {}
    for q, sym, q2 in b.transitions:
        succ.setdefault(q, []).append(q2)
    reachable = set(b.initial)
    frontier = list(b.initial)
    while frontier:
        q = frontier.pop()
        for q2 in succ.get(q, ()):
            if q2 not in reachable:
                reachable.add(q2)
                frontier.append(q2)
    return BuchiAutomaton(
        tuple(q for q in b.states if q in reachable),
        tuple(t for t in b.transitions if t[0] in reachable),
        b.initial,
        frozenset(q for q in b.accepting if q in reachable),
    )


# -- process <-> BA mappings ---------------------------------------------------


def process_to_ba(p: ProcessDef, accept_prop: str) -> BuchiAutomaton:
    if accept_prop not in p.atomic_props:
        raise UnknownProposition(f"{accept_prop!r} not in AP of process {p.pid}")
    symbols_seen = set()
    transitions = []
    for t in p.transitions:
        transitions.append((t.source, t.action, t.target))
        symbols_seen.add(t.action)
    accepting = frozenset(s for s in p.states if accept_prop in p.labeling[s])
    return BuchiAutomaton(tuple(sorted(p.states, key=repr)), tuple(transitions),
                          (p.initial,), accepting)


FRESH_INITIAL = "__ba_initial__"


def ba_to_process(b: BuchiAutomaton, pid: str = "ba") -> ProcessDef:
    """Backward mapping: all symbols become inputs, accepting states are
    labeled ``accept``; a fresh initial state with silent edges is added
    only when the automaton has several initial states."""
    add_fresh = len(b.initial) > 1
    states = set(b.states)
    transitions = [Transition(q, sym, q2) for q, sym, q2 in b.transitions]
    if add_fresh:
        initial = FRESH_INITIAL
        states.add(FRESH_INITIAL)
        transitions = [Transition(FRESH_INITIAL, TAU, q) for q in b.initial] + transitions
    else:
        initial = b.initial[0] if b.initial else FRESH_INITIAL
        if not b.initial:
            states.add(FRESH_INITIAL)
    inputs = frozenset(sym for _, sym, _ in b.transitions
                       if not (isinstance(sym, ActionLabel) and sym.kind == "internal"))
    labeling = {s: frozenset(["accept"]) if s in b.accepting else frozenset() for s in states}
    return ProcessDef(
        pid=pid,
        atomic_props=frozenset(["accept"]),
        inputs=inputs,
        outputs=frozenset(),
        states=frozenset(states),
        initial=initial,
        transitions=tuple(transitions),
        labeling=labeling,
    )


# -- lasso membership ----------------------------------------------------------


def accepts_lasso(b: BuchiAutomaton, prefix: Sequence, cycle: Sequence) -> bool:
    """Does the automaton accept prefix . cycle^omega?  Decided on the finite
    product of automaton states with word positions (cycle positions repeat)."""
    if not cycle:
        raise ValueError("cycle must be nonempty")
    letters = list(prefix) + list(cycle)
    total = len(letters)
    loop_to = len(prefix)

    def succ_pos(i: int) -> int:
        return i + 1 if i + 1 < total else loop_to

    moves = {}
    for q, sym, q2 in b.transitions:
        moves.setdefault(q, []).append((sym, q2))

    def successors(node: tuple) -> Iterator[tuple]:
        q, i = node
        for sym, q2 in moves.get(q, ()):
            if symbol_matches(sym, letters[i]):
                yield None, (q2, succ_pos(i))

    initials = [(q, 0) for q in b.initial]
    result = nested_dfs(initials, successors, lambda n: n[0] in b.accepting)
    return result is not None


# -- nested depth-first search -------------------------------------------------


@dataclass
class SearchStats:
    states: int = 0
    transitions: int = 0


def nested_dfs(
    initials: Sequence,
    successors: Callable,
    is_accepting: Callable,
    node_cap: Optional[int] = None,
    stats: Optional[SearchStats] = None,
    sink: Optional[Callable] = None,
):
    """Two-pass DFS for an accepting cycle, on the fly.

    ``successors(node)`` yields (edge, node') pairs in a fixed order.
    Returns (prefix_edges, cycle_edges) with edges as (node, edge, node')
    triples, or (prefix_edges, None) when ``sink`` flags a node from which
    any continuation is accepting, or None when no accepting run exists.
    Raises ResourceLimit when the visited set would exceed ``node_cap``.
    """
    if stats is None:
        stats = SearchStats()
    visited1 = set()
    visited2 = set()

    def edges_of(path: list, lo: int, hi: int) -> list:
        return [(path[k][0], path[k + 1][2], path[k + 1][0]) for k in range(lo, hi)]

    for init in initials:
        if init in visited1:
            continue
        if node_cap is not None and len(visited1) >= node_cap:
            raise ResourceLimit(f"product state cap {node_cap} exceeded")
        visited1.add(init)
        stats.states += 1
        if sink is not None and sink(init):
            return [], None, init
        path = [(init, iter(successors(init)), None)]
        on_stack = {init: 0}
        while path:
            node, it, _ = path[-1]
            item = next(it, None)
            if item is not None:
                stats.transitions += 1
                edge, nxt = item
                if nxt not in visited1:
                    if node_cap is not None and len(visited1) >= node_cap:
                        raise ResourceLimit(f"product state cap {node_cap} exceeded")
                    visited1.add(nxt)
                    stats.states += 1
                    if sink is not None and sink(nxt):
                        prefix = edges_of(path, 0, len(path) - 1)
                        prefix.append((node, edge, nxt))
                        return prefix, None, nxt
                    on_stack[nxt] = len(path)
                    path.append((nxt, iter(successors(nxt)), edge))
                continue
            if is_accepting(node) and node not in visited2:
                hit = _inner_dfs(node, successors, on_stack, visited2, stats)
                if hit is not None:
                    path2, closing_edge, target = hit
                    t_pos = on_stack[target]
                    prefix = edges_of(path, 0, t_pos)
                    cycle = edges_of(path, t_pos, len(path) - 1)
                    cycle += edges_of(path2, 0, len(path2) - 1)
                    cycle.append((path2[-1][0], closing_edge, target))
                    return prefix, cycle, target
            del on_stack[node]
            path.pop()
    return None


def _inner_dfs(seed, successors, on_stack, visited2, stats):
    visited2.add(seed)
    path2 = [(seed, iter(successors(seed)), None)]
    while path2:
        node, it, _ = path2[-1]
        item = next(it, None)
        if item is None:
            path2.pop()
            continue
        stats.transitions += 1
        edge, nxt = item
        if nxt in on_stack:
            return path2, edge, nxt
        if nxt not in visited2:
            visited2.add(nxt)
            path2.append((nxt, iter(successors(nxt)), edge))
    return None


# -- explicit-graph SCC oracle ---------------------------------------------------


@dataclass
class ExplicitGraph:
    """Fully materialized product graph for the brute-force oracle."""

    edges: dict  # node -> list of (edge, node')
    initials: tuple
    accepting: frozenset

    def successors(self, node: Hashable) -> list:
        return self.edges.get(node, [])


def scc_emptiness_oracle(graph: ExplicitGraph):
    """SCC-decomposition route to the same verdict as nested_dfs: find a
    reachable nontrivial SCC (or self-loop) containing an accepting node and
    return a concrete lasso, else None.  Test-only machinery."""
    reachable = set(graph.initials)
    frontier = list(graph.initials)
    while frontier:
        n = frontier.pop()
        for _, m in graph.successors(n):
            if m not in reachable:
                reachable.add(m)
                frontier.append(m)

    index = {}
    lowlink = {}
    on_stack = set()
    stack = []
    sccs = []
    counter = itertools.count()

    for root in reachable:
        if root in index:
            continue
        work = [(root, iter(graph.successors(root)))]
        index[root] = lowlink[root] = next(counter)
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            item = next(it, None)
            if item is not None:
                _, m = item
                if m not in index:
                    index[m] = lowlink[m] = next(counter)
                    stack.append(m)
                    on_stack.add(m)
                    work.append((m, iter(graph.successors(m))))
                elif m in on_stack:
                    lowlink[node] = min(lowlink[node], index[m])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index[node]:
                comp = set()
                while True:
                    m = stack.pop()
                    on_stack.discard(m)
                    comp.add(m)
                    if m == node:
                        break
                sccs.append(comp)

    def has_self_loop(n: Hashable) -> bool:
        return any(m == n for _, m in graph.successors(n))

    witness = None
    for comp in sccs:
        if len(comp) == 1:
            n = next(iter(comp))
            if not has_self_loop(n):
                continue
        acc = sorted((n for n in comp if n in graph.accepting), key=repr)
        if acc:
            witness = (comp, acc[0])
            break
    if witness is None:
        return None

    comp, target = witness
    prefix = _bfs_path(graph, graph.initials, target, restrict=None)
    cycle = _bfs_cycle(graph, target, restrict=comp)
    return prefix, cycle


def _bfs_path(graph: ExplicitGraph, sources: Sequence, target: Hashable, restrict):
    if target in sources:
        return []
    parents = {s: None for s in sources}
    queue = list(sources)
    qi = 0
    while qi < len(queue):
        n = queue[qi]
        qi += 1
        for edge, m in graph.successors(n):
            if restrict is not None and m not in restrict:
                continue
            if m not in parents:
                parents[m] = (n, edge)
                if m == target:
                    return _unwind(parents, m)
                queue.append(m)
    raise AssertionError("target unreachable in oracle path construction")


def _bfs_cycle(graph: ExplicitGraph, target: Hashable, restrict):
    parents = {target: None}
    queue = []
    for edge, m in graph.successors(target):
        if m not in restrict:
            continue
        if m == target:
            return [(target, edge, target)]
        if m not in parents:
            parents[m] = (target, edge)
            queue.append(m)
    qi = 0
    while qi < len(queue):
        n = queue[qi]
        qi += 1
        for edge, m in graph.successors(n):
            if m not in restrict:
                continue
            if m == target:
                back = _unwind(parents, n)
                back.append((n, edge, target))
                return back
            if m not in parents:
                parents[m] = (n, edge)
                queue.append(m)
    raise AssertionError("no cycle found inside the SCC")


def _unwind(parents: dict, node: Hashable) -> list:
    steps = []
    while parents[node] is not None:
        prev, edge = parents[node]
        steps.append((prev, edge, node))
        node = prev
    steps.reverse()
    return steps


# -- on-the-fly product emptiness ------------------------------------------------


@dataclass(frozen=True)
class Step:
    state: CompositeState
    ba_state: Hashable
    choice: Optional[tuple]  # (process index, Transition), or None for a stutter step

    def acting(self, system: System) -> str:
        if self.choice is None:
            return "(stutter)"
        return system.processes[self.choice[0]].pid


@dataclass(frozen=True)
class Lasso:
    """Counterexample: the choice in each step leads to the next step's state;
    the last cycle step returns to the cycle head."""

    prefix: tuple
    cycle: tuple
    sink_cycle: bool = False  # cycle found below an accepting true-sink (safety)

    @property
    def finite_witness(self) -> bool:
        """True when the violation is already forced by the finite prefix:
        the cycle sits below an accepting true-sink or is pure deadlock
        stutter.  Renderers truncate the cycle for such verdicts."""
        return self.sink_cycle or all(s.choice is None for s in self.cycle)

    def label_word(self, system: System) -> ltl.LassoWord:
        return ltl.LassoWord(
            prefix=tuple(system.composite_labels(s.state) for s in self.prefix),
            cycle=tuple(system.composite_labels(s.state) for s in self.cycle),
        )

    def replay(self, system: System) -> None:
        """Re-execute through the kernel, asserting each recorded state."""
        state = system.initial_state()
        steps = list(self.prefix) + list(self.cycle)
        head = steps[len(self.prefix)].state if self.cycle else None
        for s in steps:
            assert state == s.state, f"replay diverged at {s}"
            system.assert_capacity(state)
            if s.choice is None:
                assert not system.enabled_transitions(state), "stutter step in live state"
            else:
                state = system.step(state, s.choice)
        if self.cycle:
            assert state == head, "cycle does not return to its head"


def find_accepting_run(
    system: System,
    negated_property: BuchiAutomaton,
    fairness: bool = False,
    state_cap: Optional[int] = 10_000_000,
    stats: Optional[SearchStats] = None,
) -> Optional[Lasso]:
    """Exhaustively search the on-the-fly product for an accepting run.

    Returns None only after complete exploration (the absence certificate);
    raises ResourceLimit when the cap is hit.  With ``fairness`` the search
    accepts only weakly fair runs, via the standard counter construction.
    """
    moves = {}
    for q, sym, q2 in negated_property.transitions:
        moves.setdefault(q, []).append((sym, q2))
    accepting = negated_property.accepting

    tt_sinks = frozenset(
        q for q in accepting
        if any(q2 == q and isinstance(sym, Guard) and sym.is_true
               for sym, q2 in moves.get(q, ())))

    nproc = len(system.processes)

    def sys_steps(s: CompositeState):
        enabled = system.enabled_transitions(s)
        if not enabled:
            return [(None, s)], frozenset(range(nproc))
        disabled = frozenset(range(nproc)) - {pi for pi, _ in enabled}
        return [(choice, system.apply(s, choice)) for choice in enabled], disabled

    if not fairness:
        def successors(node):
            s, q = node
            labels = system.composite_labels(s)
            ba_moves = [(sym, q2) for sym, q2 in moves.get(q, ()) if symbol_matches(sym, labels)]
            if not ba_moves:
                return
            steps, _ = sys_steps(s)
            for choice, s2 in steps:
                for _, q2 in ba_moves:
                    yield choice, (s2, q2)

        initials = [(system.initial_state(), q) for q in negated_property.initial]
        is_acc = lambda node: node[1] in accepting
        is_sink = (lambda node: node[1] in tt_sinks) if tt_sinks else None
    else:
        # weak fairness: counter 0 waits for an accepting product state, counter
        # i in 1..n waits for process i-1 to move or be disabled
        def successors(node):
            s, q, cnt = node
            labels = system.composite_labels(s)
            ba_moves = [(sym, q2) for sym, q2 in moves.get(q, ()) if symbol_matches(sym, labels)]
            if not ba_moves:
                return
            steps, disabled = sys_steps(s)
            for choice, s2 in steps:
                mover = choice[0] if choice is not None else None
                if cnt == 0:
                    cnt2 = 1 % (nproc + 1) if q in accepting else 0
                elif mover == cnt - 1 or (cnt - 1) in disabled:
                    cnt2 = (cnt + 1) % (nproc + 1)
                else:
                    cnt2 = cnt
                for _, q2 in ba_moves:
                    yield choice, (s2, q2, cnt2)

        initials = [(system.initial_state(), q, 0) for q in negated_property.initial]
        is_acc = lambda node: node[2] == 0 and node[1] in accepting
        is_sink = (lambda node: node[1] in tt_sinks) if tt_sinks else None

    result = nested_dfs(initials, successors, is_acc, node_cap=state_cap,
                        stats=stats, sink=is_sink)
    if result is None:
        return None

    prefix_edges, cycle_edges, found = result
    if cycle_edges is None:
        # accepting true-sink reached: any continuation violates; complete a
        # concrete cycle by following first choices until a node repeats
        cycle_edges = _complete_sink_cycle(found, successors, state_cap)
        extra, cycle_edges = cycle_edges
        prefix_edges = prefix_edges + extra
        return Lasso(
            prefix=tuple(_step_of(e) for e in prefix_edges),
            cycle=tuple(_step_of(e) for e in cycle_edges),
            sink_cycle=True,
        )
    sinkish = all(e[0][1] in tt_sinks for e in cycle_edges) if tt_sinks else False
    return Lasso(
        prefix=tuple(_step_of(e) for e in prefix_edges),
        cycle=tuple(_step_of(e) for e in cycle_edges),
        sink_cycle=sinkish,
    )


def _step_of(edge_triple) -> Step:
    node, edge, _ = edge_triple
    state, ba_state = node[0], node[1]
    return Step(state=state, ba_state=ba_state, choice=edge)


def _complete_sink_cycle(start, successors, cap: Optional[int]):
    trail = [start]
    edges = []
    seen = {start: 0}
    while True:
        item = next(iter(successors(trail[-1])), None)
        if item is None:
            raise AssertionError("true-sink node has no successor")
        edge, nxt = item
        edges.append((trail[-1], edge, nxt))
        if nxt in seen:
            k = seen[nxt]
            return edges[:k], edges[k:]
        seen[nxt] = len(trail)
        trail.append(nxt)
        if cap is not None and len(trail) > cap:
            raise ResourceLimit("sink-cycle completion exceeded the state cap")
