"""Finite State Machines (Moore), Decision Trees and Teleo-Reactive programs."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import (
    ASM,
    TRUE,
    UNHANDLED,
    Cond,
    Const,
    ConstructionError,
    EvalError,
    InputState,
    KBTError,
    Selection,
)
from .tree import ActionNode, ConditionLeaf, Control, KBTree, Node, SUCCESS, FAILURE


class FSMCycleError(EvalError):
    def __init__(self, loop: Sequence[str]):
        self.loop = tuple(loop)
        super().__init__("transition cycle under a fixed input: " + " -> ".join(self.loop))


class NoRuleError(EvalError):
    """No TR condition holds for the input."""


# -------------------------------------------------------------------- FSM


@dataclass(frozen=True)
class Transition:
    src: str
    guard: Cond
    dst: str


@dataclass(frozen=True)
class FSM(ASM):
    """Moore machine ``(Q, q0, Sigma, A, delta, l)`` with rule-based transitions.

    Labels map each state to an action name or to an ASM that is consulted
    while the machine sits in that state.  ``domains`` (variable -> values)
    enables the load-time check that no two guards leaving a state overlap.
    """

    states: tuple
    initial: str
    transitions: tuple
    labels: tuple
    domains: Mapping | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        labels = self.labels.items() if isinstance(self.labels, Mapping) else self.labels
        object.__setattr__(self, "labels", tuple(labels))
        qs = set(self.states)
        if len(qs) != len(self.states):
            raise ConstructionError("duplicate FSM states")
        if self.initial not in qs:
            raise ConstructionError(f"initial state {self.initial!r} is not a state")
        for t in self.transitions:
            for q in (t.src, t.dst):
                if q not in qs:
                    raise ConstructionError(f"transition references unknown state {q!r}")
        labelled = [q for q, _ in self.labels]
        if set(labelled) != qs or len(labelled) != len(qs):
            raise ConstructionError("every FSM state needs exactly one label")
        if self.domains:
            overlap = self.find_overlap(self.domains)
            if overlap:
                q, g1, g2, x = overlap
                raise ConstructionError(f"guards overlap in state {q!r} at {x}: {g1} / {g2}")

    def label(self, q: str):
        for s, lab in self.labels:
            if s == q:
                return lab
        raise ConstructionError(f"unknown state {q!r}")

    def find_overlap(self, domains: Mapping):
        """First (state, guard, guard, input) where two outgoing guards both hold."""
        for q in self.states:
            out = [t for t in self.transitions if t.src == q]
            for a, b in itertools.combinations(out, 2):
                names = sorted(a.guard.variables() | b.guard.variables())
                if any(n not in domains for n in names):
                    continue
                for combo in itertools.product(*(domains[n] for n in names)):
                    x = InputState.of(dict(zip(names, combo)))
                    if a.guard.evaluate(x) and b.guard.evaluate(x):
                        return q, a.guard, b.guard, x
        return None

    def initial_state(self):
        return (self.initial, None)

    def step(self, state, x):
        q, inner = state
        q2, _ = _transition(self, q, x)
        lab = self.label(q2)
        if isinstance(lab, ASM):
            if q2 != q or inner is None:
                inner = lab.initial_state()
            inner, sel = lab.step(inner, x)
            return (q2, inner), Selection(sel.action, sel.value, sel.condition, (q2,) + (sel.path or (sel.action,)))
        return (q2, None), Selection(lab, UNHANDLED, path=(q2, lab))


def _transition(f: FSM, q: str, x: InputState):
    seen = [q]
    cur = q
    while True:
        fired = [t for t in f.transitions if t.src == cur and t.dst != cur and t.guard.evaluate(x)]
        if not fired:
            return cur, seen
        if len(fired) > 1:
            raise EvalError(f"guards overlap in state {cur!r} at {x}")
        nxt = fired[0].dst
        if nxt in seen:
            raise FSMCycleError(seen[seen.index(nxt):] + [nxt])
        seen.append(nxt)
        cur = nxt


def fsm_step(f: FSM, q: str, x: InputState) -> tuple[str, Selection]:
    """Apply triggered transitions under ``x`` until quiescent.

    Embedded-ASM labels are stepped from their initial state.
    """
    if q not in f.states:
        raise ConstructionError(f"unknown state {q!r}")
    q2, _ = _transition(f, q, x)
    lab = f.label(q2)
    if isinstance(lab, ASM):
        sel = lab.select(x)
        return q2, Selection(sel.action, sel.value, sel.condition, (q2,) + (sel.path or (sel.action,)))
    return q2, Selection(lab, UNHANDLED, path=(q2, lab))


# --------------------------------------------------------------------- DT


@dataclass(frozen=True)
class DTLeaf:
    action: str


@dataclass(frozen=True)
class Predicate:
    cond: Cond
    if_true: "Predicate | DTLeaf"
    if_false: "Predicate | DTLeaf"

    def __post_init__(self):
        for c in (self.if_true, self.if_false):
            if not isinstance(c, (Predicate, DTLeaf)):
                raise ConstructionError("a DT predicate needs exactly two DT children")


@dataclass(frozen=True)
class DT(ASM):
    root: Predicate | DTLeaf

    def initial_state(self):
        return None

    def step(self, state, x):
        return None, dt_select(self, x)

    def size(self) -> int:
        def count(n):
            return 1 if isinstance(n, DTLeaf) else 1 + count(n.if_true) + count(n.if_false)

        return count(self.root)


def dt_select(d: DT, x: InputState) -> Selection:
    n = d.root
    while isinstance(n, Predicate):
        n = n.if_true if n.cond.evaluate(x) else n.if_false
    return Selection(n.action, UNHANDLED, path=(n.action,))


# --------------------------------------------------------------------- TR


@dataclass(frozen=True)
class TR(ASM):
    rules: tuple

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple((k, a) for k, a in self.rules))
        if not self.rules:
            raise ConstructionError("a TR needs at least one rule")
        last = self.rules[-1][0]
        if not (isinstance(last, Const) and last.value):
            warnings.warn("TR has no catch-all final rule", stacklevel=3)

    def initial_state(self):
        return None

    def step(self, state, x):
        return None, tr_select(self, x)


def tr_select(t: TR, x: InputState) -> Selection:
    for k, a in t.rules:
        if k.evaluate(x):
            return Selection(a, UNHANDLED, path=(a,))
    raise NoRuleError(f"no TR condition holds at {x}")


# ----------------------------------------------------------------- BT->DT


def bt_to_dt(t: KBTree) -> DT:
    """Emulate a decorator-free tree by a DT whose predicates spell out the
    leaves' return conditions.  The tree's return values are lost."""
    for n in t.nodes():
        if type(n) not in (Control, ActionNode, ConditionLeaf):
            raise ConstructionError(f"cannot convert {type(n).__name__} nodes to a DT")

    def done(value, leaf):
        return DTLeaf(leaf.selection_name)

    def compile_node(node: Node, k):
        if isinstance(node, ConditionLeaf):
            return _branch(node.proposition, k(SUCCESS, node), k(FAILURE, node))
        if isinstance(node, ActionNode):
            out = k(node.returns.default, node)
            for cond, v in reversed(node.returns.rules):
                out = _branch(cond, k(v, node), out)
            return out
        return compile_children(node, 0, k)

    def compile_children(node: Control, j: int, k):
        if j == len(node.children) - 1:
            return compile_node(node.children[j], k)

        def cont(value, leaf):
            if value == node.handled:
                return compile_children(node, j + 1, k)
            return k(value, leaf)

        return compile_node(node.children[j], cont)

    return DT(compile_node(t.root, done))


def _branch(cond: Cond, yes, no):
    if isinstance(cond, Const):
        return yes if cond.value else no
    if yes == no:
        return yes
    return Predicate(cond, yes, no)
