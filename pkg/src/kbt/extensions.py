"""BT extensions built on the k-BT engine.

Memory nodes and stateful decorators keep their state in the evaluation
context (keyed by node id), never in the tree, so trees stay immutable and
reusable.  :class:`BlackboardASM` models the implicit-memory anti-pattern:
hidden variables mutated outside the tree.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .core import (
    ASM,
    BT_VALUES,
    FAILURE,
    SUCCESS,
    UNHANDLED,
    Cond,
    ConstructionError,
    InputState,
    KBTError,
    Not,
    Unhandled,
    Value,
    value_str,
)
from .tree import (
    ActionNode,
    ConditionLeaf,
    Context,
    Control,
    KBTree,
    Node,
    _as_node,
    _id_field,
    iter_nodes,
    swap_sf,
    tick,
)


class StyleError(KBTError):
    pass


# ------------------------------------------------------------ memory nodes


@dataclass(frozen=True)
class MemoryControl(Node):
    """``*_i`` with memory: children that returned ``i`` are skipped until the
    node itself returns a value in the tree's value set."""

    handled: str
    children: tuple
    id: str | None = _id_field()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(_as_node(c) for c in self.children))
        if not self.children:
            raise ConstructionError("memory node needs at least one child")

    def _tick(self, x, ctx):
        key = ("mem", self.id)
        remembered = ctx.state.get(key, frozenset())
        for idx, child in enumerate(self.children):
            if idx in remembered:
                continue
            leaf, value = child.tick(x, ctx)
            if value == self.handled and idx < len(self.children) - 1:
                remembered = remembered | {idx}
                continue
            if isinstance(value, str) and value in ctx.value_set:
                ctx.state.pop(key, None)
            else:
                ctx.state[key] = remembered
            return leaf, value
        # every child remembered: answer without ticking anything
        ctx.state.pop(key, None)
        return self, self.handled

    def with_children(self, children):
        return replace(self, children=tuple(children))

    def validate(self, value_set):
        if self.handled not in value_set:
            raise ConstructionError(f"memory node handles {self.handled!r}, not in {value_set.values}")

    def possible_values(self):
        return frozenset().union(*(c.possible_values() for c in self.children))


def sequence_with_memory(*children) -> MemoryControl:
    return MemoryControl(SUCCESS, tuple(children))


def fallback_with_memory(*children) -> MemoryControl:
    return MemoryControl(FAILURE, tuple(children))


def tick_memory(node: MemoryControl, x: InputState, ctx: Context):
    """Tick a memory node directly against ``ctx`` (returns ``(leaf, value)``)."""
    return node.tick(x, ctx)


# -------------------------------------------------------------- decorators

NEGATION = "not"
UNTIL_SUCCESS = "until_success"
TIMES = "times"
CUSTOM = "map"


@dataclass(frozen=True)
class Decorator(Node):
    """Negation, RunUntilSuccess, RunNTimes(n) or a custom value map.

    ``policy`` for custom decorators is a tuple of (child value, result)
    pairs; ``UNHANDLED`` as a key covers the anonymous unhandled value.
    """

    kind: str
    child: Node
    n: int = 0
    policy: tuple = ()
    id: str | None = _id_field()

    def __post_init__(self):
        object.__setattr__(self, "child", _as_node(self.child))
        pol = self.policy.items() if isinstance(self.policy, Mapping) else self.policy
        object.__setattr__(self, "policy", tuple(pol))
        if self.kind not in (NEGATION, UNTIL_SUCCESS, TIMES, CUSTOM):
            raise ConstructionError(f"unknown decorator {self.kind!r}")
        if self.kind == TIMES and self.n < 1:
            raise ConstructionError("times(n) needs a positive n")
        if self.kind == CUSTOM:
            keys = {k for k, _ in self.policy}
            missing = self.child.possible_values() - keys
            if missing:
                names = sorted(value_str(v) for v in missing)
                raise ConstructionError(f"custom decorator policy does not cover {names}")

    @property
    def children(self):
        return (self.child,)

    def with_children(self, children):
        (c,) = children
        return replace(self, child=c)

    def _tick(self, x, ctx):
        if self.kind == NEGATION:
            leaf, value = self.child.tick(x, ctx)
            return leaf, swap_sf(value)
        if self.kind == CUSTOM:
            leaf, value = self.child.tick(x, ctx)
            return leaf, dict(self.policy)[value]
        key = ("dec", self.id)
        if self.kind == UNTIL_SUCCESS:
            if ctx.state.get(key):
                return self, SUCCESS
            leaf, value = self.child.tick(x, ctx)
            if value == SUCCESS:
                ctx.state[key] = True
            return leaf, value
        count = ctx.state.get(key, 0)
        if count >= self.n:
            return self, SUCCESS
        ctx.state[key] = count + 1
        return self.child.tick(x, ctx)

    def validate(self, value_set):
        if self.kind != CUSTOM and (SUCCESS not in value_set or FAILURE not in value_set):
            raise ConstructionError(f"{self.kind} decorator needs Success and Failure in the value set")

    def possible_values(self):
        inner = self.child.possible_values()
        if self.kind == NEGATION:
            return frozenset(swap_sf(v) for v in inner)
        if self.kind == CUSTOM:
            return frozenset(v for _, v in self.policy)
        return inner | {SUCCESS}


def negation(child) -> Decorator:
    return Decorator(NEGATION, child)


def run_until_success(child) -> Decorator:
    return Decorator(UNTIL_SUCCESS, child)


def run_n_times(n: int, child) -> Decorator:
    return Decorator(TIMES, child, n=n)


def custom_decorator(policy: Mapping, child) -> Decorator:
    return Decorator(CUSTOM, child, policy=tuple(policy.items()))


def tick_decorator(d: Decorator, x: InputState, ctx: Context):
    return d.tick(x, ctx)


# ---------------------------------------------------------------- parallel


@dataclass(frozen=True)
class Parallel(Node):
    """Ticks all N children; Success if at least M succeed, Failure if at
    least N-M+1 fail, Unhandled otherwise.  The reported selection is the
    leftmost child that contributed the deciding value."""

    threshold: int
    children: tuple
    id: str | None = _id_field()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(_as_node(c) for c in self.children))
        if not self.children:
            raise ConstructionError("parallel node needs at least one child")
        if not 1 <= self.threshold <= len(self.children):
            raise ConstructionError(f"parallel threshold must be in 1..{len(self.children)}")

    def _tick(self, x, ctx):
        results = [c.tick(x, ctx) for c in self.children]
        n, m = len(results), self.threshold
        successes = sum(1 for _, v in results if v == SUCCESS)
        failures = sum(1 for _, v in results if v == FAILURE)
        if successes >= m:
            value = SUCCESS
        elif failures >= n - m + 1:
            value = FAILURE
        else:
            value = UNHANDLED
        for leaf, v in results:
            if v == value or (value is UNHANDLED and v not in (SUCCESS, FAILURE)):
                return leaf, value
        raise AssertionError("unreachable: no contributing child")

    def with_children(self, children):
        return replace(self, children=tuple(children))

    def validate(self, value_set):
        if SUCCESS not in value_set or FAILURE not in value_set:
            raise ConstructionError("parallel node needs Success and Failure in the value set")

    def possible_values(self):
        return frozenset((SUCCESS, FAILURE, UNHANDLED))


def tick_parallel(p: Parallel, x: InputState, ctx: Context | None = None):
    return p.tick(x, ctx or Context(BT_VALUES))


# ----------------------------------------------------------------- utility


@dataclass(frozen=True)
class ScoreRule:
    """Integer score: first matching condition's score, else ``default``."""

    rules: tuple = ()
    default: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple((c, int(s)) for c, s in self.rules))

    def score(self, x: InputState, memo: dict) -> int:
        for c, s in self.rules:
            if c.evaluate(x):
                return s
        return self.default


@dataclass(frozen=True)
class UtilityNode(Node):
    """Fallback whose children are re-sorted by descending score at each tick.

    Scorers get ``(x, memo)``; ``memo`` is a per-context dict they may update,
    which is how history-dependent scoring is expressed.  Ties keep the
    original child order.
    """

    children: tuple
    scorers: tuple
    id: str | None = _id_field()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(_as_node(c) for c in self.children))
        object.__setattr__(self, "scorers", tuple(self.scorers))
        if not self.children:
            raise ConstructionError("utility node needs at least one child")
        if len(self.scorers) != len(self.children):
            raise ConstructionError("utility node needs one scorer per child")

    def _tick(self, x, ctx):
        key = ("util", self.id)
        memos = [dict(m) for m in ctx.state.get(key, [{}] * len(self.children))]
        scores = tuple(s.score(x, memo) for s, memo in zip(self.scorers, memos))
        if any(memos):
            ctx.state[key] = memos
        ctx.notes.append((self.id, scores))
        order = sorted(range(len(self.children)), key=lambda i: -scores[i])
        for i in order[:-1]:
            leaf, value = self.children[i].tick(x, ctx)
            if value != FAILURE:
                return leaf, value
        return self.children[order[-1]].tick(x, ctx)

    def with_children(self, children):
        return replace(self, children=tuple(children))

    def validate(self, value_set):
        if FAILURE not in value_set:
            raise ConstructionError("utility node needs Failure in the value set")

    def possible_values(self):
        return frozenset().union(*(c.possible_values() for c in self.children))


def tick_utility(u: UtilityNode, x: InputState, ctx: Context | None = None):
    return u.tick(x, ctx or Context(BT_VALUES))


# ------------------------------------------------------------------ styles


@dataclass(frozen=True)
class Style:
    name: str
    disabled: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "disabled", frozenset(self.disabled))


def apply_style(t: KBTree, s: Style) -> KBTree:
    """Prune the style's disabled subtrees from ``t``."""
    present = set(t.node_ids())
    unknown = s.disabled - present - t.pruned
    if unknown:
        raise StyleError(f"style {s.name!r} disables unknown nodes {sorted(unknown)}")
    todo = s.disabled & present
    if not todo:
        return t
    if t.root.id in todo:
        raise StyleError(f"style {s.name!r} disables the whole tree")
    removed: set[str] = set()

    def walk(n: Node) -> Node:
        if not n.children:
            return n
        kids = []
        for c in n.children:
            if c.id in todo:
                removed.update(m.id for m in iter_nodes(c))
            else:
                kids.append(walk(c))
        if not kids:
            raise StyleError(f"style {s.name!r} would leave node {n.id} without children")
        if isinstance(n, UtilityNode) and len(kids) != len(n.children):
            keep = [i for i, c in enumerate(n.children) if c.id not in todo]
            return replace(n, children=tuple(kids), scorers=tuple(n.scorers[i] for i in keep))
        if isinstance(n, Parallel) and n.threshold > len(kids):
            raise StyleError(f"style {s.name!r} leaves parallel node {n.id} below its threshold")
        return n.with_children(kids)

    root = walk(t.root)
    return KBTree(t.value_set, root, t.pruned | removed)


# ----------------------------------------------------- negation push-down


def push_down_negations(t: KBTree) -> KBTree:
    """Remove Negation decorators by swapping Success/Failure below them.

    ``*_i`` under a negation becomes ``*_swap(i)``, so Sequence and Fallback
    exchange roles; leaves get swapped return rules.
    """

    def neg(n: Node) -> Node:
        if isinstance(n, Decorator) and n.kind == NEGATION:
            return push(n.child)
        if isinstance(n, ActionNode):
            return replace(n, returns=n.returns.mapped(swap_sf))
        if isinstance(n, ConditionLeaf):
            return replace(n, proposition=_negate(n.proposition))
        if type(n) is Control:
            return replace(n, handled=swap_sf(n.handled), children=tuple(neg(c) for c in n.children))
        raise ConstructionError(f"cannot push a negation through {type(n).__name__}")

    def push(n: Node) -> Node:
        if isinstance(n, Decorator) and n.kind == NEGATION:
            return neg(n.child)
        if not n.children:
            return n
        return n.with_children([push(c) for c in n.children])

    return KBTree(t.value_set, push(t.root), t.pruned)


def _negate(c: Cond) -> Cond:
    return c.arg if isinstance(c, Not) else Not(c)


# ---------------------------------------------------------- implicit memory


@dataclass(frozen=True)
class Update:
    """``set var = value`` after a tick, when ``when`` holds (evaluated on the
    input seen by the tree) and, if ``node`` is given, that node returned
    ``returns``.  ``node`` is an action/condition name or ``"root"``."""

    var: str
    value: int
    when: Cond | None = None
    node: str | None = None
    returns: str | None = None


@dataclass(frozen=True)
class BlackboardASM(ASM):
    """A tree reading hidden variables that are written outside the tree."""

    tree: KBTree
    hidden: tuple
    updates: tuple

    def __post_init__(self):
        h = self.hidden.items() if isinstance(self.hidden, Mapping) else self.hidden
        object.__setattr__(self, "hidden", tuple(sorted((k, int(v)) for k, v in h)))
        object.__setattr__(self, "updates", tuple(self.updates))
        names = {k for k, _ in self.hidden}
        for u in self.updates:
            if u.var not in names:
                raise ConstructionError(f"update writes undeclared hidden variable {u.var!r}")

    def initial_state(self):
        return (self.hidden, {})

    def step(self, state, x):
        hidden, tree_state = state
        hidden_d = dict(hidden)
        xe = x.merge(hidden_d, hidden=True)
        ctx = Context(self.tree.value_set, tree_state)
        out = tick(self.tree, xe, ctx)
        by_name: dict[str, list] = {}
        for n in self.tree.nodes():
            if n.id in ctx.returned:
                name = "root" if n is self.tree.root else n.selection_name
                by_name.setdefault(name, []).append(ctx.returned[n.id])
        for u in self.updates:
            if u.when is not None and not u.when.evaluate(xe):
                continue
            if u.node is not None:
                got = by_name.get(u.node, [])
                if u.returns is None:
                    if not got:
                        continue
                elif u.returns not in got:
                    continue
            hidden_d[u.var] = u.value
        return (tuple(sorted(hidden_d.items())), ctx.state), out.selection


