"""k-valued Behavior Trees: nodes, tick semantics and tree operations.

A control node ``*_i`` (:class:`Control` with ``handled=i``) ticks its
children left to right and stops at the first child returning anything
other than ``i``; that child's selection and value become the node's.  If
every child returns ``i`` the last child's selection stands and the node
returns ``i``.  Sequence is ``*_Success`` and Fallback is ``*_Failure``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterator

from .core import (
    ASM,
    BT_VALUES,
    FAILURE,
    NOOP,
    SUCCESS,
    UNHANDLED,
    Cond,
    ConstructionError,
    InputState,
    Not,
    Selection,
    Unhandled,
    Value,
    ValueSet,
)

PRECOND_FALSE = "PrecondFalse"


class Context:
    """Per-run evaluation context.

    ``state`` holds everything that survives between ticks (memory nodes,
    decorator counters, embedded ASM states), keyed by node identifier.
    The dict is copied on construction so callers can branch freely.
    """

    def __init__(self, value_set: ValueSet, state: dict | None = None):
        self.value_set = value_set
        self.state = dict(state or {})
        self.visited: list[str] = []
        self.returned: dict[str, Value] = {}
        self.notes: list[tuple] = []


@dataclass(frozen=True)
class TickOutcome:
    selection: Selection
    visited: tuple
    leaf: str
    notes: tuple = ()


class Node:
    """Base class for tree nodes.  Concrete nodes are frozen dataclasses;
    leaves define ``children = ()`` as a plain class attribute."""

    def tick(self, x: InputState, ctx: Context):
        ctx.visited.append(self.id)
        leaf, value = self._tick(x, ctx)
        ctx.returned[self.id] = value
        return leaf, value

    def _tick(self, x, ctx):
        raise NotImplementedError

    def with_children(self, children) -> "Node":
        raise ConstructionError(f"{type(self).__name__} has no children")

    def validate(self, value_set: ValueSet) -> None:
        pass

    def possible_values(self) -> frozenset:
        raise NotImplementedError

    # what a selection of this node looks like from outside
    selection_name = NOOP
    actuates = False


def _id_field():
    return field(default=None, compare=False, kw_only=True)


@dataclass(frozen=True)
class ReturnRule:
    """Ordered (condition, value) pairs; the first true condition wins."""

    rules: tuple = ()
    default: Value = UNHANDLED

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple((c, v) for c, v in self.rules))

    def evaluate(self, x: InputState) -> Value:
        for cond, v in self.rules:
            if cond.evaluate(x):
                return v
        return self.default

    def values(self) -> frozenset:
        return frozenset([v for _, v in self.rules] + [self.default])

    def variables(self) -> frozenset:
        return frozenset().union(*(c.variables() for c, _ in self.rules)) if self.rules else frozenset()

    def mapped(self, fn) -> "ReturnRule":
        return ReturnRule(tuple((c, fn(v)) for c, v in self.rules), fn(self.default))


def swap_sf(v: Value) -> Value:
    if v == SUCCESS:
        return FAILURE
    if v == FAILURE:
        return SUCCESS
    return v


@dataclass(frozen=True)
class ActionNode(Node):
    action: str
    returns: ReturnRule = ReturnRule()
    asm: ASM | None = None
    id: str | None = _id_field()

    children = ()

    def __post_init__(self):
        if not self.action:
            raise ConstructionError("action name must be non-empty")

    def _tick(self, x, ctx):
        return self, self.returns.evaluate(x)

    def possible_values(self):
        return self.returns.values()

    @property
    def selection_name(self):
        return self.action

    actuates = True


@dataclass(frozen=True)
class ConditionLeaf(Node):
    name: str
    proposition: Cond
    id: str | None = _id_field()

    children = ()

    def _tick(self, x, ctx):
        return self, (SUCCESS if self.proposition.evaluate(x) else FAILURE)

    def validate(self, value_set):
        if SUCCESS not in value_set or FAILURE not in value_set:
            raise ConstructionError(f"condition {self.name!r} needs Success and Failure in the value set")

    def possible_values(self):
        return frozenset((SUCCESS, FAILURE))

    @property
    def selection_name(self):
        return self.name


@dataclass(frozen=True)
class Control(Node):
    handled: str
    children: tuple
    id: str | None = _id_field()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(_as_node(c) for c in self.children))
        if not self.children:
            raise ConstructionError(f"*{self.handled} node needs at least one child")

    def _tick(self, x, ctx):
        for child in self.children[:-1]:
            leaf, value = child.tick(x, ctx)
            if value != self.handled:
                return leaf, value
        return self.children[-1].tick(x, ctx)

    def with_children(self, children):
        return replace(self, children=tuple(children))

    def validate(self, value_set):
        if self.handled not in value_set:
            raise ConstructionError(f"control node handles {self.handled!r}, not in {value_set.values}")

    def possible_values(self):
        return frozenset().union(*(c.possible_values() for c in self.children))


def _as_node(c) -> Node:
    if isinstance(c, KBTree):
        return c.root
    if not isinstance(c, Node):
        raise ConstructionError(f"not a tree node: {c!r}")
    return c


# ------------------------------------------------------------------ trees

_AUTO_ID = re.compile(r"^n(\d+)$")


def iter_nodes(node: Node) -> Iterator[Node]:
    yield node
    for c in node.children:
        yield from iter_nodes(c)


def strip_ids(node: Node) -> Node:
    if node.children:
        node = node.with_children([strip_ids(c) for c in node.children])
    return replace(node, id=None)


def _assign_ids(root: Node) -> Node:
    seen: set[str] = set()
    top = -1
    for n in iter_nodes(root):
        if n.id is not None:
            m = _AUTO_ID.match(n.id)
            if m:
                top = max(top, int(m.group(1)))
    counter = [top + 1]

    def walk(n: Node) -> Node:
        nid = n.id
        if nid is None or nid in seen:
            nid = f"n{counter[0]}"
            counter[0] += 1
        seen.add(nid)
        kids = [walk(c) for c in n.children]
        if kids:
            n = n.with_children(kids)
        return n if n.id == nid else replace(n, id=nid)

    return walk(root)


@dataclass(frozen=True)
class KBTree(ASM):
    """A k-BT over ``value_set``.  Node identifiers are assigned on construction.

    ``pruned`` remembers identifiers removed by a style so that reapplying
    the style is a no-op.
    """

    value_set: ValueSet
    root: Node
    pruned: frozenset = frozenset()

    def __post_init__(self):
        vs = self.value_set
        if not isinstance(vs, ValueSet):
            object.__setattr__(self, "value_set", ValueSet(tuple(vs)))
        object.__setattr__(self, "root", _assign_ids(_as_node(self.root)))
        object.__setattr__(self, "pruned", frozenset(self.pruned))
        for n in self.nodes():
            n.validate(self.value_set)

    def nodes(self) -> Iterator[Node]:
        return iter_nodes(self.root)

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes()]

    def find(self, node_id: str) -> Node:
        for n in self.nodes():
            if n.id == node_id:
                return n
        raise ConstructionError(f"no node with id {node_id!r}")

    def variables(self) -> frozenset:
        out = set()
        for n in self.nodes():
            if isinstance(n, ActionNode):
                out |= n.returns.variables()
            elif isinstance(n, ConditionLeaf):
                out |= n.proposition.variables()
        return frozenset(out)

    # ASM protocol
    def initial_state(self):
        return {}

    def step(self, state, x):
        ctx = Context(self.value_set, state)
        out = tick(self, x, ctx)
        return ctx.state, out.selection


def tree(root, values=BT_VALUES) -> KBTree:
    if not isinstance(values, ValueSet):
        values = ValueSet(tuple(values))
    return KBTree(values, _as_node(root))


def tick(t: KBTree, x: InputState, ctx: Context | None = None) -> TickOutcome:
    """Tick ``t`` once on ``x``.

    Without a context the tick is pure.  With one, stateful nodes read and
    update ``ctx.state``.  If the selected leaf embeds an ASM, that ASM is
    stepped and its selection reported; embedded ASMs that are not selected
    lose their state.
    """
    if ctx is None:
        ctx = Context(t.value_set)
    ctx.visited = []
    ctx.returned = {}
    ctx.notes = []
    leaf, value = t.root.tick(x, ctx)
    external = t.value_set.classify(value)

    embedded_key = None
    if isinstance(leaf, ActionNode) and leaf.asm is not None:
        embedded_key = ("embed", leaf.id)
        inner_state = ctx.state.get(embedded_key)
        if inner_state is None:
            inner_state = leaf.asm.initial_state()
        inner_state, inner = leaf.asm.step(inner_state, x)
        sel = Selection(
            inner.action,
            external,
            condition=inner.condition,
            path=(leaf.action,) + (inner.path or (inner.action,)),
        )
    else:
        sel = Selection(
            leaf.selection_name,
            external,
            condition=not leaf.actuates,
            path=(leaf.selection_name,),
        )
    for key in [k for k in ctx.state if isinstance(k, tuple) and k[0] == "embed"]:
        if key != embedded_key:
            del ctx.state[key]
    if embedded_key is not None:
        ctx.state[embedded_key] = inner_state
    return TickOutcome(sel, tuple(ctx.visited), leaf.id, tuple(ctx.notes))


# -------------------------------------------------------------- builders


def action(name: str, *rules, default: Value = UNHANDLED) -> ActionNode:
    """``action("Recharge", (V("battery") == 100, SUCCESS))``."""
    return ActionNode(name, ReturnRule(tuple(rules), default))


def condition(name: str, prop: Cond) -> ConditionLeaf:
    return ConditionLeaf(name, prop)


def control(handled: str, *children) -> Control:
    return Control(handled, tuple(children))


def sequence(*children) -> Control:
    return Control(SUCCESS, tuple(children))


def fallback(*children) -> Control:
    return Control(FAILURE, tuple(children))


def flatten(node: Node) -> Node:
    """Splice ``*_i`` children into ``*_i`` parents (operators are associative)."""
    if not node.children:
        return node
    kids = [flatten(c) for c in node.children]
    if type(node) is Control:
        spliced = []
        for k in kids:
            if type(k) is Control and k.handled == node.handled:
                spliced.extend(k.children)
            else:
                spliced.append(k)
        kids = spliced
    return node.with_children(kids)


def infix_compose(text: str, leaves: dict | None = None, values=BT_VALUES) -> KBTree:
    """Build a tree from infix text such as ``A -> (B ? C) -> D``.

    ``leaves`` maps names to nodes (or trees); names not given become
    actions with an unhandled default.
    """
    from .dsl import parse_tree_expr

    root = parse_tree_expr(text, leaves or {}, values)
    return tree(root, values)


def handled_values(t: KBTree | Node) -> frozenset:
    root = t.root if isinstance(t, KBTree) else t
    return frozenset(n.handled for n in iter_nodes(root) if hasattr(n, "handled"))


def substitute_subtree(t: KBTree, node_id: str, s: KBTree | Node) -> KBTree:
    """Replace the subtree at ``node_id`` by ``s``; the new region gets fresh ids."""
    t.find(node_id)
    sub = _as_node(s)
    needed = set(handled_values(sub))
    if any(isinstance(n, ConditionLeaf) for n in iter_nodes(sub)):
        needed |= {SUCCESS, FAILURE}
    missing = needed - set(t.value_set)
    if missing:
        raise ConstructionError(f"substituted tree uses values {sorted(missing)} unknown to the host tree")
    fresh = strip_ids(sub)

    def walk(n: Node) -> Node:
        if n.id == node_id:
            return fresh
        if not n.children:
            return n
        return n.with_children([walk(c) for c in n.children])

    return KBTree(t.value_set, walk(t.root), t.pruned)


def tr_to_kbt(tr) -> KBTree:
    """A TR as a 1-BT: one ``*_PrecondFalse`` node over its actions."""
    if not tr.rules:
        raise ConstructionError("empty TR")
    kids = [
        ActionNode(a, ReturnRule(((Not(k), PRECOND_FALSE),)))
        for k, a in tr.rules
    ]
    return KBTree(ValueSet((PRECOND_FALSE,)), Control(PRECOND_FALSE, tuple(kids)))


def embed_asm_as_action(m: ASM, returns: ReturnRule = ReturnRule(), id: str = "Embedded") -> ActionNode:
    """An action leaf that delegates its selection to ``m`` when selected.

    Stateful ``m`` keeps its state only while the leaf stays selected.
    """
    return ActionNode(id, returns, asm=m)
