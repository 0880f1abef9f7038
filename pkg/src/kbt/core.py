"""Shared vocabulary: input states, conditions, values, selections and the ASM protocol.

Every architecture in the package (k-BTs, FSMs, DTs, TRs, controller stacks)
implements :class:`ASM`: an initial internal state plus a ``step`` function
taking that state and one input and returning the next state and a
:class:`Selection`.  Histories are consumed by repeated stepping.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

SUCCESS = "Success"
FAILURE = "Failure"
NOOP = "NoOp"


class KBTError(Exception):
    """Base class for all errors raised by the package."""


class ConstructionError(KBTError, ValueError):
    """A model object was built with invalid structure."""


class EvalError(KBTError):
    """Evaluation of a model on an input failed."""


class UnboundVariableError(EvalError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable {name!r}")

    def __str__(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class Unhandled:
    """A return value the handling structure has no control-flow node for.

    This plays the role usually given to ``Running``.  ``name`` keeps the
    original value name when there was one (for instance ``Unknown``
    flowing through a 2-valued tree).
    """

    name: str | None = None

    def __str__(self) -> str:
        return "Unhandled" if self.name is None else f"Unhandled({self.name})"


UNHANDLED = Unhandled()

Value = Union[str, Unhandled]


def value_str(v: Value) -> str:
    return v if isinstance(v, str) else str(v)


@dataclass(frozen=True)
class ValueSet:
    values: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ConstructionError("a value set needs at least one value")
        if len(set(self.values)) != len(self.values):
            raise ConstructionError(f"duplicate values in {self.values}")
        for v in self.values:
            if not v or not isinstance(v, str):
                raise ConstructionError(f"bad value name {v!r}")

    @property
    def k(self) -> int:
        return len(self.values)

    def __contains__(self, v) -> bool:
        return v in self.values

    def __iter__(self):
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def classify(self, v: Value) -> Value:
        """Map a raw return value to its external form for this value set."""
        if isinstance(v, str):
            return v if v in self.values else Unhandled(v)
        return v


BT_VALUES = ValueSet((SUCCESS, FAILURE))


# ---------------------------------------------------------------- inputs


@dataclass(frozen=True)
class InputState:
    """Immutable snapshot of named integer variables.

    Variables listed in ``hidden`` model implicit memory: they are available
    to conditions but never part of an input alphabet.
    """

    bindings: tuple[tuple[str, int], ...]
    hidden: frozenset = frozenset()

    def __post_init__(self):
        b = tuple(sorted((str(k), int(v)) for k, v in self.bindings))
        names = [k for k, _ in b]
        if len(set(names)) != len(names):
            raise ConstructionError(f"duplicate variables in input {names}")
        object.__setattr__(self, "bindings", b)
        object.__setattr__(self, "hidden", frozenset(self.hidden))

    @classmethod
    def of(cls, mapping: Mapping[str, int] | None = None, hidden: Iterable[str] = (), **kw) -> "InputState":
        items = dict(mapping or {})
        items.update(kw)
        return cls(tuple((k, int(v)) for k, v in items.items()), frozenset(hidden))

    def __getitem__(self, name: str) -> int:
        for k, v in self.bindings:
            if k == name:
                return v
        raise UnboundVariableError(name)

    def get(self, name: str, default=None):
        try:
            return self[name]
        except UnboundVariableError:
            return default

    def __contains__(self, name) -> bool:
        return any(k == name for k, _ in self.bindings)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.bindings)

    def as_dict(self) -> dict[str, int]:
        return dict(self.bindings)

    def visible(self) -> "InputState":
        return InputState(tuple((k, v) for k, v in self.bindings if k not in self.hidden))

    def merge(self, other: Mapping[str, int], hidden: bool = False) -> "InputState":
        d = self.as_dict()
        d.update(other)
        h = set(self.hidden) | (set(other) if hidden else set())
        return InputState.of(d, hidden=h)

    def __str__(self) -> str:
        inner = ", ".join(f"{k}={v}" + ("*" if k in self.hidden else "") for k, v in self.bindings)
        return "{" + inner + "}"


def alphabet(domains: Mapping[str, Iterable[int]]) -> list[InputState]:
    """Cartesian product of per-variable value lists, in a fixed order."""
    names = sorted(domains)
    states = [{}]
    for n in names:
        vals = list(domains[n])
        if not vals:
            raise ConstructionError(f"empty domain for {n!r}")
        states = [dict(s, **{n: v}) for s in states for v in vals]
    out = [InputState.of(s) for s in states]
    if len(set(out)) != len(out):
        raise ConstructionError("alphabet states must be pairwise distinct")
    return out


# ------------------------------------------------------------ conditions

_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
_NEGATED_OP = {"==": "!=", "!=": "==", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}


class Cond:
    """Base for condition expressions.  Supports ``&``, ``|`` and ``~``."""

    def evaluate(self, x: InputState) -> bool:
        raise NotImplementedError

    def variables(self) -> frozenset:
        raise NotImplementedError

    def __and__(self, other: "Cond") -> "Cond":
        return And((self, other))

    def __or__(self, other: "Cond") -> "Cond":
        return Or((self, other))

    def __invert__(self) -> "Cond":
        return Not(self)


@dataclass(frozen=True)
class Const(Cond):
    value: bool

    def evaluate(self, x):
        return self.value

    def variables(self):
        return frozenset()


@dataclass(frozen=True)
class Cmp(Cond):
    var: str
    op: str
    value: int

    def __post_init__(self):
        if self.op == "=":
            object.__setattr__(self, "op", "==")
        if self.op not in _OPS:
            raise ConstructionError(f"unknown comparison {self.op!r}")
        if not self.var:
            raise ConstructionError("comparison needs a variable name")

    def evaluate(self, x):
        return _OPS[self.op](x[self.var], self.value)

    def variables(self):
        return frozenset((self.var,))

    def negated(self) -> "Cmp":
        return Cmp(self.var, _NEGATED_OP[self.op], self.value)


@dataclass(frozen=True)
class Not(Cond):
    arg: Cond

    def evaluate(self, x):
        return not self.arg.evaluate(x)

    def variables(self):
        return self.arg.variables()


@dataclass(frozen=True)
class And(Cond):
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ConstructionError("empty conjunction")

    def evaluate(self, x):
        # all operands are evaluated so that unbound variables always surface
        results = [a.evaluate(x) for a in self.args]
        return all(results)

    def variables(self):
        return frozenset().union(*(a.variables() for a in self.args))


@dataclass(frozen=True)
class Or(Cond):
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ConstructionError("empty disjunction")

    def evaluate(self, x):
        results = [a.evaluate(x) for a in self.args]
        return any(results)

    def variables(self):
        return frozenset().union(*(a.variables() for a in self.args))


TRUE = Const(True)
FALSE = Const(False)


class V:
    """Comparison builder: ``V("battery") < 10`` gives ``Cmp("battery", "<", 10)``."""

    def __init__(self, name: str):
        self.name = name

    def __eq__(self, other):  # type: ignore[override]
        return Cmp(self.name, "==", other)

    def __ne__(self, other):  # type: ignore[override]
        return Cmp(self.name, "!=", other)

    def __lt__(self, other):
        return Cmp(self.name, "<", other)

    def __le__(self, other):
        return Cmp(self.name, "<=", other)

    def __gt__(self, other):
        return Cmp(self.name, ">", other)

    def __ge__(self, other):
        return Cmp(self.name, ">=", other)

    __hash__ = None  # type: ignore[assignment]


def evaluate_condition(c: Cond, x: InputState) -> bool:
    return c.evaluate(x)


# ------------------------------------------------------------- selection


@dataclass(frozen=True)
class Selection:
    """The action an ASM selects for one input, plus the value it returned.

    ``condition`` marks selections that carry no actuation (a condition leaf
    or a node that answered without ticking a leaf); worlds run them as NoOp.
    ``path`` lists the names passed through while resolving nested or
    layered architectures.  Neither takes part in equality.
    """

    action: str
    value: Value = UNHANDLED
    condition: bool = field(default=False, compare=False)
    path: tuple = field(default=(), compare=False)

    def __str__(self) -> str:
        return f"{self.action}:{value_str(self.value)}"


class ASM:
    """Action selection mechanism: a map from input histories to selections.

    Subclasses provide ``initial_state`` and ``step``.  ``step`` must not
    mutate the state it is given; checkers reuse states across branches.
    """

    def initial_state(self):
        return None

    def step(self, state, x: InputState):
        raise NotImplementedError

    def select(self, x: InputState) -> Selection:
        return self.step(self.initial_state(), x)[1]


def run_asm(m: ASM, h: Sequence[InputState]) -> Selection:
    """Feed ``h`` to ``m`` in order and return the final selection."""
    if not h:
        raise EvalError("run_asm needs a non-empty history")
    state = m.initial_state()
    sel = None
    for x in h:
        state, sel = m.step(state, x)
    return sel


def trace_asm(m: ASM, h: Sequence[InputState]) -> list[Selection]:
    state = m.initial_state()
    out = []
    for x in h:
        state, sel = m.step(state, x)
        out.append(sel)
    return out
