"""Reactiveness and bounded equivalence checking, switch counting, DOT export."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Sequence

from .core import ASM, InputState, KBTError, Selection, run_asm, value_str

DEFAULT_BUDGET = 500_000

REACTIVE = "reactive"
NON_REACTIVE = "non-reactive"
EQUIVALENT = "equivalent-up-to-bound"
DISTINGUISHED = "distinguished"


class BudgetExceeded(KBTError):
    pass


def _key(sel: Selection, compare: str):
    if compare == "action":
        return sel.action
    if compare == "selection":
        return (sel.action, sel.value)
    raise ValueError(f"unknown comparison mode {compare!r}")


@dataclass(frozen=True)
class ReactivenessWitness:
    first: tuple
    second: tuple
    first_selection: Selection
    second_selection: Selection

    def replays(self, m: ASM, compare: str = "action") -> bool:
        a, b = run_asm(m, self.first), run_asm(m, self.second)
        return (
            self.first[-1] == self.second[-1]
            and a == self.first_selection
            and b == self.second_selection
            and _key(a, compare) != _key(b, compare)
        )


@dataclass(frozen=True)
class ReactivenessReport:
    verdict: str
    witness: ReactivenessWitness | None
    bound: int
    checked: int
    mode: str = "exhaustive"

    @property
    def reactive(self) -> bool:
        return self.verdict == REACTIVE


@dataclass(frozen=True)
class EquivalenceWitness:
    history: tuple
    first: Selection
    second: Selection

    def replays(self, m1: ASM, m2: ASM, compare: str = "action") -> bool:
        a, b = run_asm(m1, self.history), run_asm(m2, self.history)
        return a == self.first and b == self.second and _key(a, compare) != _key(b, compare)


@dataclass(frozen=True)
class EquivalenceReport:
    verdict: str
    witness: EquivalenceWitness | None
    bound: int
    checked: int
    mode: str = "exhaustive"

    @property
    def equivalent(self) -> bool:
        return self.verdict == EQUIVALENT


def _plan(alphabet: Sequence[InputState], max_len: int, budget: int, sample, seed):
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    if not alphabet:
        raise ValueError("alphabet must be non-empty")
    if len(set(alphabet)) != len(alphabet):
        raise ValueError("alphabet states must be pairwise distinct")
    total = sum(len(alphabet) ** n for n in range(1, max_len + 1))
    if sample is None:
        if total > budget:
            raise BudgetExceeded(f"{total} histories exceed the budget of {budget}; use sampling with a seed")
        return "exhaustive"
    if seed is None:
        raise ValueError("sampling needs an explicit seed")
    return "sampled"


def _sampled_histories(alphabet, max_len, sample, seed):
    rng = random.Random(seed)
    for _ in range(sample):
        n = rng.randint(1, max_len)
        yield tuple(rng.choice(alphabet) for _ in range(n))


def _levels(ms: Sequence[ASM], alphabet, max_len):
    """Breadth-first over histories: yields (history, selections) shortest first."""
    level = [((), tuple(m.initial_state() for m in ms))]
    for _ in range(max_len):
        nxt = []
        for hist, states in level:
            for x in alphabet:
                stepped = [m.step(s, x) for m, s in zip(ms, states)]
                h = hist + (x,)
                yield h, tuple(sel for _, sel in stepped)
                nxt.append((h, tuple(s for s, _ in stepped)))
        level = nxt


def check_reactive(
    m: ASM,
    alphabet: Sequence[InputState],
    max_len: int,
    *,
    budget: int = DEFAULT_BUDGET,
    sample: int | None = None,
    seed: int | None = None,
    compare: str = "action",
) -> ReactivenessReport:
    """Search for two histories ending in the same input with different selections."""
    alphabet = list(alphabet)
    mode = _plan(alphabet, max_len, budget, sample, seed)
    if mode == "exhaustive":
        runs = ((h, sels[0]) for h, sels in _levels([m], alphabet, max_len))
    else:
        runs = ((h, run_asm(m, h)) for h in _sampled_histories(alphabet, max_len, sample, seed))
    first: dict[InputState, tuple] = {}
    checked = 0
    for h, sel in runs:
        checked += 1
        seen = first.get(h[-1])
        if seen is None:
            first[h[-1]] = (h, sel)
        elif _key(seen[1], compare) != _key(sel, compare):
            w = ReactivenessWitness(seen[0], h, seen[1], sel)
            return ReactivenessReport(NON_REACTIVE, w, max_len, checked, mode)
    return ReactivenessReport(REACTIVE, None, max_len, checked, mode)


def check_equivalence(
    m1: ASM,
    m2: ASM,
    alphabet: Sequence[InputState],
    max_len: int,
    *,
    budget: int = DEFAULT_BUDGET,
    sample: int | None = None,
    seed: int | None = None,
    compare: str = "action",
) -> EquivalenceReport:
    """Compare selections of two ASMs on every history up to ``max_len``."""
    alphabet = list(alphabet)
    mode = _plan(alphabet, max_len, budget, sample, seed)
    if mode == "exhaustive":
        runs = _levels([m1, m2], alphabet, max_len)
    else:
        runs = ((h, (run_asm(m1, h), run_asm(m2, h))) for h in _sampled_histories(alphabet, max_len, sample, seed))
    checked = 0
    for h, (a, b) in runs:
        checked += 1
        if _key(a, compare) != _key(b, compare):
            return EquivalenceReport(DISTINGUISHED, EquivalenceWitness(h, a, b), max_len, checked, mode)
    return EquivalenceReport(EQUIVALENT, None, max_len, checked, mode)


def count_switches(trace: Sequence[Selection | str]) -> int:
    names = [s.action if isinstance(s, Selection) else s for s in trace]
    return sum(1 for a, b in zip(names, names[1:]) if a != b)


# -------------------------------------------------------------------- DOT


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(obj, name: str = "model") -> str:
    """Deterministic DOT text for a KBTree, FSM, DT or TR."""
    from .classic import DT, FSM, TR, Predicate
    from .tree import KBTree, tr_to_kbt

    if isinstance(obj, TR):
        obj = tr_to_kbt(obj)
    if isinstance(obj, KBTree):
        return _tree_dot(obj, name)
    if isinstance(obj, FSM):
        return _fsm_dot(obj, name)
    if isinstance(obj, DT):
        return _dt_dot(obj, name)
    raise TypeError(f"cannot export {type(obj).__name__} to DOT")


def _node_label(n) -> tuple[str, str]:
    from .core import FAILURE, SUCCESS
    from .extensions import Decorator, MemoryControl, Parallel, UtilityNode
    from .tree import ActionNode, ConditionLeaf, Control

    if isinstance(n, ActionNode):
        return n.action, "box"
    if isinstance(n, ConditionLeaf):
        return n.name, "ellipse"
    if type(n) is Control:
        sym = {SUCCESS: "→", FAILURE: "?"}.get(n.handled, f"*{n.handled}")
        return sym, "square"
    if isinstance(n, MemoryControl):
        sym = {SUCCESS: "→*", FAILURE: "?*"}.get(n.handled, f"mem*{n.handled}")
        return sym, "square"
    if isinstance(n, Parallel):
        return f"⇉{n.threshold}", "square"
    if isinstance(n, UtilityNode):
        return "U", "square"
    if isinstance(n, Decorator):
        label = {"not": "¬", "until_success": "until_success", "times": f"times({n.n})", "map": "map"}[n.kind]
        return label, "diamond"
    return type(n).__name__, "box"


def _tree_dot(t, name: str) -> str:
    lines = [f"digraph {_q(name)} {{", "  ordering=out;"]
    edges = []
    for n in t.nodes():
        label, shape = _node_label(n)
        lines.append(f"  {n.id} [label={_q(label)}, shape={shape}];")
        for i, c in enumerate(n.children):
            edges.append(f"  {n.id} -> {c.id} [label={_q(str(i + 1))}];")
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"


def _fsm_dot(f, name: str) -> str:
    from .core import ASM
    from .dsl import format_cond

    lines = [f"digraph {_q(name)} {{", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for q in f.states:
        lab = f.label(q)
        lab_s = lab if isinstance(lab, str) else f"<{type(lab).__name__}>"
        lines.append(f"  {_q(q)} [label={_q(q + ' / ' + lab_s)}, shape=circle];")
    lines.append(f"  __start -> {_q(f.initial)};")
    for t in f.transitions:
        lines.append(f"  {_q(t.src)} -> {_q(t.dst)} [label={_q(format_cond(t.guard))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _dt_dot(d, name: str) -> str:
    from .classic import Predicate
    from .dsl import format_cond

    lines = [f"digraph {_q(name)} {{"]
    counter = itertools.count()

    def walk(n) -> str:
        nid = f"d{next(counter)}"
        if isinstance(n, Predicate):
            lines.append(f"  {nid} [label={_q(format_cond(n.cond))}, shape=diamond];")
            t = walk(n.if_true)
            f = walk(n.if_false)
            lines.append(f"  {nid} -> {t} [label=\"T\"];")
            lines.append(f"  {nid} -> {f} [label=\"F\"];")
        else:
            lines.append(f"  {nid} [label={_q(n.action)}, shape=box];")
        return nid

    walk(d.root)
    lines.append("}")
    return "\n".join(lines) + "\n"
