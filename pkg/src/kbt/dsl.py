"""Text format for whole models: values, variables, actions, trees, FSMs,
DTs, TRs, blackboards, styles, stacks, worlds and alphabets.

Grammar summary (newlines are insignificant; ``;`` separators optional)::

    values [Success, Failure, Unknown]
    var battery: 0..100
    hidden var recharging: bool
    action Recharge { returns Success when battery == 100; default Unhandled }
    action Sub = embed SomeDT
    cond BatteryBelow10 = battery < 10
    tree Main = (BatteryBelow10 -> Recharge) ? OtherTask
    tree T = *Unknown[Unlock, Probe]
    fsm Top { states [A, B]; init A; A -[battery < 10]-> B; label A: tree Main; label B: Recharge }
    dt D = if battery < 10 then Recharge else OtherTask
    tr P { battery < 10 -> Recharge; true -> OtherTask }
    blackboard B over Main { init recharging = 0; set recharging = 1 on Recharge; set recharging = 0 when battery == 100 }
    style Careful on Main disable [n3, OtherTask]
    stack Layered = [Top, Main]
    world W = battery(start=50, drain=1, charge=5)
    alphabet A = { battery: [5, 50, 100]; door: 0..2 }

Tree operators: ``->`` sequence, ``?`` fallback (``->`` binds tighter),
``mem->`` / ``mem?`` memory variants, ``*V[...]`` and ``mem*V[...]``,
``!x`` negation, ``until_success(x)``, ``times(n)(x)``,
``map{Success: Failure, Unhandled: Unhandled}(x)``, ``par(M)[...]``,
``utility[a @ 3, b @ {5 when c; default 1}]``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .core import (
    ASM,
    BT_VALUES,
    FAILURE,
    SUCCESS,
    UNHANDLED,
    And,
    Cmp,
    Cond,
    Const,
    ConstructionError,
    KBTError,
    Not,
    Or,
    Unhandled,
    ValueSet,
    alphabet as product_alphabet,
)
from .tree import ActionNode, ConditionLeaf, Control, KBTree, Node, ReturnRule, flatten, strip_ids
from .extensions import (
    CUSTOM,
    NEGATION,
    TIMES,
    UNTIL_SUCCESS,
    BlackboardASM,
    Decorator,
    MemoryControl,
    Parallel,
    ScoreRule,
    Style,
    Update,
    UtilityNode,
    apply_style,
)
from .classic import DT, DTLeaf, FSM, TR, Predicate, Transition
from .worlds import BatteryWorld, ControllerStack, DoorWorld, ScriptedWorld

KEYWORDS = {
    "values", "var", "hidden", "bool", "action", "cond", "tree", "fsm", "dt", "tr", "stack",
    "world", "blackboard", "style", "alphabet", "embed", "returns", "when", "default", "init",
    "label", "set", "on", "if", "then", "else", "and", "or", "not", "true", "false", "over",
    "disable", "mem", "par", "until_success", "times", "map", "utility", "states", "Unhandled",
}
TOP_LEVEL = {"values", "var", "hidden", "action", "cond", "tree", "fsm", "dt", "tr", "stack",
             "world", "blackboard", "style", "alphabet"}
ASM_KINDS = ("tree", "fsm", "dt", "tr", "stack", "blackboard", "style")


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self):
        return f"{self.line}:{self.col}: {self.message}"


class ModelError(KBTError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class _ParseError(Exception):
    def __init__(self, tok, message):
        self.tok = tok
        self.message = message


# ------------------------------------------------------------------ lexer

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<op>mem(?=->|\?|\*)|-\[|->|==|!=|<=|>=|\.\.|[<>=!?*\[\](){},;:@])
  | (?P<int>-?\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Tok:
    kind: str  # op | int | name | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ModelError([Diagnostic(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")])
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            toks.append(Tok(kind, s, line, pos - line_start + 1))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rindex("\n") + 1
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - line_start + 1))
    return toks


# ------------------------------------------------------------ model types


@dataclass(frozen=True)
class VarDecl:
    name: str
    lo: int
    hi: int
    hidden: bool = False
    boolean: bool = False


@dataclass(frozen=True)
class ActionDecl:
    name: str
    returns: ReturnRule = ReturnRule()
    embed: str | None = None


@dataclass(frozen=True)
class FSMDecl:
    states: tuple
    initial: str
    transitions: tuple
    labels: tuple  # (state, kind | None, name)


@dataclass(frozen=True)
class BlackboardDecl:
    tree: str
    init: tuple
    updates: tuple


@dataclass(frozen=True)
class StyleDecl:
    tree: str
    disabled: tuple


@dataclass(frozen=True)
class WorldDecl:
    kind: str
    params: tuple


@dataclass
class Model:
    values: ValueSet = BT_VALUES
    variables: dict = field(default_factory=dict)
    actions: dict = field(default_factory=dict)
    conditions: dict = field(default_factory=dict)
    trees: dict = field(default_factory=dict)
    fsms: dict = field(default_factory=dict)
    dts: dict = field(default_factory=dict)
    trs: dict = field(default_factory=dict)
    stacks: dict = field(default_factory=dict)
    blackboards: dict = field(default_factory=dict)
    styles: dict = field(default_factory=dict)
    worlds: dict = field(default_factory=dict)
    alphabets: dict = field(default_factory=dict)
    order: list = field(default_factory=list)
    explicit_values: bool = False

    def kind_of(self, name: str) -> str | None:
        for kind in ("action", "cond") + ASM_KINDS + ("world", "alphabet"):
            if name in self._table(kind):
                return kind
        return None

    def _table(self, kind: str) -> dict:
        return {
            "action": self.actions, "cond": self.conditions, "tree": self.trees, "fsm": self.fsms,
            "dt": self.dts, "tr": self.trs, "stack": self.stacks, "blackboard": self.blackboards,
            "style": self.styles, "world": self.worlds, "alphabet": self.alphabets,
        }[kind]

    def domains(self, visible_only: bool = False) -> dict:
        return {
            v.name: range(v.lo, v.hi + 1)
            for v in self.variables.values()
            if not (visible_only and v.hidden)
        }

    def asm(self, name: str) -> ASM:
        kind = self.kind_of(name)
        if kind == "tree":
            return self.trees[name]
        if kind == "dt":
            return self.dts[name]
        if kind == "tr":
            return self.trs[name]
        if kind == "fsm":
            d = self.fsms[name]
            labels = tuple((q, self.asm(ref) if k else ref) for q, k, ref in d.labels)
            return FSM(d.states, d.initial, d.transitions, labels, domains=self.domains() or None)
        if kind == "stack":
            return ControllerStack(tuple((n, self.asm(n)) for n in self.stacks[name]))
        if kind == "blackboard":
            b = self.blackboards[name]
            return BlackboardASM(self.trees[b.tree], b.init, b.updates)
        if kind == "style":
            s = self.styles[name]
            t = self.trees[s.tree]
            return apply_style(t, Style(name, _style_ids(t, s.disabled)))
        raise KBTError(f"{name!r} is not an action selection mechanism")

    def world(self, name: str):
        if name not in self.worlds:
            raise KBTError(f"unknown world {name!r}")
        return build_world(self.worlds[name])

    def alphabet(self, name: str):
        if name not in self.alphabets:
            raise KBTError(f"unknown alphabet {name!r}")
        return product_alphabet(self.alphabets[name])


def _style_ids(t: KBTree, disabled) -> set:
    ids = set()
    known = set(t.node_ids())
    for d in disabled:
        if d in known or d in t.pruned:
            ids.add(d)
            continue
        named = [n.id for n in t.nodes() if getattr(n, "selection_name", None) == d and not n.children]
        if not named:
            raise KBTError(f"style refers to unknown node {d!r}")
        ids.update(named)
    return ids


def build_world(decl: WorldDecl):
    from .scenarios import wall_follow_world

    p = dict(decl.params)
    if decl.kind == "battery":
        return BatteryWorld(**{k: v for k, v in p.items()})
    if decl.kind == "script":
        return ScriptedWorld(tuple((k, tuple(v)) for k, v in p.items()))
    if decl.kind == "door":
        unlocked = p.get("unlocked")
        return DoorWorld(None if unlocked is None else bool(unlocked), bool(p.get("has_key", 0)))
    if decl.kind == "grid":
        return wall_follow_world()
    raise KBTError(f"unknown world kind {decl.kind!r}")


# ----------------------------------------------------------------- parser


class _Parser:
    def __init__(self, toks, resolve_leaf: Callable | None = None, values: ValueSet = BT_VALUES):
        self.toks = toks
        self.i = 0
        self.resolve_leaf = resolve_leaf
        self.values = values

    # token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k=1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "name")

    def advance(self) -> Tok:
        t = self.tok
        self.i += 1
        return t

    def accept(self, text) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def expect(self, text) -> Tok:
        if not self.at(text):
            raise _ParseError(self.tok, f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def name(self, what="name") -> Tok:
        t = self.tok
        if t.kind != "name":
            raise _ParseError(t, f"expected {what}, found {t.text or 'end of input'!r}")
        return self.advance()

    def decl_name(self) -> Tok:
        t = self.name("declaration name")
        if t.text in KEYWORDS:
            raise _ParseError(t, f"{t.text!r} is a reserved word")
        return t

    def integer(self) -> int:
        t = self.tok
        if t.kind != "int":
            raise _ParseError(t, f"expected integer, found {t.text or 'end of input'!r}")
        self.advance()
        return int(t.text)

    def skip_semis(self):
        while self.accept(";"):
            pass

    # conditions
    def cond(self) -> Cond:
        args = [self.cond_and()]
        while self.accept("or"):
            args.append(self.cond_and())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def cond_and(self) -> Cond:
        args = [self.cond_not()]
        while self.accept("and"):
            args.append(self.cond_not())
        return args[0] if len(args) == 1 else And(tuple(args))

    def cond_not(self) -> Cond:
        if self.accept("not"):
            return Not(self.cond_not())
        return self.cond_atom()

    def cond_atom(self) -> Cond:
        if self.accept("true"):
            return Const(True)
        if self.accept("false"):
            return Const(False)
        if self.accept("("):
            c = self.cond()
            self.expect(")")
            return c
        t = self.name("variable")
        if t.text in KEYWORDS:
            raise _ParseError(t, f"unexpected {t.text!r} in condition")
        if self.tok.kind == "op" and self.tok.text in ("==", "=", "!=", "<", "<=", ">", ">="):
            op = self.advance().text
            return Cmp(t.text, op, self.integer())
        return Cmp(t.text, "!=", 0)

    def value_name(self):
        t = self.name("value")
        if t.text == "Unhandled":
            return UNHANDLED
        return t.text

    # trees
    def tree_expr(self) -> Node:
        return self._chain(self.tree_seq, ("?",), FAILURE)

    def tree_seq(self) -> Node:
        return self._chain(self.tree_unary, ("->",), SUCCESS)

    def _chain(self, sub, ops, handled) -> Node:
        first_tok = self.tok
        items = [sub()]
        kind = None
        while True:
            if self.tok.text in ops and self.tok.kind == "op":
                k = "plain"
            elif self.at("mem") and self.peek().text in ops:
                k = "mem"
            else:
                break
            if kind is not None and k != kind:
                raise _ParseError(self.tok, "mixed plain and memory operators need parentheses")
            kind = k
            if k == "mem":
                self.advance()
            self.advance()
            items.append(sub())
        if kind is None:
            return items[0]
        if kind == "mem":
            return MemoryControl(handled, tuple(items))
        return flatten(Control(handled, tuple(items)))

    def tree_unary(self) -> Node:
        if self.accept("!"):
            return Decorator(NEGATION, self.tree_unary())
        return self.tree_primary()

    def _bracket_list(self) -> list:
        self.expect("[")
        if self.at("]"):
            raise _ParseError(self.tok, "empty child list")
        items = [self.tree_expr()]
        while self.accept(","):
            items.append(self.tree_expr())
        self.expect("]")
        return items

    def tree_primary(self) -> Node:
        t = self.tok
        if self.accept("("):
            if self.at(")"):
                raise _ParseError(self.tok, "empty group")
            n = self.tree_expr()
            self.expect(")")
            return n
        if self.accept("*"):
            v = self.name("value").text
            return flatten(Control(v, tuple(self._bracket_list())))
        if self.at("mem") and self.peek().text == "*":
            self.advance()
            self.advance()
            v = self.name("value").text
            return MemoryControl(v, tuple(self._bracket_list()))
        if self.accept("par"):
            self.expect("(")
            m = self.integer()
            self.expect(")")
            kids = self._bracket_list()
            try:
                return Parallel(m, tuple(kids))
            except ConstructionError as e:
                raise _ParseError(t, str(e))
        if self.accept("until_success"):
            self.expect("(")
            c = self.tree_expr()
            self.expect(")")
            return Decorator(UNTIL_SUCCESS, c)
        if self.accept("times"):
            self.expect("(")
            n = self.integer()
            self.expect(")")
            self.expect("(")
            c = self.tree_expr()
            self.expect(")")
            try:
                return Decorator(TIMES, c, n=n)
            except ConstructionError as e:
                raise _ParseError(t, str(e))
        if self.accept("map"):
            self.expect("{")
            policy = []
            while not self.at("}"):
                k = self.value_name()
                self.expect(":")
                policy.append((k, self.value_name()))
                if not self.accept(","):
                    break
            self.expect("}")
            self.expect("(")
            c = self.tree_expr()
            self.expect(")")
            try:
                return Decorator(CUSTOM, c, policy=tuple(policy))
            except ConstructionError as e:
                raise _ParseError(t, str(e))
        if self.accept("utility"):
            self.expect("[")
            kids, scorers = [], []
            while True:
                kids.append(self.tree_expr())
                self.expect("@")
                scorers.append(self.score())
                if not self.accept(","):
                    break
            self.expect("]")
            return UtilityNode(tuple(kids), tuple(scorers))
        nt = self.name("tree leaf")
        if nt.text in KEYWORDS:
            raise _ParseError(nt, f"unexpected {nt.text!r} in tree")
        return self.resolve_leaf(nt)

    def score(self) -> ScoreRule:
        if self.tok.kind == "int":
            return ScoreRule((), self.integer())
        self.expect("{")
        rules, default = [], 0
        while not self.at("}"):
            if self.accept("default"):
                default = self.integer()
            else:
                s = self.integer()
                self.expect("when")
                rules.append((self.cond(), s))
            self.skip_semis()
        self.expect("}")
        return ScoreRule(tuple(rules), default)

    def dt_node(self):
        if self.accept("("):
            n = self.dt_node()
            self.expect(")")
            return n
        if self.accept("if"):
            c = self.cond()
            self.expect("then")
            yes = self.dt_node()
            self.expect("else")
            no = self.dt_node()
            return Predicate(c, yes, no)
        return DTLeaf(self.resolve_action(self.name("action")))

    def resolve_action(self, t: Tok) -> str:
        return t.text


class _ModelParser(_Parser):
    def __init__(self, toks):
        super().__init__(toks)
        self.m = Model()
        self.errors: list[Diagnostic] = []
        self.resolve_leaf = self._resolve_leaf

    def error(self, tok, msg):
        self.errors.append(Diagnostic(tok.line, tok.col, msg))

    def run(self) -> Model:
        while self.tok.kind != "eof":
            start = self.tok
            try:
                self.declaration()
            except _ParseError as e:
                self.error(e.tok, e.message)
                self._recover(start)
            except ConstructionError as e:
                self.error(start, str(e))
                self._recover(start)
        if self.errors:
            raise ModelError(self.errors)
        return self.m

    def _recover(self, start):
        if self.tok is start:
            self.advance()
        while self.tok.kind != "eof" and not (self.tok.col == 1 and self.tok.text in TOP_LEVEL):
            self.advance()

    def _declare(self, kind, tok, value):
        if self.m.kind_of(tok.text) is not None:
            raise _ParseError(tok, f"duplicate declaration of {tok.text!r}")
        self.m._table(kind)[tok.text] = value
        self.m.order.append((kind, tok.text))

    def _check_var(self, tok_or_cond, c: Cond, at: Tok):
        for v in sorted(c.variables()):
            if v not in self.m.variables:
                raise _ParseError(at, f"undeclared variable {v!r}")

    def cond_checked(self) -> Cond:
        at = self.tok
        c = self.cond()
        self._check_var(None, c, at)
        return c

    def declaration(self):
        t = self.tok
        if t.kind != "name" or t.text not in TOP_LEVEL:
            raise _ParseError(t, f"expected a declaration, found {t.text!r}")
        getattr(self, "decl_" + t.text)()
        self.skip_semis()

    def decl_values(self):
        kw = self.advance()
        if self.m.explicit_values or self.m.order:
            raise _ParseError(kw, "values must be declared once, before anything else")
        self.expect("[")
        vals = [self.name("value").text]
        while self.accept(","):
            vals.append(self.name("value").text)
        self.expect("]")
        try:
            self.m.values = ValueSet(tuple(vals))
        except ConstructionError as e:
            raise _ParseError(kw, str(e))
        self.m.explicit_values = True

    def decl_hidden(self):
        self.advance()
        if not self.at("var"):
            raise _ParseError(self.tok, "expected 'var' after 'hidden'")
        self._var(hidden=True)

    def decl_var(self):
        self._var(hidden=False)

    def _var(self, hidden):
        self.expect("var")
        n = self.decl_name()
        self.expect(":")
        if self.accept("bool"):
            lo, hi, boolean = 0, 1, True
        else:
            lo = self.integer()
            self.expect("..")
            hi = self.integer()
            boolean = False
            if hi < lo:
                raise _ParseError(n, "empty variable domain")
        if n.text in self.m.variables:
            raise _ParseError(n, f"duplicate declaration of {n.text!r}")
        self.m.variables[n.text] = VarDecl(n.text, lo, hi, hidden, boolean)
        self.m.order.append(("var", n.text))

    def decl_action(self):
        self.advance()
        n = self.decl_name()
        embed = None
        if self.accept("="):
            self.expect("embed")
            ref = self.name("model name")
            if self.m.kind_of(ref.text) not in ASM_KINDS:
                raise _ParseError(ref, f"{ref.text!r} is not a declared architecture")
            embed = ref.text
        rules, default = [], UNHANDLED
        if self.accept("{"):
            while not self.at("}"):
                if self.accept("returns"):
                    v = self.value_name()
                    self.expect("when")
                    rules.append((self.cond_checked(), v))
                elif self.accept("default"):
                    default = self.value_name()
                else:
                    raise _ParseError(self.tok, f"expected 'returns' or 'default', found {self.tok.text!r}")
                self.skip_semis()
            self.expect("}")
        self._declare("action", n, ActionDecl(n.text, ReturnRule(tuple(rules), default), embed))

    def decl_cond(self):
        self.advance()
        n = self.decl_name()
        self.expect("=")
        self._declare("cond", n, self.cond_checked())

    def _resolve_leaf(self, t: Tok) -> Node:
        kind = self.m.kind_of(t.text)
        if kind == "action":
            a = self.m.actions[t.text]
            asm = self.m.asm(a.embed) if a.embed else None
            return ActionNode(a.name, a.returns, asm)
        if kind == "cond":
            return ConditionLeaf(t.text, self.m.conditions[t.text])
        if kind == "tree":
            return strip_ids(self.m.trees[t.text].root)
        if kind is None:
            raise _ParseError(t, f"unresolved name {t.text!r}")
        raise _ParseError(t, f"{t.text!r} is a {kind}; embed it with an action declaration")

    def decl_tree(self):
        self.advance()
        n = self.decl_name()
        self.expect("=")
        at = self.tok
        root = self.tree_expr()
        try:
            t = KBTree(self.m.values, root)
        except ConstructionError as e:
            raise _ParseError(at, str(e))
        self._declare("tree", n, t)

    def decl_fsm(self):
        kw = self.advance()
        n = self.decl_name()
        self.expect("{")
        states: list[str] = []
        explicit_states = None
        init = None
        transitions, labels = [], []

        def note(s):
            if s not in states:
                states.append(s)

        while not self.at("}"):
            if self.accept("states"):
                self.expect("[")
                explicit_states = [self.name("state").text]
                while self.accept(","):
                    explicit_states.append(self.name("state").text)
                self.expect("]")
            elif self.accept("init"):
                init = self.name("state").text
                note(init)
            elif self.accept("label"):
                q = self.name("state").text
                self.expect(":")
                note(q)
                if self.tok.text in ASM_KINDS and self.peek().kind == "name":
                    k = self.advance().text
                    ref = self.name("model name")
                    if self.m.kind_of(ref.text) != k:
                        raise _ParseError(ref, f"{ref.text!r} is not a declared {k}")
                    labels.append((q, k, ref.text))
                else:
                    ref = self.name("action")
                    if self.m.kind_of(ref.text) not in ("action",) + ASM_KINDS:
                        raise _ParseError(ref, f"unresolved name {ref.text!r}")
                    labels.append((q, None, ref.text))
            else:
                src = self.name("state").text
                self.expect("-[")
                g = self.cond_checked()
                self.expect("]")
                self.expect("->")
                dst = self.name("state").text
                note(src)
                note(dst)
                transitions.append(Transition(src, g, dst))
            self.skip_semis()
        self.expect("}")
        if init is None:
            raise _ParseError(kw, f"fsm {n.text!r} has no init state")
        if explicit_states is not None:
            missing = set(states) - set(explicit_states)
            if missing:
                raise _ParseError(kw, f"states {sorted(missing)} missing from the states list")
            states = explicit_states
        decl = FSMDecl(tuple(states), init, tuple(transitions), tuple(labels))
        try:
            labs = tuple((q, self.m.asm(ref) if k else ref) for q, k, ref in labels)
            FSM(decl.states, init, decl.transitions, labs, domains=self.m.domains() or None)
        except ConstructionError as e:
            raise _ParseError(kw, str(e))
        self._declare("fsm", n, decl)

    def decl_dt(self):
        self.advance()
        n = self.decl_name()
        self.expect("=")
        self._declare("dt", n, DT(self.dt_node()))

    def resolve_action(self, t: Tok) -> str:
        if self.m.kind_of(t.text) != "action":
            raise _ParseError(t, f"unresolved action {t.text!r}")
        return t.text

    def decl_tr(self):
        import warnings

        self.advance()
        n = self.decl_name()
        self.expect("{")
        rules = []
        while not self.at("}"):
            c = self.cond_checked()
            self.expect("->")
            rules.append((c, self.resolve_action(self.name("action"))))
            self.skip_semis()
        self.expect("}")
        if not rules:
            raise _ParseError(n, "a TR needs at least one rule")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tr = TR(tuple(rules))
        self._declare("tr", n, tr)

    def decl_blackboard(self):
        self.advance()
        n = self.decl_name()
        self.expect("over")
        ref = self.name("tree")
        if self.m.kind_of(ref.text) != "tree":
            raise _ParseError(ref, f"{ref.text!r} is not a declared tree")
        self.expect("{")
        init, updates = [], []
        while not self.at("}"):
            if self.accept("init"):
                v = self.name("variable")
                self._hidden_var(v)
                self.expect("=")
                init.append((v.text, self.integer()))
            else:
                self.expect("set")
                v = self.name("variable")
                self._hidden_var(v)
                self.expect("=")
                val = self.integer()
                node = returns = when = None
                if self.accept("on"):
                    nt = self.name("node")
                    node = nt.text
                    if self.accept("returns"):
                        returns = self.name("value").text
                if self.accept("when"):
                    when = self.cond_checked()
                updates.append(Update(v.text, val, when, node, returns))
            self.skip_semis()
        self.expect("}")
        names = [k for k, _ in init]
        for u in updates:
            if u.var not in names:
                init.append((u.var, self.m.variables[u.var].lo))
                names.append(u.var)
        self._declare("blackboard", n, BlackboardDecl(ref.text, tuple(init), tuple(updates)))

    def _hidden_var(self, t: Tok):
        v = self.m.variables.get(t.text)
        if v is None or not v.hidden:
            raise _ParseError(t, f"{t.text!r} is not a declared hidden variable")

    def decl_style(self):
        self.advance()
        n = self.decl_name()
        self.expect("on")
        ref = self.name("tree")
        if self.m.kind_of(ref.text) != "tree":
            raise _ParseError(ref, f"{ref.text!r} is not a declared tree")
        self.expect("disable")
        self.expect("[")
        items = []
        if not self.at("]"):
            items.append(self.name("node").text)
            while self.accept(","):
                items.append(self.name("node").text)
        self.expect("]")
        decl = StyleDecl(ref.text, tuple(items))
        t = self.m.trees[ref.text]
        try:
            apply_style(t, Style(n.text, _style_ids(t, decl.disabled)))
        except KBTError as e:
            raise _ParseError(n, str(e))
        self._declare("style", n, decl)

    def decl_stack(self):
        self.advance()
        n = self.decl_name()
        self.expect("=")
        self.expect("[")
        layers = [self.name("layer")]
        while self.accept(","):
            layers.append(self.name("layer"))
        self.expect("]")
        for lt in layers:
            if self.m.kind_of(lt.text) not in ASM_KINDS:
                raise _ParseError(lt, f"layer {lt.text!r} is not a declared architecture")
        names = [lt.text for lt in layers]
        if len(set(names)) != len(names):
            raise _ParseError(n, "duplicate layer in stack")
        self._declare("stack", n, tuple(names))

    def decl_world(self):
        self.advance()
        n = self.decl_name()
        self.expect("=")
        kind = self.name("world kind")
        if kind.text not in ("battery", "script", "door", "grid"):
            raise _ParseError(kind, f"unknown world kind {kind.text!r}")
        self.expect("(")
        params = []
        while not self.at(")"):
            k = self.name("parameter")
            if self.accept("="):
                if self.accept("["):
                    vals = []
                    if not self.at("]"):
                        vals.append(self.integer())
                        while self.accept(","):
                            vals.append(self.integer())
                    self.expect("]")
                    params.append((k.text, tuple(vals)))
                else:
                    params.append((k.text, self.integer()))
            else:
                params.append((k.text, 1))
            if not self.accept(","):
                break
        self.expect(")")
        decl = WorldDecl(kind.text, tuple(params))
        try:
            build_world(decl)
        except (TypeError, ValueError, KBTError) as e:
            raise _ParseError(kind, f"bad world parameters: {e}")
        self._declare("world", n, decl)

    def decl_alphabet(self):
        self.advance()
        n = self.decl_name()
        self.expect("=")
        self.expect("{")
        doms = {}
        while not self.at("}"):
            v = self.name("variable")
            if v.text not in self.m.variables:
                raise _ParseError(v, f"undeclared variable {v.text!r}")
            if self.m.variables[v.text].hidden:
                raise _ParseError(v, f"hidden variable {v.text!r} cannot be part of an alphabet")
            self.expect(":")
            if self.accept("["):
                vals = [self.integer()]
                while self.accept(","):
                    vals.append(self.integer())
                self.expect("]")
            else:
                lo = self.integer()
                self.expect("..")
                vals = list(range(lo, self.integer() + 1))
            doms[v.text] = tuple(vals)
            self.skip_semis()
        self.expect("}")
        try:
            product_alphabet(doms)
        except ConstructionError as e:
            raise _ParseError(n, str(e))
        self._declare("alphabet", n, doms)


def parse_model(text: str) -> Model:
    """Parse a model file; raises :class:`ModelError` listing every problem found."""
    return _ModelParser(tokenize(text)).run()


def parse_tree_expr(text: str, leaves: dict, values: ValueSet = BT_VALUES) -> Node:
    from .tree import _as_node

    def resolve(t: Tok) -> Node:
        if t.text in leaves:
            return strip_ids(_as_node(leaves[t.text]))
        return ActionNode(t.text)

    p = _Parser(tokenize(text), resolve, values)
    try:
        root = p.tree_expr()
        if p.tok.kind != "eof":
            raise _ParseError(p.tok, f"unexpected {p.tok.text!r}")
    except _ParseError as e:
        raise ModelError([Diagnostic(e.tok.line, e.tok.col, e.message)])
    return root


def parse_alphabet_spec(text: str, model: Model | None = None):
    """``NAME`` of a declared alphabet or inline ``battery=5,50,100;door=0..2``."""
    if model is not None and text in model.alphabets:
        return model.alphabet(text)
    doms = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        if "=" not in part:
            raise KBTError(f"bad alphabet term {part!r}")
        k, v = (s.strip() for s in part.split("=", 1))
        if ".." in v:
            lo, hi = v.split("..")
            doms[k] = range(int(lo), int(hi) + 1)
        else:
            doms[k] = [int(s) for s in v.split(",")]
    if not doms:
        raise KBTError(f"empty alphabet {text!r}")
    return product_alphabet(doms)


# -------------------------------------------------------------- formatter

_PREC = {"or": 1, "and": 2, "not": 3, "atom": 4}


def format_cond(c: Cond) -> str:
    return _fmt_cond(c, 0)


def _fmt_cond(c: Cond, outer: int) -> str:
    if isinstance(c, Const):
        s, p = ("true" if c.value else "false"), 4
    elif isinstance(c, Cmp):
        s, p = f"{c.var} {c.op} {c.value}", 4
    elif isinstance(c, Not):
        s, p = "not " + _fmt_cond(c.arg, 3), 3
    elif isinstance(c, And):
        s, p = " and ".join(_fmt_cond(a, 3) for a in c.args), 2
    elif isinstance(c, Or):
        s, p = " or ".join(_fmt_cond(a, 2) for a in c.args), 1
    else:
        raise TypeError(f"cannot format condition {c!r}")
    # nested same-operator groups keep their parentheses so parsing is exact
    return f"({s})" if p < outer or (p == outer and p in (1, 2)) else s


def _fmt_value(v) -> str:
    return "Unhandled" if v is UNHANDLED else (v if isinstance(v, str) else v.name)


def format_tree(node: Node) -> str:
    return _fmt_node(flatten(node), 0)


def _infix(n):
    """(level, operator) for nodes printed as infix chains, else None."""
    if len(n.children) < 2:
        return None
    if type(n) is Control and n.handled in (SUCCESS, FAILURE):
        return (2 if n.handled == SUCCESS else 1), ("->" if n.handled == SUCCESS else "?")
    if isinstance(n, MemoryControl) and n.handled in (SUCCESS, FAILURE):
        return (2 if n.handled == SUCCESS else 1), ("mem->" if n.handled == SUCCESS else "mem?")
    return None


def _fmt_node(n: Node, outer: int) -> str:
    inf = _infix(n)
    if inf is not None:
        level, op = inf
        parts = []
        for c in n.children:
            ci = _infix(c)
            need = ci is not None and ci[0] <= level
            s = _fmt_node(c, 0)
            parts.append(f"({s})" if need else s)
        s = f" {op} ".join(parts)
        return f"({s})" if outer > level else s
    kids = lambda: ", ".join(_fmt_node(c, 0) for c in n.children)  # noqa: E731
    if isinstance(n, ActionNode):
        return n.action
    if isinstance(n, ConditionLeaf):
        return n.name
    if type(n) is Control:
        return f"*{n.handled}[{kids()}]"
    if isinstance(n, MemoryControl):
        return f"mem*{n.handled}[{kids()}]"
    if isinstance(n, Parallel):
        return f"par({n.threshold})[{kids()}]"
    if isinstance(n, UtilityNode):
        items = ", ".join(f"{_fmt_node(c, 0)} @ {_fmt_score(s)}" for c, s in zip(n.children, n.scorers))
        return f"utility[{items}]"
    if isinstance(n, Decorator):
        inner = _fmt_node(n.child, 0)
        if n.kind == NEGATION:
            return "!" + (f"({inner})" if _infix(n.child) else inner)
        if n.kind == UNTIL_SUCCESS:
            return f"until_success({inner})"
        if n.kind == TIMES:
            return f"times({n.n})({inner})"
        pol = ", ".join(f"{_fmt_value(k)}: {_fmt_value(v)}" for k, v in n.policy)
        return f"map{{{pol}}}({inner})"
    raise TypeError(f"cannot format node {type(n).__name__}")


def _fmt_score(s) -> str:
    if not isinstance(s, ScoreRule):
        raise TypeError("only ScoreRule scorers can be formatted")
    if not s.rules:
        return str(s.default)
    body = "; ".join(f"{v} when {format_cond(c)}" for c, v in s.rules)
    return f"{{{body}; default {s.default}}}"


def _fmt_dt(n) -> str:
    if isinstance(n, DTLeaf):
        return n.action
    def sub(c):
        return f"({_fmt_dt(c)})" if isinstance(c, Predicate) else _fmt_dt(c)
    return f"if {format_cond(n.cond)} then {sub(n.if_true)} else {sub(n.if_false)}"


def format_model(m: Model) -> str:
    """Canonical text for ``m``; declarations keep their original order."""
    out = []
    if m.explicit_values:
        out.append(f"values [{', '.join(m.values)}]")
    for kind, name in m.order:
        if kind == "var":
            v = m.variables[name]
            dom = "bool" if v.boolean else f"{v.lo}..{v.hi}"
            out.append(f"{'hidden ' if v.hidden else ''}var {name}: {dom}")
        elif kind == "action":
            a = m.actions[name]
            head = f"action {name}" + (f" = embed {a.embed}" if a.embed else "")
            body = [f"returns {_fmt_value(v)} when {format_cond(c)}" for c, v in a.returns.rules]
            if a.returns.default is not UNHANDLED:
                body.append(f"default {_fmt_value(a.returns.default)}")
            out.append(head + (" { " + "; ".join(body) + " }" if body else ""))
        elif kind == "cond":
            out.append(f"cond {name} = {format_cond(m.conditions[name])}")
        elif kind == "tree":
            out.append(f"tree {name} = {format_tree(m.trees[name].root)}")
        elif kind == "fsm":
            f = m.fsms[name]
            lines = [f"fsm {name} {{", f"  states [{', '.join(f.states)}]", f"  init {f.initial}"]
            for t in f.transitions:
                lines.append(f"  {t.src} -[{format_cond(t.guard)}]-> {t.dst}")
            for q, k, ref in f.labels:
                lines.append(f"  label {q}: {k + ' ' if k else ''}{ref}")
            lines.append("}")
            out.append("\n".join(lines))
        elif kind == "dt":
            out.append(f"dt {name} = {_fmt_dt(m.dts[name].root)}")
        elif kind == "tr":
            rules = "; ".join(f"{format_cond(c)} -> {a}" for c, a in m.trs[name].rules)
            out.append(f"tr {name} {{ {rules} }}")
        elif kind == "blackboard":
            b = m.blackboards[name]
            lines = [f"blackboard {name} over {b.tree} {{"]
            for k, v in b.init:
                lines.append(f"  init {k} = {v}")
            for u in b.updates:
                s = f"  set {u.var} = {u.value}"
                if u.node is not None:
                    s += f" on {u.node}" + (f" returns {u.returns}" if u.returns is not None else "")
                if u.when is not None:
                    s += f" when {format_cond(u.when)}"
                lines.append(s)
            lines.append("}")
            out.append("\n".join(lines))
        elif kind == "style":
            s = m.styles[name]
            out.append(f"style {name} on {s.tree} disable [{', '.join(s.disabled)}]")
        elif kind == "stack":
            out.append(f"stack {name} = [{', '.join(m.stacks[name])}]")
        elif kind == "world":
            w = m.worlds[name]
            ps = []
            for k, v in w.params:
                ps.append(f"{k}=[{', '.join(map(str, v))}]" if isinstance(v, tuple) else f"{k}={v}")
            out.append(f"world {name} = {w.kind}({', '.join(ps)})")
        elif kind == "alphabet":
            doms = "; ".join(f"{k}: [{', '.join(map(str, v))}]" for k, v in m.alphabets[name].items())
            out.append(f"alphabet {name} = {{ {doms} }}")
    return "\n".join(out) + "\n"
