import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import EIGHT_STATES, random_cond, random_desc, to_tree

from kbt import (
    DT,
    FSM,
    TR,
    TRUE,
    ConstructionError,
    DTLeaf,
    FSMCycleError,
    InputState,
    NoRuleError,
    Predicate,
    Transition,
    bt_to_dt,
    dt_select,
    fsm_step,
    tick,
    tr_select,
)
from kbt.core import Cmp
from kbt.scenarios import load_model


def battery(b):
    return InputState.of(battery=b)


def _top():
    return FSM(
        ("OtherTask", "Recharging"),
        "OtherTask",
        (
            Transition("OtherTask", Cmp("battery", "<", 10), "Recharging"),
            Transition("Recharging", Cmp("battery", "==", 100), "OtherTask"),
        ),
        {"OtherTask": "OtherTask", "Recharging": "Recharge"},
    )


class TestFSM:
    def test_stays_without_trigger(self):
        q, sel = fsm_step(_top(), "OtherTask", battery(50))
        assert q == "OtherTask" and sel.action == "OtherTask"

    def test_low_battery_moves_to_recharging(self):
        q, sel = fsm_step(_top(), "OtherTask", battery(5))
        assert q == "Recharging" and sel.action == "Recharge"

    def test_recharging_persists_above_threshold(self):
        assert fsm_step(_top(), "Recharging", battery(50))[0] == "Recharging"
        assert fsm_step(_top(), "Recharging", battery(100))[0] == "OtherTask"

    def test_chained_transitions_settle_in_one_step(self):
        f = FSM(
            ("q1", "q2", "q3"),
            "q1",
            (Transition("q1", Cmp("a", "==", 1), "q2"), Transition("q2", Cmp("a", "==", 1), "q3")),
            {"q1": "A1", "q2": "A2", "q3": "A3"},
        )
        assert fsm_step(f, "q1", InputState.of(a=1))[0] == "q3"
        assert fsm_step(f, "q1", InputState.of(a=0))[0] == "q1"

    def test_cycle_under_fixed_input_raises(self):
        f = FSM(
            ("p", "q"),
            "p",
            (Transition("p", TRUE, "q"), Transition("q", TRUE, "p")),
            {"p": "P", "q": "Q"},
        )
        with pytest.raises(FSMCycleError) as e:
            fsm_step(f, "p", InputState.of())
        assert e.value.loop[0] == e.value.loop[-1]

    def test_overlapping_guards_rejected_with_domains(self):
        with pytest.raises(ConstructionError, match="overlap"):
            FSM(
                ("p", "q", "r"),
                "p",
                (Transition("p", Cmp("a", ">=", 1), "q"), Transition("p", Cmp("a", "<=", 1), "r")),
                {"p": "P", "q": "Q", "r": "R"},
                domains={"a": (0, 1, 2)},
            )

    def test_missing_label_rejected(self):
        with pytest.raises(ConstructionError):
            FSM(("p", "q"), "p", (), {"p": "P"})

    def test_unknown_initial_rejected(self):
        with pytest.raises(ConstructionError):
            FSM(("p",), "z", (), {"p": "P"})

    def test_step_matches_fsm_step_along_a_history(self):
        f = _top()
        state = f.initial_state()
        q = f.initial
        for b in (50, 5, 50, 100, 9):
            state, sel = f.step(state, battery(b))
            q, expected = fsm_step(f, q, battery(b))
            assert state[0] == q and sel.action == expected.action

    def test_embedded_asm_label_is_consulted(self):
        top = load_model("battery").asm("TopEmbedded")
        q, sel = fsm_step(top, "OtherTask", battery(9))
        assert q == "Recharging" and sel.action == "Recharge"
        q, sel = fsm_step(top, "OtherTask", battery(50))
        assert sel.action == "OtherTask" and sel.path[0] == "OtherTask"


def _random_dt(rng, depth=0):
    if depth > 3 or rng.random() < 0.3:
        return DTLeaf(f"D{rng.randint(0, 4)}")
    return Predicate(random_cond(rng, "abc", (0, 1)), _random_dt(rng, depth + 1), _random_dt(rng, depth + 1))


def _paths(n, taken=()):
    """Every root-to-leaf path as (conditions with polarity, action)."""
    if isinstance(n, DTLeaf):
        yield taken, n.action
        return
    yield from _paths(n.if_true, taken + ((n.cond, True),))
    yield from _paths(n.if_false, taken + ((n.cond, False),))


class TestDT:
    def test_two_level(self):
        d = DT(Predicate(Cmp("a", "==", 1), Predicate(Cmp("b", "==", 1), DTLeaf("AB"), DTLeaf("A")), DTLeaf("None")))
        assert dt_select(d, InputState.of(a=1, b=1)).action == "AB"
        assert dt_select(d, InputState.of(a=1, b=0)).action == "A"
        assert dt_select(d, InputState.of(a=0, b=1)).action == "None"
        assert d.size() == 5

    def test_predicate_needs_two_children(self):
        with pytest.raises(ConstructionError):
            Predicate(TRUE, DTLeaf("A"), "B")

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_exactly_one_consistent_path(self, seed):
        d = DT(_random_dt(random.Random(seed)))
        for x in EIGHT_STATES:
            hits = [a for conds, a in _paths(d.root) if all(c.evaluate(x) == want for c, want in conds)]
            assert len(hits) == 1
            assert dt_select(d, x).action == hits[0]


class TestTR:
    def test_first_true_rule_wins(self):
        t = TR(((Cmp("a", "==", 1), "A"), (Cmp("b", "==", 1), "B"), (TRUE, "Idle")))
        assert tr_select(t, InputState.of(a=1, b=1)).action == "A"
        assert tr_select(t, InputState.of(a=0, b=1)).action == "B"
        assert tr_select(t, InputState.of(a=0, b=0)).action == "Idle"

    def test_no_rule_raises(self):
        with pytest.warns(UserWarning, match="catch-all"):
            t = TR(((Cmp("a", "==", 1), "A"),))
        with pytest.raises(NoRuleError):
            tr_select(t, InputState.of(a=0))

    def test_empty_rejected(self):
        with pytest.raises(ConstructionError):
            TR(())

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_first_match_oracle(self, seed):
        rng = random.Random(seed)
        rules = [(random_cond(rng, "abc", (0, 1)), f"R{i}") for i in range(rng.randint(1, 5))] + [(TRUE, "Idle")]
        t = TR(tuple(rules))
        for x in EIGHT_STATES:
            expected = next(a for k, a in rules if k.evaluate(x))
            assert tr_select(t, x).action == expected


class TestBtToDt:
    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 10_000))
    def test_random_trees_select_the_same_leaf(self, seed):
        t = to_tree(random_desc(random.Random(seed), max_nodes=12))
        d = bt_to_dt(t)
        for x in EIGHT_STATES:
            assert dt_select(d, x).action == tick(t, x).selection.action

    def test_threshold_tree(self):
        t = load_model("battery").asm("Chattering")
        d = bt_to_dt(t)
        for b in (0, 9, 10, 11, 100):
            assert dt_select(d, battery(b)).action == tick(t, battery(b)).selection.action
