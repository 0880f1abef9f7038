import itertools

import pytest
from hypothesis import given, strategies as st

from kbt import (
    DT,
    FSM,
    TRUE,
    UNHANDLED,
    And,
    Cmp,
    ConstructionError,
    DTLeaf,
    EvalError,
    InputState,
    Not,
    Or,
    Selection,
    UnboundVariableError,
    Unhandled,
    V,
    ValueSet,
    alphabet,
    evaluate_condition,
    run_asm,
    trace_asm,
)
from kbt.core import FALSE, Const, value_str
from kbt.scenarios import load_model


def battery(b):
    return InputState.of(battery=b)


class TestValueSet:
    def test_k_and_membership(self):
        vs = ValueSet(("Success", "Failure", "Unknown"))
        assert vs.k == 3
        assert "Unknown" in vs
        assert "Running" not in vs

    def test_rejects_empty_and_duplicates(self):
        with pytest.raises(ConstructionError):
            ValueSet(())
        with pytest.raises(ConstructionError):
            ValueSet(("A", "A"))

    def test_classify_marks_outside_values_unhandled(self):
        vs = ValueSet(("Success", "Failure"))
        assert vs.classify("Success") == "Success"
        out = vs.classify("Unknown")
        assert isinstance(out, Unhandled) and out.name == "Unknown"
        assert isinstance(vs.classify(UNHANDLED), Unhandled)

    def test_value_str(self):
        assert value_str("Success") == "Success"
        assert value_str(UNHANDLED) == "Unhandled"


class TestInputState:
    def test_lookup_and_unbound(self):
        x = InputState.of(battery=5, door=1)
        assert x["battery"] == 5
        with pytest.raises(UnboundVariableError) as e:
            x["missing"]
        assert e.value.name == "missing"

    def test_order_independent_equality(self):
        assert InputState.of({"a": 1, "b": 2}) == InputState.of({"b": 2, "a": 1})

    def test_hidden_variables_dropped_by_visible(self):
        x = InputState.of(battery=5).merge({"recharging": 1}, hidden=True)
        assert x["recharging"] == 1
        assert x.visible() == InputState.of(battery=5)

    def test_alphabet_is_cartesian_product(self):
        a = alphabet({"a": [0, 1], "b": [0, 1, 2]})
        assert len(a) == 6
        assert len(set(a)) == 6


class TestConditions:
    def test_threshold(self):
        assert evaluate_condition(Cmp("battery", "<", 10), battery(5))
        assert not evaluate_condition(Cmp("battery", "<", 10), battery(10))

    def test_true_literal(self):
        assert evaluate_condition(TRUE, InputState.of())
        assert not evaluate_condition(FALSE, battery(3))

    def test_conjunction_truth_table(self):
        c = And((Cmp("battery", "==", 100), Not(Cmp("door", "==", 1))))
        for b, d in itertools.product((0, 100), (0, 1)):
            x = InputState.of(battery=b, door=d)
            assert evaluate_condition(c, x) == (b == 100 and d != 1)
        assert evaluate_condition(c, InputState.of(battery=100, door=0))

    def test_builder_syntax(self):
        c = (V("battery") < 10) & ~(V("door") == 1)
        assert c.evaluate(InputState.of(battery=3, door=0))
        either = (V("a") == 1) | (V("b") == 1)
        assert either.evaluate(InputState.of(a=0, b=1))
        assert not either.evaluate(InputState.of(a=0, b=0))

    def test_unbound_variable_names_it(self):
        with pytest.raises(UnboundVariableError, match="door"):
            evaluate_condition(Cmp("door", "==", 1), battery(5))

    def test_or_evaluates_every_operand(self):
        # totality: an unbound variable in a later operand is still an error
        with pytest.raises(EvalError):
            Or((TRUE, Cmp("ghost", "==", 0))).evaluate(InputState.of())

    @given(st.integers(-5, 5), st.sampled_from(["==", "!=", "<", "<=", ">", ">="]), st.integers(-5, 5))
    def test_negated_comparison_is_complement(self, v, op, lit):
        c = Cmp("v", op, lit)
        x = InputState.of(v=v)
        assert c.negated().evaluate(x) == (not c.evaluate(x))

    def test_equals_alias(self):
        assert Cmp("a", "=", 1) == Cmp("a", "==", 1)

    def test_variables(self):
        c = Or((Cmp("a", "==", 1), Not(Cmp("b", "<", 2)), Const(True)))
        assert c.variables() == {"a", "b"}


class TestRunAsm:
    def test_single_leaf_dt(self):
        sel = run_asm(DT(DTLeaf("A")), [InputState.of()])
        assert sel == Selection("A", UNHANDLED)

    def test_empty_history_rejected(self):
        with pytest.raises(EvalError):
            run_asm(DT(DTLeaf("A")), [])

    def test_layered_fsm_keeps_recharging(self):
        top = load_model("battery").asm("TopEmbedded")
        assert run_asm(top, [battery(5), battery(50)]).action == "Recharge"
        assert run_asm(top, [battery(50)]).action == "OtherTask"

    @given(st.lists(st.sampled_from([0, 5, 9, 10, 11, 50, 100]), min_size=1, max_size=6))
    def test_tree_depends_on_last_input_only(self, levels):
        t = load_model("battery").asm("Chattering")
        h = [battery(b) for b in levels]
        assert run_asm(t, h) == run_asm(t, h[-1:])

    @given(st.lists(st.sampled_from([5, 50, 100]), min_size=1, max_size=6))
    def test_trace_prefix_consistency(self, levels):
        m = load_model("battery").asm("TopEmbedded")
        h = [battery(b) for b in levels]
        tr = trace_asm(m, h)
        assert len(tr) == len(h)
        for i in range(len(h)):
            assert tr[i] == run_asm(m, h[: i + 1])
        assert run_asm(m, h) == run_asm(m, h)

    def test_threshold_tree_alternates(self):
        t = load_model("battery").asm("Chattering")
        acts = [s.action for s in trace_asm(t, [battery(b) for b in (11, 9, 11, 9)])]
        assert acts == ["OtherTask", "Recharge", "OtherTask", "Recharge"]

    def test_memory_sequence_hand_simulation(self):
        m = load_model("memory").asm("MemorySequence")
        h = [
            InputState.of(s1=1, f1=0, s2=0),  # Action1 done, Action2 running
            InputState.of(s1=0, f1=1, s2=0),  # Action1 would fail, but it is remembered
            InputState.of(s1=0, f1=0, s2=1),  # Action2 completes: memory clears
        ]
        acts = [(s.action, value_str(s.value)) for s in trace_asm(m, h)]
        assert acts == [("Action2", "Unhandled"), ("Action2", "Unhandled"), ("Action2", "Success")]
        assert run_asm(m, h + [InputState.of(s1=0, f1=0, s2=0)]).action == "Action1"


def test_fsm_is_an_asm_with_stepwise_state():
    f = FSM(("A", "B"), "A", (), {"A": "a", "B": "b"})
    state, sel = f.step(f.initial_state(), InputState.of())
    assert sel.action == "a" and state[0] == "A"
