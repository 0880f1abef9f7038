"""Generalised (k-valued) behavior trees, classical action selection
architectures, reactiveness/equivalence checking and small simulated worlds."""
from .core import (
    ASM,
    BT_VALUES,
    FAILURE,
    FALSE,
    NOOP,
    SUCCESS,
    TRUE,
    UNHANDLED,
    And,
    Cmp,
    Cond,
    Const,
    ConstructionError,
    EvalError,
    InputState,
    KBTError,
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
from .tree import (
    PRECOND_FALSE,
    ActionNode,
    ConditionLeaf,
    Context,
    Control,
    KBTree,
    ReturnRule,
    action,
    condition,
    control,
    embed_asm_as_action,
    fallback,
    flatten,
    handled_values,
    infix_compose,
    sequence,
    substitute_subtree,
    tick,
    tr_to_kbt,
    tree,
)
from .extensions import (
    BlackboardASM,
    Decorator,
    MemoryControl,
    Parallel,
    ScoreRule,
    Style,
    StyleError,
    Update,
    UtilityNode,
    apply_style,
    custom_decorator,
    fallback_with_memory,
    negation,
    push_down_negations,
    run_n_times,
    run_until_success,
    sequence_with_memory,
    tick_decorator,
    tick_memory,
    tick_parallel,
    tick_utility,
)
from .classic import (
    DT,
    FSM,
    TR,
    DTLeaf,
    FSMCycleError,
    NoRuleError,
    Predicate,
    Transition,
    bt_to_dt,
    dt_select,
    fsm_step,
    tr_select,
)
from .analysis import (
    BudgetExceeded,
    EquivalenceReport,
    ReactivenessReport,
    check_equivalence,
    check_reactive,
    count_switches,
    export_dot,
)
from .worlds import (
    BatteryWorld,
    ControllerStack,
    DoorWorld,
    GridWorld,
    ScriptedWorld,
    SimTrace,
    StackError,
    simulate,
)
from .dsl import Model, ModelError, format_model, parse_model

__version__ = "0.1.0"
