"""Ready-made scenarios: recharging robot, memory emulation, wall following,
and the door with uncertain lock status.

The battery, memory and door fixtures live as model files under
``kbt/models``; the grid controllers are built here in Python because their
conditions range over the 25-cell observation window.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .classic import FSM, TR, Transition
from .core import TRUE, And, Cmp, Cond, Not, Or
from .worlds import (
    EMPTY,
    MARKER,
    OUT,
    STEP_FORWARD,
    TURN_LEFT,
    TURN_RIGHT,
    WALL,
    BatteryWorld,
    ControllerStack,
    DoorWorld,
    GridWorld,
    Pose,
    ScriptedWorld,
    cell_var,
)

MODEL_FILES = ("battery", "memory", "door")


def model_text(name: str) -> str:
    return resources.files("kbt").joinpath("models").joinpath(f"{name}.kbt").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_model(name: str):
    from .dsl import parse_model

    return parse_model(model_text(name))


# ----------------------------------------------------------- battery robot

HOVER_SCRIPT = {"battery": (11, 9)}


@dataclass(frozen=True)
class ChatteringScenario:
    hover: ScriptedWorld
    closed_loop: BatteryWorld
    chattering_bt: object
    layered_fsm: ControllerStack
    blackboard_bt: object


def chattering_scenario() -> ChatteringScenario:
    """Threshold tree vs. FSM layered over it, on a battery hovering near 10%."""
    m = load_model("battery")
    return ChatteringScenario(
        hover=ScriptedWorld(HOVER_SCRIPT),
        closed_loop=BatteryWorld(start=11, drain=1, charge=5),
        chattering_bt=m.asm("Chattering"),
        layered_fsm=m.asm("Layered"),
        blackboard_bt=m.asm("Remembering"),
    )


def memory_scenario():
    """(sequence with memory, emulation with hidden flags, alphabet)."""
    m = load_model("memory")
    return m.asm("MemorySequence"), m.asm("MemoryEmulation"), m.alphabet("Flags")


@dataclass(frozen=True)
class DoorScenario:
    world: DoorWorld
    handling: object
    ignoring: object
    alphabet: list


def door_scenario(unlocked: bool | None = False) -> DoorScenario:
    m = load_model("door")
    return DoorScenario(DoorWorld(unlocked), m.asm("HandleUnknown"), m.asm("IgnoreUnknown"), m.alphabet("Knowledge"))


# ------------------------------------------------------------ wall follow

ROOM_WIDTH, ROOM_HEIGHT = 16, 12
RING = (4, 3, 11, 8)  # x0, y0, x1, y1 of the one-cell-thick wall ring
GAP = (7, 8)  # passage in the lower wall
WALL_FOLLOW_START = Pose(5, 7, "E")


def wall_follow_world() -> GridWorld:
    """A hollow rectangle of walls with a single passage in its lower side,
    standing in open floor.  The agent starts inside, wall on its right."""
    x0, y0, x1, y1 = RING
    walls = set()
    for x in range(x0, x1 + 1):
        walls.update({(x, y0), (x, y1)})
    for y in range(y0, y1 + 1):
        walls.update({(x0, y), (x1, y)})
    walls.discard(GAP)
    return GridWorld(ROOM_WIDTH, ROOM_HEIGHT, frozenset(walls), WALL_FOLLOW_START)


def _solid(f: int, r: int) -> Cond:
    v = cell_var(f, r)
    return Or((Cmp(v, "==", WALL), Cmp(v, "==", OUT)))


def _free(f: int, r: int) -> Cond:
    v = cell_var(f, r)
    return Or((Cmp(v, "==", EMPTY), Cmp(v, "==", MARKER)))


# wall straight ahead
BLOCKED = _solid(1, 0)
# the wall on our right just ended: right cell free, the one behind it solid
WRAP_CORNER = And((_free(0, 1), _solid(-1, 1)))
# ... and the wall resumes right after the opening, i.e. we are beside a passage
GAP_ON_RIGHT = And((_free(0, 1), _solid(-1, 1), _solid(1, 1)))
# walls on both sides: standing inside a passage
IN_GAP = And((_solid(0, 1), _solid(0, -1)))


def reactive_wall_follower() -> TR:
    """Right-hand wall following from the current view only."""
    return TR(((BLOCKED, TURN_LEFT), (WRAP_CORNER, TURN_RIGHT), (TRUE, STEP_FORWARD)))


def _prioritised(src: str, rules) -> list[Transition]:
    out = []
    earlier: list[Cond] = []
    for cond, dst in rules:
        guard = cond if not earlier else And(tuple(Not(c) for c in earlier) + (cond,))
        if cond is TRUE:
            guard = And(tuple(Not(c) for c in earlier)) if earlier else TRUE
        if dst != src:
            out.append(Transition(src, guard, dst))
        earlier.append(cond)
    return out


def fsm_wall_follower(domains=None) -> FSM:
    """Wall follower that remembers having just passed through a passage,
    so it goes past the opening instead of turning back into it."""
    labels = {
        "Forward": STEP_FORWARD,
        "Left": TURN_LEFT,
        "Wrap": TURN_RIGHT,
        "InGap": STEP_FORWARD,
        "ExitWrap": TURN_RIGHT,
        "Skip": STEP_FORWARD,
    }
    normal = [(IN_GAP, "InGap"), (BLOCKED, "Left"), (WRAP_CORNER, "Wrap"), (TRUE, "Forward")]
    plans = {
        "Forward": normal,
        "Left": normal,
        "Wrap": normal,
        "InGap": [(IN_GAP, "InGap"), (BLOCKED, "Left"), (WRAP_CORNER, "ExitWrap"), (TRUE, "Forward")],
        "ExitWrap": [
            (IN_GAP, "InGap"),
            (BLOCKED, "Left"),
            (GAP_ON_RIGHT, "Skip"),
            (WRAP_CORNER, "ExitWrap"),
            (TRUE, "Forward"),
        ],
        "Skip": [(IN_GAP, "InGap"), (BLOCKED, "Left"), (WRAP_CORNER, "Skip"), (TRUE, "Forward")],
    }
    transitions = [t for q, rules in plans.items() for t in _prioritised(q, rules)]
    return FSM(tuple(labels), "Forward", tuple(transitions), labels, domains=domains)


@dataclass(frozen=True)
class WallFollowScenario:
    world: GridWorld
    reactive: TR
    fsm: FSM


def wall_follow_scenario() -> WallFollowScenario:
    return WallFollowScenario(wall_follow_world(), reactive_wall_follower(), fsm_wall_follower())


def first_revisit(ps) -> tuple[int, int] | None:
    """Indices (i, j), i < j, of the first repeated pose."""
    seen = {}
    for j, p in enumerate(ps):
        if p in seen:
            return seen[p], j
        seen[p] = j
    return None
