"""Simulated worlds, layered controller stacks and the simulation loop.

Worlds are functional: ``reset`` gives a state, ``observe`` maps a state to
an :class:`InputState`, ``step`` maps (state, command) to the next state.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .core import ASM, NOOP, InputState, KBTError, Selection

STEP_FORWARD = "StepForward"
TURN_LEFT = "TurnLeft"
TURN_RIGHT = "TurnRight"


class StackError(KBTError):
    pass


class World:
    commands: frozenset = frozenset({NOOP})

    def reset(self, seed: int | None = None):
        raise NotImplementedError

    def observe(self, state) -> InputState:
        raise NotImplementedError

    def step(self, state, command: str):
        raise NotImplementedError

    def summary(self, state) -> dict:
        return {}

    def terminal(self, state) -> bool:
        return False


# ---------------------------------------------------------------- battery


@dataclass(frozen=True)
class BatteryWorld(World):
    """Battery percentage: drains while tasked or idle, charges on Recharge."""

    start: int = 50
    drain: int = 1
    charge: int = 5
    idle: int = 1
    task_commands: frozenset = frozenset({"OtherTask"})
    charge_command: str = "Recharge"

    @property
    def commands(self):
        return frozenset(self.task_commands | {self.charge_command, NOOP})

    def reset(self, seed=None):
        return max(0, min(100, self.start))

    def observe(self, state):
        return InputState.of(battery=state)

    def step(self, state, command):
        if command == self.charge_command:
            delta = self.charge
        elif command in self.task_commands:
            delta = -self.drain
        elif command == NOOP:
            delta = -self.idle
        else:
            raise StackError(f"battery world does not accept {command!r}")
        return max(0, min(100, state + delta))

    def summary(self, state):
        return {"battery": state}


@dataclass(frozen=True)
class ScriptedWorld(World):
    """Observations follow a fixed script (cycled); commands have no effect."""

    script: tuple
    accepted: frozenset | None = None

    def __post_init__(self):
        s = self.script.items() if isinstance(self.script, Mapping) else self.script
        object.__setattr__(self, "script", tuple((k, tuple(v)) for k, v in s))
        lengths = {len(v) for _, v in self.script}
        if len(lengths) != 1 or 0 in lengths:
            raise ValueError("script columns must be non-empty and of equal length")

    @property
    def commands(self):
        return self.accepted

    def reset(self, seed=None):
        return 0

    def observe(self, state):
        n = len(self.script[0][1])
        return InputState.of({k: v[state % n] for k, v in self.script})

    def step(self, state, command):
        return state + 1

    def summary(self, state):
        return self.observe(state).as_dict()


# ------------------------------------------------------------------- grid

EMPTY, WALL, AGENT, MARKER, OUT = range(5)
HEADINGS = ("N", "E", "S", "W")
_VEC = {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}


def cell_var(f: int, r: int) -> str:
    """Observation variable for the cell ``f`` ahead and ``r`` to the right."""

    def s(v):
        return f"m{-v}" if v < 0 else str(v)

    return f"o_{s(f)}_{s(r)}"


VIEW = tuple((f, r) for f in range(-2, 3) for r in range(-2, 3))


@dataclass(frozen=True)
class Pose:
    x: int
    y: int
    heading: str


@dataclass(frozen=True)
class GridState:
    pose: Pose
    markers: frozenset = frozenset()


@dataclass(frozen=True)
class GridWorld(World):
    """Discrete grid; y grows southwards.  The agent sees the 5x5 square
    around it in its own frame, each cell one of five states."""

    width: int
    height: int
    walls: frozenset
    start: Pose

    commands = frozenset({STEP_FORWARD, TURN_LEFT, TURN_RIGHT, "Mark", NOOP})

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(self.walls))
        if self.blocked(self.start.x, self.start.y):
            raise ValueError("agent cannot start inside a wall")

    def inside(self, x, y):
        return 0 <= x < self.width and 0 <= y < self.height

    def blocked(self, x, y):
        return not self.inside(x, y) or (x, y) in self.walls

    def reset(self, seed=None):
        return GridState(self.start)

    def cell(self, state: GridState, x: int, y: int) -> int:
        if not self.inside(x, y):
            return OUT
        if (x, y) in self.walls:
            return WALL
        if (x, y) == (state.pose.x, state.pose.y):
            return AGENT
        if (x, y) in state.markers:
            return MARKER
        return EMPTY

    def world_xy(self, pose: Pose, f: int, r: int) -> tuple[int, int]:
        fx, fy = _VEC[pose.heading]
        rx, ry = _VEC[HEADINGS[(HEADINGS.index(pose.heading) + 1) % 4]]
        return pose.x + f * fx + r * rx, pose.y + f * fy + r * ry

    def view(self, state: GridState) -> tuple[int, ...]:
        return tuple(self.cell(state, *self.world_xy(state.pose, f, r)) for f, r in VIEW)

    def observe(self, state):
        return InputState.of({cell_var(f, r): v for (f, r), v in zip(VIEW, self.view(state))})

    def step(self, state, command):
        p = state.pose
        i = HEADINGS.index(p.heading)
        if command == STEP_FORWARD:
            dx, dy = _VEC[p.heading]
            if not self.blocked(p.x + dx, p.y + dy):
                p = Pose(p.x + dx, p.y + dy, p.heading)
        elif command == TURN_LEFT:
            p = Pose(p.x, p.y, HEADINGS[(i - 1) % 4])
        elif command == TURN_RIGHT:
            p = Pose(p.x, p.y, HEADINGS[(i + 1) % 4])
        elif command == "Mark":
            return GridState(p, state.markers | {(p.x, p.y)})
        elif command != NOOP:
            raise StackError(f"grid world does not accept {command!r}")
        return GridState(p, state.markers)

    def summary(self, state):
        p = state.pose
        return {"x": p.x, "y": p.y, "heading": p.heading}

    def contour(self) -> frozenset:
        """Free cells orthogonally adjacent to a wall."""
        out = set()
        for wx, wy in self.walls:
            for dx, dy in _VEC.values():
                c = (wx + dx, wy + dy)
                if not self.blocked(*c):
                    out.add(c)
        return frozenset(out)

    def render(self, state: GridState | None = None) -> str:
        arrows = {"N": "^", "E": ">", "S": "v", "W": "<"}
        rows = []
        for y in range(self.height):
            row = ""
            for x in range(self.width):
                if state is not None and (x, y) == (state.pose.x, state.pose.y):
                    row += arrows[state.pose.heading]
                elif (x, y) in self.walls:
                    row += "#"
                else:
                    row += "."
            rows.append(row)
        return "\n".join(rows)


# ------------------------------------------------------------------- door

DOOR_LOCKED, DOOR_UNLOCKED, DOOR_UNKNOWN = 0, 1, 2


@dataclass(frozen=True)
class DoorState:
    unlocked: bool
    knowledge: int
    has_key: bool
    in_room: bool


@dataclass(frozen=True)
class DoorWorld(World):
    """A closed door between the robot and a room.

    The robot's knowledge of the lock (``door``: 0 locked, 1 unlocked,
    2 unknown) changes only when it probes, tries to unlock, or tries the door.
    ``unlocked=None`` draws the true status from the seed.
    """

    unlocked: bool | None = False
    has_key: bool = False

    commands = frozenset({"Unlock", "Probe", "PassDoor", "FetchKey", NOOP})

    def reset(self, seed=None):
        actual = self.unlocked
        if actual is None:
            actual = random.Random(seed).random() < 0.5
        return DoorState(bool(actual), DOOR_UNKNOWN, self.has_key, False)

    def observe(self, state):
        return InputState.of(door=state.knowledge, has_key=int(state.has_key), in_room=int(state.in_room))

    def _revealed(self, state):
        return DOOR_UNLOCKED if state.unlocked else DOOR_LOCKED

    def step(self, state, command):
        if command == "Probe":
            return replace(state, knowledge=self._revealed(state))
        if command == "Unlock":
            if state.has_key:
                return replace(state, unlocked=True, knowledge=DOOR_UNLOCKED)
            return replace(state, knowledge=self._revealed(state))
        if command == "FetchKey":
            return replace(state, has_key=True)
        if command == "PassDoor":
            if state.unlocked:
                return replace(state, in_room=True, knowledge=DOOR_UNLOCKED)
            return replace(state, knowledge=DOOR_LOCKED)
        if command == NOOP:
            return state
        raise StackError(f"door world does not accept {command!r}")

    def summary(self, state):
        return {
            "unlocked": int(state.unlocked),
            "knowledge": state.knowledge,
            "has_key": int(state.has_key),
            "in_room": int(state.in_room),
        }

    def terminal(self, state):
        return state.in_room


# --------------------------------------------------------- controller stack


@dataclass(frozen=True)
class ControllerStack(ASM):
    """Ordered layers, top first.  A layer's selection is either a concrete
    world command or the name of a lower layer to consult on the same input.

    The top layer runs every step.  A lower layer that is not consulted in a
    step loses its state.
    """

    layers: tuple
    commands: frozenset | None = None

    def __post_init__(self):
        lay = self.layers.items() if isinstance(self.layers, Mapping) else self.layers
        object.__setattr__(self, "layers", tuple(lay))
        if not self.layers:
            raise StackError("a controller stack needs at least one layer")
        names = [n for n, _ in self.layers]
        if len(set(names)) != len(names):
            raise StackError("duplicate layer names")
        if self.commands is not None:
            object.__setattr__(self, "commands", frozenset(self.commands))

    def with_commands(self, commands) -> "ControllerStack":
        return replace(self, commands=frozenset(commands))

    def initial_state(self):
        return tuple(None for _ in self.layers)

    def step(self, state, x):
        names = [n for n, _ in self.layers]
        new_state = [None] * len(self.layers)
        i = 0
        path: list[str] = []
        while True:
            name, asm = self.layers[i]
            s = state[i]
            if s is None:
                s = asm.initial_state()
            s, sel = asm.step(s, x)
            new_state[i] = s
            path.append(name)
            path.extend(sel.path or (sel.action,))
            if sel.action in names:
                j = names.index(sel.action)
                if j <= i:
                    raise StackError(f"layer {name!r} selects non-lower layer {sel.action!r}")
                i = j
                continue
            if sel.condition or sel.action == NOOP:
                return tuple(new_state), Selection(NOOP, sel.value, True, tuple(path))
            if self.commands is not None and sel.action not in self.commands:
                raise StackError(f"selection {sel.action!r} is neither a world command nor a lower layer")
            return tuple(new_state), Selection(sel.action, sel.value, False, tuple(path))


# --------------------------------------------------------------- simulate


@dataclass(frozen=True)
class SimStep:
    step: int
    input: InputState
    path: tuple
    command: str
    world: dict = field(compare=True, hash=False)

    def record(self) -> dict:
        return {
            "step": self.step,
            "input": self.input.as_dict(),
            "path": list(self.path),
            "command": self.command,
            "world": self.world,
        }


@dataclass(frozen=True)
class SimTrace:
    steps: tuple

    def __len__(self):
        return len(self.steps)

    def commands(self) -> list[str]:
        return [s.command for s in self.steps]

    def to_lines(self) -> str:
        """One JSON object per line, fixed field order."""
        return "".join(json.dumps(s.record(), ensure_ascii=False) + "\n" for s in self.steps)


def _as_stack(controller, commands) -> ControllerStack:
    if isinstance(controller, ControllerStack):
        if controller.commands is not None or commands is None:
            return controller
        return controller.with_commands(commands)
    stack = ControllerStack((("controller", controller),))
    return stack if commands is None else stack.with_commands(commands)


def simulate(
    w: World,
    controller: ASM,
    steps: int,
    seed: int | None = None,
    overrides: Mapping[int, InputState] | None = None,
) -> SimTrace:
    """observe -> resolve the stack top-down -> issue command -> step the world.

    ``overrides`` replaces the observation at given step indices.
    """
    stack = _as_stack(controller, w.commands)
    state = w.reset(seed)
    cstate = stack.initial_state()
    out = []
    for i in range(steps):
        if w.terminal(state):
            break
        x = w.observe(state)
        if overrides and i in overrides:
            x = overrides[i]
        cstate, sel = stack.step(cstate, x)
        command = sel.action
        state = w.step(state, command)
        out.append(SimStep(i, x, sel.path, command, w.summary(state)))
    return SimTrace(tuple(out))


def poses(trace: SimTrace) -> list[Pose]:
    return [Pose(s.world["x"], s.world["y"], s.world["heading"]) for s in trace.steps]
