"""Command-line driver.

Exit codes: 0 success / property holds, 1 load or validation error,
2 property violated (a witness is printed).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import (
    DEFAULT_BUDGET,
    check_equivalence,
    check_reactive,
    count_switches,
    export_dot,
)
from .core import KBTError, alphabet as product_alphabet
from .dsl import Model, parse_alphabet_spec, parse_model
from .scenarios import MODEL_FILES, load_model

EXIT_OK, EXIT_ERROR, EXIT_WITNESS = 0, 1, 2


def load(path: str) -> Model:
    """A model file path, or the name of a bundled model (battery, memory, door)."""
    p = Path(path)
    if p.exists():
        return parse_model(p.read_text(encoding="utf-8"))
    if path in MODEL_FILES:
        return load_model(path)
    raise KBTError(f"no such model file: {path}")


def _alphabet(m: Model, spec: str | None):
    if spec:
        return parse_alphabet_spec(spec, m)
    doms = m.domains(visible_only=True)
    if not doms:
        raise KBTError("model declares no visible variables; pass --alphabet")
    return product_alphabet(doms)


def _history(h) -> str:
    return " ; ".join(str(x) for x in h)


def _print_fields(out, fields):
    for k, v in fields:
        print(f"{k}: {v}", file=out)


def cmd_run(args, out) -> int:
    from .worlds import GridWorld, simulate

    m = load(args.model)
    w = m.world(args.world)
    trace = simulate(w, m.asm(args.stack), args.steps, seed=args.seed)
    text = trace.to_lines()
    if args.trace_out:
        Path(args.trace_out).write_text(text, encoding="utf-8")
        _print_fields(out, [("steps", len(trace)), ("switches", count_switches(trace.commands())), ("trace", args.trace_out)])
    else:
        out.write(text)
    if args.plot:
        from .plotting import plot_grid_paths, plot_trace

        if isinstance(w, GridWorld):
            plot_grid_paths(w, {args.stack: trace}, args.plot, title=args.stack)
        else:
            plot_trace({args.stack: trace}, args.plot, title=args.stack)
    return EXIT_OK


def _sampling(args):
    return dict(budget=args.budget, sample=args.sample, seed=args.seed, compare=args.compare)


def cmd_check_reactive(args, out) -> int:
    m = load(args.model)
    r = check_reactive(m.asm(args.asm), _alphabet(m, args.alphabet), args.max_len, **_sampling(args))
    _print_fields(out, [("asm", args.asm), ("verdict", r.verdict), ("bound", r.bound), ("checked", r.checked), ("mode", r.mode)])
    if r.witness is None:
        return EXIT_OK
    w = r.witness
    _print_fields(out, [
        ("history1", _history(w.first)),
        ("selection1", w.first_selection),
        ("history2", _history(w.second)),
        ("selection2", w.second_selection),
    ])
    return EXIT_WITNESS


def cmd_equiv(args, out) -> int:
    m = load(args.model)
    r = check_equivalence(m.asm(args.a), m.asm(args.b), _alphabet(m, args.alphabet), args.max_len, **_sampling(args))
    _print_fields(out, [("a", args.a), ("b", args.b), ("verdict", r.verdict), ("bound", r.bound), ("checked", r.checked), ("mode", r.mode)])
    if r.witness is None:
        return EXIT_OK
    w = r.witness
    _print_fields(out, [("history", _history(w.history)), ("selection_a", w.first), ("selection_b", w.second)])
    return EXIT_WITNESS


def cmd_export_dot(args, out) -> int:
    m = load(args.model)
    text = export_dot(m.asm(args.asm), args.asm)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return EXIT_OK


# ------------------------------------------------------------------ demos


def _demo_chattering(args, out) -> int:
    from .scenarios import chattering_scenario
    from .worlds import simulate

    s = chattering_scenario()
    steps = args.steps or 40
    controllers = {"chattering_bt": s.chattering_bt, "layered_fsm": s.layered_fsm, "blackboard_bt": s.blackboard_bt}
    worlds = {"hover": s.hover, "closed_loop": s.closed_loop}
    print("world,controller,steps,switches", file=out)
    traces = {}
    for wn, w in worlds.items():
        for cn, c in controllers.items():
            t = simulate(w, c, steps, seed=args.seed)
            traces[(wn, cn)] = t
            print(f"{wn},{cn},{len(t)},{count_switches(t.commands())}", file=out)
    if args.plot_dir:
        from .plotting import plot_trace

        for wn in worlds:
            path = Path(args.plot_dir) / f"chattering_{wn}.png"
            plot_trace({cn: traces[(wn, cn)] for cn in controllers if cn != "blackboard_bt"}, path, title=f"battery ({wn})")
            print(f"# figure: {path}", file=out)
    return EXIT_OK


def _demo_wall_follow(args, out) -> int:
    from .scenarios import first_revisit, wall_follow_scenario
    from .worlds import poses, simulate

    s = wall_follow_scenario()
    w = s.world
    steps = args.steps or 200
    contour = w.contour()
    print("controller,steps,first_revisit,contour_covered,returned_to_start_at", file=out)
    traces = {}
    for name, c in (("reactive", s.reactive), ("fsm", s.fsm)):
        t = simulate(w, c, steps, seed=args.seed)
        traces[name] = t
        ps = poses(t)
        rev = first_revisit([w.start] + ps)
        seen = {(w.start.x, w.start.y)}
        covered = returned = None
        for i, p in enumerate(ps):
            seen.add((p.x, p.y))
            if covered is None and contour <= seen:
                covered = i + 1
            if covered is not None and p == w.start:
                returned = i + 1
                break
        rev_s = "-" if rev is None else f"{rev[0]}->{rev[1]}"
        print(f"{name},{len(t)},{rev_s},{covered is not None},{returned if returned else '-'}", file=out)
    if args.plot_dir:
        from .plotting import plot_grid_paths

        path = Path(args.plot_dir) / "wall_follow.png"
        plot_grid_paths(w, {"reactive (first 50)": _head(traces["reactive"], 50), "fsm": traces["fsm"]}, path, title="wall following")
        print(f"# figure: {path}", file=out)
    return EXIT_OK


def _head(trace, n):
    from .worlds import SimTrace

    return SimTrace(trace.steps[:n])


def _demo_door(args, out) -> int:
    from .core import InputState
    from .scenarios import door_scenario
    from .worlds import DOOR_UNKNOWN, DoorWorld, simulate

    s = door_scenario()
    unknown = InputState.of(door=DOOR_UNKNOWN, has_key=0, in_room=0)
    print("tree,selection_when_unknown,reactive", file=out)
    for name, t in (("handling", s.handling), ("ignoring", s.ignoring)):
        r = check_reactive(t, s.alphabet, 3)
        print(f"{name},{t.select(unknown).action},{r.verdict}", file=out)
    print("tree,door,commands", file=out)
    traces = {}
    for name, t in (("handling", s.handling), ("ignoring", s.ignoring)):
        for label, unlocked in (("locked", False), ("unlocked", True)):
            tr = simulate(DoorWorld(unlocked), t, args.steps or 20, seed=args.seed)
            traces[f"{name}/{label}"] = tr
            print(f"{name},{label},{' '.join(tr.commands())}", file=out)
    if args.plot_dir:
        from .plotting import plot_trace

        path = Path(args.plot_dir) / "door.png"
        plot_trace({k: v for k, v in traces.items() if k.endswith("locked") and not k.endswith("unlocked")}, path, title="locked door")
        print(f"# figure: {path}", file=out)
    return EXIT_OK


DEMOS = {"chattering": _demo_chattering, "wall-follow": _demo_wall_follow, "door": _demo_door}


def cmd_demo(args, out) -> int:
    return DEMOS[args.scenario](args, out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kbt", description="k-valued behavior trees and friends")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a controller in a world")
    r.add_argument("--model", required=True)
    r.add_argument("--stack", required=True, help="stack (or any architecture) to run")
    r.add_argument("--world", required=True)
    r.add_argument("--steps", type=int, default=40)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--trace-out", default=None, help="write line-delimited trace here instead of stdout")
    r.add_argument("--plot", default=None, help="write a figure of the trace to this file")
    r.set_defaults(func=cmd_run)

    def checker_args(q):
        q.add_argument("--model", required=True)
        q.add_argument("--alphabet", default=None, help="alphabet name or inline 'var=1,2;other=0..3'")
        q.add_argument("--max-len", type=int, default=3)
        q.add_argument("--sample", type=int, default=None)
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
        q.add_argument("--compare", choices=("action", "selection"), default="action")

    c = sub.add_parser("check-reactive", help="search for a reactiveness witness")
    checker_args(c)
    c.add_argument("--asm", required=True)
    c.set_defaults(func=cmd_check_reactive)

    e = sub.add_parser("equiv", help="bounded equivalence of two architectures")
    checker_args(e)
    e.add_argument("--a", required=True)
    e.add_argument("--b", required=True)
    e.set_defaults(func=cmd_equiv)

    d = sub.add_parser("export-dot", help="write DOT for a tree, FSM, DT or TR")
    d.add_argument("--model", required=True)
    d.add_argument("--asm", required=True)
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_export_dot)

    s = sub.add_parser("demo", help="run a built-in scenario")
    s.add_argument("--scenario", required=True, choices=sorted(DEMOS))
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--plot-dir", default=None, help="also write figures into this directory")
    s.set_defaults(func=cmd_demo)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (KBTError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
