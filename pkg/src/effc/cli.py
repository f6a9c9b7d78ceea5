"""The `effc` command: check, run, repl and oracle."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

from .display import DisplayConfig, display_constraints, display_raw, display_scheme
from .errors import (
    BudgetExceeded, DeclError, EffcError, ParseError, UnboundVariable, UnknownOperation,
)
from .evaluator import DEFAULT_FUEL, FinalOpCall, OutOfFuel, StuckOutcome, Value, run
from .inference import PipelineOptions, Scheme, type_toplevel, wrap_letvals
from .surface import (
    EffectDecl, InstanceDecl, RunDirective, TopLet, TopLetRec, parse_computation,
    parse_program, render_term,
)
from .syntax import Fresh, Signature

EXIT_OK, EXIT_TYPE, EXIT_PARSE, EXIT_RUNTIME = 0, 1, 2, 3


@dataclass
class CliConfig:
    mode: str = "check"
    fuel: int = DEFAULT_FUEL
    trace_eval: bool = False
    trace_unify: bool = False
    dump_constraints: bool = False
    json: bool = False
    display: DisplayConfig = field(default_factory=DisplayConfig)
    options: PipelineOptions = field(default_factory=PipelineOptions)

    def __post_init__(self):
        if self.fuel < 1:
            raise ValueError("fuel must be at least 1")


class Session:
    """Accumulated signature, schemes and toplevel values of one run."""

    def __init__(self, cfg: CliConfig):
        self.cfg = cfg
        self.signature = Signature()
        self.xi: dict[str, Scheme] = {}
        self.values: list[tuple[str, object]] = []
        self.fresh = Fresh()
        self.records: list[dict] = []
        self.last_typing = None

    @property
    def names(self) -> set[str]:
        return set(self.xi)

    def _type(self, term, out: list[str]):
        states = []
        tracer = (lambda s, c, q: states.append((s, c, q))) if self.cfg.trace_unify else None
        t = type_toplevel(term, self.signature, self.xi, self.fresh, self.cfg.options, tracer)
        if self.cfg.trace_unify:
            out.append(f"unify: {len(states)} states")
            for i, (_, c, q) in enumerate(states):
                queue = "; ".join(str(k) for k in q) or "·"
                store = "; ".join(str(k) for k in c.atoms()) or "·"
                out.append(f"  [{i}] queue: {queue}")
                out.append(f"      store: {store}")
        return t

    def _shown(self, t) -> str:
        if self.cfg.display.raw:
            return display_raw(t.ty, t.final.atoms(), ascii=self.cfg.display.ascii)
        return display_scheme(t.ty, t.final, self.cfg.display)

    def _report(self, name: str, t, out: list[str]) -> dict:
        self.last_typing = t
        shown = self._shown(t)
        out.append(f"{name} : {shown}")
        ks = display_constraints(t.final.atoms(), ascii=self.cfg.display.ascii)
        if self.cfg.dump_constraints:
            out.append("  raw: " + ("; ".join(str(k) for k in t.raw) or "·"))
            out.append("  unified: " + ("; ".join(str(k) for k in t.unified.atoms()) or "·"))
            out.append("  final: " + ("; ".join(ks) or "·"))
        rec = {"name": name, "type": str(t.ty), "constraints": [str(k) for k in t.final.atoms()],
               "display": shown}
        self.records.append(rec)
        return rec

    def declare(self, d, out: list[str], evaluate: bool) -> int:
        """Process one declaration; returns an exit code."""
        if isinstance(d, (EffectDecl, InstanceDecl)):
            return EXIT_OK  # already in the parsed program's signature
        if isinstance(d, (TopLet, TopLetRec)):
            value = d.value if isinstance(d, TopLet) else d.as_value()
            t = self._type(value, out)
            self._report(d.name, t, out)
            self.xi[d.name] = t.scheme
            self.values.append((d.name, value))
            return EXIT_OK
        if isinstance(d, RunDirective):
            t = self._type(d.comp, out)
            rec = self._report("-", t, out)
            if not evaluate:
                return EXIT_OK
            return self._evaluate(wrap_letvals(self.values, d.comp), out, rec)
        raise TypeError(f"unknown declaration {d!r}")

    def _evaluate(self, comp, out: list[str], rec: dict) -> int:
        outcome, trace = run(comp, fuel=self.cfg.fuel, trace=self.cfg.trace_eval)
        if self.cfg.trace_eval:
            for i, c in enumerate(trace):
                out.append(f"  {i:>3}  {render_term(c)}")
        code = EXIT_OK
        if isinstance(outcome, Value):
            text = f"value {render_term(outcome.value)}"
        elif isinstance(outcome, FinalOpCall):
            text = f"call {render_term(outcome.as_computation())}"
        elif isinstance(outcome, OutOfFuel):
            text = "out of fuel"
            code = EXIT_RUNTIME
        else:
            assert isinstance(outcome, StuckOutcome)
            text = f"stuck: {outcome.reason}"
            code = EXIT_RUNTIME
        out.append(f"  => {text} after {outcome.steps} steps")
        rec["outcome"] = text
        rec["steps"] = outcome.steps
        return code


def _error_code(err: Exception) -> int:
    if isinstance(err, (ParseError, DeclError, UnboundVariable, UnknownOperation)):
        return EXIT_PARSE
    return EXIT_TYPE


def _describe(err: Exception) -> str:
    kind = type(err).__name__
    pos = getattr(err, "pos", None)
    where = f" at {pos[0]}:{pos[1]}" if pos else ""
    if isinstance(err, ParseError):
        return f"ParseError: {err}"
    return f"{kind}{where}: {err}"


def run_file(path: str, cfg: CliConfig) -> tuple[int, list[str]]:
    """Check (and in run mode evaluate) a source file."""
    out: list[str] = []
    session = Session(cfg)
    try:
        with open(path, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as err:
        return EXIT_PARSE, [f"cannot read {path}: {err}"]
    code = run_source(source, session, out, evaluate=cfg.mode == "run")
    if cfg.json:
        out = [json.dumps(session.records, ensure_ascii=False, indent=2)]
    return code, out


def run_source(source: str, session: Session, out: list[str], evaluate: bool) -> int:
    try:
        program = parse_program(source, session.signature, session.names)
    except EffcError as err:
        out.append(_describe(err))
        return _error_code(err)
    session.signature = program.signature
    code = EXIT_OK
    for d in program.decls:
        try:
            c = session.declare(d, out, evaluate)
        except EffcError as err:
            out.append(_describe(err))
            return _error_code(err)
        code = max(code, c)
    return code


def repl_eval(line: str, session: Session) -> tuple[list[str], bool]:
    """Evaluate one REPL line; returns output lines and whether to go on."""
    text = line.strip()
    if not text:
        return [], True
    if text in (":quit", ":q"):
        return [], False
    out: list[str] = []
    if text.split()[0] in ("effect", "instance", "letval", "letrec", "run"):
        run_source(text, session, out, evaluate=True)
        return out, True
    try:
        comp = parse_computation(text, session.signature, session.names)
    except EffcError as err:
        return [_describe(err)], True
    try:
        session.declare(RunDirective(comp), out, evaluate=True)
    except EffcError as err:
        out.append(_describe(err))
    return out, True


def repl(session: Session, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    interactive = stdin.isatty()
    while True:
        if interactive:
            stdout.write("effc> ")
            stdout.flush()
        line = stdin.readline()
        if not line:
            return EXIT_OK
        lines, go_on = repl_eval(line, session)
        for ln in lines:
            print(ln, file=stdout)
        if not go_on:
            return EXIT_OK


def oracle_file(path: str, cfg: CliConfig, depth: int) -> tuple[int, list[str]]:
    """For each binding, compare the unified and the simplified constraint
    sets by enumeration over a small universe."""
    from .testkit import Universe, constraint_equiv

    out: list[str] = []
    session = Session(cfg)
    with open(path, encoding="utf-8") as fh:
        source = fh.read()
    try:
        program = parse_program(source, session.signature, session.names)
    except EffcError as err:
        return _error_code(err), [_describe(err)]
    session.signature = program.signature
    seen = 0
    for d in program.decls:
        try:
            lines: list[str] = []
            session.declare(d, lines, evaluate=False)
        except EffcError as err:
            out.append(_describe(err))
            return _error_code(err), out
        if len(session.records) == seen:
            continue
        seen = len(session.records)
        name = session.records[-1]["name"]
        t = session.last_typing
        u = Universe(session.signature, depth=depth)
        try:
            same = constraint_equiv(t.unified, t.collected, t.ty, u)
            verdict = "equivalent" if same else "DIFFERENT"
        except BudgetExceeded as err:
            verdict = f"budget exceeded ({err})"
        out.append(f"{name} : unified vs collected {verdict}")
    return EXIT_OK, out


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    common.add_argument("--trace-eval", action="store_true")
    common.add_argument("--trace-unify", action="store_true")
    common.add_argument("--dump-constraints", action="store_true")
    common.add_argument("--raw-types", action="store_true")
    common.add_argument("--no-gc", action="store_true")
    common.add_argument("--no-region-simplify", action="store_true")
    common.add_argument("--region-detail", choices=["full", "handled", "question", "over"],
                        default="handled")
    common.add_argument("--no-compact-handlers", action="store_true")
    common.add_argument("--single-instance", action="store_true")
    common.add_argument("--ascii", action="store_true")
    common.add_argument("--json", action="store_true")

    p = argparse.ArgumentParser(prog="effc", description="Type and run effc programs.")
    sub = p.add_subparsers(dest="mode", required=True)
    for mode, text in (("check", "infer and display types"),
                       ("run", "infer types and evaluate run directives")):
        sp = sub.add_parser(mode, parents=[common], help=text)
        sp.add_argument("file")
    sp = sub.add_parser("repl", parents=[common], help="interactive loop")
    sp.add_argument("file", nargs="?")
    sp = sub.add_parser("oracle", parents=[common],
                        help="compare constraint sets by finite enumeration")
    sp.add_argument("file")
    sp.add_argument("--depth", type=int, default=0)
    return p


def _config(args) -> CliConfig:
    display = DisplayConfig(region_detail=args.region_detail,
                            compact_handlers=not args.no_compact_handlers,
                            raw=args.raw_types, ascii=args.ascii)
    options = PipelineOptions(gc=not args.no_gc, region_simplify=not args.no_region_simplify,
                              single_instance=args.single_instance)
    return CliConfig(mode=args.mode, fuel=args.fuel, trace_eval=args.trace_eval,
                     trace_unify=args.trace_unify, dump_constraints=args.dump_constraints,
                     json=args.json, display=display, options=options)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config(args)
    except ValueError as err:
        print(f"effc: {err}", file=sys.stderr)
        return EXIT_PARSE
    if args.mode == "repl":
        session = Session(cfg)
        if args.file:
            with open(args.file, encoding="utf-8") as fh:
                out: list[str] = []
                code = run_source(fh.read(), session, out, evaluate=True)
                print("\n".join(out))
                if code:
                    return code
        return repl(session)
    if args.mode == "oracle":
        code, out = oracle_file(args.file, cfg, args.depth)
    else:
        code, out = run_file(args.file, cfg)
    if out:
        print("\n".join(out))
    return code


if __name__ == "__main__":
    sys.exit(main())
