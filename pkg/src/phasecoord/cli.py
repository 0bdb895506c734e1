"""Command-line front door.

Exit codes are a stable contract: 0 success, 1 parse or I/O error,
2 validation error, 3 replay divergence, 4 property violation,
5 verdict unknown because a bound was hit, 6 DOT node threshold exceeded.
Standard output carries data; diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .bundled import BUNDLED, bundled_names, get_bundled
from .changeset import ChangeSet
from .dot import TooManyNodes, phases_dot, statespace_dot, std_dot
from .dsl import parse_model, serialize_model
from .engine import (
    InteractivePolicy,
    RandomPolicy,
    ReplayDivergence,
    ScriptedPolicy,
    export_trace_jsonl,
    label_text,
    parse_trace_labels,
    run,
    successors,
)
from .explorer import (
    Bounds,
    check_migration_termination,
    check_progress,
    explore,
    explore_space,
    shortest_trace_to,
)
from .mcpal import FragmentInvalid, McPalNotHibernating, McPalSkeleton, load_migration
from .model import initial_configuration, validate_configuration
from .properties import (
    And,
    InPhase,
    InState,
    ModelVersionIs,
    parse_properties,
)

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_VALIDATION = 2
EXIT_REPLAY = 3
EXIT_VIOLATION = 4
EXIT_UNKNOWN = 5
EXIT_DOT_THRESHOLD = 6


def _load_source(path: str) -> Optional[str]:
    """Model text from a file path or a bundled model name."""
    if path in BUNDLED:
        return get_bundled(path).model_text()
    try:
        return Path(path).read_text("utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None


def _parse_or_report(text: str, fmt: str):
    result = parse_model(text)
    if result.model is None:
        _emit_diags(result.diagnostics, fmt)
        return None, EXIT_PARSE
    if result.diagnostics:
        _emit_diags(result.diagnostics, fmt)
        return None, EXIT_VALIDATION
    return result.model, EXIT_OK


def _emit_diags(diags, fmt: str):
    if fmt == "json":
        doc = [
            {
                "code": d.code,
                "owner": d.owner,
                "element": d.element,
                "detail": d.detail,
                "line": d.line,
                "column": d.column,
            }
            for d in diags
        ]
        print(json.dumps(doc, sort_keys=True, indent=2), file=sys.stderr)
    else:
        for d in diags:
            print(str(d), file=sys.stderr)


def cmd_validate(args) -> int:
    text = _load_source(args.path)
    if text is None:
        return EXIT_PARSE
    model, code = _parse_or_report(text, args.format)
    if model is None:
        return code
    if args.format == "json":
        print(json.dumps({"ok": True, "components": model.component_names(),
                          "rules": model.rule_names(), "version": model.version},
                         sort_keys=True))
    else:
        print(f"ok: {len(model.components)} component(s), {len(model.rules)} rule(s), "
              f"version {model.version}")
    return EXIT_OK


def _interactive_chooser(labels) -> Optional[int]:
    print("choose a step:", file=sys.stderr)
    for i, label in enumerate(labels):
        print(f"  [{i}] {label_text(label)}", file=sys.stderr)
    line = sys.stdin.readline()
    if not line:
        return None
    line = line.strip()
    if not line or line in {"q", "quit"}:
        return None
    try:
        idx = int(line)
    except ValueError:
        print(f"not a number: {line!r}", file=sys.stderr)
        return _interactive_chooser(labels)
    if not 0 <= idx < len(labels):
        print(f"out of range: {idx}", file=sys.stderr)
        return _interactive_chooser(labels)
    return idx


def cmd_simulate(args) -> int:
    text = _load_source(args.path)
    if text is None:
        return EXIT_PARSE
    model, code = _parse_or_report(text, args.format)
    if model is None:
        return code
    config = initial_configuration(model)
    bad = validate_configuration(model, config)
    if bad:
        _emit_diags(bad, args.format)
        return EXIT_VALIDATION

    steps = args.steps
    if args.script:
        try:
            script_text = Path(args.script).read_text("utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARSE
        labels = parse_trace_labels(script_text)
        policy = ScriptedPolicy(labels)
        steps = len(labels) if args.steps is None else args.steps
    elif args.interactive:
        policy = InteractivePolicy(_interactive_chooser)
        steps = 1_000_000 if args.steps is None else args.steps
    else:
        policy = RandomPolicy(args.seed)
        steps = 100 if args.steps is None else args.steps

    try:
        trace = run(model, config, policy, max_steps=steps)
    except ReplayDivergence as exc:
        print(f"replay divergence at step {exc.index}: {label_text(exc.label)}", file=sys.stderr)
        return EXIT_REPLAY
    text_out = export_trace_jsonl(model, trace)
    if args.trace_out:
        Path(args.trace_out).write_text(text_out, "utf-8")
        print(f"{len(trace.steps)} step(s), final version {trace.final_model_version}, "
              f"trace written to {args.trace_out}", file=sys.stderr)
    else:
        sys.stdout.write(text_out)
    return EXIT_OK


def _completion_predicate(target_version: int, sk: McPalSkeleton):
    return And(
        ModelVersionIs(target_version),
        And(
            InState(sk.component, sk.hibernation_state),
            InPhase(sk.component, sk.evolution_role, sk.hibernating_phase),
        ),
    )


def cmd_explore(args) -> int:
    text = _load_source(args.path)
    if text is None:
        return EXIT_PARSE
    model, code = _parse_or_report(text, args.format)
    if model is None:
        return code
    config = initial_configuration(model)
    bad = validate_configuration(model, config)
    if bad:
        _emit_diags(bad, args.format)
        return EXIT_VALIDATION

    if args.load_migration:
        fragment = model.variables.get(args.load_migration)
        if not isinstance(fragment, ChangeSet):
            print(f"error: variable {args.load_migration!r} holds no changeset", file=sys.stderr)
            return EXIT_VALIDATION
        try:
            model, config = load_migration(model, config, fragment)
        except (McPalNotHibernating, FragmentInvalid) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION

    props = []
    if args.props:
        try:
            props_text = Path(args.props).read_text("utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARSE
        props, diags = parse_properties(props_text)
        if diags:
            _emit_diags(diags, args.format)
            return EXIT_PARSE
    elif args.path in BUNDLED:
        props = get_bundled(args.path).properties()

    bounds = Bounds(max_states=args.max_states, max_depth=args.max_depth)
    report = explore(model, config, props, bounds, workers=args.parallel)
    doc = json.loads(report.to_json())

    violated = bool(report.violations)
    unknown = report.unknown() or report.max_states_hit or report.max_depth_hit

    if args.check_termination is not None:
        result = check_migration_termination(model, config, args.check_termination,
                                             bound=args.max_depth)
        doc["termination"] = {
            "targetVersion": args.check_termination,
            "verdict": result.verdict,
            "maxDepth": result.max_depth,
        }
        if result.verdict in ("stuck", "cycle"):
            violated = True
        elif result.verdict.startswith("unknown"):
            unknown = True

    if args.check_progress is not None:
        doc["progress"] = {}
        for comp in sorted(model.components):
            result = check_progress(model, config, comp, args.check_progress, bounds)
            doc["progress"][comp] = {"k": args.check_progress, "verdict": result.verdict}
            if result.verdict == "starved":
                violated = True
            elif result.verdict.startswith("unknown"):
                unknown = True

    payload = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.report_out:
        Path(args.report_out).write_text(payload, "utf-8")
    if args.format == "json":
        sys.stdout.write(payload)
    else:
        print(f"states: {report.states_visited}  transitions: {report.transitions_visited}  "
              f"versions: {report.model_versions_seen}")
        for prop, verdict in report.verdicts:
            print(f"  {verdict:14} {prop}")
        if "termination" in doc:
            t = doc["termination"]
            print(f"  termination to version {t['targetVersion']}: {t['verdict']}"
                  + (f" (maxDepth {t['maxDepth']})" if t["maxDepth"] is not None else ""))
        if "progress" in doc:
            for comp, entry in sorted(doc["progress"].items()):
                print(f"  progress {comp} (k={entry['k']}): {entry['verdict']}")
        if report.deadlocks:
            print(f"  deadlocks: {len(report.deadlocks)}")
        for prop, records in report.violations:
            print(f"  violated: {prop} (counterexample of {len(records) - 1} step(s))",
                  file=sys.stderr)

    if violated:
        return EXIT_VIOLATION
    if unknown:
        return EXIT_UNKNOWN
    return EXIT_OK


def _narrate(trace, model, header: str):
    print(header)
    config = trace.initial
    print(f"  start: {_compact(config)}")
    for i, (label, digest) in enumerate(trace.steps, start=1):
        succ = successors(model, config)
        for lab, nxt_model, nxt in succ:
            if lab == label:
                model, config = nxt_model, nxt
                break
        print(f"  step {i}: {label_text(label)}")
        print(f"    -> {_compact(config)}")
    return model, config


def _compact(config) -> str:
    states = " ".join(f"{c}={s}" for c, s in sorted(config.detailed.items()))
    phases = " ".join(f"{c}.{p}={ph}" for (c, p), ph in sorted(config.phases.items()))
    return f"v{config.model_version} | {states} | {phases}"


def cmd_demo(args) -> int:
    if args.name not in BUNDLED:
        print(f"unknown demo {args.name!r}; valid names: {', '.join(bundled_names())}",
              file=sys.stderr)
        return EXIT_PARSE
    bundle = get_bundled(args.name)
    model = bundle.model()
    config = initial_configuration(model)

    if args.name == "shop-migration":
        sk = McPalSkeleton()
        fragment = bundle.fragment()
        model, config = load_migration(model, config, fragment)
        target = model.version + 2  # kick-off and shrink each bump the version
        trace = shortest_trace_to(model, config, _completion_predicate(target, sk))
        if trace is None:
            print("no completing trajectory found", file=sys.stderr)
            return EXIT_VIOLATION
        final_model, final = _narrate(trace, model, "shop migration, shortest completing run:")
        print(f"migration complete, model version {final.model_version}, "
              f"{sk.component} hibernating")
        return EXIT_OK

    trace = run(model, config, RandomPolicy(args.seed), max_steps=args.steps)
    _narrate(trace, model, f"{args.name}: {len(trace.steps)}-step random run (seed {args.seed}):")
    print(f"done, model version {trace.final_model_version}")
    return EXIT_OK


def cmd_export_dot(args) -> int:
    text = _load_source(args.path)
    if text is None:
        return EXIT_PARSE
    model, code = _parse_or_report(text, args.format)
    if model is None:
        return code

    if args.what in ("std", "phases"):
        component = args.component
        if component is None:
            if len(model.components) == 1:
                component = next(iter(model.components))
            else:
                print(f"--component required; model has {model.component_names()}",
                      file=sys.stderr)
                return EXIT_PARSE
        std = model.components.get(component)
        if std is None:
            print(f"unknown component {component!r}", file=sys.stderr)
            return EXIT_PARSE
        out = std_dot(std) if args.what == "std" else phases_dot(std)
    else:
        config = initial_configuration(model)
        space = explore_space(model, config, Bounds(max_states=args.max_states))
        try:
            out = statespace_dot(space, threshold=args.threshold)
        except TooManyNodes as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DOT_THRESHOLD

    if args.out:
        Path(args.out).write_text(out, "utf-8")
    else:
        sys.stdout.write(out)
    return EXIT_OK


def cmd_serialize(args) -> int:
    text = _load_source(args.path)
    if text is None:
        return EXIT_PARSE
    model, code = _parse_or_report(text, args.format)
    if model is None:
        return code
    sys.stdout.write(serialize_model(model))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasecoord",
        description="Run, evolve and verify phase-constrained coordination models.",
    )
    parser.add_argument("--format", choices=("text", "json"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and statically check a model")
    p.add_argument("path", help="model file or bundled name")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="run a model and export the trace")
    p.add_argument("path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--script", help="JSON-lines trace to replay")
    p.add_argument("--interactive", action="store_true")
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("explore", help="exhaustively verify a model")
    p.add_argument("path")
    p.add_argument("--props", help=".pprop file (bundled default when omitted)")
    p.add_argument("--max-states", type=int, default=1_000_000)
    p.add_argument("--max-depth", type=int, default=10_000)
    p.add_argument("--report-out")
    p.add_argument("--check-progress", type=int, metavar="K")
    p.add_argument("--check-termination", type=int, metavar="VERSION")
    p.add_argument("--load-migration", metavar="VAR",
                   help="load this changeset variable into the coordinator before exploring")
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("demo", help="narrated run of a bundled model")
    p.add_argument("name")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--steps", type=int, default=12)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("export-dot", help="DOT diagrams of components, phases, state spaces")
    p.add_argument("path")
    p.add_argument("--what", choices=("std", "phases", "statespace"), default="std")
    p.add_argument("--component")
    p.add_argument("--out")
    p.add_argument("--threshold", type=int, default=500)
    p.add_argument("--max-states", type=int, default=100_000)
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("serialize", help="canonical text form of a model")
    p.add_argument("path")
    p.set_defaults(func=cmd_serialize)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
