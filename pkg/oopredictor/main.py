# OO Access Predictor - Command-Line Entry Point
import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from . import commands
from .config import LOG_LEVEL, RunConfig, load_run_config
from .errors import PredictorError
from .models import AffinityWeighting, SelfLoopPolicy

logger = logging.getLogger(__name__)

# Exit code for anything that is not a PredictorError
EXIT_INTERNAL = 4

# Help text for every RunConfig flag: its default and where that default comes from
CONFIG_FLAGS: Dict[str, Dict[str, Any]] = {
    "seed": dict(type=int, help="root seed for sampling and corpus generation "
                                "(default 0; any fixed value makes runs reproducible)"),
    "callsite_cap": dict(type=int, help="call sites sampled per method (default 100, the "
                                        "random sample of 100 call sites per method used "
                                        "when the predictor was first validated)"),
    "back_edge_probability": dict(type=float, help="static weight of backward edges "
                                                   "(default 0.9, the loop-continuation "
                                                   "heuristic: loops run about ten times)"),
    "window": dict(type=int, help="sliding window of trace accesses for affinity (default 8; "
                                  "the window used for the first affinity study is unstated)"),
    "max_events": dict(type=int, help="trace size cap in events (default 10000000; JVM-scale "
                                      "runs capped logs at 2e9 accesses, mini-IR programs "
                                      "need far less)"),
    "max_steps": dict(type=int, help="interpreter step cap (default 100000000; sized "
                                     "with max_events for mini-IR programs)"),
    "selfloop_policy": dict(choices=[p.value for p in SelfLoopPolicy],
                            help="how a bypassed self-loop is redistributed (default equal, "
                                 "as in the state-bypass algorithm; proportional follows "
                                 "its prose description)"),
    "affinity_weighting": dict(choices=[w.value for w in AffinityWeighting],
                               help="model affinity contributions (default probability, "
                                    "transition probabilities of the model)"),
    "min_calls": dict(type=int, help="exclude methods with fewer evaluated calls from "
                                     "correlations (default 0, every evaluated method)"),
    "per_site_cap": dict(type=int, help="invocations evaluated per call site (default 1000; "
                                        "a local bound, not part of the sampling scheme)"),
    "config_set_cap": dict(type=int, help="configuration-set size bound during matching "
                                          "(default 4096; a local bound on matcher memory)"),
}
# Boolean settings get a --no- form so the command line can undo an OOP_* variable
CONFIG_SWITCHES = {
    "strict_termination": "only count a run as terminated if a final state is one step "
                          "from its last match (default off: a final state reachable "
                          "through empty states also counts)",
    "reference_fields_only": "restrict models and traces to fields holding objects "
                             "(default off: every field)",
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration (also OOP_* environment variables)")
    for name, options in CONFIG_FLAGS.items():
        group.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **options)
    for name, text in CONFIG_SWITCHES.items():
        group.add_argument("--" + name.replace("_", "-"), dest=name,
                           action=argparse.BooleanOptionalAction, default=None, help=text)
    group.add_argument("--log-level", default=None, help=f"logging level (default {LOG_LEVEL})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oopredictor",
        description="Predict object field-access patterns of mini-IR programs and "
                    "validate the predictions against interpreter traces.")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", help="build one access model per method")
    build.add_argument("program", help="mini-IR program file")
    build.add_argument("--out", required=True, help="output directory")
    build.add_argument("--profile", help="edge profile to weight transitions with")

    run = sub.add_parser("run", help="execute a program and record its trace")
    run.add_argument("program")
    run.add_argument("--out", required=True, help="trace file to write")

    profile = sub.add_parser("profile", help="execute a program and record edge counts")
    profile.add_argument("program")
    profile.add_argument("--out", required=True, help="profile file to write")

    validate = sub.add_parser("validate", help="replay a trace through built models")
    validate.add_argument("models", help="directory written by build")
    validate.add_argument("trace")
    validate.add_argument("--out", required=True, help="validation CSV to write")

    affinity = sub.add_parser("affinity", help="build per-class field affinity graphs")
    source = affinity.add_mutually_exclusive_group(required=True)
    source.add_argument("--models", help="directory written by build")
    source.add_argument("--trace", help="trace file")
    affinity.add_argument("--program", help="program declaring the classes (trace mode)")
    affinity.add_argument("--classes", help="comma-separated class names (default: all)")
    affinity.add_argument("--out", required=True, help="output directory for graph files")

    compare = sub.add_parser("compare", help="compare model and trace affinity graphs")
    compare.add_argument("model_graphs")
    compare.add_argument("trace_graphs")
    compare.add_argument("--out", required=True, help="output directory")

    report = sub.add_parser("report", help="correlation and summary tables")
    report.add_argument("validation", help="validation CSV")
    report.add_argument("--label", required=True)
    report.add_argument("--out", required=True, help="output directory")

    corpus = sub.add_parser("corpus", help="run the whole pipeline over a generated corpus")
    corpus.add_argument("--n", type=int, required=True, help="number of programs")
    corpus.add_argument("--out", required=True, help="output directory")
    corpus.add_argument("--use-profile", action="store_true",
                        help="weight models with collected edge profiles")

    for subparser in (build, run, profile, validate, affinity, compare, report, corpus):
        _add_config_flags(subparser)
    return parser


def _config_from(args: argparse.Namespace) -> RunConfig:
    overrides = {name: getattr(args, name)
                 for name in list(CONFIG_FLAGS) + list(CONFIG_SWITCHES)}
    return load_run_config(overrides)


def _dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    if args.command == "build":
        return commands.cmd_build(args.program, args.out, config, args.profile)
    if args.command == "run":
        return commands.cmd_run(args.program, args.out, config)
    if args.command == "profile":
        return commands.cmd_profile(args.program, args.out, config)
    if args.command == "validate":
        return commands.cmd_validate(args.models, args.trace, args.out, config)
    if args.command == "affinity":
        classes = None
        if args.classes is not None:
            classes = [name.strip() for name in args.classes.split(",") if name.strip()]
        return commands.cmd_affinity(args.out, config, model_dir=args.models,
                                     trace_file=args.trace, program_file=args.program,
                                     classes=classes)
    if args.command == "compare":
        return commands.cmd_compare(args.model_graphs, args.trace_graphs, args.out, config)
    if args.command == "report":
        return commands.cmd_report(args.validation, args.label, args.out, config)
    return commands.cmd_corpus(args.n, args.out, config, args.use_profile)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = getattr(logging, (args.log_level or LOG_LEVEL).upper(), logging.INFO)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _dispatch(args, _config_from(args))
    except PredictorError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.detail)
        return exc.exit_code
    except Exception:
        logger.exception("Internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
