# Command Implementations
# One function per subcommand; failures propagate as PredictorError subclasses

import io
import logging
import random
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .affinity import (
    affinity_from_json,
    affinity_to_json,
    compare_affinity,
    model_affinity,
    trace_affinity,
)
from .cfg import build_cfg, edge_weights, read_profile, write_profile
from .config import RunConfig
from .data.program_generator import generate_random_program, pick_size_hint
from .errors import InputError
from .interp import collect_profile, execute, read_trace, write_trace
from .ir import parse_program, serialize_program
from .markov import build_chain, compress
from .models import (
    AffinityGraph,
    MarkovChain,
    MethodValidation,
    ProfileData,
    Program,
    Trace,
)
from .stats import correlation_report, summarize
from .tools.file_store import (
    ModelStore,
    PathLike,
    atomic_write_text,
    class_table,
    model_filename,
    read_text,
)
from .tools import report_writer
from .validate import SegmentedInvocations, segment_trace, validate_method

logger = logging.getLogger(__name__)

# Output file names
VALIDATION_CSV = "validation.csv"
CORRELATION_CSV = "correlation.csv"
CORRELATION_DETAIL_CSV = "correlation_detail.csv"
SUMMARY_CSV = "summary.csv"
COMPARISON_CSV = "comparison.csv"
UNCOMPARED_CSV = "uncompared.csv"
COSINE_HISTOGRAM_CSV = "cosine_histogram.csv"
SPEARMAN_HISTOGRAM_CSV = "spearman_histogram.csv"


# ---------------------------------------------------------------------------
# Shared pipeline steps
# ---------------------------------------------------------------------------

def load_program(program_file: PathLike) -> Program:
    return parse_program(read_text(program_file, "program"))


def load_trace(trace_file: PathLike) -> Trace:
    return read_trace(io.StringIO(read_text(trace_file, "trace")))


def render_trace(trace: Trace) -> str:
    buffer = io.StringIO()
    write_trace(trace, buffer)
    return buffer.getvalue()


def build_models(program: Program, config: RunConfig,
                 profile: Optional[ProfileData] = None) -> List[MarkovChain]:
    """Compressed access model of every method, in method-id order"""
    chains = []
    for method in sorted(program.methods, key=lambda m: m.method_id):
        cfg = build_cfg(method)
        weights = edge_weights(cfg, profile, config.static_policy)
        chain = build_chain(cfg, weights, method, program, config.reference_fields_only)
        chains.append(compress(chain, config.selfloop_policy))
    return chains


def method_sizes(program: Program, prefix: str = "") -> Dict[str, int]:
    return {prefix + m.method_id: len(m.instructions) for m in program.methods}


def validate_models(chains: Sequence[MarkovChain], trace: Trace, sizes: Dict[str, int],
                    config: RunConfig, seed_scope: str = "") -> List[MethodValidation]:
    """One validation row per model; methods missing from the trace get zero calls"""
    segmented = segment_trace(trace, config.reference_fields_only)
    rows = []
    for chain in sorted(chains, key=lambda c: c.method):
        invocations = segmented.get(chain.method, SegmentedInvocations(chain.method))
        rows.append(validate_method(
            chain, invocations,
            cap=config.callsite_cap,
            seed=config.derive_seed(f"sample:{seed_scope}{chain.method}"),
            per_site_cap=config.per_site_cap,
            strict_termination=config.strict_termination,
            config_set_cap=config.config_set_cap,
            method_size=sizes.get(chain.method, 0),
        ))
    return rows


def affinity_classes(classes: Dict[str, List[str]],
                     requested: Optional[Sequence[str]] = None) -> Dict[str, List[str]]:
    """Classes to build graphs for: the requested ones, else every class with a field pair"""
    if requested is None:
        return {name: fields for name, fields in classes.items() if len(fields) >= 2}
    unknown = sorted(set(requested) - set(classes))
    if unknown:
        logger.warning("Ignoring undeclared class(es): %s", ", ".join(unknown))
    return {name: classes[name] for name in sorted(set(requested) & set(classes))}


def write_graphs(out_dir: PathLike, graphs: Sequence[AffinityGraph]) -> None:
    for graph in graphs:
        atomic_write_text(Path(out_dir) / model_filename(graph.class_name),
                          affinity_to_json(graph))


def load_graphs(graph_dir: PathLike) -> Dict[str, AffinityGraph]:
    directory = Path(graph_dir)
    if not directory.is_dir():
        raise InputError(f"'{graph_dir}' is not a directory of affinity graphs")
    graphs = {}
    for path in sorted(directory.glob("*.json")):
        graph = affinity_from_json(read_text(path, "affinity graph"))
        graphs[graph.class_name] = graph
    return graphs


def _relabel_chain(chain: MarkovChain, prefix: str) -> MarkovChain:
    return chain.model_copy(update={"method": prefix + chain.method})


def _relabel_graph(graph: AffinityGraph, prefix: str) -> AffinityGraph:
    return graph.model_copy(update={"class_name": prefix + graph.class_name})


def _validation_detail_path(out: Path) -> Path:
    return out.with_name(f"{out.stem}_detail{out.suffix or '.csv'}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_build(program_file: PathLike, out_dir: PathLike, config: RunConfig,
              profile_file: Optional[PathLike] = None) -> int:
    """Write one model per method plus a manifest"""
    program = load_program(program_file)
    profile = None
    if profile_file is not None:
        profile = read_profile(io.StringIO(read_text(profile_file, "profile")))
    chains = build_models(program, config, profile)
    ModelStore(out_dir).save(chains, method_sizes(program), class_table(program),
                             config.model_dump(mode="json"))
    return 0


def cmd_run(program_file: PathLike, trace_out: PathLike, config: RunConfig) -> int:
    program = load_program(program_file)
    trace = execute(program, config.limits)
    if trace.truncated:
        logger.warning("Trace truncated at %d events", len(trace.events))
    atomic_write_text(trace_out, render_trace(trace))
    logger.info("Wrote %d trace events to %s", len(trace.events), trace_out)
    return 0


def cmd_profile(program_file: PathLike, profile_out: PathLike, config: RunConfig) -> int:
    program = load_program(program_file)
    profile = collect_profile(program, config.limits)
    buffer = io.StringIO()
    write_profile(profile, buffer)
    atomic_write_text(profile_out, buffer.getvalue())
    logger.info("Wrote %d profiled edges to %s", len(profile.counts), profile_out)
    return 0


def cmd_validate(model_dir: PathLike, trace_file: PathLike, out: PathLike,
                 config: RunConfig) -> int:
    store = ModelStore(model_dir)
    manifest = store.load_manifest()
    chains = store.load_models()
    sizes = {entry.method: entry.method_size for entry in manifest.methods}
    rows = validate_models(list(chains.values()), load_trace(trace_file), sizes, config)
    out_path = Path(out)
    report_writer.write_validation(out_path, rows, config.header())
    report_writer.write_validation_detail(_validation_detail_path(out_path), rows,
                                          config.header())
    return 0


def cmd_affinity(out_dir: PathLike, config: RunConfig, model_dir: Optional[PathLike] = None,
                 trace_file: Optional[PathLike] = None, program_file: Optional[PathLike] = None,
                 classes: Optional[Sequence[str]] = None) -> int:
    """Affinity graphs from a model directory or from a trace (declarations from a program)"""
    if (model_dir is None) == (trace_file is None):
        raise InputError("give exactly one of a model directory or a trace file")

    if model_dir is not None:
        store = ModelStore(model_dir)
        declared = store.load_manifest().classes
        relevant = affinity_classes(declared, classes)
        chains = list(store.load_models().values())
        graphs = [model_affinity(chains, name, declared, config.affinity_weighting)
                  for name in relevant]
    else:
        if program_file is None:
            raise InputError("trace affinity needs the program for its class declarations")
        relevant = affinity_classes(class_table(load_program(program_file)), classes)
        by_class = trace_affinity(load_trace(trace_file), relevant, config.window,
                                  config.reference_fields_only)
        graphs = [by_class[name] for name in sorted(by_class)]

    if not graphs:
        logger.warning("No classes selected; no affinity graphs written")
        return 0
    write_graphs(out_dir, graphs)
    logger.info("Wrote %d affinity graph(s) to %s", len(graphs), out_dir)
    return 0


def cmd_compare(model_graph_dir: PathLike, trace_graph_dir: PathLike, out_dir: PathLike,
                config: RunConfig) -> int:
    comparison = compare_affinity(load_graphs(model_graph_dir), load_graphs(trace_graph_dir))
    _write_comparison(Path(out_dir), comparison, config)
    return 0


def _write_comparison(out: Path, comparison, config: RunConfig) -> None:
    header = config.header()
    report_writer.write_comparison(out / COMPARISON_CSV, comparison, header)
    report_writer.write_uncompared(out / UNCOMPARED_CSV, comparison, header)
    report_writer.write_histogram(out / COSINE_HISTOGRAM_CSV, comparison.cosine_histogram,
                                  header)
    report_writer.write_histogram(out / SPEARMAN_HISTOGRAM_CSV,
                                  comparison.spearman_histogram, header)


def cmd_report(validation_csv: PathLike, label: str, out_dir: PathLike,
               config: RunConfig) -> int:
    rows = report_writer.read_validation(validation_csv)
    _write_statistics(Path(out_dir), rows, label, config)
    return 0


def _write_statistics(out: Path, rows: Sequence[MethodValidation], label: str,
                      config: RunConfig) -> None:
    header = config.header()
    report = correlation_report(rows, label, config.min_calls)
    report_writer.write_correlation(out / CORRELATION_CSV, [report], header)
    report_writer.write_correlation_detail(out / CORRELATION_DETAIL_CSV, [report], header)
    report_writer.write_summary(out / SUMMARY_CSV, summarize(rows, config.min_calls), header)


def cmd_corpus(n_programs: int, out_dir: PathLike, config: RunConfig,
               use_profile: bool = False) -> int:
    """Whole pipeline over a seeded corpus of generated programs"""
    if n_programs < 1:
        raise InputError("corpus needs at least one program")
    out = Path(out_dir)
    chains: List[MarkovChain] = []
    sizes: Dict[str, int] = {}
    classes: Dict[str, List[str]] = {}
    rows: List[MethodValidation] = []
    model_graphs: Dict[str, AffinityGraph] = {}
    trace_graphs: Dict[str, AffinityGraph] = {}

    for index in range(n_programs):
        label = f"p{index:03d}"
        prefix = f"{label}:"
        program, trace, profile = _corpus_member(index, config, use_profile)
        atomic_write_text(out / "programs" / f"{label}.mir", serialize_program(program))
        atomic_write_text(out / "traces" / f"{label}.trace", render_trace(trace))

        program_chains = build_models(program, config, profile)
        program_rows = validate_models(program_chains, trace, method_sizes(program),
                                       config, seed_scope=prefix)
        rows.extend(row.model_copy(update={"method": prefix + row.method})
                    for row in program_rows)
        chains.extend(_relabel_chain(c, prefix) for c in program_chains)
        sizes.update(method_sizes(program, prefix))
        classes.update(class_table(program, prefix))

        declared = class_table(program)
        relevant = affinity_classes(declared)
        for name in relevant:
            graph = model_affinity(program_chains, name, declared, config.affinity_weighting)
            model_graphs[prefix + name] = _relabel_graph(graph, prefix)
        for name, graph in trace_affinity(trace, relevant, config.window,
                                          config.reference_fields_only).items():
            trace_graphs[prefix + name] = _relabel_graph(graph, prefix)

    ModelStore(out).save(chains, sizes, classes, config.model_dump(mode="json"))
    header = config.header()
    report_writer.write_validation(out / VALIDATION_CSV, rows, header)
    report_writer.write_validation_detail(_validation_detail_path(out / VALIDATION_CSV),
                                          rows, header)
    write_graphs(out / "affinity" / "model", [model_graphs[k] for k in sorted(model_graphs)])
    write_graphs(out / "affinity" / "trace", [trace_graphs[k] for k in sorted(trace_graphs)])
    _write_statistics(out, rows, f"corpus-seed{config.seed}", config)
    _write_comparison(out, compare_affinity(model_graphs, trace_graphs), config)
    logger.info("Corpus of %d program(s), %d method(s) written to %s",
                n_programs, len(rows), out)
    return 0


def _corpus_member(index: int, config: RunConfig,
                   use_profile: bool) -> Tuple[Program, Trace, Optional[ProfileData]]:
    size_hint = pick_size_hint(random.Random(config.derive_seed(f"size:{index}")))
    program = generate_random_program(config.derive_seed(f"program:{index}"), size_hint)
    trace = execute(program, config.limits)
    profile = collect_profile(program, config.limits) if use_profile else None
    return program, trace, profile
