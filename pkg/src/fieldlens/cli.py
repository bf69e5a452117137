"""Command-line front end.

Subcommands: ``generate-traces``, ``extract``, ``infer``, ``refine``,
``score``, ``run`` (full pipeline), ``export-template``, ``list-rules``.
Reports are machine-readable JSON; ``score`` and ``run`` also print a short
summary table.  The exit status is nonzero only for integrity or usage
errors, never for metric values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .alignment import AlignmentParams
from .detectors import RULES
from .evaluation import load_ground_truth, serialize_ground_truth
from .fuzz_template import export_fuzz_template
from .model import ModelError
from .pipeline import (
    PipelineConfig,
    annotations_from_doc,
    annotations_to_doc,
    audit_to_doc,
    clustering_to_dict,
    format_from_dict,
    format_to_dict,
    infer_corpus,
    refine_corpus,
    run_pipeline,
    score_corpus,
)
from .traceio import (
    IntegrityError,
    ParseError,
    dump_corpus,
    load_corpus,
    serialize_corpus,
)
from .vm import bundled_parsers, parse_script, run as vm_run
from .vm.machine import DEFAULT_STEP_BUDGET
from .vm.ops import ScriptError


def _add_alignment_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("alignment scoring")
    g.add_argument("--gap-score", type=int, default=-2)
    g.add_argument("--match-score", type=int, default=1)
    g.add_argument("--mismatch-score", type=int, default=-1)
    g.add_argument("--similarity-threshold", type=float, default=0.8)


def _params(args) -> AlignmentParams:
    return AlignmentParams(
        args.gap_score, args.match_score, args.mismatch_score,
        args.similarity_threshold,
    )


def _add_refine_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("refinement toggles")
    g.add_argument("--no-clustering", action="store_true",
                   help="skip format-based clustering (command search)")
    g.add_argument("--no-entropy", action="store_true",
                   help="skip entropy-based type refinement")
    g.add_argument("--no-constraints", action="store_true",
                   help="skip type/function constraint refinement")


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_traces(path: Path):
    messages, trace_list = load_corpus(path)
    return messages, {t.message_id: t for t in trace_list}


def _cmd_generate(args) -> int:
    out = Path(args.out)
    if args.script:
        if not args.corpus:
            print("--script requires --corpus", file=sys.stderr)
            return 2
        script = parse_script(Path(args.script).read_text(), Path(args.script).stem)
        messages, _ = _load_traces(Path(args.corpus))
        traces = []
        for msg in messages:
            report = vm_run(script, msg, args.step_budget)
            traces.append(report.trace)
            if report.terminated.name != "ACCEPT":
                print(f"{msg.id}: {report.terminated.name}", file=sys.stderr)
        dump_corpus(out, messages, traces)
        print(f"wrote {len(messages)} traces to {out}")
        return 0

    chosen = [
        p for p in bundled_parsers() if args.parser in ("all", p.name)
    ]
    if not chosen:
        names = ", ".join(p.name for p in bundled_parsers())
        print(f"unknown parser {args.parser!r}; bundled: {names}", file=sys.stderr)
        return 2
    all_messages, all_traces, all_truths = [], [], []
    for parser in chosen:
        messages, truths = parser.generate(args.count, args.seed)
        for msg in messages:
            report = vm_run(parser.script, msg, args.step_budget)
            if report.terminated.name != "ACCEPT":
                print(
                    f"generator bug: {msg.id} -> {report.terminated.name}",
                    file=sys.stderr,
                )
                return 2
            all_traces.append(report.trace)
        all_messages.extend(messages)
        all_truths.extend(truths)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(serialize_corpus(all_messages, all_traces))
        if args.with_ground_truth:
            fh.write(serialize_ground_truth(all_truths))
    print(f"wrote {len(all_messages)} messages and traces to {out}")
    return 0


def _cmd_extract(args) -> int:
    messages, traces = _load_traces(Path(args.traces))
    formats, _ = infer_corpus(messages, traces, _params(args), args.baseline)
    _write_json(Path(args.out), [format_to_dict(formats[m.id]) for m in messages])
    print(f"extracted {len(messages)} formats -> {args.out}")
    return 0


def _cmd_infer(args) -> int:
    messages, traces = _load_traces(Path(args.traces))
    disabled = frozenset(args.disable_rule or ())
    formats, annotations = infer_corpus(
        messages, traces, _params(args), args.baseline, disabled
    )
    _write_json(Path(args.formats_out), [format_to_dict(formats[m.id]) for m in messages])
    _write_json(Path(args.out), annotations_to_doc(annotations))
    print(f"annotated {len(messages)} messages -> {args.out}")
    return 0


def _cmd_refine(args) -> int:
    messages, _ = _load_traces(Path(args.traces))
    formats = {
        doc["message_id"]: format_from_dict(doc) for doc in _read_json(Path(args.formats))
    }
    annotations = annotations_from_doc(_read_json(Path(args.annotations)))
    clustering, refined, events = refine_corpus(
        messages,
        formats,
        annotations,
        _params(args),
        not args.no_clustering,
        not args.no_entropy,
        not args.no_constraints,
    )
    _write_json(Path(args.out), annotations_to_doc(refined))
    _write_json(Path(args.audit), audit_to_doc(events))
    _write_json(Path(args.clusters), clustering_to_dict(clustering))
    print(
        f"refined {len(messages)} messages -> {args.out} "
        f"({len(events)} audit events)"
    )
    return 0


def _summary_table(doc: dict) -> str:
    fmt = doc["format"]
    sem = doc["semantics"]
    lines = [
        f"{'':14}{'Acc.':>8}{'F1':>8}{'Perf.':>8}",
        f"{'format':14}{fmt['accuracy']:>8.2f}{fmt['f1']:>8.2f}{fmt['perfection']:>8.2f}",
        "",
        f"{'':14}{'Pre.':>8}{'Rec.':>8}{'F1':>8}",
        f"{'types':14}{sem['type']['precision']:>8.2f}{sem['type']['recall']:>8.2f}{sem['type']['f1']:>8.2f}",
        f"{'functions':14}{sem['function']['precision']:>8.2f}{sem['function']['recall']:>8.2f}{sem['function']['f1']:>8.2f}",
        "",
        f"segmentation errors: over={doc['segmentation_errors']['over']} "
        f"under={doc['segmentation_errors']['under']}",
    ]
    return "\n".join(lines)


def _cmd_score(args) -> int:
    formats = {
        doc["message_id"]: format_from_dict(doc) for doc in _read_json(Path(args.formats))
    }
    annotations = annotations_from_doc(_read_json(Path(args.annotations)))
    truths = load_ground_truth(Path(args.ground_truth))
    report = score_corpus(formats, annotations, truths)
    doc = report.to_dict()
    _write_json(Path(args.out), doc)
    print(_summary_table(doc))
    return 0


def _cmd_run(args) -> int:
    config = PipelineConfig(
        traces=Path(args.traces),
        out_dir=Path(args.out_dir),
        ground_truth=Path(args.ground_truth) if args.ground_truth else None,
        params=_params(args),
        baseline=args.baseline,
        clustering_enabled=not args.no_clustering,
        entropy_enabled=not args.no_entropy,
        constraints_enabled=not args.no_constraints,
        disabled_rules=frozenset(args.disable_rule or ()),
        step_budget=args.step_budget,
    )
    result = run_pipeline(config)
    print(f"pipeline reports written to {args.out_dir}")
    if result.metrics is not None:
        print(_summary_table(result.metrics.to_dict()))
    return result.exit_code


def _cmd_export_template(args) -> int:
    messages, _ = _load_traces(Path(args.traces))
    annotations = annotations_from_doc(_read_json(Path(args.annotations)))
    export_fuzz_template(annotations, {m.id: m for m in messages}, Path(args.out))
    print(f"template -> {args.out}")
    return 0


def _cmd_list_rules(args) -> int:
    width = max(len(rule_id) for rule_id, _ in RULES)
    for rule_id, summary in RULES:
        print(f"{rule_id:<{width}}  {summary}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="fieldlens",
        description="Field format and semantics inference from taint traces",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-traces", help="run a parser over messages, emit a trace file")
    p.add_argument("--parser", default="all", help="bundled parser name or 'all'")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--script", help="custom parser script to run instead")
    p.add_argument("--corpus", help="existing corpus file (with --script)")
    p.add_argument("--with-ground-truth", action="store_true")
    p.add_argument("--step-budget", type=int, default=DEFAULT_STEP_BUDGET)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("extract", help="extract field formats from traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--baseline", action="store_true",
                   help="per-instruction candidates only, no similarity merging")
    p.add_argument("--out", required=True)
    _add_alignment_flags(p)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("infer", help="extract formats and run semantic detectors")
    p.add_argument("--traces", required=True)
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--disable-rule", action="append", metavar="RULE_ID")
    p.add_argument("--formats-out", default="formats.json")
    p.add_argument("--out", required=True)
    _add_alignment_flags(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("refine", help="cluster and refine annotations")
    p.add_argument("--traces", required=True)
    p.add_argument("--formats", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--audit", default="refinement_audit.json")
    p.add_argument("--clusters", default="clustering.json")
    _add_alignment_flags(p)
    _add_refine_flags(p)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("score", help="score formats/annotations against ground truth")
    p.add_argument("--formats", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("run", help="full pipeline: extract, infer, refine, score")
    p.add_argument("--traces", required=True)
    p.add_argument("--ground-truth")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--disable-rule", action="append", metavar="RULE_ID")
    p.add_argument("--step-budget", type=int, default=DEFAULT_STEP_BUDGET)
    _add_alignment_flags(p)
    _add_refine_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("export-template", help="write a fuzzer template from annotations")
    p.add_argument("--traces", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_template)

    p = sub.add_parser("list-rules", help="enumerate the semantic detector rules")
    p.set_defaults(func=_cmd_list_rules)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, IntegrityError, ModelError, ScriptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
