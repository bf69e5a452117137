"""Pipeline orchestration: trace ingestion through scoring, with ablations.

``run_pipeline`` wires the stages together and writes machine-readable
reports.  Every stage can be toggled independently (baseline extraction, no
clustering, no entropy refinement, no constraint refinement) to reproduce the
ablation configurations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .alignment import AlignmentParams
from .detectors import (
    Evidence,
    FieldAnnotation,
    SemanticFunction,
    SemanticType,
    annotate_format,
)
from .evaluation import (
    GroundTruth,
    MetricsReport,
    count_segmentation_errors,
    load_ground_truth,
    score_format,
    score_semantics,
)
from .extraction import extract_format, extract_format_baseline
from .fuzz_template import export_fuzz_template
from .model import ExecutionTrace, Field, FormatResult, Message
from .refinement import (
    Clustering,
    RefinementEvent,
    constraint_refine,
    entropy_refine,
    explore_optimal,
    single_cluster,
)
from .traceio import IntegrityError, load_corpus
from .vm.machine import DEFAULT_STEP_BUDGET


@dataclass(frozen=True)
class PipelineConfig:
    traces: Path
    out_dir: Path
    ground_truth: Optional[Path] = None
    params: AlignmentParams = dc_field(default_factory=AlignmentParams)
    baseline: bool = False
    clustering_enabled: bool = True
    entropy_enabled: bool = True
    constraints_enabled: bool = True
    disabled_rules: frozenset[str] = frozenset()
    step_budget: int = DEFAULT_STEP_BUDGET
    write_template: bool = True


@dataclass
class PipelineResult:
    messages: dict[str, Message]
    traces: dict[str, ExecutionTrace]
    formats: dict[str, FormatResult]
    annotations: dict[str, tuple[FieldAnnotation, ...]]
    clustering: Optional[Clustering]
    audit: list[RefinementEvent]
    metrics: Optional[MetricsReport]
    exit_code: int = 0


def format_to_dict(fmt: FormatResult) -> dict:
    return {
        "message_id": fmt.message_id,
        "length": fmt.length,
        "fields": [
            {"start": f.start, "end": f.end, "accessed": f.accessed}
            for f in fmt.fields
        ],
        "boundaries": list(fmt.boundaries),
    }


def format_from_dict(doc: dict) -> FormatResult:
    return FormatResult(
        doc["message_id"],
        doc["length"],
        tuple(Field(f["start"], f["end"], f["accessed"]) for f in doc["fields"]),
    )


def annotation_to_dict(ann: FieldAnnotation) -> dict:
    return {
        "start": ann.field.start,
        "end": ann.field.end,
        "accessed": ann.field.accessed,
        "type": ann.inferred_type.name,
        "functions": sorted(fn.name for fn in ann.inferred_functions),
        "evidence": [
            {"rule": e.rule, "seq": e.seq, "note": e.note} for e in ann.evidence
        ],
    }


def annotation_from_dict(doc: dict) -> FieldAnnotation:
    return FieldAnnotation(
        Field(doc["start"], doc["end"], doc["accessed"]),
        SemanticType[doc["type"]],
        frozenset(SemanticFunction[name] for name in doc["functions"]),
        tuple(Evidence(e["rule"], e["seq"], e["note"]) for e in doc["evidence"]),
    )


def annotations_to_doc(
    annotations: Mapping[str, Sequence[FieldAnnotation]]
) -> dict:
    return {
        mid: [annotation_to_dict(a) for a in anns]
        for mid, anns in sorted(annotations.items())
    }


def annotations_from_doc(doc: dict) -> dict[str, tuple[FieldAnnotation, ...]]:
    return {
        mid: tuple(annotation_from_dict(a) for a in anns)
        for mid, anns in doc.items()
    }


def clustering_to_dict(clustering: Clustering) -> dict:
    return {
        "command_pos": list(clustering.command_pos)
        if clustering.command_pos
        else None,
        "align_score": clustering.align_score,
        "degenerate": clustering.degenerate,
        "clusters": [
            {"value": value.hex(), "messages": list(ids)}
            for value, ids in clustering.clusters
        ],
    }


def audit_to_doc(events: Sequence[RefinementEvent]) -> list[dict]:
    return [
        {
            "message_id": e.message_id,
            "field": list(e.field),
            "action": e.action,
            "label": e.label,
            "reason": e.reason,
            "entropy": e.entropy,
            "median": e.median,
        }
        for e in events
    ]


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def infer_corpus(
    messages: Sequence[Message],
    traces: Mapping[str, ExecutionTrace],
    params: AlignmentParams,
    baseline: bool = False,
    disabled_rules: frozenset[str] = frozenset(),
) -> tuple[dict[str, FormatResult], dict[str, tuple[FieldAnnotation, ...]]]:
    formats: dict[str, FormatResult] = {}
    annotations: dict[str, tuple[FieldAnnotation, ...]] = {}
    for msg in messages:
        trace = traces[msg.id]
        if baseline:
            fmt = extract_format_baseline(msg, trace)
        else:
            fmt = extract_format(msg, trace, params)
        formats[msg.id] = fmt
        annotations[msg.id] = annotate_format(fmt, trace, msg, disabled_rules)
    return formats, annotations


def refine_corpus(
    messages: Sequence[Message],
    formats: Mapping[str, FormatResult],
    annotations: Mapping[str, Sequence[FieldAnnotation]],
    params: AlignmentParams,
    clustering_enabled: bool = True,
    entropy_enabled: bool = True,
    constraints_enabled: bool = True,
) -> tuple[Clustering, dict[str, tuple[FieldAnnotation, ...]], list[RefinementEvent]]:
    if clustering_enabled:
        clustering = explore_optimal(messages, formats, params)
    else:
        clustering = single_cluster(messages)
    refined = {mid: tuple(anns) for mid, anns in annotations.items()}
    events: list[RefinementEvent] = []
    msg_map = {m.id: m for m in messages}
    if entropy_enabled:
        refined, ev = entropy_refine(refined, clustering, msg_map)
        events.extend(ev)
    if constraints_enabled:
        refined, ev = constraint_refine(
            refined, clustering if clustering_enabled else None
        )
        events.extend(ev)
    return clustering, refined, events


def score_corpus(
    formats: Mapping[str, FormatResult],
    annotations: Mapping[str, Sequence[FieldAnnotation]],
    truths: Mapping[str, GroundTruth],
) -> MetricsReport:
    report = MetricsReport()
    missing = sorted(set(formats) - set(truths))
    if missing:
        raise IntegrityError(None, f"no ground truth for messages: {missing}")
    for mid in sorted(formats):
        truth = truths[mid]
        report.add_message(
            score_format(formats[mid], truth),
            score_semantics(annotations[mid], truth),
            count_segmentation_errors(formats[mid], truth),
        )
    return report


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Execute ingest -> extract -> infer -> refine -> score and write reports."""
    messages, trace_list = load_corpus(config.traces)
    traces = {t.message_id: t for t in trace_list}
    missing = sorted(m.id for m in messages if m.id not in traces)
    if missing:
        raise IntegrityError(None, f"messages without traces: {missing}")

    formats, annotations = infer_corpus(
        messages, traces, config.params, config.baseline, config.disabled_rules
    )
    clustering, refined, events = refine_corpus(
        messages,
        formats,
        annotations,
        config.params,
        config.clustering_enabled,
        config.entropy_enabled,
        config.constraints_enabled,
    )

    metrics: Optional[MetricsReport] = None
    if config.ground_truth is not None:
        truths = load_ground_truth(config.ground_truth)
        metrics = score_corpus(formats, refined, truths)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "formats.json",
        [format_to_dict(formats[m.id]) for m in messages],
    )
    _write_json(out / "annotations.json", annotations_to_doc(refined))
    _write_json(out / "clustering.json", clustering_to_dict(clustering))
    _write_json(out / "refinement_audit.json", audit_to_doc(events))
    if metrics is not None:
        _write_json(out / "metrics.json", metrics.to_dict())
    if config.write_template:
        msg_map = {m.id: m for m in messages}
        export_fuzz_template(refined, msg_map, out / "template.json")

    return PipelineResult(
        messages={m.id: m for m in messages},
        traces=traces,
        formats=formats,
        annotations=refined,
        clustering=clustering,
        audit=events,
        metrics=metrics,
    )
