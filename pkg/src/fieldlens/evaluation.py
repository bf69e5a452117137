"""Scoring of inferred formats and semantics against ground truth.

Boundary scoring classifies every inter-byte position of a message as
TP/FP/FN/TN; a true field is *perfect* when both of its boundaries were
inferred exactly.  Semantic labels count as correct only on exactly matched
fields.  Segmentation-error counting mirrors the boundary FP/FN split but
excludes positions inside true fields that the server never accessed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

from .detectors import FieldAnnotation, SemanticFunction, SemanticType
from .model import FormatResult
from .traceio import IntegrityError, ParseError, iter_lines


@dataclass(frozen=True)
class GroundTruthField:
    start: int
    end: int
    sem_type: SemanticType
    functions: frozenset[SemanticFunction]
    accessed: bool = True


@dataclass(frozen=True)
class GroundTruth:
    message_id: str
    length: int
    fields: tuple[GroundTruthField, ...]

    def __post_init__(self) -> None:
        expected = 0
        for f in self.fields:
            if f.start != expected:
                raise IntegrityError(
                    None,
                    f"ground truth for {self.message_id!r} does not partition "
                    f"the message at offset {f.start}",
                )
            expected = f.end + 1
        if expected != self.length:
            raise IntegrityError(
                None,
                f"ground truth for {self.message_id!r} covers {expected} bytes, "
                f"expected {self.length}",
            )

    @property
    def boundaries(self) -> frozenset[int]:
        return frozenset(f.start for f in self.fields if f.start > 0)


def load_ground_truth(path) -> dict[str, GroundTruth]:
    """Read ``gt`` records from an interchange file (other kinds are ignored)."""
    with open(path, "r", encoding="utf-8") as fh:
        per_msg: dict[str, list[GroundTruthField]] = {}
        for ln in iter_lines(fh):
            if ln.kind != "gt":
                continue
            if "field" not in ln.kv or "type" not in ln.kv:
                raise ParseError(ln.line_no, "gt line needs field= and type=")
            if "-" not in ln.kv["field"]:
                raise ParseError(ln.line_no, f"bad field range {ln.kv['field']!r}")
            lo_s, hi_s = ln.kv["field"].split("-", 1)
            try:
                start, end = int(lo_s), int(hi_s)
            except ValueError:
                raise ParseError(ln.line_no, f"bad field range {ln.kv['field']!r}")
            try:
                sem_type = SemanticType[ln.kv["type"]]
            except KeyError:
                raise ParseError(ln.line_no, f"unknown type {ln.kv['type']!r}")
            funcs: set[SemanticFunction] = set()
            if ln.kv.get("funcs", "-") != "-":
                for name in ln.kv["funcs"].split("|"):
                    try:
                        funcs.add(SemanticFunction[name])
                    except KeyError:
                        raise ParseError(ln.line_no, f"unknown function {name!r}")
            accessed = ln.kv.get("accessed", "true") == "true"
            per_msg.setdefault(ln.subject, []).append(
                GroundTruthField(start, end, sem_type, frozenset(funcs), accessed)
            )
    out = {}
    for mid, fields in per_msg.items():
        fields.sort(key=lambda f: f.start)
        out[mid] = GroundTruth(mid, fields[-1].end + 1, tuple(fields))
    return out


def serialize_ground_truth(truths: Sequence[GroundTruth]) -> str:
    lines = []
    for gt in truths:
        for f in gt.fields:
            funcs = "|".join(sorted(fn.name for fn in f.functions)) or "-"
            lines.append(
                f"gt {gt.message_id} field={f.start}-{f.end} type={f.sem_type.name} "
                f"funcs={funcs} accessed={'true' if f.accessed else 'false'}"
            )
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class FormatScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    perfect_fields: int = 0
    true_fields: int = 0

    @property
    def positions(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.positions if self.positions else 1.0

    @property
    def precision(self) -> float:
        if self.tp + self.fp == 0:
            return 1.0 if self.fn == 0 else 0.0
        return self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            return 1.0 if self.fp == 0 else 0.0
        return self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def perfection(self) -> float:
        return self.perfect_fields / self.true_fields if self.true_fields else 1.0

    def add(self, other: "FormatScore") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.tn += other.tn
        self.perfect_fields += other.perfect_fields
        self.true_fields += other.true_fields


def score_format(inferred: FormatResult, truth: GroundTruth) -> FormatScore:
    """Classify every inter-byte position and count perfectly bounded fields."""
    if inferred.message_id != truth.message_id:
        raise IntegrityError(None, "format and ground truth message ids differ")
    if inferred.length != truth.length:
        raise IntegrityError(
            None,
            f"inferred partition covers {inferred.length} bytes, ground truth "
            f"{truth.length}",
        )
    inf = set(inferred.boundaries)
    tru = set(truth.boundaries)
    score = FormatScore()
    for pos in range(1, truth.length):
        in_inf, in_tru = pos in inf, pos in tru
        if in_inf and in_tru:
            score.tp += 1
        elif in_inf:
            score.fp += 1
        elif in_tru:
            score.fn += 1
        else:
            score.tn += 1
    score.true_fields = len(truth.fields)
    for f in truth.fields:
        start_ok = f.start == 0 or f.start in inf
        end_ok = f.end == truth.length - 1 or f.end + 1 in inf
        if start_ok and end_ok:
            score.perfect_fields += 1
    return score


def count_segmentation_errors(
    inferred: FormatResult, truth: GroundTruth
) -> tuple[int, int]:
    """(over_seg, under_seg) boundary errors, skipping unaccessed true fields."""
    excluded: set[int] = set()
    for f in truth.fields:
        if not f.accessed:
            excluded.update(range(f.start + 1, f.end + 1))
    inf = set(inferred.boundaries) - excluded
    tru = set(truth.boundaries) - excluded
    return len(inf - tru), len(tru - inf)


@dataclass
class LabelCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        if self.tp + self.fp == 0:
            return 1.0 if self.fn == 0 else 0.0
        return self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            return 1.0 if self.fp == 0 else 0.0
        return self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def add(self, other: "LabelCounts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn


@dataclass
class SemanticScore:
    """Micro counts plus per-label breakdowns for types and functions.

    ``*_accessed`` recall variants ignore true fields the server never
    touched; both figures are reported.
    """

    types: LabelCounts = dc_field(default_factory=LabelCounts)
    functions: LabelCounts = dc_field(default_factory=LabelCounts)
    per_type: dict[str, LabelCounts] = dc_field(default_factory=dict)
    per_function: dict[str, LabelCounts] = dc_field(default_factory=dict)
    types_accessed: LabelCounts = dc_field(default_factory=LabelCounts)
    functions_accessed: LabelCounts = dc_field(default_factory=LabelCounts)

    def _label(self, table: dict[str, LabelCounts], name: str) -> LabelCounts:
        return table.setdefault(name, LabelCounts())

    def add(self, other: "SemanticScore") -> None:
        self.types.add(other.types)
        self.functions.add(other.functions)
        self.types_accessed.add(other.types_accessed)
        self.functions_accessed.add(other.functions_accessed)
        for name, counts in other.per_type.items():
            self._label(self.per_type, name).add(counts)
        for name, counts in other.per_function.items():
            self._label(self.per_function, name).add(counts)

    def macro_f1(self, table: dict[str, LabelCounts]) -> float:
        if not table:
            return 1.0
        return sum(c.f1 for c in table.values()) / len(table)


def score_semantics(
    annotations: Sequence[FieldAnnotation], truth: GroundTruth
) -> SemanticScore:
    """Exact-boundary label matching: a prediction counts only on a field
    whose boundaries coincide with a true field's."""
    score = SemanticScore()
    by_range = {(a.field.start, a.field.end): a for a in annotations}
    matched: set[tuple[int, int]] = set()

    for f in truth.fields:
        rng = (f.start, f.end)
        ann = by_range.get(rng)
        if ann is not None:
            matched.add(rng)
        pred_type = ann.inferred_type if ann is not None else SemanticType.UNKNOWN
        if pred_type is not SemanticType.UNKNOWN and pred_type is f.sem_type:
            score.types.tp += 1
            score._label(score.per_type, f.sem_type.name).tp += 1
            if f.accessed:
                score.types_accessed.tp += 1
        else:
            score.types.fn += 1
            score._label(score.per_type, f.sem_type.name).fn += 1
            if f.accessed:
                score.types_accessed.fn += 1
            if pred_type is not SemanticType.UNKNOWN:
                score.types.fp += 1
                score.types_accessed.fp += 1
                score._label(score.per_type, pred_type.name).fp += 1

        pred_funcs = ann.inferred_functions if ann is not None else frozenset()
        for fn in f.functions & pred_funcs:
            score.functions.tp += 1
            score._label(score.per_function, fn.name).tp += 1
            if f.accessed:
                score.functions_accessed.tp += 1
        for fn in f.functions - pred_funcs:
            score.functions.fn += 1
            score._label(score.per_function, fn.name).fn += 1
            if f.accessed:
                score.functions_accessed.fn += 1
        for fn in pred_funcs - f.functions:
            score.functions.fp += 1
            score.functions_accessed.fp += 1
            score._label(score.per_function, fn.name).fp += 1

    for rng, ann in by_range.items():
        if rng in matched:
            continue
        if ann.inferred_type is not SemanticType.UNKNOWN:
            score.types.fp += 1
            score.types_accessed.fp += 1
            score._label(score.per_type, ann.inferred_type.name).fp += 1
        for fn in ann.inferred_functions:
            score.functions.fp += 1
            score.functions_accessed.fp += 1
            score._label(score.per_function, fn.name).fp += 1
    return score


@dataclass
class MetricsReport:
    """Corpus-level report: boundary metrics, semantics, segmentation errors."""

    format: FormatScore = dc_field(default_factory=FormatScore)
    semantics: SemanticScore = dc_field(default_factory=SemanticScore)
    over_seg: int = 0
    under_seg: int = 0
    messages: int = 0

    def add_message(
        self,
        fmt_score: FormatScore,
        sem_score: Optional[SemanticScore],
        seg: tuple[int, int],
    ) -> None:
        self.format.add(fmt_score)
        if sem_score is not None:
            self.semantics.add(sem_score)
        self.over_seg += seg[0]
        self.under_seg += seg[1]
        self.messages += 1

    def to_dict(self) -> dict:
        fmt = self.format
        sem = self.semantics
        return {
            "messages": self.messages,
            "format": {
                "tp": fmt.tp,
                "fp": fmt.fp,
                "fn": fmt.fn,
                "tn": fmt.tn,
                "accuracy": fmt.accuracy,
                "precision": fmt.precision,
                "recall": fmt.recall,
                "f1": fmt.f1,
                "perfect_fields": fmt.perfect_fields,
                "true_fields": fmt.true_fields,
                "perfection": fmt.perfection,
            },
            "segmentation_errors": {
                "over": self.over_seg,
                "under": self.under_seg,
                "total": self.over_seg + self.under_seg,
            },
            "semantics": {
                "type": {
                    "precision": sem.types.precision,
                    "recall": sem.types.recall,
                    "recall_accessed_only": sem.types_accessed.recall,
                    "f1": sem.types.f1,
                    "macro_f1": sem.macro_f1(sem.per_type),
                    "per_label": {
                        name: {"precision": c.precision, "recall": c.recall, "f1": c.f1}
                        for name, c in sorted(sem.per_type.items())
                    },
                },
                "function": {
                    "precision": sem.functions.precision,
                    "recall": sem.functions.recall,
                    "recall_accessed_only": sem.functions_accessed.recall,
                    "f1": sem.functions.f1,
                    "macro_f1": sem.macro_f1(sem.per_function),
                    "per_label": {
                        name: {"precision": c.precision, "recall": c.recall, "f1": c.f1}
                        for name, c in sorted(sem.per_function.items())
                    },
                },
            },
        }
