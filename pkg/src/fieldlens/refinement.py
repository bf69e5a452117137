"""Cluster-and-refine stage: command-position search, entropy checks, constraints.

Messages are clustered by the value of a candidate command field; the
candidate whose clusters have the most internally similar formats (average
boundary-alignment score over within-cluster message pairs, weighted by pair
count) wins.  Within each cluster, Shannon entropy of the values seen at each
field range validates or revokes the extreme-entropy types (static, bytes)
and donates types to unknown fields.  Finally, function labels that
contradict the field's final type are dropped.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

from .alignment import AlignmentParams, nw_format_score
from .detectors import Evidence, FieldAnnotation, SemanticFunction, SemanticType
from .model import FormatResult, Message

#: Allowed field types per semantic function.
CONSTRAINT_TABLE: dict[SemanticFunction, frozenset[SemanticType]] = {
    SemanticFunction.COMMAND: frozenset({SemanticType.GROUP}),
    SemanticFunction.LENGTH: frozenset({SemanticType.INTEGER}),
    SemanticFunction.DELIM: frozenset({SemanticType.STATIC, SemanticType.GROUP}),
    SemanticFunction.ALIGNED: frozenset({SemanticType.GROUP, SemanticType.BYTES}),
    SemanticFunction.CHECKSUM: frozenset({SemanticType.INTEGER}),
    SemanticFunction.FILENAME: frozenset({SemanticType.STRING}),
}

Range = tuple[int, int]


@dataclass(frozen=True)
class Clustering:
    """Result of the command-position search.

    ``command_pos`` is None for degenerate corpora (fewer than two messages,
    or no candidate achieved a positive alignment score); then all messages
    sit in one cluster.
    """

    command_pos: Optional[Range]
    clusters: tuple[tuple[bytes, tuple[str, ...]], ...]
    align_score: float

    @property
    def degenerate(self) -> bool:
        return self.command_pos is None

    def cluster_of(self, message_id: str) -> tuple[str, ...]:
        for _, ids in self.clusters:
            if message_id in ids:
                return ids
        raise KeyError(message_id)


@dataclass(frozen=True)
class EntropyProfile:
    """Per-cluster field-range entropies (bits, base 2) and their median."""

    cluster_value: bytes
    entropies: tuple[tuple[Range, float], ...]
    median: float

    def entropy_of(self, rng: Range) -> float:
        for r, h in self.entropies:
            if r == rng:
                return h
        raise KeyError(rng)


@dataclass(frozen=True)
class RefinementEvent:
    """One audit-log entry: a label added, revoked, dropped, or assigned."""

    message_id: str
    field: Range
    action: str  # revoke-type | assign-type | add-function | drop-function | skip
    label: str
    reason: str
    entropy: Optional[float] = None
    median: Optional[float] = None


def shannon_entropy(values: Sequence[bytes]) -> float:
    """Shannon entropy in bits of the value multiset, frequencies as P(v)."""
    if not values:
        return 0.0
    counts = Counter(values)
    total = len(values)
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


def _cluster_key(message: Message, rng: Range) -> bytes:
    # messages shorter than the range contribute their truncated bytes
    return message.data[rng[0] : rng[1] + 1]


def _group_by_value(
    messages: Sequence[Message], rng: Range
) -> dict[bytes, list[str]]:
    groups: dict[bytes, list[str]] = {}
    for msg in messages:
        groups.setdefault(_cluster_key(msg, rng), []).append(msg.id)
    return groups


def _align_score(
    groups: Mapping[bytes, list[str]],
    boundaries: Mapping[str, tuple[int, ...]],
    params: AlignmentParams,
) -> float:
    total = 0.0
    pairs = 0
    for ids in groups.values():
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                total += nw_format_score(
                    boundaries[ids[i]], boundaries[ids[j]], params
                )
                pairs += 1
    return total / pairs if pairs else 0.0


def explore_optimal(
    messages: Sequence[Message],
    formats: Mapping[str, FormatResult],
    params: AlignmentParams | None = None,
) -> Clustering:
    """Search every boundary-delimited range for the best clustering basis."""
    params = params or AlignmentParams()
    if len(messages) < 2:
        ids = tuple(m.id for m in messages)
        return Clustering(None, ((b"", ids),), 0.0)

    boundaries = {m.id: formats[m.id].boundaries for m in messages}
    candidates = sorted(
        {(f.start, f.end) for m in messages for f in formats[m.id].fields}
    )

    best_score = 0.0
    best_pos: Optional[Range] = None
    for rng in candidates:
        groups = _group_by_value(messages, rng)
        score = _align_score(groups, boundaries, params)
        if score > best_score:
            best_score = score
            best_pos = rng

    if best_pos is None:
        ids = tuple(m.id for m in messages)
        return Clustering(None, ((b"", ids),), 0.0)

    final = _group_by_value(messages, best_pos)
    clusters = tuple(
        (value, tuple(ids)) for value, ids in sorted(final.items())
    )
    return Clustering(best_pos, clusters, best_score)


def single_cluster(messages: Sequence[Message]) -> Clustering:
    """Degenerate clustering used when the clustering stage is disabled."""
    return Clustering(None, ((b"", tuple(m.id for m in messages)),), 0.0)


def cluster_entropy_profile(
    cluster_value: bytes,
    cluster_messages: Sequence[Message],
    annotations: Mapping[str, Sequence[FieldAnnotation]],
) -> EntropyProfile:
    ranges = sorted(
        {
            (ann.field.start, ann.field.end)
            for msg in cluster_messages
            for ann in annotations[msg.id]
        }
    )
    entries = []
    for rng in ranges:
        values = [
            m.data[rng[0] : rng[1] + 1]
            for m in cluster_messages
            if len(m.data) > rng[1]
        ]
        entries.append((rng, shannon_entropy(values)))
    med = statistics.median(h for _, h in entries) if entries else 0.0
    return EntropyProfile(cluster_value, tuple(entries), med)


def entropy_refine(
    annotations: Mapping[str, Sequence[FieldAnnotation]],
    clustering: Clustering,
    messages: Mapping[str, Message],
) -> tuple[dict[str, tuple[FieldAnnotation, ...]], list[RefinementEvent]]:
    """Validate static/bytes labels against within-cluster value entropy.

    Static survives only strictly below the cluster median, bytes only
    strictly above; fields at the median lose the label.  Revoked or
    initially unknown fields take the type of the same-message field with
    the closest entropy (ties to the smaller start offset).  Single-message
    clusters are skipped.
    """
    refined = {mid: list(anns) for mid, anns in annotations.items()}
    events: list[RefinementEvent] = []

    for value, ids in clustering.clusters:
        cluster_msgs = [messages[mid] for mid in ids]
        if len(cluster_msgs) < 2:
            events.append(
                RefinementEvent(
                    ids[0] if ids else "-",
                    (-1, -1),
                    "skip",
                    "-",
                    "single-message cluster: entropy refinement skipped",
                )
            )
            continue
        profile = cluster_entropy_profile(value, cluster_msgs, annotations)
        h_of = dict(profile.entropies)
        med = profile.median

        for mid in ids:
            anns = refined[mid]
            for idx, ann in enumerate(anns):
                rng = (ann.field.start, ann.field.end)
                h = h_of[rng]
                if ann.inferred_type is SemanticType.STATIC and not h < med:
                    anns[idx] = replace(ann, inferred_type=SemanticType.UNKNOWN)
                    events.append(
                        RefinementEvent(
                            mid, rng, "revoke-type", "STATIC",
                            "entropy not below cluster median", h, med,
                        )
                    )
                elif ann.inferred_type is SemanticType.BYTES and not h > med:
                    anns[idx] = replace(ann, inferred_type=SemanticType.UNKNOWN)
                    events.append(
                        RefinementEvent(
                            mid, rng, "revoke-type", "BYTES",
                            "entropy not above cluster median", h, med,
                        )
                    )

        # entropy fallback for unknown fields, donors are typed fields
        for mid in ids:
            anns = refined[mid]
            donors = [
                (ann, h_of[(ann.field.start, ann.field.end)])
                for ann in anns
                if ann.inferred_type is not SemanticType.UNKNOWN
            ]
            if not donors:
                continue
            for idx, ann in enumerate(anns):
                if ann.inferred_type is not SemanticType.UNKNOWN:
                    continue
                rng = (ann.field.start, ann.field.end)
                h = h_of[rng]
                donor, donor_h = min(
                    donors, key=lambda d: (abs(d[1] - h), d[0].field.start)
                )
                new_ev = ann.evidence + (
                    Evidence(
                        "refine.entropy-fallback",
                        None,
                        note=f"donor field {donor.field.start}-{donor.field.end}",
                    ),
                )
                anns[idx] = replace(
                    ann, inferred_type=donor.inferred_type, evidence=new_ev
                )
                events.append(
                    RefinementEvent(
                        mid, rng, "assign-type", donor.inferred_type.name,
                        f"closest-entropy donor {donor.field.start}-{donor.field.end}",
                        h, med,
                    )
                )

    return {mid: tuple(anns) for mid, anns in refined.items()}, events


def constraint_refine(
    annotations: Mapping[str, Sequence[FieldAnnotation]],
    clustering: Optional[Clustering] = None,
    table: Mapping[SemanticFunction, frozenset[SemanticType]] = CONSTRAINT_TABLE,
) -> tuple[dict[str, tuple[FieldAnnotation, ...]], list[RefinementEvent]]:
    """Drop functions whose allowed-type set excludes the field's final type.

    The winning command position (when clustering ran) first gains the
    COMMAND label, and GROUP when the field is still untyped; the constraint
    sweep then runs over the result.
    """
    refined = {mid: list(anns) for mid, anns in annotations.items()}
    events: list[RefinementEvent] = []

    if clustering is not None and clustering.command_pos is not None:
        pos = clustering.command_pos
        for mid, anns in refined.items():
            for idx, ann in enumerate(anns):
                if (ann.field.start, ann.field.end) != pos:
                    continue
                updated = ann
                if SemanticFunction.COMMAND not in ann.inferred_functions:
                    updated = replace(
                        updated,
                        inferred_functions=updated.inferred_functions
                        | {SemanticFunction.COMMAND},
                        evidence=updated.evidence
                        + (Evidence("refine.cluster-command", None),),
                    )
                    events.append(
                        RefinementEvent(
                            mid, pos, "add-function", "COMMAND",
                            "field is the clustering basis",
                        )
                    )
                if updated.inferred_type is SemanticType.UNKNOWN:
                    updated = replace(updated, inferred_type=SemanticType.GROUP)
                    events.append(
                        RefinementEvent(
                            mid, pos, "assign-type", "GROUP",
                            "untyped clustering basis",
                        )
                    )
                anns[idx] = updated

    for mid, anns in refined.items():
        for idx, ann in enumerate(anns):
            bad = {
                fn
                for fn in ann.inferred_functions
                if ann.inferred_type not in table[fn]
            }
            if bad:
                anns[idx] = replace(
                    ann, inferred_functions=ann.inferred_functions - bad
                )
                for fn in sorted(bad, key=lambda f: f.name):
                    events.append(
                        RefinementEvent(
                            mid,
                            (ann.field.start, ann.field.end),
                            "drop-function",
                            fn.name,
                            f"requires {'/'.join(sorted(t.name for t in table[fn]))}, "
                            f"field is {ann.inferred_type.name}",
                        )
                    )

    return {mid: tuple(anns) for mid, anns in refined.items()}, events


def count_violations(
    annotations: Mapping[str, Sequence[FieldAnnotation]],
    table: Mapping[SemanticFunction, frozenset[SemanticType]] = CONSTRAINT_TABLE,
) -> int:
    """Number of (field, function) pairs whose type violates the table."""
    return sum(
        1
        for anns in annotations.values()
        for ann in anns
        for fn in ann.inferred_functions
        if ann.inferred_type not in table[fn]
    )
