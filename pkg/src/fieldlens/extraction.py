"""Field boundary extraction from taint traces.

Two extractors share the candidate stage:

* ``extract_format`` merges adjacent candidates whose operator sequences are
  similar under global alignment (the similarity-guided extractor).
* ``extract_format_baseline`` keeps the raw per-instruction candidates, i.e.
  the classic one-instruction-one-field strategy, for comparison runs.
"""

from __future__ import annotations

from .alignment import AlignmentParams, semantic_similar
from .model import (
    ExecutionTrace,
    Field,
    FormatResult,
    Message,
    consecutive_runs,
    operator_sequence,
)


def intra_instruction_candidates(
    message: Message, trace: ExecutionTrace
) -> list[Field]:
    """Per-instruction field candidates, deduplicated and sorted by offset.

    Each maximal run of consecutive offsets an instruction read directly from
    the message buffer becomes a candidate.  Register-only taint (an
    accumulator that has absorbed many byte labels, or the union across the
    two sides of a comparison) deliberately does not spawn candidates: such
    unions span unrelated fields.  Bytes covered by no candidate become
    single-byte candidates, flagged unaccessed when no instruction touched
    them at all.
    """
    seen: set[tuple[int, int]] = set()
    candidates: list[Field] = []
    for rec in trace.records:
        for start, end in consecutive_runs(rec.reads):
            if (start, end) not in seen:
                seen.add((start, end))
                candidates.append(Field(start, end, accessed=True))

    covered = [False] * len(message)
    for f in candidates:
        for o in f.offsets:
            covered[o] = True
    touched: set[int] = set()
    for rec in trace.records:
        touched.update(rec.accessed_offsets)
    for o in range(len(message)):
        if not covered[o]:
            candidates.append(Field(o, o, accessed=o in touched))

    candidates.sort(key=lambda f: (f.start, f.end))
    return candidates


def resolve_overlaps(candidates: list[Field]) -> list[Field]:
    """Merge any candidates whose byte ranges overlap into their union.

    The similarity pass assumes disjoint sorted candidates; overlapping reads
    (a word load over bytes a two-byte field shares with per-byte loads) are
    collapsed first.
    """
    if not candidates:
        return []
    ordered = sorted(candidates, key=lambda f: (f.start, f.end))
    merged: list[Field] = [ordered[0]]
    for nxt in ordered[1:]:
        cur = merged[-1]
        if nxt.start <= cur.end:
            merged[-1] = Field(
                cur.start, max(cur.end, nxt.end), accessed=cur.accessed or nxt.accessed
            )
        else:
            merged.append(nxt)
    return merged


def _mergeable(
    trace: ExecutionTrace, left: Field, right: Field, params: AlignmentParams
) -> bool:
    # Unaccessed ranges coalesce with each other but never with parsed data.
    if not left.accessed and not right.accessed:
        return True
    if left.accessed != right.accessed:
        return False
    ops_left = operator_sequence(trace, left)
    ops_right = operator_sequence(trace, right)
    if not ops_left and not ops_right:
        return True
    if not ops_left or not ops_right:
        return False
    return semantic_similar(ops_left, ops_right, params).merge


def _coalesce(
    trace: ExecutionTrace, candidates: list[Field], params: AlignmentParams
) -> list[Field]:
    """Single left-to-right pass: group adjacent similar candidates."""
    groups: list[list[Field]] = [[candidates[0]]]
    for prev, nxt in zip(candidates, candidates[1:]):
        if _mergeable(trace, prev, nxt, params):
            groups[-1].append(nxt)
        else:
            groups.append([nxt])
    return [
        Field(g[0].start, g[-1].end, accessed=any(f.accessed for f in g))
        for g in groups
    ]


def extract_format(
    message: Message,
    trace: ExecutionTrace,
    params: AlignmentParams | None = None,
) -> FormatResult:
    """Similarity-guided format extraction: candidates, then adjacent merging."""
    params = params or AlignmentParams()
    candidates = resolve_overlaps(intra_instruction_candidates(message, trace))
    fields = _coalesce(trace, candidates, params)
    return FormatResult(message.id, len(message), tuple(fields))


def extract_format_baseline(message: Message, trace: ExecutionTrace) -> FormatResult:
    """Classic strategy: the per-instruction candidates become the fields."""
    candidates = resolve_overlaps(intra_instruction_candidates(message, trace))
    return FormatResult(message.id, len(message), tuple(candidates))
