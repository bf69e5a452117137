"""Core data model: messages, taint-annotated instruction traces, and field partitions.

Everything here is immutable after construction and safe to share between
threads.  Offsets are byte-granular; bit-level fields are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Iterable, Optional, Tuple


class ModelError(ValueError):
    """An invariant of the trace data model was violated."""


class OpClass(Enum):
    MOV_SERIES = "MOV_SERIES"
    COMPARE = "COMPARE"
    ARITH_BITWISE = "ARITH_BITWISE"
    JUMP = "JUMP"
    CALL = "CALL"
    OTHER = "OTHER"


class LoopRole(Enum):
    BODY = "BODY"
    TERMINATION = "TERMINATION"


class ArgRole(Enum):
    LENGTH_ARG = "LENGTH_ARG"
    BUFFER_ARG = "BUFFER_ARG"
    OTHER = "OTHER"


class PointerArith(Enum):
    POINTER_INCREMENT = "POINTER_INCREMENT"
    COUNTER_DECREMENT = "COUNTER_DECREMENT"


@dataclass(frozen=True)
class ApiCall:
    """A pseudo-library call observed during parsing (e.g. a recv-with-length)."""

    name: str
    tainted_arg_role: ArgRole


@dataclass(frozen=True)
class Message:
    """A raw protocol message: an opaque id plus its byte content."""

    id: str
    data: bytes

    def __post_init__(self) -> None:
        if not self.data:
            raise ModelError(f"message {self.id!r} has no bytes")

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class InstructionRecord:
    """One executed instruction together with the message bytes it touched.

    ``accessed_offsets`` is the union of the taint labels of the instruction's
    operands.  ``reads`` is the subset of offsets the instruction loaded
    directly from the message buffer; it drives field-candidate extraction,
    while ``accessed_offsets`` drives per-field instruction association.
    ``operand_lineage`` is only populated for comparisons: it tags each side
    with every message offset that ever flowed into the compared value, even
    through value transformations that drop plain taint (table lookups).
    """

    seq: int
    operator: str
    op_class: OpClass
    accessed_offsets: frozenset[int]
    reads: frozenset[int] = frozenset()
    compared_const: Optional[bytes] = None
    cmp_result: Optional[bool] = None
    triggered_jump: bool = False
    loop_id: Optional[str] = None
    loop_role: Optional[LoopRole] = None
    api_call: Optional[ApiCall] = None
    pointer_arith: Optional[PointerArith] = None
    value_snapshot: Optional[bytes] = None
    operand_lineage: Optional[Tuple[frozenset[int], frozenset[int]]] = None

    def __post_init__(self) -> None:
        if self.cmp_result is not None and self.op_class is not OpClass.COMPARE:
            raise ModelError(
                f"record seq={self.seq}: cmp_result requires op_class=COMPARE"
            )
        if (self.loop_role is None) != (self.loop_id is None):
            raise ModelError(
                f"record seq={self.seq}: loop_role and loop_id must be set together"
            )
        if self.operand_lineage is not None and self.op_class is not OpClass.COMPARE:
            raise ModelError(
                f"record seq={self.seq}: operand_lineage requires op_class=COMPARE"
            )
        if not self.reads <= self.accessed_offsets:
            raise ModelError(
                f"record seq={self.seq}: reads must be a subset of accessed_offsets"
            )


@dataclass(frozen=True)
class ExecutionTrace:
    """The ordered instruction records emitted while one message was parsed."""

    message_id: str
    records: Tuple[InstructionRecord, ...]

    def __post_init__(self) -> None:
        prev = None
        for rec in self.records:
            if prev is not None and rec.seq <= prev:
                raise ModelError(
                    f"trace {self.message_id!r}: record seq values must be "
                    f"strictly increasing ({rec.seq} after {prev})"
                )
            prev = rec.seq

    def validate_offsets(self, message: Message) -> None:
        """Check that every recorded offset lies inside ``message``."""
        n = len(message)
        for rec in self.records:
            bad = [o for o in rec.accessed_offsets if o < 0 or o >= n]
            if bad:
                raise ModelError(
                    f"trace {self.message_id!r} seq={rec.seq}: offsets {sorted(bad)} "
                    f"outside message of length {n}"
                )


@dataclass(frozen=True, order=True)
class Field:
    """A contiguous byte range [start, end] of a message (both ends inclusive).

    ``accessed`` is False for ranges no instruction ever touched.
    """

    start: int
    end: int
    accessed: bool = dc_field(default=True, compare=False)

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < self.start:
            raise ModelError(f"invalid field range ({self.start}, {self.end})")

    @property
    def offsets(self) -> range:
        return range(self.start, self.end + 1)

    def __len__(self) -> int:
        return self.end - self.start + 1

    def overlaps(self, other: "Field") -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass(frozen=True)
class FormatResult:
    """An inferred partition of one message into fields.

    ``fields`` must cover [0, length) without gaps or overlaps; ``boundaries``
    is the derived set of offsets at which a new field starts (offset 0
    excluded).
    """

    message_id: str
    length: int
    fields: Tuple[Field, ...]

    def __post_init__(self) -> None:
        if not self.fields:
            raise ModelError(f"format for {self.message_id!r} has no fields")
        expected = 0
        for f in self.fields:
            if f.start != expected:
                raise ModelError(
                    f"format for {self.message_id!r} does not partition the "
                    f"message: field starts at {f.start}, expected {expected}"
                )
            expected = f.end + 1
        if expected != self.length:
            raise ModelError(
                f"format for {self.message_id!r} covers [0, {expected}) but the "
                f"message has {self.length} bytes"
            )

    @property
    def boundaries(self) -> Tuple[int, ...]:
        return tuple(f.start for f in self.fields if f.start > 0)

    def field_at(self, offset: int) -> Field:
        for f in self.fields:
            if f.start <= offset <= f.end:
                return f
        raise ModelError(f"offset {offset} outside message {self.message_id!r}")


def instructions_for(trace: ExecutionTrace, field: Field) -> list[InstructionRecord]:
    """All records whose accessed offsets intersect ``field``, in seq order."""
    lo, hi = field.start, field.end
    return [
        rec
        for rec in trace.records
        if any(lo <= o <= hi for o in rec.accessed_offsets)
    ]


def operator_sequence(trace: ExecutionTrace, field: Field) -> tuple[str, ...]:
    """Operator mnemonics of the instructions accessing ``field``, in seq order."""
    return tuple(rec.operator for rec in instructions_for(trace, field))


def consecutive_runs(offsets: Iterable[int]) -> list[tuple[int, int]]:
    """Maximal runs of consecutive integers, as inclusive (start, end) pairs."""
    out: list[tuple[int, int]] = []
    run_start = prev = None
    for o in sorted(set(offsets)):
        if prev is None:
            run_start = prev = o
        elif o == prev + 1:
            prev = o
        else:
            out.append((run_start, prev))
            run_start = prev = o
    if prev is not None:
        out.append((run_start, prev))
    return out
