"""Line-delimited interchange format for messages, traces, and ground truth.

One record per line, as ``kind`` followed by space-separated ``key=value``
pairs.  Byte strings are hex-encoded with a ``0x`` prefix; offset sets are
comma-separated integers where ``a-b`` abbreviates an inclusive run and ``-``
is the empty set.  Three record kinds exist:

``msg <id> bytes=0x...``
    Header line binding a message id to its raw bytes.

``rec <msg-id> seq=N op=MNEMONIC class=OPCLASS off=OFFSETS [...]``
    One executed instruction.  Optional keys: ``reads`` (offsets loaded
    directly from the buffer; defaults to ``off`` for MOV_SERIES records and
    to the empty set otherwise), ``const`` (comparison constant), ``result``
    (comparison outcome), ``jump`` (a control transfer immediately followed a
    true comparison), ``loop``/``role`` (enclosing loop id and BODY or
    TERMINATION), ``api`` (``name:ROLE``), ``ptr`` (POINTER_INCREMENT or
    COUNTER_DECREMENT), ``value`` (little-endian value snapshot), and
    ``lineage`` (per-operand offset provenance of a comparison, two offset
    sets separated by ``/``).

``gt <msg-id> field=S-E type=TYPE funcs=F|F|... [accessed=true|false]``
    Ground-truth field annotation, used by the evaluation layer.
"""

from __future__ import annotations

import io
from typing import Iterator, Optional, TextIO

from .model import (
    ApiCall,
    ArgRole,
    ExecutionTrace,
    InstructionRecord,
    LoopRole,
    Message,
    ModelError,
    OpClass,
    PointerArith,
    consecutive_runs,
)


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class IntegrityError(ValueError):
    def __init__(self, line_no: Optional[int], message: str):
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)
        self.line_no = line_no


def format_offsets(offsets: frozenset[int]) -> str:
    if not offsets:
        return "-"
    parts = []
    for start, end in consecutive_runs(offsets):
        parts.append(str(start) if start == end else f"{start}-{end}")
    return ",".join(parts)


def parse_offsets(text: str, line_no: int) -> frozenset[int]:
    if text == "-":
        return frozenset()
    out: set[int] = set()
    for part in text.split(","):
        try:
            if "-" in part:
                lo_s, hi_s = part.split("-", 1)
                lo, hi = int(lo_s), int(hi_s)
                if hi < lo:
                    raise ValueError
                out.update(range(lo, hi + 1))
            else:
                out.add(int(part))
        except ValueError:
            raise ParseError(line_no, f"bad offset set {text!r}") from None
    return frozenset(out)


def _parse_hex(text: str, line_no: int) -> bytes:
    if not text.startswith("0x"):
        raise ParseError(line_no, f"byte string {text!r} must start with 0x")
    try:
        return bytes.fromhex(text[2:])
    except ValueError:
        raise ParseError(line_no, f"bad hex byte string {text!r}") from None


def _parse_bool(text: str, line_no: int) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ParseError(line_no, f"expected true/false, got {text!r}")


def _split_fields(rest: list[str], line_no: int) -> dict[str, str]:
    kv: dict[str, str] = {}
    for tok in rest:
        if "=" not in tok:
            raise ParseError(line_no, f"expected key=value, got {tok!r}")
        key, value = tok.split("=", 1)
        if key in kv:
            raise ParseError(line_no, f"duplicate key {key!r}")
        kv[key] = value
    return kv


class RawLine:
    """A tokenized interchange line: kind, subject id, key/value pairs."""

    __slots__ = ("kind", "subject", "kv", "line_no")

    def __init__(self, kind: str, subject: str, kv: dict[str, str], line_no: int):
        self.kind = kind
        self.subject = subject
        self.kv = kv
        self.line_no = line_no


def iter_lines(stream: TextIO) -> Iterator[RawLine]:
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError(line_no, f"truncated line {line!r}")
        kind, subject = tokens[0], tokens[1]
        yield RawLine(kind, subject, _split_fields(tokens[2:], line_no), line_no)


def _require(kv: dict[str, str], key: str, line_no: int) -> str:
    if key not in kv:
        raise ParseError(line_no, f"missing required key {key!r}")
    return kv[key]


def _record_from_line(ln: RawLine) -> InstructionRecord:
    kv = ln.kv
    try:
        seq = int(_require(kv, "seq", ln.line_no))
    except ValueError:
        raise ParseError(ln.line_no, f"bad seq {kv.get('seq')!r}") from None
    op = _require(kv, "op", ln.line_no)
    try:
        op_class = OpClass[_require(kv, "class", ln.line_no)]
    except KeyError:
        raise ParseError(ln.line_no, f"unknown op class {kv.get('class')!r}") from None
    accessed = parse_offsets(_require(kv, "off", ln.line_no), ln.line_no)
    if "reads" in kv:
        reads = parse_offsets(kv["reads"], ln.line_no)
    else:
        reads = accessed if op_class is OpClass.MOV_SERIES else frozenset()

    compared_const = _parse_hex(kv["const"], ln.line_no) if "const" in kv else None
    cmp_result = _parse_bool(kv["result"], ln.line_no) if "result" in kv else None
    triggered = _parse_bool(kv["jump"], ln.line_no) if "jump" in kv else False
    loop_id = kv.get("loop")
    loop_role = None
    if "role" in kv:
        try:
            loop_role = LoopRole[kv["role"]]
        except KeyError:
            raise ParseError(ln.line_no, f"unknown loop role {kv['role']!r}") from None
    api_call = None
    if "api" in kv:
        if ":" not in kv["api"]:
            raise ParseError(ln.line_no, f"api must be name:ROLE, got {kv['api']!r}")
        name, role_s = kv["api"].split(":", 1)
        try:
            api_call = ApiCall(name, ArgRole[role_s])
        except KeyError:
            raise ParseError(ln.line_no, f"unknown api role {role_s!r}") from None
    pointer = None
    if "ptr" in kv:
        try:
            pointer = PointerArith[kv["ptr"]]
        except KeyError:
            raise ParseError(ln.line_no, f"unknown ptr kind {kv['ptr']!r}") from None
    snapshot = _parse_hex(kv["value"], ln.line_no) if "value" in kv else None
    lineage = None
    if "lineage" in kv:
        if "/" not in kv["lineage"]:
            raise ParseError(ln.line_no, "lineage must hold two offset sets: a/b")
        lhs_s, rhs_s = kv["lineage"].split("/", 1)
        lineage = (
            parse_offsets(lhs_s, ln.line_no),
            parse_offsets(rhs_s, ln.line_no),
        )
    try:
        return InstructionRecord(
            seq=seq,
            operator=op,
            op_class=op_class,
            accessed_offsets=accessed,
            reads=reads,
            compared_const=compared_const,
            cmp_result=cmp_result,
            triggered_jump=triggered,
            loop_id=loop_id,
            loop_role=loop_role,
            api_call=api_call,
            pointer_arith=pointer,
            value_snapshot=snapshot,
            operand_lineage=lineage,
        )
    except ModelError as exc:
        raise IntegrityError(ln.line_no, str(exc)) from None


def load_corpus_stream(stream: TextIO) -> tuple[list[Message], list[ExecutionTrace]]:
    messages: list[Message] = []
    by_id: dict[str, Message] = {}
    records: dict[str, list[InstructionRecord]] = {}
    rec_lines: dict[str, int] = {}
    for ln in iter_lines(stream):
        if ln.kind == "msg":
            if ln.subject in by_id:
                raise IntegrityError(ln.line_no, f"duplicate message id {ln.subject!r}")
            data = _parse_hex(_require(ln.kv, "bytes", ln.line_no), ln.line_no)
            try:
                msg = Message(ln.subject, data)
            except ModelError as exc:
                raise IntegrityError(ln.line_no, str(exc)) from None
            by_id[ln.subject] = msg
            messages.append(msg)
            records.setdefault(ln.subject, [])
        elif ln.kind == "rec":
            records.setdefault(ln.subject, []).append(_record_from_line(ln))
            rec_lines.setdefault(ln.subject, ln.line_no)
        elif ln.kind == "gt":
            continue  # ground truth is parsed by the evaluation layer
        else:
            raise ParseError(ln.line_no, f"unknown record kind {ln.kind!r}")

    traces: list[ExecutionTrace] = []
    for msg_id, recs in records.items():
        if msg_id not in by_id:
            raise IntegrityError(
                rec_lines.get(msg_id),
                f"trace references unknown message id {msg_id!r}",
            )
        try:
            trace = ExecutionTrace(msg_id, tuple(recs))
            trace.validate_offsets(by_id[msg_id])
        except ModelError as exc:
            raise IntegrityError(rec_lines.get(msg_id), str(exc)) from None
        traces.append(trace)
    return messages, traces


def load_corpus(path) -> tuple[list[Message], list[ExecutionTrace]]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_corpus_stream(fh)


def _record_to_line(msg_id: str, rec: InstructionRecord) -> str:
    parts = [
        f"rec {msg_id}",
        f"seq={rec.seq}",
        f"op={rec.operator}",
        f"class={rec.op_class.name}",
        f"off={format_offsets(rec.accessed_offsets)}",
        f"reads={format_offsets(rec.reads)}",
    ]
    if rec.compared_const is not None:
        parts.append(f"const=0x{rec.compared_const.hex()}")
    if rec.cmp_result is not None:
        parts.append(f"result={'true' if rec.cmp_result else 'false'}")
    if rec.triggered_jump:
        parts.append("jump=true")
    if rec.loop_id is not None:
        parts.append(f"loop={rec.loop_id}")
        parts.append(f"role={rec.loop_role.name}")
    if rec.api_call is not None:
        parts.append(f"api={rec.api_call.name}:{rec.api_call.tainted_arg_role.name}")
    if rec.pointer_arith is not None:
        parts.append(f"ptr={rec.pointer_arith.name}")
    if rec.value_snapshot is not None:
        parts.append(f"value=0x{rec.value_snapshot.hex()}")
    if rec.operand_lineage is not None:
        lhs, rhs = rec.operand_lineage
        parts.append(f"lineage={format_offsets(lhs)}/{format_offsets(rhs)}")
    return " ".join(parts)


def serialize_corpus(
    messages: list[Message], traces: list[ExecutionTrace]
) -> str:
    by_id = {t.message_id: t for t in traces}
    out = io.StringIO()
    for msg in messages:
        out.write(f"msg {msg.id} bytes=0x{msg.data.hex()}\n")
        trace = by_id.get(msg.id)
        if trace is None:
            continue
        for rec in trace.records:
            out.write(_record_to_line(msg.id, rec) + "\n")
    return out.getvalue()


def dump_corpus(path, messages: list[Message], traces: list[ExecutionTrace]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_corpus(messages, traces))
