"""Execution engine: runs a parser script over a message, emitting taint records.

Taint model
-----------
Every register carries a value, a taint label set, and a lineage label set.
Buffer loads taint the destination with the offsets read.  Moves, arithmetic,
and comparisons propagate taint as plain label-set union.  Table lookups
(``tbl``) return untainted data -- the loaded value comes from parser-constant
memory -- but lineage survives them, so a checksum accumulator that has been
laundered through a lookup table still remembers which message bytes fed it.
Comparisons record both sides' lineage for the checksum detector.

An instruction emits a record exactly when the union of its operands' taint
labels is non-empty; the record's ``accessed_offsets`` is that union and
``reads`` is the subset fetched directly from the message buffer.  A
comparison whose outcome is true and that is immediately followed by a
conditional jump gets ``triggered_jump`` (the compiled ``if`` idiom, whether
the branch is taken or falls through).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

from ..model import (
    ApiCall,
    ArgRole,
    ExecutionTrace,
    InstructionRecord,
    LoopRole,
    Message,
    OpClass,
    PointerArith,
)
from .ops import ARITH, BufRef, Imm, Instr, ParserScript, Reg

_MASK = (1 << 64) - 1

DEFAULT_STEP_BUDGET = 1_000_000


def _make_table() -> tuple[int, ...]:
    # fixed congruential sequence; shared with the message generators so that
    # generated checksums verify inside the VM
    out = []
    x = 0x29A
    for _ in range(256):
        x = (x * 1103515245 + 12345) & 0x7FFFFFFF
        out.append(x & 0xFFFF)
    return tuple(out)


TABLE: tuple[int, ...] = _make_table()


def table_mix(acc: int, byte: int) -> int:
    """One accumulator step of the table checksum the bundled parsers use."""
    return acc ^ TABLE[(byte ^ acc) & 0xFF]


class TermReason(enum.Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"
    STEP_LIMIT = "STEP_LIMIT"


@dataclass(frozen=True)
class VmRunReport:
    trace: ExecutionTrace
    terminated: TermReason


class _RegFile:
    __slots__ = ("value", "taint", "lineage")

    def __init__(self) -> None:
        self.value = {f"r{i}": 0 for i in range(16)}
        self.taint = {f"r{i}": frozenset() for i in range(16)}
        self.lineage = {f"r{i}": frozenset() for i in range(16)}


def _snap(value: int) -> bytes:
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "little")


_API_ROLES = {
    "length": ArgRole.LENGTH_ARG,
    "buffer": ArgRole.BUFFER_ARG,
    "other": ArgRole.OTHER,
}


def run(
    script: ParserScript,
    message: Message,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> VmRunReport:
    """Execute ``script`` over ``message`` deterministically."""
    regs = _RegFile()
    data = message.data
    n = len(data)
    code = script.instructions
    pc = 0
    steps = 0
    drafts: list[dict] = []
    # index into drafts of a compare emitted by the immediately previous step
    pending_cmp: Optional[int] = None
    flag_vals: tuple[int, int] = (0, 0)
    reason = TermReason.ACCEPT

    def read_src(op: Union[Reg, Imm]) -> tuple[int, frozenset, frozenset]:
        if isinstance(op, Reg):
            return regs.value[op.name], regs.taint[op.name], regs.lineage[op.name]
        return op.value, frozenset(), frozenset()

    def emit(ins: Instr, **kw) -> int:
        rec = {
            "seq": len(drafts) + 1,
            "loop_id": ins.loop_id,
            "loop_role": (
                (LoopRole.TERMINATION if ins.is_termination_cmp else LoopRole.BODY)
                if ins.loop_id is not None
                else None
            ),
            "triggered_jump": False,
        }
        rec.update(kw)
        drafts.append(rec)
        return len(drafts) - 1

    while True:
        if pc >= len(code):
            reason = TermReason.ACCEPT
            break
        if steps >= step_budget:
            reason = TermReason.STEP_LIMIT
            break
        steps += 1
        ins = code[pc]
        mnem = ins.mnemonic
        next_pc = pc + 1
        this_cmp: Optional[int] = None

        if mnem in ("movzx", "movzx16"):
            dst = ins.operands[0]
            ref = ins.operands[1]
            assert isinstance(dst, Reg) and isinstance(ref, BufRef)
            addr, idx_taint, idx_lineage = read_src(ref.index)
            width = 2 if mnem == "movzx16" else 1
            if addr < 0 or addr + width > n:
                reason = TermReason.REJECT
                break
            offsets = frozenset(range(addr, addr + width))
            value = int.from_bytes(data[addr : addr + width], "little")
            regs.value[dst.name] = value
            regs.taint[dst.name] = offsets | idx_taint
            regs.lineage[dst.name] = offsets | idx_lineage
            emit(
                ins,
                operator="movzx",
                op_class=OpClass.MOV_SERIES,
                accessed=offsets | idx_taint,
                reads=offsets,
                value_snapshot=_snap(value),
            )
        elif mnem == "mov":
            dst, src = ins.operands
            assert isinstance(dst, Reg)
            value, taint, lineage = read_src(src)
            regs.value[dst.name] = value
            regs.taint[dst.name] = taint
            regs.lineage[dst.name] = lineage
            if taint:
                emit(
                    ins,
                    operator="mov",
                    op_class=OpClass.MOV_SERIES,
                    accessed=taint,
                    reads=frozenset(),
                    value_snapshot=_snap(value),
                )
        elif mnem == "tbl":
            dst, src = ins.operands
            assert isinstance(dst, Reg)
            value, taint, lineage = read_src(src)
            result = TABLE[value & 0xFF]
            regs.value[dst.name] = result
            regs.taint[dst.name] = frozenset()
            regs.lineage[dst.name] = lineage | taint
            if taint:
                emit(
                    ins,
                    operator="mov",
                    op_class=OpClass.MOV_SERIES,
                    accessed=taint,
                    reads=frozenset(),
                    value_snapshot=_snap(result),
                )
        elif mnem in ARITH:
            dst, src = ins.operands
            assert isinstance(dst, Reg)
            va, ta, la = read_src(dst)
            vb, tb, lb = read_src(src)
            base = mnem.split(".")[0]
            if base == "add":
                value = (va + vb) & _MASK
            elif base == "sub":
                value = (va - vb) & _MASK
            elif base == "xor":
                value = va ^ vb
            elif base == "or":
                value = va | vb
            elif base == "and":
                value = va & vb
            elif base == "shl":
                value = (va << (vb & 63)) & _MASK
            else:  # shr
                value = va >> (vb & 63)
            taint = ta | tb
            regs.value[dst.name] = value
            regs.taint[dst.name] = taint
            regs.lineage[dst.name] = la | lb | taint
            if taint:
                pointer = None
                if mnem == "add.ptr":
                    pointer = PointerArith.POINTER_INCREMENT
                elif mnem == "sub.ctr":
                    pointer = PointerArith.COUNTER_DECREMENT
                emit(
                    ins,
                    operator=base,
                    op_class=OpClass.ARITH_BITWISE,
                    accessed=taint,
                    reads=frozenset(),
                    pointer_arith=pointer,
                    value_snapshot=_snap(value),
                )
        elif mnem == "cmp":
            a, b = ins.operands
            va, ta, la = read_src(a)
            vb, tb, lb = read_src(b)
            flag_vals = (va, vb)
            if ta or tb:
                const = None
                if isinstance(a, Imm):
                    const = _snap(a.value)
                elif isinstance(b, Imm):
                    const = _snap(b.value)
                this_cmp = emit(
                    ins,
                    operator="cmp",
                    op_class=OpClass.COMPARE,
                    accessed=ta | tb,
                    reads=frozenset(),
                    compared_const=const,
                    cmp_result=(va == vb),
                    operand_lineage=(la | ta, lb | tb),
                    value_snapshot=_snap(va),
                )
        elif mnem == "jmp":
            next_pc = ins.operands[0].value
        elif mnem in ("je", "jne", "jlt", "jle", "jgt", "jge"):
            va, vb = flag_vals
            taken = {
                "je": va == vb,
                "jne": va != vb,
                "jlt": va < vb,
                "jle": va <= vb,
                "jgt": va > vb,
                "jge": va >= vb,
            }[mnem]
            if pending_cmp is not None and drafts[pending_cmp]["cmp_result"]:
                drafts[pending_cmp]["triggered_jump"] = True
            if taken:
                next_pc = ins.operands[0].value
        elif mnem == "api":
            name, src, role = ins.operands
            value, taint, lineage = read_src(src)
            role_key = str(role).lower()  # validated at parse time
            if taint:
                emit(
                    ins,
                    operator="call",
                    op_class=OpClass.CALL,
                    accessed=taint,
                    reads=frozenset(),
                    api_call=ApiCall(str(name), _API_ROLES[role_key]),
                    value_snapshot=_snap(value),
                )
        elif mnem in ("loop", "endloop"):
            pass
        elif mnem == "accept":
            reason = TermReason.ACCEPT
            break
        elif mnem == "reject":
            reason = TermReason.REJECT
            break
        else:  # pragma: no cover
            raise AssertionError(f"unhandled mnemonic {mnem}")

        pending_cmp = this_cmp
        pc = next_pc

    records = tuple(
        InstructionRecord(
            seq=d["seq"],
            operator=d["operator"],
            op_class=d["op_class"],
            accessed_offsets=d["accessed"],
            reads=d["reads"],
            compared_const=d.get("compared_const"),
            cmp_result=d.get("cmp_result"),
            triggered_jump=d["triggered_jump"],
            loop_id=d["loop_id"],
            loop_role=d["loop_role"],
            api_call=d.get("api_call"),
            pointer_arith=d.get("pointer_arith"),
            value_snapshot=d.get("value_snapshot"),
            operand_lineage=d.get("operand_lineage"),
        )
        for d in drafts
    )
    return VmRunReport(ExecutionTrace(message.id, records), reason)
