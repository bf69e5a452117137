import random

import pytest

from fieldlens.model import ArgRole, LoopRole, Message, OpClass, PointerArith
from fieldlens.vm import TermReason, bundled_parsers, parse_script, run
from fieldlens.vm.machine import TABLE
from fieldlens.vm.ops import ARITH, Reg, ScriptError


def script(text):
    return parse_script(text)


# --- script parsing ---------------------------------------------------------


def test_unknown_mnemonic_rejected():
    with pytest.raises(ScriptError):
        script("frobnicate r0, r1")


def test_unknown_jump_target_rejected():
    with pytest.raises(ScriptError):
        script("jmp nowhere")


def test_bad_loop_nesting_rejected():
    with pytest.raises(ScriptError):
        script("loop a\nloop b\nendloop a\nendloop b")
    with pytest.raises(ScriptError):
        script("loop a\naccept")


def test_syntax_accepts_labels_comments_and_immediates():
    s = script(
        """
        ; leading comment
        start: movzx r0, buf[0]     ; trailing comment
        cmp r0, 0x10
        jlt start
        cmp r0, 16
        accept
        """
    )
    assert [i.mnemonic for i in s.instructions] == [
        "movzx", "cmp", "jlt", "cmp", "accept",
    ]
    # hex and decimal immediates parse to the same value
    assert s.instructions[1].operands[1] == s.instructions[3].operands[1]


def test_duplicate_label_rejected():
    with pytest.raises(ScriptError):
        script("a:\naccept\na:\nreject")


def test_name_directive():
    assert script("name demo-parser\naccept").name == "demo-parser"


def test_termination_compare_detected_statically():
    s = script(
        """
        mov r1, 0
        loop l
    top:
        cmp r1, 3
        jge out
        add r1, 1
        jmp top
        endloop l
    out:
        accept
        """
    )
    cmps = [i for i in s.instructions if i.mnemonic == "cmp"]
    assert cmps[0].loop_id == "l" and cmps[0].is_termination_cmp


# --- execution semantics ----------------------------------------------------


def test_empty_script_accepts_with_empty_trace():
    report = run(script(""), Message("m", b"\x01"))
    assert report.terminated is TermReason.ACCEPT
    assert report.trace.records == ()


def test_start_byte_compares_emit_compare_records():
    s = script(
        """
        movzx r0, buf[0]
        cmp r0, 0x05
        jne bad
        movzx r1, buf[1]
        cmp r1, 0x64
        jne bad
        accept
    bad:
        reject
        """
    )
    report = run(s, Message("m", b"\x05\x64\x00"))
    cmps = [r for r in report.trace.records if r.op_class is OpClass.COMPARE]
    assert [r.accessed_offsets for r in cmps] == [frozenset({0}), frozenset({1})]
    assert all(r.cmp_result for r in cmps)
    assert all(r.compared_const is not None for r in cmps)
    assert report.terminated is TermReason.ACCEPT


def test_loop_emits_identical_record_groups_per_byte():
    s = script(
        """
        mov r1, 10
        mov r2, 0
        loop body
    top:
        cmp r1, 21
        jge done
        movzx r3, buf[r1]
        xor r3, r2
        add r1, 1
        jmp top
        endloop body
    done:
        accept
        """
    )
    msg = Message("m", bytes(range(30)))
    report = run(s, msg)
    per_byte = {}
    for r in report.trace.records:
        if r.loop_id == "body":
            for off in r.accessed_offsets:
                per_byte.setdefault(off, []).append(r.operator)
    assert set(per_byte) == set(range(10, 21))
    groups = {tuple(ops) for ops in per_byte.values()}
    assert len(groups) == 1  # identical operator sequence per byte


def test_out_of_bounds_read_rejects():
    report = run(script("movzx r0, buf[9]\naccept"), Message("m", b"\x00"))
    assert report.terminated is TermReason.REJECT


def test_step_budget_exhaustion():
    s = script("top:\njmp top")
    report = run(s, Message("m", b"\x00"), step_budget=25)
    assert report.terminated is TermReason.STEP_LIMIT


def test_determinism():
    parser = bundled_parsers()[0]
    msgs, _ = parser.generate(5, seed=11)
    for msg in msgs:
        first = run(parser.script, msg)
        second = run(parser.script, msg)
        assert first == second


def test_taint_union_through_arithmetic():
    s = script(
        """
        movzx r0, buf[0]
        movzx r1, buf[3]
        add r0, r1
        accept
        """
    )
    report = run(s, Message("m", b"\x01\x02\x03\x04"))
    add = report.trace.records[-1]
    assert add.operator == "add"
    assert add.accessed_offsets == frozenset({0, 3})


def test_table_lookup_drops_taint_but_keeps_lineage():
    s = script(
        """
        movzx r0, buf[0]
        tbl r1, r0
        mov r2, r1
        movzx r3, buf[2]
        cmp r1, r3
        accept
        """
    )
    report = run(s, Message("m", b"\x07\x00\x09"))
    ops = [r.operator for r in report.trace.records]
    # the mov of the laundered value is silent (untainted source)
    assert ops == ["movzx", "mov", "movzx", "cmp"]
    cmp_rec = report.trace.records[-1]
    assert cmp_rec.accessed_offsets == frozenset({2})
    assert cmp_rec.operand_lineage == (frozenset({0}), frozenset({2}))
    tbl_rec = report.trace.records[1]
    assert tbl_rec.value_snapshot == TABLE[0x07].to_bytes(2, "little")


def test_pointer_arith_annotations():
    s = script(
        """
        movzx r0, buf[0]
        mov r1, 4
        add.ptr r1, r0
        sub.ctr r0, 1
        accept
        """
    )
    report = run(s, Message("m", b"\x02\x00\x00\x00"))
    kinds = [r.pointer_arith for r in report.trace.records if r.pointer_arith]
    assert kinds == [
        PointerArith.POINTER_INCREMENT,
        PointerArith.COUNTER_DECREMENT,
    ]


def test_api_call_record():
    s = script(
        """
        movzx r0, buf[1]
        api recv_len, r0, length
        accept
        """
    )
    report = run(s, Message("m", b"\x00\x08"))
    call = report.trace.records[-1]
    assert call.op_class is OpClass.CALL
    assert call.api_call.name == "recv_len"
    assert call.api_call.tainted_arg_role is ArgRole.LENGTH_ARG
    assert call.accessed_offsets == frozenset({1})


def test_triggered_jump_marks_true_compare_followed_by_branch():
    s = script(
        """
        movzx r0, buf[0]
        cmp r0, 0x05
        je yes
        reject
    yes:
        accept
        """
    )
    report = run(s, Message("m", b"\x05"))
    assert report.trace.records[-1].triggered_jump
    report = run(s, Message("m", b"\x06"))
    assert not report.trace.records[-1].triggered_jump


def test_loop_roles_assigned():
    parser = bundled_parsers()[0]
    msgs, _ = parser.generate(1, seed=2)
    report = run(parser.script, msgs[0])
    roles = {
        (r.loop_id, r.loop_role)
        for r in report.trace.records
        if r.loop_id is not None
    }
    assert ("P", LoopRole.TERMINATION) in roles
    assert ("P", LoopRole.BODY) in roles


def test_generator_with_count_zero_yields_empty_corpus():
    for parser in bundled_parsers():
        messages, truths = parser.generate(0, seed=0)
        assert messages == [] and truths == []


def test_bundled_ground_truth_matches_required_binary_shape():
    parser = bundled_parsers()[0]
    messages, truths = parser.generate(40, seed=0)
    chunk_truth = next(
        t for m, t in zip(messages, truths) if m.data[3] == 0x01
    )
    ranges = [(f.start, f.end) for f in chunk_truth.fields]
    assert ranges == [(0, 1), (2, 2), (3, 3), (4, 5), (6, 7), (8, 9), (10, 17), (18, 19)]


def test_every_read_byte_appears_in_some_record():
    for parser in bundled_parsers():
        msgs, _ = parser.generate(10, seed=5)
        for msg in msgs:
            report = run(parser.script, msg)
            assert report.terminated is TermReason.ACCEPT
            touched = set()
            for rec in report.trace.records:
                touched |= rec.accessed_offsets
            assert touched == set(range(len(msg)))


# --- independent taint oracle ----------------------------------------------
#
# A second, structurally different interpreter: registers map to (value,
# labels) pairs, ops are table-dispatched, and only the (operator, accessed
# offsets) event stream is produced.  The VM's records must match it exactly,
# so no record can ever contain an offset the dataflow could not reach.


def oracle_events(s, message, budget=100_000):
    data = message.data
    regs = {f"r{i}": (0, frozenset()) for i in range(16)}

    def val(op):
        return regs[op.name] if isinstance(op, Reg) else (op.value, frozenset())

    events = []
    flags = (0, 0)
    pc = 0
    code = s.instructions
    while pc < len(code) and budget > 0:
        budget -= 1
        ins = code[pc]
        m = ins.mnemonic
        pc += 1
        if m in ("movzx", "movzx16"):
            width = 2 if m == "movzx16" else 1
            base, itaint = val(ins.operands[1].index)
            if base < 0 or base + width > len(data):
                break
            labels = frozenset(range(base, base + width)) | itaint
            regs[ins.operands[0].name] = (
                int.from_bytes(data[base : base + width], "little"),
                labels,
            )
            events.append(("movzx", labels))
        elif m == "mov":
            v, t = val(ins.operands[1])
            regs[ins.operands[0].name] = (v, t)
            if t:
                events.append(("mov", t))
        elif m == "tbl":
            v, t = val(ins.operands[1])
            regs[ins.operands[0].name] = (TABLE[v & 0xFF], frozenset())
            if t:
                events.append(("mov", t))
        elif m in ARITH:
            va, ta = val(ins.operands[0])
            vb, tb = val(ins.operands[1])
            fn = {
                "add": lambda x, y: x + y,
                "sub": lambda x, y: x - y,
                "xor": lambda x, y: x ^ y,
                "or": lambda x, y: x | y,
                "and": lambda x, y: x & y,
                "shl": lambda x, y: x << (y & 63),
                "shr": lambda x, y: x >> (y & 63),
            }[m.split(".")[0]]
            regs[ins.operands[0].name] = (fn(va, vb) & ((1 << 64) - 1), ta | tb)
            if ta | tb:
                events.append((m.split(".")[0], ta | tb))
        elif m == "cmp":
            va, ta = val(ins.operands[0])
            vb, tb = val(ins.operands[1])
            flags = (va, vb)
            if ta | tb:
                events.append(("cmp", ta | tb))
        elif m == "jmp":
            pc = ins.operands[0].value
        elif m in ("je", "jne", "jlt", "jle", "jgt", "jge"):
            va, vb = flags
            if {
                "je": va == vb,
                "jne": va != vb,
                "jlt": va < vb,
                "jle": va <= vb,
                "jgt": va > vb,
                "jge": va >= vb,
            }[m]:
                pc = ins.operands[0].value
        elif m == "api":
            _, t = val(ins.operands[1])
            if t:
                events.append(("call", t))
        elif m in ("loop", "endloop"):
            pass
        elif m in ("accept", "reject"):
            break
    return events


def random_straightline_script(rng):
    lines = []
    for _ in range(rng.randint(1, 50)):
        choice = rng.randrange(6)
        rd = f"r{rng.randrange(6)}"
        rs = f"r{rng.randrange(6)}"
        if choice == 0:
            lines.append(f"movzx {rd}, buf[{rng.randrange(8)}]")
        elif choice == 1:
            lines.append(f"mov {rd}, {rs}")
        elif choice == 2:
            op = rng.choice(["add", "sub", "xor", "or", "and"])
            lines.append(f"{op} {rd}, {rs}")
        elif choice == 3:
            lines.append(f"cmp {rd}, {rng.randrange(256)}")
        elif choice == 4:
            lines.append(f"tbl {rd}, {rs}")
        else:
            lines.append(f"api probe, {rd}, other")
    lines.append("accept")
    return parse_script("\n".join(lines))


def test_vm_records_match_taint_oracle_on_random_scripts():
    rng = random.Random(2024)
    for _ in range(60):
        s = random_straightline_script(rng)
        msg = Message("m", bytes(rng.randrange(256) for _ in range(8)))
        got = [
            (r.operator, r.accessed_offsets) for r in run(s, msg).trace.records
        ]
        assert got == oracle_events(s, msg)


def test_vm_records_match_taint_oracle_on_bundled_parsers():
    for parser in bundled_parsers():
        msgs, _ = parser.generate(6, seed=3)
        for msg in msgs:
            got = [
                (r.operator, r.accessed_offsets)
                for r in run(parser.script, msg).trace.records
            ]
            assert got == oracle_events(parser.script, msg)
