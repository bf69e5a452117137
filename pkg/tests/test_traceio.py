import io

import pytest
from hypothesis import given, settings, strategies as st

from fieldlens.model import (
    ApiCall,
    ArgRole,
    ExecutionTrace,
    InstructionRecord,
    LoopRole,
    Message,
    OpClass,
    PointerArith,
)
from fieldlens.traceio import (
    IntegrityError,
    ParseError,
    format_offsets,
    load_corpus_stream,
    parse_offsets,
    serialize_corpus,
)


def load_text(text):
    return load_corpus_stream(io.StringIO(text))


def test_offsets_round_trip():
    for offsets in (frozenset(), frozenset({0}), frozenset({1, 2, 3, 7})):
        assert parse_offsets(format_offsets(offsets), 1) == offsets
    assert format_offsets(frozenset({10, 11, 12, 20})) == "10-12,20"


def test_message_without_records_gets_empty_trace():
    messages, traces = load_text("msg a bytes=0x0102\n")
    assert len(messages) == 1 and len(traces) == 1
    assert traces[0].records == ()


def test_example3_fixture_shape(example3):
    _, trace = example3
    assert len(trace.records) == 16
    assert {r.operator for r in trace.records} == {
        "mov", "movzx", "shl", "or", "cmp", "xor",
    }


def test_cmp_result_on_mov_record_is_integrity_error():
    text = (
        "msg a bytes=0x01\n"
        "rec a seq=1 op=mov class=MOV_SERIES off=0 result=true\n"
    )
    with pytest.raises(IntegrityError):
        load_text(text)


def test_unknown_message_reference():
    with pytest.raises(IntegrityError):
        load_text("rec ghost seq=1 op=mov class=MOV_SERIES off=-\n")


def test_parse_error_carries_line_number():
    text = "msg a bytes=0x01\nrec a seq=1 op=mov class=NOPE off=0\n"
    with pytest.raises(ParseError) as err:
        load_text(text)
    assert err.value.line_no == 2


def test_duplicate_message_id_rejected():
    with pytest.raises(IntegrityError):
        load_text("msg a bytes=0x01\nmsg a bytes=0x02\n")


def test_offsets_outside_message_rejected():
    text = "msg a bytes=0x01\nrec a seq=1 op=mov class=MOV_SERIES off=5\n"
    with pytest.raises(IntegrityError):
        load_text(text)


def test_reads_default_follows_op_class():
    text = (
        "msg a bytes=0x010203\n"
        "rec a seq=1 op=movzx class=MOV_SERIES off=0-1\n"
        "rec a seq=2 op=cmp class=COMPARE off=0-1\n"
    )
    _, traces = load_text(text)
    mov, cmp_rec = traces[0].records
    assert mov.reads == frozenset({0, 1})
    assert cmp_rec.reads == frozenset()


def test_fixture_files_round_trip(example1, example2, example3):
    for message, trace in (example1, example2, example3):
        text = serialize_corpus([message], [trace])
        messages2, traces2 = load_text(text)
        assert messages2 == [message]
        assert traces2 == [trace]


_operators = st.sampled_from(["mov", "movzx", "cmp", "xor", "add", "call"])
_offsets = st.frozensets(st.integers(min_value=0, max_value=15), max_size=5)


@st.composite
def records(draw, msg_len=16):
    seq = draw(st.integers(min_value=1, max_value=10_000))
    op_class = draw(st.sampled_from(list(OpClass)))
    accessed = draw(_offsets)
    reads = frozenset(draw(st.sets(st.sampled_from(sorted(accessed)), max_size=len(accessed)))) if accessed else frozenset()
    kw = {}
    if op_class is OpClass.COMPARE:
        kw["cmp_result"] = draw(st.booleans())
        if draw(st.booleans()):
            kw["compared_const"] = draw(st.binary(min_size=1, max_size=2))
        if draw(st.booleans()):
            kw["operand_lineage"] = (draw(_offsets), draw(_offsets))
    if draw(st.booleans()):
        kw["loop_id"] = draw(st.sampled_from(["l1", "l2"]))
        kw["loop_role"] = draw(st.sampled_from(list(LoopRole)))
    if draw(st.booleans()):
        kw["api_call"] = ApiCall("recv", draw(st.sampled_from(list(ArgRole))))
    if draw(st.booleans()):
        kw["pointer_arith"] = draw(st.sampled_from(list(PointerArith)))
    if draw(st.booleans()):
        kw["value_snapshot"] = draw(st.binary(min_size=1, max_size=4))
    return InstructionRecord(
        seq=seq,
        operator=draw(_operators),
        op_class=op_class,
        accessed_offsets=accessed,
        reads=reads,
        triggered_jump=draw(st.booleans()),
        **kw,
    )


@given(st.lists(records(), max_size=8), st.binary(min_size=16, max_size=16))
@settings(max_examples=80, deadline=None)
def test_serialize_parse_round_trip(recs, payload):
    recs = sorted(recs, key=lambda r: r.seq)
    seqs = {r.seq for r in recs}
    if len(seqs) != len(recs):
        recs = [
            InstructionRecord(
                seq=i + 1,
                operator=r.operator,
                op_class=r.op_class,
                accessed_offsets=r.accessed_offsets,
                reads=r.reads,
                compared_const=r.compared_const,
                cmp_result=r.cmp_result,
                triggered_jump=r.triggered_jump,
                loop_id=r.loop_id,
                loop_role=r.loop_role,
                api_call=r.api_call,
                pointer_arith=r.pointer_arith,
                value_snapshot=r.value_snapshot,
                operand_lineage=r.operand_lineage,
            )
            for i, r in enumerate(recs)
        ]
    message = Message("m", payload)
    trace = ExecutionTrace("m", tuple(recs))
    text = serialize_corpus([message], [trace])
    messages2, traces2 = load_text(text)
    assert messages2 == [message]
    assert traces2 == [trace]
