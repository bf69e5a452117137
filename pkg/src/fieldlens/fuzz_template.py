"""Export final annotations as a generic generation-fuzzer template.

The template is plain JSON: one entry per field with its byte range, the
inferred type and functions, and a ``kind`` a template-driven fuzzer can map
onto its primitives.  Fields we could not classify become ``random`` entries
that keep their boundaries.
"""

from __future__ import annotations

import json
from typing import Mapping, Sequence

from .detectors import FieldAnnotation, SemanticFunction, SemanticType
from .model import Message

_TYPE_KINDS = {
    SemanticType.STATIC: "static",
    SemanticType.INTEGER: "integer",
    SemanticType.GROUP: "group",
    SemanticType.BYTES: "bytes",
    SemanticType.STRING: "string",
    SemanticType.UNKNOWN: "random",
}


def _entry(
    ann: FieldAnnotation,
    message: Message,
    group_values: Mapping[tuple[int, int], list[str]],
) -> dict:
    f = ann.field
    rng = (f.start, f.end)
    value = message.data[f.start : f.end + 1]
    funcs = sorted(fn.name for fn in ann.inferred_functions)
    entry: dict = {
        "start": f.start,
        "end": f.end,
        "type": ann.inferred_type.name,
        "functions": funcs,
    }
    if SemanticFunction.LENGTH in ann.inferred_functions:
        entry["kind"] = "size-of"
        entry["of"] = {"start": f.end + 1, "end": len(message) - 1}
    elif SemanticFunction.CHECKSUM in ann.inferred_functions:
        entry["kind"] = "checksum"
    elif SemanticFunction.FILENAME in ann.inferred_functions:
        entry["kind"] = "filename"
    elif SemanticFunction.DELIM in ann.inferred_functions:
        entry["kind"] = "delim"
        entry["value"] = value.hex()
    else:
        entry["kind"] = _TYPE_KINDS[ann.inferred_type]
    if entry["kind"] == "static":
        entry["value"] = value.hex()
    elif entry["kind"] == "group":
        entry["values"] = group_values.get(rng, [value.hex()])
    return entry


def build_template(
    annotations: Mapping[str, Sequence[FieldAnnotation]],
    messages: Mapping[str, Message],
) -> dict:
    """Template document for every annotated message."""
    # group fields enumerate the distinct values observed across the corpus
    group_values: dict[tuple[int, int], list[str]] = {}
    for mid, anns in annotations.items():
        msg = messages[mid]
        for ann in anns:
            if ann.inferred_type is SemanticType.GROUP:
                rng = (ann.field.start, ann.field.end)
                hexval = msg.data[ann.field.start : ann.field.end + 1].hex()
                vals = group_values.setdefault(rng, [])
                if hexval not in vals:
                    vals.append(hexval)
    for vals in group_values.values():
        vals.sort()

    docs = []
    for mid in sorted(annotations):
        msg = messages[mid]
        docs.append(
            {
                "id": mid,
                "length": len(msg),
                "fields": [
                    _entry(ann, msg, group_values) for ann in annotations[mid]
                ],
            }
        )
    return {"format": "fieldlens-fuzz-template", "version": 1, "messages": docs}


def export_fuzz_template(
    annotations: Mapping[str, Sequence[FieldAnnotation]],
    messages: Mapping[str, Message],
    path,
) -> None:
    doc = build_template(annotations, messages)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
