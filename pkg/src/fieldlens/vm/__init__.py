"""Deterministic parser-script VM that emits byte-level taint traces."""

from .machine import TermReason, VmRunReport, run
from .ops import ParserScript, ScriptError, parse_script
from .parsers import BundledParser, bundled_parsers

__all__ = [
    "BundledParser",
    "ParserScript",
    "ScriptError",
    "TermReason",
    "VmRunReport",
    "bundled_parsers",
    "parse_script",
    "run",
]
