"""Interval invariant inference with SMT-guided path focusing."""

from .domain import Box, Interval
from .engine import AnalysisResult, EngineConfig, Mode, Verdict, analyze
from .ir import Program, default_cuts, parse_program

__all__ = [
    "AnalysisResult",
    "Box",
    "EngineConfig",
    "Interval",
    "Mode",
    "Program",
    "Verdict",
    "analyze",
    "default_cuts",
    "parse_program",
]

__version__ = "0.1.0"
