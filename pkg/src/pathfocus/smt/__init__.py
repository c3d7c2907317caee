"""Formulas, the internal DPLL(T) solver and the SMT-LIB2 backend."""

from .formula import (
    FALSE,
    TRUE,
    And,
    Atom,
    BoolVar,
    Const,
    Formula,
    Iff,
    Implies,
    Model,
    Not,
    Or,
    SmtNumVar,
    SolveResult,
    Status,
    VarPool,
    conj,
    disj,
    evaluate,
    free_vars,
    neg,
)
from .simplex import branch_and_bound, check as simplex_check
from .smtlib import (
    SolverProtocolError,
    SolverSpawnError,
    UnsupportedSort,
    solve_external,
    to_smtlib2,
)
from .solver import solve

__all__ = [
    "FALSE", "TRUE", "And", "Atom", "BoolVar", "Const", "Formula", "Iff", "Implies",
    "Model", "Not", "Or", "SmtNumVar", "SolveResult", "Status", "VarPool", "conj",
    "disj", "evaluate", "free_vars", "neg", "branch_and_bound", "simplex_check",
    "SolverProtocolError", "SolverSpawnError", "UnsupportedSort", "solve_external",
    "to_smtlib2", "solve",
]
