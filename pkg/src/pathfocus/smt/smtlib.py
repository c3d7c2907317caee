"""SMT-LIB2 printing and an external solver process backend."""

from __future__ import annotations

import os
import re
import shlex
import subprocess
from fractions import Fraction
from typing import Optional

from ..numeric import LinConstraint, Rel, Sort, integer_scaled
from .formula import (
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
    evaluate,
    free_vars,
)

DEFAULT_COMMAND = "z3 -in"
ENV_COMMAND = "PATHFOCUS_SMT"


class UnsupportedSort(ValueError):
    pass


class SolverSpawnError(RuntimeError):
    pass


class SolverProtocolError(RuntimeError):
    pass


_SIMPLE = re.compile(r"[A-Za-z~!@$%^&*_+=<>.?/-][A-Za-z0-9~!@$%^&*_+=<>.?/-]*\Z")
_RESERVED = {"true", "false", "and", "or", "not", "ite", "let", "assert", "par", "_", "!", "as"}


def symbol(name: str) -> str:
    if _SIMPLE.match(name) and name not in _RESERVED:
        return name
    if "|" in name or "\\" in name:
        raise ValueError(f"cannot quote symbol {name!r}")
    return f"|{name}|"


def _int(n: int) -> str:
    return str(n) if n >= 0 else f"(- {-n})"


class _Printer:
    def __init__(self, logic: str) -> None:
        self.logic = logic
        self.mixed = logic == "QF_LIRA"

    def var(self, v: SmtNumVar) -> str:
        s = symbol(v.name)
        if self.mixed and v.sort is Sort.INT:
            return f"(to_real {s})"
        return s

    def atom(self, c: LinConstraint) -> str:
        e = integer_scaled(c.expr)
        parts = [f"(* {_int(int(k))} {self.var(v)})" for v, k in e.terms]
        if e.const != 0 or not parts:
            parts.append(_int(int(e.const)))
        lhs = parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"
        op = {Rel.LE: "<=", Rel.LT: "<", Rel.EQ: "="}[c.rel]
        return f"({op} {lhs} 0)"

    def formula(self, f: Formula) -> str:
        if isinstance(f, BoolVar):
            return symbol(f.name)
        if isinstance(f, Const):
            return "true" if f.value else "false"
        if isinstance(f, Not):
            return f"(not {self.formula(f.arg)})"
        if isinstance(f, And):
            return "(and " + " ".join(self.formula(g) for g in f.args) + ")"
        if isinstance(f, Or):
            return "(or " + " ".join(self.formula(g) for g in f.args) + ")"
        if isinstance(f, Implies):
            return f"(=> {self.formula(f.lhs)} {self.formula(f.rhs)})"
        if isinstance(f, Iff):
            return f"(= {self.formula(f.lhs)} {self.formula(f.rhs)})"
        if isinstance(f, Atom):
            return self.atom(f.c)
        raise TypeError(f"not a formula: {f!r}")


def infer_logic(nums: list[SmtNumVar]) -> str:
    sorts = {v.sort for v in nums}
    if sorts == {Sort.INT}:
        return "QF_LIA"
    if Sort.INT in sorts:
        return "QF_LIRA"
    return "QF_LRA"


def to_smtlib2(f: Formula, logic: Optional[str] = None) -> str:
    """Render ``f`` as a self-contained SMT-LIB2 script.

    Atoms are printed in integer-scaled form ``(op (+ (* a x) ... k) 0)``.
    Mixed integer/rational formulas are emitted in QF_LIRA whatever ``logic``
    asked for; a pure logic that contradicts the variable sorts is rejected.
    """
    bools, nums = free_vars(f)
    inferred = infer_logic(nums)
    if logic is None or inferred == "QF_LIRA":
        logic = inferred
    elif logic not in ("QF_LRA", "QF_LIA", "QF_LIRA"):
        raise UnsupportedSort(f"unsupported logic {logic}")
    elif logic == "QF_LIA" and any(v.sort is Sort.RAT for v in nums):
        raise UnsupportedSort("rational variables in QF_LIA")
    elif logic == "QF_LRA" and any(v.sort is Sort.INT for v in nums):
        raise UnsupportedSort("integer variables in QF_LRA")
    p = _Printer(logic)
    lines = ["(set-option :produce-models true)", f"(set-logic {logic})"]
    decls: list[tuple[int, str]] = [(b.id, f"(declare-const {symbol(b.name)} Bool)") for b in bools]
    for v in nums:
        sort = "Int" if v.sort is Sort.INT else "Real"
        decls.append((v.id, f"(declare-const {symbol(v.name)} {sort})"))
    lines += [d for _, d in sorted(decls)]
    lines.append(f"(assert {p.formula(f)})")
    lines += ["(check-sat)", "(get-model)", "(exit)"]
    return "\n".join(lines) + "\n"


# -- output parsing -------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\()|(\))|(\|[^|]*\|)|(\"(?:[^\"]|\"\")*\")|([^\s()|\"]+))")


def parse_sexprs(text: str) -> list:
    out: list = []
    stack: list[list] = [out]
    pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip():
                raise SolverProtocolError(f"unexpected solver output near {text[pos:pos + 20]!r}")
            break
        pos = m.end()
        if m.group(1):
            stack.append([])
        elif m.group(2):
            if len(stack) == 1:
                raise SolverProtocolError("unbalanced parenthesis in solver output")
            done = stack.pop()
            stack[-1].append(done)
        elif m.group(3):
            stack[-1].append(m.group(3)[1:-1])
        elif m.group(4):
            stack[-1].append(m.group(4))
        else:
            stack[-1].append(m.group(5))
    if len(stack) != 1:
        raise SolverProtocolError("truncated solver output")
    return out


def _value(sx) -> Fraction | bool:
    if isinstance(sx, str):
        if sx == "true":
            return True
        if sx == "false":
            return False
        try:
            return Fraction(sx)
        except ValueError as exc:
            raise SolverProtocolError(f"bad numeral {sx!r}") from exc
    if len(sx) == 2 and sx[0] == "-":
        return -_value(sx[1])
    if len(sx) == 3 and sx[0] == "/":
        return _value(sx[1]) / _value(sx[2])
    if len(sx) == 2 and sx[0] == "to_real":
        return _value(sx[1])
    raise SolverProtocolError(f"unsupported model value {sx!r}")


def _read_model(sx, f: Formula) -> Model:
    bools, nums = free_vars(f)
    by_name = {b.name: b for b in bools}
    num_by_name = {v.name: v for v in nums}
    values: dict[str, Fraction | bool] = {}
    entries = sx[1:] if sx and sx[0] == "model" else sx
    for entry in entries:
        if isinstance(entry, list) and len(entry) == 5 and entry[0] == "define-fun" and entry[2] == []:
            values[entry[1]] = _value(entry[4])
    m = Model()
    for name, b in by_name.items():
        m.bools[b.id] = bool(values.get(name, False))
    for name, v in num_by_name.items():
        m.nums[v] = Fraction(values.get(name, Fraction(0)))
    return m


def default_command() -> str:
    return os.environ.get(ENV_COMMAND, DEFAULT_COMMAND)


def solve_external(f: Formula, cmd: Optional[str] = None, timeout_ms: int = 10_000) -> SolveResult:
    """Run an SMT-LIB2 solver process on ``f`` and parse its verdict and model."""
    argv = shlex.split(cmd if cmd is not None else default_command())
    if not argv:
        raise SolverSpawnError("empty solver command")
    script = to_smtlib2(f)
    try:
        proc = subprocess.run(
            argv, input=script, capture_output=True, text=True, timeout=timeout_ms / 1000
        )
    except subprocess.TimeoutExpired:
        return SolveResult(Status.UNKNOWN, reason="timeout")
    except OSError as exc:
        raise SolverSpawnError(f"cannot start {argv[0]!r}: {exc}") from exc
    sx = parse_sexprs(proc.stdout)
    if not sx or not isinstance(sx[0], str):
        raise SolverProtocolError(f"no verdict from solver (stderr: {proc.stderr.strip()[:200]})")
    verdict = sx[0]
    if verdict == "unsat":
        return SolveResult(Status.UNSAT)
    if verdict == "unknown":
        return SolveResult(Status.UNKNOWN, reason="solver answered unknown")
    if verdict != "sat":
        raise SolverProtocolError(f"unexpected verdict {verdict!r}")
    if len(sx) < 2 or not isinstance(sx[1], list):
        raise SolverProtocolError("sat answer without a model")
    model = _read_model(sx[1], f)
    if not evaluate(f, model):
        return SolveResult(Status.UNKNOWN, reason="model check failed")
    return SolveResult(Status.SAT, model=model)
