"""Text and JSON rendering of analysis results."""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Iterable, Optional

from .domain import Box, Interval, includes
from .engine import AnalysisResult
from .ir import Program
from .numeric import ExtRat, LinConstraint, Rel, VarId, integer_scaled


def _scaled(v: VarId, q: Fraction) -> tuple[str, str]:
    """Render ``x`` against ``q`` as ``(k*x, n)`` with coprime integers."""
    den = q.denominator
    var = v.name if den == 1 else f"{den}*{v.name}"
    return var, str(q.numerator)


def render_box(box: Box) -> list[str]:
    """One constraint per finite bound, in variable order, lower bound first."""
    if box.is_bottom:
        return []
    out: list[str] = []
    for v in box.variables:
        itv = box[v]
        if itv.lo.is_finite:
            var, num = _scaled(v, itv.lo.value)
            out.append(f"{num} {'<' if itv.strict_lo else '<='} {var}")
        if itv.hi.is_finite:
            var, num = _scaled(v, itv.hi.value)
            out.append(f"{var} {'<' if itv.strict_hi else '<='} {num}")
    return out


def box_summary(box: Box) -> str:
    if box.is_bottom:
        return "false"
    cs = render_box(box)
    return ", ".join(cs) if cs else "true"


_LOWER = re.compile(r"^(-?\d+) (<=|<) (?:(\d+)\*)?([A-Za-z_][A-Za-z_0-9']*)$")
_UPPER = re.compile(r"^(?:(\d+)\*)?([A-Za-z_][A-Za-z_0-9']*) (<=|<) (-?\d+)$")


def parse_box(variables: Iterable[VarId], constraints: list[str], bottom: bool) -> Box:
    """Inverse of :func:`render_box`."""
    variables = tuple(variables)
    if bottom:
        return Box.bottom(variables)
    bounds: dict[str, Interval] = {}
    for text in constraints:
        m = _LOWER.match(text)
        if m:
            num, op, den, name = m.groups()
            itv = bounds.get(name, Interval())
            bounds[name] = Interval(ExtRat.of(Fraction(int(num), int(den or 1))), itv.hi, op == "<", itv.strict_hi)
            continue
        m = _UPPER.match(text)
        if m:
            den, name, op, num = m.groups()
            itv = bounds.get(name, Interval())
            bounds[name] = Interval(itv.lo, ExtRat.of(Fraction(int(num), int(den or 1))), itv.strict_lo, op == "<")
            continue
        raise ValueError(f"unrecognised bound {text!r}")
    return Box.of(variables, bounds)


def render_constraint(c: LinConstraint) -> str:
    """Integer-scaled ``terms op constant`` with a positive leading coefficient."""
    e = integer_scaled(c.expr)
    ops = {Rel.LE: "<=", Rel.LT: "<", Rel.EQ: "="}
    flipped = {Rel.LE: ">=", Rel.LT: ">", Rel.EQ: "="}
    op = ops[c.rel]
    if e.terms and e.terms[0][1] < 0:
        e = -e
        op = flipped[c.rel]
    parts = []
    for v, k in e.terms:
        k = int(k)
        mono = v.name if abs(k) == 1 else f"{abs(k)}*{v.name}"
        if not parts:
            parts.append(mono if k > 0 else f"-{mono}")
        else:
            parts.append(f"+ {mono}" if k > 0 else f"- {mono}")
    lhs = " ".join(parts) if parts else "0"
    return f"{lhs} {op} {-int(e.const)}"


def _nodes(result: AnalysisResult) -> list[dict]:
    p = result.program
    return [
        {"name": p.nodes[n].name, "constraints": render_box(b), "bottom": b.is_bottom}
        for n, b in sorted(result.invariants.items())
    ]


def _assertions(result: AnalysisResult) -> list[dict]:
    p = result.program
    return [
        {"node": p.nodes[n].name, "index": i, "verdict": v.value}
        for (n, i), v in sorted(result.assertions.items())
    ]


def result_dict(result: AnalysisResult, timing: bool = False) -> dict:
    s = result.stats
    return {
        "program": result.program.name,
        "engine": result.mode.value,
        "inductive": result.inductive,
        "nodes": _nodes(result),
        "assertions": _assertions(result),
        "stats": {
            "solverCalls": s.solver_calls,
            "widenings": s.widenings,
            "paths": s.paths,
            "wallMs": round(s.wall_ms, 3) if timing else None,
        },
    }


def render_json(result: AnalysisResult, timing: bool = False) -> str:
    return json.dumps(result_dict(result, timing), indent=2) + "\n"


def render_text(result: AnalysisResult, timing: bool = False) -> str:
    p = result.program
    lines = [f"program {p.name}, engine {result.mode.value}"]
    for n, b in sorted(result.invariants.items()):
        lines.append(f"{p.nodes[n].name}: {box_summary(b)}")
    for (n, i), v in sorted(result.assertions.items()):
        c = p.nodes[n].assertions[i]
        lines.append(f"assert {p.nodes[n].name}[{i}] {render_constraint(c)}: {v.value}")
    s = result.stats
    stats = f"solver calls {s.solver_calls}, widenings {s.widenings}, paths {s.paths}"
    if timing:
        stats += f", {s.wall_ms:.1f} ms"
    lines.append(stats)
    lines.append(f"inductive: {'yes' if result.inductive else 'NO'}")
    for d in result.diagnostics:
        lines.append(f"note: {d}")
    return "\n".join(lines) + "\n"


def precision_ordering(results: list[AnalysisResult]) -> dict[str, bool]:
    """For each non-classical run, whether it is at least as tight as the classical one everywhere."""
    base: Optional[AnalysisResult] = next((r for r in results if r.mode.value == "classical"), None)
    out: dict[str, bool] = {}
    if base is None:
        return out
    for r in results:
        if r is base:
            continue
        out[r.mode.value] = all(includes(base.invariants[n], r.invariants[n]) for n in r.invariants)
    return out


def render_compare_text(results: list[AnalysisResult]) -> str:
    p = results[0].program
    header = ["node"] + [r.mode.value for r in results]
    rows = [header]
    for n in sorted(results[0].invariants):
        rows.append([p.nodes[n].name] + [box_summary(r.invariants[n]) for r in results])
    widths = [max(len(row[k]) for row in rows) for k in range(len(header))]
    lines = [f"program {p.name}, engine comparison"]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    for mode, ok in precision_ordering(results).items():
        lines.append(f"{mode} within classical: {'yes' if ok else 'no'}")
    for r in results:
        lines.append(f"{r.mode.value}: inductive {'yes' if r.inductive else 'NO'}, solver calls {r.stats.solver_calls}, widenings {r.stats.widenings}")
    return "\n".join(lines) + "\n"


def render_compare_json(results: list[AnalysisResult], timing: bool = False) -> str:
    data = {
        "program": results[0].program.name,
        "engine": "compare",
        "runs": [result_dict(r, timing) for r in results],
        "withinClassical": precision_ordering(results),
    }
    return json.dumps(data, indent=2) + "\n"


def boxes_from_json(program: Program, data: dict) -> dict[str, Box]:
    return {
        node["name"]: parse_box(program.variables, node["constraints"], node["bottom"])
        for node in data["nodes"]
    }


__all__ = [
    "box_summary",
    "boxes_from_json",
    "parse_box",
    "precision_ordering",
    "render_box",
    "render_compare_json",
    "render_compare_text",
    "render_json",
    "render_text",
    "result_dict",
]
