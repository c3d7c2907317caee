import json
import shutil
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import BENCHMARKS, bench
from pathfocus.cli import main
from pathfocus.domain import Box, Interval
from pathfocus.numeric import ExtRat, Sort, VarId
from pathfocus.report import boxes_from_json, parse_box, render_box

GOLDEN = Path(__file__).parent / "golden"

STRICT = """vars x: rat;
node a init {x < 0.01, x > -0.5};
node b;
from a to b { assume x < 0; };
"""


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestAnalyze:
    def test_pathfocus_text(self, capsys):
        code, out, _ = cli(capsys, "analyze", "circular", "--engine", "pathfocus")
        assert code == 0
        assert "p2: 0 <= x, x <= 99" in out

    def test_classical_text(self, capsys):
        code, out, _ = cli(capsys, "analyze", "circular.pfa", "--engine", "classical")
        assert code == 0
        line = next(l for l in out.splitlines() if l.startswith("p2:"))
        assert line == "p2: 0 <= x"

    def test_file_path(self, capsys, tmp_path):
        f = tmp_path / "prog.pfa"
        f.write_text(STRICT)
        code, out, _ = cli(capsys, "analyze", str(f), "--format", "json")
        assert code == 0
        assert json.loads(out)["program"] == "prog"

    def test_missing(self, capsys):
        code, _, err = cli(capsys, "analyze", "missing.pfa")
        assert code == 2 and "missing.pfa" in err

    def test_parse_error(self, capsys, tmp_path):
        f = tmp_path / "bad.pfa"
        f.write_text("vars x: int;\nnode a init {x <= };\n")
        code, _, err = cli(capsys, "analyze", str(f))
        assert code == 2 and "bad.pfa:2:" in err

    @pytest.mark.parametrize("flags", [["--narrow", "11"], ["--engine", "fast"], ["--budget", "0"], ["--pr-extra", "nowhere"]])
    def test_usage_errors(self, capsys, flags):
        code, _, _ = cli(capsys, "analyze", "circular", *flags)
        assert code == 2

    def test_unproved_assertion_exits_one(self, capsys, tmp_path):
        f = tmp_path / "a.pfa"
        f.write_text("vars x: int; node a init {x >= 0} assert {x <= 5}; from a to a { x := x + 1; };")
        code, out, _ = cli(capsys, "analyze", str(f))
        assert code == 1 and "unknown" in out

    def test_solver_failure_exits_three(self, capsys):
        code, _, err = cli(capsys, "analyze", "circular", "--solver", "external:/nonexistent/solver")
        assert code == 3 and "solver" in err

    def test_budget_exhaustion_exits_three(self, capsys):
        code, _, _ = cli(capsys, "analyze", "circular", "--engine", "classical", "--budget", "1")
        assert code == 3

    def test_sinc_proved(self, capsys):
        code, out, _ = cli(capsys, "analyze", "sinc", "--format", "json")
        data = json.loads(out)
        assert code == 0
        assert {a["verdict"] for a in data["assertions"]} == {"proved"}

    def test_accel(self, capsys):
        code, out, _ = cli(capsys, "analyze", "circular", "--engine", "selfloops", "--accel")
        assert code == 0 and "p2: 0 <= x, x <= 99" in out

    def test_pr_extra(self, capsys):
        code, out, _ = cli(capsys, "analyze", "circular", "--pr-extra", "p3", "--format", "json")
        nodes = {n["name"]: n["constraints"] for n in json.loads(out)["nodes"]}
        assert code == 0 and nodes["p3"] == ["1 <= x", "x <= 100"]

    def test_dump_smt(self, capsys, tmp_path):
        code, out, _ = cli(capsys, "analyze", "circular", "--dump-smt", str(tmp_path), "--format", "json")
        files = sorted(tmp_path.glob("*.smt2"))
        assert code == 0 and len(files) == json.loads(out)["stats"]["solverCalls"]
        assert files[0].read_text().startswith("(set-option :produce-models true)")

    def test_benchmarks_listing(self, capsys):
        code, out, _ = cli(capsys, "benchmarks")
        assert code == 0 and out.split() == sorted(BENCHMARKS)


class TestJson:
    def test_schema(self, capsys):
        _, out, _ = cli(capsys, "analyze", "circular", "--format", "json")
        data = json.loads(out)
        assert set(data) == {"program", "engine", "inductive", "nodes", "assertions", "stats"}
        assert set(data["stats"]) == {"solverCalls", "widenings", "paths", "wallMs"}
        assert data["stats"]["wallMs"] is None
        for n in data["nodes"]:
            assert set(n) == {"name", "constraints", "bottom"}
        assert {"name": "p2", "constraints": ["0 <= x", "x <= 99"], "bottom": False} in data["nodes"]

    def test_timing_flag(self, capsys):
        _, out, _ = cli(capsys, "analyze", "circular", "--format", "json", "--timing")
        assert isinstance(json.loads(out)["stats"]["wallMs"], float)

    def test_strict_rational_golden(self, capsys, tmp_path):
        f = tmp_path / "strict.pfa"
        f.write_text(STRICT)
        _, out, _ = cli(capsys, "analyze", str(f), "--format", "json")
        assert out == (GOLDEN / "strict.json").read_text()
        a = next(n for n in json.loads(out)["nodes"] if n["name"] == "a")
        assert "100*x < 1" in a["constraints"]

    def test_bottom_node(self, capsys, tmp_path):
        f = tmp_path / "dead.pfa"
        f.write_text("vars x: int; node a init {}; node n; from a to n { assume x < 0; assume x > 0; };")
        _, out, _ = cli(capsys, "analyze", str(f), "--format", "json")
        assert {"name": "n", "constraints": [], "bottom": True} in json.loads(out)["nodes"]

    @pytest.mark.parametrize("name", BENCHMARKS)
    def test_round_trip(self, capsys, name):
        _, out, _ = cli(capsys, "analyze", name, "--engine", "selfloops", "--format", "json")
        data = json.loads(out)
        p = bench(name)
        from pathfocus.engine import EngineConfig, Mode, analyze

        r = analyze(p, EngineConfig(mode=Mode.SELFLOOPS))
        boxes = boxes_from_json(p, data)
        assert boxes == {p.nodes[n].name: b for n, b in r.invariants.items()}

    def test_no_floats(self, capsys):
        _, out, _ = cli(capsys, "analyze", "sinc", "--format", "json")
        for n in json.loads(out)["nodes"]:
            for c in n["constraints"]:
                assert "." not in c

    def test_deterministic_bytes(self, capsys):
        first = cli(capsys, "analyze", "boustrophedon", "--engine", "compare", "--format", "json")[1]
        second = cli(capsys, "analyze", "boustrophedon", "--engine", "compare", "--format", "json")[1]
        assert first == second


class TestCompare:
    def test_text_table(self, capsys):
        code, out, _ = cli(capsys, "analyze", "ratelimiter", "--engine", "compare")
        assert code == 0
        assert "pathfocus within classical: yes" in out
        assert "selfloops within classical: yes" in out

    @pytest.mark.parametrize("name", BENCHMARKS)
    def test_precision_ordering(self, capsys, name):
        _, out, _ = cli(capsys, "analyze", name, "--engine", "compare", "--format", "json")
        data = json.loads(out)
        assert [r["engine"] for r in data["runs"]] == ["classical", "pathfocus", "selfloops"]
        assert data["withinClassical"] == {"pathfocus": True, "selfloops": True}


# -- rendering round trip over arbitrary boxes ----------------------------------------

VS = (VarId(0, "x", Sort.RAT), VarId(1, "y", Sort.RAT))
bounds = st.one_of(st.none(), st.fractions(min_value=-1000, max_value=1000, max_denominator=300))


@st.composite
def boxes(draw):
    items = {}
    for v in VS:
        lo, hi = draw(bounds), draw(bounds)
        if lo is not None and hi is not None and hi < lo:
            lo, hi = hi, lo
        items[v] = Interval(
            ExtRat.of(lo) if lo is not None else Interval().lo,
            ExtRat.of(hi) if hi is not None else Interval().hi,
            draw(st.booleans()) and lo is not None,
            draw(st.booleans()) and hi is not None,
        )
    return Box.of(VS, items)


@given(boxes())
def test_render_parse_round_trip(b):
    assert parse_box(VS, render_box(b), b.is_bottom) == b


@given(boxes())
def test_render_is_integer_scaled(b):
    for c in render_box(b):
        for token in c.replace("*", " ").split():
            assert token in ("<", "<=", "x", "y") or token.lstrip("-").isdigit()


def test_render_examples():
    x = VS[0]
    b = Box.of(VS, {x: Interval(ExtRat.of(Fraction(-1, 2)), ExtRat.of(Fraction(1, 100)), True, True)})
    assert render_box(b) == ["-1 < 2*x", "100*x < 1"]


@pytest.mark.skipif(shutil.which("pathfocus") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["pathfocus", "analyze", "circular"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0 and "p2: 0 <= x, x <= 99" in proc.stdout


def test_module_entry():
    proc = subprocess.run(
        [sys.executable, "-m", "pathfocus.cli", "analyze", "circular", "--engine", "classical"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0 and "p2: 0 <= x\n" in proc.stdout
