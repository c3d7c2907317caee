"""CDCL SAT solver with a lazy theory hook.

Literals are non-zero ints (``v`` / ``-v``).  Decisions always pick the
lowest-indexed unassigned variable and try ``False`` first, so runs are
reproducible.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

# theory(final) -> conflict clause (all literals false under the trail) or None
TheoryHook = Callable[[bool], Optional[list[int]]]


class BudgetExceeded(Exception):
    pass


class SatSolver:
    def __init__(self, nvars: int) -> None:
        self.n = nvars
        self.value = [0] * (nvars + 1)  # +1 true, -1 false, 0 unassigned
        self.level = [0] * (nvars + 1)
        self.reason: list[Optional[list[int]]] = [None] * (nvars + 1)
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.watches: dict[int, list[list[int]]] = {}
        self.ok = True
        self.steps = 0

    def lit_value(self, lit: int) -> int:
        v = self.value[abs(lit)]
        return v if lit > 0 else -v

    @property
    def decision_level(self) -> int:
        return len(self.trail_lim)

    def _enqueue(self, lit: int, reason: Optional[list[int]]) -> bool:
        val = self.lit_value(lit)
        if val != 0:
            return val > 0
        v = abs(lit)
        self.value[v] = 1 if lit > 0 else -1
        self.level[v] = self.decision_level
        self.reason[v] = reason
        self.trail.append(lit)
        return True

    def _watch(self, clause: list[int]) -> None:
        for lit in clause[:2]:
            self.watches.setdefault(-lit, []).append(clause)

    def add_clause(self, lits: Sequence[int]) -> None:
        """Add a problem clause; only valid before :meth:`solve` at level 0."""
        if not self.ok:
            return
        clause: list[int] = []
        for lit in lits:
            if -lit in clause:
                return
            if lit not in clause:
                clause.append(lit)
        clause = [lit for lit in clause if self.lit_value(lit) >= 0]
        if any(self.lit_value(lit) > 0 for lit in clause):
            return
        if not clause:
            self.ok = False
        elif len(clause) == 1:
            if not self._enqueue(clause[0], None) or self._propagate() is not None:
                self.ok = False
        else:
            self._watch(clause)

    def _propagate(self) -> Optional[list[int]]:
        while self.qhead < len(self.trail):
            lit = self.trail[self.qhead]
            self.qhead += 1
            # clauses watching -lit (now false) are stored under key lit
            ws = self.watches.get(lit, [])
            i = 0
            while i < len(ws):
                clause = ws[i]
                false_lit = -lit
                if clause[0] == false_lit:
                    clause[0], clause[1] = clause[1], clause[0]
                if self.lit_value(clause[0]) > 0:
                    i += 1
                    continue
                moved = False
                for k in range(2, len(clause)):
                    if self.lit_value(clause[k]) >= 0:
                        clause[1], clause[k] = clause[k], clause[1]
                        self.watches.setdefault(-clause[1], []).append(clause)
                        ws[i] = ws[-1]
                        ws.pop()
                        moved = True
                        break
                if moved:
                    continue
                if self.lit_value(clause[0]) < 0:
                    self.qhead = len(self.trail)
                    return clause
                self._enqueue(clause[0], clause)
                i += 1
        return None

    def _backtrack(self, level: int) -> None:
        if self.decision_level <= level:
            return
        start = self.trail_lim[level]
        for lit in self.trail[start:]:
            v = abs(lit)
            self.value[v] = 0
            self.reason[v] = None
        del self.trail[start:]
        del self.trail_lim[level:]
        self.qhead = len(self.trail)

    def _analyze(self, conflict: list[int]) -> tuple[list[int], int]:
        cur = self.decision_level
        seen: set[int] = set()
        learnt: list[int] = [0]
        counter = 0
        p = 0
        idx = len(self.trail) - 1
        clause = conflict
        while True:
            for q in clause:
                if q == p:
                    continue
                v = abs(q)
                if v in seen or self.level[v] == 0:
                    continue
                seen.add(v)
                if self.level[v] >= cur:
                    counter += 1
                else:
                    learnt.append(q)
            while abs(self.trail[idx]) not in seen:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            counter -= 1
            if counter == 0:
                break
            reason = self.reason[abs(p)]
            assert reason is not None
            clause = reason
        learnt[0] = -p
        if len(learnt) == 1:
            return learnt, 0
        best = max(range(1, len(learnt)), key=lambda k: self.level[abs(learnt[k])])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, self.level[abs(learnt[1])]

    def _handle_conflict(self, conflict: list[int]) -> bool:
        """Learn from a conflicting clause and backjump; False means unsat."""
        top = max((self.level[abs(lit)] for lit in conflict), default=0)
        if top == 0:
            return False
        self._backtrack(top)
        learnt, bj = self._analyze(conflict)
        self._backtrack(bj)
        if len(learnt) == 1:
            self._enqueue(learnt[0], None)
        else:
            self._watch(learnt)
            self._enqueue(learnt[0], learnt)
        return True

    def solve(self, theory: Optional[TheoryHook] = None, budget: int = 1_000_000) -> bool:
        """True if satisfiable; the assignment is then in :attr:`value`."""
        if not self.ok:
            return False
        while True:
            conflict = self._propagate()
            if conflict is None and theory is not None:
                final = len(self.trail) == self.n
                conflict = theory(final)
            if conflict is not None:
                self.steps += 1
                if self.steps > budget:
                    raise BudgetExceeded()
                if not self._handle_conflict(conflict):
                    self.ok = False
                    return False
                continue
            if len(self.trail) == self.n:
                return True
            var = next(v for v in range(1, self.n + 1) if self.value[v] == 0)
            self.steps += 1
            if self.steps > budget:
                raise BudgetExceeded()
            self.trail_lim.append(len(self.trail))
            self._enqueue(-var, None)
