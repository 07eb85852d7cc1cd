"""Backward induction over observation histories.

For a horizon N the solver computes, per history h of length n, two density-
scale quantities:

    value[N][h]    = stop_loss(h)                        (best achievable at n = N)
    cont[n][h]     = c * f_pi2(h) + sum_x value[n+1][h + (x,)]
    value[n][h]    = min(stop_loss(h), cont[n][h])

The stage-0 continuation value cont[0] (a scalar: f_pi2 of the empty history
is 1) is the minimal combined risk, observation cost plus terminal loss, over
every procedure that stops by N. Comparing it with the stage-0 loss says
whether observing at all is worth the cost.

Horizon doubling ("limit mode") tracks cont[0] as N doubles and stops when the
decrease falls below a tolerance; cont[0] is non-increasing in N, so the trace
is a convergence diagnostic, not a heuristic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .errors import SeqOptError

from .bayes_decision import HistoryTable
from .histories import DEFAULT_STATE_BUDGET, check_state_budget
from .model import Problem


@dataclass(eq=False)
class ValueTables:
    """Solved value and continuation arrays for one horizon.

    value[n] and cont[n] are per-state arrays aligned with the table's state
    enumeration; cont has entries for stages 0..N-1, value for 0..N. The
    `q0_trace` / `converged` fields are filled by limit mode.
    """

    problem: Problem
    table: HistoryTable
    horizon: int
    value: list[np.ndarray]
    cont: list[np.ndarray]
    q0_trace: list[tuple[int, float]] = field(default_factory=list)
    converged: bool | None = None
    tol: float | None = None

    @property
    def engine(self) -> str:
        return self.table.engine

    @property
    def q0(self) -> float:
        """Minimal combined risk over procedures truncated at the horizon."""
        return float(self.cont[0][0])

    @property
    def v0(self) -> float:
        """Minimum of q0 and the no-observation stage loss."""
        return float(self.value[0][0])

    @property
    def l0(self) -> float:
        return self.table.l0

    def rows(self):
        """(stage, state label, stop_loss, cont, value) for every state."""
        for n in range(self.horizon + 1):
            st = self.table.stage(n)
            cont_n = self.cont[n] if n < self.horizon else None
            for i in range(len(st.stop_loss)):
                yield (
                    n,
                    self.table.space.label(n, i),
                    float(st.stop_loss[i]),
                    float(cont_n[i]) if cont_n is not None else None,
                    float(self.value[n][i]),
                )

    def to_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh)
        writer.writerow(["stage", "state", "stop_loss", "continue_value", "value"])
        for stage, label, stop_loss, cont, value in self.rows():
            writer.writerow([stage, label, repr(stop_loss), "" if cont is None else repr(cont), repr(value)])


def solve_truncated(
    p: Problem,
    horizon: int,
    engine: str = "auto",
    table: HistoryTable | None = None,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> ValueTables:
    """Solve the horizon-N problem exactly.

    The returned tables are exact for the class of procedures that stop by
    `horizon`; any stopping rule whose stop set matches the value comparison
    (see stopping_policy.extract_rule) attains cont[0].
    """
    if horizon < 1:
        raise SeqOptError("horizon must be >= 1")
    if table is None:
        table = HistoryTable(p, engine)
    check_state_budget(table.space, horizon, state_budget)
    c = p.cost.c
    value: list[np.ndarray | None] = [None] * (horizon + 1)
    cont: list[np.ndarray | None] = [None] * horizon
    value[horizon] = table.stage(horizon).stop_loss.copy()
    for n in range(horizon - 1, -1, -1):
        st = table.stage(n)
        children = table.space.children(n)
        cont_n = c * st.f_pi2 + value[n + 1][children].sum(axis=1)
        value[n] = np.minimum(st.stop_loss, cont_n)
        cont[n] = cont_n
    return ValueTables(p, table, horizon, value, cont)


def solve_limit(
    p: Problem,
    tol: float = 1e-10,
    n_start: int = 1,
    n_cap: int = 256,
    engine: str = "auto",
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> ValueTables:
    """Approach the unbounded-horizon optimum by horizon doubling.

    Solves at n_start, 2*n_start, 4*n_start, ... and stops when consecutive
    cont[0] values differ by less than `tol`, or when doubling again would
    pass `n_cap`. A run that exhausts the cap without meeting the tolerance
    returns the last tables with converged=False; that is a flagged result,
    not a failure, since cont[0] decreases monotonically and the trace shows
    how far it got.
    """
    if n_start < 1:
        raise SeqOptError("n_start must be >= 1")
    table = HistoryTable(p, engine)
    trace: list[tuple[int, float]] = []
    horizon = n_start
    tables = solve_truncated(p, horizon, table=table, state_budget=state_budget)
    trace.append((horizon, tables.q0))
    converged = False
    while True:
        nxt = horizon * 2
        if nxt > n_cap:
            break
        nxt_tables = solve_truncated(p, nxt, table=table, state_budget=state_budget)
        trace.append((nxt, nxt_tables.q0))
        gap = trace[-2][1] - trace[-1][1]
        horizon, tables = nxt, nxt_tables
        if abs(gap) < tol:
            converged = True
            break
    tables.q0_trace = trace
    tables.converged = converged
    tables.tol = tol
    return tables


def should_take_observations(tables: ValueTables) -> tuple[bool, float]:
    """Whether observing beats deciding immediately, with the margin.

    Returns (observe, margin) where margin = stage0 loss - cont[0]. A
    nonnegative margin means some observation plan is worth its cost.
    """
    margin = tables.l0 - tables.q0
    return margin >= 0, float(margin)
