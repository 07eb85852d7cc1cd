"""Randomized stopping rules and their extraction from solved value tables.

A stopping rule assigns each stage-n state a stop probability in [0, 1].
Optimal rules come out of the value tables by the sandwich rule: stop where
stopping is strictly cheaper than continuing, continue where it is strictly
dearer, and do anything where the two are tied (within the shared tolerance).
The final stage of a truncated rule always stops.

`sandwich_check` verifies that property on the reachable set only: states a
rule can actually arrive at with positive probability, which depends on the
rule alone, not on the model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO

import numpy as np

from .backward_induction import ValueTables
from .errors import SeqOptError
from .histories import StateSpace, state_space
from .model import Problem
from .tolerances import TIE_ATOL


@dataclass(eq=False)
class StoppingRule:
    """Per-stage stop probabilities over a state enumeration.

    stop_probs[i] covers stage i+1. A truncated rule's last stage is all ones.
    tie_states (when extracted from tables) lists, per covered stage, the
    state indices where stop and continue were tied.
    """

    engine: str
    stop_probs: list[np.ndarray]
    truncated: bool
    tie_states: list[np.ndarray] | None = None

    @property
    def horizon(self) -> int:
        return len(self.stop_probs)

    def at(self, n: int) -> np.ndarray:
        """Stop probabilities for stage n (1-based)."""
        if not 1 <= n <= self.horizon:
            raise IndexError(f"rule covers stages 1..{self.horizon}, asked for {n}")
        return self.stop_probs[n - 1]

    def with_prob(self, n: int, state: int, value: float) -> "StoppingRule":
        """Copy with one stop probability replaced."""
        probs = [a.copy() for a in self.stop_probs]
        probs[n - 1][state] = value
        return StoppingRule(self.engine, probs, self.truncated, self.tie_states)

    def blend(self, other: "StoppingRule", weight: float) -> "StoppingRule":
        """Pointwise mix: (1-weight) * self + weight * other."""
        if other.engine != self.engine or other.horizon != self.horizon:
            raise SeqOptError("can only blend rules over the same stages and engine")
        probs = [
            (1.0 - weight) * a + weight * b
            for a, b in zip(self.stop_probs, other.stop_probs)
        ]
        return StoppingRule(self.engine, probs, self.truncated and other.truncated)

    def to_csv(self, fh: IO[str], space: StateSpace) -> None:
        writer = csv.writer(fh)
        writer.writerow(["engine", "stage", "state", "stop_prob"])
        for n in range(1, self.horizon + 1):
            arr = self.at(n)
            for i in range(len(arr)):
                writer.writerow([self.engine, n, space.label(n, i), repr(float(arr[i]))])


def rule_from_csv(fh: IO[str], problem: Problem) -> StoppingRule:
    """Read a rule written by StoppingRule.to_csv; every state must be covered."""
    reader = csv.DictReader(fh)
    rows = list(reader)
    if not rows:
        raise SeqOptError("empty rule file")
    engines = {r["engine"] for r in rows}
    if len(engines) != 1:
        raise SeqOptError(f"rule file mixes engines: {sorted(engines)}")
    engine = engines.pop()
    space = state_space(problem, engine)
    horizon = max(int(r["stage"]) for r in rows)
    label_index = {
        (n, space.label(n, i)): i for n in range(1, horizon + 1) for i in range(space.n_states(n))
    }
    probs = [np.full(space.n_states(n), np.nan) for n in range(1, horizon + 1)]
    for r in rows:
        n = int(r["stage"])
        key = (n, r["state"])
        if key not in label_index:
            raise SeqOptError(f"rule references unknown state {r['state']!r} at stage {n}")
        v = float(r["stop_prob"])
        if not 0.0 <= v <= 1.0:
            raise SeqOptError(f"stop probability {v} outside [0, 1]")
        probs[n - 1][label_index[key]] = v
    for n, arr in enumerate(probs, start=1):
        if np.isnan(arr).any():
            raise SeqOptError(f"rule file leaves stage {n} states undefined")
    truncated = bool(np.all(probs[-1] == 1.0))
    return StoppingRule(engine, probs, truncated)


def extract_rule(tables: ValueTables, tie_policy: str | float = "stop") -> StoppingRule:
    """Optimal stopping rule from solved tables.

    Stop where stop_loss < cont - TIE_ATOL, continue where
    stop_loss > cont + TIE_ATOL, and on ties apply `tie_policy`: "stop",
    "continue", or a float in [0, 1] used as the stop probability there.
    The final stage always stops.
    """
    if isinstance(tie_policy, str):
        if tie_policy == "stop":
            gamma = 1.0
        elif tie_policy == "continue":
            gamma = 0.0
        else:
            raise SeqOptError(f"tie_policy must be 'stop', 'continue' or a float, got {tie_policy!r}")
    else:
        gamma = float(tie_policy)
        if not 0.0 <= gamma <= 1.0:
            raise SeqOptError(f"tie stop probability {gamma} outside [0, 1]")
    probs: list[np.ndarray] = []
    ties: list[np.ndarray] = []
    n_horizon = tables.horizon
    for n in range(1, n_horizon):
        st = tables.table.stage(n)
        diff = st.stop_loss - tables.cont[n]
        stop = diff < -TIE_ATOL
        cont = diff > TIE_ATOL
        tie = ~stop & ~cont
        arr = np.where(stop, 1.0, np.where(tie, gamma, 0.0))
        probs.append(arr)
        ties.append(np.flatnonzero(tie))
    probs.append(np.ones(tables.table.space.n_states(n_horizon)))
    ties.append(np.array([], dtype=np.int64))
    return StoppingRule(tables.engine, probs, truncated=True, tie_states=ties)


def truncate_rule(rule: StoppingRule, horizon: int, space: StateSpace | None = None) -> StoppingRule:
    """Force a rule to stop by `horizon`: keep stages below it, set the last to 1.

    Truncating a rule already truncated at or below `horizon` appends
    vacuously-reached all-ones stages, which needs a state space for sizes.
    Idempotent: truncating twice at the same horizon changes nothing.
    """
    if horizon < 1:
        raise SeqOptError("horizon must be >= 1")
    probs = [rule.stop_probs[i].copy() for i in range(min(horizon - 1, rule.horizon))]
    if len(probs) < horizon - 1:
        if not rule.truncated:
            raise SeqOptError(
                f"rule only covers stages 1..{rule.horizon}, cannot truncate at {horizon}"
            )
        if space is None:
            raise SeqOptError("extending a truncated rule needs the state space for stage sizes")
        for n in range(len(probs) + 1, horizon):
            probs.append(np.ones(space.n_states(n)))
    if space is not None:
        last = np.ones(space.n_states(horizon))
    elif rule.horizon >= horizon:
        last = np.ones_like(rule.stop_probs[horizon - 1])
    else:
        raise SeqOptError("extending a truncated rule needs the state space for stage sizes")
    probs.append(last)
    return StoppingRule(rule.engine, probs, truncated=True)


def reachable_sets(rule: StoppingRule, space: StateSpace) -> list[np.ndarray]:
    """Boolean mask per stage: states the rule reaches with positive weight.

    Reachability depends only on the rule: a state at stage n+1 is reachable
    iff some parent is reachable and the rule's stop probability there is
    strictly below 1. Every stage-1 state is reachable.
    """
    masks = [np.ones(space.n_states(1), dtype=bool)]
    for n in range(1, rule.horizon):
        children = space.children(n)
        alive = masks[-1] & (rule.at(n) < 1.0)
        nxt = np.zeros(space.n_states(n + 1), dtype=bool)
        for x in range(space.k):
            np.logical_or.at(nxt, children[:, x], alive)
        masks.append(nxt)
    return masks


@dataclass(frozen=True)
class SandwichViolation:
    stage: int
    state: int
    label: str
    stop_loss: float
    continue_value: float
    stop_prob: float


def sandwich_check(
    rule: StoppingRule, tables: ValueTables, eps: float = TIE_ATOL
) -> list[SandwichViolation]:
    """Violations of the optimal stop/continue pattern on the reachable set.

    A reachable state must stop (prob 1) where stopping is strictly cheaper,
    must continue (prob 0) where it is strictly dearer, and may do anything on
    a tie. Only stages with a continuation value are checked; the forced final
    stop of a truncated rule is structural.
    """
    if rule.horizon != tables.horizon:
        raise SeqOptError(
            f"rule horizon {rule.horizon} does not match tables horizon {tables.horizon}"
        )
    space = tables.table.space
    masks = reachable_sets(rule, space)
    out: list[SandwichViolation] = []
    for n in range(1, tables.horizon):
        st = tables.table.stage(n)
        cont = tables.cont[n]
        probs = rule.at(n)
        diff = st.stop_loss - cont
        must_stop = diff < -eps
        must_cont = diff > eps
        bad = masks[n - 1] & ((must_stop & (probs < 1.0)) | (must_cont & (probs > 0.0)))
        for i in np.flatnonzero(bad):
            out.append(
                SandwichViolation(
                    n, int(i), space.label(n, int(i)),
                    float(st.stop_loss[i]), float(cont[i]), float(probs[i]),
                )
            )
    return out
