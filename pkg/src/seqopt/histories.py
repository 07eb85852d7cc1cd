"""State-space engines enumerating observation histories stage by stage.

Two engines share one interface:

- "tree": states at stage n are the K^n raw histories in lexicographic order.
  Valid for any model; exponential in n.
- "counts": states are symbol-count vectors, iid models only. Exchangeability
  makes every per-history quantity a function of the counts, so the stage size
  is C(n+K-1, K-1), polynomial in n.

Per stage n the interface provides the state count, the child index of each
(state, symbol) pair at stage n+1, the conditional step probabilities
step[s, theta, x], the number of histories collapsed into each state (mult),
and a printable label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, SeqOptError
from .model import Problem

DEFAULT_STATE_BUDGET = 4_000_000


class TreeStateSpace:
    engine = "tree"

    def __init__(self, problem: Problem):
        self.problem = problem
        self.k = problem.alphabet_size
        self._step_cache: dict[int, np.ndarray] = {}

    def n_states(self, n: int) -> int:
        return self.k**n

    def children(self, n: int) -> np.ndarray:
        s = self.n_states(n)
        return np.arange(s, dtype=np.int64)[:, None] * self.k + np.arange(self.k, dtype=np.int64)

    def history(self, n: int, idx: int) -> tuple[int, ...]:
        digits = []
        for _ in range(n):
            digits.append(idx % self.k)
            idx //= self.k
        return tuple(reversed(digits))

    def step_probs(self, n: int) -> np.ndarray:
        """Conditional pmf of the next symbol, shape (S_n, m, K)."""
        p = self.problem
        if p.obs.kind == "iid":
            s = self.n_states(n)
            return np.broadcast_to(p.obs.iid_pmf[None, :, :], (s, p.n_params, self.k))
        if n not in self._step_cache:
            s = self.n_states(n)
            out = np.empty((s, p.n_params, self.k))
            for i in range(s):
                h = self.history(n, i)
                for t in range(p.n_params):
                    out[i, t, :] = p.obs.conditional_pmf(t, h)
            self._step_cache[n] = out
        return self._step_cache[n]

    def mult(self, n: int) -> np.ndarray:
        return np.ones(self.n_states(n))

    def label(self, n: int, idx: int) -> str:
        return ",".join(str(x) for x in self.history(n, idx))


class CountStateSpace:
    engine = "counts"

    def __init__(self, problem: Problem):
        if problem.obs.kind != "iid":
            raise SeqOptError("count-vector engine requires an iid model")
        self.problem = problem
        self.k = problem.alphabet_size
        self._states: dict[int, list[tuple[int, ...]]] = {0: [(0,) * self.k]}
        self._index: dict[int, dict[tuple[int, ...], int]] = {0: {(0,) * self.k: 0}}
        self._mult: dict[int, np.ndarray] = {0: np.ones(1)}
        self._children: dict[int, np.ndarray] = {}

    def _build_to(self, n: int) -> None:
        have = max(self._states)
        for stage in range(have, n):
            cur = self._states[stage]
            seen = {
                counts[:x] + (counts[x] + 1,) + counts[x + 1 :]
                for counts in cur
                for x in range(self.k)
            }
            nxt = sorted(seen)
            index = {c: i for i, c in enumerate(nxt)}
            ch = np.empty((len(cur), self.k), dtype=np.int64)
            for si, counts in enumerate(cur):
                for x in range(self.k):
                    ch[si, x] = index[counts[:x] + (counts[x] + 1,) + counts[x + 1 :]]
            self._states[stage + 1] = nxt
            self._index[stage + 1] = index
            self._children[stage] = ch
            mult_next = np.zeros(len(nxt))
            np.add.at(mult_next, ch.ravel(), np.repeat(self._mult[stage], self.k))
            self._mult[stage + 1] = mult_next

    def n_states(self, n: int) -> int:
        self._build_to(n)
        return len(self._states[n])

    def states(self, n: int) -> list[tuple[int, ...]]:
        self._build_to(n)
        return self._states[n]

    def index_of(self, n: int, counts: tuple[int, ...]) -> int:
        self._build_to(n)
        return self._index[n][counts]

    def children(self, n: int) -> np.ndarray:
        self._build_to(n + 1)
        return self._children[n]

    def step_probs(self, n: int) -> np.ndarray:
        p = self.problem
        s = self.n_states(n)
        return np.broadcast_to(p.obs.iid_pmf[None, :, :], (s, p.n_params, self.k))

    def mult(self, n: int) -> np.ndarray:
        self._build_to(n)
        return self._mult[n]

    def label(self, n: int, idx: int) -> str:
        return "|".join(str(c) for c in self.states(n)[idx])


StateSpace = TreeStateSpace | CountStateSpace


def state_space(problem: Problem, engine: str = "auto") -> StateSpace:
    """Pick an engine: counts for iid models, tree otherwise (or on request)."""
    if engine == "auto":
        engine = "counts" if problem.obs.kind == "iid" else "tree"
    if engine == "counts":
        return CountStateSpace(problem)
    if engine == "tree":
        return TreeStateSpace(problem)
    raise SeqOptError(f"unknown engine {engine!r}")


def check_state_budget(space: StateSpace, horizon: int, budget: int = DEFAULT_STATE_BUDGET) -> None:
    total = 0
    for n in range(horizon + 1):
        if space.engine == "tree":
            total += space.k**n
        else:
            # C(n+K-1, K-1) without building the stage
            from math import comb

            total += comb(n + space.k - 1, space.k - 1)
        if total > budget:
            raise BudgetExceededError(
                f"{space.engine} engine needs more than {budget} states for horizon {horizon}"
            )
