"""Common power fraction: golden-section search over alpha_c in [0, 1]."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .common import CommonResult, optimize_common
from .private import PrivateResult, optimize_private
from .sinr import SinrOperators

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SplitSolution:
    """Statistical solution for one common power fraction."""

    alpha_c: float
    rate_lb: float
    A_p: np.ndarray
    A_c: np.ndarray
    private: PrivateResult
    common: CommonResult

    @property
    def common_rate(self) -> float:
        return self.common.min_rate

    @property
    def private_rates(self) -> np.ndarray:
        return self.private.rates


def evaluate_split(alpha_c: float, ops: SinrOperators, P_dl: float, warm: SplitSolution | None = None,
                   private_opts: dict | None = None, common_opts: dict | None = None) -> SplitSolution:
    """Run the private and then the common optimization for one split.

    ``warm`` supplies starting transforms; they are rescaled to the new
    budgets by the solvers.
    """
    if not 0.0 <= alpha_c <= 1.0:
        raise ValueError(f"alpha_c must lie in [0, 1], got {alpha_c}")
    init_p = warm.A_p if warm is not None else None
    init_c = warm.A_c if warm is not None else None
    priv = optimize_private(ops, alpha_c, P_dl, init=init_p, **(private_opts or {}))
    comm = optimize_common(priv.A_p, ops, alpha_c, P_dl, init=init_c, **(common_opts or {}))
    rate = comm.min_rate + float(priv.rates.sum())
    return SplitSolution(alpha_c, rate, priv.A_p, comm.A_c, priv, comm)


@dataclass
class GoldenSearchState:
    a: float
    b: float
    alpha_c1: float
    alpha_c2: float
    R1: float
    R2: float
    g: float = GOLDEN

    @property
    def width(self) -> float:
        return self.b - self.a


@dataclass
class GoldenResult:
    x: float
    value: float
    payload: object
    evaluations: int
    history: list = field(default_factory=list)  # GoldenSearchState per iteration


def golden_section(objective: Callable[[float], tuple], a: float = 0.0, b: float = 1.0,
                   tol: float = 0.02, max_eval: int = 12) -> GoldenResult:
    """Maximize a unimodal ``objective`` on ``[a, b]``.

    ``objective(x)`` returns ``(value, payload)``. The interval shrinks by
    ``GOLDEN`` per iteration, reusing one probe each time. The best probe
    seen, not the final midpoint, is returned.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    best = [-math.inf, None, None]
    count = 0

    def probe(x):
        nonlocal count
        count += 1
        value, payload = objective(x)
        if value > best[0]:
            best[:] = [value, x, payload]
        return value

    x1 = a + (1 - GOLDEN) * (b - a)
    x2 = a + GOLDEN * (b - a)
    state = GoldenSearchState(a, b, x1, x2, probe(x1), probe(x2))
    history = [state]
    while state.width >= tol and count < max_eval:
        s = state
        if s.R1 > s.R2:
            a_new, b_new = s.a, s.alpha_c2
            x2, R2 = s.alpha_c1, s.R1
            x1 = a_new + (1 - GOLDEN) * (b_new - a_new)
            R1 = probe(x1)
        else:
            a_new, b_new = s.alpha_c1, s.b
            x1, R1 = s.alpha_c2, s.R2
            x2 = a_new + GOLDEN * (b_new - a_new)
            R2 = probe(x2)
        state = GoldenSearchState(a_new, b_new, x1, x2, R1, R2)
        history.append(state)
    return GoldenResult(best[1], best[0], best[2], count, history)


def optimize_split(ops: SinrOperators, P_dl: float, tol: float = 0.02, max_eval: int = 12,
                   baseline: SplitSolution | None = None, private_opts: dict | None = None,
                   common_opts: dict | None = None):
    """Golden-section search over alpha_c with warm-started evaluations.

    ``baseline`` (typically the alpha_c = 0 solution) competes with the
    probes, so the returned split is never worse than it.
    Returns ``(solution, GoldenResult)``.
    """
    last = [baseline]

    def objective(alpha_c):
        sol = evaluate_split(alpha_c, ops, P_dl, warm=last[0], private_opts=private_opts,
                             common_opts=common_opts)
        last[0] = sol
        return sol.rate_lb, sol

    search = golden_section(objective, tol=tol, max_eval=max_eval)
    solution = search.payload
    if baseline is not None and baseline.rate_lb >= solution.rate_lb:
        solution = baseline
    return solution, search


def write_search_trace(path, history) -> None:
    """CSV of the golden-section iterations."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "a", "b", "alpha_c1", "alpha_c2", "R1", "R2"])
        for i, s in enumerate(history):
            w.writerow([i, repr(s.a), repr(s.b), repr(s.alpha_c1), repr(s.alpha_c2), repr(s.R1), repr(s.R2)])
