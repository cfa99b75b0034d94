"""Robust design: worst-case best-case failure probability and its KW descent.

The objective at a design ``theta`` is::

    max over eligible e of  min over W in U(e) of  sum_j W_j 1{some g_i(a_j, e, theta) >= 0}

It is minimized by Kiefer-Wolfowitz coordinate descent in coordinates
normalized by the baseline design (``theta = baseline * x``, ``x`` starts at 1).
"""
from __future__ import annotations

import inspect
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .aleatory import (
    ReliabilityReport,
    WeightPolytope,
    _fail,
    _usable,
    bound_linear_functional,
    build_polytopes,
    reliability_report,
)
from .errors import DomainError, EmptySetError
from .model import Box
from .summary import SummarySpec

log = logging.getLogger(__name__)

__all__ = [
    "KWParams",
    "KWTrace",
    "robust_objective",
    "RobustObjective",
    "kw_schedule",
    "kw_optimize",
    "design_report",
]


def robust_objective(theta, polytopes: list[WeightPolytope], model) -> float:
    """Worst case over eligible points of the best-case any-requirement failure probability."""
    worst = 0.0
    for U in _usable(polytopes):
        c = _fail(model.requirements_batch(U.a_points, U.e, theta), "any")
        worst = max(worst, bound_linear_functional(U, c, "min")[0])
    return worst


@dataclass
class RobustObjective:
    """:func:`robust_objective` with a fresh aleatory sample per stream key.

    Calls sharing a ``key`` share the sample (and the polytopes, which do not
    depend on the design), so a central-difference pair uses common random
    numbers. Eligible points are thinned to at most ``e_cap`` evenly spaced
    ones when set.
    """

    model: object
    data_summaries: np.ndarray
    spec: SummarySpec
    A: Box
    e_points: np.ndarray
    q: float
    k: int
    seed: int
    e_cap: int | None = None
    ties: str = "exact"
    _cache: tuple = field(default=(None, None), repr=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.e_points, dtype=float))
        if pts.shape[0] == 0 or pts.size == 0:
            raise EmptySetError("robust objective needs at least one eligible point")
        if self.e_cap is not None and pts.shape[0] > self.e_cap:
            pick = np.unique(np.linspace(0, pts.shape[0] - 1, self.e_cap).round().astype(int))
            pts = pts[pick]
        self.e_points = pts

    def polytopes(self, key) -> list[WeightPolytope]:
        key = tuple(int(x) for x in key)
        if self._cache[0] != key:
            polys = build_polytopes(self.e_points, self.data_summaries, self.model, self.spec, self.A,
                                    self.k, self.seed, self.q, stream=key, ties=self.ties)
            self._cache = (key, polys)
        return self._cache[1]

    def __call__(self, theta, key=(0, 0)) -> float:
        return robust_objective(theta, self.polytopes(key), self.model)


@dataclass(frozen=True)
class KWParams:
    c0: float = 0.1
    a0: float = 0.1
    n_max: int = 8

    def __post_init__(self):
        if not (self.c0 > 0 and self.a0 > 0):
            raise DomainError("c0 and a0 must be positive")
        if self.n_max < 1:
            raise DomainError("n_max must be at least 1")


@dataclass
class KWTrace:
    rows: list = field(default_factory=list)
    initial_objective: float | None = None
    final_objective: float | None = None

    COLUMNS = ("sweep", "coordinate", "c_n", "a_n", "u", "l", "g", "objective", "moved", "theta")

    def as_rows(self) -> list[list]:
        return [[r[c] if c != "theta" else " ".join(repr(float(x)) for x in r[c]) for c in self.COLUMNS]
                for r in self.rows]


def kw_schedule(n: int, params: KWParams) -> tuple[float, float]:
    """Perturbation ``c_n = c0 / n^(1/4)`` and gain ``a_n = a0 / n``."""
    return params.c0 / n**0.25, params.a0 / n


def _accepts_key(fn) -> bool:
    try:
        return "key" in inspect.signature(fn).parameters
    except (TypeError, ValueError):
        return False


def kw_optimize(theta_baseline, params: KWParams, objective: Callable) -> tuple[np.ndarray, KWTrace]:
    """Kiefer-Wolfowitz coordinate descent on the normalized design.

    ``objective(theta)`` may also accept ``key=(sweep, coordinate)``; the
    two evaluations of one central difference then share a key, and the
    initial/final evaluations use ``(0, 0)``.

    Zero baseline components cannot be scaled; they move additively instead
    (``theta_d = x_d - 1``) and a warning is logged.
    """
    base = np.asarray(theta_baseline, dtype=float)
    if not np.all(np.isfinite(base)):
        raise DomainError("baseline design must be finite")
    scale = base.copy()
    shift = np.zeros_like(base)
    zero = scale == 0.0
    if np.any(zero):
        log.warning("baseline has zero components %s; using unit scale there", np.nonzero(zero)[0].tolist())
        scale[zero] = 1.0
        shift[zero] = -1.0
    keyed = _accepts_key(objective)

    def f(x, key):
        theta = scale * x + shift
        return float(objective(theta, key=key) if keyed else objective(theta))

    x = np.ones_like(base)
    trace = KWTrace()
    trace.initial_objective = f(x, (0, 0))
    for n in range(1, params.n_max + 1):
        c_n, a_n = kw_schedule(n, params)
        for i in range(base.size):
            step = np.zeros_like(x)
            step[i] = c_n
            u = f(x + step, (n, i + 1))
            l = f(x - step, (n, i + 1))
            g = (u - l) / (2 * c_n)
            moved = g != 0.0
            if moved:
                x = x - a_n * g * np.eye(base.size)[i]
            trace.rows.append({
                "sweep": n, "coordinate": i + 1, "c_n": c_n, "a_n": a_n, "u": u, "l": l, "g": g,
                "objective": 0.5 * (u + l), "moved": bool(moved), "theta": scale * x + shift,
            })
    theta_new = scale * x + shift
    trace.final_objective = f(x, (0, 0))
    return theta_new, trace


def design_report(theta, polytopes: list[WeightPolytope], model) -> ReliabilityReport:
    """Reliability ranges and severities at ``theta``, with the robust objective attached."""
    report = reliability_report(polytopes, theta, model)
    report.objective = robust_objective(theta, polytopes, model)
    return report
