"""Bounds over the aleatory weight polytope.

At an eligible epistemic point the set of weight vectors on the sampled
aleatory points that satisfy every KS band row at the calibrated threshold
is a polytope ``U``. Linear functionals over ``U`` bound failure
probabilities and severities.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .eligibility import BandLP, aleatory_sample, build_lp, optimize_weights
from .errors import DomainError, EmptySetError, InfeasibleError
from .model import Box, sample_uniform_box
from .summary import SummarySpec, summarize_batch

log = logging.getLogger(__name__)

__all__ = [
    "WeightPolytope",
    "ReliabilityReport",
    "build_polytopes",
    "bound_linear_functional",
    "failure_probability_range",
    "severity",
    "rmin_rmax",
    "representative_realizations",
    "reliability_report",
]

REQUIREMENTS = (1, 2, 3)


@dataclass
class WeightPolytope:
    """Band polytope for one epistemic point at a fixed band multiplier ``q``."""

    lp: BandLP
    q: float
    a_points: np.ndarray
    e: np.ndarray
    _witness: np.ndarray | None = field(default=None, repr=False)
    _empty: bool | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.lp.k

    def is_empty(self) -> bool:
        if self._empty is None:
            try:
                self._witness = optimize_weights(self.lp, self.q)[1]
                self._empty = False
            except InfeasibleError:
                self._empty = True
        return self._empty

    def witness(self) -> np.ndarray:
        """Some feasible weight vector; raises if ``U`` is empty."""
        if self.is_empty():
            raise InfeasibleError(f"weight polytope empty at q={self.q}")
        return self._witness


@dataclass
class ReliabilityReport:
    theta: np.ndarray
    ranges: dict  # requirement (1, 2, 3, "any") -> (lo, hi)
    severities: dict  # requirement -> value
    per_e: list  # rows {"e", "R_min", "R_max"}
    objective: float | None = None
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "theta": [float(x) for x in self.theta],
            "ranges": {str(k): [float(v[0]), float(v[1])] for k, v in self.ranges.items()},
            "severities": {str(k): float(v) for k, v in self.severities.items()},
            "objective": None if self.objective is None else float(self.objective),
            "n_points": len(self.per_e),
            "skipped": self.skipped,
        }


def build_polytopes(e_points, data_summaries, model, spec: SummarySpec, A: Box, k: int, seed: int,
                    q: float, resample_per_e: bool = False, indices=None, stream=None,
                    ties: str = "exact") -> list[WeightPolytope]:
    """One polytope per epistemic point.

    By default the aleatory sample is the calibration one (shared, or per
    record index when ``resample_per_e``), so eligible points keep nonempty
    polytopes. ``stream`` selects a fresh sample instead: a tuple of ints
    used as a substream prefix.
    """
    e_points = np.atleast_2d(np.asarray(e_points, dtype=float))
    if indices is None:
        indices = range(len(e_points))
    if stream is not None:
        shared = sample_uniform_box(A, k, seed, "a-fresh", prefix=tuple(stream))
    else:
        shared = None if resample_per_e else aleatory_sample(A, k, seed)
    out = []
    for l, e in zip(indices, e_points):
        a = shared if shared is not None else aleatory_sample(A, k, seed, l)
        sims = summarize_batch(model.simulate_batch(a, e), model.dt, spec)
        out.append(WeightPolytope(build_lp(data_summaries, sims, ties), float(q), a, e))
    return out


def bound_linear_functional(U: WeightPolytope, c, direction: str) -> tuple[float, np.ndarray]:
    """Min or max of ``c @ W`` over ``U``."""
    c = np.asarray(c, dtype=float)
    if c.shape != (U.k,):
        raise DomainError(f"functional must have length k={U.k}")
    if direction not in ("min", "max"):
        raise DomainError("direction must be 'min' or 'max'")
    if np.all(c == c[0]):
        # constant functional: any feasible point is optimal
        return float(c[0]), U.witness()
    value, w = optimize_weights(U.lp, U.q, c, direction)
    U._empty = False
    return value, w


def _g(model, U: WeightPolytope, theta) -> np.ndarray:
    return model.requirements_batch(U.a_points, U.e, theta)


def _fail(g: np.ndarray, i) -> np.ndarray:
    if i == "any":
        return np.any(g >= 0, axis=1).astype(float)
    if i not in REQUIREMENTS:
        raise DomainError(f"requirement must be one of {REQUIREMENTS} or 'any', got {i!r}")
    return (g[:, i - 1] >= 0).astype(float)


def _usable(polytopes) -> list[WeightPolytope]:
    if not polytopes:
        raise EmptySetError("no eligible epistemic points")
    keep = []
    for U in polytopes:
        if U.is_empty():
            log.warning("skipping e=%s: weight polytope empty at q=%.4g", np.round(U.e, 4).tolist(), U.q)
        else:
            keep.append(U)
    if not keep:
        raise EmptySetError("every weight polytope is empty")
    return keep


def failure_probability_range(polytopes, theta, i, model) -> tuple[float, float]:
    """``[min_e min_W, max_e max_W]`` of the failure probability of requirement ``i``."""
    lo, hi = np.inf, -np.inf
    for U in _usable(polytopes):
        c = _fail(_g(model, U, theta), i)
        lo = min(lo, bound_linear_functional(U, c, "min")[0])
        hi = max(hi, bound_linear_functional(U, c, "max")[0])
    return lo, hi


def severity(polytopes, theta, i, model) -> float:
    """Worst-case expected violation ``max_e max_W sum_j W_j g_ij 1{g_ij >= 0}``."""
    best = 0.0
    for U in _usable(polytopes):
        g = _g(model, U, theta)[:, i - 1]
        best = max(best, bound_linear_functional(U, np.where(g >= 0, g, 0.0), "max")[0])
    return best


def rmin_rmax(U: WeightPolytope, theta, model) -> tuple[float, float, np.ndarray]:
    """Best- and worst-case probability that any requirement fails, plus the best-case weights."""
    c = _fail(_g(model, U, theta), "any")
    rmin, w_min = bound_linear_functional(U, c, "min")
    rmax, _ = bound_linear_functional(U, c, "max")
    return rmin, rmax, w_min


def representative_realizations(U: WeightPolytope, theta, model, weight_cut: float = 0.05,
                                notable_cut: float = 0.1) -> dict[tuple[int, ...], np.ndarray]:
    """Heavily weighted failing aleatory points of a notable epistemic point.

    If the best-case failure probability exceeds ``notable_cut``, returns the
    points with best-case weight above ``weight_cut`` that fail at least one
    requirement, grouped by the tuple of failing requirements.
    """
    rmin, _, w_min = rmin_rmax(U, theta, model)
    if rmin <= notable_cut:
        return {}
    g = _g(model, U, theta)
    fails = g >= 0
    groups: dict[tuple[int, ...], list] = {}
    for j in np.nonzero(w_min > weight_cut)[0]:
        pattern = tuple(int(i) + 1 for i in np.nonzero(fails[j])[0])
        if pattern:
            groups.setdefault(pattern, []).append(U.a_points[j])
    return {p: np.array(v) for p, v in sorted(groups.items())}


def reliability_report(polytopes, theta, model) -> ReliabilityReport:
    """Failure-probability ranges and severities, with per-point ``(R_min, R_max)``."""
    usable = _usable(polytopes)
    theta = np.asarray(theta, dtype=float)
    ranges = {i: [np.inf, -np.inf] for i in (*REQUIREMENTS, "any")}
    sev = {i: 0.0 for i in REQUIREMENTS}
    per_e = []
    for U in usable:
        g = _g(model, U, theta)
        for i in ranges:
            c = _fail(g, i)
            lo = bound_linear_functional(U, c, "min")[0]
            hi = bound_linear_functional(U, c, "max")[0]
            ranges[i][0] = min(ranges[i][0], lo)
            ranges[i][1] = max(ranges[i][1], hi)
            if i == "any":
                per_e.append({"e": U.e.tolist(), "R_min": lo, "R_max": hi})
        for i in REQUIREMENTS:
            gi = g[:, i - 1]
            sev[i] = max(sev[i], bound_linear_functional(U, np.where(gi >= 0, gi, 0.0), "max")[0])
    return ReliabilityReport(theta, {i: tuple(v) for i, v in ranges.items()}, sev, per_e,
                             skipped=len(polytopes) - len(usable))
