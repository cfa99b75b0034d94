"""Degree-of-eligibility LPs and eligibility-set construction.

For an epistemic point ``e`` with simulated summaries ``S_j`` (one row per
aleatory sample ``a_j``) and observed summaries ``s_i``, the band LP is::

    min q  s.t.  F_v(s_vi) - q/sqrt(n1) <= sum_j W_j 1{S_jv <= s_vi} <= F_v(s_vi-) + q/sqrt(n1)
                 sum_j W_j = 1,  W >= 0

for every data index ``i`` and summary coordinate ``v`` (by default the upper
row counts ``S_jv < s_vi``; see :class:`BandLP`). ``e`` is eligible
when the optimum ``q*`` does not exceed the Bonferroni KS critical value.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import DomainError, DrocalError, EmptySetError, InfeasibleError, SolverError
from .ksstat import EmpiricalCDF, KSThreshold, empirical_cdf, kolmogorov_cdf
from .ksstat import threshold as ks_threshold
from .model import Box, sample_uniform_box
from .rng import substream
from .summary import SummarySpec, summarize_batch

log = logging.getLogger(__name__)

__all__ = [
    "BandLP",
    "EligibilityRecord",
    "EligibilitySet",
    "build_lp",
    "solve_q_star",
    "check_feasible",
    "optimize_weights",
    "construct_eligibility_set",
    "rank_parameters",
    "reduce_set",
    "subsample_study",
]

HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
}
WEIGHT_CLIP = 1e-10


@dataclass(frozen=True)
class BandLP:
    """Band constraints for one epistemic point.

    ``data`` is ``(n1, m)`` and ``sim`` is ``(k, m)``. Two row conventions
    are supported:

    ``ties="literal"``
        ``F(s) - eta <= P_W(S <= s) <= F(s-) + eta`` at every data value ``s``.
        This equals the sup-norm band only when no simulated summary
        coincides with a data value.
    ``ties="exact"`` (default)
        ``P_W(S <= s) >= F(s) - eta`` and ``P_W(S < s) <= F(s-) + eta``, which
        is the sup-norm band ``sup_x |F_W(x) - F(x)| <= eta`` exactly, ties
        included. Discrete summaries (bin frequencies) need this form.

    The row form (one row pair per data index and coordinate) is exposed
    through :attr:`indicator`, :attr:`lower` and :attr:`upper`; solves go
    through an equivalent sparse cumulative form that merges rows of
    duplicate data values.
    """

    data: np.ndarray
    sim: np.ndarray
    ties: str = "exact"

    def __post_init__(self):
        if self.ties not in ("exact", "literal"):
            raise DomainError(f"ties must be 'exact' or 'literal', got {self.ties!r}")

    @property
    def n1(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.sim.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @cached_property
    def ecdfs(self) -> list[EmpiricalCDF]:
        return [empirical_cdf(self.data[:, v]) for v in range(self.m)]

    @cached_property
    def indicator(self) -> np.ndarray:
        """``M[v, i, j] = 1{sim_jv <= data_iv}`` as a uint8 array."""
        return (self.sim.T[:, None, :] <= self.data.T[:, :, None]).astype(np.uint8)

    @cached_property
    def upper_indicator(self) -> np.ndarray:
        """Indicator used by the upper rows: ``<=`` (literal) or ``<`` (exact)."""
        if self.ties == "literal":
            return self.indicator
        return (self.sim.T[:, None, :] < self.data.T[:, :, None]).astype(np.uint8)

    @cached_property
    def lower(self) -> np.ndarray:
        """``F_v(s_vi)`` (right limit), shape ``(m, n1)``."""
        return np.stack([f(self.data[:, v]) for v, f in enumerate(self.ecdfs)])

    @cached_property
    def upper(self) -> np.ndarray:
        """``F_v(s_vi-)`` (left limit), shape ``(m, n1)``."""
        return np.stack([f.left_limit(self.data[:, v]) for v, f in enumerate(self.ecdfs)])

    @property
    def n_rows(self) -> int:
        """Row count of the row form: two per (i, v) plus the simplex row."""
        return 2 * self.n1 * self.m + 1

    def required_q(self, weights) -> float:
        """Smallest ``q`` at which ``weights`` satisfy every band row."""
        w = np.asarray(weights, dtype=float)
        lo_gap = np.max(self.lower - np.einsum("vij,j->vi", self.indicator, w))
        hi_gap = np.max(np.einsum("vij,j->vi", self.upper_indicator, w) - self.upper)
        return float(max(lo_gap, hi_gap, 0.0) * math.sqrt(self.n1))

    def violation(self, weights, q: float) -> float:
        """Largest violation of any band row (and the simplex row) at ``q``."""
        w = np.asarray(weights, dtype=float)
        eta = q / math.sqrt(self.n1)
        worst = max(
            float(np.max(self.lower - eta - np.einsum("vij,j->vi", self.indicator, w))),
            float(np.max(np.einsum("vij,j->vi", self.upper_indicator, w) - self.upper - eta)),
            abs(float(w.sum()) - 1.0),
            float(np.max(-w)),
        )
        return max(worst, 0.0)

    @cached_property
    def _cumulative(self):
        """Sparse structure of the cumulative reformulation.

        For coordinate ``v`` with distinct data values ``b_0 < ... < b_{R-1}``
        the real line splits into segments ``(b_{r-1}, b_r)`` (index ``2r``)
        and atoms ``{b_r}`` (index ``2r + 1``). Variable ``G_s`` holds the
        weight of sim points in segments ``0..s``, so ``G_{2r} = P_W(S < b_r)``
        and ``G_{2r+1} = P_W(S <= b_r)``. Linking rows:
        ``G_s - G_{s-1} - sum_{j in segment s} W_j = 0``.

        Returns the linking-equality triplets with their counts, followed by
        per-band-row arrays ``(col, rhs, sign)``; sign is +1 on upper rows
        and -1 on lower rows.
        """
        k = self.k
        eq_rows, eq_cols, eq_vals = [], [], []
        band_col, band_rhs, band_sign = [], [], []
        row = 0
        col = k  # G variables start after W
        for v, f in enumerate(self.ecdfs):
            R = f.values.size
            s = self.sim[:, v]
            left = np.searchsorted(f.values, s, side="left")
            right = np.searchsorted(f.values, s, side="right")
            seg = 2 * left + (right > left)
            inside = seg < 2 * R
            js = np.nonzero(inside)[0]
            eq_rows.append(row + seg[inside])
            eq_cols.append(js)
            eq_vals.append(np.full(js.size, -1.0))
            g = np.arange(2 * R)
            eq_rows += [row + g, row + g[1:]]
            eq_cols += [col + g, col + g[:-1]]
            eq_vals += [np.ones(2 * R), -np.ones(2 * R - 1)]
            r = np.arange(R)
            # lower rows act on P(S <= b_r); upper rows on P(S < b_r) or P(S <= b_r)
            band_col += [col + 2 * r + 1, col + 2 * r + (1 if self.ties == "literal" else 0)]
            band_rhs += [f.cdf, f.left]
            band_sign += [-np.ones(R), np.ones(R)]
            row += 2 * R
            col += 2 * R
        return (
            np.concatenate(eq_rows), np.concatenate(eq_cols), np.concatenate(eq_vals),
            row, col - k,
            np.concatenate(band_col), np.concatenate(band_rhs), np.concatenate(band_sign),
        )


@dataclass(frozen=True)
class EligibilityRecord:
    e: np.ndarray
    q_star: float
    weights: np.ndarray | None
    eligible: bool
    index: int = -1

    def to_dict(self) -> dict:
        return {"index": self.index, "e": [float(x) for x in self.e], "q_star": float(self.q_star),
                "eligible": bool(self.eligible)}


@dataclass
class EligibilitySet:
    records: list[EligibilityRecord]
    threshold: KSThreshold
    provenance: dict = field(default_factory=dict)

    @property
    def eligible(self) -> list[EligibilityRecord]:
        return [r for r in self.records if r.eligible]

    @property
    def eligible_points(self) -> np.ndarray:
        pts = [r.e for r in self.records if r.eligible]
        return np.array(pts) if pts else np.empty((0, self.records[0].e.size if self.records else 0))

    @property
    def eligible_fraction(self) -> float:
        return len(self.eligible) / len(self.records) if self.records else 0.0

    @property
    def q_stars(self) -> np.ndarray:
        return np.array([r.q_star for r in self.records])

    def to_dict(self) -> dict:
        return {
            "config": self.provenance,
            "threshold": self.threshold.to_dict(),
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d) -> "EligibilitySet":
        th = d["threshold"]
        thr = KSThreshold(th["alpha"], th["m"], th["n1"], th["q"])
        recs = [
            EligibilityRecord(np.array(r["e"], dtype=float), r["q_star"], None, r["eligible"], r.get("index", i))
            for i, r in enumerate(d["records"])
        ]
        return cls(recs, thr, d.get("config", {}))


def build_lp(data_summaries, sim_summaries, ties: str = "exact") -> BandLP:
    data = np.atleast_2d(np.array(data_summaries, dtype=float))
    sim = np.atleast_2d(np.array(sim_summaries, dtype=float))
    if data.shape[1] != sim.shape[1]:
        raise DomainError(f"summary dimension mismatch: data m={data.shape[1]}, sim m={sim.shape[1]}")
    if data.shape[0] < 1 or sim.shape[0] < 1:
        raise DomainError("need n1 >= 1 and k >= 1")
    if not (np.all(np.isfinite(data)) and np.all(np.isfinite(sim))):
        raise DomainError("summaries contain NaN or infinite values")
    data.setflags(write=False)
    sim.setflags(write=False)
    return BandLP(data, sim, ties)


def _equality_block(lp: BandLP, shift: int):
    """Linking rows plus the simplex row; G columns moved right by ``shift``."""
    k = lp.k
    rows, cols, vals, n_eq, n_g = lp._cumulative[:5]
    cols = np.where(cols >= k, cols + shift, cols)
    A_eq = sparse.csr_matrix(
        (np.concatenate([vals, np.ones(k)]),
         (np.concatenate([rows, np.full(k, n_eq)]), np.concatenate([cols, np.arange(k)]))),
        shape=(n_eq + 1, k + shift + n_g),
    )
    b_eq = np.zeros(n_eq + 1)
    b_eq[-1] = 1.0
    return A_eq, b_eq


def _run(c, A_ub, b_ub, A_eq, b_eq, bounds):
    return linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                   method="highs", options=HIGHS_OPTIONS)


def _clean_weights(x: np.ndarray) -> np.ndarray:
    w = np.where(x < WEIGHT_CLIP, 0.0, x)
    return w / w.sum()


def solve_q_star(lp: BandLP) -> tuple[float, np.ndarray]:
    """Smallest band multiplier ``q`` admitting simplex weights; returns ``(q*, W)``."""
    k = lp.k
    n_g = lp._cumulative[4]
    bcol, rhs, sign = lp._cumulative[5:]
    nv = k + 1 + n_g
    A_eq, b_eq = _equality_block(lp, shift=1)
    n_b = bcol.size
    r = np.arange(n_b)
    # sign * G - q/sqrt(n1) <= sign * rhs
    A_ub = sparse.csr_matrix(
        (np.concatenate([sign, np.full(n_b, -1.0 / math.sqrt(lp.n1))]),
         (np.concatenate([r, r]), np.concatenate([bcol + 1, np.full(n_b, k)]))),
        shape=(n_b, nv),
    )
    b_ub = sign * rhs
    c = np.zeros(nv)
    c[k] = 1.0
    bounds = np.zeros((nv, 2))
    bounds[:, 1] = np.inf
    bounds[k + 1:, 1] = 1.0
    res = _run(c, A_ub, b_ub, A_eq, b_eq, bounds)
    if res.status != 0:
        raise SolverError(f"band LP failed: {res.message}")
    return max(float(res.x[k]), 0.0), _clean_weights(res.x[:k])


def optimize_weights(lp: BandLP, q: float, objective=None, sense: str = "min") -> tuple[float, np.ndarray]:
    """Optimize ``objective @ W`` over the band polytope at fixed ``q``.

    With ``objective=None`` this is a pure feasibility solve. Raises
    :class:`InfeasibleError` when the polytope is empty.
    """
    if sense not in ("min", "max"):
        raise DomainError("sense must be 'min' or 'max'")
    k = lp.k
    n_g = lp._cumulative[4]
    bcol, rhs, sign = lp._cumulative[5:]
    eta = float(q) / math.sqrt(lp.n1)
    lo = np.zeros(n_g)
    hi = np.ones(n_g)
    g = bcol - k
    up = sign > 0
    np.minimum.at(hi, g[up], rhs[up] + eta)
    np.maximum.at(lo, g[~up], rhs[~up] - eta)
    if np.any(lo > hi + 1e-12):
        raise InfeasibleError(f"band polytope empty at q={q}")
    hi = np.maximum(hi, lo)
    nv = k + n_g
    A_eq, b_eq = _equality_block(lp, shift=0)
    c = np.zeros(nv)
    if objective is not None:
        obj = np.asarray(objective, dtype=float)
        if obj.shape != (k,):
            raise DomainError(f"objective must have length k={k}")
        c[:k] = obj if sense == "min" else -obj
    bounds = np.empty((nv, 2))
    bounds[:k] = (0.0, np.inf)
    bounds[k:, 0] = lo
    bounds[k:, 1] = hi
    res = _run(c, None, None, A_eq, b_eq, bounds)
    if res.status == 2:
        raise InfeasibleError(f"band polytope empty at q={q}")
    if res.status != 0:
        raise SolverError(f"weight LP failed: {res.message}")
    w = _clean_weights(res.x[:k])
    value = float(np.asarray(objective, dtype=float) @ w) if objective is not None else 0.0
    return value, w


def check_feasible(lp: BandLP, q: float) -> bool:
    """Whether some simplex weight vector satisfies every band row at ``q``."""
    try:
        optimize_weights(lp, q)
    except InfeasibleError:
        return False
    return True


# --- eligibility sets -------------------------------------------------------

def q_star_at(e, data_summaries, a_points, model, spec: SummarySpec, theta=None) -> tuple[float, np.ndarray]:
    """Degree of eligibility of a single epistemic point."""
    sims = model.simulate_batch(a_points, e, theta)
    sim_s = summarize_batch(sims, model.dt, spec)
    return solve_q_star(build_lp(data_summaries, sim_s))


def _map(fn: Callable, items: Sequence, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def aleatory_sample(A: Box, k: int, seed: int, l: int | None = None) -> np.ndarray:
    """The ``k`` baseline aleatory points, shared (``l=None``) or for ``e`` index ``l``."""
    if l is None:
        return sample_uniform_box(A, k, seed, "a-sample")
    return sample_uniform_box(A, k, seed, "a-sample-per-e", prefix=(l,))


def epistemic_sample(E0: Box, n2: int, seed: int) -> np.ndarray:
    return sample_uniform_box(E0, n2, seed, "e-sample")


def simulate_summaries(model, spec: SummarySpec, e_points, A: Box, k: int, seed: int,
                       resample_per_e: bool = False, threads: int = 1) -> np.ndarray:
    """Simulated summaries for every ``e``; shape ``(n_e, k, m)``."""
    shared = None if resample_per_e else aleatory_sample(A, k, seed)

    def one(item):
        l, e = item
        a = shared if shared is not None else aleatory_sample(A, k, seed, l)
        try:
            sims = model.simulate_batch(a, e)
        except DrocalError as exc:
            raise type(exc)(f"simulation failed at e={np.asarray(e).tolist()}: {exc}") from exc
        return summarize_batch(sims, model.dt, spec)

    return np.stack(_map(one, list(enumerate(e_points)), threads))


def _solve_records(data_summaries, sim_summaries, e_points, thr: KSThreshold, threads: int,
                   keep_weights: bool = True) -> list[EligibilityRecord]:
    def one(l):
        q, w = solve_q_star(build_lp(data_summaries, sim_summaries[l]))
        return EligibilityRecord(np.asarray(e_points[l], dtype=float), q, w if keep_weights else None,
                                 bool(q <= thr.q), l)

    return _map(one, range(len(e_points)), threads)


def construct_eligibility_set(data_summaries, model, E0: Box, A: Box, n2: int, k: int,
                              spec: SummarySpec, thr: KSThreshold, seed: int,
                              resample_per_e: bool = False, threads: int = 1,
                              e_points=None, keep_weights: bool = True) -> EligibilitySet:
    """Solve the band LP at ``n2`` sampled epistemic points and flag the eligible ones.

    ``data_summaries`` is the ``(n1, m)`` matrix of observed summaries.
    Results depend only on ``seed``: record ``l`` uses substream ``l`` of the
    epistemic stream and, with ``resample_per_e``, its own aleatory stream.
    """
    data = np.atleast_2d(np.asarray(data_summaries, dtype=float))
    n1 = data.shape[0]
    if data.shape[1] != spec.m:
        raise DomainError(f"data summaries have m={data.shape[1]}, spec has m={spec.m}")
    if k < n1:
        raise DomainError(f"k={k} must be at least n1={n1}")
    if k < 10 * n1:
        warnings.warn(f"k={k} is small relative to n1={n1}; coverage guarantees want k >> n1",
                      stacklevel=2)
    if e_points is None:
        if n2 < 1:
            raise DomainError("n2 must be at least 1")
        e_points = epistemic_sample(E0, n2, seed)
    e_points = np.atleast_2d(np.asarray(e_points, dtype=float))
    sims = simulate_summaries(model, spec, e_points, A, k, seed, resample_per_e, threads)
    records = _solve_records(data, sims, e_points, thr, threads, keep_weights)
    prov = {"seed": int(seed), "n1": int(n1), "n2": int(len(e_points)), "k": int(k),
            "m": int(spec.m), "resample_per_e": bool(resample_per_e), "spec": spec.to_dict(),
            "E0": E0.to_dict(), "A": A.to_dict()}
    return EligibilitySet(records, thr, prov)


def rank_parameters(eset: EligibilitySet, E0: Box | None = None) -> tuple[np.ndarray, list[int]]:
    """Shrinkage score per epistemic dimension and the descending ranking.

    ``score_d = 1 - (97.5th - 2.5th percentile of eligible e_d) / width_d``.
    """
    pts = eset.eligible_points
    if pts.shape[0] == 0:
        raise EmptySetError("no eligible points to rank")
    if E0 is None:
        E0 = Box.from_dict(eset.provenance["E0"])
    span = np.percentile(pts, 97.5, axis=0) - np.percentile(pts, 2.5, axis=0)
    scores = 1.0 - span / E0.widths
    ranking = sorted(range(scores.size), key=lambda d: (-scores[d], d))
    return scores, ranking


def reduce_set(eset: EligibilitySet, r_percent: float) -> tuple[EligibilitySet, float, float]:
    """Drop the ``r%`` eligible points with the largest ``q*``.

    Returns the reduced set, the largest retained ``q*`` and the matching
    Bonferroni level ``alpha~ = m (1 - K(q_r))``.
    """
    if not 0.0 <= r_percent < 100.0:
        raise DomainError("r_percent must lie in [0, 100)")
    elig = eset.eligible
    if not elig:
        raise EmptySetError("no eligible points to reduce")
    keep_n = math.ceil((1.0 - r_percent / 100.0) * len(elig) - 1e-9)
    order = sorted(elig, key=lambda r: (r.q_star, r.index))
    kept = {id(r) for r in order[:keep_n]}
    records = [
        r if (not r.eligible or id(r) in kept) else
        EligibilityRecord(r.e, r.q_star, r.weights, False, r.index)
        for r in eset.records
    ]
    q_r = max(r.q_star for r in order[:keep_n])
    m = eset.threshold.m
    alpha_tilde = m * (1.0 - kolmogorov_cdf(q_r))
    thr = KSThreshold(alpha_tilde, m, eset.threshold.n1, q_r)
    prov = dict(eset.provenance, risk_percent=r_percent)
    return EligibilitySet(records, thr, prov), q_r, alpha_tilde


def subsample_study(data_summaries, sim_summaries, e_points, sizes: Sequence[int], replications: int,
                    alpha: float, seed: int, threads: int = 1) -> list[dict]:
    """Mean eligible fraction when only ``n1`` of the data records are kept.

    ``sim_summaries`` are the ``(n_e, k, m)`` simulated summaries, shared by
    every subsample so only the data side varies. A size equal to the full
    data count uses the data unchanged (one replication suffices).
    """
    data = np.atleast_2d(np.asarray(data_summaries, dtype=float))
    n_full, m = data.shape
    rows = []
    for size in sizes:
        if not 1 <= size <= n_full:
            raise DomainError(f"subsample size {size} outside [1, {n_full}]")
        thr = ks_threshold(alpha, m, size)
        fracs = []
        reps = 1 if size == n_full else replications
        for rep in range(reps):
            if size == n_full:
                sub = data
            else:
                idx = substream(seed, "subsample", size, rep).choice(n_full, size=size, replace=False)
                sub = data[np.sort(idx)]
            recs = _solve_records(sub, sim_summaries, e_points, thr, threads, keep_weights=False)
            fracs.append(float(np.mean([r.eligible for r in recs])))
        rows.append({"n1": int(size), "replications": reps, "eligible_fraction": float(np.mean(fracs)),
                     "fractions": fracs, "q_threshold": thr.q})
    return rows
