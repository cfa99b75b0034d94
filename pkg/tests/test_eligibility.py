import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drocal.eligibility import (
    EligibilityRecord,
    EligibilitySet,
    build_lp,
    check_feasible,
    construct_eligibility_set,
    optimize_weights,
    rank_parameters,
    reduce_set,
    simulate_summaries,
    solve_q_star,
    subsample_study,
)
from drocal.errors import DomainError, EmptySetError, InfeasibleError
from drocal.ksstat import KSThreshold, kolmogorov_cdf, threshold
from drocal.model import OSC2, Box
from oracles import grid_q_star, ks_required_q


def q_of(data, sims, ties="exact"):
    return solve_q_star(build_lp(np.reshape(data, (-1, 1)) if np.ndim(data) == 1 else data,
                                 np.reshape(sims, (-1, 1)) if np.ndim(sims) == 1 else sims, ties))[0]


# ------------------------------------------------------------ construction


def test_row_count_single():
    lp = build_lp([[0.0]], [[1.0], [2.0]])
    assert lp.n_rows == 3


def test_duplicate_data_rows_kept():
    lp = build_lp([[1.0], [1.0], [2.0]], [[0.0]])
    assert lp.n_rows == 2 * 3 + 1
    assert len(lp.ecdfs[0].values) == 2


def test_indicator_all_ones_below():
    lp = build_lp([[1.0], [2.0], [3.0]], [[0.0], [5.0]])
    assert np.all(lp.indicator[0, :, 0] == 1)
    assert np.all(lp.indicator[0, :, 1] == 0)
    assert set(np.unique(lp.indicator)) <= {0, 1}


def test_nan_rejected():
    with pytest.raises(DomainError):
        build_lp([[np.nan]], [[0.0]])
    with pytest.raises(DomainError):
        build_lp([[0.0, 1.0]], [[0.0]])


def test_inputs_not_mutated():
    d, s = np.array([[0.0], [1.0]]), np.array([[0.5]])
    build_lp(d, s)
    d[0, 0] = 3.0  # still writable


# ------------------------------------------------------------ analytic cases


def test_coincident_atom():
    assert q_of([0.0], [0.0], "literal") == pytest.approx(1.0, abs=1e-6)
    # with exact ties the weighted CDF matches the data exactly
    assert q_of([0.0], [0.0]) == pytest.approx(0.0, abs=1e-6)


def test_straddling_atoms():
    for ties in ("exact", "literal"):
        q, w = solve_q_star(build_lp([[1.0]], [[0.0], [2.0]], ties))
        assert q == pytest.approx(0.5, abs=1e-6)
        np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-6)


def test_all_below():
    for ties in ("exact", "literal"):
        assert q_of([1.0], [0.0, 0.2, 0.7], ties) == pytest.approx(1.0, abs=1e-6)


def test_interleaving_attains_lower_bound():
    n = 4
    data = np.arange(1.0, n + 1)
    sims = np.arange(0.5, n + 1)
    assert q_of(data, sims) == pytest.approx(1 / (2 * math.sqrt(n)), abs=1e-6)


# ------------------------------------------------------------ feasibility


def test_check_feasible_examples():
    rng = np.random.default_rng(0)
    lp = build_lp(rng.normal(size=(8, 2)), rng.normal(size=(30, 2)))
    q, _ = solve_q_star(lp)
    assert check_feasible(lp, q + 1e-7)
    assert not check_feasible(lp, q - 0.01)
    assert check_feasible(lp, 10.0)
    with pytest.raises(InfeasibleError):
        optimize_weights(lp, q - 0.05)


def instance(seed, n1=None, k=None, m=None):
    rng = np.random.default_rng(seed)
    n1 = n1 or int(rng.integers(1, 6))
    k = k or int(rng.integers(1, 9))
    m = m or int(rng.integers(1, 4))
    if rng.random() < 0.5:
        return rng.integers(0, 4, (n1, m)).astype(float), rng.integers(0, 4, (k, m)).astype(float)
    return rng.normal(size=(n1, m)), rng.normal(size=(k, m))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lower_bound_with_distinct_data(seed):
    rng = np.random.default_rng(seed)
    n1 = int(rng.integers(1, 6))
    data = rng.permutation(n1)[:, None].astype(float) + rng.normal(size=(n1, 1)) * 0.01
    sims = rng.normal(size=(int(rng.integers(1, 10)), 1)) * n1
    assert q_of(data, sims) >= 1 / (2 * math.sqrt(n1)) - 1e-7


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_feasibility_monotone(seed, d1, d2):
    lp = build_lp(*instance(seed))
    q, _ = solve_q_star(lp)
    lo, hi = sorted((d1, d2))
    if check_feasible(lp, q + lo):
        assert check_feasible(lp, q + hi)
    assert check_feasible(lp, q + 1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_more_summaries_never_decrease_q(seed):
    data, sims = instance(seed, m=3)
    q2 = q_of(data[:, :2], sims[:, :2])
    q3 = q_of(data, sims)
    assert q3 >= q2 - 1e-7
    # and appending a copy of the extra column changes nothing
    assert q_of(np.column_stack([data, data[:, -1]]), np.column_stack([sims, sims[:, -1]])) == \
        pytest.approx(q3, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_witness_replays(seed):
    data, sims = instance(seed)
    for ties in ("exact", "literal"):
        lp = build_lp(data, sims, ties)
        q, w = solve_q_star(lp)
        assert abs(w.sum() - 1) < 1e-8 and np.all(w >= 0)
        assert lp.violation(w, q) < 1e-6
    # exact mode is the sup-norm KS statistic
    q, w = solve_q_star(build_lp(data, sims))
    assert ks_required_q(data, sims, w) <= q + 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    n1, k = int(rng.integers(1, 4)), int(rng.integers(1, 7))
    data = rng.integers(0, 5, n1).astype(float)
    sims = rng.integers(0, 5, k).astype(float)
    q_lp = q_of(data, sims)
    q_grid, _, _ = grid_q_star(data, sims)
    assert q_lp <= q_grid + 1e-7
    assert q_grid - q_lp <= 0.02


def test_literal_vs_exact_agree_without_ties():
    rng = np.random.default_rng(3)
    data, sims = rng.normal(size=(6, 2)), rng.normal(size=(20, 2))
    assert q_of(data, sims, "literal") == pytest.approx(q_of(data, sims, "exact"), abs=1e-7)


def test_bad_ties_mode():
    with pytest.raises(DomainError):
        build_lp([[0.0]], [[0.0]], "loose")


# ------------------------------------------------------------ eligibility sets


@pytest.fixture(scope="module")
def small_set(osc2_data, spec12):
    thr = threshold(0.05, 12, 50)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return construct_eligibility_set(osc2_data, OSC2, OSC2.E0, OSC2.A, 12, 120, spec12, thr, seed=4)


def test_set_records(small_set):
    assert len(small_set.records) == 12
    for r in small_set.records:
        assert r.eligible == (r.q_star <= small_set.threshold.q)
        assert r.q_star >= 0
        assert OSC2.E0.contains(r.e)


def test_set_deterministic_and_threads(small_set, osc2_data, spec12):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        again = construct_eligibility_set(osc2_data, OSC2, OSC2.E0, OSC2.A, 12, 120, spec12,
                                          small_set.threshold, seed=4, threads=3)
    np.testing.assert_array_equal(again.q_stars, small_set.q_stars)
    assert again.to_dict() == small_set.to_dict()


def test_threshold_extremes(osc2_data, spec12):
    e = np.array([[0.5, 1.0, 0.3, 1.7], [1.9, 0.1, 1.0, 0.0]])
    args = (osc2_data, OSC2, OSC2.E0, OSC2.A, 2, 500, spec12)
    all_in = construct_eligibility_set(*args, KSThreshold(0.05, 12, 50, math.inf), seed=1, e_points=e)
    none_in = construct_eligibility_set(*args, KSThreshold(0.05, 12, 50, 0.0), seed=1, e_points=e)
    assert all(r.eligible for r in all_in.records)
    assert not any(r.eligible for r in none_in.records)


def test_k_checks(osc2_data, spec12):
    thr = threshold(0.05, 12, 50)
    with pytest.raises(DomainError):
        construct_eligibility_set(osc2_data, OSC2, OSC2.E0, OSC2.A, 2, 40, spec12, thr, seed=0)
    with pytest.warns(UserWarning):
        construct_eligibility_set(osc2_data, OSC2, OSC2.E0, OSC2.A, 1, 60, spec12, thr, seed=0)


def test_roundtrip(small_set):
    back = EligibilitySet.from_dict(small_set.to_dict())
    np.testing.assert_array_equal(back.q_stars, small_set.q_stars)
    assert back.threshold == small_set.threshold
    assert [r.eligible for r in back.records] == [r.eligible for r in small_set.records]


def test_per_e_resampling_differs(osc2_data, spec12):
    e = [[0.5, 1.0, 0.3, 1.7]] * 2
    sims = simulate_summaries(OSC2, spec12, e, OSC2.A, 60, 9, resample_per_e=True)
    assert not np.array_equal(sims[0], sims[1])
    shared = simulate_summaries(OSC2, spec12, e, OSC2.A, 60, 9)
    np.testing.assert_array_equal(shared[0], shared[1])


# ------------------------------------------------------------ ranking and reduction


def fake_set(points, q_stars=None, eligible=None, m=12):
    points = np.asarray(points, dtype=float)
    q_stars = np.zeros(len(points)) if q_stars is None else q_stars
    eligible = [True] * len(points) if eligible is None else eligible
    recs = [EligibilityRecord(p, float(q), None, bool(el), i)
            for i, (p, q, el) in enumerate(zip(points, q_stars, eligible))]
    return EligibilitySet(recs, KSThreshold(0.05, m, 50, threshold(0.05, m, 50).q),
                          {"E0": Box.cube(0, 2, 2).to_dict()})


def test_rank_scores():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(0, 2, 4000), np.full(4000, 0.7)])
    scores, ranking = rank_parameters(fake_set(pts))
    # the central 95% of a uniform spread covers 95% of the width
    assert scores[0] == pytest.approx(0.05, abs=0.01)
    assert scores[1] == 1.0
    assert ranking == [1, 0]


def test_rank_empty():
    with pytest.raises(EmptySetError):
        rank_parameters(fake_set([[1.0, 1.0]], eligible=[False]))


def test_reduce_zero_is_identity():
    s = fake_set(np.zeros((5, 2)), q_stars=[0.3, 1.2, 0.8, 1.5, 0.1])
    red, q_r, a = reduce_set(s, 0)
    assert [r.eligible for r in red.records] == [True] * 5
    assert q_r == 1.5
    assert a == pytest.approx(12 * (1 - kolmogorov_cdf(1.5)))


def test_reduce_at_threshold_recovers_alpha():
    q = threshold(0.05, 12, 50).q
    s = fake_set(np.zeros((3, 2)), q_stars=[0.2, q, 1.0])
    _, q_r, a = reduce_set(s, 0)
    assert q_r == q and a == pytest.approx(0.05, abs=1e-9)


def test_reduce_counts():
    q = np.linspace(1.0, 1.89, 114)
    s = fake_set(np.zeros((114, 2)), q_stars=q[::-1], m=32)
    for r, n in [(0, 114), (2, 112), (4, 110), (6, 108), (8, 105), (10, 103)]:
        red, q_r, _ = reduce_set(s, r)
        assert len(red.eligible) == n == math.ceil((1 - r / 100) * 114 - 1e-9)
        assert q_r == max(x.q_star for x in red.eligible)
        assert all(x.q_star <= q_r for x in red.eligible)
        dropped = [x for x in s.records if x.eligible and not red.records[x.index].eligible]
        assert all(x.q_star >= q_r for x in dropped)


def test_reduce_confidence_from_table_q():
    s = fake_set(np.zeros((2, 2)), q_stars=[1.0, 1.879], m=32)
    _, _, a = reduce_set(s, 0)
    assert abs((1 - a) - 0.946) <= 0.002


@pytest.mark.parametrize("r", [-1, 100, 150])
def test_reduce_domain(r):
    with pytest.raises(DomainError):
        reduce_set(fake_set(np.zeros((2, 2))), r)


# ------------------------------------------------------------ subsampling


def test_subsample_full_size_and_single(osc2_data, spec12, small_set):
    e = np.array([r.e for r in small_set.records])
    sims = simulate_summaries(OSC2, spec12, e, OSC2.A, 120, 4)
    rows = subsample_study(osc2_data, sims, e, [1, 50], 2, 0.05, seed=0)
    assert rows[0]["eligible_fraction"] == 1.0
    assert rows[1]["replications"] == 1
    assert rows[1]["eligible_fraction"] == pytest.approx(small_set.eligible_fraction)
    with pytest.raises(DomainError):
        subsample_study(osc2_data, sims, e, [51], 1, 0.05, seed=0)
