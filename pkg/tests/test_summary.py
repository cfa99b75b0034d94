import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drocal.errors import SpecError
from drocal.model import OSC2, Trajectory
from drocal.summary import (
    PeakSpec,
    SummarySpec,
    default_bands,
    default_spec,
    dft_coefficients,
    extract_peaks,
    summarize,
    summarize_batch,
)

N, DT = 128, 0.1
T = np.arange(N) * DT


def tone(k0, fn=np.cos, shift=0.0):
    return Trajectory(fn(2 * np.pi * (k0 / (N * DT)) * T + shift)[None, :], DT)


def test_constant_is_dc_only():
    f, c = dft_coefficients(Trajectory(np.full((1, N), 3.5), DT))
    assert c[0] == pytest.approx(3.5)
    assert np.all(np.abs(c[1:]) < 1e-12)
    np.testing.assert_allclose(f, np.arange(N) / (N * DT))


def test_on_bin_cosine():
    _, c = dft_coefficients(tone(10))
    assert abs(c[10]) == pytest.approx(0.5, abs=1e-9)
    assert abs(c[N - 10]) == pytest.approx(0.5, abs=1e-9)
    others = np.delete(np.abs(c), [10, N - 10])
    assert np.all(others < 1e-9)


def test_peak_of_cosine_at_bin_frequency():
    # bins are 1/12.8 Hz apart here, so put the tone on bin 13 (1.015625 Hz)
    f, c = dft_coefficients(tone(13))
    out = extract_peaks(f, c, [PeakSpec("real", (0.0, 1.59), "max")])
    assert out[0] == pytest.approx(0.5, abs=1e-9)
    assert out[1] == pytest.approx(13 / 12.8)


def test_peak_at_exactly_one_hz():
    # with dt = 0.01 and N = 100, 1 Hz is bin 1
    t = np.arange(100) * 0.01
    traj = Trajectory(np.cos(2 * np.pi * t)[None], 0.01)
    f, c = dft_coefficients(traj)
    out = extract_peaks(f, c, [PeakSpec("real", (0.0, 1.59), "max")])
    assert out[0] == pytest.approx(0.5, abs=1e-9) and out[1] == pytest.approx(1.0)


def test_sine_imag_min():
    t = np.arange(100) * 0.01
    traj = Trajectory(np.sin(2 * np.pi * t)[None], 0.01)
    f, c = dft_coefficients(traj)
    out = extract_peaks(f, c, [PeakSpec("imag", (0.0, 1.59), "min")])
    assert out[0] == pytest.approx(-0.5, abs=1e-9) and out[1] == pytest.approx(1.0)


def test_zero_signal_tie_goes_low():
    f, c = dft_coefficients(Trajectory(np.zeros((1, N)), DT))
    out = extract_peaks(f, c, [PeakSpec("real", (1.71, 5.0), "max"), PeakSpec("imag", (0.3, 1.0), "min")])
    assert out[0] == 0.0 and out[1] == f[f >= 1.71][0]
    assert out[2] == 0.0 and out[3] == f[f >= 0.3][0]


def test_empty_band_is_spec_error():
    f, c = dft_coefficients(tone(3))
    with pytest.raises(SpecError):
        extract_peaks(f, c, [PeakSpec("real", (0.01, 0.05), "max")])
    spec = SummarySpec(((PeakSpec("real", (0.01, 0.05), "max"),),))
    with pytest.raises(SpecError):
        summarize(tone(3), spec)


def test_band_beyond_nyquist_rejected():
    spec = SummarySpec(((PeakSpec("real", (1.0, 6.0), "max"),),))
    with pytest.raises(SpecError):
        summarize(tone(3), spec)


def test_bad_peakspec():
    with pytest.raises(SpecError):
        PeakSpec("abs", (0, 1), "max")
    with pytest.raises(SpecError):
        PeakSpec("real", (2, 1), "max")
    with pytest.raises(SpecError):
        PeakSpec("real", (0, 1), "median")


def test_default_dimensions():
    assert default_spec(128, 0.1).m == 12
    assert default_spec(128, 0.1, n_channels=3).m == 32
    assert len(default_spec().labels()) == 12


def test_default_bands_switch():
    # Hz bands fit under Nyquist at dt = 0.05 (10 Hz) ...
    assert default_bands(256, 0.05) == ((0.0, 1.59), (1.71, 5.98))
    # ... but not at dt = 0.1, where DFT bins 1-14 and 15-50 are used
    (lo1, hi1), (lo2, hi2) = default_bands(128, 0.1)
    df = 1 / 12.8
    assert (lo1, hi1, lo2, hi2) == pytest.approx((df, 14 * df, 15 * df, 50 * df))


def test_identical_trajectories_identical_summaries():
    spec = default_spec()
    y = OSC2.simulate([0.2, 0.3, 0.4], [1, 1, 1, 1])
    np.testing.assert_array_equal(summarize(y, spec), summarize(OSC2.simulate([0.2, 0.3, 0.4], [1, 1, 1, 1]), spec))


def test_frequencies_inside_bands():
    spec = default_spec()
    out = summarize_batch(OSC2.simulate_batch(OSC2.sample_truth(30, 1), [1.2, 0.7, 1.5, 0.3]), 0.1, spec)
    bands = [p.band for p in spec.channels[0]]
    for s, (lo, hi) in enumerate(bands):
        assert np.all((out[:, 2 * s + 1] >= lo - 1e-12) & (out[:, 2 * s + 1] <= hi + 1e-12))


def test_batch_matches_single():
    spec = default_spec(n_channels=3)
    m3 = OSC2.with_channels(3)
    a = OSC2.sample_truth(5, 4)
    batch = summarize_batch(m3.simulate_batch(a, [1, 1, 1, 1]), 0.1, spec)
    for j in range(5):
        np.testing.assert_array_equal(batch[j], summarize(m3.simulate(a[j], [1, 1, 1, 1]), spec))


def test_spec_roundtrip():
    spec = default_spec(n_channels=2)
    assert SummarySpec.from_dict(spec.to_dict()) == spec


series = arrays(np.float64, N, elements=st.floats(-10, 10))


@settings(max_examples=50, deadline=None)
@given(series)
def test_parseval(y):
    _, c = dft_coefficients(Trajectory(y[None], DT))
    assert np.sum(y**2) / N == pytest.approx(np.sum(np.abs(c) ** 2), rel=1e-9, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_scaling_equivariance(seed, scale):
    y = np.random.default_rng(seed).normal(size=(1, N))
    spec = default_spec()
    s1 = summarize(Trajectory(y, DT), spec)
    s2 = summarize(Trajectory(scale * y, DT), spec)
    np.testing.assert_allclose(s2[0::2], scale * s1[0::2], rtol=1e-9, atol=1e-12)
    np.testing.assert_array_equal(s2[1::2], s1[1::2])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 50), st.floats(0, 2 * np.pi))
def test_time_shift_preserves_modulus(k0, phase):
    traj = tone(k0, shift=phase)
    f = np.arange(N) / (N * DT)
    band = (f[k0] - 1e-6, f[k0] + 1e-6)
    out = extract_peaks(*dft_coefficients(traj), [PeakSpec("real", band, "max"), PeakSpec("imag", band, "max")])
    assert out[0] ** 2 + out[2] ** 2 == pytest.approx(0.25, abs=1e-9)
