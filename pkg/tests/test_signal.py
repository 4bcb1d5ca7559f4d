import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosinr.signal import analytic_signal, hilbert_fft, interp_complex
from sosinr.simulate import ChannelData


def _dft_analytic(x):
    """Analytic signal from an explicit O(N^2) DFT of the zero-padded trace."""
    n = len(x)
    nfft = 1 << (n - 1).bit_length()
    xp = np.zeros(nfft)
    xp[:n] = x
    k = np.arange(nfft)
    w = np.exp(-2j * np.pi * np.outer(k, k) / nfft)
    spec = w @ xp
    h = np.zeros(nfft)
    h[0] = h[nfft // 2] = 1
    h[1 : nfft // 2] = 2
    return (np.conj(w) @ (spec * h) / nfft)[:n]


def test_cosine_becomes_complex_exponential():
    fs, f = 25e6, 5e6
    n = 1000
    t = np.arange(n) / fs
    rf = ChannelData(np.cos(2 * np.pi * f * t)[None, None, :], fs, 0.0)
    iq = analytic_signal(rf).iq[0, 0]
    mid = slice(100, 900)
    np.testing.assert_allclose(np.abs(iq[mid]), 1.0, atol=1e-2)
    np.testing.assert_allclose(iq[mid], np.exp(1j * 2 * np.pi * f * t[mid]), atol=1e-2)


def test_zero_trace():
    iq = analytic_signal(ChannelData(np.zeros((2, 2, 64)), 25e6)).iq
    assert not iq.any()


def test_matches_dft_oracle_and_preserves_real_part():
    x = np.random.default_rng(4).standard_normal(100)
    ours = hilbert_fft(x)
    oracle = _dft_analytic(x)
    peak = np.abs(x).max()
    assert np.max(np.abs(ours - oracle)) < 1e-9 * peak
    assert np.max(np.abs(ours.real - x)) < 1e-9 * peak


@settings(max_examples=30, deadline=None)
@given(st.integers(8, 300), st.integers(0, 2**32 - 1))
def test_magnitude_invariant_to_sign_flip(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    np.testing.assert_allclose(np.abs(hilbert_fft(x)), np.abs(hilbert_fft(-x)), rtol=0, atol=1e-12)


def test_rejects_short_and_nonfinite():
    with pytest.raises(ValueError):
        analytic_signal(ChannelData(np.zeros((1, 1, 4)), 25e6))
    bad = np.zeros((2, 3, 16))
    bad[1, 2, 5] = np.inf
    with pytest.raises(ValueError, match=r"\(1, 2\)"):
        analytic_signal(ChannelData(bad, 25e6))


TRACE = np.array([1 + 2j, -0.5 + 1j, 3 - 1j, 0.25 + 0.5j, -2 + 0j])
FS, T0 = 10.0, 0.3


def test_interp_nodes_and_midpoints():
    for k in range(len(TRACE)):
        assert interp_complex(TRACE, FS, T0, T0 + k / FS) == pytest.approx(TRACE[k], abs=1e-12)
    for k in range(len(TRACE) - 1):
        t = T0 + (k + 0.5) / FS
        assert interp_complex(TRACE, FS, T0, t) == pytest.approx((TRACE[k] + TRACE[k + 1]) / 2, abs=1e-12)


def test_interp_outside_is_zero():
    for t in (T0 - 1e-9, T0 + (len(TRACE) - 1) / FS + 1e-9, -10.0, 10.0):
        v, d = interp_complex(TRACE, FS, T0, t, return_derivative=True)
        assert v == 0 and d == 0


def test_interp_derivative_matches_finite_difference():
    h = 1e-7
    for k in range(len(TRACE) - 1):
        t = T0 + (k + 0.5) / FS
        _, d = interp_complex(TRACE, FS, T0, t, return_derivative=True)
        fd = (interp_complex(TRACE, FS, T0, t + h) - interp_complex(TRACE, FS, T0, t - h)) / (2 * h)
        assert abs(d - fd) / abs(fd) < 1e-6


def test_interp_continuous_inside_and_at_end():
    ts = np.linspace(T0, T0 + (len(TRACE) - 1) / FS, 4001)
    vals = np.array([interp_complex(TRACE, FS, T0, t) for t in ts])
    max_step = np.max(np.abs(np.diff(TRACE))) * (ts[1] - ts[0]) * FS
    assert np.max(np.abs(np.diff(vals))) <= max_step * (1 + 1e-9)
    end = T0 + (len(TRACE) - 1) / FS
    assert interp_complex(TRACE, FS, T0, end) == pytest.approx(TRACE[-1])


def test_interp_needs_two_samples():
    with pytest.raises(ValueError):
        interp_complex(np.array([1.0 + 0j]), FS, T0, T0)
