"""Analytic-signal conversion and linear interpolation of complex traces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simulate import ChannelData


@dataclass(frozen=True)
class AnalyticChannelData:
    iq: np.ndarray = field(repr=False)
    sampling_frequency: float
    t0: float

    @property
    def n_samples(self) -> int:
        return self.iq.shape[-1]


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def hilbert_fft(x: np.ndarray) -> np.ndarray:
    """Analytic signal of real traces along the last axis.

    Traces are zero-padded to the next power of two, positive frequencies are
    doubled, negative ones zeroed, and the inverse transform is truncated back
    to the original length.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    nfft = _next_pow2(n)
    spec = np.fft.fft(x, n=nfft, axis=-1)
    h = np.zeros(nfft)
    h[0] = 1.0
    h[nfft // 2] = 1.0
    h[1 : nfft // 2] = 2.0
    return np.fft.ifft(spec * h, axis=-1)[..., :n]


def analytic_signal(rf: ChannelData) -> AnalyticChannelData:
    data = np.asarray(rf.rf, dtype=np.float64)
    if data.shape[-1] < 8:
        raise ValueError(f"need at least 8 samples per trace, got {data.shape[-1]}")
    bad = ~np.isfinite(data)
    if bad.any():
        idx = np.argwhere(bad)[0][:-1]
        raise ValueError(f"non-finite sample in trace {tuple(int(i) for i in idx)}")
    iq = hilbert_fft(data)
    return AnalyticChannelData(iq, rf.sampling_frequency, rf.t0)


def interp_linear(traces: np.ndarray, fs: float, t0: float, t: np.ndarray):
    """Sample ``traces[k, :]`` at times ``t[k, ...]`` by linear interpolation.

    ``traces`` has shape ``[K, n]`` and ``t`` shape ``[K, ...]``. Returns the
    interpolated values and their time derivative. Times outside the closed
    sampled interval yield exactly zero for both.
    """
    traces = np.asarray(traces)
    n = traces.shape[-1]
    f = (np.asarray(t) - t0) * fs
    inside = (f >= 0) & (f <= n - 1)
    i0 = np.clip(np.floor(f).astype(np.int64), 0, n - 2)
    frac = np.where(inside, f - i0, 0.0)
    rows = np.arange(traces.shape[0]).reshape((-1,) + (1,) * (f.ndim - 1))
    a = traces[rows, i0]
    b = traces[rows, i0 + 1]
    val = np.where(inside, a + frac * (b - a), 0)
    slope = np.where(inside, (b - a) * fs, 0)
    return val, slope


def interp_complex(trace, fs: float, t0: float, t: float, return_derivative: bool = False):
    """Value of a sampled trace at time ``t`` (linear interpolation).

    With ``return_derivative`` the pair ``(value, d value / d t)`` is returned.
    """
    trace = np.asarray(trace)
    if trace.shape[-1] < 2:
        raise ValueError("trace needs at least 2 samples")
    val, slope = interp_linear(trace[None, :], fs, t0, np.array([[t]], dtype=np.float64))
    if return_derivative:
        return val[0, 0], slope[0, 0]
    return val[0, 0]
