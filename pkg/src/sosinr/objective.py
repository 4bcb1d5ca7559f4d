"""Phase-shift error and total-variation terms of the training loss.

Gradients w.r.t. complex stack entries are packed as ``dL/dRe + i dL/dIm``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamform import ApertureStack


@dataclass(frozen=True)
class LossBreakdown:
    pe: float
    tv: float
    alpha: float
    total: float


def _values_and_mask(stack):
    if isinstance(stack, ApertureStack):
        return stack.values, stack.valid_mask
    v = np.asarray(stack)
    return v, np.ones(v.shape, dtype=bool)


def phase_error_loss(stack, return_grad: bool = False, lag: int = 1):
    """Magnitude-weighted mean squared phase step between receive channels.

    For each pixel and each pair of valid receive channels ``lag`` apart the
    phase of ``s[r+lag] * conj(s[r])`` (principal branch) is squared and
    weighted by ``|s[r+lag] s[r]|``; the result is normalised by the total
    weight. ``lag=1`` compares adjacent channels.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    v, mask = _values_and_mask(stack)
    if v.shape[1] <= lag:
        return (0.0, np.zeros_like(v, dtype=np.complex128)) if return_grad else 0.0
    a, b = v[:, lag:], v[:, :-lag]
    pair = mask[:, lag:] & mask[:, :-lag]
    z = np.where(pair, a * np.conj(b), 0)
    w = np.abs(z)
    phi = np.angle(z)
    den = w.sum()
    loss = float((w * phi**2).sum() / den) if den > 0 else 0.0
    if not return_grad:
        return loss
    g = np.zeros_like(v, dtype=np.complex128)
    if den > 0:
        nz = w > 0
        unit = np.divide(z, w, out=np.zeros_like(z), where=nz)
        gz = unit * (phi**2 - loss + 2j * phi) / den
        g[:, lag:] += gz * b
        g[:, :-lag] += np.conj(gz) * a
    return loss, g


def tv_loss(sos, return_grad: bool = False):
    """Anisotropic L1 total variation averaged over neighbour pairs."""
    v = np.asarray(getattr(sos, "values", sos), dtype=np.float64)
    if v.ndim != 2 or min(v.shape) < 2:
        raise ValueError("TV needs a 2D map of at least 2 x 2")
    dz = v[1:, :] - v[:-1, :]
    dx = v[:, 1:] - v[:, :-1]
    n_pairs = dz.size + dx.size
    loss = float((np.abs(dz).sum() + np.abs(dx).sum()) / n_pairs)
    if not return_grad:
        return loss
    sz, sx = np.sign(dz) / n_pairs, np.sign(dx) / n_pairs
    g = np.zeros_like(v)
    g[1:, :] += sz
    g[:-1, :] -= sz
    g[:, 1:] += sx
    g[:, :-1] -= sx
    return loss, g


def total_loss(stack, sos, alpha: float = 0.01, return_grad: bool = False, lag: int = 1):
    """Weighted sum ``pe + alpha * tv``.

    With ``return_grad`` returns ``(breakdown, dL/dstack, dL/dsos)``.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if return_grad:
        pe, g_stack = phase_error_loss(stack, return_grad=True, lag=lag)
        tv, g_tv = tv_loss(sos, return_grad=True)
        return LossBreakdown(pe, tv, alpha, pe + alpha * tv), g_stack, alpha * g_tv
    pe = phase_error_loss(stack, lag=lag)
    tv = tv_loss(sos)
    return LossBreakdown(pe, tv, alpha, pe + alpha * tv)
