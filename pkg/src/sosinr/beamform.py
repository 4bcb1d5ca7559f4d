"""Straight-ray travel times and differentiable delay-and-sum beamforming.

Travel times integrate slowness along the straight segment between two points
with the composite midpoint rule (step at most ``RAY_STEP``); the sound speed
at each quadrature node is a bilinear interpolation of the SoS grid, clamped
to the edge values outside the node box.

Gradients are propagated by hand. The convention for complex quantities is
that the gradient of a real scalar ``L`` with respect to ``z = a + ib`` is
packed as ``dL/da + i dL/db``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .core import ArrayGeometry, DomainError, ImagingGrid, SoSGrid, pixel_positions
from .signal import AnalyticChannelData, interp_linear

RAY_STEP = 1e-4


class RayOperator:
    """Precomputed quadrature for a batch of straight rays through a grid.

    Geometry is fixed at construction; ``times`` and ``adjoint`` then only
    depend on the grid SoS values, flattened depth-major.
    """

    def __init__(self, grid: ImagingGrid, src, dst, step: float = RAY_STEP):
        src = np.atleast_2d(np.asarray(src, dtype=np.float64))
        dst = np.atleast_2d(np.asarray(dst, dtype=np.float64))
        src, dst = np.broadcast_arrays(src, dst)
        self.grid = grid
        self.shape = src.shape[:-1]
        src = src.reshape(-1, 2)
        dst = dst.reshape(-1, 2)
        self.n_rays = src.shape[0]

        length = np.hypot(*(dst - src).T)
        n_steps = np.ceil(length / step - 1e-9).astype(np.int64)
        n_steps[length == 0] = 0
        n_steps = np.maximum(n_steps, (length > 0).astype(np.int64))
        ds = np.divide(length, n_steps, out=np.zeros_like(length), where=n_steps > 0)

        ray = np.repeat(np.arange(self.n_rays), n_steps)
        starts = np.repeat(np.cumsum(n_steps) - n_steps, n_steps)
        k = np.arange(ray.size) - starts
        frac = (k + 0.5) / n_steps[ray]
        pts = src[ray] + frac[:, None] * (dst[ray] - src[ray])

        fx = np.clip((pts[:, 0] - grid.origin[0]) / grid.spacing_lateral, 0, grid.n_lateral - 1)
        fz = np.clip((pts[:, 1] - grid.origin[1]) / grid.spacing_depth, 0, grid.n_depth - 1)
        ix = np.minimum(np.floor(fx).astype(np.int64), grid.n_lateral - 2)
        iz = np.minimum(np.floor(fz).astype(np.int64), grid.n_depth - 2)
        wx, wz = fx - ix, fz - iz
        cell = iz * grid.n_lateral + ix
        nx = grid.n_lateral
        n_samples = ray.size

        # B maps grid values to quadrature-node values (bilinear), R sums ds/c per ray.
        cols = np.stack([cell, cell + 1, cell + nx, cell + nx + 1], axis=1)
        vals = np.stack([(1 - wx) * (1 - wz), wx * (1 - wz), (1 - wx) * wz, wx * wz], axis=1)
        self._interp = sparse.csr_matrix(
            (vals.ravel(), cols.ravel(), np.arange(0, 4 * n_samples + 1, 4)), shape=(n_samples, grid.size)
        )
        self._sum = sparse.csr_matrix(
            (ds[ray], np.arange(n_samples), np.concatenate([[0], np.cumsum(n_steps)])),
            shape=(self.n_rays, n_samples),
        )
        self.length = length

    def times(self, c) -> np.ndarray:
        cs = self._interp @ np.asarray(c, dtype=np.float64).ravel()
        return (self._sum @ (1.0 / cs)).reshape(self.shape)

    def adjoint(self, c, g_t) -> np.ndarray:
        """Gradient w.r.t. grid SoS values of ``sum(g_t * times(c))``."""
        cs = self._interp @ np.asarray(c, dtype=np.float64).ravel()
        g_s = -(self._sum.T @ np.asarray(g_t, dtype=np.float64).ravel()) / (cs * cs)
        return (self._interp.T @ g_s).reshape(self.grid.shape)


def _check_in_box(grid: ImagingGrid, p, what: str):
    pad = max(grid.spacing_lateral, grid.spacing_depth)
    if not grid.contains(p, pad=pad * (1 + 1e-9)):
        raise DomainError(f"{what} point {tuple(p)} lies outside the SoS grid padded by one cell")


def travel_time(src, dst, sos: SoSGrid, return_adjoint: bool = False):
    """Straight-ray travel time in seconds from ``src`` to ``dst``.

    With ``return_adjoint`` also returns ``dt/dc`` for every grid value as an
    ``[n_depth, n_lateral]`` array.
    """
    _check_in_box(sos.grid, src, "source")
    _check_in_box(sos.grid, dst, "destination")
    op = RayOperator(sos.grid, src, dst)
    t = float(op.times(sos.values)[0])
    if return_adjoint:
        return t, op.adjoint(sos.values, np.ones(1))
    return t


@dataclass(frozen=True)
class ApertureStack:
    values: np.ndarray = field(repr=False)
    f_number: float
    valid_mask: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class BModeImage:
    envelope_db: np.ndarray = field(repr=False)
    dynamic_range: float


def receive_mask(geom: ArrayGeometry, pixels: np.ndarray, f_number: float) -> np.ndarray:
    """Receive elements inside the f-number cone of each pixel, ``[n_pixels, n_rx]``."""
    half = pixels[:, 1:2] / (2.0 * f_number)
    return np.abs(geom.x[None, :] - pixels[:, 0:1]) <= half * (1 + 1e-12)


class DASBeamformer:
    """Full synthetic-aperture delay-and-sum with a hand-written adjoint.

    Element-to-pixel travel times are shared by transmit and receive legs, so
    a single ``RayOperator`` over ``n_elements x n_pixels`` rays suffices.
    """

    def __init__(
        self,
        iq: AnalyticChannelData,
        geom: ArrayGeometry,
        pixel_grid: ImagingGrid,
        sos_grid: ImagingGrid,
        f_number: float = 1.0,
        threads: int = 1,
    ):
        if f_number <= 0:
            raise ValueError("f_number must be > 0")
        n_el = geom.element_count
        if iq.iq.shape[:2] != (n_el, n_el):
            raise ValueError(f"channel data shape {iq.iq.shape[:2]} does not match {n_el} elements")
        for e in geom.element_positions:
            _check_in_box(sos_grid, e, "element")
        self.iq = iq
        self.geom = geom
        self.pixel_grid = pixel_grid
        self.sos_grid = sos_grid
        self.f_number = float(f_number)
        self.threads = max(1, int(threads))
        self.pixels = pixel_positions(pixel_grid)
        for p in (self.pixels[0], self.pixels[-1]):
            _check_in_box(sos_grid, p, "pixel")
        self.rays = RayOperator(sos_grid, geom.element_positions[:, None, :], self.pixels[None, :, :])
        self.mask = receive_mask(geom, self.pixels, f_number)

    def _map(self, fn, items):
        if self.threads == 1:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(fn, items))

    def forward(self, c, keep: bool = False):
        """Aperture stack ``[n_pixels, n_rx]`` for grid SoS values ``c``.

        With ``keep`` the interpolation slopes needed by ``backward`` are
        returned as a second value.
        """
        tau = self.rays.times(c)  # [n_el, n_pix]
        iq = self.iq.iq
        fs, t0 = self.iq.sampling_frequency, self.iq.t0

        def one_rx(r):
            val, slope = interp_linear(iq[:, r, :], fs, t0, tau + tau[r][None, :])
            return val.sum(axis=0), (slope if keep else None)

        out = self._map(one_rx, range(self.geom.element_count))
        stack = np.stack([o[0] for o in out], axis=1)
        stack = np.where(self.mask, stack, 0)
        if keep:
            slopes = np.stack([o[1] for o in out], axis=1)  # [tx, rx, pix]
            return stack, (np.asarray(c, dtype=np.float64), slopes)
        return stack

    def backward(self, saved, g_stack) -> np.ndarray:
        """Gradient w.r.t. grid SoS values given ``dL/dstack`` (packed complex)."""
        c, slopes = saved
        g = np.where(self.mask, g_stack, 0)  # [pix, rx]
        # dL/dt[tx, rx, pix] = Re(conj(g[pix, rx]) * slope[tx, rx, pix])
        d = np.real(np.conj(g.T)[None, :, :] * slopes)
        g_tau = d.sum(axis=1) + d.sum(axis=0)
        return self.rays.adjoint(c, g_tau)

    def stack(self, sos: SoSGrid) -> ApertureStack:
        values = self.forward(sos.values)
        return ApertureStack(values, self.f_number, self.mask.copy())


def das_beamform(
    iq: AnalyticChannelData,
    geom: ArrayGeometry,
    grid: ImagingGrid,
    sos: SoSGrid,
    f_number: float = 1.0,
    return_vjp: bool = False,
    threads: int = 1,
):
    """Beamform ``iq`` onto every node of ``grid`` using ``sos`` for delays.

    With ``return_vjp`` also returns a function mapping ``dL/dstack`` to
    ``dL/dc`` on the SoS grid.
    """
    bf = DASBeamformer(iq, geom, grid, sos.grid, f_number, threads=threads)
    values, saved = bf.forward(sos.values, keep=True)
    stack = ApertureStack(values, float(f_number), bf.mask.copy())
    if return_vjp:
        return stack, lambda g: bf.backward(saved, g)
    return stack


def coherence(stack) -> float:
    """Coherent-to-incoherent energy ratio of an aperture stack, in [0, 1]."""
    v = stack.values if isinstance(stack, ApertureStack) else np.asarray(stack)
    n_r = v.shape[1]
    num = np.sum(np.abs(v.sum(axis=1)) ** 2)
    den = np.sum(np.abs(v) ** 2) * n_r
    return float(num / den) if den > 0 else 0.0


def bmode(stack: ApertureStack, grid: ImagingGrid, dynamic_range: float = 60.0) -> BModeImage:
    v = stack.values
    if not np.all(np.isfinite(v)):
        raise ValueError("aperture stack contains non-finite values")
    env = np.abs(v.sum(axis=1)).reshape(grid.shape)
    peak = env.max()
    if peak == 0:
        raise ValueError("no signal to display")
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(env / peak)
    return BModeImage(np.maximum(db, -dynamic_range), float(dynamic_range))
