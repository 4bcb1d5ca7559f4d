"""Autofocus optimisation of the SoS map through the differentiable beamformer.

Two parameterisations share one loop:

* ``inr``: the map is ``c0 + siren(coords)`` with the network weights trained;
* ``grid_baseline``: the map is ``c0 + output_scale * theta`` with one free
  value per grid node, optimised directly.

One epoch is a single full-batch Adam step over every grid node.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .beamform import ApertureStack, BModeImage, DASBeamformer, bmode
from .core import SOS_MAX, SOS_MIN, ArrayGeometry, ImagingGrid, Seed, SoSGrid, normalize_coords, pixel_positions
from .inr import SirenNetwork, siren_backward, siren_forward
from .objective import LossBreakdown, total_loss
from .signal import AnalyticChannelData

log = logging.getLogger(__name__)

MODES = ("inr", "grid_baseline")


class NumericalAbort(RuntimeError):
    """Optimisation produced a non-finite loss or gradient."""

    def __init__(self, message: str, epoch: int, diagnostics: dict):
        super().__init__(message)
        self.epoch = epoch
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class AdamState:
    step: int
    m: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(0, np.zeros(n), np.zeros(n), **kw)


def adam_step(state: AdamState, params, grad, epoch: Optional[int] = None):
    """One bias-corrected Adam update. Returns ``(new_state, new_params)``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or state.m.shape != params.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    if not np.all(np.isfinite(grad)):
        where = f" at epoch {epoch}" if epoch is not None else ""
        raise NumericalAbort(f"non-finite gradient{where}", epoch if epoch is not None else -1,
                             {"grad_norm": float(np.linalg.norm(np.nan_to_num(grad)))})
    step = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1**step)
    v_hat = v / (1 - state.beta2**step)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, step=step, m=m, v=v), new


def compose_sos(delta, c0: SoSGrid, clamp=(SOS_MIN, SOS_MAX), return_mask: bool = False):
    """``c0 + delta`` clamped to ``clamp``.

    With ``return_mask`` also returns the boolean map of cells that were not
    clamped; only those pass gradient back to ``delta``.
    """
    delta = np.asarray(delta, dtype=np.float64).reshape(c0.grid.shape)
    raw = c0.values + delta
    lo, hi = clamp
    c = SoSGrid(c0.grid, np.clip(raw, lo, hi))
    if return_mask:
        return c, (raw >= lo) & (raw <= hi)
    return c


@dataclass(frozen=True)
class EstimationConfig:
    c0: SoSGrid
    mode: str = "inr"
    epochs: int = 1000
    alpha: float = 0.01
    clamp: tuple[float, float] = (SOS_MIN, SOS_MAX)
    seed: Seed = Seed(0)
    lr: float = 1e-3
    f_number: float = 1.0
    output_scale: float = 100.0
    pixel_grid: Optional[ImagingGrid] = None
    pe_lag: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.clamp[0] < self.clamp[1]:
            raise ValueError("clamp min must be below clamp max")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass(frozen=True)
class EstimationResult:
    sos_map: SoSGrid
    loss_trace: tuple[LossBreakdown, ...]
    final_bmode: BModeImage
    wall_time: float
    params: np.ndarray = field(repr=False)
    net: Optional[SirenNetwork] = None


class Objective:
    """Loss and gradient of the SoS parameters for one data set."""

    def __init__(self, iq: AnalyticChannelData, geom: ArrayGeometry, grid: ImagingGrid, cfg: EstimationConfig,
                 net: Optional[SirenNetwork] = None):
        if cfg.c0.grid != grid:
            raise ValueError("c0 must be defined on the estimation grid")
        if cfg.mode == "inr":
            if net is None:
                raise ValueError("inr mode needs a SirenNetwork")
            if net.layer_sizes[0] != 2:
                raise ValueError("network input width must be 2")
        self.cfg = cfg
        self.net = net
        self.grid = grid
        self.coords = normalize_coords(grid, pixel_positions(grid))
        self.bf = DASBeamformer(iq, geom, cfg.pixel_grid or grid, grid, cfg.f_number, threads=cfg.threads)

    def initial_params(self) -> np.ndarray:
        if self.cfg.mode == "inr":
            return self.net.parameters()
        return np.zeros(self.grid.size)

    def network(self, params) -> Optional[SirenNetwork]:
        return self.net.with_parameters(params) if self.cfg.mode == "inr" else None

    def delta(self, params):
        if self.cfg.mode == "inr":
            return siren_forward(self.network(params), self.coords)
        return self.cfg.output_scale * np.asarray(params)

    def sos(self, params) -> SoSGrid:
        return compose_sos(self.delta(params), self.cfg.c0, self.cfg.clamp)

    def __call__(self, params, with_grad: bool = True):
        """Returns ``(breakdown, grad)`` (``grad`` is None without ``with_grad``)."""
        net = self.network(params)
        if net is not None:
            delta = siren_forward(net, self.coords)
        else:
            delta = self.cfg.output_scale * np.asarray(params)
        sos, passed = compose_sos(delta, self.cfg.c0, self.cfg.clamp, return_mask=True)
        if not with_grad:
            stack = ApertureStack(self.bf.forward(sos.values), self.cfg.f_number, self.bf.mask)
            return total_loss(stack, sos, self.cfg.alpha, lag=self.cfg.pe_lag), None
        values, saved = self.bf.forward(sos.values, keep=True)
        stack = ApertureStack(values, self.cfg.f_number, self.bf.mask)
        breakdown, g_stack, g_tv = total_loss(stack, sos, self.cfg.alpha, return_grad=True, lag=self.cfg.pe_lag)
        g_c = self.bf.backward(saved, g_stack) + g_tv
        g_delta = np.where(passed, g_c, 0.0).ravel()
        if net is not None:
            grad = siren_backward(net, self.coords, g_delta)
        else:
            grad = self.cfg.output_scale * g_delta
        return breakdown, grad


def run_estimation(
    iq: AnalyticChannelData,
    geom: ArrayGeometry,
    grid: ImagingGrid,
    cfg: EstimationConfig,
    net: Optional[SirenNetwork] = None,
    callback: Optional[Callable[[int, np.ndarray, LossBreakdown], None]] = None,
) -> EstimationResult:
    """Optimise the SoS map for ``cfg.epochs`` full-batch Adam steps.

    ``loss_trace[k]`` is the loss evaluated before the k-th update.
    ``callback(epoch, params, breakdown)`` runs after every update.
    """
    start = time.perf_counter()
    obj = Objective(iq, geom, grid, cfg, net)
    params = obj.initial_params()
    state = AdamState.zeros(params.size, lr=cfg.lr)
    trace = []
    for epoch in range(cfg.epochs):
        breakdown, grad = obj(params)
        if not np.isfinite(breakdown.total):
            sos = obj.delta(params)
            raise NumericalAbort(
                f"non-finite loss at epoch {epoch}",
                epoch,
                {"delta_c": np.asarray(sos).tolist(), "grad_norm": float(np.linalg.norm(np.nan_to_num(grad)))},
            )
        trace.append(breakdown)
        state, params = adam_step(state, params, grad, epoch=epoch)
        if epoch % 50 == 0:
            log.info("epoch %d pe=%.5f tv=%.4f total=%.5f", epoch, breakdown.pe, breakdown.tv, breakdown.total)
        if callback is not None:
            callback(epoch, params, breakdown)
    sos = obj.sos(params)
    final = bmode(obj.bf.stack(sos), obj.bf.pixel_grid)
    return EstimationResult(sos, tuple(trace), final, time.perf_counter() - start, params, obj.network(params))
