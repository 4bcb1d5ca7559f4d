"""Synthetic-aperture RF simulation from point scatterers in a known SoS map.

Single-scattering, straight-ray model: each (transmit, receive) trace is a sum
of pulse echoes delayed by the same travel-time integral the beamformer
inverts. The pulse-echo response is a Gaussian-modulated cosine

    g(t) = exp(-t^2 / (2 sigma^2)) cos(2 pi f0 t),
    sigma = sqrt(2 ln 2) / (pi * B * f0),

where ``B`` is the fractional bandwidth, so that the -6 dB width of the
spectrum equals ``B * f0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SOS_MAX, SOS_MIN, ArrayGeometry, ImagingGrid, PulseModel, Seed, SoSGrid, pixel_positions

# Reference length for the 1/sqrt(path) spreading factor (keeps amplitudes O(1)).
SPREAD_REF = 1e-3


@dataclass(frozen=True)
class Inclusion:
    center: tuple[float, float]
    radius: float
    sos: float


@dataclass(frozen=True)
class PhantomSpec:
    background_sos: float = 1540.0
    inclusions: tuple[Inclusion, ...] = ()
    scatterer_density: float = 2.0  # per mm^2

    def validate(self, grid: ImagingGrid):
        for v in [self.background_sos] + [inc.sos for inc in self.inclusions]:
            if not SOS_MIN <= v <= SOS_MAX:
                raise ValueError(f"SoS {v} outside [{SOS_MIN}, {SOS_MAX}] m/s")
        x0, x1, z0, z1 = grid.extent
        for inc in self.inclusions:
            cx, cz = inc.center
            if inc.radius <= 0:
                raise ValueError("inclusion radius must be > 0")
            if cx - inc.radius < x0 or cx + inc.radius > x1 or cz - inc.radius < z0 or cz + inc.radius > z1:
                raise ValueError(f"inclusion at {inc.center} with radius {inc.radius} leaves the grid")


@dataclass(frozen=True)
class ScattererField:
    positions: np.ndarray = field(repr=False)
    amplitudes: np.ndarray = field(repr=False)
    seed: Seed


@dataclass(frozen=True)
class ChannelData:
    rf: np.ndarray = field(repr=False)
    sampling_frequency: float
    t0: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.rf.shape[-1]


def inclusion_phantom(sos: float, center=(0.0, 15e-3), diameter: float = 10e-3, background: float = 1540.0,
                      density: float = 2.0) -> PhantomSpec:
    return PhantomSpec(background, (Inclusion(tuple(center), diameter / 2, float(sos)),), density)


def phantom_to_sos_grid(spec: PhantomSpec, grid: ImagingGrid) -> SoSGrid:
    """Piecewise-constant map; later inclusions in the list win on overlap."""
    spec.validate(grid)
    pts = pixel_positions(grid)
    values = np.full(grid.size, float(spec.background_sos))
    for inc in spec.inclusions:
        d = np.hypot(pts[:, 0] - inc.center[0], pts[:, 1] - inc.center[1])
        values[d < inc.radius] = inc.sos
    return SoSGrid(grid, values.reshape(grid.shape))


def sample_scatterers(spec: PhantomSpec, grid: ImagingGrid, seed: Seed) -> ScattererField:
    if spec.scatterer_density <= 0:
        raise ValueError("scatterer density must be > 0")
    x0, x1, z0, z1 = grid.extent
    area_mm2 = (x1 - x0) * (z1 - z0) * 1e6
    count = int(round(spec.scatterer_density * area_mm2))
    if count == 0:
        raise ValueError("empty scatterer field")
    rng = seed.rng("scatterers")
    pos = np.column_stack([rng.uniform(x0, x1, count), rng.uniform(z0, z1, count)])
    amp = rng.standard_normal(count)
    return ScattererField(pos, amp, seed)


def pulse_sigma(pulse: PulseModel) -> float:
    return math.sqrt(2 * math.log(2)) / (math.pi * pulse.fractional_bandwidth * pulse.center_frequency)


def pulse_halfwidth(pulse: PulseModel) -> float:
    """Support half-width of the simulated pulse, in seconds."""
    return max(4 * pulse_sigma(pulse), pulse.pulse_cycles / (2 * pulse.center_frequency))


def pulse_shape(pulse: PulseModel, t: np.ndarray) -> np.ndarray:
    sigma = pulse_sigma(pulse)
    return np.exp(-0.5 * (t / sigma) ** 2) * np.cos(2 * np.pi * pulse.center_frequency * t)


def simulate_rf(
    geom: ArrayGeometry,
    pulse: PulseModel,
    sos: SoSGrid,
    scatterers: ScattererField,
    n_samples: int,
    t0: float = 0.0,
) -> ChannelData:
    """Full synthetic-aperture channel data ``rf[tx, rx, sample]``."""
    from .beamform import RayOperator

    fs = pulse.sampling_frequency
    pos = np.asarray(scatterers.positions, dtype=np.float64)
    amp = np.asarray(scatterers.amplitudes, dtype=np.float64)
    n_el = geom.element_count
    half = pulse_halfwidth(pulse)

    dist = np.hypot(geom.x[:, None] - pos[None, :, 0], pos[None, :, 1])  # [el, s]
    max_path = dist.max() if dist.size else 0.0
    need = int(math.ceil((2 * max_path / sos.values.min() + 2 * half - t0) * fs)) + 1
    if n_samples < need:
        raise ValueError(f"n_samples={n_samples} too short; need at least {need}")

    rays = RayOperator(sos.grid, geom.element_positions[:, None, :], pos[None, :, :])
    tau = rays.times(sos.values)  # [el, s]
    spread = np.sqrt(SPREAD_REF / np.maximum(dist, 1e-9))

    hw = int(math.ceil(half * fs))
    offsets = np.arange(-hw, hw + 1)
    rf = np.zeros((n_el, n_el, n_samples))
    rx_ids = np.arange(n_el)[:, None, None]
    for tx in range(n_el):
        arrival = tau[tx][None, :] + tau  # [rx, s]
        a = amp[None, :] * spread[tx][None, :] * spread  # [rx, s]
        k0 = np.rint((arrival - t0) * fs).astype(np.int64)
        idx = k0[:, :, None] + offsets[None, None, :]  # [rx, s, j]
        t = t0 + idx / fs - arrival[:, :, None]
        val = a[:, :, None] * pulse_shape(pulse, t)
        ok = (idx >= 0) & (idx < n_samples)
        flat = (rx_ids * n_samples + idx)[ok]
        rf[tx] = np.bincount(flat, weights=val[ok], minlength=n_el * n_samples).reshape(n_el, n_samples)
    return ChannelData(rf, fs, t0)
