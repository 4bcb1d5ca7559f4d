"""Shared domain types, coordinate conventions and seeding.

Coordinates are 2D points ``(x, z)`` in meters: ``x`` is lateral (along the
array), ``z`` is depth (away from the probe face, which sits at ``z = 0``).
Gridded quantities are stored as ``[n_depth, n_lateral]`` arrays and flattened
in row-major (depth-major) order.

Random streams use numpy's PCG64 bit generator seeded through
``SeedSequence(seed).spawn``-style child keys, one per purpose, so that adding
draws for one purpose never perturbs another.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SOS_MIN = 1300.0
SOS_MAX = 1800.0

# Sub-stream identifiers; values are part of the reproducibility contract.
STREAMS = {"scatterers": 0, "weights": 1, "perturbation": 2}


class DomainError(ValueError):
    """A point or value lies outside the domain an operation accepts."""


@dataclass(frozen=True)
class Seed:
    value: int

    def __post_init__(self):
        if not 0 <= int(self.value) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.value}")

    def rng(self, purpose: str) -> np.random.Generator:
        """Independent PCG64 generator for ``purpose`` (see ``STREAMS``)."""
        key = STREAMS[purpose]
        ss = np.random.SeedSequence(int(self.value), spawn_key=(key,))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ArrayGeometry:
    element_count: int
    pitch: float
    element_positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        pos = np.asarray(self.element_positions, dtype=np.float64)
        if self.element_count < 2:
            raise ValueError("element_count must be >= 2")
        if self.pitch <= 0:
            raise ValueError("pitch must be > 0")
        if pos.shape != (self.element_count, 2):
            raise ValueError(f"element_positions must have shape ({self.element_count}, 2)")
        if np.any(np.diff(pos[:, 0]) <= 0):
            raise ValueError("element x positions must be strictly increasing")
        if np.any(pos[:, 1] != 0):
            raise ValueError("elements must lie at z = 0")
        if abs(pos[:, 0].sum()) > 1e-12:
            raise ValueError("element positions must be centered on x = 0")
        pos.setflags(write=False)
        object.__setattr__(self, "element_positions", pos)

    @classmethod
    def linear(cls, element_count: int, pitch: float) -> "ArrayGeometry":
        x = (np.arange(element_count) - (element_count - 1) / 2) * pitch
        x = x - x.mean()
        pos = np.stack([x, np.zeros_like(x)], axis=1)
        return cls(element_count, pitch, pos)

    @property
    def x(self) -> np.ndarray:
        return self.element_positions[:, 0]


@dataclass(frozen=True)
class PulseModel:
    center_frequency: float
    sampling_frequency: float
    fractional_bandwidth: float = 0.6
    pulse_cycles: float = 2.0

    def __post_init__(self):
        if self.center_frequency <= 0:
            raise ValueError("center_frequency must be > 0")
        if self.sampling_frequency < 4 * self.center_frequency:
            raise ValueError("sampling_frequency must be >= 4 x center_frequency")
        if not 0 < self.fractional_bandwidth <= 1:
            raise ValueError("fractional_bandwidth must lie in (0, 1]")
        if self.pulse_cycles <= 0:
            raise ValueError("pulse_cycles must be > 0")


@dataclass(frozen=True)
class ImagingGrid:
    origin: tuple[float, float]
    n_lateral: int
    n_depth: int
    spacing_lateral: float
    spacing_depth: float

    def __post_init__(self):
        if self.n_lateral < 2 or self.n_depth < 2:
            raise ValueError("grid needs at least 2 points along each axis")
        if self.spacing_lateral <= 0 or self.spacing_depth <= 0:
            raise ValueError("grid spacings must be > 0")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_depth, self.n_lateral)

    @property
    def size(self) -> int:
        return self.n_depth * self.n_lateral

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.n_lateral) * self.spacing_lateral

    @property
    def z(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.n_depth) * self.spacing_depth

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """``(x_min, x_max, z_min, z_max)`` of the node bounding box."""
        x, z = self.x, self.z
        return (x[0], x[-1], z[0], z[-1])

    def contains(self, p, pad: float = 0.0) -> bool:
        x0, x1, z0, z1 = self.extent
        return (x0 - pad <= p[0] <= x1 + pad) and (z0 - pad <= p[1] <= z1 + pad)


def default_grid() -> ImagingGrid:
    """30 depth x 20 lateral nodes at 1 mm spacing.

    The first row sits 1 mm below the probe face so that every element lies
    within one cell of the grid box.
    """
    return ImagingGrid((-10e-3, 1e-3), 20, 30, 1e-3, 1e-3)


def pixel_positions(grid: ImagingGrid) -> np.ndarray:
    """All grid nodes as an ``[n_depth * n_lateral, 2]`` array, depth-major."""
    zz, xx = np.meshgrid(grid.z, grid.x, indexing="ij")
    return np.stack([xx.ravel(), zz.ravel()], axis=1)


def normalize_coords(grid: ImagingGrid, p) -> np.ndarray:
    """Map points in the grid box onto the unit square (corners to corners)."""
    p = np.asarray(p, dtype=np.float64)
    x0, x1, z0, z1 = grid.extent
    # Tolerance of a few ulps so nodes produced by pixel_positions are accepted.
    tol_x = 1e-9 * (x1 - x0)
    tol_z = 1e-9 * (z1 - z0)
    px, pz = p[..., 0], p[..., 1]
    bad_x = (px < x0 - tol_x) | (px > x1 + tol_x)
    bad_z = (pz < z0 - tol_z) | (pz > z1 + tol_z)
    if np.any(bad_x):
        v = np.atleast_1d(px)[np.atleast_1d(bad_x)][0]
        raise DomainError(f"lateral coordinate x={v!r} outside grid [{x0}, {x1}]")
    if np.any(bad_z):
        v = np.atleast_1d(pz)[np.atleast_1d(bad_z)][0]
        raise DomainError(f"depth coordinate z={v!r} outside grid [{z0}, {z1}]")
    u = np.clip((px - x0) / (x1 - x0), 0.0, 1.0)
    w = np.clip((pz - z0) / (z1 - z0), 0.0, 1.0)
    return np.stack([u, w], axis=-1)


def denormalize_coords(grid: ImagingGrid, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    x0, x1, z0, z1 = grid.extent
    return np.stack([x0 + u[..., 0] * (x1 - x0), z0 + u[..., 1] * (z1 - z0)], axis=-1)


@dataclass(frozen=True)
class SoSGrid:
    grid: ImagingGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("SoS values must be finite")
        if v.min() < SOS_MIN or v.max() > SOS_MAX:
            raise ValueError(f"SoS values must lie in [{SOS_MIN}, {SOS_MAX}] m/s")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: ImagingGrid, value: float) -> "SoSGrid":
        return cls(grid, np.full(grid.shape, float(value)))

    def with_values(self, values) -> "SoSGrid":
        return SoSGrid(self.grid, values)
