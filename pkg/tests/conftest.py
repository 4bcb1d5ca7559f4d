"""Shared small synthetic scenes, sized so gradient checks stay fast."""

from types import SimpleNamespace

import numpy as np
import pytest

from sosinr.core import ArrayGeometry, ImagingGrid, PulseModel, Seed, SoSGrid
from sosinr.signal import analytic_signal
from sosinr.simulate import Inclusion, PhantomSpec, phantom_to_sos_grid, sample_scatterers, simulate_rf


@pytest.fixture(scope="session")
def small_scene():
    grid = ImagingGrid((-3e-3, 1e-3), 7, 8, 1e-3, 1e-3)
    geom = ArrayGeometry.linear(8, 0.45e-3)
    pulse = PulseModel(5e6, 25e6, 0.6)
    spec = PhantomSpec(1540.0, (Inclusion((0.0, 4e-3), 2e-3, 1500.0),), 8.0)
    truth = phantom_to_sos_grid(spec, grid)
    rf = simulate_rf(geom, pulse, truth, sample_scatterers(spec, grid, Seed(3)), 512)
    return SimpleNamespace(
        grid=grid,
        geom=geom,
        pulse=pulse,
        spec=spec,
        truth=truth,
        rf=rf,
        iq=analytic_signal(rf),
        pixel_grid=ImagingGrid((-2e-3, 3e-3), 9, 9, 0.5e-3, 0.5e-3),
        c0=SoSGrid.constant(grid, 1540.0),
    )


def rel_err(a, b, floor=1e-30):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.abs(b), floor)
