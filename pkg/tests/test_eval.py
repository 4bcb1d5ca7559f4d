import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosinr.beamform import BModeImage
from sosinr.core import DomainError, ImagingGrid, SoSGrid, default_grid
from sosinr.estimate import EstimationResult
from sosinr.eval import (
    REPORT_FILES,
    cross_sections,
    emit_report,
    metrics_dict,
    read_loss_trace,
    rmse,
    roi_rmse,
)
from sosinr.io import read_map_csv, read_pgm
from sosinr.objective import LossBreakdown
from sosinr.simulate import inclusion_phantom, phantom_to_sos_grid


def test_rmse_examples():
    grid = default_grid()
    ref = phantom_to_sos_grid(inclusion_phantom(1510.0), grid)
    assert rmse(ref, ref) == 0.0
    assert rmse(ref.with_values(ref.values + 5), ref) == pytest.approx(5.0, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rmse_symmetric_and_permutation_invariant(seed):
    grid = ImagingGrid((0.0, 0.0), 4, 5, 1e-3, 1e-3)
    rng = np.random.default_rng(seed)
    a = rng.uniform(1400, 1700, grid.shape)
    b = rng.uniform(1400, 1700, grid.shape)
    r = rmse(SoSGrid(grid, a), SoSGrid(grid, b))
    assert r == pytest.approx(rmse(SoSGrid(grid, b), SoSGrid(grid, a)), rel=1e-15)
    perm = rng.permutation(grid.size)
    pa = a.ravel()[perm].reshape(grid.shape)
    pb = b.ravel()[perm].reshape(grid.shape)
    assert r == pytest.approx(rmse(SoSGrid(grid, pa), SoSGrid(grid, pb)), rel=1e-12)


def test_rmse_grid_mismatch():
    a = SoSGrid.constant(default_grid(), 1540.0)
    b = SoSGrid.constant(ImagingGrid((0.0, 0.0), 3, 3, 1e-3, 1e-3), 1540.0)
    with pytest.raises(ValueError):
        rmse(a, b)


def test_roi_rmse():
    grid = default_grid()
    spec = inclusion_phantom(1480.0)
    ref = phantom_to_sos_grid(spec, grid)
    flat = SoSGrid.constant(grid, 1540.0)
    assert roi_rmse(flat, ref, spec) == [pytest.approx(60.0)]


def test_cross_sections():
    grid = default_grid()
    est = SoSGrid.constant(grid, 1523.0)
    ref = phantom_to_sos_grid(inclusion_phantom(1600.0), grid)
    lat, lon = cross_sections(est, ref, (0.0, 15e-3))
    assert lat.axis == "lateral" and lon.axis == "longitudinal"
    assert np.all(lat.estimated == 1523.0) and np.all(lon.estimated == 1523.0)
    assert lat.positions.size == grid.n_lateral and lon.positions.size == grid.n_depth
    assert lat.reference.max() == 1600.0 and lon.reference.max() == 1600.0
    with pytest.raises(DomainError):
        cross_sections(est, ref, (0.0, 50e-3))


def _result(grid, value=1541.0, n=3):
    trace = tuple(LossBreakdown(0.1 / (k + 1), 0.0, 0.01, 0.1 / (k + 1)) for k in range(n))
    img = BModeImage(np.linspace(-60, 0, 12).reshape(3, 4), 60.0)
    return EstimationResult(SoSGrid.constant(grid, value), trace, img, 1.0, np.zeros(2))


def test_emit_report(tmp_path):
    grid = default_grid()
    spec = inclusion_phantom(1510.0)
    ref = phantom_to_sos_grid(spec, grid)
    metrics = emit_report(_result(grid), ref, tmp_path / "r", spec, {"seed": 1})
    for name in REPORT_FILES:
        assert (tmp_path / "r" / name).is_file()
    m = json.loads((tmp_path / "r" / "metrics.json").read_text())
    assert m == json.loads(json.dumps(metrics))
    assert m["rmse_m_s"] == pytest.approx(rmse(read_map_csv(tmp_path / "r" / "sos_map.csv"), ref))
    assert len(m["roi_rmse_m_s"]) == 1 and m["epochs"] == 3 and m["config"] == {"seed": 1}
    assert [r["epoch"] for r in read_loss_trace(tmp_path / "r" / "loss_trace.csv")] == [0, 1, 2]
    assert read_pgm(tmp_path / "r" / "bmode.pgm").shape == (3, 4)
    emit_report(_result(grid), ref, tmp_path / "r2", spec, {"seed": 1})
    assert (tmp_path / "r" / "sos_map.csv").read_bytes() == (tmp_path / "r2" / "sos_map.csv").read_bytes()


def test_metrics_dict_extra():
    grid = default_grid()
    ref = SoSGrid.constant(grid, 1540.0)
    m = metrics_dict(ref.with_values(ref.values + 5), ref, note="x")
    assert m == {"rmse_m_s": pytest.approx(5.0), "note": "x"}
