"""RMSE against a reference map, cross-section profiles and report files.

Report directory contents:

* ``sos_map.csv``        estimated map (``x_mm,z_mm,sos_m_s``)
* ``bmode.pgm``          B-mode rendered with the estimated map
* ``loss_trace.csv``     ``epoch,pe,tv,total``
* ``cross_sections.csv`` ``axis,position_mm,estimated,reference``
* ``metrics.json``       RMSE, per-inclusion ROI RMSE, wall time, config echo
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DomainError, SoSGrid, pixel_positions
from .io import _fmt, read_map_csv, write_map_csv, write_pgm
from .simulate import PhantomSpec

REPORT_FILES = ("sos_map.csv", "bmode.pgm", "loss_trace.csv", "cross_sections.csv", "metrics.json")


@dataclass(frozen=True)
class CrossSection:
    axis: str
    through: tuple[float, float]
    positions: np.ndarray = field(repr=False)  # mm
    estimated: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)


def _check_same_grid(a: SoSGrid, b: SoSGrid):
    if a.grid.shape != b.grid.shape:
        raise ValueError(f"grid shapes differ: {a.grid.shape} vs {b.grid.shape}")
    if not (np.allclose(a.grid.x, b.grid.x, atol=1e-9) and np.allclose(a.grid.z, b.grid.z, atol=1e-9)):
        raise ValueError("grids cover different node positions")


def rmse(estimate: SoSGrid, reference: SoSGrid) -> float:
    _check_same_grid(estimate, reference)
    d = estimate.values - reference.values
    return float(np.sqrt(np.mean(d * d)))


def roi_rmse(estimate: SoSGrid, reference: SoSGrid, phantom: PhantomSpec) -> list[float]:
    """RMSE restricted to the nodes inside each inclusion."""
    _check_same_grid(estimate, reference)
    pts = pixel_positions(estimate.grid)
    d = (estimate.values - reference.values).ravel()
    out = []
    for inc in phantom.inclusions:
        inside = np.hypot(pts[:, 0] - inc.center[0], pts[:, 1] - inc.center[1]) < inc.radius
        out.append(float(np.sqrt(np.mean(d[inside] ** 2))) if inside.any() else float("nan"))
    return out


def cross_sections(estimate: SoSGrid, reference: SoSGrid, center) -> tuple[CrossSection, CrossSection]:
    """Lateral (row) and longitudinal (column) profiles through ``center``."""
    _check_same_grid(estimate, reference)
    grid = estimate.grid
    if not grid.contains(center):
        raise DomainError(f"center {tuple(center)} lies outside the grid")
    row = int(np.argmin(np.abs(grid.z - center[1])))
    col = int(np.argmin(np.abs(grid.x - center[0])))
    through = (float(center[0]), float(center[1]))
    lateral = CrossSection("lateral", through, grid.x * 1e3, estimate.values[row].copy(), reference.values[row].copy())
    longitudinal = CrossSection("longitudinal", through, grid.z * 1e3, estimate.values[:, col].copy(),
                                reference.values[:, col].copy())
    return lateral, longitudinal


def write_cross_sections(path, sections) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis", "position_mm", "estimated", "reference"])
        for s in sections:
            for p, e, r in zip(s.positions, s.estimated, s.reference):
                w.writerow([s.axis, _fmt(p), _fmt(e), _fmt(r)])
    return path


def write_loss_trace(path, trace) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "pe", "tv", "total"])
        for i, b in enumerate(trace):
            w.writerow([i, _fmt(b.pe), _fmt(b.tv), _fmt(b.total)])
    return path


def read_loss_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def metrics_dict(estimate: SoSGrid, reference: SoSGrid, phantom: PhantomSpec | None = None, **extra) -> dict:
    out = {"rmse_m_s": rmse(estimate, reference)}
    if phantom is not None and phantom.inclusions:
        out["roi_rmse_m_s"] = roi_rmse(estimate, reference, phantom)
    out.update(extra)
    return out


def emit_report(result, reference: SoSGrid, out_dir, phantom: PhantomSpec | None = None,
                config: dict | None = None) -> dict:
    """Write the report files for ``result`` into ``out_dir``; returns the metrics."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_map_csv(out / "sos_map.csv", result.sos_map)
        write_pgm(out / "bmode.pgm", result.final_bmode.envelope_db, result.final_bmode.dynamic_range)
        write_loss_trace(out / "loss_trace.csv", result.loss_trace)
        if phantom is not None and phantom.inclusions:
            center = phantom.inclusions[0].center
        else:
            x0, x1, z0, z1 = result.sos_map.grid.extent
            center = ((x0 + x1) / 2, (z0 + z1) / 2)
        write_cross_sections(out / "cross_sections.csv", cross_sections(result.sos_map, reference, center))
        # Metrics come from the map as written so they reproduce from the files alone.
        written = read_map_csv(out / "sos_map.csv")
        metrics = metrics_dict(written, reference, phantom, wall_time_s=round(result.wall_time, 3),
                               epochs=len(result.loss_trace), final_loss=result.loss_trace[-1].total,
                               config=config or {})
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"writing report to {out}: {exc}") from exc
    return metrics
