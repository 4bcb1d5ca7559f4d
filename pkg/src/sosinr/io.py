"""On-disk formats: channel-data container, network checkpoint, CSV maps, PGM.

Channel-data container (little-endian)::

    offset  size  field
    0       8     magic b"SOSRFDAT"
    8       1     version (1)
    9       3     reserved, zero
    12      12    n_tx, n_rx, n_samples (uint32)
    24      8     sampling frequency in Hz (float64)
    32      8     time of first sample in s (float64)
    40      ...   samples, float32, C order [tx, rx, sample]

Network checkpoint (little-endian)::

    0   8   magic b"SIRENNET"
    8   1   version (1)
    9   3   reserved, zero
    12  4   number of layer sizes K (uint32)
    16  4K  layer sizes (uint32)
    ..  8   omega (float64)
    ..  8   output scale (float64)
    ..  8P  parameters in canonical order (float64)
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .core import ImagingGrid, SoSGrid, pixel_positions
from .inr import SirenNetwork, from_parameters, parameter_count
from .simulate import ChannelData

RF_MAGIC = b"SOSRFDAT"
NET_MAGIC = b"SIRENNET"
FORMAT_VERSION = 1
_RF_HEADER = struct.Struct("<8sB3x3Idd")


class FormatError(ValueError):
    """A file does not follow its documented layout."""

    def __init__(self, message: str, path=None, offset: int | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if offset is not None:
            where += f" at byte offset {offset}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.offset = offset


def write_channel_data(path, data: ChannelData, metadata: dict | None = None) -> Path:
    """Write the binary container and a ``.json`` sidecar next to it."""
    path = Path(path)
    rf = np.asarray(data.rf)
    n_tx, n_rx, n_s = rf.shape
    header = _RF_HEADER.pack(RF_MAGIC, FORMAT_VERSION, n_tx, n_rx, n_s, float(data.sampling_frequency), float(data.t0))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rf.astype("<f4", copy=False).tobytes(order="C"))
    side = {
        "format": "SOSRFDAT",
        "version": FORMAT_VERSION,
        "shape": [n_tx, n_rx, n_s],
        "sampling_frequency_hz": float(data.sampling_frequency),
        "t0_s": float(data.t0),
        "sample_dtype": "float32-le",
    }
    if metadata:
        side["metadata"] = metadata
    path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return path


def read_channel_data(path) -> ChannelData:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _RF_HEADER.size:
        raise FormatError(f"file is {len(raw)} bytes, shorter than the {_RF_HEADER.size}-byte header", path, len(raw))
    magic, version, n_tx, n_rx, n_s, fs, t0 = _RF_HEADER.unpack_from(raw)
    if magic != RF_MAGIC:
        raise FormatError(f"bad magic {magic!r}", path, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", path, 8)
    expected = _RF_HEADER.size + 4 * n_tx * n_rx * n_s
    if len(raw) != expected:
        raise FormatError(f"expected {expected} bytes for shape {(n_tx, n_rx, n_s)}, found {len(raw)}", path,
                          min(len(raw), expected))
    if not fs > 0:
        raise FormatError(f"sampling frequency {fs} is not positive", path, 24)
    rf = np.frombuffer(raw, dtype="<f4", offset=_RF_HEADER.size).reshape(n_tx, n_rx, n_s).astype(np.float64)
    if not np.all(np.isfinite(rf)):
        bad = int(np.argmax(~np.isfinite(rf.ravel())))
        raise FormatError("non-finite sample", path, _RF_HEADER.size + 4 * bad)
    return ChannelData(rf, fs, t0)


def write_network(path, net: SirenNetwork) -> Path:
    path = Path(path)
    sizes = net.layer_sizes
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sB3xI", NET_MAGIC, FORMAT_VERSION, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(struct.pack("<dd", net.omega, net.output_scale))
        fh.write(net.parameters().astype("<f8").tobytes())
    return path


def read_network(path) -> SirenNetwork:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16:
        raise FormatError("truncated header", path, len(raw))
    magic, version, k = struct.unpack_from("<8sB3xI", raw)
    if magic != NET_MAGIC:
        raise FormatError(f"bad magic {magic!r}", path, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", path, 8)
    off = 16
    if len(raw) < off + 4 * k + 16:
        raise FormatError("truncated layer table", path, len(raw))
    sizes = struct.unpack_from(f"<{k}I", raw, off)
    off += 4 * k
    omega, scale = struct.unpack_from("<dd", raw, off)
    off += 16
    n = parameter_count(sizes)
    if len(raw) != off + 8 * n:
        raise FormatError(f"expected {n} parameters", path, off)
    flat = np.frombuffer(raw, dtype="<f8", offset=off).astype(np.float64)
    return from_parameters(sizes, flat, omega, scale)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def write_map_csv(path, sos: SoSGrid) -> Path:
    """Long-format map: one ``x_mm,z_mm,sos_m_s`` row per node, depth-major."""
    path = Path(path)
    pts = pixel_positions(sos.grid) * 1e3
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_mm", "z_mm", "sos_m_s"])
        for (x, z), v in zip(pts, sos.values.ravel()):
            w.writerow([_fmt(x), _fmt(z), _fmt(v)])
    return path


def read_map_csv(path) -> SoSGrid:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(str(exc), path) from exc
    if not rows or rows[0] != ["x_mm", "z_mm", "sos_m_s"]:
        raise FormatError("missing header x_mm,z_mm,sos_m_s", path)
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise FormatError(f"unparsable value: {exc}", path) from exc
    if data.ndim != 2 or data.shape[1] != 3:
        raise FormatError("every row needs three values", path)
    xs = np.unique(data[:, 0])
    zs = np.unique(data[:, 1])
    if xs.size * zs.size != data.shape[0]:
        raise FormatError("rows do not form a rectilinear grid", path)
    grid = ImagingGrid(
        (xs[0] * 1e-3, zs[0] * 1e-3), xs.size, zs.size,
        float(np.round((xs[-1] - xs[0]) / (xs.size - 1), 9)) * 1e-3,
        float(np.round((zs[-1] - zs[0]) / (zs.size - 1), 9)) * 1e-3,
    )
    order = np.lexsort((data[:, 0], data[:, 1]))
    return SoSGrid(grid, data[order, 2].reshape(grid.shape))


def write_pgm(path, image_db: np.ndarray, dynamic_range: float) -> Path:
    """8-bit binary PGM (P5); ``-dynamic_range`` dB maps to 0, 0 dB to 255."""
    path = Path(path)
    img = np.asarray(image_db, dtype=np.float64)
    pix = np.round(255 * (np.clip(img, -dynamic_range, 0) + dynamic_range) / dynamic_range).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise FormatError("not a binary PGM", path, 0)
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}", path)
    body = raw[len(raw) - w * h:]
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def write_stack_csv(path, stack_values: np.ndarray, grid: ImagingGrid) -> Path:
    """Aperture-stack magnitudes: one row per pixel, one column per receive element."""
    path = Path(path)
    pts = pixel_positions(grid) * 1e3
    mag = np.abs(stack_values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_mm", "z_mm"] + [f"rx{r}" for r in range(mag.shape[1])])
        for (x, z), row in zip(pts, mag):
            w.writerow([_fmt(x), _fmt(z)] + [_fmt(v) for v in row])
    return path
