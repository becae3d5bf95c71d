"""On-disk formats: VF1 velocity fields, AM1 packed masks, PC1 plot CSVs.

VF1
    One UTF-8 JSON header line ``{"magic": "VF1", "dims": [nt, nx, ny, nz],
    "components": d, "L": ..., "T": ..., "dtype": "f64le",
    "order": "t,x,y,z,component", ...}`` terminated by ``\\n`` and followed by
    raw little-endian float64 samples in the declared order.  Optional extra
    header keys (``metadata``, ``divergence_free``) are ignored by readers that
    do not know them.

AM1
    A JSON header line ``{"magic": "AM1", "dims": [...], "bitorder": "little",
    ...}`` followed by ``numpy.packbits`` output of the boolean mask flattened
    in C order.

PC1
    CSV files whose first line is ``# PC1 <figure>``, then a header row.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .grid import ConfigurationError, GridSpec, VelocityField

__all__ = ["write_vf1", "read_vf1", "write_am1", "read_am1", "write_pc1", "read_pc1", "dumps_json"]


def dumps_json(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed float repr, NaN -> null)."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


# ---------------------------------------------------------------------------
# VF1
# ---------------------------------------------------------------------------

def write_vf1(path, field: VelocityField) -> None:
    g = field.grid
    header = {
        "magic": "VF1",
        "dims": [g.nt, g.nx, g.ny, g.nz],
        "components": g.spatial_dim,
        "L": float(g.L),
        "T": float(g.T),
        "dtype": "f64le",
        "order": "t,x,y,z,component",
        "metadata": field.metadata,
        "divergence_free": bool(field.divergence_free),
    }
    data = np.ascontiguousarray(field.samples, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(data)


def read_vf1(path) -> VelocityField:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ConfigurationError(f"{path}: missing VF1 header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: unreadable VF1 header") from exc
    if header.get("magic") != "VF1":
        raise ConfigurationError(f"{path}: not a VF1 file")
    if header.get("dtype") != "f64le" or header.get("order") != "t,x,y,z,component":
        raise ConfigurationError(f"{path}: unsupported dtype/order")
    nt, nx, ny, nz = (int(v) for v in header["dims"])
    d = int(header["components"])
    grid = GridSpec(nx, ny, nz, L=float(header["L"]), nt=nt, T=float(header["T"]), spatial_dim=d)
    payload = raw[nl + 1:]
    expected = nt * nx * ny * nz * d * 8
    if len(payload) != expected:
        raise ConfigurationError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(grid.shape)
    return VelocityField(grid, samples, metadata=str(header.get("metadata", "")),
                         divergence_free=bool(header.get("divergence_free", False)))


# ---------------------------------------------------------------------------
# AM1
# ---------------------------------------------------------------------------

def write_am1(path, mask: np.ndarray, **info) -> None:
    m = np.ascontiguousarray(mask, dtype=bool)
    header = {"magic": "AM1", "dims": list(m.shape), "bitorder": "little"}
    header.update(info)
    with open(path, "wb") as fh:
        fh.write(json.dumps(_clean(header), sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.packbits(m.ravel(), bitorder="little").tobytes())


def read_am1(path) -> tuple:
    """Return ``(mask, header)``."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("magic") != "AM1":
        raise ConfigurationError(f"{path}: not an AM1 file")
    dims = tuple(int(v) for v in header["dims"])
    count = int(np.prod(dims))
    bits = np.unpackbits(np.frombuffer(raw[nl + 1:], dtype=np.uint8), count=count, bitorder="little")
    return bits.astype(bool).reshape(dims), header


# ---------------------------------------------------------------------------
# PC1
# ---------------------------------------------------------------------------

def _fmt(v):
    """Floats via ``repr`` (round-trip exact); None and non-finite values as empty cells."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else ""
    return str(v)


def write_pc1(path, figure: str, columns: list, rows: list) -> None:
    buf = io.StringIO()
    buf.write(f"# PC1 {figure}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def read_pc1(path) -> tuple:
    """Return ``(figure, columns, rows)`` with rows as lists of strings."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# PC1 "):
        raise ConfigurationError(f"{path}: not a PC1 file")
    figure = lines[0][len("# PC1 "):]
    reader = list(csv.reader(lines[1:]))
    return figure, reader[0], reader[1:]
