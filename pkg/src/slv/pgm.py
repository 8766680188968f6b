"""16-bit PGM export/import for likelihood maps.

Maps are stored as binary PGM (P5, maxval 65535, big-endian samples)
holding round(v / scale * 65535), plus a JSON sidecar carrying the exact
dims and the scale factor (the map maximum, or 1.0 for an all-zero map).
The round trip is bit-exact once a map has passed through the 16-bit
quantization.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import RecordError

_MAXVAL = 65535


def sidecar_path(pgm_path: str | Path) -> Path:
    return Path(pgm_path).with_suffix(".json")


def save_map(m: np.ndarray, pgm_path: str | Path) -> None:
    """Write `m` as PGM + JSON sidecar (sidecar sits next to the PGM)."""
    if m.ndim != 2:
        raise RecordError(f"likelihood map must be 2-D, got shape {m.shape}")
    h, w = m.shape
    scale = float(m.max()) if m.size else 0.0
    if scale <= 0.0:
        scale = 1.0
    q = np.rint(m / scale * _MAXVAL).astype(">u2")
    path = Path(pgm_path)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (w, h, _MAXVAL))
        fh.write(q.tobytes())
    sidecar = {"width": w, "height": h, "scale": scale}
    sidecar_path(path).write_text(json.dumps(sidecar) + "\n", encoding="utf-8")


def load_map(pgm_path: str | Path) -> np.ndarray:
    """Read a PGM + sidecar pair back into a float64 map."""
    path = Path(pgm_path)
    raw = path.read_bytes()
    try:
        magic, rest = raw.split(b"\n", 1)
        dims_line, rest = rest.split(b"\n", 1)
        maxval_line, data = rest.split(b"\n", 1)
        w, h = (int(t) for t in dims_line.split())
        maxval = int(maxval_line)
    except ValueError as exc:
        raise RecordError(f"{path}: malformed PGM header") from exc
    if magic != b"P5":
        raise RecordError(f"{path}: expected binary PGM (P5), got {magic!r}")
    if maxval != _MAXVAL:
        raise RecordError(f"{path}: expected maxval {_MAXVAL}, got {maxval}")
    expected = w * h * 2
    if len(data) != expected:
        raise RecordError(f"{path}: expected {expected} data bytes, got {len(data)}")
    try:
        meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
        scale = float(meta["scale"])
        if (meta["width"], meta["height"]) != (w, h):
            raise RecordError(f"{path}: sidecar dims disagree with PGM header")
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise RecordError(f"{path}: missing or malformed sidecar") from exc
    q = np.frombuffer(data, dtype=">u2").reshape(h, w)
    return q.astype(np.float64) / _MAXVAL * scale
