"""On-disk formats for observation series.

CSV: header ``t,x`` then one row per observation, both columns at 17
significant digits so values round-trip exactly.

Binary: the 5 magic bytes ``LSDE1`` followed by little-endian float64 words
``h``, ``n`` (increment count) and the ``n + 1`` values.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .simulate import ObservationSeries

MAGIC = b"LSDE1"
_LE = np.dtype("<f8")


def series_to_csv(series: ObservationSeries) -> str:
    buf = io.StringIO()
    buf.write("t,x\n")
    for t, x in zip(series.times, series.values):
        buf.write(f"{t:.17g},{x:.17g}\n")
    return buf.getvalue()


def series_from_csv(text: str) -> ObservationSeries:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["t", "x"]:
        raise ValueError("series CSV must start with the header 't,x'")
    body = [r for r in rows[1:] if r]
    if len(body) < 2:
        raise ValueError("series CSV needs at least two observations")
    try:
        arr = np.array([[float(a), float(b)] for a, b in body])
    except ValueError as exc:
        raise ValueError(f"malformed series CSV row: {exc}") from None
    t, x = arr[:, 0], arr[:, 1]
    dt = np.diff(t)
    h = (t[-1] - t[0]) / (t.size - 1)
    if not h > 0 or np.max(np.abs(dt - h)) > 1e-9 * max(1.0, abs(t[-1])):
        raise ValueError("series CSV times are not equally spaced")
    return ObservationSeries(h, x)


def series_to_bytes(series: ObservationSeries) -> bytes:
    head = np.array([series.h, float(series.n)], dtype=_LE)
    return MAGIC + head.tobytes() + np.asarray(series.values, dtype=_LE).tobytes()


def series_from_bytes(data: bytes) -> ObservationSeries:
    if not data.startswith(MAGIC):
        raise ValueError("not an LSDE1 series (bad magic bytes)")
    body = np.frombuffer(data, dtype=_LE, offset=len(MAGIC)) if len(data) > len(MAGIC) else np.empty(0)
    if (len(data) - len(MAGIC)) % 8 or body.size < 2:
        raise ValueError("truncated LSDE1 series")
    h, n = float(body[0]), body[1]
    if n != int(n) or body.size != int(n) + 3:
        raise ValueError(f"LSDE1 header announces n={n} but payload holds {body.size - 3} increments")
    return ObservationSeries(h, body[2:].astype(float))


def write_series(series: ObservationSeries, path) -> None:
    path = Path(path)
    if path.suffix == ".bin":
        path.write_bytes(series_to_bytes(series))
    else:
        path.write_text(series_to_csv(series))


def read_series(path) -> ObservationSeries:
    """Read a CSV or LSDE1 series; the format is detected from the magic bytes."""
    data = Path(path).read_bytes()
    if data.startswith(MAGIC):
        return series_from_bytes(data)
    return series_from_csv(data.decode("utf-8"))
