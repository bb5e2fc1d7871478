"""Time-series files: a small binary format with a CSV fallback.

Binary layout (all fields little-endian)::

    offset  size  field
    0       6     magic b"PSDC1\\0"
    6       2     uint16 endian tag 0xFEFF
    8       4     uint32 sample width in bytes (4 or 8)
    12      8     float64 sampling frequency fs (Hz)
    20      8     uint64 number of samples N
    28      N*w   IEEE float samples

The CSV form holds one sample per line after ``# key=value`` comment lines;
``# fs=<Hz>`` is required unless ``fs`` is passed explicitly, ``# unit=<u>``
is optional.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .spectral import UNIT_TO_FM, TimeSeries

__all__ = ["MAGIC", "HEADER", "InputError", "SeriesFile", "write_series", "read_series"]

MAGIC = b"PSDC1\0"
ENDIAN_TAG = 0xFEFF
HEADER = struct.Struct("<6sHIdQ")


class InputError(ValueError):
    """Unreadable or inconsistent input file."""


@dataclass(frozen=True)
class SeriesFile:
    """A series read from disk together with its provenance."""

    series: TimeSeries
    path: str
    fs: float
    n: int
    unit: str
    format: str


def write_series(path, samples, fs: float, *, fmt: Optional[str] = None, width: int = 8, unit: str = "fm") -> None:
    """Write raw samples (in ``unit``) as binary or CSV.

    ``fmt`` defaults to ``"csv"`` for a ``.csv`` suffix and ``"bin"`` otherwise.
    The binary header has no unit field, so readers must be told the unit.
    """
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "bin")
    x = np.asarray(samples, dtype=float).ravel()
    if fmt == "bin":
        if width not in (4, 8):
            raise ValueError("sample width must be 4 or 8 bytes")
        dtype = "<f4" if width == 4 else "<f8"
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, ENDIAN_TAG, width, float(fs), x.size))
            fh.write(x.astype(dtype).tobytes())
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write(f"# fs={float(fs)!r}\n# unit={unit}\n")
            fh.write("\n".join(repr(float(v)) for v in x))
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _read_binary(raw: bytes, path: str) -> tuple[np.ndarray, float]:
    if len(raw) < HEADER.size:
        raise InputError(f"{path}: truncated header")
    magic, tag, width, fs, n = HEADER.unpack_from(raw)
    if tag != ENDIAN_TAG:
        raise InputError(f"{path}: unsupported byte order tag {tag:#06x}")
    if width not in (4, 8):
        raise InputError(f"{path}: sample width {width} not in (4, 8)")
    body = raw[HEADER.size :]
    if len(body) != n * width:
        raise InputError(f"{path}: header promises {n} samples, file holds {len(body) // width}")
    x = np.frombuffer(body, dtype="<f4" if width == 4 else "<f8").astype(float)
    return x, fs


def _read_csv(text: str, path: str) -> tuple[np.ndarray, dict]:
    meta, values = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].partition("=")
            if sep:
                meta[key.strip().lower()] = val.strip()
            continue
        try:
            values.append(float(line.split(",")[0]))
        except ValueError:
            raise InputError(f"{path}:{lineno}: not a number: {line!r}") from None
    return np.array(values), meta


def read_series(path, fs: Optional[float] = None, unit: Optional[str] = None) -> SeriesFile:
    """Read a binary or CSV series; the format is detected from the magic bytes.

    ``fs`` and ``unit`` fill in what the file does not record.  A flag that
    contradicts the file header is an :class:`InputError`.  The unit defaults
    to femtometers.
    """
    path = str(path)
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    file_unit = None
    if raw.startswith(MAGIC):
        x, file_fs = _read_binary(raw, path)
        fmt = "bin"
    else:
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise InputError(f"{path}: neither a PSDC1 binary nor a text file") from None
        x, meta = _read_csv(text, path)
        fmt = "csv"
        try:
            file_fs = float(meta["fs"]) if "fs" in meta else None
        except ValueError:
            raise InputError(f"{path}: bad fs header {meta['fs']!r}") from None
        file_unit = meta.get("unit")
    if fs is not None and file_fs is not None and not np.isclose(fs, file_fs, rtol=1e-12, atol=0):
        raise InputError(f"{path}: --fs {fs} contradicts header fs={file_fs}")
    if unit is not None and file_unit is not None and unit != file_unit:
        raise InputError(f"{path}: --unit {unit} contradicts header unit={file_unit}")
    fs = file_fs if file_fs is not None else fs
    unit = file_unit or unit or "fm"
    if fs is None:
        raise InputError(f"{path}: sampling frequency unknown; pass --fs")
    if unit not in UNIT_TO_FM:
        raise InputError(f"{path}: unknown unit {unit!r}")
    try:
        ts = TimeSeries(x, fs, unit)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return SeriesFile(ts, path, float(fs), int(x.size), unit, fmt)
