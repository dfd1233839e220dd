"""KPI3 binary snapshot format.

Layout (little-endian)::

    magic   4s   b"KPI3"
    version u16  1
    flags   u8   bit0 = mean-zero
    nx, ny1, ny2  u64 each
    lam, alpha    f64 each
    samples       nx*ny1*ny2 f64, row-major (x slowest)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .spectral import DomainSpec, SpectralField, to_physical, to_spectral

MAGIC = b"KPI3"
VERSION = 1
FLAG_MEAN_ZERO = 0x01
_HEADER = struct.Struct("<4sHBQQQdd")


class SnapshotError(ValueError):
    pass


def encode_snapshot(f: SpectralField, mean_zero: bool | None = None) -> bytes:
    d = f.domain
    if mean_zero is None:
        mean_zero = f.is_mean_zero()
    flags = FLAG_MEAN_ZERO if mean_zero else 0
    header = _HEADER.pack(MAGIC, VERSION, flags, d.nx, d.ny1, d.ny2, float(d.lam), float(d.alpha))
    body = np.ascontiguousarray(to_physical(f), dtype="<f8").tobytes()
    return header + body


def decode_snapshot(data: bytes) -> tuple[SpectralField, bool]:
    """Return the field and its mean-zero flag."""
    if len(data) < _HEADER.size:
        raise SnapshotError("truncated header")
    magic, version, flags, nx, ny1, ny2, lam, alpha = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported version {version}")
    n = nx * ny1 * ny2
    if len(data) != _HEADER.size + 8 * n:
        raise SnapshotError(f"expected {n} samples, got {(len(data) - _HEADER.size) / 8:g}")
    domain = DomainSpec(lam=lam, alpha=alpha, nx=nx, ny1=ny1, ny2=ny2)
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(nx, ny1, ny2)
    return to_spectral(domain, values), bool(flags & FLAG_MEAN_ZERO)


def write_snapshot(path: Union[str, Path], f: SpectralField, mean_zero: bool | None = None) -> None:
    Path(path).write_bytes(encode_snapshot(f, mean_zero))


def read_snapshot(path: Union[str, Path]) -> tuple[SpectralField, bool]:
    return decode_snapshot(Path(path).read_bytes())
