"""Binary field checkpoints.

Fixed little-endian layout so files are portable and diffable by hash:

    magic           4 bytes  b"IMCG"
    version         u32      currently 1
    grid_radius     u32
    N               u32      low/high split threshold on a = 1+|n|^2
    K               u32      averaging band half-width
    omega,beta,gamma f64 x3
    count           u64      number of coefficients = (2*grid_radius+1)^3
    payload         count * (re f64, im f64), modes in lexicographic
                    (k, l, m) order, each axis from -G to G

The payload order matches the C-order ravel of the coefficient cube, so
writing is a single astype/tobytes and loading is bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (CheckpointError, CheckpointMagicError,
                     CheckpointPayloadError, CheckpointVersionError)
from .spectral import SpectralField, SpectralGrid
from .truncation import ModelParams

MAGIC = b"IMCG"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIdddQ")


@dataclass(frozen=True)
class CheckpointHeader:
    version: int
    grid_radius: int
    N: int
    K: int
    omega: float
    beta: float
    gamma: float
    count: int

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.grid_radius,
                            self.N, self.K, self.omega, self.beta,
                            self.gamma, self.count)

    @classmethod
    def unpack(cls, buf: bytes) -> "CheckpointHeader":
        if len(buf) < _HEADER.size:
            raise CheckpointError(
                f"file too short for header: {len(buf)} < {_HEADER.size}")
        magic, ver, g, n, k, om, be, ga, cnt = _HEADER.unpack_from(buf)
        if magic != MAGIC:
            raise CheckpointMagicError(
                f"bad magic {magic!r}, expected {MAGIC!r}")
        if ver != VERSION:
            raise CheckpointVersionError(
                f"unsupported format version {ver}, expected {VERSION}")
        side = 2 * g + 1
        if cnt != side ** 3:
            raise CheckpointPayloadError(
                f"coefficient count mismatch: header says {cnt}, "
                f"grid_radius {g} implies {side ** 3}")
        return cls(ver, g, n, k, om, be, ga, cnt)


def header_for(u: SpectralField,
               params: ModelParams | None = None) -> CheckpointHeader:
    g = u.grid.radius
    if params is None:
        n, k, om, be, ga = 0, 0, 0.0, 0.0, 0.0
    else:
        n, k = int(round(params.N)), int(round(params.K))
        om, be, ga = params.omega, params.beta, params.gamma
    return CheckpointHeader(VERSION, g, n, k, om, be, ga, (2 * g + 1) ** 3)


def dumps_field(u: SpectralField, params: ModelParams | None = None) -> bytes:
    payload = np.ascontiguousarray(u.coeffs).astype("<c16", copy=False)
    return header_for(u, params).pack() + payload.tobytes()


def loads_field(buf: bytes) -> tuple[CheckpointHeader, SpectralField]:
    hdr = CheckpointHeader.unpack(buf)
    need = _HEADER.size + 16 * hdr.count
    if len(buf) != need:
        raise CheckpointPayloadError(
            f"coefficient count mismatch: payload holds "
            f"{(len(buf) - _HEADER.size) // 16} coefficients, header "
            f"says {hdr.count}")
    side = 2 * hdr.grid_radius + 1
    coeffs = np.frombuffer(buf, dtype="<c16", offset=_HEADER.size,
                           count=hdr.count).reshape((side,) * 3)
    grid = SpectralGrid(hdr.grid_radius)
    return hdr, grid.field(coeffs.astype(np.complex128))


def save_field(path, u: SpectralField,
               params: ModelParams | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_field(u, params))


def load_field(path) -> SpectralField:
    with open(path, "rb") as fh:
        buf = fh.read()
    return loads_field(buf)[1]


def load_field_with_header(path) -> tuple[CheckpointHeader, SpectralField]:
    with open(path, "rb") as fh:
        buf = fh.read()
    return loads_field(buf)
