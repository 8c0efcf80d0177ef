"""Systematic MDS erasure code over GF(2^8).

The generator is ``V @ inv(V[:k])`` for an n x k Vandermonde matrix ``V`` on
the distinct points 0..n-1, so its top k rows are the identity (shares
1..k carry the data verbatim) and any k rows remain invertible.
"""

from __future__ import annotations

import math
import struct
import zlib
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from gridsim.errors import (
    ChecksumError,
    InsufficientSharesError,
    InvalidSpecError,
    VersionConflictError,
)

PRIMITIVE_POLY = 0x11D

_EXP = np.zeros(512, dtype=np.uint8)
_LOG = np.zeros(256, dtype=np.int64)
_x = 1
for _i in range(255):
    _EXP[_i] = _x
    _LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= PRIMITIVE_POLY
_EXP[255:510] = _EXP[:255]

# Full multiplication table; row a is the map v -> a*v.
MUL = np.zeros((256, 256), dtype=np.uint8)
_nz = np.arange(1, 256)
MUL[1:, 1:] = _EXP[(_LOG[_nz][:, None] + _LOG[_nz][None, :]) % 255]


def gf_mul(a: int, b: int) -> int:
    return int(MUL[a, b])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(_EXP[(255 - _LOG[a]) % 255])


def gf_pow(a: int, e: int) -> int:
    if e == 0:
        return 1
    if a == 0:
        return 0
    return int(_EXP[(_LOG[a] * e) % 255])


def mat_mul(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    out = []
    for row in a:
        acc = [0] * len(b[0])
        for x, brow in zip(row, b):
            if x:
                for j, y in enumerate(brow):
                    acc[j] ^= gf_mul(x, y)
        out.append(acc)
    return out


def mat_inv(m: list[list[int]]) -> list[list[int]]:
    n = len(m)
    a = [list(row) + [int(i == j) for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col]), None)
        if pivot is None:
            raise ValueError("singular matrix")
        a[col], a[pivot] = a[pivot], a[col]
        inv = gf_inv(a[col][col])
        a[col] = [gf_mul(v, inv) for v in a[col]]
        for r in range(n):
            f = a[r][col]
            if r != col and f:
                a[r] = [v ^ gf_mul(f, p) for v, p in zip(a[r], a[col])]
    return [row[n:] for row in a]


@lru_cache(maxsize=None)
def generator_matrix(k: int, n: int) -> tuple[tuple[int, ...], ...]:
    vander = [[gf_pow(x, j) for j in range(k)] for x in range(n)]
    gen = mat_mul(vander, mat_inv(vander[:k]))
    return tuple(tuple(row) for row in gen)


@dataclass(frozen=True)
class ErasureParams:
    k: int = 2
    n: int = 4

    def violations(self) -> list[str]:
        if not (isinstance(self.k, int) and isinstance(self.n, int)):
            return ["ErasureParams: k and n must be integers"]
        out = []
        if self.k < 1:
            out.append(f"ErasureParams: k must be >= 1, got {self.k}")
        if self.k > self.n:
            out.append(f"ErasureParams: k={self.k} exceeds n={self.n}")
        if self.n > 255:
            out.append(f"ErasureParams: n={self.n} exceeds the GF(256) bound 255")
        return out

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise InvalidSpecError(problems)

    def scaled_to(self, holders: int) -> "ErasureParams | None":
        """Shrink to fit ``holders`` share holders: n = holders, k = ceil(n/2)."""
        if holders >= self.n:
            return self
        if holders <= 0:
            return None
        return ErasureParams(k=math.ceil(holders / 2), n=holders)


_HEADER = struct.Struct(">QHQI")  # version, index, data length, crc32


@dataclass(frozen=True)
class Share:
    index: int  # 1..n
    payload: bytes
    registry_version: int
    data_length: int
    checksum: int

    def checksum_ok(self) -> bool:
        return zlib.crc32(self.payload) == self.checksum

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(self.registry_version, self.index, self.data_length, self.checksum)
        return header + self.payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Share":
        version, index, length, crc = _HEADER.unpack_from(blob)
        return cls(index, bytes(blob[_HEADER.size:]), version, length, crc)


def encode_bytes(data: bytes, params: ErasureParams, version: int = 0) -> list[Share]:
    params.validate()
    k, n = params.k, params.n
    width = max(1, -(-len(data) // k))
    buf = np.zeros(k * width, dtype=np.uint8)
    buf[: len(data)] = np.frombuffer(data, dtype=np.uint8)
    rows = buf.reshape(k, width)
    gen = generator_matrix(k, n)
    shares = []
    for i in range(n):
        if i < k:
            out = rows[i]
        else:
            out = np.zeros(width, dtype=np.uint8)
            for j, coef in enumerate(gen[i]):
                if coef:
                    out ^= MUL[coef][rows[j]]
        payload = out.tobytes()
        shares.append(Share(i + 1, payload, version, len(data), zlib.crc32(payload)))
    return shares


def majority_version(shares) -> int:
    counts = Counter(s.registry_version for s in shares)
    return max(counts, key=lambda v: (counts[v], v))


def decode_bytes(shares, params: ErasureParams) -> bytes:
    params.validate()
    k = params.k
    shares = list(shares)
    good = [s for s in shares if s.checksum_ok()]
    versions = {s.registry_version for s in good}
    if len(versions) > 1:
        raise VersionConflictError(f"shares carry versions {sorted(versions)}")
    by_index = {}
    for s in good:
        if not 1 <= s.index <= params.n:
            raise InvalidSpecError([f"share index {s.index} outside 1..{params.n}"])
        by_index.setdefault(s.index, s)
    if len(by_index) < k:
        if len(good) < len(shares):
            raise ChecksumError(f"only {len(by_index)} valid shares; {k} needed")
        raise InsufficientSharesError(f"{len(by_index)} distinct shares; {k} needed")
    chosen = [by_index[i] for i in sorted(by_index)[:k]]
    lengths = {s.data_length for s in chosen}
    widths = {len(s.payload) for s in chosen}
    if len(lengths) != 1 or len(widths) != 1:
        raise VersionConflictError("shares disagree on framing")
    length = lengths.pop()

    if [s.index for s in chosen] == list(range(1, k + 1)):
        data = b"".join(s.payload for s in chosen)
        return data[:length]

    gen = generator_matrix(k, params.n)
    inv = mat_inv([list(gen[s.index - 1]) for s in chosen])
    payloads = [np.frombuffer(s.payload, dtype=np.uint8) for s in chosen]
    width = widths.pop()
    rows = []
    for i in range(k):
        out = np.zeros(width, dtype=np.uint8)
        for j, coef in enumerate(inv[i]):
            if coef:
                out ^= MUL[coef][payloads[j]]
        rows.append(out.tobytes())
    return b"".join(rows)[:length]
