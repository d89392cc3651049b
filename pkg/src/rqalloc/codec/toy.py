"""Built-in 8x8 DCT image codec used as a deterministic stand-in for a real encoder.

Bitstream layout (all header fields big-endian)::

    offset  size  field
    0       4     magic b"RQTC"
    4       2     padded luma width
    6       2     padded luma height
    8       2     original width
    10      2     original height
    12      1     qp
    13      1     bit depth (10)
    14      2     reserved, zero
    16      ...   payload bits, MSB first, zero-padded to a byte boundary

The payload codes the Y, Cb and Cr planes in turn. Each plane is extended to
a multiple of 8 by edge replication and split into 8x8 blocks in raster
order. A block is ``ue(n)`` followed by ``n`` pairs ``ue(run) se(level)``,
one per nonzero quantized coefficient in zigzag order, ``run`` counting the
zeros skipped since the previous nonzero coefficient.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..pixelio import Plane, Yuv420Picture
from ..validation import RqallocError, ValidationError, round_half_away
from .expgolomb import BitReader, BitstreamExhausted, signed_to_code, ue_bits

MAGIC = b"RQTC"
HEADER = struct.Struct(">4sHHHHBB2x")
BLOCK = 8


class BadMagicError(RqallocError):
    pass


class TruncatedStreamError(RqallocError):
    pass


@dataclass(frozen=True)
class ToyCodecParams:
    block: int = BLOCK
    bit_depth: int = 10

    @staticmethod
    def step(qp: int) -> float:
        """Quantizer step size; doubles every 6 QP, 1.0 at qp 4."""
        return 2.0 ** ((qp - 4) / 6.0)


def dct_matrix(n: int = BLOCK) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    c[0, :] = math.sqrt(1.0 / n)
    return c


def zigzag_order(n: int = BLOCK) -> np.ndarray:
    """Raster indices of an n x n block in JPEG zigzag order."""
    cells = sorted(
        ((r, c) for r in range(n) for c in range(n)),
        key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]),
    )
    return np.array([r * n + c for r, c in cells])


_DCT = dct_matrix()
_ZIGZAG = zigzag_order()
_UNZIGZAG = np.argsort(_ZIGZAG)


def _to_blocks(data: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = data.shape
    ph, pw = -h % BLOCK, -w % BLOCK
    if ph or pw:
        data = np.pad(data, ((0, ph), (0, pw)), mode="edge")
    by, bx = data.shape[0] // BLOCK, data.shape[1] // BLOCK
    blocks = data.reshape(by, BLOCK, bx, BLOCK).transpose(0, 2, 1, 3).reshape(-1, BLOCK, BLOCK)
    return blocks, (by, bx)


def _from_blocks(blocks: np.ndarray, grid, h: int, w: int) -> np.ndarray:
    by, bx = grid
    data = blocks.reshape(by, bx, BLOCK, BLOCK).transpose(0, 2, 1, 3)
    data = data.reshape(by * BLOCK, bx * BLOCK)
    return data[:h, :w]


def forward_dct(blocks: np.ndarray) -> np.ndarray:
    return _DCT @ blocks @ _DCT.T


def inverse_dct(coefs: np.ndarray) -> np.ndarray:
    return _DCT.T @ coefs @ _DCT


ue = lru_cache(maxsize=4096)(ue_bits)


def encode_coefficients(levels: np.ndarray) -> str:
    """Entropy-code quantized blocks given as (n_blocks, 64) zigzag-ordered ints."""
    out = []
    for row in levels:
        nz = np.flatnonzero(row)
        out.append(ue(len(nz)))
        prev = -1
        for pos in nz.tolist():
            out.append(ue(pos - prev - 1))
            out.append(ue(signed_to_code(int(row[pos]))))
            prev = pos
    return "".join(out)


def decode_coefficients(reader: BitReader, n_blocks: int) -> np.ndarray:
    levels = np.zeros((n_blocks, BLOCK * BLOCK), dtype=np.int64)
    for b in range(n_blocks):
        n = reader.read_ue()
        pos = -1
        for _ in range(n):
            pos += reader.read_ue() + 1
            if pos >= BLOCK * BLOCK:
                raise TruncatedStreamError(f"coefficient run overflows block {b}")
            levels[b, pos] = reader.read_se()
    return levels


def _check_qp(qp) -> int:
    if isinstance(qp, bool) or int(qp) != qp or not 0 <= qp <= 63:
        raise ValidationError(f"qp must be an integer in [0, 63], got {qp!r}")
    return int(qp)


def quantize_plane(plane: Plane, qp: int) -> tuple[np.ndarray, tuple[int, int]]:
    mid = 1 << (plane.bit_depth - 1)
    blocks, grid = _to_blocks(plane.data.astype(np.float64) - mid)
    q = round_half_away(forward_dct(blocks) / ToyCodecParams.step(qp)).astype(np.int64)
    return q.reshape(-1, BLOCK * BLOCK)[:, _ZIGZAG], grid


def dequantize_plane(levels: np.ndarray, grid, qp: int, h: int, w: int, bit_depth=10) -> Plane:
    mid = 1 << (bit_depth - 1)
    coefs = levels[:, _UNZIGZAG].reshape(-1, BLOCK, BLOCK) * ToyCodecParams.step(qp)
    rec = _from_blocks(inverse_dct(coefs), grid, h, w) + mid
    peak = (1 << bit_depth) - 1
    return Plane(np.clip(round_half_away(rec), 0, peak).astype(np.int32), bit_depth)


def toy_encode(pic: Yuv420Picture, qp: int) -> bytes:
    qp = _check_qp(qp)
    header = HEADER.pack(MAGIC, pic.width, pic.height, pic.orig_width, pic.orig_height, qp,
                         pic.bit_depth)
    bits = "".join(encode_coefficients(quantize_plane(p, qp)[0]) for p in pic.planes)
    bits += "0" * (-len(bits) % 8)
    payload = int(bits, 2).to_bytes(len(bits) // 8, "big") if bits else b""
    return header + payload


def _plane_geometry(width: int, height: int):
    for w, h in ((width, height), (width // 2, height // 2), (width // 2, height // 2)):
        yield w, h, (-(-h // BLOCK), -(-w // BLOCK))


def toy_decode(bitstream: bytes) -> Yuv420Picture:
    if len(bitstream) < HEADER.size:
        raise TruncatedStreamError(f"stream of {len(bitstream)} bytes is shorter than the header")
    magic, width, height, ow, oh, qp, bd = HEADER.unpack_from(bitstream)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    payload = bitstream[HEADER.size:]
    bits = format(int.from_bytes(payload, "big"), f"0{len(payload) * 8}b") if payload else ""
    reader = BitReader(bits)
    planes = []
    try:
        for w, h, grid in _plane_geometry(width, height):
            levels = decode_coefficients(reader, grid[0] * grid[1])
            planes.append(dequantize_plane(levels, grid, qp, h, w, bd))
    except BitstreamExhausted as exc:
        raise TruncatedStreamError(
            f"payload ended before all blocks of the {width}x{height} picture were decoded"
        ) from exc
    if reader.remaining() >= 8 or "1" in bits[reader.pos:]:
        raise TruncatedStreamError("header dimensions disagree with payload length")
    return Yuv420Picture(*planes, ow, oh, bd)
