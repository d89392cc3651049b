"""Order-0 Exp-Golomb codes over '0'/'1' strings."""
from __future__ import annotations

from ..validation import RqallocError, ValidationError


class BitstreamExhausted(RqallocError):
    """The bit source ended in the middle of a codeword."""


def ue_bits(n: int) -> str:
    if n < 0:
        raise ValidationError(f"unsigned Exp-Golomb needs n >= 0, got {n}")
    b = bin(n + 1)[2:]
    return "0" * (len(b) - 1) + b


def signed_to_code(v: int) -> int:
    return -2 * v if v <= 0 else 2 * v - 1


def code_to_signed(k: int) -> int:
    return (k + 1) // 2 if k & 1 else -(k // 2)


def exp_golomb_encode(v: int) -> str:
    """Signed value -> codeword, e.g. 0 -> '1', 1 -> '010', -1 -> '011'."""
    if abs(v) >= 1 << 31:
        raise ValidationError(f"value out of range: {v}")
    return ue_bits(signed_to_code(v))


class BitReader:
    """Sequential reader over a '0'/'1' string."""

    def __init__(self, bits: str, pos: int = 0):
        self.bits = bits
        self.pos = pos

    def read_ue(self) -> int:
        bits, pos = self.bits, self.pos
        one = bits.find("1", pos)
        if one < 0:
            raise BitstreamExhausted(f"no terminating 1 after bit {pos}")
        zeros = one - pos
        end = one + zeros + 1
        if end > len(bits):
            raise BitstreamExhausted(f"codeword at bit {pos} runs past end of stream")
        self.pos = end
        return int(bits[one:end], 2) - 1

    def read_se(self) -> int:
        return code_to_signed(self.read_ue())

    def remaining(self) -> int:
        return len(self.bits) - self.pos


def exp_golomb_decode(bits: str) -> int:
    """Decode exactly one signed codeword."""
    reader = BitReader(bits)
    v = reader.read_se()
    if reader.remaining():
        raise ValidationError(f"{reader.remaining()} trailing bits after codeword")
    return v


def encode_values(values) -> str:
    return "".join(exp_golomb_encode(int(v)) for v in values)


def decode_values(bits: str, count: int) -> list[int]:
    reader = BitReader(bits)
    return [reader.read_se() for _ in range(count)]
