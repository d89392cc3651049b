"""Codec back ends sharing one encode/decode surface for the sweep harness."""
from __future__ import annotations

import os
import tempfile
import time

from ..pixelio import Yuv420Picture
from .expgolomb import BitstreamExhausted, exp_golomb_decode, exp_golomb_encode
from .external import (
    ConfigError,
    EncoderAdapter,
    EncodeResult,
    ToolError,
    decode_external,
    encode_external,
    load_preset,
)
from .toy import (
    BadMagicError,
    ToyCodecParams,
    TruncatedStreamError,
    toy_decode,
    toy_encode,
)


class ToyCodec:
    """In-process DCT codec with the same interface as :class:`ExternalCodec`."""

    id = "toy-dct8-v1"

    def encode(self, pic: Yuv420Picture, qp: int, workdir=None) -> EncodeResult:
        t0 = time.perf_counter()
        data = toy_encode(pic, qp)
        tmp = tempfile.mkdtemp(prefix=f"enc-qp{qp}-", dir=workdir)
        path = os.path.join(tmp, "stream.bin")
        with open(path, "wb") as fh:
            fh.write(data)
        return EncodeResult(len(data), path, qp, time.perf_counter() - t0)

    def decode(self, bitstream_path, like: Yuv420Picture) -> Yuv420Picture:
        with open(bitstream_path, "rb") as fh:
            return toy_decode(fh.read())


class ExternalCodec:
    def __init__(self, adapter: EncoderAdapter):
        self.adapter = adapter

    @property
    def id(self) -> str:
        return self.adapter.id

    def encode(self, pic: Yuv420Picture, qp: int, workdir=None) -> EncodeResult:
        return encode_external(self.adapter, pic, qp, workdir)

    def decode(self, bitstream_path, like: Yuv420Picture) -> Yuv420Picture:
        return decode_external(self.adapter, bitstream_path, like.width, like.height,
                               like.orig_width, like.orig_height)


def make_codec(spec):
    """``"toy"`` -> ToyCodec; an EncoderAdapter, preset name or JSON path -> ExternalCodec."""
    if isinstance(spec, (ToyCodec, ExternalCodec)):
        return spec
    if isinstance(spec, EncoderAdapter):
        return ExternalCodec(spec)
    if spec == "toy":
        return ToyCodec()
    return ExternalCodec(load_preset(spec))


__all__ = [
    "BadMagicError", "BitstreamExhausted", "ConfigError", "EncodeResult", "EncoderAdapter",
    "ExternalCodec", "ToolError", "ToyCodec", "ToyCodecParams", "TruncatedStreamError",
    "decode_external", "encode_external", "exp_golomb_decode", "exp_golomb_encode",
    "load_preset", "make_codec", "toy_decode", "toy_encode",
]
