"""Template-driven adapters for external encoder/decoder executables."""
from __future__ import annotations

import json
import os
import shlex
import shutil
import string
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources

from ..pixelio import Yuv420Picture, read_yuv_raw, write_yuv_raw
from ..validation import RqallocError

ENCODE_REQUIRED = {"input", "bitstream", "qp"}
ENCODE_ALLOWED = ENCODE_REQUIRED | {"width", "height"}
DECODE_REQUIRED = {"bitstream", "recon"}
DECODE_ALLOWED = DECODE_REQUIRED | {"width", "height"}


class ConfigError(RqallocError, ValueError):
    """Invalid adapter or pipeline configuration."""


class ToolError(RqallocError):
    """An external codec could not be run or failed."""


def _fields(template: str) -> set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(template) if name}


@dataclass(frozen=True)
class EncoderAdapter:
    """Command templates for an external codec.

    ``encode_template`` must reference ``{input}``, ``{bitstream}`` and ``{qp}``
    and may use ``{width}``/``{height}``; ``decode_template`` must reference
    ``{bitstream}`` and ``{recon}``. ``fixed_args`` are appended to the encode
    command after rendering.
    """

    encode_template: str
    decode_template: str
    fixed_args: tuple = ()
    name: str = "external"

    def __post_init__(self):
        object.__setattr__(self, "fixed_args", tuple(self.fixed_args))
        enc = _fields(self.encode_template)
        for arg in self.fixed_args:
            enc |= _fields(arg)
        dec = _fields(self.decode_template)
        if missing := ENCODE_REQUIRED - enc:
            raise ConfigError(f"encode template lacks placeholder(s) {sorted(missing)}")
        if unknown := enc - ENCODE_ALLOWED:
            raise ConfigError(f"encode template uses unknown placeholder(s) {sorted(unknown)}")
        if missing := DECODE_REQUIRED - dec:
            raise ConfigError(f"decode template lacks placeholder(s) {sorted(missing)}")
        if unknown := dec - DECODE_ALLOWED:
            raise ConfigError(f"decode template uses unknown placeholder(s) {sorted(unknown)}")

    @property
    def id(self) -> str:
        return self.name

    def render_encode(self, input, bitstream, width, height, qp) -> list[str]:
        values = dict(input=input, bitstream=bitstream, width=width, height=height, qp=qp)
        tokens = shlex.split(self.encode_template) + list(self.fixed_args)
        return [t.format(**values) for t in tokens]

    def render_decode(self, bitstream, recon, width=0, height=0) -> list[str]:
        values = dict(bitstream=bitstream, recon=recon, width=width, height=height)
        return [t.format(**values) for t in shlex.split(self.decode_template)]

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderAdapter":
        try:
            return cls(d["encode_template"], d["decode_template"], tuple(d.get("fixed_args", ())),
                       d.get("name", "external"))
        except KeyError as exc:
            raise ConfigError(f"adapter config lacks {exc}") from exc

    def to_dict(self) -> dict:
        return {"name": self.name, "encode_template": self.encode_template,
                "decode_template": self.decode_template, "fixed_args": list(self.fixed_args)}


def load_preset(name_or_path: str) -> EncoderAdapter:
    """Load an adapter from a JSON file or a shipped preset name (e.g. ``ecm_intra``)."""
    if os.path.isfile(name_or_path):
        with open(name_or_path) as fh:
            return EncoderAdapter.from_dict(json.load(fh))
    try:
        text = resources.files("rqalloc.presets").joinpath(f"{name_or_path}.json").read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"unknown adapter preset {name_or_path!r}") from exc
    return EncoderAdapter.from_dict(json.loads(text))


@dataclass(frozen=True)
class EncodeResult:
    bitstream_bytes: int
    bitstream_path: str
    qp: int
    wall_time: float = field(default=0.0, compare=False)


def _run(cmd: list[str], what: str, cwd: str) -> None:
    if shutil.which(cmd[0]) is None:
        raise ToolError(f"{what}: executable not found: {cmd[0]}")
    try:
        proc = subprocess.run(cmd, cwd=cwd, capture_output=True, text=True)
    except OSError as exc:
        raise ToolError(f"{what}: cannot execute {cmd[0]}: {exc}") from exc
    if proc.returncode != 0:
        diag = (proc.stderr or proc.stdout).strip()[-2000:]
        raise ToolError(f"{what} exited with status {proc.returncode}: {diag}")


def encode_external(adapter: EncoderAdapter, pic: Yuv420Picture, qp: int,
                    workdir: str | None = None) -> EncodeResult:
    """Write ``pic`` as raw YUV into a fresh directory and run the encoder on it.

    The directory (created under ``workdir`` if given) is left in place so
    the caller can collect the bitstream.
    """
    tmp = tempfile.mkdtemp(prefix=f"enc-qp{qp}-", dir=workdir)
    src = os.path.join(tmp, "input.yuv")
    bitstream = os.path.join(tmp, "stream.bin")
    write_yuv_raw(pic, src)
    cmd = adapter.render_encode(src, bitstream, pic.width, pic.height, qp)
    t0 = time.perf_counter()
    _run(cmd, f"encoder (qp {qp})", tmp)
    elapsed = time.perf_counter() - t0
    if not os.path.exists(bitstream) or os.path.getsize(bitstream) == 0:
        raise ToolError(f"encoder (qp {qp}) produced no bitstream at {bitstream}")
    return EncodeResult(os.path.getsize(bitstream), bitstream, qp, elapsed)


def decode_external(adapter: EncoderAdapter, bitstream_path, width: int, height: int,
                    orig_width=None, orig_height=None) -> Yuv420Picture:
    """Run the decoder and read its raw 10-bit 4:2:0 reconstruction."""
    if not os.path.exists(bitstream_path):
        raise FileNotFoundError(f"no such bitstream: {bitstream_path}")
    with tempfile.TemporaryDirectory(prefix="dec-") as tmp:
        recon = os.path.join(tmp, "recon.yuv")
        cmd = adapter.render_decode(os.fspath(bitstream_path), recon, width, height)
        _run(cmd, "decoder", tmp)
        if not os.path.exists(recon):
            raise ToolError(f"decoder wrote no reconstruction to {recon}")
        return read_yuv_raw(recon, width, height, orig_width, orig_height)

