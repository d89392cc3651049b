"""Picture containers and file I/O (PNG and headerless planar 10-bit YUV)."""
from __future__ import annotations

import os
from dataclasses import dataclass

import cv2
import numpy as np

from .validation import RqallocError, ValidationError, check_samples


class SizeMismatchError(RqallocError):
    """Raw file size does not match the requested picture geometry."""


@dataclass(frozen=True, eq=False)
class Plane:
    """A single component of samples, stored as a 2-D (height, width) array."""

    data: np.ndarray
    bit_depth: int = 10

    def __post_init__(self):
        object.__setattr__(self, "data", check_samples(self.data, self.bit_depth, 2, "plane"))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Plane({self.width}x{self.height}, {self.bit_depth}-bit)"


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Interleaved RGB samples, shape (height, width, 3)."""

    samples: np.ndarray
    bit_depth: int = 10

    def __post_init__(self):
        arr = check_samples(self.samples, self.bit_depth, 3, "rgb samples")
        if arr.shape[2] != 3:
            raise ValidationError(f"rgb samples: expected 3 channels, got {arr.shape[2]}")
        object.__setattr__(self, "samples", arr)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.samples, other.samples)

    def __repr__(self):
        return f"RgbImage({self.width}x{self.height}, {self.bit_depth}-bit)"


@dataclass(frozen=True, eq=False)
class Yuv420Picture:
    """Padded 10-bit 4:2:0 picture; ``orig_*`` give the size before padding."""

    y: Plane
    cb: Plane
    cr: Plane
    orig_width: int
    orig_height: int
    bit_depth: int = 10

    def __post_init__(self):
        w, h = self.y.width, self.y.height
        if w % 2 or h % 2:
            raise ValidationError(f"luma plane must have even dimensions, got {w}x{h}")
        for name, p in (("cb", self.cb), ("cr", self.cr)):
            if (p.width, p.height) != (w // 2, h // 2):
                raise ValidationError(
                    f"{name} plane is {p.width}x{p.height}, expected {w // 2}x{h // 2}"
                )
        for p in (self.y, self.cb, self.cr):
            if p.bit_depth != self.bit_depth:
                raise ValidationError("all planes must share the picture bit depth")
        if self.orig_width not in (w, w - 1) or self.orig_height not in (h, h - 1):
            raise ValidationError(
                f"original size {self.orig_width}x{self.orig_height} incompatible with "
                f"padded luma {w}x{h}"
            )

    @property
    def width(self) -> int:
        return self.y.width

    @property
    def height(self) -> int:
        return self.y.height

    @property
    def planes(self) -> tuple[Plane, Plane, Plane]:
        return (self.y, self.cb, self.cr)

    def __eq__(self, other):
        if not isinstance(other, Yuv420Picture):
            return NotImplemented
        return (
            self.planes == other.planes
            and (self.orig_width, self.orig_height) == (other.orig_width, other.orig_height)
        )

    def __repr__(self):
        return (
            f"Yuv420Picture({self.width}x{self.height}, "
            f"orig {self.orig_width}x{self.orig_height})"
        )


def pad_to_even(plane: Plane) -> Plane:
    """Replicate the last column/row once along each odd dimension."""
    h, w = plane.data.shape
    pad = ((0, h % 2), (0, w % 2))
    if pad == ((0, 0), (0, 0)):
        return plane
    return Plane(np.pad(plane.data, pad, mode="edge"), plane.bit_depth)


def crop(plane: Plane, orig_width: int, orig_height: int) -> Plane:
    if orig_width > plane.width or orig_height > plane.height:
        raise ValidationError(
            f"cannot crop {plane.width}x{plane.height} plane to {orig_width}x{orig_height}"
        )
    if orig_width < 1 or orig_height < 1:
        raise ValidationError("crop dimensions must be positive")
    if (orig_width, orig_height) == (plane.width, plane.height):
        return plane
    return Plane(plane.data[:orig_height, :orig_width], plane.bit_depth)


def load_png(path) -> RgbImage:
    """Read an 8- or 16-bit RGB(A) PNG as a 10-bit RgbImage.

    8-bit values are promoted with a left shift of 2; 16-bit values keep their
    top 10 bits. Alpha is dropped.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image: {path}")
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise RqallocError(f"unreadable image file: {path}")
    if raw.ndim != 3 or raw.shape[2] not in (3, 4):
        channels = 1 if raw.ndim == 2 else raw.shape[2]
        raise RqallocError(
            f"unsupported color type in {path}: {channels} channel(s), need RGB or RGBA"
        )
    rgb = raw[:, :, 2::-1].astype(np.int32)
    if raw.dtype == np.uint8:
        rgb <<= 2
    elif raw.dtype == np.uint16:
        rgb >>= 6
    else:
        raise RqallocError(f"unsupported sample type {raw.dtype} in {path}")
    return RgbImage(rgb, 10)


def save_png(img: RgbImage, path, bit_depth: int = 16) -> None:
    """Write a 16-bit (lossless for 10-bit content) or 8-bit RGB PNG."""
    s = img.samples.astype(np.int64)
    if img.bit_depth == 8:
        s = s << 2
    if bit_depth == 16:
        out = ((s << 6) | (s >> 4)).astype(np.uint16)
    elif bit_depth == 8:
        out = np.clip((s + 2) >> 2, 0, 255).astype(np.uint8)
    else:
        raise ValidationError(f"PNG output depth must be 8 or 16, got {bit_depth}")
    if not cv2.imwrite(os.fspath(path), np.ascontiguousarray(out[:, :, ::-1])):
        raise RqallocError(f"failed to write {path}")


def raw_yuv_size(width: int, height: int) -> int:
    """Byte size of one padded 4:2:0 picture in the 16-bit raw container."""
    return (width * height + 2 * (width // 2) * (height // 2)) * 2


def yuv_to_bytes(pic: Yuv420Picture) -> bytes:
    return b"".join(p.data.astype("<u2").tobytes() for p in pic.planes)


def write_yuv_raw(pic: Yuv420Picture, path) -> None:
    with open(path, "wb") as fh:
        fh.write(yuv_to_bytes(pic))


def yuv_from_bytes(buf: bytes, width: int, height: int, orig_width=None, orig_height=None,
                   source="buffer") -> Yuv420Picture:
    if width % 2 or height % 2:
        raise ValidationError(f"raw YUV dimensions must be even, got {width}x{height}")
    expected = raw_yuv_size(width, height)
    if len(buf) != expected:
        raise SizeMismatchError(
            f"{source}: expected {expected} bytes for {width}x{height} 4:2:0 10-bit, "
            f"got {len(buf)}"
        )
    samples = np.frombuffer(buf, dtype="<u2").astype(np.int32)
    ny = width * height
    nc = (width // 2) * (height // 2)
    y = samples[:ny].reshape(height, width)
    cb = samples[ny:ny + nc].reshape(height // 2, width // 2)
    cr = samples[ny + nc:].reshape(height // 2, width // 2)
    return Yuv420Picture(
        Plane(y), Plane(cb), Plane(cr),
        width if orig_width is None else orig_width,
        height if orig_height is None else orig_height,
    )


def read_yuv_raw(path, width: int, height: int, orig_width=None, orig_height=None) -> Yuv420Picture:
    """Read a headerless planar Y/Cb/Cr file of 16-bit little-endian samples."""
    with open(path, "rb") as fh:
        buf = fh.read()
    return yuv_from_bytes(buf, width, height, orig_width, orig_height, source=os.fspath(path))
