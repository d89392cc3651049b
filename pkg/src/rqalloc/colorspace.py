"""BT.709 limited-range conversion and Lanczos 4:2:0 chroma resampling.

Chroma siting is horizontally co-sited and vertically interstitial: chroma
sample ``(i, j)`` sits at luma position ``(2i + 0.5, 2j)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .pixelio import Plane, RgbImage, Yuv420Picture, pad_to_even
from .validation import ValidationError, round_half_away

PEAK10 = 1023


@dataclass(frozen=True)
class ConversionParams:
    kr: float = 0.2126
    kb: float = 0.0722
    range: str = "limited"
    bit_depth: int = 10

    def __post_init__(self):
        if not (self.kr > 0 and self.kb > 0 and self.kr + self.kb < 1):
            raise ValidationError(f"invalid luma coefficients kr={self.kr}, kb={self.kb}")
        if self.range != "limited":
            raise ValidationError("only limited range is supported")
        if self.bit_depth != 10:
            raise ValidationError("only 10-bit YCbCr is supported")


BT709 = ConversionParams()


def lanczos(x, a: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < a, np.sinc(x) * np.sinc(x / a), 0.0)


@dataclass(frozen=True)
class LanczosKernel:
    """Lanczos taps for one fractional sample position.

    ``scale`` stretches the kernel in source units (2 for the 2:1 decimator,
    so the lowpass cutoff follows the output Nyquist; 1 for interpolation).
    Tap ``t`` applies to source sample ``base + offsets[t]``.
    """

    a: int = 3
    phase: float = 0.0
    scale: int = 1

    def __post_init__(self):
        if self.a < 1 or self.scale < 1 or not 0 <= self.phase < 1:
            raise ValidationError(f"invalid Lanczos kernel {self}")

    @cached_property
    def offsets(self) -> np.ndarray:
        support = self.a * self.scale
        lo = math.floor(self.phase - support) + 1
        hi = math.ceil(self.phase + support) - 1
        return np.arange(lo, hi + 1)

    @cached_property
    def taps(self) -> np.ndarray:
        w = lanczos((self.offsets - self.phase) / self.scale, self.a)
        return w / w.sum()


def _resample_axis(data: np.ndarray, axis: int, out_len: int, groups) -> np.ndarray:
    """Apply per-output kernels along ``axis`` with edge replication.

    ``groups`` maps an output-index slice to ``(bases, kernel)``.
    """
    src = np.moveaxis(data.astype(np.float64), axis, 0)
    n = src.shape[0]
    out = np.empty((out_len,) + src.shape[1:], dtype=np.float64)
    for out_slice, bases, kernel in groups:
        acc = np.zeros((len(bases),) + src.shape[1:], dtype=np.float64)
        for off, w in zip(kernel.offsets, kernel.taps):
            idx = np.clip(bases + off, 0, n - 1)
            acc += w * src[idx]
        out[out_slice] = acc
    out = np.clip(round_half_away(out), 0, PEAK10)
    return np.moveaxis(out, 0, axis).astype(np.int32)


def lanczos_downsample_2x(p: Plane, a: int = 3) -> Plane:
    """Halve both dimensions (co-sited horizontally, interstitial vertically)."""
    h, w = p.data.shape
    if h % 2 or w % 2:
        raise ValidationError(f"downsampling needs even dimensions, got {w}x{h}")
    horiz = LanczosKernel(a, 0.0, 2)
    vert = LanczosKernel(a, 0.5, 2)
    tmp = _resample_axis(p.data, 1, w // 2, [(slice(None), 2 * np.arange(w // 2), horiz)])
    out = _resample_axis(tmp, 0, h // 2, [(slice(None), 2 * np.arange(h // 2), vert)])
    return Plane(out, p.bit_depth)


def lanczos_upsample_2x(p: Plane, a: int = 3) -> Plane:
    """Double both dimensions, inverting the downsampler's chroma siting."""
    h, w = p.data.shape
    m = np.arange(h)
    # luma row 2m is chroma row m - 0.25, row 2m+1 is chroma row m + 0.25
    tmp = _resample_axis(p.data, 0, 2 * h, [
        (slice(0, None, 2), m - 1, LanczosKernel(a, 0.75)),
        (slice(1, None, 2), m, LanczosKernel(a, 0.25)),
    ])
    n = np.arange(w)
    out = _resample_axis(tmp, 1, 2 * w, [
        (slice(0, None, 2), n, LanczosKernel(a, 0.0)),
        (slice(1, None, 2), n, LanczosKernel(a, 0.5)),
    ])
    return Plane(out, p.bit_depth)


@dataclass(frozen=True, eq=False)
class Ycbcr444Image:
    y: Plane
    cb: Plane
    cr: Plane

    def __post_init__(self):
        if not (self.y.data.shape == self.cb.data.shape == self.cr.data.shape):
            raise ValidationError("Y, Cb and Cr planes must share dimensions")

    @property
    def width(self) -> int:
        return self.y.width

    @property
    def height(self) -> int:
        return self.y.height


def rgb_to_ycbcr709(img: RgbImage, params: ConversionParams = BT709) -> Ycbcr444Image:
    if img.bit_depth != 10:
        raise ValidationError(f"expected 10-bit RGB, got {img.bit_depth}-bit")
    kr, kb = params.kr, params.kb
    rgb = img.samples.astype(np.float64) / PEAK10
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = kr * r + (1 - kr - kb) * g + kb * b
    cb = (b - y) / (2 * (1 - kb))
    cr = (r - y) / (2 * (1 - kr))

    def quant(v, scale, offset):
        return np.clip(round_half_away((scale * v + offset) * 4), 0, PEAK10).astype(np.int32)

    return Ycbcr444Image(
        Plane(quant(y, 219, 16)), Plane(quant(cb, 224, 128)), Plane(quant(cr, 224, 128))
    )


def ycbcr_to_rgb709(img: Ycbcr444Image, params: ConversionParams = BT709) -> RgbImage:
    kr, kb = params.kr, params.kb
    y = (img.y.data / 4.0 - 16) / 219
    cb = (img.cb.data / 4.0 - 128) / 224
    cr = (img.cr.data / 4.0 - 128) / 224
    r = y + 2 * (1 - kr) * cr
    b = y + 2 * (1 - kb) * cb
    g = (y - kr * r - kb * b) / (1 - kr - kb)
    rgb = np.stack([r, g, b], axis=-1) * PEAK10
    return RgbImage(np.clip(round_half_away(rgb), 0, PEAK10).astype(np.int32), 10)


def rgb_to_yuv420(img: RgbImage, params: ConversionParams = BT709, a: int = 3) -> Yuv420Picture:
    """Convert, pad every plane to even size, then decimate chroma."""
    ycc = rgb_to_ycbcr709(img, params)
    y, cb, cr = (pad_to_even(p) for p in (ycc.y, ycc.cb, ycc.cr))
    return Yuv420Picture(
        y, lanczos_downsample_2x(cb, a), lanczos_downsample_2x(cr, a), img.width, img.height
    )


def yuv420_to_rgb(pic: Yuv420Picture, params: ConversionParams = BT709, a: int = 3) -> RgbImage:
    """Interpolate chroma, convert back to RGB and crop the padding away."""
    ycc = Ycbcr444Image(pic.y, lanczos_upsample_2x(pic.cb, a), lanczos_upsample_2x(pic.cr, a))
    rgb = ycbcr_to_rgb709(ycc, params)
    return RgbImage(rgb.samples[: pic.orig_height, : pic.orig_width], 10)


def _as_rgb(x) -> RgbImage:
    if isinstance(x, RgbImage):
        return x
    return RgbImage(np.asarray(x), 10)


class Yuv420Converter(TransformerMixin, BaseEstimator):
    """RGB 4:4:4 <-> YCbCr 4:2:0 10-bit as a stateless transformer.

    ``transform`` accepts an :class:`RgbImage`, a (H, W, 3) array of 10-bit
    codes, or a list of either; ``inverse_transform`` takes the matching
    :class:`Yuv420Picture` (or list).

    Parameters
    ----------
    kr, kb : float
        Luma coefficients (BT.709 by default).
    lobes : int
        Lanczos lobe count used by both resamplers.
    """

    def __init__(self, kr=0.2126, kb=0.0722, lobes=3):
        self.kr = kr
        self.kb = kb
        self.lobes = lobes

    def _params(self):
        return ConversionParams(self.kr, self.kb)

    def fit(self, X=None, y=None):
        self.params_ = self._params()
        return self

    def transform(self, X):
        params = self._params()
        if isinstance(X, list):
            return [rgb_to_yuv420(_as_rgb(x), params, self.lobes) for x in X]
        return rgb_to_yuv420(_as_rgb(X), params, self.lobes)

    def inverse_transform(self, X):
        params = self._params()
        if isinstance(X, list):
            return [yuv420_to_rgb(x, params, self.lobes) for x in X]
        return yuv420_to_rgb(X, params, self.lobes)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
