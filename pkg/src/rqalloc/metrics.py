"""Full-reference quality metrics: PSNR, XPSNR, MS-SSIM and an external VMAF adapter."""
from __future__ import annotations

import hashlib
import json
import math
import os
import shlex
import shutil
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .pixelio import Plane
from .validation import RqallocError, ValidationError, check_same_shape

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

HIGHPASS = np.array([[-1, -2, -1], [-2, 12, -2], [-1, -2, -1]], dtype=np.float64)


@dataclass(frozen=True)
class MetricScore:
    kind: str
    value: float
    infinite: bool = False

    def __post_init__(self):
        if self.kind not in ("psnr", "xpsnr", "msssim", "vmaf"):
            raise ValidationError(f"unknown metric kind {self.kind!r}")
        if self.kind == "msssim" and not self.infinite and not 0.0 <= self.value <= 1.0:
            raise ValidationError(f"MS-SSIM out of [0, 1]: {self.value}")
        if self.kind == "vmaf" and not 0.0 <= self.value <= 100.0:
            raise ValidationError(f"VMAF out of [0, 100]: {self.value}")

    def __float__(self):
        return math.inf if self.infinite else float(self.value)


def _peak(bit_depth: int) -> float:
    return float((1 << bit_depth) - 1)


def _pair(ref: Plane, deg: Plane):
    check_same_shape(ref.data, deg.data, "reference and degraded planes")
    if ref.bit_depth != deg.bit_depth:
        raise ValidationError("reference and degraded planes differ in bit depth")
    return ref.data.astype(np.float64), deg.data.astype(np.float64)


def _db(peak: float, mse: float, kind: str) -> MetricScore:
    if mse == 0:
        return MetricScore(kind, math.inf, infinite=True)
    return MetricScore(kind, 10.0 * math.log10(peak * peak / mse))


def psnr(ref: Plane, deg: Plane) -> MetricScore:
    r, d = _pair(ref, deg)
    return _db(_peak(ref.bit_depth), float(np.mean((r - d) ** 2)), "psnr")


def combined_psnr(ref_planes, deg_planes, cap_db: float = 100.0) -> MetricScore:
    """4:2:0 summary PSNR, weighting the per-plane values (6*Y + Cb + Cr) / 8.

    Lossless planes contribute ``cap_db``; the result is infinite only when
    all three planes are identical.
    """
    scores = [psnr(r, d) for r, d in zip(ref_planes, deg_planes)]
    if all(s.infinite for s in scores):
        return MetricScore("psnr", math.inf, infinite=True)
    y, cb, cr = (min(float(s), cap_db) for s in scores)
    return MetricScore("psnr", (6 * y + cb + cr) / 8)


@dataclass(frozen=True)
class XpsnrParams:
    block_size: int = 32
    beta: float = 0.5
    activity_floor: float | None = None
    bit_depth: int = 10

    def __post_init__(self):
        if self.block_size < 4:
            raise ValidationError("XPSNR block size must be at least 4")
        if not 0 < self.beta <= 1:
            raise ValidationError("XPSNR beta must lie in (0, 1]")
        if self.activity_floor is not None and self.activity_floor <= 0:
            raise ValidationError("XPSNR activity floor must be positive")

    @property
    def a_min(self) -> float:
        if self.activity_floor is not None:
            return float(self.activity_floor)
        return float(2 ** (self.bit_depth - 6))


@dataclass(frozen=True)
class BlockActivityMap:
    activity: np.ndarray  # (blocks_y, blocks_x)
    picture_activity: float

    @property
    def blocks_y(self) -> int:
        return self.activity.shape[0]

    @property
    def blocks_x(self) -> int:
        return self.activity.shape[1]


def _block_reduce(values: np.ndarray, n: int, fn) -> np.ndarray:
    h, w = values.shape
    by, bx = -(-h // n), -(-w // n)
    out = np.empty((by, bx), dtype=np.float64)
    for i in range(by):
        for j in range(bx):
            out[i, j] = fn(values[i * n:(i + 1) * n, j * n:(j + 1) * n])
    return out


def block_activity(ref_y: Plane, params: XpsnrParams = XpsnrParams()) -> BlockActivityMap:
    """Per-block mean absolute high-pass response of the reference, floored."""
    data = ref_y.data.astype(np.float64)
    if data.size == 0:
        raise ValidationError("empty plane")
    resp = np.abs(ndimage.correlate(data, HIGHPASS, mode="nearest"))
    act = np.maximum(_block_reduce(resp, params.block_size, np.mean), params.a_min)
    return BlockActivityMap(act, float(act.mean()))


def xpsnr(ref_y: Plane, deg_y: Plane, params: XpsnrParams = XpsnrParams()) -> MetricScore:
    """PSNR with block SSEs weighted by (picture activity / block activity) ** beta."""
    r, d = _pair(ref_y, deg_y)
    amap = block_activity(ref_y, params)
    weights = (amap.picture_activity / amap.activity) ** params.beta
    sse = _block_reduce((r - d) ** 2, params.block_size, np.sum)
    wmse = float(np.sum(weights * sse)) / r.size
    return _db(_peak(params.bit_depth), wmse, "xpsnr")


def _gaussian_window(size=11, sigma=1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, win, axis=0, mode="constant")
    out = ndimage.correlate1d(out, win, axis=1, mode="constant")
    half = len(win) // 2
    return out[half:-half, half:-half]


def _ssim_components(x: np.ndarray, y: np.ndarray, peak: float, win: np.ndarray):
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mx, my = _filter_valid(x, win), _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mx * mx
    syy = _filter_valid(y * y, win) - my * my
    sxy = _filter_valid(x * y, win) - mx * my
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _avg_pool2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    if h % 2 or w % 2:
        img = np.pad(img, ((0, h % 2), (0, w % 2)), mode="symmetric")
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim(ref_y: Plane, deg_y: Plane) -> MetricScore:
    """Five-scale MS-SSIM (11x11 Gaussian, sigma 1.5, valid filtering, 2x2 mean pooling)."""
    x, y = _pair(ref_y, deg_y)
    scales = len(MSSSIM_WEIGHTS)
    min_side = 11 * 2 ** (scales - 1)
    if min(x.shape) < min_side:
        raise ValidationError(
            f"MS-SSIM needs at least {min_side}x{min_side} samples, got {x.shape[1]}x{x.shape[0]}"
        )
    win = _gaussian_window()
    peak = _peak(ref_y.bit_depth)
    result = 1.0
    for level, weight in enumerate(MSSSIM_WEIGHTS):
        ssim, cs = _ssim_components(x, y, peak, win)
        term = ssim if level == scales - 1 else cs
        result *= max(term, 0.0) ** weight
        x, y = _avg_pool2(x), _avg_pool2(y)
    return MetricScore("msssim", min(result, 1.0))


# -- external VMAF ---------------------------------------------------------


class ToolMissingError(RqallocError):
    """The configured external executable cannot be found."""


class ToolExecutionError(RqallocError):
    """The external tool exited with a nonzero status."""


class ToolOutputError(RqallocError):
    """The external tool's output could not be parsed."""


@dataclass(frozen=True)
class VmafToolConfig:
    """How to run an external VMAF scorer.

    ``command`` is tokenized with shell rules; each token may use the
    placeholders ``{ref}``, ``{deg}``, ``{width}``, ``{height}`` and ``{out}``.
    The score is read from the JSON file written to ``{out}`` by following
    ``score_path`` (libvmaf's ``--json`` layout by default).
    """

    command: str = "vmaf -r {ref} -d {deg} -w {width} -h {height} -p 420 -b 10 --json -o {out}"
    score_path: tuple = ("pooled_metrics", "vmaf", "mean")
    tool_version: str = "unknown"
    cache_path: str | None = None

    def render(self, **values) -> list[str]:
        return [tok.format(**values) for tok in shlex.split(self.command)]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class ScoreCache:
    """JSON file of scores keyed by (ref digest, deg digest, metric, tool version)."""

    path: str | None = None
    _entries: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        if self.path and os.path.exists(self.path):
            with open(self.path) as fh:
                self._entries = json.load(fh)

    @staticmethod
    def key(ref_digest, deg_digest, metric, tool_version) -> str:
        return "|".join((ref_digest, deg_digest, metric, tool_version))

    def get(self, key):
        return self._entries.get(key)

    def put(self, key, value: float) -> None:
        with self._lock:
            self._entries[key] = value
            if self.path:
                tmp = f"{self.path}.tmp"
                with open(tmp, "w") as fh:
                    json.dump(self._entries, fh, indent=1, sort_keys=True)
                os.replace(tmp, self.path)

    def __len__(self):
        return len(self._entries)


def _parse_score(out_path: str, score_path) -> float:
    try:
        with open(out_path) as fh:
            node = json.load(fh)
        for key in score_path:
            node = node[key]
        return float(node)
    except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise ToolOutputError(f"could not read VMAF score from {out_path}: {exc}") from exc


def vmaf_external(ref_path, deg_path, tool_config: VmafToolConfig, width: int, height: int,
                  cache: ScoreCache | None = None) -> MetricScore:
    """Score a degraded file against a reference with an external VMAF executable."""
    if cache is None and tool_config.cache_path:
        cache = ScoreCache(tool_config.cache_path)
    key = None
    if cache is not None:
        key = ScoreCache.key(file_digest(ref_path), file_digest(deg_path), "vmaf",
                             tool_config.tool_version)
        hit = cache.get(key)
        if hit is not None:
            return MetricScore("vmaf", hit)

    with tempfile.TemporaryDirectory(prefix="rqalloc-vmaf-") as tmp:
        out = os.path.join(tmp, "vmaf.json")
        cmd = tool_config.render(ref=os.fspath(ref_path), deg=os.fspath(deg_path),
                                 width=width, height=height, out=out)
        if shutil.which(cmd[0]) is None:
            raise ToolMissingError(f"VMAF tool not found: {cmd[0]}")
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True)
        except OSError as exc:
            raise ToolMissingError(f"cannot execute VMAF tool {cmd[0]}: {exc}") from exc
        if proc.returncode != 0:
            raise ToolExecutionError(
                f"VMAF tool exited with status {proc.returncode}: {proc.stderr.strip()[-2000:]}"
            )
        score = _parse_score(out, tool_config.score_path)
    score = min(max(score, 0.0), 100.0)
    if cache is not None:
        cache.put(key, score)
    return MetricScore("vmaf", score)
