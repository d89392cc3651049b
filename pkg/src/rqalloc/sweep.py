"""QP sweep harness: convert, encode, decode, score and cache one image at a time.

Curve cache layout (``<cache_dir>/curves.json``)::

    {"schema": 1,
     "records": {"<image sha256>|<codec id>|<qp>": {
         "image_id": str, "image_digest": str, "codec": str, "qp": int,
         "bytes": int, "bitstream": "bitstreams/<file>",  # relative to cache_dir
         "width": int, "height": int,                    # padded luma size
         "orig_width": int, "orig_height": int,
         "scores": {"psnr": float, "psnr_rgb": float, "xpsnr": float,
                    "msssim": float | null, "vmaf": float (when requested)}}}}

Records are written sorted by key so an identical set of encodes always
yields an identical file.
"""
from __future__ import annotations

import json
import logging
import math
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .allocator import RateQualityPoint, build_curve
from .codec import make_codec
from .colorspace import rgb_to_yuv420, yuv420_to_rgb
from .metrics import (
    MSSSIM_WEIGHTS,
    ScoreCache,
    VmafToolConfig,
    XpsnrParams,
    combined_psnr,
    file_digest,
    ms_ssim,
    vmaf_external,
    xpsnr,
)
from .pixelio import crop, load_png, write_yuv_raw
from .validation import RqallocError, ValidationError, check_is_fitted

log = logging.getLogger(__name__)

METRICS = ("vmaf", "psnr", "psnr_rgb", "xpsnr", "msssim")
# quality assigned to lossless dB scores so curve points stay finite
LOSSLESS_DB = 100.0
CACHE_SCHEMA = 1


class SweepError(RqallocError):
    def __init__(self, image_id, qp, cause: Exception):
        self.image_id, self.qp, self.cause = image_id, qp, cause
        super().__init__(f"{image_id} @ qp {qp}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class MetricConfig:
    quality: str = "vmaf"
    xpsnr: XpsnrParams = XpsnrParams()
    vmaf: VmafToolConfig | None = None

    def __post_init__(self):
        if self.quality not in METRICS:
            raise ValidationError(f"unknown quality metric {self.quality!r}; choose from {METRICS}")

    @property
    def wants_vmaf(self) -> bool:
        return self.quality == "vmaf" or self.vmaf is not None


class CurveCache:
    """On-disk store of sweep records plus their bitstreams."""

    def __init__(self, cache_dir):
        self.dir = os.fspath(cache_dir)
        self.path = os.path.join(self.dir, "curves.json")
        os.makedirs(os.path.join(self.dir, "bitstreams"), exist_ok=True)
        self.records: dict[str, dict] = {}
        if os.path.exists(self.path):
            with open(self.path) as fh:
                doc = json.load(fh)
            if doc.get("schema") != CACHE_SCHEMA:
                raise ValidationError(f"{self.path}: unsupported cache schema {doc.get('schema')}")
            self.records = doc["records"]

    @staticmethod
    def key(digest: str, codec_id: str, qp: int) -> str:
        return f"{digest}|{codec_id}|{qp}"

    def get(self, key):
        return self.records.get(key)

    def put_many(self, records: dict) -> None:
        self.records.update(records)
        self.flush()

    def flush(self) -> None:
        tmp = self.path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump({"schema": CACHE_SCHEMA, "records": dict(sorted(self.records.items()))},
                      fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, self.path)

    def bitstream_path(self, record) -> str:
        return os.path.join(self.dir, record["bitstream"])


def _finite(score) -> float:
    v = float(score)
    return LOSSLESS_DB if math.isinf(v) else v


def score_pair(src_pic, src_rgb, dec_pic, metric_config: MetricConfig, workdir,
               vmaf_cache=None) -> dict:
    """All metrics of one decode against its source; dB scores capped when lossless."""
    ow, oh = src_pic.orig_width, src_pic.orig_height
    ref_y, deg_y = crop(src_pic.y, ow, oh), crop(dec_pic.y, ow, oh)
    scores = {
        "psnr": _finite(combined_psnr((ref_y, src_pic.cb, src_pic.cr),
                                      (deg_y, dec_pic.cb, dec_pic.cr))),
        "xpsnr": _finite(xpsnr(ref_y, deg_y, metric_config.xpsnr)),
    }
    rgb = yuv420_to_rgb(dec_pic).samples.astype(np.float64)
    mse = float(np.mean((rgb - src_rgb.samples) ** 2))
    scores["psnr_rgb"] = LOSSLESS_DB if mse == 0 else 10 * math.log10(1023.0 ** 2 / mse)
    min_side = 11 * 2 ** (len(MSSSIM_WEIGHTS) - 1)
    scores["msssim"] = ms_ssim(ref_y, deg_y).value if min(ow, oh) >= min_side else None
    if metric_config.wants_vmaf:
        ref_path = os.path.join(workdir, "ref.yuv")
        deg_path = os.path.join(workdir, "deg.yuv")
        write_yuv_raw(src_pic, ref_path)
        write_yuv_raw(dec_pic, deg_path)
        scores["vmaf"] = vmaf_external(ref_path, deg_path, metric_config.vmaf or VmafToolConfig(),
                                       src_pic.width, src_pic.height, vmaf_cache).value
    return scores


def _run_qp(job):
    """Encode + decode + score one (image, qp); runs in a worker process."""
    (codec, image_id, digest, src_pic, src_rgb, qp, cache_dir, metric_config) = job
    try:
        work = tempfile.mkdtemp(prefix="sweep-", dir=cache_dir)
        try:
            enc = codec.encode(src_pic, qp, work)
            name = f"{digest[:16]}-{codec.id}-qp{qp}.bin"
            rel = os.path.join("bitstreams", name)
            os.replace(enc.bitstream_path, os.path.join(cache_dir, rel))
            dec = codec.decode(os.path.join(cache_dir, rel), src_pic)
            # the curve cache already memoizes per (image, qp); keep VMAF calls off disk
            scores = score_pair(src_pic, src_rgb, dec, metric_config, work, ScoreCache(None))
        finally:
            shutil.rmtree(work, ignore_errors=True)
    except Exception as exc:  # annotate with the failing job
        raise SweepError(image_id, qp, exc) from exc
    return {
        "image_id": image_id, "image_digest": digest, "codec": codec.id, "qp": qp,
        "bytes": enc.bitstream_bytes, "bitstream": rel,
        "width": src_pic.width, "height": src_pic.height,
        "orig_width": src_pic.orig_width, "orig_height": src_pic.orig_height,
        "scores": scores,
    }


@dataclass
class SweepStats:
    encodes: int = 0
    cached: int = 0
    per_image: dict = field(default_factory=dict)


def curve_from_records(image_id: str, records, quality: str):
    records = list(records)
    if not records:
        raise ValidationError(f"no sweep records for {image_id!r}")
    pixels = records[0]["orig_width"] * records[0]["orig_height"]
    points = []
    for r in records:
        q = r["scores"].get(quality)
        if q is None:
            raise ValidationError(f"{image_id} @ qp {r['qp']}: no {quality!r} score in cache")
        points.append(RateQualityPoint(r["qp"], r["bytes"], float(q), dict(r["scores"])))
    return build_curve(image_id, pixels, points)


def _usable(cache: CurveCache, key: str, metric_config: MetricConfig) -> bool:
    rec = cache.get(key)
    if rec is None or not os.path.exists(cache.bitstream_path(rec)):
        return False
    return not (metric_config.wants_vmaf and rec["scores"].get("vmaf") is None)


def image_id_for(path) -> str:
    return os.path.splitext(os.path.basename(os.fspath(path)))[0]


def sweep_many(image_paths, codec, qp_range, metric_config: MetricConfig, cache_dir,
               workers: int = 1, stats: SweepStats | None = None):
    """Sweep every image over ``qp_range``; returns curves sorted by image id."""
    codec = make_codec(codec)
    qps = sorted(set(int(q) for q in qp_range))
    if not qps:
        raise ValidationError("empty QP range")
    cache = CurveCache(cache_dir)
    stats = stats if stats is not None else SweepStats()
    entries = sorted((image_id_for(p), os.fspath(p)) for p in image_paths)
    ids = [i for i, _ in entries]
    if len(set(ids)) != len(ids):
        raise ValidationError("image file names must be unique (ids come from the stem)")
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    curves = []
    try:
        for image_id, path in entries:
            digest = file_digest(path)
            keys = {qp: CurveCache.key(digest, codec.id, qp) for qp in qps}
            missing = [qp for qp in qps if not _usable(cache, keys[qp], metric_config)]
            if missing:
                rgb = load_png(path)
                pic = rgb_to_yuv420(rgb)
                jobs = [(codec, image_id, digest, pic, rgb, qp, cache.dir, metric_config)
                        for qp in missing]
                done = list(pool.map(_run_qp, jobs)) if pool else [_run_qp(j) for j in jobs]
                cache.put_many({keys[r["qp"]]: r for r in done})
            records = []
            for qp in qps:
                rec = dict(cache.get(keys[qp]))
                rec["image_id"] = image_id
                records.append(rec)
            stats.encodes += len(missing)
            stats.cached += len(qps) - len(missing)
            stats.per_image[image_id] = len(missing)
            curve = curve_from_records(image_id, records, metric_config.quality)
            log.info("%s: %d points (%d encoded, %d pruned)", image_id, len(records),
                     len(missing), len(records) - len(curve.points))
            curves.append(curve)
    finally:
        if pool:
            pool.shutdown()
    return curves


def sweep(image_path, codec, qp_range=range(27, 48), metric_config=MetricConfig(),
          cache_dir=None, stats: SweepStats | None = None):
    """Rate-quality curve of one image over ``qp_range``."""
    if cache_dir is None:
        cache_dir = tempfile.mkdtemp(prefix="rqalloc-cache-")
    return sweep_many([image_path], codec, qp_range, metric_config, cache_dir, 1, stats)[0]


class QpSweep(BaseEstimator):
    """Sweep estimator: ``fit(paths)`` builds one rate-quality curve per image.

    Parameters
    ----------
    codec : str or codec object, default="toy"
        ``"toy"``, an adapter preset name/JSON path, or an EncoderAdapter.
    qp_min, qp_max : int
        Inclusive QP range (27..47 by default).
    metric : str, default="vmaf"
        Score used as curve quality; the others are kept as auxiliary data.
    cache_dir : str, optional
        Where records and bitstreams live; a temp dir when omitted.
    n_jobs : int, default=1
        Worker processes per image.
    vmaf_config : VmafToolConfig, optional
    """

    def __init__(self, codec="toy", qp_min=27, qp_max=47, metric="vmaf", cache_dir=None,
                 n_jobs=1, vmaf_config=None):
        self.codec = codec
        self.qp_min = qp_min
        self.qp_max = qp_max
        self.metric = metric
        self.cache_dir = cache_dir
        self.n_jobs = n_jobs
        self.vmaf_config = vmaf_config

    def fit(self, X, y=None):
        if self.qp_max < self.qp_min:
            raise ValidationError(f"empty QP range {self.qp_min}..{self.qp_max}")
        cache_dir = self.cache_dir or tempfile.mkdtemp(prefix="rqalloc-cache-")
        self.stats_ = SweepStats()
        self.curves_ = sweep_many(X, self.codec, range(self.qp_min, self.qp_max + 1),
                                  MetricConfig(self.metric, vmaf=self.vmaf_config), cache_dir,
                                  self.n_jobs, self.stats_)
        self.cache_dir_ = cache_dir
        self.n_encodes_ = self.stats_.encodes
        return self

    def transform(self, X=None):
        check_is_fitted(self, "curves_")
        return list(self.curves_)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform()
