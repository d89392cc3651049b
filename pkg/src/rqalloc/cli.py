"""Command-line front end.

Exit codes: 0 success, 1 runtime/data error, 2 configuration error,
3 external tool error, 4 infeasible budget.
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace

from . import __version__
from .allocator import (
    AllocationResult,
    InfeasibleBudgetError,
    RateQualityPoint,
    allocate_greedy,
    compute_budget,
)
from .analysis import NoOverlapError, bd_quality, bd_rate, load_rd_points, make_report
from .codec import ConfigError, ToolError, make_codec
from .colorspace import rgb_to_yuv420, yuv420_to_rgb
from .metrics import (
    ToolExecutionError,
    ToolMissingError,
    ToolOutputError,
    VmafToolConfig,
    XpsnrParams,
    combined_psnr,
    file_digest,
    ms_ssim,
    psnr,
    vmaf_external,
    xpsnr,
)
from .pixelio import crop, load_png, read_yuv_raw, save_png, write_yuv_raw
from .sweep import (
    CurveCache,
    MetricConfig,
    SweepError,
    SweepStats,
    image_id_for,
    sweep_many,
)
from .validation import RqallocError

log = logging.getLogger("rqalloc")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_TOOL, EXIT_INFEASIBLE = 0, 1, 2, 3, 4
TOOL_ERRORS = (ToolError, ToolMissingError, ToolExecutionError, ToolOutputError)
MANIFEST_SCHEMA = 1


@dataclass
class PipelineConfig:
    corpus: str = "corpus"
    adapter: str = "toy"
    qp_min: int = 27
    qp_max: int = 47
    bpp_targets: list = field(default_factory=lambda: [0.075, 0.150, 0.300])
    metric: str = "vmaf"
    policy: str = "skip"
    cache_dir: str = "cache"
    output_dir: str = "out"
    workers: int = 1
    vmaf: dict | None = None

    def validate(self) -> "PipelineConfig":
        if self.qp_max < self.qp_min:
            raise ConfigError(f"empty QP range {self.qp_min}..{self.qp_max}")
        if not self.bpp_targets or any(b <= 0 for b in self.bpp_targets):
            raise ConfigError(f"bpp targets must be positive: {self.bpp_targets}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.policy not in ("skip", "halt"):
            raise ConfigError(f"unknown policy {self.policy!r}")
        MetricConfig(self.metric)  # raises on unknown metric
        return self

    def vmaf_config(self) -> VmafToolConfig | None:
        if not self.vmaf:
            return None
        d = dict(self.vmaf)
        if "score_path" in d:
            d["score_path"] = tuple(d["score_path"])
        return VmafToolConfig(**d)

    def images(self) -> list[str]:
        paths = sorted(glob.glob(os.path.join(self.corpus, "*.png")))
        if not paths:
            raise ConfigError(f"no PNG images in corpus {self.corpus!r}")
        return paths


def load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    known = {f.name for f in fields(PipelineConfig)}
    if unknown := set(doc) - known:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    cfg = PipelineConfig(**doc)
    base = os.path.dirname(os.path.abspath(path))
    for key in ("corpus", "cache_dir", "output_dir"):
        value = getattr(cfg, key)
        if not os.path.isabs(value):
            setattr(cfg, key, os.path.normpath(os.path.join(base, value)))
    if cfg.adapter != "toy" and cfg.adapter.endswith(".json") and not os.path.isabs(cfg.adapter):
        cfg.adapter = os.path.normpath(os.path.join(base, cfg.adapter))
    return cfg


def _parse_qp_range(text: str) -> tuple[int, int]:
    try:
        lo, _, hi = text.partition("..")
        return int(lo), int(hi or lo)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"QP range must look like 27..47, got {text!r}") from exc


def effective_config(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    overrides = {}
    for name in ("corpus", "adapter", "metric", "policy", "cache_dir", "output_dir", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "qp_range", None):
        overrides["qp_min"], overrides["qp_max"] = args.qp_range
    if getattr(args, "bpp", None):
        overrides["bpp_targets"] = list(args.bpp)
    return replace(cfg, **overrides).validate()


def _curves(cfg: PipelineConfig, stats: SweepStats | None = None):
    metric_config = MetricConfig(cfg.metric, vmaf=cfg.vmaf_config())
    return sweep_many(cfg.images(), make_codec(cfg.adapter), range(cfg.qp_min, cfg.qp_max + 1),
                      metric_config, cfg.cache_dir, cfg.workers, stats)


# -- subcommands -------------------------------------------------------------


def cmd_convert(args) -> int:
    if not os.path.exists(args.input):
        print(f"error: input file not found: {args.input}", file=sys.stderr)
        return EXIT_ERROR
    if args.direction == "forward":
        rgb = load_png(args.input)
        pic = rgb_to_yuv420(rgb)
        write_yuv_raw(pic, args.output)
        meta = {
            "width": pic.width, "height": pic.height,
            "orig_width": pic.orig_width, "orig_height": pic.orig_height,
            "bit_depth": 10, "chroma_format": "420", "layout": "planar-u16le",
            "padded": {"width": pic.width != pic.orig_width,
                       "height": pic.height != pic.orig_height},
        }
        with open(args.output + ".json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"{args.input} -> {args.output} ({pic.width}x{pic.height}, "
              f"orig {pic.orig_width}x{pic.orig_height})")
    else:
        meta = _sidecar(args.input, args)
        pic = read_yuv_raw(args.input, meta["width"], meta["height"],
                           meta["orig_width"], meta["orig_height"])
        save_png(yuv420_to_rgb(pic), args.output, args.png_depth)
        print(f"{args.input} -> {args.output} ({pic.orig_width}x{pic.orig_height})")
    return EXIT_OK


def _sidecar(path, args) -> dict:
    meta = {}
    if os.path.exists(path + ".json"):
        with open(path + ".json") as fh:
            meta = json.load(fh)
    for key in ("width", "height", "orig_width", "orig_height"):
        value = getattr(args, key, None)
        if value is not None:
            meta[key] = value
    if "width" not in meta or "height" not in meta:
        raise ConfigError(f"{path}: dimensions unknown (no sidecar; pass --width/--height)")
    meta.setdefault("orig_width", meta["width"])
    meta.setdefault("orig_height", meta["height"])
    return meta


def cmd_sweep(args) -> int:
    cfg = effective_config(args)
    stats = SweepStats()
    curves = _curves(cfg, stats)
    for c in curves:
        print(f"{c.image_id}: {len(c.raw_points)} points, {len(c.points)} on frontier, "
              f"{stats.per_image[c.image_id]} encoded")
    print(f"{stats.encodes} encodes executed ({stats.cached} cached)")
    return EXIT_OK


def _manifest(cfg, bpp, total_pixels, res: AllocationResult, curves) -> dict:
    by_id = {c.image_id: c for c in curves}
    images = []
    for image_id in sorted(res.selection):
        pt = res.selection[image_id]
        images.append({
            "image_id": image_id, "qp": pt.qp, "bytes": pt.bytes, "quality": pt.quality,
            "pixels": by_id[image_id].pixels,
            "bitstream": f"submission/{bpp:g}/{image_id}.bin",
            "scores": dict(sorted(pt.aux.items())),
        })
    return {
        "schema": MANIFEST_SCHEMA, "bpp": bpp, "metric": cfg.metric, "policy": cfg.policy,
        "total_pixels": total_pixels, "budget_bytes": res.budget_bytes,
        "total_bytes": res.total_bytes, "min_quality": res.min_quality,
        "mean_quality": res.mean_quality, "upgrades": res.upgrades,
        "images": images, "config": asdict(cfg),
    }


def allocation_from_manifest(doc: dict) -> AllocationResult:
    sel = {
        im["image_id"]: RateQualityPoint(im["qp"], im["bytes"], im["quality"], im["scores"])
        for im in doc["images"]
    }
    return AllocationResult(sel, doc["total_bytes"], doc["min_quality"], doc["mean_quality"],
                            doc["budget_bytes"], doc.get("upgrades", 0))


def _write_report(manifests: list[dict], out_dir: str, metric: str) -> None:
    allocations = {m["bpp"]: allocation_from_manifest(m) for m in manifests}
    pixels = {im["image_id"]: im["pixels"] for m in manifests for im in m["images"]}
    report = make_report(allocations, pixels, metric)
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(report.to_text())
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(report.to_json())
    with open(os.path.join(out_dir, "plot.csv"), "w") as fh:
        fh.write(report.to_plot_csv())
    print(report.to_text(), end="")


def cmd_allocate(args) -> int:
    cfg = effective_config(args)
    curves = _curves(cfg)
    total_pixels = sum(c.pixels for c in curves)
    os.makedirs(cfg.output_dir, exist_ok=True)
    manifests, infeasible = [], []
    for bpp in cfg.bpp_targets:
        budget = compute_budget(bpp, total_pixels)
        try:
            res = allocate_greedy(curves, budget.budget_bytes, cfg.policy)
        except InfeasibleBudgetError as exc:
            # keep going so the feasible targets still get manifests
            print(f"error: target {bpp:g} bpp: {exc}", file=sys.stderr)
            infeasible.append(bpp)
            continue
        doc = _manifest(cfg, bpp, total_pixels, res, curves)
        _package(cfg, doc, curves)
        with open(os.path.join(cfg.output_dir, f"manifest_{bpp:g}.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"{bpp:g} bpp: {res.total_bytes}/{budget.budget_bytes} bytes, "
              f"min {cfg.metric} {res.min_quality:.3f}, mean {res.mean_quality:.3f}")
        manifests.append(doc)
    if manifests:
        _write_report(manifests, cfg.output_dir, cfg.metric)
    return EXIT_INFEASIBLE if infeasible else EXIT_OK


def _package(cfg, doc, curves) -> None:
    """Copy each selected bitstream to ``<output_dir>/submission/<bpp>/<image>.bin``."""
    cache = CurveCache(cfg.cache_dir)
    codec_id = make_codec(cfg.adapter).id
    digests = {image_id_for(p): file_digest(p) for p in cfg.images()}
    for im in doc["images"]:
        rec = cache.get(CurveCache.key(digests[im["image_id"]], codec_id, im["qp"]))
        dst = os.path.join(cfg.output_dir, im["bitstream"])
        os.makedirs(os.path.dirname(dst), exist_ok=True)
        shutil.copyfile(cache.bitstream_path(rec), dst)


def cmd_report(args) -> int:
    manifests = []
    for path in args.manifests:
        with open(path) as fh:
            manifests.append(json.load(fh))
    metric = manifests[0]["metric"]
    out_dir = args.output_dir or os.path.dirname(os.path.abspath(args.manifests[0]))
    os.makedirs(out_dir, exist_ok=True)
    _write_report(manifests, out_dir, metric)
    return EXIT_OK


def cmd_bdrate(args) -> int:
    ref, test = load_rd_points(args.reference), load_rd_points(args.tested)
    try:
        r = bd_rate(ref, test)
        q = bd_quality(ref, test)
    except NoOverlapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"BD-rate: {r.value:+.4f} %")
    print(f"BD-quality: {q.value:+.4f}")
    return EXIT_OK


def _load_any(path, args):
    if path.lower().endswith(".png"):
        return rgb_to_yuv420(load_png(path))
    meta = _sidecar(path, args)
    return read_yuv_raw(path, meta["width"], meta["height"],
                        meta["orig_width"], meta["orig_height"])


def cmd_metrics(args) -> int:
    for p in (args.reference, args.degraded):
        if not os.path.exists(p):
            print(f"error: input file not found: {p}", file=sys.stderr)
            return EXIT_ERROR
    ref, deg = _load_any(args.reference, args), _load_any(args.degraded, args)
    ow, oh = ref.orig_width, ref.orig_height
    ry, dy = crop(ref.y, ow, oh), crop(deg.y, ow, oh)
    wanted = args.metric
    out = {}
    if wanted in ("all", "psnr"):
        out["psnr"] = float(combined_psnr((ry, ref.cb, ref.cr), (dy, deg.cb, deg.cr)))
        out["psnr_y"] = float(psnr(ry, dy))
    if wanted in ("all", "xpsnr"):
        out["xpsnr"] = float(xpsnr(ry, dy, XpsnrParams(block_size=args.block_size)))
    if wanted in ("all", "msssim"):
        try:
            out["msssim"] = ms_ssim(ry, dy).value
        except RqallocError as exc:
            if wanted == "msssim":
                raise
            out["msssim"] = None
            log.warning("MS-SSIM skipped: %s", exc)
    if wanted == "vmaf":
        cfg = load_config(args.config) if args.config else PipelineConfig()
        with tempfile.TemporaryDirectory() as tmp:
            rp, dp = os.path.join(tmp, "ref.yuv"), os.path.join(tmp, "deg.yuv")
            write_yuv_raw(ref, rp)
            write_yuv_raw(deg, dp)
            out["vmaf"] = vmaf_external(rp, dp, cfg.vmaf_config() or VmafToolConfig(),
                                        ref.width, ref.height).value
    # strict JSON has no infinity; lossless scores print as "inf"
    out = {k: "inf" if isinstance(v, float) and math.isinf(v) else v for k, v in out.items()}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _pipeline_args(p, with_bpp=False):
    p.add_argument("--config", help="JSON pipeline config; flags override its values")
    p.add_argument("--corpus", help="directory of PNG images")
    p.add_argument("--adapter", help="'toy', a shipped preset name (ecm_intra) or adapter JSON")
    p.add_argument("--qp-range", type=_parse_qp_range, help="inclusive range, e.g. 27..47")
    p.add_argument("--metric", choices=["vmaf", "psnr", "psnr_rgb", "xpsnr", "msssim"])
    p.add_argument("--policy", choices=["skip", "halt"])
    p.add_argument("--cache-dir")
    p.add_argument("--workers", type=int)
    if with_bpp:
        p.add_argument("--bpp", type=float, action="append", help="target bpp (repeatable)")
        p.add_argument("--output-dir")


def _dims_args(p):
    for name in ("width", "height", "orig-width", "orig-height"):
        p.add_argument(f"--{name}", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rqalloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="PNG <-> raw 10-bit YUV 4:2:0")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--direction", choices=["forward", "inverse"], default="forward")
    p.add_argument("--png-depth", type=int, choices=[8, 16], default=16)
    _dims_args(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("sweep", help="encode every corpus image over the QP range")
    _pipeline_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("allocate", help="allocate the byte budget; write manifests and report")
    _pipeline_args(p, with_bpp=True)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("bdrate", help="Bjontegaard deltas between two RD point files")
    p.add_argument("reference")
    p.add_argument("tested")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("metrics", help="score a degraded image against a reference")
    p.add_argument("reference")
    p.add_argument("degraded")
    p.add_argument("--metric", choices=["all", "psnr", "xpsnr", "msssim", "vmaf"], default="all")
    p.add_argument("--block-size", type=int, default=32)
    p.add_argument("--config")
    _dims_args(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("report", help="rebuild the report from allocation manifests")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOOL if isinstance(exc.cause, TOOL_ERRORS) else EXIT_ERROR
    except TOOL_ERRORS as exc:
        print(f"tool error: {exc}", file=sys.stderr)
        return EXIT_TOOL
    except (RqallocError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
