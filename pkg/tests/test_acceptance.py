"""Acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python tests/test_acceptance.py``.
"""
import json
import math
import os
import shutil
import sys
import tempfile
import time
from fractions import Fraction

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from conftest import CORPUS_SHAPES, synthetic_rgb8, write_png  # noqa: E402
from test_allocator import exhaustive_best_min, random_budget, random_curves  # noqa: E402
from test_colorspace import oracle_downsample  # noqa: E402
from test_metrics import stripes_block_ref, textured  # noqa: E402

from rqalloc.allocator import allocate_greedy, compute_budget  # noqa: E402
from rqalloc.analysis import RdCurve, bd_quality, bd_rate  # noqa: E402
from rqalloc.cli import main as cli_main  # noqa: E402
from rqalloc.codec import toy_decode, toy_encode  # noqa: E402
from rqalloc.codec.expgolomb import decode_values, encode_values  # noqa: E402
from rqalloc.colorspace import (  # noqa: E402
    lanczos_downsample_2x,
    lanczos_upsample_2x,
    rgb_to_ycbcr709,
    rgb_to_yuv420,
    ycbcr_to_rgb709,
    yuv420_to_rgb,
)
from rqalloc.metrics import XpsnrParams, block_activity, ms_ssim, psnr, xpsnr  # noqa: E402
from rqalloc.pixelio import Plane, RgbImage, load_png  # noqa: E402
from rqalloc.sweep import MetricConfig, sweep_many  # noqa: E402


def make_corpus(directory):
    os.makedirs(directory, exist_ok=True)
    for seed, (name, w, h) in enumerate(CORPUS_SHAPES):
        write_png(os.path.join(directory, f"{name}.png"), synthetic_rgb8(name, w, h, seed))
    return sorted(os.path.join(directory, f) for f in os.listdir(directory))


def criterion_1():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        curves = random_curves(rng)
        budget = random_budget(rng, curves)
        res = allocate_greedy(curves, budget)
        if res.min_quality != exhaustive_best_min(curves, budget) or res.total_bytes > budget:
            mismatches += 1
    elapsed = time.perf_counter() - t0
    detail = f"1000 instances, {mismatches} mismatches, {elapsed:.2f} s"
    return mismatches == 0 and elapsed < 10, detail


def criterion_2():
    n = 87_857_152
    triple = [compute_budget(b, n).budget_bytes for b in (0.075, 0.150, 0.300)]
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(10_000):
        bpp = Fraction(int(rng.integers(1, 10**6)), int(rng.integers(1, 10**6)))
        px = int(rng.integers(1, 10**9))
        one = compute_budget(bpp, px).budget_bytes
        two = compute_budget(2 * bpp, px).budget_bytes
        bad += two not in (2 * one, 2 * one + 1)
    ok = triple == [823660, 1647321, 3294643] and bad == 0
    return ok, f"budgets {triple} for {n} px; floor violations {bad}/10000"


def criterion_3():
    rng = np.random.default_rng(3)
    img = RgbImage(rng.integers(0, 1024, (1000, 1000, 3)))
    err = int(np.abs(ycbcr_to_rgb709(rgb_to_ycbcr709(img)).samples - img.samples).max())
    dims_ok = True
    for w, h in ((64, 48), (65, 48), (64, 49), (65, 49)):
        back = yuv420_to_rgb(rgb_to_yuv420(RgbImage(rng.integers(0, 1024, (h, w, 3)))))
        dims_ok &= back.samples.shape == (h, w, 3)
    return err <= 4 and dims_ok, f"max error {err} codes over 10^6 px; parity dims kept: {dims_ok}"


def criterion_4():
    exact = True
    for v in (0, 1, 511, 512, 1023):
        exact &= bool(np.all(lanczos_downsample_2x(Plane(np.full((16, 20), v))).data == v))
        exact &= bool(np.all(lanczos_upsample_2x(Plane(np.full((8, 10), v))).data == v))
    yy, xx = np.mgrid[0:16, 0:20]
    ramps = (xx * 37 % 1024, np.clip(xx * 50, 0, 1023), np.clip(yy * 60 + xx * 3, 0, 1023))
    oracle = all(np.array_equal(lanczos_downsample_2x(Plane(r)).data, oracle_downsample(r))
                 for r in ramps)
    return exact and oracle, f"constants exact: {exact}; ramps match direct convolution: {oracle}"


def criterion_5():
    rng = np.random.default_rng(6)
    ref = np.tile(np.where(np.arange(32) % 2, 400, 600)[:, None], (1, 96))
    deg = np.clip(ref + rng.integers(-9, 10, ref.shape), 0, 1023)
    d_uniform = abs(xpsnr(Plane(ref), Plane(deg)).value - psnr(Plane(ref), Plane(deg)).value)

    a_min = (15.5 + 4 / 1024) * 8 / 4
    params = XpsnrParams(activity_floor=a_min)
    ref2 = stripes_block_ref(8)
    deg2 = ref2.copy()
    deg2[5, 3] += 6
    deg2[10, 40] -= 6
    closed = 10 * math.log10(1023 ** 2 / ((math.sqrt(2.5) * 36 + math.sqrt(2.5 / 4) * 36)
                                          / ref2.size))
    act_ok = block_activity(Plane(ref2), params).activity.tolist() == [[a_min, 4 * a_min]]
    d_two = abs(xpsnr(Plane(ref2), Plane(deg2), params).value - closed)
    ok = d_uniform <= 1e-9 and d_two <= 1e-9 and act_ok
    return ok, f"|XPSNR-PSNR| {d_uniform:.1e} dB; two-block deviation {d_two:.1e} dB"


def criterion_6():
    ref = textured(7)
    deg = np.clip(ref + np.random.default_rng(8).normal(0, 30, ref.shape), 0, 1023)
    deg = deg.round().astype(int)
    same = ms_ssim(Plane(ref), Plane(ref)).value
    mine = ms_ssim(Plane(ref), Plane(deg)).value
    try:
        import tensorflow as tf
    except ImportError:
        return False, "reference implementation (tensorflow) unavailable"
    theirs = float(tf.image.ssim_multiscale(
        tf.constant(ref[None, :, :, None].astype(np.float64)),
        tf.constant(deg[None, :, :, None].astype(np.float64)), max_val=1023.0).numpy()[0])
    return same == 1.0 and abs(mine - theirs) <= 1e-4, (
        f"identical {same!r}; 256x256 pair {mine:.6f} vs reference {theirs:.6f}")


def criterion_7():
    rates = (0.05, 0.1, 0.2, 0.4, 0.8)
    quals = (40.0, 55.0, 68.0, 79.0, 87.0)
    ref = RdCurve("ref", rates, quals)
    r = bd_rate(ref, RdCurve("t", tuple(0.9 * x for x in rates), quals)).value
    q = bd_quality(ref, RdCurve("t", rates, tuple(x + 5 for x in quals))).value
    ok = abs(r + 10) <= 1e-6 and abs(q - 5) <= 1e-6
    return ok, f"BD-rate {r:.9f} %, BD-quality {q:.9f}"


def criterion_8():
    rng = np.random.default_rng(1)
    values = rng.integers(-(1 << 31) + 1, 1 << 31, 1_000_000).tolist()
    lossless = decode_values(encode_values(values), len(values)) == values

    tmp = tempfile.mkdtemp(prefix="acc8-")
    try:
        paths = make_corpus(os.path.join(tmp, "corpus"))
        monotone = True
        for p in paths:
            pic = rgb_to_yuv420(load_png(p))
            sizes, mses = [], []
            for qp in range(27, 48):
                data = toy_encode(pic, qp)
                rec = toy_decode(data)
                sizes.append(len(data))
                sq = sum(float(((a.data - b.data).astype(np.float64) ** 2).sum())
                         for a, b in zip(pic.planes, rec.planes))
                mses.append(sq / sum(a.data.size for a in pic.planes))
            monotone &= all(a > b for a, b in zip(sizes, sizes[1:]))
            monotone &= all(a <= b for a, b in zip(mses, mses[1:]))

        t0 = time.perf_counter()
        curves = sweep_many(paths, "toy", range(27, 48), MetricConfig("psnr"),
                            os.path.join(tmp, "cache"))
        pixels = sum(c.pixels for c in curves)
        cheapest = sum(c.points[0].bytes for c in curves) * 8 / pixels
        res = allocate_greedy(curves, compute_budget(round(2 * cheapest, 3), pixels).budget_bytes)
        elapsed = time.perf_counter() - t0
        raw = sum(len(c.raw_points) for c in curves)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    ok = (lossless and monotone and raw == 105 and elapsed < 60
          and res.total_bytes <= res.budget_bytes)
    return ok, (f"10^6 values lossless: {lossless}; rate/MSE monotone: {monotone}; "
                f"{raw} encodes + allocation in {elapsed:.1f} s")


def criterion_9():
    tmp = tempfile.mkdtemp(prefix="acc9-")
    corpus = os.path.join(tmp, "corpus")
    make_corpus(corpus)
    cache, out = os.path.join(tmp, "cache"), os.path.join(tmp, "out")
    argv = ["allocate", "--corpus", corpus, "--cache-dir", cache, "--output-dir", out,
            "--metric", "psnr", "--qp-range", "27..47",
            "--bpp", "0.75", "--bpp", "1.5", "--bpp", "3.0"]

    def snapshot():
        files = {}
        for root, _, names in os.walk(out):
            for n in names:
                path = os.path.join(root, n)
                with open(path, "rb") as fh:
                    files[os.path.relpath(path, out)] = fh.read()
        return files

    try:
        codes, runs = [], []
        for _ in range(2):
            shutil.rmtree(cache, ignore_errors=True)
            shutil.rmtree(out, ignore_errors=True)
            codes.append(cli_main(argv))
            runs.append(snapshot())
        manifests = sorted(k for k in runs[0] if k.startswith("manifest_"))
        docs = [json.loads(runs[0][m]) for m in manifests]
        budgets_ok = all(d["total_bytes"] <= d["budget_bytes"] for d in docs)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    identical = runs[0] == runs[1]
    ok = codes == [0, 0] and identical and len(manifests) == 3 and budgets_ok
    return ok, f"{len(runs[0])} artifacts per run, byte-identical: {identical}"


CRITERIA = [
    (1, "allocator optimality", criterion_1),
    (2, "budget arithmetic", criterion_2),
    (3, "color round trip", criterion_3),
    (4, "resampler DC exactness", criterion_4),
    (5, "XPSNR anchors", criterion_5),
    (6, "MS-SSIM", criterion_6),
    (7, "BD-delta analytics", criterion_7),
    (8, "toy codec", criterion_8),
    (9, "end-to-end determinism", criterion_9),
]


def report_line(number, title, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}"


@pytest.mark.parametrize("number, title, check", CRITERIA,
                         ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(number, title, check, capsys):
    ok, detail = check()
    with capsys.disabled():
        print("\n" + report_line(number, title, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for number, title, check in CRITERIA:
        ok, detail = check()
        failed += not ok
        print(report_line(number, title, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
