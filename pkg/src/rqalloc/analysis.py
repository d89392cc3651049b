"""Bjontegaard deltas and allocation reports.

Report JSON schema::

    {"metric": str,
     "rows": [{"bpp": float, "budget_bytes": int, "data_size": int,
               "average_quality": float, "worst_quality": float,
               "psnr": float, "msssim": float, "images": int}, ...]}

Plot-data CSV columns: ``target_bpp,image_id,qp,bytes,bpp,quality``; one
line per selected image, followed by one ``image_id=*`` summary line per
target holding the set-wide bpp and mean quality.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .allocator import AllocationResult
from .validation import RqallocError, ValidationError


class NoOverlapError(RqallocError):
    """The two curves share no interval to integrate over."""


class MissingMetricError(RqallocError):
    pass


@dataclass(frozen=True)
class RdCurve:
    label: str
    rates: tuple
    qualities: tuple

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=np.float64)
        q = np.asarray(self.qualities, dtype=np.float64)
        if r.shape != q.shape or r.ndim != 1:
            raise ValidationError(f"{self.label}: rates and qualities must be equal-length 1-D")
        if len(r) < 4:
            raise ValidationError(
                f"{self.label}: need at least 4 points for a cubic fit, got {len(r)}")
        if np.any(r <= 0) or not np.all(np.isfinite(q)):
            raise ValidationError(f"{self.label}: rates must be positive and qualities finite")
        if np.any(np.diff(r) <= 0):
            raise ValidationError(f"{self.label}: rates must be strictly increasing")
        object.__setattr__(self, "rates", tuple(r.tolist()))
        object.__setattr__(self, "qualities", tuple(q.tolist()))

    @classmethod
    def from_points(cls, label, points) -> "RdCurve":
        pts = sorted((float(r), float(q)) for r, q in points)
        return cls(label, tuple(p[0] for p in pts), tuple(p[1] for p in pts))


@dataclass(frozen=True)
class BdResult:
    value: float
    kind: str  # "rate" (percent) or "quality" (score units)
    overlap: tuple


def _mean_gap(x_ref, y_ref, x_test, y_test, what: str):
    lo = max(min(x_ref), min(x_test))
    hi = min(max(x_ref), max(x_test))
    if not lo < hi:
        raise NoOverlapError(
            f"{what} ranges do not overlap: reference [{min(x_ref):g}, {max(x_ref):g}], "
            f"tested [{min(x_test):g}, {max(x_test):g}]"
        )
    p_ref = np.polyint(np.polyfit(x_ref, y_ref, 3))
    p_test = np.polyint(np.polyfit(x_test, y_test, 3))
    area_ref = np.polyval(p_ref, hi) - np.polyval(p_ref, lo)
    area_test = np.polyval(p_test, hi) - np.polyval(p_test, lo)
    return (area_test - area_ref) / (hi - lo), (lo, hi)


def bd_rate(reference: RdCurve, tested: RdCurve) -> BdResult:
    """Average rate difference in percent at equal quality (negative: tested is cheaper)."""
    gap, overlap = _mean_gap(reference.qualities, np.log10(reference.rates),
                             tested.qualities, np.log10(tested.rates), "quality")
    return BdResult((10.0 ** gap - 1.0) * 100.0, "rate", overlap)


def bd_quality(reference: RdCurve, tested: RdCurve) -> BdResult:
    """Average quality difference at equal log-rate."""
    gap, overlap = _mean_gap(np.log10(reference.rates), reference.qualities,
                             np.log10(tested.rates), tested.qualities, "log-rate")
    return BdResult(float(gap), "quality", overlap)


def load_rd_points(path) -> RdCurve:
    """Read ``rate,quality`` pairs from a CSV (header optional) or JSON list."""
    with open(path) as fh:
        text = fh.read()
    label = str(path)
    if text.lstrip().startswith(("[", "{")):
        doc = json.loads(text)
        if isinstance(doc, dict):
            label = doc.get("label", label)
            doc = doc["points"]
        pts = [(p["rate"], p["quality"]) if isinstance(p, dict) else tuple(p) for p in doc]
    else:
        pts = []
        for row in csv.reader(io.StringIO(text)):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                pts.append((float(row[0]), float(row[1])))
            except ValueError:
                continue  # header
    return RdCurve.from_points(label, pts)


@dataclass(frozen=True)
class ReportRow:
    bpp: float
    budget_bytes: int
    data_size: int
    average_quality: float
    worst_quality: float
    psnr: float
    msssim: float
    images: int


@dataclass
class Report:
    metric: str
    rows: list
    plot_rows: list

    def to_text(self) -> str:
        q = self.metric.upper() if self.metric != "msssim" else "MS-SSIM"
        head = ("bpp", "Data size", f"average {q}", f"worst {q}", "PSNR", "MS-SSIM")
        lines = ["{:>6}  {:>10}  {:>14}  {:>12}  {:>8}  {:>8}".format(*head)]
        for r in self.rows:
            lines.append(
                f"{r.bpp:>6.3f}  {r.data_size:>10d}  {r.average_quality:>14.3f}  "
                f"{r.worst_quality:>12.3f}  {r.psnr:>8.3f}  {r.msssim:>8.3f}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {"metric": self.metric, "rows": [asdict(r) for r in self.rows]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_plot_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target_bpp", "image_id", "qp", "bytes", "bpp", "quality"])
        for row in self.plot_rows:
            w.writerow(row)
        return buf.getvalue()


def _metric(point, name, image_id, tables):
    if tables is not None:
        value = tables.get(image_id, {}).get(point.qp, {}).get(name)
    else:
        value = point.aux.get(name)
    if value is None or (isinstance(value, float) and math.isnan(value)):
        raise MissingMetricError(f"no {name} score for {image_id} at qp {point.qp}")
    return float(value)


def make_report(allocations: Mapping[float, AllocationResult], pixels: Mapping[str, int],
                metric: str = "vmaf", metric_tables=None) -> Report:
    """One row per bpp target: size, mean/worst quality, mean PSNR and MS-SSIM.

    ``pixels`` maps image id to its original pixel count (for per-image bpp).
    ``metric_tables`` optionally maps image id -> qp -> {metric: value}; by
    default the auxiliary scores stored on each selected point are used.
    """
    rows, plot = [], []
    for bpp in sorted(allocations):
        res = allocations[bpp]
        ids = sorted(res.selection)
        psnrs, ssims = [], []
        for i in ids:
            pt = res.selection[i]
            psnrs.append(_metric(pt, "psnr", i, metric_tables))
            ssims.append(_metric(pt, "msssim", i, metric_tables))
            plot.append([f"{bpp:g}", i, pt.qp, pt.bytes,
                         f"{pt.bytes * 8 / pixels[i]:.6f}", f"{pt.quality:.6f}"])
        total = sum(res.selection[i].bytes for i in ids)
        quals = [res.selection[i].quality for i in ids]
        rows.append(ReportRow(float(bpp), res.budget_bytes, total, float(np.mean(quals)),
                              float(min(quals)), float(np.mean(psnrs)), float(np.mean(ssims)),
                              len(ids)))
        total_px = sum(pixels[i] for i in ids)
        plot.append([f"{bpp:g}", "*", "", total, f"{total * 8 / total_px:.6f}",
                     f"{np.mean(quals):.6f}"])
    return Report(metric, rows, plot)


def rows_from_json(text: str) -> list[ReportRow]:
    return [ReportRow(**r) for r in json.loads(text)["rows"]]
