import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rqalloc.allocator import RateQualityPoint, allocate_greedy, build_curve
from rqalloc.analysis import (
    MissingMetricError,
    NoOverlapError,
    RdCurve,
    Report,
    ReportRow,
    bd_quality,
    bd_rate,
    load_rd_points,
    make_report,
    rows_from_json,
)
from rqalloc.validation import ValidationError

RATES = (0.05, 0.1, 0.2, 0.4, 0.8)
QUALS = (40.0, 55.0, 68.0, 79.0, 87.0)
REF = RdCurve("ref", RATES, QUALS)


def scaled(curve, ratio):
    return RdCurve("t", tuple(r * ratio for r in curve.rates), curve.qualities)


def shifted(curve, delta):
    return RdCurve("t", curve.rates, tuple(q + delta for q in curve.qualities))


def test_identical_curves_are_zero():
    assert bd_rate(REF, REF).value == 0.0
    assert bd_quality(REF, REF).value == 0.0


@pytest.mark.parametrize("ratio, expected", [(0.9, -10.0), (0.81, -19.0), (1.25, 25.0)])
def test_constant_ratio(ratio, expected):
    assert abs(bd_rate(REF, scaled(REF, ratio)).value - expected) <= 1e-6


def test_constant_offset_and_antisymmetry():
    plus = shifted(REF, 5.0)
    assert abs(bd_quality(REF, plus).value - 5.0) <= 1e-6
    assert bd_quality(plus, REF).value == pytest.approx(-bd_quality(REF, plus).value, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.3, 3.0), st.lists(st.floats(0.5, 20), min_size=4, max_size=8),
       st.floats(0.01, 1.0))
def test_reciprocity_on_random_curves(ratio, steps, start):
    quals = tuple(np.cumsum(steps) + 20)
    rates = tuple(start * 1.7 ** np.arange(len(steps)))
    a = RdCurve("a", rates, quals)
    b = scaled(a, ratio)
    r_ab, r_ba = bd_rate(a, b).value, bd_rate(b, a).value
    assert abs((1 + r_ab / 100) * (1 + r_ba / 100) - 1) <= 1e-4
    assert abs(r_ab - (ratio - 1) * 100) <= 1e-6 * max(1, abs(r_ab))


def test_no_overlap():
    high = RdCurve("high", RATES, tuple(q + 100 for q in QUALS))
    with pytest.raises(NoOverlapError, match=r"reference \[40, 87\].*tested \[140, 187\]"):
        bd_rate(REF, high)
    far = scaled(REF, 1000)
    with pytest.raises(NoOverlapError):
        bd_quality(REF, far)


def test_curve_validation():
    with pytest.raises(ValidationError, match="4 points"):
        RdCurve("x", (1, 2, 3), (1, 2, 3))
    with pytest.raises(ValidationError):
        RdCurve("x", (1, 2, 2, 3), (1, 2, 3, 4))
    with pytest.raises(ValidationError):
        RdCurve("x", (0, 1, 2, 3), (1, 2, 3, 4))
    assert RdCurve.from_points("x", [(4, 1), (1, 0), (2, 0.5), (3, 0.7)]).rates == (1, 2, 3, 4)


def test_load_rd_points_csv_and_json(tmp_path):
    csv_path = tmp_path / "a.csv"
    csv_path.write_text("rate,quality\n" + "".join(f"{r},{q}\n" for r, q in zip(RATES, QUALS)))
    json_path = tmp_path / "a.json"
    json_path.write_text(json.dumps({"label": "A", "points": [
        {"rate": r, "quality": q} for r, q in zip(RATES, QUALS)]}))
    a, b = load_rd_points(csv_path), load_rd_points(json_path)
    assert a.rates == b.rates and a.qualities == b.qualities and b.label == "A"


def _allocations():
    curves = []
    for i, base in enumerate((50, 55, 52)):
        pts = [RateQualityPoint(40 - k, 100 * (k + 1) + 7 * i, base + 6.0 * k,
                                {"psnr": 28.0 + k + i, "msssim": 0.9 + 0.01 * k})
               for k in range(4)]
        curves.append(build_curve(f"im{i}", 1000 + 10 * i, pts))
    return curves, {0.5: allocate_greedy(curves, 700), 1.0: allocate_greedy(curves, 1100)}


def test_report_matches_recomputation():
    curves, allocs = _allocations()
    pixels = {c.image_id: c.pixels for c in curves}
    report = make_report(allocs, pixels)
    assert [r.bpp for r in report.rows] == [0.5, 1.0]
    for row, bpp in zip(report.rows, (0.5, 1.0)):
        sel = allocs[bpp].selection
        assert row.data_size == sum(p.bytes for p in sel.values()) == allocs[bpp].total_bytes
        assert row.worst_quality == min(p.quality for p in sel.values())
        assert row.average_quality == pytest.approx(np.mean([p.quality for p in sel.values()]))
        assert row.psnr == pytest.approx(np.mean([p.aux["psnr"] for p in sel.values()]))
        assert row.images == 3
    assert rows_from_json(report.to_json()) == report.rows
    lines = report.to_plot_csv().splitlines()
    assert lines[0] == "target_bpp,image_id,qp,bytes,bpp,quality"
    assert len(lines) == 1 + 2 * 4
    star = [ln for ln in lines if ",*," in ln]
    assert star[0].startswith("0.5,*,,") and int(star[0].split(",")[3]) == report.rows[0].data_size


def test_report_missing_metric():
    curve = build_curve("x", 100, [RateQualityPoint(30, 10, 50.0, {"psnr": 30.0})])
    with pytest.raises(MissingMetricError, match="msssim.*x.*30"):
        make_report({0.1: allocate_greedy([curve], 10)}, {"x": 100})
    tables = {"x": {30: {"psnr": 31.0, "msssim": 0.95}}}
    row = make_report({0.1: allocate_greedy([curve], 10)}, {"x": 100}, metric_tables=tables).rows[0]
    assert (row.psnr, row.msssim) == (31.0, 0.95)


def test_table_row_format():
    row = ReportRow(0.075, 823660, 821963, 60.563, 58.556, 28.006, 0.936, 30)
    text = Report("vmaf", [row], []).to_text()
    head, line = text.splitlines()
    assert head.split() == ["bpp", "Data", "size", "average", "VMAF", "worst", "VMAF", "PSNR",
                            "MS-SSIM"]
    assert line.split() == ["0.075", "821963", "60.563", "58.556", "28.006", "0.936"]
    assert len(head) == len(line)
    assert not math.isnan(row.msssim)
