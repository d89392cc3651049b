"""Rate-quality curves, budget arithmetic and greedy max-min byte allocation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .validation import RqallocError, ValidationError, check_is_fitted


class InfeasibleBudgetError(RqallocError):
    """Even the cheapest point of every curve does not fit the budget."""

    def __init__(self, needed: int, budget: int):
        self.needed = needed
        self.budget = budget
        self.shortfall = needed - budget
        super().__init__(
            f"budget of {budget} bytes is infeasible: the cheapest selection needs "
            f"{needed} bytes (shortfall {self.shortfall} bytes)"
        )


@dataclass(frozen=True)
class RateQualityPoint:
    qp: int
    bytes: int
    quality: float
    aux: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.bytes <= 0:
            raise ValidationError(f"point at qp {self.qp} has non-positive size {self.bytes}")
        if not math.isfinite(self.quality):
            raise ValidationError(f"point at qp {self.qp} has non-finite quality")


def _as_point(p) -> RateQualityPoint:
    if isinstance(p, RateQualityPoint):
        return p
    qp, nbytes, quality = p[:3]
    return RateQualityPoint(int(qp), int(nbytes), float(quality))


@dataclass(frozen=True)
class RateQualityCurve:
    """Pareto-pruned operating points of one image, cheapest first."""

    image_id: str
    pixels: int
    points: tuple
    raw_points: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.points:
            raise ValidationError(f"curve {self.image_id!r} has no points")
        for a, b in zip(self.points, self.points[1:]):
            if not (a.bytes < b.bytes and a.quality < b.quality):
                raise ValidationError(f"curve {self.image_id!r} is not a Pareto frontier")

    def __len__(self):
        return len(self.points)


def pareto_prune(points: Sequence[RateQualityPoint]) -> list[RateQualityPoint]:
    """Keep only points of strictly higher quality than every cheaper point."""
    ordered = sorted(points, key=lambda p: (p.bytes, -p.quality, p.qp))
    kept: list[RateQualityPoint] = []
    for p in ordered:
        if not kept or (p.quality > kept[-1].quality and p.bytes > kept[-1].bytes):
            kept.append(p)
    return kept


def build_curve(image_id: str, pixels: int, raw_points) -> RateQualityCurve:
    raw = tuple(_as_point(p) for p in raw_points)
    if not raw:
        raise ValidationError(f"no rate-quality points for {image_id!r}")
    return RateQualityCurve(str(image_id), int(pixels), tuple(pareto_prune(raw)), raw)


def _exact(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(Decimal(repr(x)))
    return Fraction(x)


@dataclass(frozen=True)
class BudgetSpec:
    bpp: Fraction
    total_pixels: int
    budget_bytes: int


def compute_budget(bpp, total_pixels: int) -> BudgetSpec:
    """floor(total_pixels * bpp / 8) in exact arithmetic.

    Floats are read by their shortest decimal repr, so ``0.15`` means 15/100.
    """
    rate = _exact(bpp)
    if rate <= 0 or total_pixels <= 0:
        raise ValidationError(f"bpp and pixel count must be positive (got {bpp}, {total_pixels})")
    return BudgetSpec(rate, int(total_pixels), math.floor(rate * int(total_pixels) / 8))


@dataclass(frozen=True)
class AllocationResult:
    selection: dict
    total_bytes: int
    min_quality: float
    mean_quality: float
    budget_bytes: int
    upgrades: int = 0


def _normalize(curves) -> list[RateQualityCurve]:
    if isinstance(curves, Mapping):
        curves = list(curves.values())
    curves = sorted(curves, key=lambda c: c.image_id)
    ids = [c.image_id for c in curves]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate image ids among curves")
    if not curves:
        raise ValidationError("no curves to allocate")
    return curves


def allocate_greedy(curves, budget_bytes: int, policy: str = "skip") -> AllocationResult:
    """Raise the worst image one curve point at a time until nothing fits.

    Every image starts at its cheapest point. Each iteration visits images in
    ascending (quality, image_id) order and upgrades the first one whose next
    point fits in the remaining budget. With ``policy="halt"`` only the worst
    image is considered and the loop ends as soon as it cannot be upgraded.
    """
    if policy not in ("skip", "halt"):
        raise ValidationError(f"unknown policy {policy!r}")
    curves = _normalize(curves)
    level = [0] * len(curves)
    spent = sum(c.points[0].bytes for c in curves)
    if spent > budget_bytes:
        raise InfeasibleBudgetError(spent, budget_bytes)
    upgrades = 0
    while True:
        order = sorted(range(len(curves)),
                       key=lambda i: (curves[i].points[level[i]].quality, curves[i].image_id))
        if policy == "halt":
            order = order[:1]
        for i in order:
            pts = curves[i].points
            if level[i] + 1 < len(pts):
                cost = pts[level[i] + 1].bytes - pts[level[i]].bytes
                if spent + cost <= budget_bytes:
                    level[i] += 1
                    spent += cost
                    upgrades += 1
                    break
        else:
            break
    chosen = {c.image_id: c.points[k] for c, k in zip(curves, level)}
    qualities = [p.quality for p in chosen.values()]
    return AllocationResult(chosen, spent, min(qualities), float(np.mean(qualities)),
                            int(budget_bytes), upgrades)


class MaxMinAllocator(BaseEstimator):
    """Estimator wrapper around :func:`allocate_greedy`.

    Parameters
    ----------
    budget_bytes : int, optional
        Global byte budget. When omitted it is derived from ``bpp`` and the
        total pixel count of the curves passed to ``fit``.
    bpp : float, default=0.075
        Target bits per pixel over the whole set.
    policy : {"skip", "halt"}, default="skip"
        What to do when the worst image cannot afford its next point.
    """

    def __init__(self, budget_bytes=None, bpp=0.075, policy="skip"):
        self.budget_bytes = budget_bytes
        self.bpp = bpp
        self.policy = policy

    def fit(self, X, y=None):
        curves = _normalize(X)
        if self.budget_bytes is None:
            budget = compute_budget(self.bpp, sum(c.pixels for c in curves)).budget_bytes
        else:
            budget = int(self.budget_bytes)
        self.result_ = allocate_greedy(curves, budget, self.policy)
        self.budget_bytes_ = budget
        self.selection_ = self.result_.selection
        self.total_bytes_ = self.result_.total_bytes
        self.min_quality_ = self.result_.min_quality
        self.mean_quality_ = self.result_.mean_quality
        return self

    def predict(self, X):
        """Chosen QP for each curve in ``X`` (in the given order)."""
        check_is_fitted(self, "selection_")
        ids = [c.image_id for c in (X.values() if isinstance(X, Mapping) else X)]
        return np.array([self.selection_[i].qp for i in ids])

    def score(self, X=None, y=None):
        check_is_fitted(self, "min_quality_")
        return self.min_quality_
