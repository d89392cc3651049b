"""Perceptual rate allocation toolkit.

Converts RGB images to 10-bit YCbCr 4:2:0, sweeps a codec over a QP range,
scores the decodes and spreads a global byte budget so that the worst
per-image quality is as high as possible.
"""
from .allocator import (
    AllocationResult,
    BudgetSpec,
    InfeasibleBudgetError,
    MaxMinAllocator,
    RateQualityCurve,
    RateQualityPoint,
    allocate_greedy,
    build_curve,
    compute_budget,
)
from .analysis import BdResult, RdCurve, bd_quality, bd_rate, make_report
from .colorspace import (
    ConversionParams,
    LanczosKernel,
    Yuv420Converter,
    lanczos_downsample_2x,
    lanczos_upsample_2x,
    rgb_to_ycbcr709,
    rgb_to_yuv420,
    ycbcr_to_rgb709,
    yuv420_to_rgb,
)
from .metrics import MetricScore, XpsnrParams, block_activity, ms_ssim, psnr, xpsnr
from .pixelio import (
    Plane,
    RgbImage,
    Yuv420Picture,
    crop,
    load_png,
    pad_to_even,
    read_yuv_raw,
    write_yuv_raw,
)
from .sweep import MetricConfig, QpSweep, sweep

__version__ = "0.1.0"

__all__ = [
    "AllocationResult", "BdResult", "BudgetSpec", "ConversionParams", "InfeasibleBudgetError",
    "LanczosKernel", "MaxMinAllocator", "MetricConfig", "MetricScore", "Plane", "QpSweep",
    "RateQualityCurve", "RateQualityPoint", "RdCurve", "RgbImage", "Yuv420Converter",
    "Yuv420Picture", "XpsnrParams", "allocate_greedy", "bd_quality", "bd_rate",
    "block_activity", "build_curve", "compute_budget", "crop", "lanczos_downsample_2x",
    "lanczos_upsample_2x", "load_png", "make_report", "ms_ssim", "pad_to_even", "psnr",
    "read_yuv_raw", "rgb_to_ycbcr709", "rgb_to_yuv420", "sweep", "write_yuv_raw", "xpsnr",
    "ycbcr_to_rgb709", "yuv420_to_rgb",
]
