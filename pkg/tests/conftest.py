import os

import cv2
import numpy as np
import pytest

from rqalloc.pixelio import Plane, Yuv420Picture

# (name, width, height): odd sizes exercise padding; all >= 176 for MS-SSIM
CORPUS_SHAPES = [
    ("bars", 192, 176),
    ("blobs", 177, 181),
    ("grain", 200, 178),
    ("rings", 185, 176),
    ("steps", 176, 193),
]


def synthetic_rgb8(name: str, width: int, height: int, seed: int) -> np.ndarray:
    """Deterministic 8-bit test picture mixing smooth gradients, edges and texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    base = 110 + 60 * np.sin(xx / (9 + seed)) * np.cos(yy / (13 + 2 * seed))
    if name == "bars":
        base += 40 * ((xx // 16) % 2)
    elif name == "rings":
        base += 50 * np.sin(np.hypot(xx - width / 2, yy - height / 2) / 5)
    elif name == "steps":
        base += 20 * (yy // 24)
    elif name == "blobs":
        for _ in range(6):
            cx, cy, r = rng.uniform(0, width), rng.uniform(0, height), rng.uniform(10, 40)
            base += 45 * (np.hypot(xx - cx, yy - cy) < r)
    texture = rng.normal(0, 6 if name != "grain" else 18, (height, width))
    chans = [base + texture, base * 0.8 + 30 + np.roll(texture, 3, 1), 255 - base * 0.9 + texture]
    return np.clip(np.stack(chans, -1), 0, 255).round().astype(np.uint8)


def write_png(path, rgb8: np.ndarray) -> None:
    assert cv2.imwrite(str(path), rgb8[:, :, ::-1])


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    for seed, (name, w, h) in enumerate(CORPUS_SHAPES):
        write_png(d / f"{name}.png", synthetic_rgb8(name, w, h, seed))
    return d


@pytest.fixture(scope="session")
def corpus_paths(corpus_dir):
    return sorted(os.path.join(corpus_dir, f) for f in os.listdir(corpus_dir))


def random_picture(rng, width, height, orig_width=None, orig_height=None) -> Yuv420Picture:
    def plane(w, h):
        return Plane(rng.integers(0, 1024, (h, w)))

    return Yuv420Picture(plane(width, height), plane(width // 2, height // 2),
                         plane(width // 2, height // 2),
                         orig_width or width, orig_height or height)
