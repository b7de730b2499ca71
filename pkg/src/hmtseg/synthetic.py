"""Synthetic benchmark: random convex shapes on a background with exact ground truth."""
from __future__ import annotations

import numpy as np

from .core import connected_components

MIN_COLOR_DISTANCE = 0.3


def _random_colors(rng: np.random.Generator, n: int) -> np.ndarray:
    colors: list[np.ndarray] = []
    while len(colors) < n:
        c = rng.uniform(0.05, 0.95, size=3)
        if all(np.linalg.norm(c - o) >= MIN_COLOR_DISTANCE for o in colors):
            colors.append(c)
    return np.array(colors)


def _convex_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random ellipse or convex polygon covering a reasonable part of the frame."""
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
    if rng.random() < 0.5:
        ry, rx = rng.uniform(0.12, 0.3) * h, rng.uniform(0.12, 0.3) * w
        t = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(t) + dy * np.sin(t)
        v = -dx * np.sin(t) + dy * np.cos(t)
        return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    k = int(rng.integers(3, 7))
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=k))
    r = rng.uniform(0.15, 0.32) * min(h, w)
    py, px = cy + r * np.sin(angles), cx + r * np.cos(angles)
    mask = np.ones((h, w), dtype=bool)
    for i in range(k):
        y0, x0, y1, x1 = py[i], px[i], py[(i + 1) % k], px[(i + 1) % k]
        # counter-clockwise vertices: interior lies to the left of every edge
        mask &= (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0) >= 0
    return mask


def make_image(seed: int, size: int = 128, noise_variance: float = 0.001,
               min_shapes: int = 3, max_shapes: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Return (RGB image in [0, 1], ground-truth label map) for one seed."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(min_shapes, max_shapes + 1))
    colors = _random_colors(rng, n + 1)
    paint = np.zeros((size, size), dtype=np.int64)
    for k in range(1, n + 1):
        mask = _convex_mask(rng, size, size)
        if mask.sum() < 50:
            continue
        paint[mask] = k
    gt = connected_components(paint)
    img = colors[paint]
    if noise_variance > 0:
        img = img + rng.normal(0.0, np.sqrt(noise_variance), size=img.shape)
    return np.clip(img, 0.0, 1.0), gt


def make_dataset(n: int = 30, seed: int = 0, **kw) -> list[tuple[np.ndarray, np.ndarray]]:
    return [make_image(seed * 1000 + i, **kw) for i in range(n)]
