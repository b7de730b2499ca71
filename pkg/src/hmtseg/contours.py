"""Conversions between segmentations and contour maps."""
from __future__ import annotations

import numpy as np

from scipy import ndimage

from .core import as_contour, as_image, canonicalize, connected_components


def seg_to_contour(seg) -> np.ndarray:
    """1.0 on every pixel with a 4-neighbour of a different label, else 0.0."""
    seg = np.asarray(seg)
    out = np.zeros(seg.shape, dtype=bool)
    dh = seg[:, 1:] != seg[:, :-1]
    dv = seg[1:, :] != seg[:-1, :]
    out[:, 1:] |= dh
    out[:, :-1] |= dh
    out[1:, :] |= dv
    out[:-1, :] |= dv
    return out.astype(np.float64)


def contour_to_segmentation(contour, threshold: float) -> np.ndarray:
    """Regions of a contour map thresholded at ``threshold``.

    Pixels above the threshold are boundary.  Connected non-boundary pixels
    form the seed regions; boundary pixels are then absorbed in synchronous
    rounds, each joining the adjacent region with the most 4-neighbours in
    it (ties: smallest region id).
    """
    c = as_contour(contour)
    boundary = c > threshold
    if boundary.all():
        return np.zeros(c.shape, dtype=np.int64)
    interior = np.where(boundary, -1, 0)
    labels = connected_components(interior)
    # boundary components were labelled too; drop them
    labels = np.where(boundary, -1, labels)
    _, inv = np.unique(labels[~boundary], return_inverse=True)
    labels[~boundary] = inv.ravel()
    h, w = c.shape
    while (labels < 0).any():
        padded = np.pad(labels, 1, constant_values=-1)
        nb = np.stack([
            padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:],
        ], axis=-1)
        todo = (labels < 0) & (nb >= 0).any(axis=-1)
        cand = nb[todo]  # (n, 4)
        counts = np.zeros(cand.shape, dtype=np.int64)
        for k in range(4):
            counts[:, k] = (cand == cand[:, k:k + 1]).sum(axis=1)
        counts[cand < 0] = -1
        big = int(labels.max()) + 2
        score = counts * big - np.where(cand < 0, 0, cand)
        pick = cand[np.arange(cand.shape[0]), score.argmax(axis=1)]
        labels[todo] = pick
    return canonicalize(labels)


def fallback_boundary_map(image, sigma: float = 2.0) -> np.ndarray:
    """Gaussian-smoothed gradient magnitude of luminance, scaled to max 1."""
    img = as_image(image)
    lum = img @ np.array([0.299, 0.587, 0.114])
    mag = ndimage.gaussian_gradient_magnitude(lum, sigma=sigma)
    top = mag.max()
    return mag / top if top > 0 else np.zeros_like(mag)
