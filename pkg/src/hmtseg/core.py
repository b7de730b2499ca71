"""Shared segmentation types and label-map hygiene.

Images are float arrays of shape (H, W) or (H, W, 3) with samples in [0, 1].
Segmentations are integer arrays of shape (H, W); contour maps are float
arrays of shape (H, W) with values in [0, 1].  Pixels are indexed row-major
and neighbourhoods are 4-connected throughout the package.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class InputError(ValueError):
    """Raised for malformed inputs (shapes, ranges, files)."""


class InvariantError(RuntimeError):
    """Raised when an internal invariant is violated."""


def as_image(img) -> np.ndarray:
    """Validate an image and return it as a float64 (H, W, 3) array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise InputError(f"image must be (H, W), (H, W, 1) or (H, W, 3), got {arr.shape}")
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError("image must have at least one pixel")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise InputError("image samples must lie in [0, 1]")
    return arr


def as_contour(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise InputError(f"contour map must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise InputError("contour map values must lie in [0, 1]")
    return arr


def canonicalize(seg) -> np.ndarray:
    """Relabel regions to 0..R-1 in order of first (row-major) occurrence."""
    seg = np.asarray(seg)
    flat = seg.ravel()
    _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse].reshape(seg.shape).astype(np.int64)


def connected_components(labels, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Split every label into its 4-connected pieces and canonicalize.

    ``labels`` may be a 2-D map or a flat sequence together with ``shape``.
    """
    arr = np.asarray(labels)
    if shape is not None:
        if arr.size != shape[0] * shape[1]:
            raise InputError(f"label map has {arr.size} entries, expected {shape[0]}x{shape[1]}")
        arr = arr.reshape(shape)
    if arr.ndim != 2 or arr.size == 0:
        raise InputError(f"label map must be a non-empty 2-D array, got shape {arr.shape}")
    flat = arr.ravel()
    p, q = neighbor_pairs(arr.shape)
    same = flat[p] == flat[q]
    n = flat.size
    graph = sparse.coo_matrix((np.ones(int(same.sum()), dtype=np.int8), (p[same], q[same])), shape=(n, n))
    _, comp = csgraph.connected_components(graph, directed=False)
    return canonicalize(comp.reshape(arr.shape))


def region_sizes(seg: np.ndarray) -> np.ndarray:
    return np.bincount(np.asarray(seg).ravel())


def is_partition_connected(seg: np.ndarray) -> bool:
    """True when every region of ``seg`` is a single 4-connected piece."""
    seg = np.asarray(seg)
    return int(connected_components(seg).max()) == int(canonicalize(seg).max())


def neighbor_pairs(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Flat index pairs (p, q) of all horizontally and vertically adjacent pixels."""
    h, w = shape
    idx = np.arange(h * w).reshape(h, w)
    p = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    q = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return p, q
