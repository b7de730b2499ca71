"""Region-pair features for the boundary classifier.

Vector layout (41 values by default), in order:

* geometry (5): area of the smaller and larger region over image area,
  their perimeters and the boundary-set size over the image diagonal;
* boundary (4): mean and median of the boundary map, then of the
  hierarchy-strength map, over the boundary pixel set;
* color (24): for L, a, b, H, S, V in turn: |mean difference|, L1,
  chi-squared and |entropy difference| of 10-bin histograms;
* texture (8): L1 and chi-squared distances of 16-bin histograms of
  forward-difference gradient energy at 0, 45, 90 and 135 degrees;
* extra (2 per map, optional): L1 and chi-squared of 32-bin histograms of
  caller-supplied probability maps.

The pair is ordered so the smaller region (by size, then perimeter) comes
first, which makes the whole vector symmetric in its arguments.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from skimage.color import rgb2hsv, rgb2lab

from .core import InputError, as_contour, as_image

COLOR_BINS = 10
TEXTURE_BINS = 16
EXTRA_BINS = 32
TEXTURE_RANGE = 0.5
COLOR_NAMES = ("L", "A", "B", "H", "S", "V")
# nominal component ranges used for histogram binning
COLOR_RANGES = ((0.0, 100.0), (-128.0, 128.0), (-128.0, 128.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
ORIENTATIONS = (0, 45, 90, 135)


def feature_names(n_extra_maps: int = 0) -> list[str]:
    names = ["area_small", "area_large", "perim_small", "perim_large", "boundary_length",
             "pb_mean", "pb_median", "hier_mean", "hier_median"]
    for c in COLOR_NAMES:
        names += [f"{c}_dmean", f"{c}_l1", f"{c}_chi2", f"{c}_dentropy"]
    for o in ORIENTATIONS:
        names += [f"tex{o}_l1", f"tex{o}_chi2"]
    for k in range(n_extra_maps):
        names += [f"extra{k}_l1", f"extra{k}_chi2"]
    return names


def layout(n_extra_maps: int = 0) -> dict:
    """Block names with their [start, stop) offsets into the vector."""
    blocks = [("geometry", 5), ("boundary", 4), ("color", 24), ("texture", 8)]
    if n_extra_maps:
        blocks.append(("extra", 2 * n_extra_maps))
    out, start = [], 0
    for name, size in blocks:
        out.append({"block": name, "start": start, "stop": start + size})
        start += size
    return {"length": start, "blocks": out, "names": feature_names(n_extra_maps)}


def _normalize(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    s = h.sum(axis=-1, keepdims=True)
    uniform = np.full(h.shape, 1.0 / h.shape[-1])
    return np.where(s > 0, h / np.where(s > 0, s, 1.0), uniform)


def _distances(h1: np.ndarray, h2: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = h1 - h2
    s = h1 + h2
    l1 = np.abs(d).sum(axis=-1)
    chi2 = 0.5 * np.where(s > 0, d * d / np.where(s > 0, s, 1.0), 0.0).sum(axis=-1)
    ent = np.abs(_entropy(h1) - _entropy(h2))
    return l1, chi2, ent


def _entropy(h: np.ndarray) -> np.ndarray:
    return -np.where(h > 0, h * np.log(np.where(h > 0, h, 1.0)), 0.0).sum(axis=-1)


def histogram_distances(h1, h2) -> tuple[float, float, float]:
    """(L1, chi-squared, |entropy difference|) between two histograms.

    Inputs are normalized to unit mass; an all-zero histogram counts as
    uniform.  Chi-squared carries a factor 1/2 and skips empty bin pairs.
    """
    h1, h2 = np.asarray(h1, dtype=np.float64), np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape or h1.ndim != 1:
        raise InputError(f"histogram bin counts differ: {h1.shape} vs {h2.shape}")
    l1, chi2, ent = _distances(_normalize(h1), _normalize(h2))
    return float(l1), float(chi2), float(ent)


def _quantize(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    q = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(q, 0, bins - 1)


def gradient_energies(gray: np.ndarray) -> np.ndarray:
    """Absolute oriented forward-difference responses, shape (4, H, W)."""
    gx = np.zeros_like(gray)
    gy = np.zeros_like(gray)
    gx[:, :-1] = gray[:, 1:] - gray[:, :-1]
    gy[:-1, :] = gray[1:, :] - gray[:-1, :]
    out = []
    for deg in ORIENTATIONS:
        t = np.deg2rad(deg)
        out.append(np.abs(np.cos(t) * gx + np.sin(t) * gy))
    return np.stack(out)


@dataclass
class RegionStats:
    """Additive per-region summaries; merging two regions sums them."""

    size: int
    color_sum: np.ndarray  # (6,)
    color_hist: np.ndarray  # (6, COLOR_BINS)
    texture_hist: np.ndarray  # (4, TEXTURE_BINS)
    extra_hist: np.ndarray  # (k, EXTRA_BINS)

    def __add__(self, other: "RegionStats") -> "RegionStats":
        return RegionStats(self.size + other.size, self.color_sum + other.color_sum,
                           self.color_hist + other.color_hist, self.texture_hist + other.texture_hist,
                           self.extra_hist + other.extra_hist)


@dataclass
class FeatureContext:
    """Per-image maps and per-pixel bin indices used by feature extraction."""

    shape: tuple[int, int]
    pb: np.ndarray
    hierarchy: np.ndarray
    color: np.ndarray  # (6, N) component values
    color_bins: np.ndarray  # (6, N)
    texture_bins: np.ndarray  # (4, N)
    extra_bins: np.ndarray  # (k, N)

    @classmethod
    def build(cls, image, pb, hierarchy=None, extra_maps=None) -> "FeatureContext":
        img = as_image(image)
        pb = as_contour(pb)
        if pb.shape != img.shape[:2]:
            raise InputError("boundary map and image differ in shape")
        hierarchy = np.zeros_like(pb) if hierarchy is None else as_contour(hierarchy)
        if hierarchy.shape != pb.shape:
            raise InputError("hierarchy map and image differ in shape")
        n = pb.size
        lab = rgb2lab(img).reshape(n, 3).T
        hsv = rgb2hsv(img).reshape(n, 3).T
        color = np.concatenate([lab, hsv])
        color_bins = np.stack([_quantize(color[c], lo, hi, COLOR_BINS) for c, (lo, hi) in enumerate(COLOR_RANGES)])
        gray = img @ np.array([0.299, 0.587, 0.114])
        tex = gradient_energies(gray).reshape(len(ORIENTATIONS), n)
        texture_bins = _quantize(tex, 0.0, TEXTURE_RANGE, TEXTURE_BINS)
        if extra_maps is None:
            extra_bins = np.zeros((0, n), dtype=np.int64)
        else:
            em = np.asarray(extra_maps, dtype=np.float64)
            if em.ndim == 2:
                em = em[None]
            if em.shape[1:] != pb.shape:
                raise InputError("extra maps and image differ in shape")
            extra_bins = _quantize(em.reshape(em.shape[0], n), 0.0, 1.0, EXTRA_BINS)
        return cls(pb.shape, pb.ravel(), hierarchy.ravel(), color, color_bins, texture_bins, extra_bins)

    @property
    def n_extra(self) -> int:
        return int(self.extra_bins.shape[0])

    @property
    def length(self) -> int:
        return 41 + 2 * self.n_extra

    def stats(self, pixels) -> RegionStats:
        pixels = np.asarray(pixels)
        return RegionStats(
            size=int(pixels.size),
            color_sum=self.color[:, pixels].sum(axis=1),
            color_hist=_hist_rows(self.color_bins[:, pixels], COLOR_BINS),
            texture_hist=_hist_rows(self.texture_bins[:, pixels], TEXTURE_BINS),
            extra_hist=_hist_rows(self.extra_bins[:, pixels], EXTRA_BINS),
        )

    def leaf_stats(self, leaf_labels: np.ndarray) -> list[RegionStats]:
        """Stats for every region of a label map, computed in one pass."""
        flat = np.asarray(leaf_labels).ravel()
        r = int(flat.max()) + 1
        sizes = np.bincount(flat, minlength=r)
        csum = np.stack([np.bincount(flat, weights=self.color[c], minlength=r) for c in range(6)], axis=1)
        chist = _hist_by_region(flat, self.color_bins, COLOR_BINS, r)
        thist = _hist_by_region(flat, self.texture_bins, TEXTURE_BINS, r)
        ehist = _hist_by_region(flat, self.extra_bins, EXTRA_BINS, r)
        return [RegionStats(int(sizes[i]), csum[i], chist[i], thist[i], ehist[i]) for i in range(r)]


def _hist_rows(bins: np.ndarray, nbins: int) -> np.ndarray:
    out = np.zeros((bins.shape[0], nbins), dtype=np.float64)
    for c in range(bins.shape[0]):
        out[c] = np.bincount(bins[c], minlength=nbins)
    return out


def _hist_by_region(flat: np.ndarray, bins: np.ndarray, nbins: int, r: int) -> np.ndarray:
    k = bins.shape[0]
    out = np.zeros((r, k, nbins), dtype=np.float64)
    for c in range(k):
        out[:, c, :] = np.bincount(flat * nbins + bins[c], minlength=r * nbins).reshape(r, nbins)
    return out


def pair_vector(ctx: FeatureContext, a: RegionStats, b: RegionStats, perim_a: float, perim_b: float,
                boundary: np.ndarray) -> np.ndarray:
    """Feature vector of a region pair from precomputed region stats."""
    boundary = np.asarray(boundary)
    if boundary.size == 0:
        raise InputError("empty boundary pixel set")
    if (b.size, perim_b) < (a.size, perim_a):
        a, b, perim_a, perim_b = b, a, perim_b, perim_a
    h, w = ctx.shape
    area = float(h * w)
    diag = float(np.hypot(h, w))
    pbv = ctx.pb[boundary]
    hv = ctx.hierarchy[boundary]
    geometry = [a.size / area, b.size / area, perim_a / diag, perim_b / diag, boundary.size / diag]
    bnd = [pbv.mean(), np.median(pbv), hv.mean(), np.median(hv)]

    dmean = np.abs(a.color_sum / max(a.size, 1) - b.color_sum / max(b.size, 1))
    l1, chi2, ent = _distances(_normalize(a.color_hist), _normalize(b.color_hist))
    color = np.stack([dmean, l1, chi2, ent], axis=1).ravel()
    tl1, tchi2, _ = _distances(_normalize(a.texture_hist), _normalize(b.texture_hist))
    texture = np.stack([tl1, tchi2], axis=1).ravel()
    parts = [np.asarray(geometry), np.asarray(bnd), color, texture]
    if ctx.n_extra:
        el1, echi2, _ = _distances(_normalize(a.extra_hist), _normalize(b.extra_hist))
        parts.append(np.stack([el1, echi2], axis=1).ravel())
    return np.concatenate(parts)


def perimeter(shape: tuple[int, int], pixels) -> int:
    """Pixel sides of the region not shared with another region pixel."""
    mask = np.zeros(shape, dtype=bool)
    mask.ravel()[np.asarray(pixels)] = True
    m = np.pad(mask, 1)
    inner = m[1:-1, 1:-1]
    shared = (inner & m[:-2, 1:-1]).sum() + (inner & m[2:, 1:-1]).sum() + \
        (inner & m[1:-1, :-2]).sum() + (inner & m[1:-1, 2:]).sum()
    return int(4 * inner.sum() - shared)


def boundary_pixels(shape: tuple[int, int], a, b) -> np.ndarray:
    """Two-sided boundary set: pixels of either region 4-adjacent to the other."""
    h, w = shape
    ma = np.zeros(h * w, dtype=bool)
    mb = np.zeros(h * w, dtype=bool)
    ma[np.asarray(a)] = True
    mb[np.asarray(b)] = True
    ma, mb = ma.reshape(h, w), mb.reshape(h, w)
    out = (ma & _dilate(mb)) | (mb & _dilate(ma))
    return np.flatnonzero(out)


def _dilate(m: np.ndarray) -> np.ndarray:
    out = m.copy()
    out[1:, :] |= m[:-1, :]
    out[:-1, :] |= m[1:, :]
    out[:, 1:] |= m[:, :-1]
    out[:, :-1] |= m[:, 1:]
    return out


def extract_pair_features(ctx: FeatureContext, a, b, boundary=None) -> np.ndarray:
    """Feature vector for two disjoint regions given as flat pixel-index arrays."""
    a, b = np.asarray(a), np.asarray(b)
    if np.intersect1d(a, b).size:
        raise InputError("regions overlap")
    if boundary is None:
        boundary = boundary_pixels(ctx.shape, a, b)
    return pair_vector(ctx, ctx.stats(a), ctx.stats(b), perimeter(ctx.shape, a), perimeter(ctx.shape, b), boundary)
