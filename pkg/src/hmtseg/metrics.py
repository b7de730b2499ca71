"""Region-based segmentation metrics and ODS/OIS evaluation.

Covering and the (probabilistic) Rand index are higher-is-better; the
variation of information (natural log) is lower-is-better.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contours import contour_to_segmentation
from .core import InputError

METRICS = ("covering", "pri", "vi")
DEFAULT_THRESHOLDS = tuple(round(0.01 * k, 2) for k in range(1, 100))


@dataclass
class ConfusionTable:
    counts: np.ndarray  # counts[l, g]: pixels labelled l in s and g in gt

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def rows(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def cols(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def confusion_table(s, gt) -> ConfusionTable:
    s, gt = np.asarray(s), np.asarray(gt)
    if s.shape != gt.shape:
        raise InputError(f"shape mismatch: {s.shape} vs {gt.shape}")
    _, a = np.unique(s.ravel(), return_inverse=True)
    _, b = np.unique(gt.ravel(), return_inverse=True)
    a, b = a.ravel(), b.ravel()
    nb = int(b.max()) + 1 if b.size else 0
    na = int(a.max()) + 1 if a.size else 0
    flat = np.bincount(a * nb + b, minlength=na * nb)
    return ConfusionTable(flat.reshape(na, nb))


def segmentation_covering(s, gt) -> float:
    t = confusion_table(s, gt)
    inter = t.counts
    union = t.rows[:, None] + t.cols[None, :] - inter
    best = (inter / union).max(axis=1)
    return float((t.rows * best).sum() / t.n)


def _pairs(x):
    x = np.asarray(x, dtype=object)
    return x * (x - 1) // 2


def rand_index(s, gt) -> float:
    """Fraction of agreeing pixel pairs, from the confusion table in exact integers."""
    t = confusion_table(s, gt)
    n = t.n
    if n < 2:
        raise InputError("Rand index needs at least two pixels")
    total = n * (n - 1) // 2
    same_both = int(_pairs(t.counts).sum())
    same_s = int(_pairs(t.rows).sum())
    same_g = int(_pairs(t.cols).sum())
    agree = total - same_s - same_g + 2 * same_both
    return agree / total


def probabilistic_rand(s, gts) -> float:
    if len(gts) == 0:
        raise InputError("need at least one ground truth")
    return float(np.mean([rand_index(s, g) for g in gts]))


def _entropy_terms(t: ConfusionTable) -> tuple[float, float]:
    n = t.n
    joint = t.counts[t.counts > 0] / n
    h_joint = -float((joint * np.log(joint)).sum())
    ps = t.rows[t.rows > 0] / n
    pg = t.cols[t.cols > 0] / n
    h_s = -float((ps * np.log(ps)).sum())
    h_g = -float((pg * np.log(pg)).sum())
    return h_joint - h_g, h_joint - h_s  # H(S|G), H(G|S)


def variation_of_information(s, gt) -> float:
    t = confusion_table(s, gt)
    a, b = _entropy_terms(t)
    return max(a + b, 0.0)


def score_against(s, gts) -> dict[str, float]:
    """Each metric averaged over the ground truths of one image."""
    if len(gts) == 0:
        raise InputError("empty ground-truth list")
    return {
        "covering": float(np.mean([segmentation_covering(s, g) for g in gts])),
        "pri": probabilistic_rand(s, gts),
        "vi": float(np.mean([variation_of_information(s, g) for g in gts])),
    }


@dataclass
class EvalReport:
    thresholds: np.ndarray
    raw: dict[str, np.ndarray]  # metric -> (n_images, n_thresholds)
    ods: dict[str, float] = field(default_factory=dict)
    ods_threshold: dict[str, float] = field(default_factory=dict)
    ois: dict[str, float] = field(default_factory=dict)
    names: list[str] = field(default_factory=list)

    def summary_line(self) -> str:
        cells = []
        for m in METRICS:
            cells += [f"{self.ods[m]:.4f}", f"{self.ois[m]:.4f}"]
        return "\t".join(cells)

    def to_tsv(self) -> str:
        header = "image\tthreshold\t" + "\t".join(METRICS)
        lines = [header]
        for i, name in enumerate(self.names):
            for k, th in enumerate(self.thresholds):
                vals = "\t".join(f"{self.raw[m][i, k]:.6f}" for m in METRICS)
                lines.append(f"{name}\t{th:.2f}\t{vals}")
        return "\n".join(lines) + "\n"

    def summary_tsv(self) -> str:
        head = "Covering_ODS\tCovering_OIS\tPRI_ODS\tPRI_OIS\tVI_ODS\tVI_OIS"
        ths = "\t".join(f"{m}_ods_threshold={self.ods_threshold[m]:.2f}" for m in METRICS)
        return f"{head}\n{self.summary_line()}\n# {ths}\n"


def evaluate_ods_ois(contours, gts, thresholds=DEFAULT_THRESHOLDS, names=None) -> EvalReport:
    """ODS (one shared threshold) and OIS (per-image best) for every metric."""
    contours = list(contours)
    gts = list(gts)
    if not contours:
        raise InputError("empty test set")
    if len(contours) != len(gts):
        raise InputError("contours and ground truths differ in length")
    ths = np.asarray(thresholds, dtype=np.float64)
    raw = {m: np.zeros((len(contours), ths.size)) for m in METRICS}
    for i, (c, g) in enumerate(zip(contours, gts)):
        if len(g) == 0:
            raise InputError(f"image {i} has no ground truth")
        cache: dict[bytes, dict[str, float]] = {}
        for k, th in enumerate(ths):
            key = np.packbits(np.asarray(c) > th).tobytes()
            if key not in cache:
                cache[key] = score_against(contour_to_segmentation(c, th), g)
            for m in METRICS:
                raw[m][i, k] = cache[key][m]
    report = EvalReport(thresholds=ths, raw=raw, names=list(names) if names else [str(i) for i in range(len(contours))])
    for m in METRICS:
        best = np.argmin if m == "vi" else np.argmax
        mean = raw[m].mean(axis=0)
        k = int(best(mean))
        report.ods[m] = float(mean[k])
        report.ods_threshold[m] = float(ths[k])
        per_image = raw[m].min(axis=1) if m == "vi" else raw[m].max(axis=1)
        report.ois[m] = float(per_image.mean())
    return report
