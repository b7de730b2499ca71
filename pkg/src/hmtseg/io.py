"""File formats: rasters, manifests, model series and reports.

* images: 8-bit grayscale or RGB rasters (16-bit inputs are accepted);
* boundary and contour maps: 16-bit grayscale PNG holding value * 65535.
  Contour maps from accumulation also carry a ``levels`` text chunk and are
  snapped back onto the k / levels lattice when read;
* label maps: 16-bit grayscale PNG, at most 65536 regions;
* manifest: tab-separated ``split, image, boundary map, gt1;gt2;...`` lines,
  ``-`` or an empty field for a missing boundary map, ``#`` comments;
* model series: a directory with ``series.json`` indexing one JSON model
  document per (detail level, iteration).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .classifier import EnsembleClassifier
from .core import InputError, canonicalize
from .pipeline import ClassifierSeries

SERIES_FORMAT = "hmtseg-series/1"
MAX_LABEL = 65535


def _open(path) -> Image.Image:
    try:
        return Image.open(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _to_unit(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype in (np.uint16, np.int32, np.int64, np.uint32):
        return arr.astype(np.float64) / 65535.0
    if arr.dtype == bool:
        return arr.astype(np.float64)
    raise InputError(f"unsupported raster dtype {arr.dtype}")


def read_image(path) -> np.ndarray:
    im = _open(path)
    if im.mode in ("RGBA", "P", "CMYK", "LA"):
        im = im.convert("RGB")
    return _to_unit(np.array(im))


def write_image(path, img) -> None:
    arr = np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def read_map(path) -> np.ndarray:
    im = _open(path)
    arr = np.array(im)
    if arr.ndim == 3:
        raise InputError(f"{path}: boundary/contour map must be single-channel")
    values = _to_unit(arr)
    levels = getattr(im, "text", {}).get("levels")
    if levels:
        n = int(levels)
        values = np.round(values * n) / n
    return values


def write_map(path, values, levels: int | None = None) -> None:
    arr = np.asarray(values, dtype=np.float64)
    if arr.min() < 0 or arr.max() > 1:
        raise InputError("map values must lie in [0, 1]")
    info = PngInfo()
    if levels:
        info.add_text("levels", str(int(levels)))
    Image.fromarray(np.round(arr * 65535.0).astype(np.uint16)).save(path, format="PNG", pnginfo=info)


def read_labels(path) -> np.ndarray:
    arr = np.array(_open(path))
    if arr.ndim == 3:
        # colour-coded ground truth: one label per distinct colour
        flat = arr.reshape(-1, arr.shape[2])
        _, inv = np.unique(flat, axis=0, return_inverse=True)
        return canonicalize(inv.reshape(arr.shape[:2]))
    return arr.astype(np.int64)


def write_labels(path, seg) -> None:
    seg = np.asarray(seg)
    if seg.min() < 0 or seg.max() > MAX_LABEL:
        raise InputError(f"label map ids must lie in [0, {MAX_LABEL}]")
    Image.fromarray(seg.astype(np.uint16)).save(path, format="PNG")


@dataclass
class ManifestEntry:
    split: str
    image: str
    pb: str | None
    gts: list[str] = field(default_factory=list)

    @property
    def name(self) -> str:
        return Path(self.image).stem


def read_manifest(path) -> list[ManifestEntry]:
    base = Path(path).resolve().parent
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc

    def resolve(p: str) -> str:
        return str(p if os.path.isabs(p) else base / p)

    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise InputError(f"manifest line {lineno}: expected split, image, boundary map[, ground truths]")
        split, image, pb = parts[0].strip(), parts[1].strip(), parts[2].strip()
        gts = [g.strip() for g in parts[3].split(";") if g.strip()] if len(parts) > 3 else []
        out.append(ManifestEntry(split, resolve(image), resolve(pb) if pb not in ("", "-") else None,
                                 [resolve(g) for g in gts]))
    return out


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    base = Path(path).resolve().parent

    def rel(p):
        return os.path.relpath(p, base) if p else "-"

    lines = [f"{e.split}\t{rel(e.image)}\t{rel(e.pb)}\t{';'.join(rel(g) for g in e.gts)}" for e in entries]
    Path(path).write_text("\n".join(lines) + "\n")


def model_filename(level: int, t: int) -> str:
    return f"model_l{level}_t{t:02d}.json"


def save_series(directory, series_list: list[ClassifierSeries]) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    index = {"format": SERIES_FORMAT, "levels": []}
    for s in series_list:
        names = []
        for t, ens in enumerate(s.classifiers):
            name = model_filename(s.level, t)
            (d / name).write_text(ens.dumps())
            names.append(name)
            written.append(d / name)
        index["levels"].append({"level": s.level, "models": names, "config": s.config})
    (d / "series.json").write_text(json.dumps(index, indent=1, sort_keys=True) + "\n")
    return written


def load_series(directory) -> list[ClassifierSeries]:
    d = Path(directory)
    try:
        index = json.loads((d / "series.json").read_text())
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read model series in {d}: {exc}") from exc
    if index.get("format") != SERIES_FORMAT:
        raise InputError(f"{d}: not a model series directory")
    out = []
    for lv in index["levels"]:
        models = [EnsembleClassifier.loads((d / m).read_text()) for m in lv["models"]]
        out.append(ClassifierSeries(models, lv["config"], lv["level"]))
    return out
