"""Command-line interface.

Subcommands: superpixel, train, segment, eval, noise, synth.  Every Config
key is also a flag (``water_level`` -> ``--water-level``); flags override
the config file given by ``--config`` or the HMTSEG_CONFIG variable.
Exit status: 0 on success, 1 for input errors, 2 for internal failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import zlib
from dataclasses import fields
from pathlib import Path


from . import io
from .config import Config, load_config
from .contours import contour_to_segmentation, fallback_boundary_map
from .core import InputError, InvariantError
from .features import layout
from .metrics import evaluate_ods_ois
from .pipeline import Item, add_gaussian_noise, segment_iterative, train_iterative
from .superpixel import pre_merge_small, watershed

log = logging.getLogger("hmtseg")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file (default: $HMTSEG_CONFIG)")
    g = p.add_argument_group("configuration overrides")
    for f in fields(Config):
        flag = "--" + f.name.replace("_", "-")
        kind = {"int": int, "float": float, "str": str, "bool": _bool}[f.type]
        g.add_argument(flag, dest=f.name, type=kind, default=None, metavar=f.type.upper())


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {raw}")


def _config(args) -> Config:
    base = load_config(args.config)
    return base.with_overrides(**{f.name: getattr(args, f.name) for f in fields(Config)})


def _noise_seed(cfg: Config, name: str) -> int:
    return cfg.noise_seed * 1_000_003 + zlib.crc32(name.encode())


def _load_item(entry: io.ManifestEntry, cfg: Config, need_gt: bool) -> Item:
    image = io.read_image(entry.image)
    if cfg.noise_variance > 0:
        image = add_gaussian_noise(image, cfg.noise_variance, _noise_seed(cfg, entry.name))
    pb = io.read_map(entry.pb) if entry.pb else fallback_boundary_map(image)
    gts = [io.read_labels(g) for g in entry.gts]
    if need_gt and not gts:
        raise InputError(f"{entry.image}: no ground truth")
    return Item(entry.name, image, pb, gts)


def cmd_superpixel(args, cfg: Config) -> None:
    image = io.read_image(args.image)
    pb = io.read_map(args.pb) if args.pb else fallback_boundary_map(image)
    if pb.shape != image.shape[:2]:
        raise InputError("image and boundary map differ in size")
    seg = pre_merge_small(watershed(pb, cfg.water_level), pb, cfg.min_size)
    io.write_labels(args.out, seg)
    print(f"{int(seg.max()) + 1} regions -> {args.out}")


def cmd_train(args, cfg: Config) -> None:
    entries = io.read_manifest(args.manifest)
    train = [_load_item(e, cfg, True) for e in entries if e.split == "train"]
    if not train:
        raise InputError("manifest has no train items")
    val = [_load_item(e, cfg, True) for e in entries if e.split == "val"]
    series = train_iterative(train, cfg, val_items=val)
    out = Path(args.out)
    written = io.save_series(out, series)
    report = {"config": cfg.to_text().splitlines(), "levels": [s.report for s in series]}
    (out / "train_report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    for s in series:
        for r in s.report:
            print(f"level {r['level']} iteration {r['iteration']}: samples {r['samples']} "
                  f"(+{r['added']}) routing {r['routing']}")
    print(f"{len(written)} model files -> {out}")


def cmd_segment(args, cfg: Config) -> None:
    series = io.load_series(args.models)
    expected = layout()["length"]
    for s in series:
        for ens in s.classifiers:
            if ens.n_features != expected:
                raise InputError(f"model layout has {ens.n_features} features, this build extracts {expected}")
    entries = [e for e in io.read_manifest(args.manifest) if e.split == args.split]
    items = [_load_item(e, cfg, False) for e in entries]
    results = segment_iterative(items, series, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for res in results:
        levels = len(res.iteration_maps)
        io.write_map(out / f"{res.name}.png", res.contour, levels=levels)
        if args.label_maps:
            for th in args.label_maps:
                io.write_labels(out / f"{res.name}_th{th:.2f}.png", contour_to_segmentation(res.contour, th))
    print(f"{len(results)} contour maps -> {out}")


def cmd_eval(args, cfg: Config) -> None:
    entries = [e for e in io.read_manifest(args.manifest) if e.split == args.split]
    if not entries:
        raise InputError(f"manifest has no {args.split} items")
    entries.sort(key=lambda e: e.name)
    contours, gts = [], []
    for e in entries:
        path = Path(args.contours) / f"{e.name}.png"
        if not path.exists():
            raise InputError(f"missing contour map {path}")
        if not e.gts:
            raise InputError(f"{e.image}: no ground truth")
        contours.append(io.read_map(path))
        gts.append([io.read_labels(g) for g in e.gts])
    report = evaluate_ods_ois(contours, gts, cfg.thresholds, names=[e.name for e in entries])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_raw.tsv").write_text(report.to_tsv())
    (out / "eval_summary.tsv").write_text(report.summary_tsv())
    print(report.summary_tsv(), end="")


def cmd_noise(args, cfg: Config) -> None:
    variance = args.variance if args.variance is not None else cfg.noise_variance
    entries = io.read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    new_entries = []
    for e in entries:
        noisy = add_gaussian_noise(io.read_image(e.image), variance, _noise_seed(cfg, e.name))
        path = out / f"{e.name}.png"
        io.write_image(path, noisy)
        # the original boundary map no longer describes the noisy image
        new_entries.append(io.ManifestEntry(e.split, str(path.resolve()), None, e.gts))
    io.write_manifest(out / "manifest.tsv", new_entries)
    print(f"{len(new_entries)} noisy images -> {out}")


def cmd_synth(args, cfg: Config) -> None:
    from .synthetic import make_dataset

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (img, gt) in enumerate(make_dataset(args.n, seed=args.data_seed, noise_variance=args.variance)):
        name = f"synth{i:03d}"
        io.write_image(out / f"{name}.png", img)
        io.write_labels(out / f"{name}_gt.png", gt)
        split = "train" if i < args.n_train else "test"
        entries.append(io.ManifestEntry(split, str((out / f"{name}.png").resolve()), None,
                                        [str((out / f"{name}_gt.png").resolve())]))
    io.write_manifest(out / "manifest.tsv", entries)
    print(f"{args.n} images -> {out}/manifest.tsv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmtseg", description="Hierarchical merge-tree image segmentation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("superpixel", help="watershed over-segmentation with small-region pre-merge")
    p.add_argument("--image", required=True)
    p.add_argument("--pb", help="boundary map (default: smoothed gradient of the image)")
    p.add_argument("--out", required=True, help="output 16-bit label map")
    _add_config_flags(p)
    p.set_defaults(func=cmd_superpixel)

    p = sub.add_parser("train", help="iterative training on the manifest's train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model series directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="iterative segmentation into accumulated contour maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--models", required=True, help="model series directory")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--label-maps", type=float, nargs="*", metavar="THRESHOLD",
                   help="also write label maps thresholded at these values")
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="covering / PRI / VI at ODS and OIS")
    p.add_argument("--contours", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("noise", help="write Gaussian-noise-corrupted copies of a manifest's images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variance", type=float)
    _add_config_flags(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("synth", help="generate the synthetic shapes benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--n-train", type=int, default=20)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--variance", type=float, default=0.001)
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        args.func(args, cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
