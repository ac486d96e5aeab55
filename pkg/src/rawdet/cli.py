"""Command-line entry point: ``rawdet <subcommand> [flags]``.

Exit codes: 0 success, 1 data or validation error, 2 usage error. Any flag
can also come from ``--config file.json`` (keys are flag names with dashes
or underscores); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from rawdet import __version__, kernels
from rawdet.core import SRGBImage, ValidationError, detections_from_json
from rawdet.rng import ALGORITHM

log = logging.getLogger("rawdet")


def _range(text: str) -> tuple[float, float]:
    parts = [float(p) for p in str(text).split(":")]
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) == 2:
        return parts[0], parts[1]
    raise argparse.ArgumentTypeError(f"expected VALUE or LO:HI, got {text!r}")


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = str(text).lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file supplying default flag values")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rawdet", description="RAW object-detection data toolkit")
    parser.add_argument(
        "--version",
        action="version",
        version=f"rawdet {__version__} (rng {ALGORITHM}; kernels {kernels.BACKEND})",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs: dict[str, argparse.ArgumentParser] = {}

    def add(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help)
        subs[name] = p
        return p

    p = add("synthesize", "turn a folder of sRGB images into synthetic 16-bit Bayer RAW")
    p.add_argument("--input-dir")
    p.add_argument("--out-dir")
    p.add_argument("--profile-bank", help="JSON profile bank (default: built-in)")
    p.add_argument("--brightness", type=_range, default=(80.0, 4096.0), help="mean 16-bit level, VALUE or LO:HI")
    p.add_argument("--noise-level", type=_range, default=(1.0, 10.0), help="VALUE or LO:HI")
    p.add_argument("--cfa", default="RGGB", choices=["RGGB", "BGGR", "GRBG", "GBRG"])

    p = add("develop", "Bayer PNG + sidecar -> detector-ready RGB")
    p.add_argument("--input", help="Bayer PNG or directory of them")
    p.add_argument("--out-dir")
    p.add_argument("--gamma", type=float, default=2.2)
    p.add_argument("--order", choices=["develop-first", "downsample-first"], default="develop-first")
    p.add_argument("--target", type=_size, help="down-sample to WIDTHxHEIGHT")
    p.add_argument("--format", choices=["png", "tensor"], default="png")
    p.add_argument("--full-isp", action="store_true", help="also re-apply sidecar exposure, WB, CCM and tone curve")

    p = add("split", "per-condition train/test split")
    p.add_argument("--gt")
    p.add_argument("--out-dir")
    p.add_argument("--fraction", type=float, default=0.7)

    p = add("downsample", "rescale annotations to a lower resolution")
    p.add_argument("--gt")
    p.add_argument("--out")
    p.add_argument("--target", type=_size, default=(2000, 1333))
    p.add_argument("--min-area", type=float, default=32 * 32)

    p = add("slice", "cut images into overlapping tiles")
    p.add_argument("--gt")
    p.add_argument("--out")
    p.add_argument("--tile", type=int, default=1280)
    p.add_argument("--overlap", type=int, default=300)
    p.add_argument("--keep-frac", type=float, default=0.4)
    p.add_argument("--drop-empty", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--images-dir", help="also crop the source images found here")
    p.add_argument("--out-images-dir")

    p = add("stats", "dataset statistics report")
    p.add_argument("--gt")
    p.add_argument("--out-dir")
    p.add_argument("--images-dir", help="sRGB images for the brightness histograms")

    p = add("eval", "COCO-style AP with condition slices")
    p.add_argument("--gt")
    p.add_argument("--dets")
    p.add_argument("--setting", choices=["downsampled", "sliced"], default="downsampled")
    p.add_argument("--max-dets", type=int, default=100)
    p.add_argument("--out", help="write the report here instead of stdout")

    p = add("sweep", "brightness x noise-level variant sets")
    p.add_argument("--input-dir")
    p.add_argument("--out-dir")
    p.add_argument("--brightness", type=_floats, default=[791.0, 80.0])
    p.add_argument("--noise", type=_floats, default=[1.0, 10.0])
    p.add_argument("--profile-bank")
    p.add_argument("--profile", default="0", help="index or name within the bank")
    p.add_argument("--cfa", default="RGGB", choices=["RGGB", "BGGR", "GRBG", "GBRG"])

    p = add("distill-check", "verify distillation gradients on random instances")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--pairs", type=int, default=100_000)
    return parser, subs


def _apply_config(argv: list[str], parser: argparse.ArgumentParser, subs: dict) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        parser.error(f"cannot read config {known.config}: {e}")
    if not isinstance(cfg, dict):
        parser.error("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    command = next((a for a in argv if a in subs), None)
    if command is None:
        return
    target = subs[command]
    dests = {a.dest: a for a in target._actions}
    unknown = sorted(set(cfg) - set(dests))
    if unknown:
        parser.error(f"config keys not valid for {command}: {', '.join(unknown)}")
    values = {}
    for k, v in cfg.items():
        kind = dests[k].type
        try:
            if isinstance(v, list) and kind in (_range, _size):
                v = tuple(float(x) if kind is _range else int(x) for x in v)
            elif isinstance(v, list) and kind is _floats:
                v = _floats(v)
            elif kind is not None and not isinstance(v, bool):
                v = kind(v if isinstance(v, str) or kind in (int, float) else str(v))
        except (argparse.ArgumentTypeError, TypeError, ValueError) as e:
            parser.error(f"config key {k}: {e}")
        values[k] = v
    target.set_defaults(**values)


def _require(parser: argparse.ArgumentParser, args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n) in (None, "")]
    if missing:
        parser.error("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _even_crop(img: SRGBImage) -> SRGBImage:
    h, w = img.height - img.height % 2, img.width - img.width % 2
    if (h, w) == (img.height, img.width):
        return img
    return SRGBImage(img.data[:h, :w])


def _map(threads: int, fn, items) -> list:
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synthesize(args) -> int:
    from rawdet import io, unprocess

    bank = unprocess.load_profile_bank(args.profile_bank)
    config = unprocess.AugmentConfig(brightness_range=args.brightness, noise_level_range=args.noise_level)
    root, out = Path(args.input_dir), Path(args.out_dir)
    files = io.list_images(root)
    if not files:
        raise ValidationError(f"no images under {root}")

    def work(path: Path) -> str:
        image_id = path.relative_to(root).as_posix()
        seed = unprocess.image_seed(args.seed, image_id)
        aug = unprocess.sample_augmentation(seed, config, bank)
        profile = bank[aug.ccm_index]
        bayer, meta = unprocess.unprocess_with_metadata(_even_crop(io.read_srgb(path)), profile, aug, seed, args.cfa)
        extra = {"image_id": image_id, "noise_level": aug.noise_level, "profile": profile.name}
        io.write_bayer(bayer, unprocess.replace(meta, extra=extra), (out / image_id).with_suffix(".png"))
        return image_id

    for image_id in _map(args.threads, work, files):
        log.info("synthesized %s", image_id)
    return 0


def cmd_develop(args) -> int:
    from rawdet import io, isp

    src = Path(args.input)
    files = sorted(src.rglob("*.png")) if src.is_dir() else [src]
    base = src if src.is_dir() else src.parent
    out = Path(args.out_dir)

    def work(path: Path) -> str:
        bayer, meta = io.read_bayer(path)
        if args.full_isp:
            img = isp.develop(bayer, meta=meta)
            if args.target:
                img = isp.downsample_image(img, *args.target)
        else:
            img = isp.process_for_detector(bayer, args.gamma, args.target, args.order)
        rel = path.relative_to(base)
        if args.format == "png":
            io.write_rgb16(img, out / rel)
        else:
            io.write_tensor(img, (out / rel).with_suffix(".tensor"))
        return rel.as_posix()

    for name in _map(args.threads, work, files):
        log.info("developed %s", name)
    return 0


def cmd_split(args) -> int:
    from rawdet import datapipe

    index = datapipe.load_index(args.gt)
    res = datapipe.split_dataset(index, args.fraction, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datapipe.save_index(res.train, out / "train.json")
    datapipe.save_index(res.test, out / "test.json")
    print(json.dumps({"train": len(res.train.images), "test": len(res.test.images)}))
    return 0


def cmd_downsample(args) -> int:
    from rawdet import datapipe

    index = datapipe.load_index(args.gt)
    res = datapipe.downsample_to(index, *args.target, min_area=args.min_area)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    datapipe.save_index(res, args.out)
    return 0


def cmd_slice(args) -> int:
    from rawdet import datapipe, io

    index = datapipe.load_index(args.gt)
    res = datapipe.slice_dataset(index, args.tile, args.overlap, args.keep_frac, args.drop_empty, args.threads)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    datapipe.save_index(res, args.out)
    if args.images_dir:
        _require(_PARSER, args, "out_images_dir")
        parents = {im.id: im for im in index.images}
        src, dst = Path(args.images_dir), Path(args.out_images_dir)

        def crop(tile):
            import cv2

            parent = parents[tile.provenance["parent_image_id"]]
            arr = cv2.imread(str(src / parent.file_path), cv2.IMREAD_UNCHANGED)
            if arr is None:
                raise ValidationError(f"cannot read {src / parent.file_path}")
            x0, y0 = tile.provenance["x0"], tile.provenance["y0"]
            piece = arr[y0 : y0 + tile.height, x0 : x0 + tile.width]
            io._write(dst / tile.file_path, piece)
            return tile.file_path

        _map(args.threads, crop, res.images)
    print(json.dumps({"tiles": len(res.images), "instances": len(res.annotations)}))
    return 0


def cmd_stats(args) -> int:
    from rawdet import datapipe, io, stats

    index = datapipe.load_index(args.gt)
    images = None
    if args.images_dir:
        root = Path(args.images_dir)
        images = [(im.condition, io.read_srgb(root / im.file_path)) for im in index.images]
    stats.write_report(stats.build_report(index, images), args.out_dir)
    return 0


def cmd_eval(args) -> int:
    from rawdet import datapipe, metrics

    gt = datapipe.load_index(args.gt)
    try:
        raw = json.loads(Path(args.dets).read_text())
        dets = detections_from_json(raw)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"{args.dets}: malformed detections file: {e}") from None
    cfg = metrics.EvalConfig.for_setting(args.setting)
    cfg = metrics.EvalConfig(cfg.iou_thresholds, cfg.area_ranges, args.max_dets, cfg.setting)
    report = json.dumps(metrics.evaluate(gt, dets, cfg).to_dict(), indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(report)
    else:
        sys.stdout.write(report)
    return 0


def cmd_sweep(args) -> int:
    from rawdet import io, unprocess

    bank = unprocess.load_profile_bank(args.profile_bank)
    by_name = {p.name: p for p in bank}
    if args.profile in by_name:
        profile = by_name[args.profile]
    else:
        try:
            profile = bank[int(args.profile)]
        except (ValueError, IndexError):
            raise ValidationError(f"no profile {args.profile!r} in bank") from None
    root, out = Path(args.input_dir), Path(args.out_dir)
    files = io.list_images(root)
    if not files:
        raise ValidationError(f"no images under {root}")
    dataset = {p.relative_to(root).as_posix(): _even_crop(io.read_srgb(p)) for p in files}
    sets = unprocess.synthesize_sweep(
        dataset, args.brightness, args.noise, profile, args.seed, cfa=args.cfa, threads=args.threads
    )
    summary = []
    for (b, n), items in sets.items():
        folder = out / f"b{b:g}_n{n:g}"
        for image_id, (bayer, meta) in items.items():
            io.write_bayer(bayer, meta, (folder / image_id).with_suffix(".png"))
        summary.append({"brightness": b, "noise_level": n, "images": len(items), "dir": folder.name})
    print(json.dumps(summary))
    return 0


def cmd_distill_check(args) -> int:
    from rawdet import distill

    results = distill.run_gradient_checks(args.seed, args.instances, args.pairs)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "synthesize": (cmd_synthesize, ("input_dir", "out_dir")),
    "develop": (cmd_develop, ("input", "out_dir")),
    "split": (cmd_split, ("gt", "out_dir")),
    "downsample": (cmd_downsample, ("gt", "out")),
    "slice": (cmd_slice, ("gt", "out")),
    "stats": (cmd_stats, ("gt", "out_dir")),
    "eval": (cmd_eval, ("gt", "dets")),
    "sweep": (cmd_sweep, ("input_dir", "out_dir")),
    "distill-check": (cmd_distill_check, ()),
}

_PARSER: argparse.ArgumentParser


def main(argv: list[str] | None = None) -> int:
    global _PARSER
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    _apply_config(argv, parser, subs)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    sub = subs[args.command]
    _PARSER = sub
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.threads < 1:
        sub.error("--threads must be at least 1")
    fn, required = COMMANDS[args.command]
    _require(sub, args, *required)
    try:
        return fn(args)
    except (ValidationError, OSError) as e:
        print(f"rawdet {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
