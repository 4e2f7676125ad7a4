"""Command-line entry point: ``roomlayout {reconstruct,decode,encode,eval,synth}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import formats
from .decode import decode_scene, encode_maps
from .errors import FormatError, LayoutError, NoWalls
from .metrics import evaluate_frame
from .optimize import ENDPOINT, RESIDUALS, RefineConfig
from .pipeline import ReconstructConfig, reconstruct
from .synth import SHAPES, NoiseSpec, RoomConfig, generate, perturb_scene

logger = logging.getLogger("roomlayout")

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_NO_WALLS = 3


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roomlayout", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    rec = sub.add_parser("reconstruct", help="scene JSON -> layout.json, labels.pgm, depth.ldpth")
    rec.add_argument("scenes", nargs="+", type=Path, help="scene JSON file(s)")
    rec.add_argument("--out", type=Path, required=True,
                     help="output directory; one subdirectory per scene when several are given")
    rec.add_argument("--optimize", action=argparse.BooleanOptionalAction, default=True,
                     help="refine wall planes against matched lines (default on)")
    rec.add_argument("--alpha", type=float, default=1.0, help="normal regularizer weight")
    rec.add_argument("--beta", type=float, default=0.01, help="offset regularizer weight")
    rec.add_argument("--max-iters", type=int, default=200, help="L-BFGS iteration limit")
    rec.add_argument("--gtol", type=float, default=1e-8, help="gradient tolerance (max abs component)")
    rec.add_argument("--residual", choices=RESIDUALS, default=ENDPOINT, help="line alignment term")
    rec.add_argument("--line-nms-px", type=float, default=10.0, help="line suppression distance in pixels")
    rec.add_argument("--peak-threshold", type=float, default=0.3,
                     help="minimum detection score kept for reasoning")
    rec.add_argument("--band-px", type=float, default=40.0,
                     help="connected-pair tolerance around touching box edges; negative disables")
    rec.add_argument("--gate-px", type=float, default=None,
                     help="skip refinement lines farther than this from the projected intersection")
    rec.add_argument("--lenient", action="store_true", help="accept unknown JSON fields with a warning")
    rec.add_argument("--jobs", type=_positive_int, default=1, help="scenes processed in parallel")

    dec = sub.add_parser("decode", help="detection maps -> scene JSON")
    dec.add_argument("maps", type=Path)
    dec.add_argument("--out", type=Path, required=True)
    dec.add_argument("--peak-threshold", type=float, default=None,
                     help="likelihood threshold for both planes and lines")
    dec.add_argument("--plane-threshold", type=float, default=0.3)
    dec.add_argument("--line-threshold", type=float, default=0.3)
    dec.add_argument("--plane-top-k", type=int, default=10)
    dec.add_argument("--line-top-k", type=int, default=20)
    dec.add_argument("--plane-iou", type=float, default=0.5)
    dec.add_argument("--line-nms-px", type=float, default=10.0)
    dec.add_argument("--lenient", action="store_true")

    enc = sub.add_parser("encode", help="scene JSON -> detection maps (sidecar + .bin)")
    enc.add_argument("scene", type=Path)
    enc.add_argument("--out", type=Path, required=True)
    enc.add_argument("--lenient", action="store_true")

    ev = sub.add_parser("eval", help="compare predicted and ground-truth label/depth files")
    ev.add_argument("pred", type=Path)
    ev.add_argument("gt", type=Path)
    ev.add_argument("--out", type=Path, default=None, help="write the metrics JSON here (default stdout)")

    syn = sub.add_parser("synth", help="write a synthetic dataset")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--count", type=int, default=10)
    syn.add_argument("--out", type=Path, required=True)
    syn.add_argument("--shape", choices=SHAPES, default="mixed")
    syn.add_argument("--require-occlusion", action="store_true")
    syn.add_argument("--normal-sigma", type=float, default=0.0, help="radians")
    syn.add_argument("--offset-sigma", type=float, default=0.0, help="relative")
    syn.add_argument("--line-theta-sigma", type=float, default=0.0, help="radians")
    syn.add_argument("--line-b-sigma", type=float, default=0.0, help="pixels")
    syn.add_argument("--drop-prob", type=float, default=0.0, help="line drop probability")
    syn.add_argument("--plane-drop-prob", type=float, default=0.0)
    syn.add_argument("--jobs", type=_positive_int, default=1)
    return parser


# --------------------------------------------------------------------------- reconstruct

def _reconstruct_config(args) -> ReconstructConfig:
    refine = RefineConfig(alpha=args.alpha, beta=args.beta, max_iterations=args.max_iters,
                          gradient_tolerance=args.gtol, residual=args.residual)
    band = None if args.band_px is not None and args.band_px < 0 else args.band_px
    return ReconstructConfig(optimize=args.optimize, refine=refine, line_nms_px=args.line_nms_px,
                             score_threshold=args.peak_threshold, gate_px=args.gate_px, band_px=band)


def _frame_names(paths: list[Path]) -> list[str]:
    """File stems, or parent directory names when the stems collide (frame_00001/scene.json)."""
    names = [p.stem for p in paths]
    if len(set(names)) != len(names):
        names = [p.resolve().parent.name for p in paths]
    return names


def _reconstruct_one(scene_path: Path, out_dir: Path, config: ReconstructConfig, lenient: bool) -> int:
    try:
        scene = formats.read_scene(scene_path, lenient)
        result = reconstruct(scene, config)
        # everything is rendered before the first byte is written
        payload = {
            "layout.json": formats.dumps_json(formats.layout_to_dict(result.layout)),
            "labels.pgm": formats.encode_pgm(result.labels),
            "depth.ldpth": formats.encode_depth(result.depth),
        }
    except NoWalls as exc:
        logger.error("%s: %s", scene_path, exc)
        return EXIT_NO_WALLS
    except (LayoutError, ValueError) as exc:
        logger.error("%s: %s", scene_path, exc)
        return EXIT_FORMAT
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, data in payload.items():
            formats.write_atomic(out_dir / name, data)
    except OSError as exc:
        logger.error("cannot write %s: %s", out_dir, exc)
        return EXIT_FORMAT
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    config = _reconstruct_config(args)
    if len(args.scenes) == 1:
        targets = [(args.scenes[0], args.out)]
    else:
        names = _frame_names(args.scenes)
        if len(set(names)) != len(names):
            logger.error("scene files map to duplicate output names: %s", names)
            return EXIT_FORMAT
        targets = [(p, args.out / n) for p, n in zip(args.scenes, names)]
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        codes = list(pool.map(lambda t: _reconstruct_one(t[0], t[1], config, args.lenient), targets))
    return max(codes)


# --------------------------------------------------------------------------- decode / encode

def cmd_decode(args) -> int:
    try:
        maps = formats.read_maps(args.maps, args.lenient)
        if maps.camera is None:
            raise FormatError(f"{args.maps}: decoding needs camera intrinsics in the sidecar")
        pt = args.plane_threshold if args.peak_threshold is None else args.peak_threshold
        lt = args.line_threshold if args.peak_threshold is None else args.peak_threshold
        scene = decode_scene(maps, maps.camera, pt, lt, args.plane_top_k, args.line_top_k,
                             args.plane_iou, args.line_nms_px)
        data = formats.dumps_json(formats.scene_to_dict(scene))
    except (LayoutError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_FORMAT
    return _write(args.out, data)


def cmd_encode(args) -> int:
    try:
        scene = formats.read_scene(args.scene, args.lenient)
        maps = encode_maps(scene)
        sidecar, blob = formats.maps_to_bytes(maps, args.out.with_suffix(".bin").name)
    except (LayoutError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_FORMAT
    code = _write(args.out.with_suffix(".bin"), blob)
    return code or _write(args.out, sidecar)


def _write(path: Path, data: bytes) -> int:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        formats.write_atomic(path, data)
    except OSError as exc:
        logger.error("cannot write %s: %s", path, exc)
        return EXIT_FORMAT
    return EXIT_OK


# --------------------------------------------------------------------------- eval

def _frames(gt_dir: Path) -> list[str]:
    if (gt_dir / "labels.pgm").is_file():
        return ["."]
    if not gt_dir.is_dir():
        raise FormatError(f"{gt_dir} is not a directory")
    frames = sorted(p.name for p in gt_dir.iterdir() if (p / "labels.pgm").is_file())
    if not frames:
        raise FormatError(f"{gt_dir} holds no labels.pgm files")
    return frames


def evaluate_dirs(pred_dir: Path, gt_dir: Path) -> dict:
    frames = []
    for name in _frames(gt_dir):
        gt_labels = formats.read_labels(gt_dir / name / "labels.pgm")
        pred_labels = formats.read_labels(pred_dir / name / "labels.pgm")
        depths = [d / name / "depth.ldpth" for d in (pred_dir, gt_dir)]
        pred_depth = gt_depth = None
        if all(p.is_file() for p in depths):
            pred_depth, gt_depth = (formats.read_depth(p) for p in depths)
        metrics = evaluate_frame(pred_labels, gt_labels, pred_depth, gt_depth)
        frames.append({"frame": name, **metrics, "rmse": metrics.get("rmse")})
    return formats.metrics_document(frames)


def cmd_eval(args) -> int:
    try:
        doc = evaluate_dirs(args.pred, args.gt)
    except LayoutError as exc:
        logger.error("%s", exc)
        return EXIT_FORMAT
    data = formats.dumps_json(doc)
    if args.out is None:
        sys.stdout.write(data.decode("utf-8"))
        return EXIT_OK
    return _write(args.out, data)


# --------------------------------------------------------------------------- synth

def frame_seeds(seed: int, index: int) -> tuple[int, int]:
    """Independent room and noise seeds for frame ``index`` of a dataset."""
    room, noise = np.random.SeedSequence([seed, index]).generate_state(2, dtype=np.uint32)
    return int(room), int(noise)


def _jsonable(obj):
    if isinstance(obj, tuple):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


def _synth_frame(index: int, args, config: RoomConfig, noise: NoiseSpec) -> tuple[dict, dict]:
    room_seed, noise_seed = frame_seeds(args.seed, index)
    gt = generate(room_seed, config)
    scene = perturb_scene(gt.scene, noise, seed=noise_seed)
    scene = dataclasses.replace(scene, gt=dataclasses.replace(scene.gt, labels="labels.pgm",
                                                              depth="depth.ldpth"))
    files = {
        "scene.json": formats.dumps_json(formats.scene_to_dict(scene)),
        "truth.json": formats.dumps_json(formats.scene_to_dict(gt.scene)),
        "labels.pgm": formats.encode_pgm(gt.labels),
        "depth.ldpth": formats.encode_depth(gt.depth),
    }
    entry = {"name": f"frame_{index:05d}", "room_seed": room_seed, "noise_seed": noise_seed,
             "shape": gt.spec.shape, "walls": len(gt.wall_edges), "pairs": list(gt.kinds)}
    return entry, files


def cmd_synth(args) -> int:
    try:
        config = RoomConfig(shape=args.shape, require_occlusion=args.require_occlusion)
        noise = NoiseSpec(args.normal_sigma, args.offset_sigma, args.line_theta_sigma, args.line_b_sigma,
                          args.drop_prob, args.plane_drop_prob)
    except ValueError as exc:
        logger.error("%s", exc)
        return EXIT_FORMAT
    if args.count < 0:
        logger.error("--count must be non-negative")
        return EXIT_FORMAT
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        logger.error("cannot create %s: %s", args.out, exc)
        return EXIT_FORMAT
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(lambda i: _synth_frame(i, args, config, noise), range(args.count)))
    try:
        for entry, files in results:
            frame_dir = args.out / entry["name"]
            frame_dir.mkdir(exist_ok=True)
            for name, data in files.items():
                formats.write_atomic(frame_dir / name, data)
        noise_doc = dataclasses.asdict(noise)
        noise_doc.pop("seed")
        manifest = {"format": "layout-synth/1", "seed": args.seed, "count": args.count,
                    "config": _jsonable(dataclasses.asdict(config)), "noise": noise_doc,
                    "frames": [entry for entry, _ in results]}
        formats.write_atomic(args.out / "manifest.json", formats.dumps_json(manifest))
    except OSError as exc:
        logger.error("cannot write dataset to %s: %s", args.out, exc)
        return EXIT_FORMAT
    return EXIT_OK


COMMANDS = {"reconstruct": cmd_reconstruct, "decode": cmd_decode, "encode": cmd_encode,
            "eval": cmd_eval, "synth": cmd_synth}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", stream=sys.stderr)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
