"""Batch command-line entry points.

Exit codes: 0 success, 1 domain error, 2 usage error. The dataset root can
come from --dataset or the NERVETRACE_DATA environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import metrics, sessions, splits, tracking
from .augment import AugmentConfig
from .augment import augment as sample_and_augment
from .contours import GacParams, inverse_gaussian_gradient, morph_gac
from .errors import NerveTraceError
from .geometry import BoundingBox
from .store import DatasetStore, PatientMeta

log = logging.getLogger("nervetrace")


def _parse_box(text: str) -> BoundingBox:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("box must be x,y,w,h")
    return BoundingBox(*parts)


def _dataset_arg(parser: argparse.ArgumentParser, flag: str = "--dataset") -> None:
    parser.add_argument(flag, default=os.environ.get("NERVETRACE_DATA"),
                        help="dataset root (default: $NERVETRACE_DATA)")


def _require_dataset(args, attr: str = "dataset") -> Path:
    value = getattr(args, attr)
    if not value:
        raise NerveTraceError(
            "no dataset root given; pass --dataset or set NERVETRACE_DATA")
    return Path(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nervetrace")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker cap for parallel stages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="register a video in the dataset")
    _dataset_arg(p)
    p.add_argument("--source", required=True,
                   help="frame directory, video file, or .npy stack")
    p.add_argument("--id", required=True)
    p.add_argument("--machine", required=True)
    p.add_argument("--plexus", required=True, choices=("scbp", "isc", "none"))
    p.add_argument("--side", required=True, choices=("left", "right"))
    p.add_argument("--gain", required=True, choices=("low", "medium", "high"))
    p.add_argument("--depth", default="")
    p.add_argument("--age", type=float)
    p.add_argument("--sex", choices=("male", "female"))
    p.add_argument("--height", type=float)
    p.add_argument("--bmi", type=float)

    p = sub.add_parser("annotate-replay",
                       help="rebuild a video's labels from its session log")
    _dataset_arg(p)
    p.add_argument("--video", required=True)

    p = sub.add_parser("track", help="seed and propagate boxes through a video")
    _dataset_arg(p)
    p.add_argument("--video", required=True)
    p.add_argument("--frame", type=int, default=0, help="seed frame index")
    p.add_argument("--box", type=_parse_box, action="append", required=True,
                   help="seed box as x,y,w,h (repeatable)")
    p.add_argument("--count", type=int, default=0,
                   help="frames to track (0 = to the end)")
    p.add_argument("--out", help="write per-frame boxes as JSON")

    p = sub.add_parser("refine", help="shrink fused boxes onto the structure")
    _dataset_arg(p)
    p.add_argument("--video", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--box", type=_parse_box, action="append", required=True)
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--smoothing", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.35)
    p.add_argument("--balloon", type=float, default=-1.0)
    p.add_argument("--edge-alpha", type=float, default=100.0)
    p.add_argument("--edge-sigma", type=float, default=2.0)
    p.add_argument("--out", required=True, help="output mask PNG")

    p = sub.add_parser("augment", help="materialize augmented copies of videos")
    _dataset_arg(p)
    p.add_argument("--out", required=True, help="output dataset root")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--copies", type=int, default=1)

    p = sub.add_parser("split", help="write stratified k-fold assignments")
    _dataset_arg(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="default: <dataset>/splits.json")
    p.add_argument("--k", type=int, default=5)

    p = sub.add_parser("evaluate", help="score a prediction run")
    _dataset_arg(p, "--gt")
    p.add_argument("--pred", required=True, help="prediction run directory")
    p.add_argument("--class", dest="cls", default="both",
                   choices=("scbp", "isc", "both"))
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--videos", nargs="*", help="restrict to these video ids")

    p = sub.add_parser("stats", help="dataset composition summary")
    _dataset_arg(p)
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    _dataset_arg(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


# -- command bodies -------------------------------------------------------

def _cmd_ingest(args) -> None:
    root = _require_dataset(args)
    store = DatasetStore.create(root)
    patient = None
    if args.age is not None:
        if args.sex is None or args.height is None or args.bmi is None:
            raise NerveTraceError("patient data needs --age --sex --height --bmi")
        patient = PatientMeta(age=args.age, sex=args.sex, height=args.height,
                              bmi=args.bmi)
    source: object = args.source
    if str(source).endswith(".npy"):
        source = [f for f in np.load(source)]
    record = store.ingest_video(
        source, id=args.id, machine=args.machine, plexus=args.plexus,
        side=args.side, gain=args.gain, depth_setting=args.depth, patient=patient)
    log.info("ingested %s: %d frames at %dx%d", record.id, record.n_frames,
             record.width, record.height)


def _cmd_annotate_replay(args) -> None:
    store = DatasetStore.open(_require_dataset(args))
    summary = sessions.replay_session(store, args.video)
    log.info("replayed %d events, %d commits", summary["events"],
             summary["committed"])
    print(json.dumps(summary))


def _cmd_track(args) -> None:
    store = DatasetStore.open(_require_dataset(args))
    video = store.video(args.video)
    frame = store.read_frame(args.video, args.frame)
    models = [tracking.kcf_init(frame, box) for box in args.box]
    last = video.n_frames - 1
    count = args.count if args.count > 0 else last - args.frame
    rows = [{"frame": args.frame,
             "boxes": [b.to_json() for b in args.box], "confidence": 1.0}]
    for idx in range(args.frame + 1, min(args.frame + count, last) + 1):
        image = store.read_frame(args.video, idx)
        boxes, peaks = [], []
        for model in models:
            box, peak = tracking.kcf_step(model, image)
            boxes.append(box)
            peaks.append(peak)
        rows.append({"frame": idx, "boxes": [b.to_json() for b in boxes],
                     "confidence": float(min(peaks))})
    payload = {"video_id": args.video, "seed_frame": args.frame, "tracks": rows}
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
        log.info("wrote %s (%d frames)", args.out, len(rows))
    else:
        print(json.dumps(payload))


def _cmd_refine(args) -> None:
    store = DatasetStore.open(_require_dataset(args))
    video = store.video(args.video)
    frame = store.read_frame(args.video, args.frame)
    init = sessions.fuse_boxes(args.box, (video.height, video.width))
    params = GacParams(
        iterations=args.iterations, smoothing=args.smoothing,
        threshold=args.threshold, balloon=args.balloon,
        edge_alpha=args.edge_alpha, edge_sigma=args.edge_sigma)
    edge = inverse_gaussian_gradient(frame, alpha=params.edge_alpha,
                                     sigma=params.edge_sigma)
    mask = morph_gac(edge, init, params)
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(args.out)
    log.info("refined %s frame %d: %d px -> %d px", args.video, args.frame,
             int(init.sum()), int(mask.sum()))


def _cmd_augment(args) -> None:
    src = DatasetStore.open(_require_dataset(args))
    dst = DatasetStore.create(Path(args.out))
    rng = np.random.default_rng(args.seed)
    config = AugmentConfig(seed=args.seed)
    applied: dict = {}
    for video in src.videos():
        labeled = src.evaluable_frames(video.id)
        if not labeled:
            continue
        labels = src.labels(video.id)
        for k in range(args.copies):
            new_id = f"{video.id}-aug{k:02}"
            out_frames = []
            records = {}
            masks = {}
            for idx in labeled:
                frame = src.read_frame(video.id, idx)
                if labels[idx].status == "positive":
                    mask = src.read_ground_truth(video.id, idx)
                else:
                    mask = np.zeros(frame.shape, bool)
                frame2, mask2, params = sample_and_augment(
                    frame, mask, video.gain, rng, config)
                out_frames.append(frame2)
                records[str(idx)] = params.to_json()
                if labels[idx].status == "positive":
                    masks[idx] = mask2
            record = dst.ingest_video(
                out_frames, id=new_id, machine=video.machine,
                plexus=video.plexus, side=video.side, gain=video.gain,
                depth_setting=video.depth_setting, patient=video.patient)
            for pos, idx in enumerate(labeled):
                label = labels[idx]
                if label.status == "positive":
                    dst.write_ground_truth(new_id, pos, masks[idx],
                                           label.gac_params or GacParams(iterations=0),
                                           provenance=label.provenance or "manual")
                else:
                    dst.set_frame_status(new_id, pos, label.status)
            applied[new_id] = records
            log.info("materialized %s (%d frames)", new_id, record.n_frames)
    (dst.root / "applied.json").write_text(json.dumps(applied, indent=2) + "\n")


def _cmd_split(args) -> None:
    store = DatasetStore.open(_require_dataset(args))
    spec = splits.SplitSpec(k=args.k, seed=args.seed)
    folds = splits.stratified_kfold(store.videos(), spec)
    out = Path(args.out) if args.out else store.root / "splits.json"
    splits.write_splits(folds, args.seed, out)
    log.info("wrote %s (%d folds)", out, len(folds))


def _cmd_evaluate(args) -> None:
    store = DatasetStore.open(_require_dataset(args, "gt"))
    classes = ("scbp", "isc") if args.cls == "both" else (args.cls,)
    report = metrics.evaluate_dataset(store, args.pred, classes=classes,
                                      video_ids=args.videos or None)
    written = metrics.write_report(report, args.out)
    for path in written:
        log.info("wrote %s", path)


def _cmd_stats(args) -> None:
    store = DatasetStore.open(_require_dataset(args))
    report = store.dataset_stats().to_json()
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)


def _cmd_serve(args) -> None:
    from .service import serve

    serve(_require_dataset(args), host=args.host, port=args.port)


_COMMANDS = {
    "ingest": _cmd_ingest,
    "annotate-replay": _cmd_annotate_replay,
    "track": _cmd_track,
    "refine": _cmd_refine,
    "augment": _cmd_augment,
    "split": _cmd_split,
    "evaluate": _cmd_evaluate,
    "stats": _cmd_stats,
    "serve": _cmd_serve,
}


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except (NerveTraceError, KeyError, FileNotFoundError) as exc:
        message = exc.args[0] if exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
