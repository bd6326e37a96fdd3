"""Command-line entry point exposing the whole workflow for scripted use.

JSON results go to stdout, diagnostics to stderr. Exit codes: 0 ok,
1 usage, 2 I/O, 3 validation/contract.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import evalharness, imagecore, neural, pipeline, synthgen
from .datastore import AnnotationStore, StoreError, load_manifest, save_manifest, split_dataset
from .imagecore import ImageIOError
from .neural import ModelError, TrainConfig
from .pipeline import PipelineConfig
from .synthgen import SceneSpec

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 0, 1, 2, 3

CATEGORY_DEFAULTS = {
    "accel0": dict(eccentricity=0.0, scratch_count_mean=1.0),
    "accel30": dict(eccentricity=0.5, scratch_count_mean=1.0),
    "field": dict(eccentricity=0.6, scratch_count_mean=2.5, artifact_count_mean=0.5),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig(max_track_radius=8)
    with open(path) as fh:
        return PipelineConfig.from_dict(json.load(fh))


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, learning_rate=args.lr, seed=args.train_seed
    )


def _emit(doc) -> None:
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_gen(args) -> int:
    overrides = CATEGORY_DEFAULTS.get(args.category, {})
    spec = SceneSpec(
        frame_size=args.frame_size,
        category=args.category,
        track_count_mean=args.tracks,
        noise_sigma=args.noise,
        gradient_amplitude=args.gradient,
        border_partial_fraction=args.border_fraction,
        **overrides,
    )
    manifest = synthgen.generate_corpus(
        spec, args.count, args.seed, args.out, workers=args.threads
    )
    _emit({"corpus_id": manifest.corpus_id, "frames": len(manifest.frames), "out": args.out})
    return EXIT_OK


def cmd_masks(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gaussian = cfg.gaussian_mask()
    # Gaussian is unit-sum; rescale for visibility in the 8-bit file.
    peak = gaussian.pixels.max()
    imagecore.save_image(
        imagecore.GrayImage(gaussian.pixels / peak), out / "gaussian_mask.pgm"
    )
    imagecore.save_image(cfg.disk_mask(), out / "disk_mask.pgm")
    _emit({"gaussian": str(out / "gaussian_mask.pgm"), "disk": str(out / "disk_mask.pgm")})
    return EXIT_OK


def cmd_enhance(args) -> int:
    cfg = _load_config(args.config)
    img = imagecore.load_image(args.frame)
    resp = pipeline.enhance(img, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resp_path = out / (Path(args.frame).stem + ".response.pgm")
    # response maps exceed [0,1]; save a normalized view
    peak = resp.pixels.max()
    view = resp.pixels / peak if peak > 0 else resp.pixels
    imagecore.save_image(imagecore.GrayImage(view), resp_path)
    _emit(
        {
            "frame": args.frame,
            "average_intensity": pipeline.average_intensity(resp),
            "max_response": float(resp.pixels.max()),
            "response_path": str(resp_path),
        }
    )
    return EXIT_OK


def cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    split_dataset(manifest, args.fraction, args.seed)
    save_manifest(manifest, args.manifest)
    n_train = sum(1 for f in manifest.frames if f.split == "train")
    _emit({"train": n_train, "test": len(manifest.frames) - n_train})
    return EXIT_OK


def cmd_annotate(args) -> int:
    import uvicorn

    from .annotsvc import Session, create_app

    cfg = _load_config(args.config)
    session = Session(args.manifest, args.annotations, args.models, cfg)
    app = create_app(session, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    manifest = load_manifest(args.manifest)
    store = AnnotationStore(args.annotations, manifest)
    records = evalharness.training_records(manifest, store, cfg)
    model = neural.mlp_train(records, _train_config(args), category=args.category)
    models_dir = Path(args.models)
    models_dir.mkdir(parents=True, exist_ok=True)
    neural.save_model(model, models_dir / f"{args.category}.json")
    _emit(
        {
            "category": args.category,
            "n_records": len(records),
            "final_rmse": neural.training_rmse(model, records),
            "model_path": str(models_dir / f"{args.category}.json"),
        }
    )
    return EXIT_OK


def cmd_count(args) -> int:
    cfg = _load_config(args.config)
    model = neural.load_model(args.model)
    img = imagecore.load_image(args.frame)
    report, resp, threshold = pipeline.analyze_frame(img, cfg, model)
    if args.overlay:
        overlay = imagecore.render_overlay(img, report)
        imagecore.save_image(overlay, args.overlay)
    _emit(
        {
            "frame": args.frame,
            "threshold": threshold,
            "count": report.count,
            "centroids": [list(p.centroid) for p in report.peaks],
        }
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    manifest = load_manifest(args.manifest)
    store = AnnotationStore(args.annotations, manifest)
    report = evalharness.evaluate(
        manifest, store, cfg, _train_config(args), tol=args.tol, workers=args.threads
    )
    if args.csv:
        Path(args.csv).write_text(evalharness.report_csv(report))
    if args.table:
        print(evalharness.report_table(report), file=sys.stderr)
    sys.stdout.write(evalharness.report_json(report) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    manifest = load_manifest(args.manifest)
    store = AnnotationStore(args.annotations, manifest)
    cmp = evalharness.compare_baseline(manifest, store, cfg, _train_config(args))
    _emit(
        {
            "rows": [
                {
                    "frame_id": r.frame_id,
                    "nn_count": r.nn_count,
                    "linear_count": r.linear_count,
                    "true_count": r.true_count,
                }
                for r in cmp.rows
            ],
            "nn_better": cmp.nn_better,
            "equal": cmp.equal,
            "nn_worse": cmp.nn_worse,
        }
    )
    return EXIT_OK


def _add_train_flags(p):
    p.add_argument("--epochs", type=int, default=5000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--train-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ntdcount", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus with ground truth")
    p.add_argument("--category", choices=synthgen.CATEGORIES, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frame-size", type=int, default=512)
    p.add_argument("--tracks", type=float, default=8.0, help="Poisson mean track count")
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--gradient", type=float, default=0.05)
    p.add_argument("--border-fraction", type=float, default=0.1)
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap for frame rendering (default: available parallelism)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("masks", help="emit the Gaussian and disk masks as images")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("enhance", help="response map + average intensity for one frame")
    p.add_argument("--frame", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("split", help="assign train/test splits in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fraction", type=float, default=0.75)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("annotate", help="launch the annotation HTTP service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--config")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8800)
    p.add_argument("--ui-dir")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train", help="train the threshold predictor from annotations")
    p.add_argument("--category", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--config")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("count", help="analyze one frame: threshold, count, centroids")
    p.add_argument("--frame", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--overlay", help="write count overlay image here")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("evaluate", help="train + evaluate on the test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--config")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--csv", help="write per-frame CSV here")
    p.add_argument("--table", action="store_true", help="print text table to stderr")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap for frame analysis (default: available parallelism)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="neural vs ratio-based linear baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--config")
    _add_train_flags(p)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (ImageIOError, StoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
