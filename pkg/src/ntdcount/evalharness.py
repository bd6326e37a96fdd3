"""Evaluation harness: centroid matching against ground truth, per-category
accuracy aggregation, and the neural-vs-linear baseline comparison.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import imagecore, neural, pipeline, synthgen
from .datastore import AnnotationStore, DatasetManifest, StoreError
from .neural import TrainConfig, TrainingRecord
from .pipeline import PipelineConfig


@dataclass
class FrameResult:
    frame_id: str
    true_count: int
    predicted_count: int
    matched: int
    missed: int
    spurious: int
    threshold: float


@dataclass
class EvalReport:
    category: str
    n_test_frames: int
    total_true_tracks: int
    matched: int
    missed: int
    spurious: int
    track_accuracy: float
    frame_exact_rate: float
    frames: list[FrameResult] = field(default_factory=list)


def match_peaks(pred_centroids, truth_centroids, tol: float):
    """Greedy globally-closest matching within `tol` pixels.

    Ties broken by lower prediction index, then lower truth index. Returns
    (matched, missed, spurious) counts.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    pairs = []
    for i, p in enumerate(pred_centroids):
        for j, t in enumerate(truth_centroids):
            d = math.hypot(p[0] - t[0], p[1] - t[1])
            if d <= tol:
                pairs.append((d, i, j))
    pairs.sort()
    used_p, used_t = set(), set()
    matched = 0
    for _, i, j in pairs:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        matched += 1
    missed = len(truth_centroids) - matched
    spurious = len(pred_centroids) - matched
    return matched, missed, spurious


def oracle_threshold(resp, truth: synthgen.GroundTruth, cfg: PipelineConfig) -> float:
    """Scripted stand-in for the human annotator: midpoint between the weakest
    true-pit peak response and the strongest response away from every pit."""
    pix = resp.pixels
    h, w = pix.shape
    r = cfg.max_track_radius
    if not truth.tracks:
        return float(pix.max()) * 1.05 + 1e-9
    rr, cc = np.mgrid[0:h, 0:w]
    non_pit = np.ones((h, w), dtype=bool)
    pit_peaks = []
    for t in truth.tracks:
        crow, ccol = t.centroid
        dist2 = (rr - crow) ** 2 + (cc - ccol) ** 2
        near = dist2 <= r**2
        if near.any():
            pit_peaks.append(float(pix[near].max()))
        non_pit &= dist2 > (2.0 * r) ** 2
    weakest_pit = min(pit_peaks) if pit_peaks else float(pix.max())
    strongest_bg = float(pix[non_pit].max()) if non_pit.any() else 0.0
    return 0.5 * (weakest_pit + strongest_bg)


def training_records(manifest: DatasetManifest, store: AnnotationStore, cfg: PipelineConfig):
    """Train-split annotation records for the active config, with coverage and
    config-hash consistency enforced."""
    cfg_hash = cfg.hash()
    records = [r for r in store.load() if r.split == "train"]
    hashes = {r.config_hash for r in records}
    if hashes and hashes != {cfg_hash}:
        raise StoreError(
            f"annotation config_hash mismatch: store has {sorted(hashes)}, config is {cfg_hash}"
        )
    annotated = {r.frame_id for r in records}
    train_ids = [f.frame_id for f in manifest.frames if f.split == "train"]
    missing = [fid for fid in train_ids if fid not in annotated]
    if missing:
        raise StoreError(f"missing annotations for training frames: {missing[:5]}...")
    return [
        TrainingRecord(r.frame_id, [r.average_intensity], r.manual_threshold) for r in records
    ]


def _run_frame(manifest, frame, cfg, model):
    img = imagecore.load_image(manifest.image_path(frame.frame_id))
    truth = synthgen.load_truth(manifest.truth_path(frame.frame_id))
    report, _, threshold = pipeline.analyze_frame(img, cfg, model)
    return report, truth, threshold


def evaluate(
    manifest: DatasetManifest,
    store: AnnotationStore,
    cfg: PipelineConfig,
    train_cfg: TrainConfig,
    tol: float | None = None,
    model: neural.MlpModel | None = None,
    workers: int | None = None,
) -> EvalReport:
    """Category evaluation protocol: train on train-split annotations, analyze every
    test frame, aggregate track-level and frame-exact accuracy.

    Test frames are independent; analysis fans out over `workers` threads
    (default: available parallelism) with results kept in frame order, so the
    report is identical for any worker count.
    """
    from concurrent.futures import ThreadPoolExecutor

    tol = tol if tol is not None else float(cfg.max_track_radius)
    if workers is not None and workers < 1:
        raise ValueError("workers must be >= 1")
    if model is None:
        model = neural.mlp_train(training_records(manifest, store, cfg), train_cfg,
                                 category=manifest.category)
    rows = []
    test_frames = sorted(
        (f for f in manifest.frames if f.split == "test"), key=lambda f: f.frame_id
    )
    with ThreadPoolExecutor(max_workers=workers or os.cpu_count() or 1) as pool:
        analyzed = list(pool.map(lambda f: _run_frame(manifest, f, cfg, model), test_frames))
    for frame, (report, truth, threshold) in zip(test_frames, analyzed):
        pred = [p.centroid for p in report.peaks]
        true = [t.centroid for t in truth.tracks]
        matched, missed, spurious = match_peaks(pred, true, tol)
        rows.append(
            FrameResult(
                frame_id=frame.frame_id,
                true_count=len(true),
                predicted_count=len(pred),
                matched=matched,
                missed=missed,
                spurious=spurious,
                threshold=threshold,
            )
        )
    total_true = sum(r.true_count for r in rows)
    matched = sum(r.matched for r in rows)
    exact = sum(1 for r in rows if r.predicted_count == r.true_count)
    return EvalReport(
        category=manifest.category,
        n_test_frames=len(rows),
        total_true_tracks=total_true,
        matched=matched,
        missed=sum(r.missed for r in rows),
        spurious=sum(r.spurious for r in rows),
        track_accuracy=matched / total_true if total_true else 1.0,
        frame_exact_rate=exact / len(rows) if rows else 1.0,
        frames=rows,
    )


@dataclass
class BaselineRow:
    frame_id: str
    nn_count: int
    linear_count: int
    true_count: int


@dataclass
class BaselineComparison:
    rows: list[BaselineRow]
    nn_better: int
    equal: int
    nn_worse: int


def compare_baseline(
    manifest: DatasetManifest,
    store: AnnotationStore,
    cfg: PipelineConfig,
    train_cfg: TrainConfig,
) -> BaselineComparison:
    """Run the trained network and the ratio-based linear baseline on every
    test frame and tabulate counts against truth."""
    records = training_records(manifest, store, cfg)
    model = neural.mlp_train(records, train_cfg, category=manifest.category)
    k = neural.linear_baseline_fit(records)
    rows = []
    test_frames = sorted(
        (f for f in manifest.frames if f.split == "test"), key=lambda f: f.frame_id
    )
    for frame in test_frames:
        img = imagecore.load_image(manifest.image_path(frame.frame_id))
        truth = synthgen.load_truth(manifest.truth_path(frame.frame_id))
        resp = pipeline.enhance(img, cfg)
        mu = pipeline.average_intensity(resp)
        nn_t = neural.mlp_predict(model, [mu])
        lin_t = neural.linear_baseline_predict(k, [mu])
        nn_count = pipeline.count_peaks(pipeline.apply_threshold(resp, nn_t), cfg, resp).count
        lin_count = pipeline.count_peaks(pipeline.apply_threshold(resp, lin_t), cfg, resp).count
        rows.append(BaselineRow(frame.frame_id, nn_count, lin_count, len(truth.tracks)))
    nn_better = sum(1 for r in rows if abs(r.nn_count - r.true_count) < abs(r.linear_count - r.true_count))
    nn_worse = sum(1 for r in rows if abs(r.nn_count - r.true_count) > abs(r.linear_count - r.true_count))
    return BaselineComparison(rows, nn_better, len(rows) - nn_better - nn_worse, nn_worse)


def report_json(report: EvalReport) -> str:
    return json.dumps(asdict(report), indent=2)


def report_table(report: EvalReport) -> str:
    lines = [
        f"category: {report.category}",
        f"test frames: {report.n_test_frames}   true tracks: {report.total_true_tracks}",
        f"matched: {report.matched}   missed: {report.missed}   spurious: {report.spurious}",
        f"track accuracy: {report.track_accuracy:.4f}   frame-exact rate: {report.frame_exact_rate:.4f}",
        "",
        f"{'frame_id':<20}{'true':>6}{'pred':>6}{'match':>7}{'miss':>6}{'spur':>6}{'threshold':>12}",
    ]
    for r in report.frames:
        lines.append(
            f"{r.frame_id:<20}{r.true_count:>6}{r.predicted_count:>6}"
            f"{r.matched:>7}{r.missed:>6}{r.spurious:>6}{r.threshold:>12.5f}"
        )
    return "\n".join(lines)


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["frame_id", "true", "predicted", "matched", "missed", "spurious", "threshold"])
    for r in report.frames:
        writer.writerow(
            [r.frame_id, r.true_count, r.predicted_count, r.matched, r.missed, r.spurious, r.threshold]
        )
    return buf.getvalue()
