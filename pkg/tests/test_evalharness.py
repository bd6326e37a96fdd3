import csv
import io
import json

import numpy as np
import pytest

from ntdcount import evalharness, imagecore, pipeline, synthgen
from ntdcount.datastore import AnnotationRecord, AnnotationStore, StoreError, split_dataset
from ntdcount.evalharness import (
    compare_baseline,
    evaluate,
    match_peaks,
    oracle_threshold,
    report_csv,
    report_json,
    report_table,
    training_records,
)
from ntdcount.imagecore import GrayImage
from ntdcount.neural import TrainConfig
from ntdcount.pipeline import PipelineConfig
from ntdcount.synthgen import GroundTruth, SceneSpec, TrackTruth, generate_corpus


def test_match_empty():
    assert match_peaks([], [], 3.0) == (0, 0, 0)
    assert match_peaks([(1.0, 1.0)], [], 3.0) == (0, 0, 1)
    assert match_peaks([], [(1.0, 1.0)], 3.0) == (0, 1, 0)


def test_match_exact_pairs():
    pred = [(10.0, 10.0), (20.0, 20.0)]
    truth = [(20.0, 20.5), (10.5, 10.0)]
    assert match_peaks(pred, truth, 2.0) == (2, 0, 0)


def test_match_outside_tolerance():
    assert match_peaks([(0.0, 0.0)], [(0.0, 5.0)], 3.0) == (0, 1, 1)
    assert match_peaks([(0.0, 0.0)], [(0.0, 3.0)], 3.0) == (1, 0, 0)  # boundary inclusive


def test_match_greedy_crossing():
    # p1 is 1.0 from t1 and 1.5 from t2; p2 is 2.0 from t2 only.
    # greedy takes (p1, t1) first, leaving (p2, t2): both matched.
    pred = [(0.0, 0.0), (0.0, 3.5)]
    truth = [(0.0, 1.0), (0.0, 1.5)]
    assert match_peaks(pred, truth, 3.0) == (2, 0, 0)


def test_match_one_pred_two_truths():
    # a single prediction can only consume one truth
    assert match_peaks([(0.0, 0.0)], [(0.0, 1.0), (1.0, 0.0)], 3.0) == (1, 1, 0)


def test_match_symmetry_missed_spurious():
    pred = [(0.0, 0.0), (10.0, 10.0), (50.0, 50.0)]
    truth = [(0.5, 0.0), (30.0, 30.0)]
    m1 = match_peaks(pred, truth, 2.0)
    m2 = match_peaks(truth, pred, 2.0)
    assert m1 == (1, 1, 2)
    assert m2 == (1, 2, 1)  # missed and spurious swap roles


def test_match_rejects_bad_tol():
    with pytest.raises(ValueError):
        match_peaks([], [], 0.0)


def test_match_brute_force_oracle():
    # greedy result must use globally closest pairs first; verify matched
    # count against exhaustive assignment enumeration on small instances
    import itertools

    rng = np.random.default_rng(21)
    for _ in range(20):
        pred = [tuple(x) for x in rng.uniform(0, 20, (int(rng.integers(0, 5)), 2))]
        truth = [tuple(x) for x in rng.uniform(0, 20, (int(rng.integers(0, 5)), 2))]
        tol = 6.0
        matched, missed, spurious = match_peaks(pred, truth, tol)
        assert missed == len(truth) - matched
        assert spurious == len(pred) - matched
        # matched never exceeds the best possible one-to-one assignment;
        # enumerate every injective map from the smaller side into the larger
        def within(i, j):
            return np.hypot(pred[i][0] - truth[j][0], pred[i][1] - truth[j][1]) <= tol

        best = 0
        if len(pred) <= len(truth):
            for perm in itertools.permutations(range(len(truth)), len(pred)):
                best = max(best, sum(1 for i, j in enumerate(perm) if within(i, j)))
        else:
            for perm in itertools.permutations(range(len(pred)), len(truth)):
                best = max(best, sum(1 for j, i in enumerate(perm) if within(i, j)))
        assert matched <= best


def small_cfg():
    return PipelineConfig(max_track_radius=6)


def test_oracle_threshold_empty_truth():
    resp = GrayImage(np.full((32, 32), 0.4))
    t = oracle_threshold(resp, GroundTruth([]), small_cfg())
    assert t > 0.4  # above every response value: zero peaks survive


def test_oracle_threshold_separates_pit_from_background():
    resp = GrayImage(np.zeros((64, 64)))
    resp.pixels[20, 20] = 5.0  # pit peak
    resp.pixels[50, 50] = 1.0  # background clutter
    truth = GroundTruth([TrackTruth((20.0, 20.0), (4.0, 4.0), 0.0, 1.0)])
    t = oracle_threshold(resp, truth, small_cfg())
    assert 1.0 < t < 5.0
    assert t == pytest.approx(3.0)


def corpus_with_annotations(tmp_path, n=12, seed=500, train_fraction=0.5):
    spec = SceneSpec(frame_size=128, track_count_mean=3.0, radius_range=(4.0, 6.0),
                     noise_sigma=0.01, scratch_count_mean=0.5)
    manifest = generate_corpus(spec, n, seed, tmp_path)
    split_dataset(manifest, train_fraction, seed=1)
    cfg = small_cfg()
    store = AnnotationStore(tmp_path / "annotations.jsonl", manifest)
    for f in manifest.frames:
        if f.split != "train":
            continue
        img = imagecore.load_image(manifest.image_path(f.frame_id))
        truth = synthgen.load_truth(manifest.truth_path(f.frame_id))
        resp = pipeline.enhance(img, cfg)
        t = oracle_threshold(resp, truth, cfg)
        store.record(AnnotationRecord(f.frame_id, pipeline.average_intensity(resp), t, cfg.hash()))
    return manifest, store, cfg


def test_training_records_happy_path(tmp_path):
    manifest, store, cfg = corpus_with_annotations(tmp_path)
    records = training_records(manifest, store, cfg)
    n_train = sum(1 for f in manifest.frames if f.split == "train")
    assert len(records) == n_train
    for r in records:
        assert len(r.features) == 1 and r.features[0] > 0


def test_training_records_hash_mismatch(tmp_path):
    manifest, store, cfg = corpus_with_annotations(tmp_path)
    other = PipelineConfig(max_track_radius=6, lam=1e-2)
    with pytest.raises(StoreError, match="config_hash"):
        training_records(manifest, store, other)


def test_training_records_missing_coverage(tmp_path):
    manifest, store, cfg = corpus_with_annotations(tmp_path)
    train_ids = [f.frame_id for f in manifest.frames if f.split == "train"]
    # rebuild the store without the first training frame
    lines = (tmp_path / "annotations.jsonl").read_text().splitlines()
    kept = [ln for ln in lines if json.loads(ln)["frame_id"] != train_ids[0]]
    (tmp_path / "annotations.jsonl").write_text("\n".join(kept) + "\n")
    with pytest.raises(StoreError, match="missing annotations"):
        training_records(manifest, store, cfg)


def test_evaluate_end_to_end(tmp_path):
    manifest, store, cfg = corpus_with_annotations(tmp_path)
    report = evaluate(manifest, store, cfg, TrainConfig(epochs=2000, seed=0))
    n_test = sum(1 for f in manifest.frames if f.split == "test")
    assert report.n_test_frames == n_test
    assert report.matched + report.missed == report.total_true_tracks
    assert 0.0 <= report.track_accuracy <= 1.0
    assert report.track_accuracy >= 0.5  # easy frames, oracle annotations
    assert [r.frame_id for r in report.frames] == sorted(r.frame_id for r in report.frames)


def test_evaluate_deterministic(tmp_path):
    manifest, store, cfg = corpus_with_annotations(tmp_path, n=8)
    r1 = evaluate(manifest, store, cfg, TrainConfig(epochs=500, seed=3))
    r2 = evaluate(manifest, store, cfg, TrainConfig(epochs=500, seed=3))
    assert report_json(r1) == report_json(r2)


def test_compare_baseline_shape(tmp_path):
    manifest, store, cfg = corpus_with_annotations(tmp_path, n=8)
    comp = compare_baseline(manifest, store, cfg, TrainConfig(epochs=500, seed=0))
    n_test = sum(1 for f in manifest.frames if f.split == "test")
    assert len(comp.rows) == n_test
    assert comp.nn_better + comp.equal + comp.nn_worse == n_test
    for row in comp.rows:
        assert row.nn_count >= 0 and row.linear_count >= 0


def sample_report():
    from ntdcount.evalharness import EvalReport, FrameResult

    frames = [
        FrameResult("f0", 3, 3, 3, 0, 0, 0.125),
        FrameResult("f1", 2, 3, 2, 0, 1, 0.25),
    ]
    return EvalReport("accel0", 2, 5, 5, 0, 1, 1.0, 0.5, frames)


def test_report_json_round_trip():
    doc = json.loads(report_json(sample_report()))
    assert doc["category"] == "accel0"
    assert doc["track_accuracy"] == 1.0
    assert len(doc["frames"]) == 2


def test_report_table_contains_rows():
    text = report_table(sample_report())
    assert "f0" in text and "f1" in text
    assert "track accuracy: 1.0000" in text


def test_report_csv_parses():
    rows = list(csv.reader(io.StringIO(report_csv(sample_report()))))
    assert rows[0][0] == "frame_id"
    assert rows[1][:3] == ["f0", "3", "3"]
    assert len(rows) == 3


def test_evaluate_worker_count_invariant(tmp_path):
    manifest, store, cfg = corpus_with_annotations(tmp_path, n=8)
    r1 = evaluate(manifest, store, cfg, TrainConfig(epochs=400, seed=3), workers=1)
    r2 = evaluate(manifest, store, cfg, TrainConfig(epochs=400, seed=3), workers=4)
    assert report_json(r1) == report_json(r2)
    with pytest.raises(ValueError):
        evaluate(manifest, store, cfg, TrainConfig(epochs=400, seed=3), workers=0)
