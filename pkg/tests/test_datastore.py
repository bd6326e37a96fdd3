import json

import pytest

from ntdcount.datastore import (
    AnnotationRecord,
    AnnotationStore,
    DatasetManifest,
    StoreError,
    load_manifest,
    save_manifest,
    split_dataset,
)
from ntdcount.synthgen import ManifestFrame, SceneSpec, generate_corpus


def toy_manifest(n=6):
    frames = [ManifestFrame(f"f{i:02d}", f"f{i:02d}.pgm", f"f{i:02d}.truth.json") for i in range(n)]
    return DatasetManifest("toy", "accel0", frames)


def test_manifest_rejects_duplicate_ids():
    frames = [ManifestFrame("a", "a.pgm", "a.json"), ManifestFrame("a", "b.pgm", "b.json")]
    with pytest.raises(StoreError, match="duplicate"):
        DatasetManifest("c", "accel0", frames)


def test_manifest_unknown_frame():
    with pytest.raises(StoreError, match="unknown"):
        toy_manifest().frame("nope")


def test_manifest_round_trip(tmp_path):
    spec = SceneSpec(frame_size=96, track_count_mean=1.0, noise_sigma=0.0,
                     radius_range=(3.0, 6.0))
    generate_corpus(spec, 3, 42, tmp_path)
    loaded = load_manifest(tmp_path / "manifest.json")
    assert len(loaded.frames) == 3
    assert loaded.root == str(tmp_path)
    for f in loaded.frames:
        assert loaded.image_path(f.frame_id).exists()
        assert loaded.truth_path(f.frame_id).exists()


def test_load_manifest_missing_image(tmp_path):
    spec = SceneSpec(frame_size=96, track_count_mean=1.0, radius_range=(3.0, 6.0))
    manifest = generate_corpus(spec, 2, 7, tmp_path)
    (tmp_path / manifest.frames[0].image_path).unlink()
    with pytest.raises(StoreError, match="missing image"):
        load_manifest(tmp_path / "manifest.json")


def test_load_manifest_malformed(tmp_path):
    p = tmp_path / "manifest.json"
    p.write_text("{not json")
    with pytest.raises(StoreError, match="malformed"):
        load_manifest(p)


def test_split_sizes_floor():
    m = split_dataset(toy_manifest(6), 0.75, seed=1)
    labels = [f.split for f in m.frames]
    assert labels.count("train") == 4  # floor(6 * 0.75)
    assert labels.count("test") == 2


def test_split_deterministic_and_seed_sensitive():
    l1 = [f.split for f in split_dataset(toy_manifest(10), 0.5, seed=3).frames]
    l2 = [f.split for f in split_dataset(toy_manifest(10), 0.5, seed=3).frames]
    assert l1 == l2
    seen = {tuple([f.split for f in split_dataset(toy_manifest(10), 0.5, seed=s).frames])
            for s in range(8)}
    assert len(seen) > 1


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        split_dataset(toy_manifest(), 0.0, seed=1)
    with pytest.raises(ValueError):
        split_dataset(toy_manifest(), 1.0, seed=1)


def test_split_persists_through_save(tmp_path):
    spec = SceneSpec(frame_size=96, track_count_mean=1.0, radius_range=(3.0, 6.0))
    manifest = generate_corpus(spec, 4, 11, tmp_path)
    split_dataset(manifest, 0.5, seed=2)
    save_manifest(manifest, tmp_path / "manifest.json")
    loaded = load_manifest(tmp_path / "manifest.json")
    assert [f.split for f in loaded.frames] == [f.split for f in manifest.frames]


def rec(frame_id, t, cfg="abc123", mu=0.5):
    return AnnotationRecord(frame_id, mu, t, cfg)


def test_annotation_record_validates():
    with pytest.raises(StoreError):
        AnnotationRecord("a", -0.1, 1.0, "h")
    r = rec("a", 1.0)
    assert r.annotated_at  # timestamp auto-filled


def test_store_append_and_load(tmp_path):
    m = toy_manifest(3)
    store = AnnotationStore(tmp_path / "a.jsonl", m)
    store.record(rec("f00", 0.1))
    store.record(rec("f02", 0.3))
    records = store.load()
    assert [r.frame_id for r in records] == ["f00", "f02"]
    assert store.annotated_ids() == {"f00", "f02"}


def test_store_upsert_last_wins(tmp_path):
    m = toy_manifest(3)
    store = AnnotationStore(tmp_path / "a.jsonl", m)
    store.record(rec("f01", 0.1))
    store.record(rec("f01", 0.9))
    records = store.load()
    assert len(records) == 1
    assert records[0].manual_threshold == 0.9
    # the log still holds both lines; only the read view deduplicates
    assert len((tmp_path / "a.jsonl").read_text().splitlines()) == 2


def test_store_keys_on_config_hash(tmp_path):
    m = toy_manifest(3)
    store = AnnotationStore(tmp_path / "a.jsonl", m)
    store.record(rec("f01", 0.1, cfg="aaa"))
    store.record(rec("f01", 0.2, cfg="bbb"))
    assert len(store.load()) == 2


def test_store_joins_split_labels(tmp_path):
    m = split_dataset(toy_manifest(4), 0.5, seed=1)
    store = AnnotationStore(tmp_path / "a.jsonl", m)
    for f in m.frames:
        store.record(rec(f.frame_id, 0.5))
    by_id = {f.frame_id: f.split for f in m.frames}
    for r in store.load():
        assert r.split == by_id[r.frame_id]


def test_store_rejects_unknown_frame(tmp_path):
    store = AnnotationStore(tmp_path / "a.jsonl", toy_manifest(2))
    with pytest.raises(StoreError, match="unknown"):
        store.record(rec("zz", 0.5))


def test_store_missing_file_is_empty(tmp_path):
    store = AnnotationStore(tmp_path / "none.jsonl", toy_manifest(2))
    assert store.load() == []


def test_store_malformed_line(tmp_path):
    p = tmp_path / "a.jsonl"
    p.write_text('{"frame_id": "f00"\n')
    store = AnnotationStore(p, toy_manifest(2))
    with pytest.raises(StoreError, match="malformed"):
        store.load()
