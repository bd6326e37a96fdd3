"""Corpus manifests, train/test splits, and annotation persistence.

Storage is plain files: manifest.json plus annotations.jsonl with one record
per line. Annotation writes append; reads keep the last record per
(frame_id, config_hash), so the file behaves as an upsert log.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .synthgen import ManifestFrame


class StoreError(Exception):
    pass


@dataclass
class DatasetManifest:
    corpus_id: str
    category: str
    frames: list[ManifestFrame]
    spec_echo: dict | None = None
    root: str = "."  # directory image/truth paths are relative to

    def __post_init__(self):
        ids = [f.frame_id for f in self.frames]
        if len(ids) != len(set(ids)):
            raise StoreError("duplicate frame_ids in manifest")

    def frame(self, frame_id: str) -> ManifestFrame:
        for f in self.frames:
            if f.frame_id == frame_id:
                return f
        raise StoreError(f"unknown frame {frame_id!r}")

    def image_path(self, frame_id: str) -> Path:
        return Path(self.root) / self.frame(frame_id).image_path

    def truth_path(self, frame_id: str) -> Path:
        return Path(self.root) / self.frame(frame_id).truth_path


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "corpus_id": manifest.corpus_id,
        "category": manifest.category,
        "frames": [
            {
                "frame_id": f.frame_id,
                "image_path": f.image_path,
                "truth_path": f.truth_path,
                "split": f.split,
            }
            for f in manifest.frames
        ],
        "spec_echo": manifest.spec_echo,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise StoreError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StoreError(f"{path}: malformed manifest ({exc})") from exc
    manifest = DatasetManifest(
        corpus_id=doc["corpus_id"],
        category=doc["category"],
        frames=[
            ManifestFrame(f["frame_id"], f["image_path"], f["truth_path"], f["split"])
            for f in doc["frames"]
        ],
        spec_echo=doc.get("spec_echo"),
        root=str(path.parent),
    )
    for f in manifest.frames:
        if not manifest.image_path(f.frame_id).exists():
            raise StoreError(f"missing image file for frame {f.frame_id}")
        if not manifest.truth_path(f.frame_id).exists():
            raise StoreError(f"missing truth file for frame {f.frame_id}")
    return manifest


def split_dataset(manifest: DatasetManifest, train_fraction: float, seed: int) -> DatasetManifest:
    """Seeded shuffle; floor(n*train_fraction) frames become train, rest test."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    if not manifest.frames:
        raise StoreError("empty manifest")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(manifest.frames))
    n_train = math.floor(len(manifest.frames) * train_fraction)
    train_idx = set(order[:n_train].tolist())
    for i, f in enumerate(manifest.frames):
        f.split = "train" if i in train_idx else "test"
    return manifest


@dataclass
class AnnotationRecord:
    frame_id: str
    average_intensity: float
    manual_threshold: float
    config_hash: str
    annotated_at: str = ""
    split: str = "unassigned"  # joined from the manifest on load

    def __post_init__(self):
        if self.average_intensity < 0:
            raise StoreError("average_intensity must be >= 0")
        if not self.annotated_at:
            self.annotated_at = datetime.now(timezone.utc).isoformat()


class AnnotationStore:
    """Append-only JSON-lines file; last record per (frame_id, config_hash) wins."""

    def __init__(self, path, manifest: DatasetManifest):
        self.path = Path(path)
        self.manifest = manifest

    def record(self, rec: AnnotationRecord) -> None:
        self.manifest.frame(rec.frame_id)  # raises on unknown frame
        line = json.dumps(
            {
                "frame_id": rec.frame_id,
                "average_intensity": rec.average_intensity,
                "manual_threshold": rec.manual_threshold,
                "annotated_at": rec.annotated_at,
                "config_hash": rec.config_hash,
            }
        )
        with open(self.path, "a") as fh:
            fh.write(line + "\n")

    def load(self) -> list[AnnotationRecord]:
        """All annotations, deduplicated to the newest per key, joined with
        manifest split labels, ordered by frame_id."""
        if not self.path.exists():
            return []
        latest: dict[tuple[str, str], AnnotationRecord] = {}
        with open(self.path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    d = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise StoreError(f"{self.path}: malformed record ({exc})") from exc
                rec = AnnotationRecord(
                    frame_id=d["frame_id"],
                    average_intensity=d["average_intensity"],
                    manual_threshold=d["manual_threshold"],
                    config_hash=d["config_hash"],
                    annotated_at=d["annotated_at"],
                )
                latest[(rec.frame_id, rec.config_hash)] = rec
        records = sorted(latest.values(), key=lambda r: r.frame_id)
        by_id = {f.frame_id: f.split for f in self.manifest.frames}
        for rec in records:
            rec.split = by_id.get(rec.frame_id, "unassigned")
        return records

    def annotated_ids(self) -> set:
        return {r.frame_id for r in self.load()}
