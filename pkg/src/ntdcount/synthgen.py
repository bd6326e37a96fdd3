"""Deterministic generator of synthetic NTD-like frames with ground truth.

Frames are bright-background with an illumination gradient and Gaussian
noise; etch pits are dark filled ellipses with a soft 1-pixel edge;
scratches are thin dark anti-aliased line segments. Everything is driven by
numpy's PCG64 generator seeded per frame, so (spec, seed) gives bit-identical
output across runs and platforms.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import imagecore
from .imagecore import GrayImage

CATEGORIES = ("accel0", "accel30", "field")

BACKGROUND = 0.8


@dataclass
class SceneSpec:
    frame_size: int = 512
    category: str = "accel0"
    track_count_mean: float = 8.0
    radius_range: tuple[float, float] = (4.0, 8.0)
    eccentricity: float = 0.0
    pit_contrast: float = 0.6
    noise_sigma: float = 0.02
    scratch_count_mean: float = 0.0
    gradient_amplitude: float = 0.0
    border_partial_fraction: float = 0.0
    artifact_count_mean: float = 0.0  # soft bright blob defects
    scratch_width_max: float = 2.0
    scratch_depth_max: float = 0.6  # fraction of pit_contrast

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        r_min, r_max = self.radius_range
        if r_min < 2:
            raise ValueError("r_min must be >= 2")
        if r_max < r_min:
            raise ValueError("r_max must be >= r_min")
        if self.frame_size <= 4 * r_max:
            raise ValueError("frame_size must exceed 4*r_max")
        if not 0 <= self.eccentricity < 1:
            raise ValueError("eccentricity must be in [0, 1)")
        if not 0 < self.pit_contrast <= 1:
            raise ValueError("pit_contrast must be in (0, 1]")
        if self.noise_sigma < 0 or self.scratch_count_mean < 0:
            raise ValueError("noise_sigma and scratch_count_mean must be >= 0")
        if self.gradient_amplitude < 0 or self.artifact_count_mean < 0:
            raise ValueError("gradient_amplitude and artifact_count_mean must be >= 0")
        if not 0 <= self.border_partial_fraction <= 1:
            raise ValueError("border_partial_fraction must be in [0, 1]")
        if self.scratch_width_max < 1.0:
            raise ValueError("scratch_width_max must be >= 1")
        if not 0.3 <= self.scratch_depth_max <= 1.0:
            raise ValueError("scratch_depth_max must be in [0.3, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["radius_range"] = list(self.radius_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["radius_range"] = tuple(d["radius_range"])
        return cls(**d)


@dataclass
class TrackTruth:
    centroid: tuple[float, float]  # (row, col)
    semi_axes: tuple[float, float]  # (a, b), a >= b
    rotation: float
    visible_fraction: float


@dataclass
class GroundTruth:
    tracks: list[TrackTruth] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tracks": [
                {
                    "centroid": list(t.centroid),
                    "semi_axes": list(t.semi_axes),
                    "rotation": t.rotation,
                    "visible_fraction": t.visible_fraction,
                }
                for t in self.tracks
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            [
                TrackTruth(
                    centroid=tuple(t["centroid"]),
                    semi_axes=tuple(t["semi_axes"]),
                    rotation=t["rotation"],
                    visible_fraction=t["visible_fraction"],
                )
                for t in d["tracks"]
            ]
        )


def _track_eccentricity(spec: SceneSpec, rng: np.random.Generator) -> float:
    if spec.category == "accel0":
        return 0.0
    if spec.category == "accel30":
        return spec.eccentricity
    # field: mix of near-circular and oblique pits
    return float(rng.uniform(0.0, spec.eccentricity))


def _paint_ellipse(pixels, crow, ccol, a, b, rot, depth):
    """Subtract a soft-edged filled ellipse; returns the visible pixel count
    and the total (unclipped) pixel count."""
    h, w = pixels.shape
    pad = max(a, b) + 1.5
    r0, r1 = int(math.floor(crow - pad)), int(math.ceil(crow + pad)) + 1
    c0, c1 = int(math.floor(ccol - pad)), int(math.ceil(ccol + pad)) + 1
    rr, cc = np.mgrid[r0:r1, c0:c1]
    dr, dc = rr - crow, cc - ccol
    cos_t, sin_t = math.cos(rot), math.sin(rot)
    u = dr * cos_t + dc * sin_t
    v = -dr * sin_t + dc * cos_t
    # signed distance proxy to the ellipse boundary, ~pixels near the edge
    rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    edge = min(a, b)
    coverage = np.clip((1.0 - rho) * edge + 0.5, 0.0, 1.0)  # soft 1-px edge
    valid = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
    pixels[rr[valid], cc[valid]] -= depth * coverage[valid]
    total = float((coverage > 0.5).sum())
    visible = float(((coverage > 0.5) & valid).sum())
    return visible, total


def _paint_segment(pixels, p0, p1, width, depth):
    """Dark anti-aliased line segment of the given width."""
    h, w = pixels.shape
    r0 = int(max(0, math.floor(min(p0[0], p1[0]) - width - 1)))
    r1 = int(min(h, math.ceil(max(p0[0], p1[0]) + width + 2)))
    c0 = int(max(0, math.floor(min(p0[1], p1[1]) - width - 1)))
    c1 = int(min(w, math.ceil(max(p0[1], p1[1]) + width + 2)))
    if r1 <= r0 or c1 <= c0:
        return
    rr, cc = np.mgrid[r0:r1, c0:c1]
    dr, dc = p1[0] - p0[0], p1[1] - p0[1]
    length2 = dr * dr + dc * dc
    if length2 == 0:
        return
    t = np.clip(((rr - p0[0]) * dr + (cc - p0[1]) * dc) / length2, 0.0, 1.0)
    dist = np.hypot(rr - (p0[0] + t * dr), cc - (p0[1] + t * dc))
    coverage = np.clip(width / 2 + 0.5 - dist, 0.0, 1.0)
    pixels[r0:r1, c0:c1] -= depth * coverage


def _paint_blob(pixels, crow, ccol, radius, brightness):
    """Soft bright Gaussian blob (surface-defect artifact).

    Bright defects invert to near-zero in the response domain, depressing the
    frame's average response instead of adding peaks.
    """
    h, w = pixels.shape
    pad = 3 * radius
    r0 = int(max(0, math.floor(crow - pad)))
    r1 = int(min(h, math.ceil(crow + pad) + 1))
    c0 = int(max(0, math.floor(ccol - pad)))
    c1 = int(min(w, math.ceil(ccol + pad) + 1))
    if r1 <= r0 or c1 <= c0:
        return
    rr, cc = np.mgrid[r0:r1, c0:c1]
    g = np.exp(-((rr - crow) ** 2 + (cc - ccol) ** 2) / (2 * radius**2))
    pixels[r0:r1, c0:c1] += brightness * g


def generate_frame(spec: SceneSpec, seed: int) -> tuple[GrayImage, GroundTruth]:
    rng = np.random.Generator(np.random.PCG64(seed))
    n = spec.frame_size
    pixels = np.full((n, n), BACKGROUND, dtype=np.float64)

    # illumination gradient: a tilted plane in a random direction
    angle = rng.uniform(0, 2 * math.pi)
    if spec.gradient_amplitude > 0:
        ramp = (np.arange(n) / n - 0.5)[:, None] * math.cos(angle) + (
            np.arange(n) / n - 0.5
        )[None, :] * math.sin(angle)
        pixels += spec.gradient_amplitude * ramp

    r_min, r_max = spec.radius_range
    count = int(rng.poisson(spec.track_count_mean))
    tracks: list[TrackTruth] = []
    placed: list[tuple[float, float]] = []
    min_sep = 2.0 * r_max + 2.0
    for _ in range(count):
        a = float(rng.uniform(r_min, r_max))
        ecc = _track_eccentricity(spec, rng)
        b = a * math.sqrt(1.0 - ecc**2)
        rot = float(rng.uniform(0, math.pi))
        on_border = rng.uniform() < spec.border_partial_fraction
        centroid = None
        for _attempt in range(50):
            if on_border:
                side = int(rng.integers(4))
                along = float(rng.uniform(r_max, n - r_max))
                off = float(rng.uniform(-a * 0.5, a * 0.5))
                pos = {
                    0: (off, along),
                    1: (n - 1 + off, along),
                    2: (along, off),
                    3: (along, n - 1 + off),
                }[side]
            else:
                pos = (
                    float(rng.uniform(r_max + 1, n - r_max - 1)),
                    float(rng.uniform(r_max + 1, n - r_max - 1)),
                )
            if all(math.hypot(pos[0] - p[0], pos[1] - p[1]) >= min_sep for p in placed):
                centroid = pos
                break
        if centroid is None:
            continue  # frame too crowded; realized count shrinks
        visible, total = _paint_ellipse(
            pixels, centroid[0], centroid[1], a, b, rot, spec.pit_contrast
        )
        if total == 0 or visible == 0:
            continue
        placed.append(centroid)
        tracks.append(
            TrackTruth(
                centroid=centroid,
                semi_axes=(a, b),
                rotation=rot,
                visible_fraction=min(1.0, visible / total),
            )
        )

    n_scratch = int(rng.poisson(spec.scratch_count_mean))
    for _ in range(n_scratch):
        p0 = (float(rng.uniform(0, n)), float(rng.uniform(0, n)))
        length = float(rng.uniform(0.2 * n, 0.8 * n))
        ang = float(rng.uniform(0, 2 * math.pi))
        p1 = (p0[0] + length * math.sin(ang), p0[1] + length * math.cos(ang))
        width = float(rng.uniform(1.0, spec.scratch_width_max))
        depth = float(rng.uniform(0.3, spec.scratch_depth_max)) * spec.pit_contrast
        _paint_segment(pixels, p0, p1, width, depth)

    n_blob = int(rng.poisson(spec.artifact_count_mean))
    for _ in range(n_blob):
        radius = float(rng.uniform(1.5 * r_max, 3.0 * r_max))
        brightness = float(rng.uniform(0.5, 1.0)) * (1.0 - BACKGROUND)
        # keep bright defects off the pits so every truth track stays visible
        for _ in range(50):
            crow = float(rng.uniform(0, n))
            ccol = float(rng.uniform(0, n))
            if all(
                math.hypot(crow - t.centroid[0], ccol - t.centroid[1]) > radius + 2 * r_max
                for t in tracks
            ):
                break
        else:
            continue
        _paint_blob(pixels, crow, ccol, radius, brightness)

    if spec.noise_sigma > 0:
        pixels += rng.normal(0.0, spec.noise_sigma, (n, n))

    np.clip(pixels, 0.0, 1.0, out=pixels)
    return GrayImage(pixels), GroundTruth(tracks)


@dataclass
class ManifestFrame:
    frame_id: str
    image_path: str
    truth_path: str
    split: str = "unassigned"


def generate_corpus(
    spec: SceneSpec, count: int, base_seed: int, out_dir, corpus_id: str | None = None,
    workers: int | None = None,
):
    """Write `count` frames + truth sidecars + manifest.json under out_dir.

    Frame seeds are base_seed + index. Frames are independent, so rendering
    fans out over `workers` threads (default: available parallelism); files
    are written in index order, keeping the output byte-identical regardless
    of worker count. Returns the manifest (see datastore).
    """
    from concurrent.futures import ThreadPoolExecutor

    from .datastore import DatasetManifest, save_manifest

    if count <= 0:
        raise ValueError("count must be > 0")
    if workers is not None and workers < 1:
        raise ValueError("workers must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=workers or os.cpu_count() or 1) as pool:
        rendered = list(pool.map(lambda i: generate_frame(spec, base_seed + i), range(count)))
    frames = []
    for i, (img, truth) in enumerate(rendered):
        frame_id = f"{spec.category}_{i:04d}"
        image_path = f"{frame_id}.pgm"
        truth_path = f"{frame_id}.truth.json"
        imagecore.save_image(img, out / image_path)
        with open(out / truth_path, "w") as fh:
            json.dump(truth.to_dict(), fh, indent=2)
        frames.append(ManifestFrame(frame_id, image_path, truth_path))
    manifest = DatasetManifest(
        corpus_id=corpus_id or f"{spec.category}-{base_seed}",
        category=spec.category,
        frames=frames,
        spec_echo=spec.to_dict(),
        root=str(out),
    )
    save_manifest(manifest, out / "manifest.json")
    return manifest


def load_truth(path) -> GroundTruth:
    with open(path) as fh:
        return GroundTruth.from_dict(json.load(fh))
