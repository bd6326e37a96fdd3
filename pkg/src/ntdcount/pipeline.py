"""Core enhancement operator: invert polarity, deconvolve with a Gaussian,
convolve with a disk, threshold, and count isolated peaks morphologically.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import fourier
from .fourier import MaskSpec
from .imagecore import GrayImage


@dataclass
class PipelineConfig:
    """Mask geometry and peak-counting parameters, derived from the biggest
    track radius expected in the corpus."""

    max_track_radius: int
    sigma_factor: float = 0.5
    disk_factor: float = 1.0
    mask_size: int = 0  # 0 -> 4*max_track_radius + 1
    lam: float = 1e-3
    min_peak_area: float = 0.0  # 0 -> 0.25 * pi * disk_radius^2
    connectivity: int = 8

    def __post_init__(self):
        if self.max_track_radius < 1:
            raise ValueError("max_track_radius must be >= 1")
        if self.sigma_factor <= 0 or self.disk_factor <= 0:
            raise ValueError("sigma_factor and disk_factor must be > 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.mask_size == 0:
            self.mask_size = 4 * self.max_track_radius + 1
        if self.mask_size % 2 == 0:
            raise ValueError("mask_size must be odd")
        if self.mask_size < 2 * self.disk_radius + 1:
            raise ValueError("mask_size must be >= 2*disk_radius + 1")
        if self.min_peak_area == 0.0:
            self.min_peak_area = 0.25 * np.pi * self.disk_radius**2

    @property
    def sigma(self) -> float:
        return self.sigma_factor * self.max_track_radius

    @property
    def disk_radius(self) -> float:
        return self.disk_factor * self.max_track_radius

    def gaussian_mask(self) -> GrayImage:
        return fourier.make_mask(MaskSpec("gaussian", self.mask_size, sigma=self.sigma))

    def disk_mask(self) -> GrayImage:
        return fourier.make_mask(MaskSpec("disk", self.mask_size, radius=self.disk_radius))

    def to_dict(self) -> dict:
        return {
            "max_track_radius": self.max_track_radius,
            "sigma_factor": self.sigma_factor,
            "disk_factor": self.disk_factor,
            "mask_size": self.mask_size,
            "lambda": self.lam,
            "min_peak_area": self.min_peak_area,
            "connectivity": self.connectivity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(
            max_track_radius=d["max_track_radius"],
            sigma_factor=d.get("sigma_factor", 0.5),
            disk_factor=d.get("disk_factor", 1.0),
            mask_size=d.get("mask_size", 0),
            lam=d.get("lambda", 1e-3),
            min_peak_area=d.get("min_peak_area", 0.0),
            connectivity=d.get("connectivity", 8),
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class Peak:
    centroid: tuple[float, float]  # (row, col), intensity-weighted
    area: int
    bbox: tuple[int, int, int, int]  # (top, left, bottom, right) inclusive
    max_response: float


@dataclass
class PeakReport:
    peaks: list[Peak] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.peaks)


def enhance(img: GrayImage, cfg: PipelineConfig, clamp: bool = True) -> GrayImage:
    """Deconvolve the inverted frame with the Gaussian mask, convolve with the
    disk mask, clamp negatives. Dark pits become positive response peaks."""
    inverted = GrayImage(1.0 - img.pixels)
    decon = fourier.deconvolve(inverted, cfg.gaussian_mask(), cfg.lam)
    resp = fourier.convolve(decon, cfg.disk_mask())
    out = resp.pixels
    if clamp:
        out = np.maximum(out, 0.0)
    return GrayImage(out)


def average_intensity(resp: GrayImage) -> float:
    if resp.pixels.size == 0:
        raise ValueError("empty response map")
    return float(resp.pixels.mean())


def apply_threshold(resp: GrayImage, t: float) -> np.ndarray:
    """Boolean foreground map: pixel true iff response strictly exceeds t."""
    if not np.isfinite(t):
        raise ValueError("threshold must be finite")
    return resp.pixels > t


_STRUCT4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT8 = np.ones((3, 3), dtype=bool)


def count_peaks(binary: np.ndarray, cfg: PipelineConfig, resp: GrayImage) -> PeakReport:
    """Connected-component labeling with small components discarded.

    Centroids are intensity-weighted over the response map; peaks are sorted
    by (centroid row, then column).
    """
    if binary.shape != resp.pixels.shape:
        raise ValueError("binary map and response map dimensions differ")
    struct = _STRUCT8 if cfg.connectivity == 8 else _STRUCT4
    labels, n = ndimage.label(binary, structure=struct)
    peaks = []
    for sl_idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        mask = labels[sl] == sl_idx
        area = int(mask.sum())
        if area < cfg.min_peak_area:
            continue
        sub = resp.pixels[sl]
        weights = np.where(mask, sub, 0.0)
        total = weights.sum()
        rr, cc = np.mgrid[sl[0].start : sl[0].stop, sl[1].start : sl[1].stop]
        if total > 0:
            crow = float((weights * rr).sum() / total)
            ccol = float((weights * cc).sum() / total)
        else:  # flat-zero component: fall back to unweighted centroid
            crow = float(rr[mask].mean())
            ccol = float(cc[mask].mean())
        bbox = (sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1)
        peaks.append(Peak((crow, ccol), area, bbox, float(sub[mask].max())))
    peaks.sort(key=lambda p: p.centroid)
    return PeakReport(peaks)


def analyze_frame(img: GrayImage, cfg: PipelineConfig, model):
    """Full per-frame run: enhance, predict threshold from the average
    brightness feature, threshold, count. Returns (report, resp, threshold)."""
    from . import neural

    resp = enhance(img, cfg)
    threshold = neural.mlp_predict(model, [average_intensity(resp)])
    report = count_peaks(apply_threshold(resp, threshold), cfg, resp)
    return report, resp, threshold
