"""Grayscale image container, PGM/PNG I/O, and count-overlay rendering.

Pixels are float64 everywhere; 8-bit quantization happens only at the file
boundary. Frames loaded from disk land in [0, 1]; response maps produced
downstream may exceed 1 but must stay finite.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PilImage


class ImageIOError(Exception):
    """Raised for unreadable, malformed, or unsupported image files."""


@dataclass
class GrayImage:
    """Real-valued 2D raster. `pixels` is a (height, width) float64 array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected 2D pixel array, got shape {arr.shape}")
        self.pixels = arr

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "GrayImage":
        return GrayImage(self.pixels.copy())


@dataclass
class OverlayStyle:
    """Appearance of peak markers drawn by render_overlay."""

    intensity: float = 1.0
    marker_radius: int = 6

    def __post_init__(self):
        if self.marker_radius < 1:
            raise ValueError("marker_radius must be >= 1")


# 5x7 bitmap digit glyphs, one string per row, '#' = lit pixel.
DIGIT_GLYPHS = {
    "0": [" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "],
    "1": ["  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "],
    "2": [" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"],
    "3": [" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "],
    "4": ["   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "],
    "5": ["#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "],
    "6": [" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "],
    "7": ["#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "],
    "8": [" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "],
    "9": [" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "],
}
GLYPH_H, GLYPH_W = 7, 5


def _check_finite(pixels: np.ndarray, what: str):
    if not np.all(np.isfinite(pixels)):
        raise ValueError(f"{what} contains non-finite pixels")


def load_image(path) -> GrayImage:
    """Load an 8-bit grayscale PGM (binary P5) or 8-bit PNG, normalized to [0,1].

    RGB PNGs are converted by averaging the channels.
    """
    path = str(path)
    if path.lower().endswith(".pgm"):
        return _load_pgm(path)
    if path.lower().endswith(".png"):
        return _load_png(path)
    raise ImageIOError(f"{path}: unsupported extension (expected .pgm or .png)")


def _load_pgm(path: str) -> GrayImage:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc}") from exc

    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, single whitespace byte before pixel data.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise ImageIOError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    pos += 1  # single whitespace after maxval

    if tokens[0] != b"P5":
        raise ImageIOError(f"{path}: malformed header (not binary P5)")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ImageIOError(f"{path}: malformed header ({exc})") from exc
    if width <= 0 or height <= 0:
        raise ImageIOError(f"{path}: malformed header (non-positive dimensions)")
    if maxval != 255:
        raise ImageIOError(f"{path}: unsupported bit depth (maxval {maxval})")

    raw = data[pos : pos + width * height]
    if len(raw) != width * height:
        raise ImageIOError(f"{path}: truncated pixel data")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    return GrayImage(arr.astype(np.float64) / 255.0)


def _load_png(path: str) -> GrayImage:
    try:
        img = PilImage.open(path)
        img.load()
    except FileNotFoundError as exc:
        raise ImageIOError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ImageIOError(f"{path}: malformed PNG ({exc})") from exc

    if img.mode == "L":
        arr = np.asarray(img, dtype=np.float64)
    elif img.mode in ("RGB", "RGBA"):
        arr = np.asarray(img.convert("RGB"), dtype=np.float64).mean(axis=2)
    else:
        raise ImageIOError(f"{path}: unsupported bit depth (PNG mode {img.mode})")
    return GrayImage(arr / 255.0)


def save_image(img: GrayImage, path) -> None:
    """Clamp to [0,1], quantize to 8-bit, write as PGM or PNG by extension."""
    _check_finite(img.pixels, "image")
    path = str(path)
    quantized = np.rint(np.clip(img.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    try:
        if path.lower().endswith(".pgm"):
            header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
            with open(path, "wb") as fh:
                fh.write(header)
                fh.write(quantized.tobytes())
        elif path.lower().endswith(".png"):
            PilImage.fromarray(quantized, mode="L").save(path, format="PNG")
        else:
            raise ImageIOError(f"{path}: unsupported extension (expected .pgm or .png)")
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot write ({exc})") from exc


def encode_png(img: GrayImage) -> bytes:
    """8-bit PNG encoding of a clamped image, as bytes."""
    _check_finite(img.pixels, "image")
    quantized = np.rint(np.clip(img.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    PilImage.fromarray(quantized, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _draw_glyph(pixels: np.ndarray, glyph, top: int, left: int, value: float):
    h, w = pixels.shape
    for r, row in enumerate(glyph):
        for c, ch in enumerate(row):
            if ch == "#":
                rr, cc = top + r, left + c
                if 0 <= rr < h and 0 <= cc < w:
                    pixels[rr, cc] = value


def render_overlay(img: GrayImage, report, style: OverlayStyle | None = None) -> GrayImage:
    """Copy of `img` with a ring and 1-based ordinal at each peak centroid.

    Ordinals follow the report's peak order (sorted by centroid row, then
    column). Glyph or ring pixels falling outside the frame are dropped.
    """
    style = style or OverlayStyle()
    out = img.copy()
    pixels = out.pixels
    h, w = pixels.shape
    for i, peak in enumerate(report.peaks):
        crow, ccol = peak.centroid
        radius = style.marker_radius
        r0 = max(0, int(np.floor(crow - radius - 1)))
        r1 = min(h, int(np.ceil(crow + radius + 2)))
        c0 = max(0, int(np.floor(ccol - radius - 1)))
        c1 = min(w, int(np.ceil(ccol + radius + 2)))
        if r1 > r0 and c1 > c0:
            rr, cc = np.mgrid[r0:r1, c0:c1]
            dist = np.hypot(rr - crow, cc - ccol)
            ring = np.abs(dist - radius) <= 0.6
            pixels[r0:r1, c0:c1][ring] = style.intensity
        top = int(round(crow)) - GLYPH_H // 2
        left = int(round(ccol)) + radius + 2
        for digit in str(i + 1):
            _draw_glyph(pixels, DIGIT_GLYPHS[digit], top, left, style.intensity)
            left += GLYPH_W + 1
    return out
