"""2D spectral engine: FFT pair, mask construction, linear convolution, and
Tikhonov-regularized deconvolution.

Convention: unnormalized forward transform, 1/(W*H) inverse (numpy's default).
All transforms run on a zero-padded power-of-two grid; convolution is linear
(not circular) with a centered "same" crop, and deconvolution inverts that
centering so the two operations round-trip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import GrayImage


@dataclass
class Spectrum:
    """Complex transform values on a power-of-two grid, plus the original size."""

    values: np.ndarray
    orig_height: int
    orig_width: int

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class MaskSpec:
    """Gaussian or binary-disk mask, odd-sized and centered."""

    kind: str  # "gaussian" | "disk"
    size: int
    sigma: float = 0.0
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "disk"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.size % 2 == 0:
            raise ValueError("mask size must be odd")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian mask needs sigma > 0")
        if self.kind == "disk" and not (0 < self.radius <= (self.size - 1) / 2):
            raise ValueError("disk radius must be in (0, (size-1)/2]")


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def fft2(img: GrayImage) -> Spectrum:
    """Forward transform, zero-padded to the next power of two per axis."""
    h, w = img.pixels.shape
    ph, pw = _next_pow2(h), _next_pow2(w)
    padded = np.zeros((ph, pw), dtype=np.float64)
    padded[:h, :w] = img.pixels
    return Spectrum(np.fft.fft2(padded), h, w)


def ifft2(spec: Spectrum) -> GrayImage:
    """Inverse transform, cropped back to the original (pre-padding) size."""
    full = np.fft.ifft2(spec.values)
    return GrayImage(full.real[: spec.orig_height, : spec.orig_width])


def make_mask(spec: MaskSpec) -> GrayImage:
    """Centered Gaussian (unit sum) or binary disk (values 0/1, unnormalized)."""
    c = (spec.size - 1) / 2
    yy, xx = np.mgrid[0 : spec.size, 0 : spec.size]
    if spec.kind == "gaussian":
        g = np.exp(-((xx - c) ** 2 + (yy - c) ** 2) / (2.0 * spec.sigma**2))
        return GrayImage(g / g.sum())
    dist2 = (xx - c) ** 2 + (yy - c) ** 2
    return GrayImage((dist2 <= spec.radius**2).astype(np.float64))


def _mask_center(shape) -> tuple[int, int]:
    return (shape[0] - 1) // 2, (shape[1] - 1) // 2


def _padded_product_grid(a_shape, b_shape) -> tuple[int, int]:
    return (
        _next_pow2(a_shape[0] + b_shape[0] - 1),
        _next_pow2(a_shape[1] + b_shape[1] - 1),
    )


def _embed(arr: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=np.float64)
    out[: arr.shape[0], : arr.shape[1]] = arr
    return out


def convolve(a: GrayImage, b: GrayImage) -> GrayImage:
    """Linear (zero-padded) convolution of `a` with mask `b`, "same" crop.

    The full (Ha+Hb-1)-sized result is computed spectrally and cropped to
    `a`'s size, centered at `b`'s mask center. Real part returned; the
    imaginary residue is asserted small.
    """
    ha, wa = a.pixels.shape
    hb, wb = b.pixels.shape
    if hb > ha or wb > wa:
        raise ValueError(f"mask ({hb}x{wb}) larger than image ({ha}x{wa})")
    grid = _padded_product_grid(a.pixels.shape, b.pixels.shape)
    fa = np.fft.fft2(_embed(a.pixels, grid))
    fb = np.fft.fft2(_embed(b.pixels, grid))
    full = np.fft.ifft2(fa * fb)
    residue = np.max(np.abs(full.imag))
    if residue > 1e-9:
        raise AssertionError(f"imaginary residue {residue} exceeds 1e-9")
    cr, cc = _mask_center(b.pixels.shape)
    return GrayImage(full.real[cr : cr + ha, cc : cc + wa])


def convolve_full(a: GrayImage, b: GrayImage) -> GrayImage:
    """Full (Ha+Hb-1)-sized linear convolution, uncropped."""
    ha, wa = a.pixels.shape
    hb, wb = b.pixels.shape
    grid = _padded_product_grid(a.pixels.shape, b.pixels.shape)
    fa = np.fft.fft2(_embed(a.pixels, grid))
    fb = np.fft.fft2(_embed(b.pixels, grid))
    full = np.fft.ifft2(fa * fb)
    return GrayImage(full.real[: ha + hb - 1, : wa + wb - 1])


# Above this pixel count the dense solver's memory/flops stop being worth it
# and the circulant approximation takes over.
_DENSE_LIMIT = 1600


def deconvolve(f: GrayImage, b: GrayImage, lam: float) -> GrayImage:
    """Tikhonov-regularized inverse of convolve: minimizes
    ||convolve(a, b) - f||^2 + lam*max|B|^2 * ||a||^2 over a.

    Images up to _DENSE_LIMIT pixels are solved exactly (dense least squares
    over the same-crop convolution operator). Larger images use the circulant
    approximation of the same objective, a single regularized spectral
    division A = F*conj(B) / (|B|^2 + lam*max|B|^2) with the inverse of
    convolve's centering; its accuracy near the border is limited by the
    "same" crop, which for the enhancement pipeline is immaterial.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if not np.any(b.pixels):
        raise ValueError("mask is all zero")
    if f.pixels.size <= _DENSE_LIMIT:
        return _deconvolve_dense(f, b, lam)
    return _deconvolve_spectral(f, b, lam)


def _deconvolve_spectral(f: GrayImage, b: GrayImage, lam: float) -> GrayImage:
    hf, wf = f.pixels.shape
    grid = _padded_product_grid(f.pixels.shape, b.pixels.shape)
    ff = np.fft.fft2(_embed(f.pixels, grid))
    fb = np.fft.fft2(_embed(b.pixels, grid))
    power = np.abs(fb) ** 2
    denom = power + lam * power.max()
    # lam = 0 with exact spectral zeros: zero bins contribute nothing.
    with np.errstate(divide="ignore", invalid="ignore"):
        ahat = np.where(denom > 0, ff * np.conj(fb) / denom, 0.0)
    est = np.fft.ifft2(ahat).real
    cr, cc = _mask_center(b.pixels.shape)
    est = np.roll(est, (cr, cc), axis=(0, 1))
    return GrayImage(est[:hf, :wf])


def _crop_conv_matrix(fshape, bpix: np.ndarray) -> np.ndarray:
    """Dense matrix of the same-crop linear convolution operator."""
    hf, wf = fshape
    hb, wb = bpix.shape
    cr, cc = _mask_center(bpix.shape)
    n = hf * wf
    mat = np.zeros((n, n))
    full = np.zeros((hf + hb - 1, wf + wb - 1))
    for i in range(hf):
        for j in range(wf):
            full[:] = 0.0
            full[i : i + hb, j : j + wb] = bpix
            mat[:, i * wf + j] = full[cr : cr + hf, cc : cc + wf].ravel()
    return mat


def _deconvolve_dense(f: GrayImage, b: GrayImage, lam: float) -> GrayImage:
    from scipy import linalg as sla

    hf, wf = f.pixels.shape
    grid = _padded_product_grid(f.pixels.shape, b.pixels.shape)
    fb = np.fft.fft2(_embed(b.pixels, grid))
    damp = np.sqrt(lam * (np.abs(fb) ** 2).max())
    mat = _crop_conv_matrix(f.pixels.shape, b.pixels)
    n = hf * wf
    augmented = np.vstack([mat, damp * np.eye(n)])
    rhs = np.concatenate([f.pixels.ravel(), np.zeros(n)])
    sol, *_ = sla.lstsq(augmented, rhs, lapack_driver="gelsy")
    return GrayImage(sol.reshape(hf, wf))
