import numpy as np
import pytest

from ntdcount import imagecore
from ntdcount.imagecore import (
    DIGIT_GLYPHS,
    GLYPH_H,
    GLYPH_W,
    GrayImage,
    ImageIOError,
    OverlayStyle,
    load_image,
    render_overlay,
    save_image,
)
from ntdcount.pipeline import Peak, PeakReport


def write_pgm(path, width, height, data, maxval=255):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode())
        fh.write(bytes(data))


def test_load_pgm_normalizes(tmp_path):
    p = tmp_path / "a.pgm"
    write_pgm(p, 2, 2, [0, 255, 128, 64])
    img = load_image(p)
    assert img.width == 2 and img.height == 2
    assert np.allclose(img.pixels.ravel(), [0.0, 1.0, 128 / 255, 64 / 255])


def test_load_png_gray(tmp_path):
    from PIL import Image

    p = tmp_path / "a.png"
    Image.fromarray(np.array([[255]], dtype=np.uint8), mode="L").save(p)
    img = load_image(p)
    assert img.pixels.tolist() == [[1.0]]


def test_load_png_rgb_averaged(tmp_path):
    from PIL import Image

    p = tmp_path / "a.png"
    arr = np.zeros((1, 1, 3), dtype=np.uint8)
    arr[0, 0] = (30, 60, 90)
    Image.fromarray(arr, mode="RGB").save(p)
    img = load_image(p)
    assert img.pixels[0, 0] == pytest.approx(60 / 255)


def test_load_pgm_16bit_rejected(tmp_path):
    p = tmp_path / "a.pgm"
    write_pgm(p, 1, 1, [0, 0], maxval=65535)
    with pytest.raises(ImageIOError, match="unsupported bit depth"):
        load_image(p)


def test_load_missing_file(tmp_path):
    with pytest.raises(ImageIOError):
        load_image(tmp_path / "nope.pgm")


def test_load_malformed_header(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P6\n1 1\n255\n\x00")
    with pytest.raises(ImageIOError, match="malformed"):
        load_image(p)


def test_pgm_comments_in_header(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n1 1\n255\n\x80")
    img = load_image(p)
    assert img.pixels[0, 0] == pytest.approx(128 / 255)


def test_save_quantization(tmp_path):
    p = tmp_path / "q.pgm"
    save_image(GrayImage(np.array([[0.5]])), p)
    assert p.read_bytes()[-1] == 128  # round(0.5*255)


def test_save_clamps_negative(tmp_path):
    p = tmp_path / "n.pgm"
    save_image(GrayImage(np.array([[-0.2]])), p)
    assert p.read_bytes()[-1] == 0


@pytest.mark.parametrize("ext", ["pgm", "png"])
def test_round_trip_within_quantization(tmp_path, ext):
    rng = np.random.default_rng(42)
    img = GrayImage(rng.random((13, 17)))
    p = tmp_path / f"r.{ext}"
    save_image(img, p)
    back = load_image(p)
    assert np.abs(back.pixels - img.pixels).max() <= 1 / 255 + 1e-12


def test_save_rejects_nonfinite(tmp_path):
    with pytest.raises(ValueError):
        save_image(GrayImage(np.array([[np.nan]])), tmp_path / "x.pgm")


def _report(centroids):
    return PeakReport(
        [Peak(c, 9, (int(c[0]) - 1, int(c[1]) - 1, int(c[0]) + 1, int(c[1]) + 1), 1.0) for c in centroids]
    )


def test_overlay_empty_report_is_identity():
    img = GrayImage(np.zeros((32, 32)))
    out = render_overlay(img, _report([]))
    assert np.array_equal(out.pixels, img.pixels)


def test_overlay_single_peak_localized():
    img = GrayImage(np.zeros((64, 64)))
    style = OverlayStyle(marker_radius=4)
    out = render_overlay(img, _report([(10.0, 10.0)]), style)
    diff = np.argwhere(out.pixels != img.pixels)
    assert len(diff) > 0
    # marker ring + glyph stay inside a bounding box around the centroid
    assert diff[:, 0].min() >= 10 - style.marker_radius - 4
    assert diff[:, 0].max() <= 10 + style.marker_radius + 4
    assert diff[:, 1].min() >= 10 - style.marker_radius - 1
    assert diff[:, 1].max() <= 10 + style.marker_radius + 2 + GLYPH_W + 1
    assert np.array_equal(img.pixels, np.zeros((64, 64)))  # input untouched


def _glyph_present(pixels, digit, top, left, value):
    for r, row in enumerate(DIGIT_GLYPHS[digit]):
        for c, ch in enumerate(row):
            expect = value if ch == "#" else 0.0
            if pixels[top + r, left + c] != expect:
                return False
    return True


def test_overlay_ordinals_in_row_col_order():
    img = GrayImage(np.zeros((96, 96)))
    style = OverlayStyle(marker_radius=3, intensity=1.0)
    cents = [(20.0, 70.0), (50.0, 20.0), (80.0, 50.0)]  # already (row, col) sorted
    out = render_overlay(img, _report(cents), style)
    for ordinal, (crow, ccol) in enumerate(cents, start=1):
        top = int(round(crow)) - GLYPH_H // 2
        left = int(round(ccol)) + style.marker_radius + 2
        assert _glyph_present(out.pixels, str(ordinal), top, left, 1.0)


def test_overlay_pure():
    rng = np.random.default_rng(1)
    img = GrayImage(rng.random((48, 48)))
    rep = _report([(12.0, 30.0), (30.0, 12.0)])
    out1 = render_overlay(img, rep)
    out2 = render_overlay(img, rep)
    assert np.array_equal(out1.pixels, out2.pixels)


def test_overlay_style_validates():
    with pytest.raises(ValueError):
        OverlayStyle(marker_radius=0)
