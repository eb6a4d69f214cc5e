import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from oracles import histogram_intersection, loop_defocus, sort_median
from vmad.errors import BoxOutOfBounds, DegenerateBox, EmptySet, InvalidStatistic, MissingFile, UnsupportedImage
from vmad.model import FaceBox
from vmad.quality import (
    DIVIDE_BY_100,
    IDENTITY,
    GrayImage,
    NormKind,
    QualityNormalization,
    dataset_median,
    default_normalization,
    defocus,
    illumination_uniformity,
    mean_filter,
    normalize_quality,
    read_gray_image,
)


def img(arr):
    return GrayImage.from_array(np.asarray(arr, dtype=np.uint8))


# -- illumination uniformity ---------------------------------------------------


def test_constant_image_is_uniform():
    assert illumination_uniformity(img(np.full((8, 10), 77))) == 100.0


def test_disjoint_halves():
    a = np.zeros((6, 8))
    a[:, 4:] = 255
    assert illumination_uniformity(img(a)) == 0.0


def test_half_overlap():
    a = np.zeros((4, 8))
    a[0::2, :4] = 255  # left: half 0, half 255; right: all 0
    assert illumination_uniformity(img(a)) == 50.0


def test_odd_width_skips_middle_column():
    a = np.zeros((3, 5))
    a[:, 2] = 255
    assert illumination_uniformity(img(a)) == 100.0


def test_uniformity_matches_dictionary_oracle_and_is_mirror_symmetric():
    rng = np.random.default_rng(7)
    for _ in range(50):
        h, w = int(rng.integers(2, 20)), int(rng.integers(2, 20))
        a = rng.integers(0, 256, (h, w))
        g = img(a)
        v = illumination_uniformity(g)
        assert v == pytest.approx(histogram_intersection(a.tolist(), 0, 0, w, h), abs=1e-9)
        assert illumination_uniformity(g.mirrored()) == v


def test_face_box_restricts_region():
    a = np.zeros((10, 10))
    a[:, 5:] = 255
    assert illumination_uniformity(img(a), FaceBox(6, 0, 4, 10)) == 100.0
    with pytest.raises(BoxOutOfBounds):
        illumination_uniformity(img(a), FaceBox(8, 0, 4, 10))
    with pytest.raises(DegenerateBox):
        illumination_uniformity(img(a), FaceBox(0, 0, 0, 4))


# -- defocus -------------------------------------------------------------------


def test_constant_image_has_zero_defocus():
    assert defocus(img(np.full((5, 7), 200))) == 0.0


def test_checkerboard_defocus():
    board = (np.indices((3, 3)).sum(axis=0) % 2) * 255
    # hand convolution with edge replication: total |residual| = 40*255/9 over 9 pixels
    assert defocus(img(board)) == pytest.approx(4000 / 81, abs=1e-12)
    assert defocus(img(board)) == pytest.approx(loop_defocus(board.tolist(), 0, 0, 3, 3), abs=1e-12)


def test_defocus_matches_loop_oracle():
    rng = np.random.default_rng(11)
    for _ in range(30):
        h, w = int(rng.integers(3, 12)), int(rng.integers(3, 12))
        a = rng.integers(0, 256, (h, w))
        assert defocus(img(a)) == pytest.approx(loop_defocus(a.tolist(), 0, 0, w, h), abs=1e-9)


def test_defocus_in_box_matches_loop_oracle():
    rng = np.random.default_rng(12)
    a = rng.integers(0, 256, (20, 30))
    box = FaceBox(4, 3, 10, 12)
    assert defocus(img(a), box) == pytest.approx(loop_defocus(a.tolist(), 4, 3, 10, 12), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 12), st.integers(3, 12), st.integers(0, 2**32 - 1), st.integers(0, 100))
def test_defocus_shift_and_mirror_invariant(h, w, seed, shift):
    a = np.random.default_rng(seed).integers(0, 156, (h, w))
    base = defocus(img(a))
    assert defocus(img(a + shift)) == pytest.approx(base, abs=1e-9)
    assert defocus(img(a).mirrored()) == pytest.approx(base, abs=1e-9)


def test_mean_filter_preserves_constant():
    assert np.all(mean_filter(np.full((4, 4), 9.0)) == 9.0)


def test_tiny_region_rejected():
    with pytest.raises(DegenerateBox):
        defocus(img(np.zeros((2, 5))))


# -- image io --------------------------------------------------------------------


def test_read_pgm_and_png(tmp_path):
    a = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    for name in ("x.pgm", "x.png"):
        Image.fromarray(a, mode="L").save(tmp_path / name)
        g = read_gray_image(tmp_path / name)
        assert (g.width, g.height) == (4, 3)
        assert np.array_equal(g.data, a)


def test_read_rejects_color_and_missing(tmp_path):
    Image.new("RGB", (4, 4)).save(tmp_path / "c.png")
    with pytest.raises(UnsupportedImage):
        read_gray_image(tmp_path / "c.png")
    with pytest.raises(MissingFile):
        read_gray_image(tmp_path / "none.png")


# -- normalization -----------------------------------------------------------------


def test_normalization_examples():
    med = QualityNormalization(NormKind.DATASET_MEDIAN, 25.77)
    assert normalize_quality(25.77, med) == 1.0
    assert normalize_quality(60, med) == 1.0
    assert normalize_quality(50, DIVIDE_BY_100) == 0.5
    assert normalize_quality(150, DIVIDE_BY_100) == 1.0
    assert normalize_quality(-0.5, IDENTITY) == 0.0
    assert np.allclose(normalize_quality([0, 50, 100], DIVIDE_BY_100), [0, 0.5, 1])


def test_normalization_parse_and_defaults():
    assert QualityNormalization.parse("median:25.77") == QualityNormalization(NormKind.DATASET_MEDIAN, 25.77)
    assert str(QualityNormalization(NormKind.DATASET_MEDIAN, 25.77)) == "median:25.77"
    assert QualityNormalization.parse("100") == DIVIDE_BY_100
    assert default_normalization("q:illum") == DIVIDE_BY_100
    assert default_normalization("q:magface").needs_fit
    assert default_normalization("q:other") == IDENTITY
    with pytest.raises(InvalidStatistic):
        QualityNormalization(NormKind.DATASET_MEDIAN, 0.0)
    with pytest.raises(InvalidStatistic):
        normalize_quality(1.0, QualityNormalization(NormKind.DATASET_MEDIAN))


def test_dataset_median():
    assert dataset_median([1, 2, 3]) == 2
    assert dataset_median([1, 3]) == 2
    v = np.random.default_rng(3).random(1001)
    assert dataset_median(v) == sort_median(v)
    with pytest.raises(EmptySet):
        dataset_median([])
