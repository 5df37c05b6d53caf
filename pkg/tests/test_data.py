import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grammarscope.data import (
    FormatError,
    GeometricSpec,
    Manifest,
    PhotometricSpec,
    SyntheticSpec,
    apply_geometric,
    apply_photometric,
    crop,
    dominant_row_sequence,
    generate_samples,
    grammar_template,
    hflip,
    load_image,
    load_mask,
    photometric,
    read_manifest,
    resize_image,
    resize_mask,
    save_image,
    save_mask,
    scale_geometric,
    write_manifest,
    write_synthetic,
)
from grammarscope.data.io import decode_pgm_mask, decode_ppm, encode_pgm_mask, encode_ppm, quantize


def test_black_ppm(tmp_path):
    path = tmp_path / "black.ppm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    img = load_image(path)
    assert img.shape == (2, 2, 3)
    assert not img.any()


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((8, 8, 3)).astype(np.float32)
    save_image(tmp_path / "x.ppm", img)
    back = load_image(tmp_path / "x.ppm")
    np.testing.assert_array_equal(quantize(back), quantize(img))
    # re-encoding is byte exact
    assert encode_ppm(back) == (tmp_path / "x.ppm").read_bytes()


def test_ppm_header_comments_are_skipped():
    blob = b"P6\n# made by hand\n1 1\n# another\n255\n" + bytes([255, 0, 255])
    np.testing.assert_allclose(decode_ppm(blob)[0, 0], [1.0, 0.0, 1.0])


@pytest.mark.parametrize(
    "blob",
    [
        b"P6\n2 2\n65535\n" + bytes(24),  # maxval != 255
        b"P6\n2 2\n255\n" + bytes(5),  # truncated payload
        b"P3\n1 1\n255\n0 0 0",  # ascii variant
        b"P6\n2 x\n255\n",  # garbage header
    ],
)
def test_ppm_rejects(blob):
    with pytest.raises(FormatError):
        decode_ppm(blob)


def test_zero_mask(tmp_path):
    save_mask(tmp_path / "m.pgm", np.zeros((4, 4), np.uint8), 7)
    mask, c = load_mask(tmp_path / "m.pgm")
    assert c == 7 and mask.shape == (4, 4) and not mask.any()


def test_mask_round_trip():
    rng = np.random.default_rng(1)
    mask = rng.integers(0, 13, size=(9, 11)).astype(np.uint8)
    back, c = decode_pgm_mask(encode_pgm_mask(mask, 13))
    assert c == 13
    np.testing.assert_array_equal(back, mask)


def test_mask_value_out_of_range():
    blob = b"P5\n#C=7\n1 1\n255\n" + bytes([7])
    with pytest.raises(FormatError):
        decode_pgm_mask(blob)
    with pytest.raises(FormatError):
        decode_pgm_mask(b"P5\n1 1\n255\n" + bytes([0]))  # no class count


def test_manifest_round_trip(tmp_path):
    save_image(tmp_path / "a.ppm", np.zeros((2, 2, 3)))
    save_mask(tmp_path / "a.pgm", np.zeros((2, 2), np.uint8), 3)
    save_image(tmp_path / "b.ppm", np.ones((2, 2, 3)))
    man = Manifest("val", [("a.ppm", "a.pgm"), ("b.ppm", None)], num_classes=3, dims=(2, 2), seed=5)
    write_manifest(tmp_path / "val.txt", man)
    text = (tmp_path / "val.txt").read_text()
    assert "a.ppm\ta.pgm" in text and "b.ppm\t-" in text
    back = read_manifest(tmp_path / "val.txt")
    assert back.entries == man.entries and back.num_classes == 3 and back.dims == (2, 2) and back.seed == 5
    (tmp_path / "b.ppm").unlink()
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "val.txt")


# -- raster --------------------------------------------------------------------

def test_resize_identity():
    img = np.random.default_rng(0).random((5, 7, 3)).astype(np.float32)
    np.testing.assert_array_equal(resize_image(img, (5, 7)), img)


def test_nearest_uniform_mask():
    assert np.all(resize_mask(np.full((6, 6), 4, np.uint8), (13, 3)) == 4)


def test_bilinear_checkerboard_downscale():
    checker = (np.indices((4, 4)).sum(axis=0) % 2).astype(np.float32)
    # half-pixel centres: each output samples the midpoint of a 2x2 block,
    # weights (0.5, 0.5) x (0.5, 0.5) over two zeros and two ones
    np.testing.assert_allclose(resize_image(checker, (2, 2)), np.full((2, 2), 0.5))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**31))
def test_resize_mask_introduces_no_classes(h, w, H, W, seed):
    mask = np.random.default_rng(seed).integers(0, 9, size=(h, w))
    out = resize_mask(mask, (H, W))
    assert out.shape == (H, W)
    assert set(np.unique(out)) <= set(np.unique(mask))


def test_crop_out_of_bounds():
    with pytest.raises(ValueError):
        crop(np.zeros((4, 4)), (2, 2, 3, 1))


def test_zero_jitter_photometric_is_identity():
    img = np.random.default_rng(0).random((4, 4, 3)).astype(np.float32)
    np.testing.assert_array_equal(photometric(img, 0.0, 0.0, seed=9), img)


def test_photometric_clamps():
    img = np.full((2, 2, 3), 0.9, np.float32)
    out = apply_photometric(img, PhotometricSpec((1.5, 1.5, 1.5), (0.2, -1.0, 0.0)))
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_flip_involution():
    grid = np.arange(12).reshape(3, 4)
    np.testing.assert_array_equal(hflip(hflip(grid)), grid)


def test_geometric_label_histogram():
    mask = np.random.default_rng(3).integers(0, 5, size=(16, 16))
    spec = GeometricSpec((2, 3, 8, 9), flip=True)
    out = apply_geometric(mask, spec)
    region = mask[2:10, 3:12]
    np.testing.assert_array_equal(np.bincount(out.ravel(), minlength=5), np.bincount(region.ravel(), minlength=5))


def test_geometric_keeps_pixel_label_correspondence():
    img = np.zeros((16, 16, 3), np.float32)
    mask = np.zeros((16, 16), np.uint8)
    img[5, 9] = 1.0
    mask[5, 9] = 3
    spec = GeometricSpec((4, 6, 8, 8), flip=True)
    gi, gm = apply_geometric(img, spec), apply_geometric(mask, spec)
    assert np.argwhere(gi[..., 0] == 1.0).tolist() == np.argwhere(gm == 3).tolist()


def test_scale_geometric():
    spec = GeometricSpec((64, 64, 128, 128), flip=True)
    assert scale_geometric(spec, 1) == spec
    assert scale_geometric(spec, 0.25) == GeometricSpec((16, 16, 32, 32), True)


def test_scaled_spec_selects_same_relative_region():
    rng = np.random.default_rng(7)
    rows, cols = np.indices((64, 64))
    small_rows, small_cols = resize_mask(rows, (16, 16)), resize_mask(cols, (16, 16))
    for _ in range(20):
        top, left = rng.integers(0, 8, size=2) * 4
        h, w = rng.integers(4, 8, size=2) * 4
        spec = GeometricSpec((int(top), int(left), int(h), int(w)), bool(rng.integers(2)))
        full_r = apply_geometric(rows, spec)
        small = scale_geometric(spec, 0.25)
        small_r = apply_geometric(small_rows, small)
        small_c = apply_geometric(small_cols, small)
        full_c = apply_geometric(cols, spec)
        # each coarse cell's source pixel lies inside the block it represents, within one pixel of the fine grid
        np.testing.assert_array_less(np.abs(small_r - full_r[::4, ::4]), 4)
        np.testing.assert_array_less(np.abs(small_c - full_c[::4, ::4]), 4)
        assert small_r.min() >= full_r.min() and small_r.max() <= full_r.max()


# -- synthetic -----------------------------------------------------------------

def test_zero_jitter_samples_identical():
    spec = SyntheticSpec(jitter=0, color_jitter=0, noise=0, n=2, seed=3)
    (i0, m0), (i1, m1) = generate_samples(spec)
    np.testing.assert_array_equal(i0, i1)
    np.testing.assert_array_equal(m0, m1)


@pytest.mark.parametrize("family", ["face", "room"])
def test_generator_deterministic(family):
    spec = SyntheticSpec(family=family, n=5, seed=11)
    a, b = generate_samples(spec), generate_samples(spec)
    for (ia, ma), (ib, mb) in zip(a, b):
        assert ia.tobytes() == ib.tobytes() and ma.tobytes() == mb.tobytes()


def test_face_masks_follow_grammar():
    template = grammar_template("face", (64, 64))
    assert template == [1, 2, 3, 2, 4, 2, 6, 2, 0]
    spec = SyntheticSpec(family="face", n=1000, seed=0)
    for _, mask in generate_samples(spec):
        assert dominant_row_sequence(mask) == template


def test_room_classes_in_range():
    for img, mask in generate_samples(SyntheticSpec(family="room", n=20, seed=1)):
        assert mask.max() < 13 and img.min() >= 0 and img.max() <= 1


@pytest.mark.parametrize("jitter", [3, 12])
def test_excessive_jitter_rejected(jitter):
    with pytest.raises(ValueError):
        generate_samples(SyntheticSpec(jitter=jitter, n=1))


def test_write_synthetic(tmp_path):
    spec = SyntheticSpec(n=6, seed=2)
    mans = write_synthetic(spec, tmp_path, {"train": 4, "val": 1, "test": 1})
    assert [len(m) for m in mans.values()] == [4, 1, 1]
    back = read_manifest(tmp_path / "train.txt")
    img, mask = back.load(3)
    ref_img, ref_mask = generate_samples(spec, 3, 1)[0]
    np.testing.assert_array_equal(mask, ref_mask)
    np.testing.assert_array_equal(quantize(img), quantize(ref_img))
