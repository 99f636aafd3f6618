import math
import struct

import numpy as np
import pytest

from bnmf.data import (
    BadMagicError,
    CountMismatchError,
    Dataset,
    IdxFormatError,
    TruncatedPayloadError,
    load_idx,
    make_blobs,
    normalize_pixels,
    subsample,
    write_idx,
)


def build_idx_fixture(tmp_path, n=4, rows=28, cols=28):
    """Hand-built IDX pair with a deterministic pixel pattern."""
    pixels = (np.arange(n * rows * cols) * 7 % 256).astype(np.uint8)
    img = struct.pack(">IIII", 0x00000803, n, rows, cols) + pixels.tobytes()
    lbl = struct.pack(">II", 0x00000801, n) + bytes(range(n))
    img_path = tmp_path / "images-idx3-ubyte"
    lbl_path = tmp_path / "labels-idx1-ubyte"
    img_path.write_bytes(img)
    lbl_path.write_bytes(lbl)
    return img_path, lbl_path, pixels


def test_fixture_parses_with_exact_pixel_recovery(tmp_path):
    img_path, lbl_path, pixels = build_idx_fixture(tmp_path)
    ds = load_idx(img_path, lbl_path)
    assert ds.inputs.shape == (4, 28 * 28)
    assert np.array_equal(ds.labels, np.arange(4))
    recovered = np.round((ds.inputs.ravel() + 1.0) * 0.5 * 255.0).astype(np.uint8)
    assert np.array_equal(recovered, pixels)


def test_pixel_endpoints_map_to_unit_interval():
    out = normalize_pixels(np.array([0, 255], dtype=np.uint8))
    assert out[0] == -1.0 and out[1] == 1.0


def test_bad_magic_raises_distinct_error(tmp_path):
    img_path, lbl_path, _ = build_idx_fixture(tmp_path)
    blob = bytearray(img_path.read_bytes())
    blob[3] = 0x99
    img_path.write_bytes(bytes(blob))
    with pytest.raises(BadMagicError):
        load_idx(img_path, lbl_path)


def test_truncated_payload_raises_distinct_error(tmp_path):
    img_path, lbl_path, _ = build_idx_fixture(tmp_path)
    img_path.write_bytes(img_path.read_bytes()[:-10])
    with pytest.raises(TruncatedPayloadError):
        load_idx(img_path, lbl_path)


def test_count_mismatch_raises_distinct_error(tmp_path):
    img_path, lbl_path, _ = build_idx_fixture(tmp_path)
    lbl = struct.pack(">II", 0x00000801, 3) + bytes(range(3))
    lbl_path.write_bytes(lbl)
    with pytest.raises(CountMismatchError):
        load_idx(img_path, lbl_path)
    assert issubclass(CountMismatchError, IdxFormatError)


def test_idx_round_trip_reproduces_bytes(tmp_path):
    img_path, lbl_path, _ = build_idx_fixture(tmp_path)
    original_img = img_path.read_bytes()
    original_lbl = lbl_path.read_bytes()
    ds = load_idx(img_path, lbl_path)
    out_img = tmp_path / "out-images"
    out_lbl = tmp_path / "out-labels"
    write_idx(ds, out_img, out_lbl)
    assert out_img.read_bytes() == original_img
    assert out_lbl.read_bytes() == original_lbl


def test_normalization_never_applied_twice():
    raw = np.array([[0.0, 128.0, 255.0]])
    once = normalize_pixels(raw)
    with pytest.raises(ValueError):
        normalize_pixels(once)  # negatives: clearly already normalized
    with pytest.raises(ValueError):
        normalize_pixels(np.array([[0.2, 0.8]]))  # unit-scale floats


def test_subsample_identity_at_full_fraction():
    ds = make_blobs(50, 3, margin=2.0, seed=1)
    same = subsample(ds, 1.0, seed=9)
    assert same is ds


def test_subsample_stratified_within_one_of_proportional():
    gen = np.random.default_rng(0)
    labels = gen.integers(0, 10, 6000)
    inputs = gen.uniform(-1, 1, (6000, 4))
    ds = Dataset(inputs=inputs, labels=labels, n_classes=10)
    sub = subsample(ds, 0.25, seed=3)
    assert abs(len(sub) - 1500) <= 10
    for cls in range(10):
        exact = 0.25 * np.sum(labels == cls)
        got = np.sum(sub.labels == cls)
        assert abs(got - exact) <= 1.0


def test_subsample_deterministic():
    ds = make_blobs(400, 3, margin=2.0, seed=1)
    a = subsample(ds, 0.5, seed=7)
    b = subsample(ds, 0.5, seed=7)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.labels, b.labels)


def test_subsample_rejects_bad_fraction_and_empty_result():
    ds = make_blobs(10, 2, margin=2.0, seed=1)
    with pytest.raises(ValueError):
        subsample(ds, 0.0, seed=0)
    with pytest.raises(ValueError):
        subsample(ds, 1e-6, seed=0)


def test_blobs_linearly_separable_at_wide_margin():
    ds = make_blobs(500, 3, margin=10.0, seed=2)
    # linear probe on the first coordinate separates the clusters
    pred = (ds.inputs[:, 0] < 0).astype(int)
    assert np.mean(pred == ds.labels) == 1.0


def test_blobs_one_dimensional_bayes_accuracy():
    # generator oracle: the Bayes rule sign(x) has accuracy Phi(margin)
    n = 40_000
    ds = make_blobs(n, 1, margin=1.0, seed=8)
    pred = (ds.inputs[:, 0] < 0).astype(int)
    acc = float(np.mean(pred == ds.labels))
    want = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
    assert abs(acc - want) < 5 * math.sqrt(want * (1 - want) / n)


def test_blobs_minimal_size():
    ds = make_blobs(2, 2, margin=1.0, seed=0)
    assert sorted(ds.labels.tolist()) == [0, 1]


def test_blobs_inputs_bounded():
    ds = make_blobs(1000, 5, margin=10.0, seed=4)
    assert np.max(np.abs(ds.inputs)) <= 1.0


def test_blobs_validation():
    with pytest.raises(ValueError):
        make_blobs(1, 2, margin=1.0)
    with pytest.raises(ValueError):
        make_blobs(10, 2, margin=0.0)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(inputs=np.zeros((3, 2)), labels=np.array([0, 1, 5]), n_classes=2)
    with pytest.raises(ValueError):
        Dataset(inputs=np.full((2, 2), 3.0), labels=np.array([0, 1]), n_classes=2)
