import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calfuse.data import (
    EmbeddingDataset,
    build_schedule,
    generate_synthetic,
    read_dataset,
    write_dataset,
)
from calfuse.errors import FormatError, ValidationError

FIXTURE = Path(__file__).parent / "fixtures" / "tiny.cfeb"

TINY_TRAIN_X = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=np.float64)
TINY_TRAIN_Y = np.array([0, 1])
TINY_TEST_X = np.array([[0, 0, 1, 0]], dtype=np.float64)
TINY_TEST_Y = np.array([1])
TINY_TEXT = np.array([[0.5, 0.5, 0.5, 0.5], [1, 0, 0, 0]], dtype=np.float64)
TINY_NAMES = ["ant", "bée"]


def build_tiny_bytes() -> bytes:
    """The tiny dataset serialized by hand, independent of write_dataset."""
    out = b"CFEB" + struct.pack("<5I", 1, 4, 2, 1, 2)
    out += np.asarray(TINY_TRAIN_X, dtype="<f4").tobytes()
    out += np.asarray(TINY_TRAIN_Y, dtype="<u4").tobytes()
    out += np.asarray(TINY_TEST_X, dtype="<f4").tobytes()
    out += np.asarray(TINY_TEST_Y, dtype="<u4").tobytes()
    out += np.asarray(TINY_TEXT, dtype="<f4").tobytes()
    for name in TINY_NAMES:
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded
    return out


def tiny_dataset() -> EmbeddingDataset:
    return EmbeddingDataset(
        train_features=TINY_TRAIN_X.copy(),
        train_labels=TINY_TRAIN_Y.copy(),
        test_features=TINY_TEST_X.copy(),
        test_labels=TINY_TEST_Y.copy(),
        text_features=TINY_TEXT.copy(),
        class_names=list(TINY_NAMES),
    )


def assert_datasets_equal(a: EmbeddingDataset, b: EmbeddingDataset):
    assert np.array_equal(a.train_features, b.train_features)
    assert np.array_equal(a.train_labels, b.train_labels)
    assert np.array_equal(a.test_features, b.test_features)
    assert np.array_equal(a.test_labels, b.test_labels)
    assert np.array_equal(a.text_features, b.text_features)
    assert a.class_names == b.class_names


# ---------------------------------------------------------------- schedules


def test_b0_even_split():
    s = build_schedule("b0", num_classes=100, increment=10, seed=0)
    assert s.num_phases == 10
    assert all(len(p) == 10 for p in s.phases)


def test_b50_front_loaded():
    s = build_schedule("b50", num_classes=100, increment=10, seed=0)
    assert [len(p) for p in s.phases] == [50, 10, 10, 10, 10, 10]


def test_divisibility_enforced():
    with pytest.raises(ValidationError):
        build_schedule("b0", num_classes=100, increment=7, seed=0)
    with pytest.raises(ValidationError):
        build_schedule("b50", num_classes=100, increment=7, seed=0)
    with pytest.raises(ValidationError):
        build_schedule("b50", num_classes=40, increment=5, seed=0)
    with pytest.raises(ValidationError):
        build_schedule("b99", num_classes=100, increment=10, seed=0)


def test_schedule_partition_and_determinism():
    a = build_schedule("b0", num_classes=60, increment=6, seed=5)
    b = build_schedule("b0", num_classes=60, increment=6, seed=5)
    assert a.phases == b.phases
    flat = sorted(c for p in a.phases for c in p)
    assert flat == list(range(60))
    c = build_schedule("b0", num_classes=60, increment=6, seed=6)
    assert a.phases != c.phases


# ---------------------------------------------------------------- file format


def test_fixture_file_matches_hand_built_bytes():
    assert FIXTURE.read_bytes() == build_tiny_bytes()


def test_fixture_parses_to_known_values():
    ds = read_dataset(FIXTURE)
    assert_datasets_equal(ds, tiny_dataset())
    assert ds.feature_dim == 4 and ds.num_classes == 2


def test_writer_reproduces_hand_built_bytes(tmp_path):
    path = tmp_path / "tiny.cfeb"
    write_dataset(tiny_dataset(), path)
    assert path.read_bytes() == build_tiny_bytes()


def test_roundtrip_field_for_field(tmp_path):
    ds = tiny_dataset()
    path = tmp_path / "roundtrip.cfeb"
    write_dataset(ds, path)
    assert_datasets_equal(read_dataset(path), ds)


def test_bad_magic_names_offset(tmp_path):
    path = tmp_path / "bad.cfeb"
    path.write_bytes(b"NOPE" + build_tiny_bytes()[4:])
    with pytest.raises(FormatError, match="offset 0"):
        read_dataset(path)


def test_truncation_detected(tmp_path):
    full = build_tiny_bytes()
    for cut in (2, 10, 30, len(full) - 3):
        path = tmp_path / f"cut{cut}.cfeb"
        path.write_bytes(full[:cut])
        with pytest.raises(FormatError, match="truncated|offset"):
            read_dataset(path)


def test_trailing_garbage_detected(tmp_path):
    path = tmp_path / "trailing.cfeb"
    path.write_bytes(build_tiny_bytes() + b"x")
    with pytest.raises(FormatError, match="trailing"):
        read_dataset(path)


def test_label_out_of_range_is_validation_error(tmp_path):
    raw = bytearray(build_tiny_bytes())
    # train labels start after magic(4) + header(20) + train features(2*4*4)
    label_offset = 4 + 20 + 32
    raw[label_offset : label_offset + 4] = struct.pack("<I", 9)
    path = tmp_path / "bad_label.cfeb"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValidationError):
        read_dataset(path)


def test_unnormalized_features_warn_and_normalize(tmp_path):
    raw = bytearray(build_tiny_bytes())
    feat_offset = 4 + 20
    raw[feat_offset : feat_offset + 16] = np.array(
        [2.0, 0.0, 0.0, 0.0], dtype="<f4"
    ).tobytes()
    path = tmp_path / "unnormalized.cfeb"
    path.write_bytes(bytes(raw))
    with pytest.warns(UserWarning, match="normaliz"):
        ds = read_dataset(path)
    np.testing.assert_allclose(ds.train_features[0], [1, 0, 0, 0], atol=1e-12)


def test_constructor_rejects_unnormalized_rows():
    with pytest.raises(ValidationError):
        EmbeddingDataset(
            train_features=np.array([[2.0, 0.0]]),
            train_labels=np.array([0]),
            test_features=np.array([[1.0, 0.0]]),
            test_labels=np.array([0]),
            text_features=np.array([[1.0, 0.0], [0.0, 1.0]]),
            class_names=["a", "b"],
        )


def test_constructor_rejects_bad_labels():
    with pytest.raises(ValidationError):
        EmbeddingDataset(
            train_features=np.array([[1.0, 0.0]]),
            train_labels=np.array([5]),
            test_features=np.array([[1.0, 0.0]]),
            test_labels=np.array([0]),
            text_features=np.array([[1.0, 0.0], [0.0, 1.0]]),
            class_names=["a", "b"],
        )


@settings(max_examples=25, deadline=None)
@given(
    n_classes=st.integers(2, 5),
    n_train=st.integers(1, 8),
    n_test=st.integers(0, 4),
    d=st.integers(1, 6),
    seed=st.integers(0, 10_000),
    names=st.data(),
)
def test_roundtrip_property(tmp_path_factory, n_classes, n_train, n_test, d, seed, names):
    rng = np.random.default_rng(seed)

    def rows(n):
        x = rng.standard_normal((n, d))
        x /= np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)
        return x.astype(np.float32).astype(np.float64)

    ds = EmbeddingDataset(
        train_features=rows(n_train),
        train_labels=rng.integers(0, n_classes, n_train),
        test_features=rows(n_test),
        test_labels=rng.integers(0, n_classes, n_test),
        text_features=rows(n_classes),
        class_names=[
            names.draw(st.text(min_size=0, max_size=12)) for _ in range(n_classes)
        ],
    )
    path = tmp_path_factory.mktemp("cfeb") / "prop.cfeb"
    write_dataset(ds, path)
    assert_datasets_equal(read_dataset(path), ds)


# ---------------------------------------------------------------- synthetic


def test_synthetic_deterministic():
    a = generate_synthetic(4, 3, 2, d=8, cluster_spread=0.2, seed=9)
    b = generate_synthetic(4, 3, 2, d=8, cluster_spread=0.2, seed=9)
    assert_datasets_equal(a, b)


def test_synthetic_tiny_spread_is_perfectly_separable():
    ds = generate_synthetic(10, 5, 5, d=16, cluster_spread=1e-4, seed=0)
    sims = ds.test_features @ ds.text_features.T
    pred = np.argmax(sims, axis=1)
    assert np.mean(pred == ds.test_labels) == 1.0


def test_synthetic_zero_shot_band():
    # 100 classes, spread 0.3, d=64: frozen-feature cosine classification
    # lands in (60%, 99%) — unsaturated, so training effects are visible
    ds = generate_synthetic(100, 5, 20, d=64, cluster_spread=0.3, seed=0)
    sims = ds.test_features @ ds.text_features.T
    acc = 100.0 * np.mean(np.argmax(sims, axis=1) == ds.test_labels)
    assert 60.0 < acc < 99.0


def test_synthetic_roundtrips_bit_exactly(tmp_path):
    ds = generate_synthetic(3, 2, 2, d=5, cluster_spread=0.4, seed=3)
    path = tmp_path / "synth.cfeb"
    write_dataset(ds, path)
    assert_datasets_equal(read_dataset(path), ds)


def test_synthetic_validation():
    with pytest.raises(ValidationError):
        generate_synthetic(1, 2, 2, d=4, cluster_spread=0.3, seed=0)
    with pytest.raises(ValidationError):
        generate_synthetic(3, 0, 2, d=4, cluster_spread=0.3, seed=0)
    with pytest.raises(ValidationError):
        generate_synthetic(3, 2, 2, d=4, cluster_spread=0.0, seed=0)
