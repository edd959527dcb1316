import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from permattack import rng
from permattack.datasets import (DatasetManifest, IdxImages, audit_lwc_records,
                                 build_katan_corpus, build_pbox_corpus,
                                 build_simon_corpus, decrypt_pixel_matrix,
                                 KATAN_TRAIN_DEFAULT, KATAN_VAL_DEFAULT,
                                 read_idx, read_idx_labels, read_lwc1,
                                 shuffle_split, SIMON_TEST_DEFAULT,
                                 SIMON_TRAIN_DEFAULT, SIMON_VAL_DEFAULT,
                                 write_idx, write_idx_labels, write_lwc1)
from permattack.errors import DataFormatError, InvalidParameterError, ShapeError
from permattack.pbox import Cml, Dims, Logistic


# --- IDX ------------------------------------------------------------------------------

def test_idx_roundtrip(tmp_path):
    rng_ = np.random.default_rng(0)
    imgs = IdxImages(Dims(28, 28), rng_.integers(0, 256, (3, 784), dtype=np.uint8))
    path = tmp_path / "x.idx"
    write_idx(imgs, path)
    back = read_idx(path)
    assert back.dims == imgs.dims
    assert np.array_equal(back.pixels, imgs.pixels)


def test_idx_bad_magic(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(b"\x00\x00\x08\x01" + b"\x00" * 12)
    with pytest.raises(DataFormatError) as err:
        read_idx(path)
    assert err.value.offset == 0


def test_idx_truncated_payload(tmp_path):
    header = np.array([0x00000803, 60000, 28, 28], dtype=">u4").tobytes()
    path = tmp_path / "short.idx"
    path.write_bytes(header + b"\x00" * 100)
    with pytest.raises(DataFormatError) as err:
        read_idx(path)
    assert err.value.offset == 116


def test_idx_labels_roundtrip(tmp_path):
    labels = np.arange(10, dtype=np.uint8)
    path = tmp_path / "l.idx"
    write_idx_labels(labels, path)
    assert np.array_equal(read_idx_labels(path), labels)


def test_official_file_counts_when_present(image_corpus):
    # With real IDX corpora on disk the full thesis splits are available;
    # the built-in stand-in records its own provenance instead.
    if image_corpus.source == "idx-files":
        assert image_corpus.train.count == 60_000
        assert image_corpus.test.count == 10_000
    else:
        assert image_corpus.source.startswith("builtin-digits")
        assert image_corpus.train.count == 1437
        assert image_corpus.test.count == 360
    assert image_corpus.train.dims == Dims(28, 28)


# --- P-box corpora -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_images(image_corpus):
    train = IdxImages(image_corpus.train.dims, image_corpus.train.pixels[:120])
    test = IdxImages(image_corpus.test.dims, image_corpus.test.pixels[:40])
    return train, test


def test_pbox_corpus_split_and_order(small_images):
    train, test = small_images
    corpus = build_pbox_corpus(train, test, Cml(0.31457, 0.6532, 0.94), 1)
    assert corpus.train_cipher.shape == (120, 784)
    assert corpus.val_cipher.shape == (40, 784)
    assert np.array_equal(corpus.train_plain, train.pixels)
    # Ciphertexts are ordered like their plaintexts: decrypting row i yields row i.
    back = decrypt_pixel_matrix(corpus.train_cipher, corpus.schedule)
    assert np.array_equal(back, train.pixels)


def test_pbox_corpus_16_rounds_roundtrip(small_images):
    train, test = small_images
    corpus = build_pbox_corpus(train, test, Logistic(0.448, 3.988), 16)
    assert len(corpus.schedule) == 16
    back = decrypt_pixel_matrix(corpus.val_cipher, corpus.schedule)
    assert np.array_equal(back, test.pixels)


def test_pbox_corpus_histogram_invariance(small_images):
    train, test = small_images
    corpus = build_pbox_corpus(train, test, Cml(0.31457, 0.6532, 0.94), 8)
    for i in range(0, 120, 17):
        h_plain = np.bincount(corpus.train_plain[i], minlength=256)
        h_cipher = np.bincount(corpus.train_cipher[i], minlength=256)
        assert np.array_equal(h_plain, h_cipher)


def test_pbox_corpus_manifest_reproducible(small_images):
    train, test = small_images
    a = build_pbox_corpus(train, test, Cml(0.31457, 0.6532, 0.94), 2)
    b = build_pbox_corpus(train, test, Cml(0.31457, 0.6532, 0.94), 2)
    assert a.manifest.digest == b.manifest.digest
    c = build_pbox_corpus(train, test, Cml(0.31457, 0.6532, 0.94), 3)
    assert a.manifest.digest != c.manifest.digest


def test_pbox_corpus_dims_mismatch(small_images):
    train, _ = small_images
    bad = IdxImages(Dims(14, 56), train.pixels[:10])
    with pytest.raises(ShapeError):
        build_pbox_corpus(train, bad, Cml(0.31457, 0.6532, 0.94), 1)


# --- LWC corpora -------------------------------------------------------------------------

def test_lwc_default_counts_are_thesis_counts():
    assert (KATAN_TRAIN_DEFAULT, KATAN_VAL_DEFAULT) == (1_470_000, 245_000)
    assert (SIMON_TRAIN_DEFAULT, SIMON_VAL_DEFAULT, SIMON_TEST_DEFAULT) == (2_000_000, 245_000, 50_000)


def test_katan_corpus_first_record_deterministic():
    a = build_katan_corpus(64, 8, seed=99)
    b = build_katan_corpus(64, 8, seed=99)
    assert np.array_equal(a.splits["train"].inputs[0], b.splits["train"].inputs[0])
    assert a.manifest.digest == b.manifest.digest
    c = build_katan_corpus(64, 8, seed=100)
    assert a.manifest.digest != c.manifest.digest


def test_katan_corpus_audit_consistency():
    corpus = build_katan_corpus(4000, 500, seed=7)
    assert audit_lwc_records(corpus, "train", 1000) == 1000
    assert audit_lwc_records(corpus, "val", 200) == 200


def test_simon_corpus_audit_consistency():
    corpus = build_simon_corpus(3000, 600, 400, seed=7)
    assert audit_lwc_records(corpus, "train", 1000) == 1000
    assert audit_lwc_records(corpus, "test", 200) == 200


def test_simon_disjoint_seeds_disjoint_keys():
    a = build_simon_corpus(2000, 10, 10, seed=1)
    b = build_simon_corpus(2000, 10, 10, seed=2)
    from permattack.lwc import bit_matrix_to_ints

    keys_a = set(bit_matrix_to_ints(a.splits["train"].targets).tolist())
    keys_b = set(bit_matrix_to_ints(b.splits["train"].targets).tolist())
    assert not keys_a & keys_b


def test_lwc_worker_count_does_not_change_bytes(monkeypatch):
    monkeypatch.setenv("PERMATTACK_THREADS", "1")
    a = build_katan_corpus(70_000, 1000, seed=5)  # spans two generation chunks
    monkeypatch.setenv("PERMATTACK_THREADS", "8")
    b = build_katan_corpus(70_000, 1000, seed=5)
    assert a.manifest.digest == b.manifest.digest


def test_lwc1_roundtrip(tmp_path):
    corpus = build_simon_corpus(500, 100, 50, seed=3)
    path = tmp_path / "simon.lwc1"
    write_lwc1(path, "simon32", corpus.splits["val"])
    name, split = read_lwc1(path)
    assert name == "simon32"
    assert np.array_equal(split.inputs, corpus.splits["val"].inputs)
    assert np.array_equal(split.targets, corpus.splits["val"].targets)


def test_lwc1_bad_magic(tmp_path):
    path = tmp_path / "bad.lwc1"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(DataFormatError):
        read_lwc1(path)


def test_lwc1_truncated(tmp_path):
    corpus = build_katan_corpus(100, 10, seed=1)
    path = tmp_path / "k.lwc1"
    write_lwc1(path, "katan32", corpus.splits["train"])
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DataFormatError):
        read_lwc1(path)


def test_manifest_json_roundtrip():
    m = DatasetManifest(corpus="katan-plaintext-recovery", cipher="katan32",
                        seed=9, counts={"train": 10, "val": 2}, digest="ab")
    back = DatasetManifest.from_json(m.to_json())
    assert back == m


@pytest.mark.slow
def test_full_size_default_corpora():
    corpus = build_katan_corpus(seed=0)
    assert corpus.splits["train"].inputs.shape[0] == 1_470_000
    assert corpus.splits["val"].inputs.shape[0] == 245_000
    assert audit_lwc_records(corpus, "train", 200) == 200
    simon = build_simon_corpus(seed=0)
    assert simon.splits["train"].inputs.shape[0] == 2_000_000
    assert simon.splits["val"].inputs.shape[0] == 245_000
    assert simon.splits["test"].inputs.shape[0] == 50_000


# --- shuffle_split -------------------------------------------------------------------------

def test_shuffle_split_identity_fraction():
    data = np.arange(12)
    (out,) = shuffle_split(data, seed=4, fractions=[1.0])
    assert sorted(out.tolist()) == list(range(12))


def test_shuffle_split_deterministic():
    data = np.arange(50)
    a = shuffle_split(data, seed=8, fractions=[0.6, 0.4])
    b = shuffle_split(data, seed=8, fractions=[0.6, 0.4])
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_shuffle_split_partition_exact():
    data = np.arange(11)
    parts = shuffle_split(data, seed=1, fractions=[0.5, 0.25, 0.25])
    assert sum(len(p) for p in parts) == 11
    assert sorted(np.concatenate(parts).tolist()) == list(range(11))


def test_shuffle_split_bad_fractions():
    with pytest.raises(InvalidParameterError):
        shuffle_split(np.arange(4), 0, [0.5, 0.4])


@settings(max_examples=50)
@given(st.integers(min_value=1, max_value=200), st.integers(min_value=0, max_value=2 ** 32))
def test_permutation_property(n, seed):
    perm = rng.permutation(n, seed)
    assert sorted(perm.tolist()) == list(range(n))
