"""Attack-corpus construction: IDX images, P-box pairs, KATAN/SIMON records.

Every corpus is reproducible byte-exactly from its manifest (seed + counts +
pattern/cipher), regardless of worker count: records derive their randomness
from per-record SplitMix64 seeds (see :mod:`permattack.rng`) and chunks are
assembled in index order.

Record randomness per index ``i``:

* KATAN: draws ``d0, d1, d2``; plaintext = ``d0 & 0xFFFFFFFF``, key =
  ``(d2 & 0xFFFF) << 64 | d1``.
* SIMON: draws ``d0, d1``; plaintext = ``d0 & 0xFFFFFFFF``, key = ``d1``.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lwc, rng
from .errors import DataFormatError, InvalidParameterError, ShapeError
from .pbox import Dims, GrayImage, PatternSpec, apply_pbox_batch, gen_pbox, invert_pbox

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
LWC1_MAGIC = b"LWC1"
CIPHER_IDS = {"katan32": 1, "simon32": 2}

KATAN_TRAIN_DEFAULT = 1_470_000
KATAN_VAL_DEFAULT = 245_000
SIMON_TRAIN_DEFAULT = 2_000_000
SIMON_VAL_DEFAULT = 245_000
SIMON_TEST_DEFAULT = 50_000

_CHUNK = 65536


def worker_count() -> int:
    """Worker bound from PERMATTACK_THREADS (output bytes never depend on it)."""
    env = os.environ.get("PERMATTACK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidParameterError(f"PERMATTACK_THREADS={env!r} is not an integer")
    return min(4, os.cpu_count() or 1)


# --- IDX container ---------------------------------------------------------------

@dataclass(frozen=True)
class IdxImages:
    """Decoded IDX image file: (count, rows*cols) uint8 pixel matrix."""

    dims: Dims
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 2 or px.shape[1] != self.dims.cells:
            raise ShapeError(f"expected (n, {self.dims.cells}) pixels, got {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def count(self) -> int:
        return self.pixels.shape[0]

    def image(self, i: int) -> GrayImage:
        return GrayImage(self.dims, self.pixels[i])


def _open_maybe_gzip(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path) -> IdxImages:
    """Read an IDX image file (big-endian magic 0x00000803)."""
    with _open_maybe_gzip(path) as f:
        blob = f.read()
    if len(blob) < 16:
        raise DataFormatError("truncated IDX header", offset=len(blob))
    magic, count, rows, cols = np.frombuffer(blob[:16], dtype=">u4")
    if int(magic) != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"bad IDX magic 0x{int(magic):08x}", offset=0)
    need = 16 + int(count) * int(rows) * int(cols)
    if len(blob) < need:
        raise DataFormatError(
            f"payload holds {len(blob) - 16} bytes, header promises {need - 16}", offset=len(blob)
        )
    pixels = np.frombuffer(blob[16:need], dtype=np.uint8).reshape(int(count), int(rows) * int(cols))
    return IdxImages(Dims(int(rows), int(cols)), pixels.copy())


def write_idx(images: IdxImages, path):
    """Write an IDX image file; lossless round-trip with :func:`read_idx`."""
    header = np.array([IDX_IMAGES_MAGIC, images.count, images.dims.rows, images.dims.cols], dtype=">u4")
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(images.pixels.tobytes())


def read_idx_labels(path) -> np.ndarray:
    """Read an IDX label file (big-endian magic 0x00000801)."""
    with _open_maybe_gzip(path) as f:
        blob = f.read()
    if len(blob) < 8:
        raise DataFormatError("truncated IDX label header", offset=len(blob))
    magic, count = np.frombuffer(blob[:8], dtype=">u4")
    if int(magic) != IDX_LABELS_MAGIC:
        raise DataFormatError(f"bad IDX label magic 0x{int(magic):08x}", offset=0)
    if len(blob) < 8 + int(count):
        raise DataFormatError(f"label payload short of {int(count)} entries", offset=len(blob))
    return np.frombuffer(blob[8:8 + int(count)], dtype=np.uint8).copy()


def write_idx_labels(labels: np.ndarray, path):
    header = np.array([IDX_LABELS_MAGIC, len(labels)], dtype=">u4")
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


# --- manifests --------------------------------------------------------------------

@dataclass
class DatasetManifest:
    """Everything needed to regenerate a corpus byte-exactly, plus its digest."""

    corpus: str
    seed: int
    counts: dict
    cipher: str | None = None
    pattern: dict | None = None
    rounds: int | None = None
    digest: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "corpus": self.corpus,
                "cipher": self.cipher,
                "pattern": self.pattern,
                "rounds": self.rounds,
                "seed": self.seed,
                "counts": self.counts,
                "digest": self.digest,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        return cls(
            corpus=d["corpus"],
            seed=d["seed"],
            counts=d["counts"],
            cipher=d.get("cipher"),
            pattern=d.get("pattern"),
            rounds=d.get("rounds"),
            digest=d.get("digest", ""),
        )


def _spec_to_dict(spec: PatternSpec) -> dict:
    d = {"pattern": spec.pattern}
    for name in spec.__dataclass_fields__:
        d[name] = getattr(spec, name)
    return d


# --- P-box corpora ------------------------------------------------------------------

@dataclass
class PboxCorpus:
    """Cipher/plain image pairs plus the key schedule that produced them."""

    dims: Dims
    train_cipher: np.ndarray
    train_plain: np.ndarray
    val_cipher: np.ndarray
    val_plain: np.ndarray
    schedule: list
    manifest: DatasetManifest


def encrypt_pixel_matrix(pixels: np.ndarray, schedule) -> np.ndarray:
    """Apply a key schedule to a (count, cells) pixel matrix, round by round."""
    out = pixels
    for key in schedule:
        out = apply_pbox_batch(out, key)
    return out


def decrypt_pixel_matrix(pixels: np.ndarray, schedule) -> np.ndarray:
    out = pixels
    for key in reversed(schedule):
        out = apply_pbox_batch(out, invert_pbox(key))
    return out


def build_pbox_corpus(train: IdxImages, test: IdxImages, spec: PatternSpec, rounds: int) -> PboxCorpus:
    """Encrypt train/test images with one chained key schedule.

    Ciphertexts keep the ordering of their plaintexts, so pair i is
    (cipher_i, plain_i).
    """
    if train.dims != test.dims:
        raise ShapeError(f"train dims {train.dims} != test dims {test.dims}")
    if rounds < 1:
        raise InvalidParameterError("rounds must be >= 1")
    spec.validate()
    schedule = []
    state = None
    for _ in range(rounds):
        key, state = gen_pbox(spec, train.dims, state)
        schedule.append(key)
    train_cipher = encrypt_pixel_matrix(train.pixels, schedule)
    val_cipher = encrypt_pixel_matrix(test.pixels, schedule)

    digest = hashlib.sha256()
    digest.update(train_cipher.tobytes())
    digest.update(train.pixels.tobytes())
    digest.update(val_cipher.tobytes())
    digest.update(test.pixels.tobytes())
    for key in schedule:
        digest.update(key.table.astype("<u4").tobytes())
    manifest = DatasetManifest(
        corpus="pbox",
        seed=0,
        counts={"train": train.count, "val": test.count},
        pattern=_spec_to_dict(spec),
        rounds=rounds,
        digest=digest.hexdigest(),
    )
    return PboxCorpus(train.dims, train_cipher, train.pixels, val_cipher, test.pixels, schedule, manifest)


# --- LWC corpora ---------------------------------------------------------------------

@dataclass
class LwcSplit:
    """Bit-level records: inputs and targets as (n, width) uint8 bit matrices."""

    inputs: np.ndarray
    targets: np.ndarray


@dataclass
class LwcCorpus:
    cipher: str
    splits: dict
    manifest: DatasetManifest


def _katan_chunk(seed: int, start: int, stop: int):
    idx = np.arange(start, stop, dtype=np.uint64)
    seeds = rng.record_seed_array(seed, idx)
    d0 = rng.stream_draw_array(seeds, 0)
    d1 = rng.stream_draw_array(seeds, 1)
    d2 = rng.stream_draw_array(seeds, 2)
    pt = d0 & np.uint64(0xFFFFFFFF)
    key_lo = d1
    key_hi = d2 & np.uint64(0xFFFF)
    ct = lwc.katan32_encrypt_many(pt, key_lo, key_hi)
    inputs = lwc.ints_to_bit_matrix(ct, 32)
    targets = lwc.ints_to_bit_matrix(pt, 32)
    return inputs, targets


def _simon_chunk(seed: int, start: int, stop: int):
    idx = np.arange(start, stop, dtype=np.uint64)
    seeds = rng.record_seed_array(seed, idx)
    d0 = rng.stream_draw_array(seeds, 0)
    d1 = rng.stream_draw_array(seeds, 1)
    pt = d0 & np.uint64(0xFFFFFFFF)
    key = d1
    ct = lwc.simon32_encrypt_many(pt, key)
    inputs = np.concatenate([lwc.ints_to_bit_matrix(pt, 32), lwc.ints_to_bit_matrix(ct, 32)], axis=1)
    targets = lwc.ints_to_bit_matrix(key, 64)
    return inputs, targets


def _generate_records(chunk_fn, seed: int, start: int, count: int):
    """Run chunk_fn over [start, start+count) with bounded workers, ordered output."""
    bounds = [(s, min(s + _CHUNK, start + count)) for s in range(start, start + count, _CHUNK)]
    workers = worker_count()
    if workers == 1 or len(bounds) == 1:
        parts = [chunk_fn(seed, a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: chunk_fn(seed, ab[0], ab[1]), bounds))
    inputs = np.concatenate([p[0] for p in parts], axis=0)
    targets = np.concatenate([p[1] for p in parts], axis=0)
    return inputs, targets


def _lwc_digest(splits: dict) -> str:
    digest = hashlib.sha256()
    for name in sorted(splits):
        digest.update(np.packbits(splits[name].inputs, axis=1).tobytes())
        digest.update(np.packbits(splits[name].targets, axis=1).tobytes())
    return digest.hexdigest()


def build_katan_corpus(n_train: int = KATAN_TRAIN_DEFAULT, n_val: int = KATAN_VAL_DEFAULT,
                       seed: int = 0) -> LwcCorpus:
    """Ciphertext-bits -> plaintext-bits records over fresh random (p, k) pairs.

    Record index space: train records are indices [0, n_train), validation
    records continue at [n_train, n_train + n_val).
    """
    if n_train <= 0 or n_val <= 0:
        raise InvalidParameterError("record counts must be positive")
    tr_in, tr_tg = _generate_records(_katan_chunk, seed, 0, n_train)
    va_in, va_tg = _generate_records(_katan_chunk, seed, n_train, n_val)
    splits = {"train": LwcSplit(tr_in, tr_tg), "val": LwcSplit(va_in, va_tg)}
    manifest = DatasetManifest(
        corpus="katan-plaintext-recovery",
        cipher="katan32",
        seed=seed,
        counts={"train": n_train, "val": n_val},
        digest=_lwc_digest(splits),
    )
    return LwcCorpus("katan32", splits, manifest)


def build_simon_corpus(n_train: int = SIMON_TRAIN_DEFAULT, n_val: int = SIMON_VAL_DEFAULT,
                       n_test: int = SIMON_TEST_DEFAULT, seed: int = 0) -> LwcCorpus:
    """(plaintext || ciphertext) bits -> key bits records for SIMON32/64."""
    if n_train <= 0 or n_val <= 0 or n_test <= 0:
        raise InvalidParameterError("record counts must be positive")
    tr = _generate_records(_simon_chunk, seed, 0, n_train)
    va = _generate_records(_simon_chunk, seed, n_train, n_val)
    te = _generate_records(_simon_chunk, seed, n_train + n_val, n_test)
    splits = {
        "train": LwcSplit(*tr),
        "val": LwcSplit(*va),
        "test": LwcSplit(*te),
    }
    manifest = DatasetManifest(
        corpus="simon-key-recovery",
        cipher="simon32",
        seed=seed,
        counts={"train": n_train, "val": n_val, "test": n_test},
        digest=_lwc_digest(splits),
    )
    return LwcCorpus("simon32", splits, manifest)


def audit_lwc_records(corpus: LwcCorpus, split: str, sample: int, seed: int = 1) -> int:
    """Re-encrypt ``sample`` records with the scalar reference ciphers.

    Returns the number of consistent records; every record must pass.  Keys
    are re-derived from the manifest seed, which is what makes this an
    independent check of the vectorised generation path.
    """
    data = corpus.splits[split]
    n = data.inputs.shape[0]
    offsets = {"train": 0}
    if corpus.cipher == "katan32":
        offsets["val"] = corpus.manifest.counts["train"]
    else:
        offsets["val"] = corpus.manifest.counts["train"]
        offsets["test"] = corpus.manifest.counts["train"] + corpus.manifest.counts["val"]
    base = offsets[split]
    pick = rng.permutation(n, seed)[:sample]
    good = 0
    for i in pick:
        rec_seed = rng.record_seed(corpus.manifest.seed, base + int(i))
        if corpus.cipher == "katan32":
            pt = rng.stream_draw(rec_seed, 0) & 0xFFFFFFFF
            key = ((rng.stream_draw(rec_seed, 2) & 0xFFFF) << 64) | rng.stream_draw(rec_seed, 1)
            ct = lwc.katan32_encrypt(pt, lwc.Katan80Key(key))
            ok = (lwc.BitVector(data.inputs[i], 32).as_int() == ct
                  and lwc.BitVector(data.targets[i], 32).as_int() == pt)
        else:
            pt = rng.stream_draw(rec_seed, 0) & 0xFFFFFFFF
            key = rng.stream_draw(rec_seed, 1)
            ct = lwc.simon32_encrypt(pt, lwc.Simon64Key.from_int(key))
            rec = lwc.BitVector(data.inputs[i], 64).as_int()
            ok = (rec >> 32 == pt and rec & 0xFFFFFFFF == ct
                  and lwc.BitVector(data.targets[i], 64).as_int() == key)
        good += int(ok)
    return good


# --- LWC1 record files -----------------------------------------------------------------

def write_lwc1(path, cipher: str, split: LwcSplit):
    """magic LWC1, cipher id byte, u64 LE count, packed-bit records (input, target)."""
    if cipher not in CIPHER_IDS:
        raise InvalidParameterError(f"unknown cipher {cipher!r}")
    n = split.inputs.shape[0]
    packed = np.concatenate(
        [np.packbits(split.inputs, axis=1), np.packbits(split.targets, axis=1)], axis=1
    )
    with open(path, "wb") as f:
        f.write(LWC1_MAGIC)
        f.write(bytes([CIPHER_IDS[cipher]]))
        f.write(np.uint64(n).tobytes())
        f.write(packed.tobytes())


def read_lwc1(path) -> tuple[str, LwcSplit]:
    widths = {1: (32, 32), 2: (64, 64)}
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != LWC1_MAGIC:
        raise DataFormatError(f"bad magic {blob[:4]!r}", offset=0)
    if len(blob) < 13:
        raise DataFormatError("truncated LWC1 header", offset=len(blob))
    cipher_id = blob[4]
    if cipher_id not in widths:
        raise DataFormatError(f"unknown cipher id {cipher_id}", offset=4)
    count = int(np.frombuffer(blob[5:13], dtype=np.uint64)[0])
    in_w, tg_w = widths[cipher_id]
    rec_bytes = (in_w + tg_w) // 8
    need = 13 + count * rec_bytes
    if len(blob) < need:
        raise DataFormatError(f"expected {need} bytes for {count} records", offset=len(blob))
    raw = np.frombuffer(blob[13:need], dtype=np.uint8).reshape(count, rec_bytes)
    bits = np.unpackbits(raw, axis=1)
    name = {1: "katan32", 2: "simon32"}[cipher_id]
    return name, LwcSplit(bits[:, :in_w].copy(), bits[:, in_w:in_w + tg_w].copy())


# --- splits -------------------------------------------------------------------------

def shuffle_split(samples: np.ndarray, seed: int, fractions) -> list[np.ndarray]:
    """Deterministically shuffle then partition rows of ``samples`` exactly.

    Fractions must sum to 1; split sizes use largest-remainder rounding so the
    partition covers every row exactly once.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.size == 0 or (fr < 0).any() or abs(fr.sum() - 1.0) > 1e-9:
        raise InvalidParameterError("fractions must be non-negative and sum to 1")
    n = len(samples)
    raw = fr * n
    counts = np.floor(raw).astype(int)
    rem = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    for i in range(rem):
        counts[order[i]] += 1
    perm = rng.permutation(n, seed)
    out = []
    at = 0
    for c in counts:
        out.append(samples[perm[at:at + c]])
        at += c
    return out


# --- source image corpora --------------------------------------------------------------

_IDX_NAMES = {
    "mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
              "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    "fashion": ("fashion-train-images-idx3-ubyte", "fashion-train-labels-idx1-ubyte",
                "fashion-t10k-images-idx3-ubyte", "fashion-t10k-labels-idx1-ubyte"),
}


@dataclass
class ImageCorpus:
    name: str
    source: str
    train: IdxImages
    train_labels: np.ndarray
    test: IdxImages
    test_labels: np.ndarray


def _find_idx_files(name: str, data_dir) -> tuple | None:
    candidates = []
    if data_dir:
        candidates.append(Path(data_dir))
    env = os.environ.get("PERMATTACK_DATA")
    if env:
        candidates.append(Path(env))
    candidates.append(Path("data"))
    names = _IDX_NAMES[name]
    for root in candidates:
        if not root.is_dir():
            continue
        sub = root / name if (root / name).is_dir() else root
        found = []
        for fname in names:
            for cand in (sub / fname, sub / (fname + ".gz")):
                if cand.exists():
                    found.append(cand)
                    break
        if len(found) == 4:
            return tuple(found)
    return None


def _upscale_digits(images8: np.ndarray) -> np.ndarray:
    """Nearest-neighbour resize of (n, 8, 8) digit images to (n, 28, 28) uint8."""
    idx = (np.arange(28) * 8) // 28
    big = images8[:, idx][:, :, idx]
    return np.clip(np.round(big * (255.0 / 16.0)), 0, 255).astype(np.uint8)


def _builtin_corpus(name: str) -> ImageCorpus:
    # Offline stand-in: scikit-learn's bundled handwritten digits, upscaled to
    # 28x28.  The "fashion" variant inverts and mirrors the images so transfer
    # experiments see a genuinely different pixel distribution.
    try:
        from sklearn.datasets import load_digits
    except ImportError as e:
        raise DataFormatError(
            "official IDX files not found and scikit-learn (fallback corpus) is unavailable"
        ) from e
    digits = load_digits()
    pixels = _upscale_digits(digits.images)
    labels = digits.target.astype(np.uint8)
    if name == "fashion":
        pixels = (255 - pixels)[:, :, ::-1]
    flat = pixels.reshape(len(pixels), -1)
    # The bundled digits are ordered by writer block, so split after a fixed
    # deterministic shuffle; both corpus variants share it, keeping pairs
    # aligned across "mnist" and "fashion".
    order = rng.permutation(len(flat), seed=0xD1617)
    flat = flat[order]
    labels = labels[order]
    n_train = 1437  # fixed 80/20 split of the 1797 bundled digits
    return ImageCorpus(
        name=name,
        source="builtin-digits" if name == "mnist" else "builtin-digits-transformed",
        train=IdxImages(Dims(28, 28), flat[:n_train]),
        train_labels=labels[:n_train],
        test=IdxImages(Dims(28, 28), flat[n_train:]),
        test_labels=labels[n_train:],
    )


def load_image_corpus(name: str = "mnist", data_dir=None, allow_fallback: bool = True) -> ImageCorpus:
    """Load a source image corpus by preference order.

    Looks for official IDX files under ``data_dir``, ``$PERMATTACK_DATA`` or
    ``./data`` (optionally gzipped, fashion files prefixed ``fashion-``);
    otherwise falls back to the built-in digits stand-in so the whole
    workbench runs offline.  The returned ``source`` field records which one
    was used.
    """
    if name not in _IDX_NAMES:
        raise InvalidParameterError(f"unknown corpus {name!r}; expected mnist or fashion")
    files = _find_idx_files(name, data_dir)
    if files:
        return ImageCorpus(
            name=name,
            source="idx-files",
            train=read_idx(files[0]),
            train_labels=read_idx_labels(files[1]),
            test=read_idx(files[2]),
            test_labels=read_idx_labels(files[3]),
        )
    if not allow_fallback:
        raise DataFormatError(f"official IDX files for {name!r} not found and fallback disabled")
    return _builtin_corpus(name)
