"""Bit-exact KATAN32 and SIMON32/64 block ciphers plus bit/real encodings.

Conventions (fixed so datasets are byte-exact reproducible):

* ``Block32`` is a 32-bit unsigned integer.
* KATAN32 keys are 80-bit unsigned integers; key bit ``i`` (LSB = bit 0)
  is schedule bit ``k_i``.
* SIMON32/64 keys are four 16-bit words given most-significant-first
  ``(w3, w2, w1, w0)``; the round-key schedule starts from the least
  significant word ``w0``.
* ``BitVector`` bit sequences are most-significant-bit-first.

Scalar functions are the reference; ``*_many`` variants are vectorised over
numpy arrays for corpus generation and are tested against the scalar path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, InvalidParameterError, ShapeError

MASK32 = 0xFFFFFFFF
MASK16 = 0xFFFF

# Irregular-update sequence of the KATAN family (254 bits, MSB-first packed),
# transcribed from the cipher's design document.
_IR_HEX = "fe355ecca4463c2141f3f51530cefba569cd8bb796d724d1c4f43ac1640dc048"
_IR_INT = int(_IR_HEX, 16) >> 2
KATAN_ROUNDS = 254
IR = tuple((_IR_INT >> (KATAN_ROUNDS - 1 - i)) & 1 for i in range(KATAN_ROUNDS))
assert len(IR) == KATAN_ROUNDS and IR[:8] == (1, 1, 1, 1, 1, 1, 1, 0)

SIMON_ROUNDS = 32
# z0 constant sequence of the SIMON family (62 bits).
_Z0 = (1, 1, 1, 1, 1, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 1, 0, 1, 1, 0, 0, 0, 0, 1,
       1, 1, 0, 0, 1, 1, 0, 1, 1, 1, 1, 1, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 1, 0,
       1, 1, 0, 0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 0)


@dataclass(frozen=True)
class Katan80Key:
    """Exactly 80 bits of KATAN key material."""

    value: int

    def __post_init__(self):
        if not 0 <= self.value < (1 << 80):
            raise InvalidParameterError("KATAN key must be an 80-bit integer")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Katan80Key":
        if len(raw) != 10:
            raise InvalidParameterError("KATAN key must be 10 octets")
        return cls(int.from_bytes(raw, "big"))


@dataclass(frozen=True)
class Simon64Key:
    """Four 16-bit words, most significant first."""

    words: tuple

    def __post_init__(self):
        if len(self.words) != 4 or any(not 0 <= w <= MASK16 for w in self.words):
            raise InvalidParameterError("SIMON key must be four 16-bit words")

    @classmethod
    def from_int(cls, value: int) -> "Simon64Key":
        if not 0 <= value < (1 << 64):
            raise InvalidParameterError("SIMON key must be a 64-bit integer")
        return cls(tuple((value >> s) & MASK16 for s in (48, 32, 16, 0)))

    def as_int(self) -> int:
        w3, w2, w1, w0 = self.words
        return (w3 << 48) | (w2 << 32) | (w1 << 16) | w0


# --- KATAN32 ---------------------------------------------------------------------

def _katan_subkeys(key: int) -> list[int]:
    """508 schedule bits: k_0..k_79 from the key, then the x^80+x^61+x^50+x^13+1 LFSR."""
    bits = [(key >> i) & 1 for i in range(80)]
    for i in range(2 * KATAN_ROUNDS - 80):
        bits.append(bits[i] ^ bits[i + 19] ^ bits[i + 30] ^ bits[i + 67])
    return bits


def katan32_encrypt(p: int, k: Katan80Key) -> int:
    """KATAN32 encryption: two NLFSRs (13 + 19 bits), 254 rounds."""
    if not 0 <= p <= MASK32:
        raise InvalidParameterError("plaintext must be a 32-bit integer")
    sub = _katan_subkeys(k.value)
    l2 = p & 0x7FFFF          # plaintext bit 0 -> L2 position 0
    l1 = (p >> 19) & 0x1FFF   # plaintext bit 31 -> L1 position 12
    for r in range(KATAN_ROUNDS):
        ka, kb = sub[2 * r], sub[2 * r + 1]
        fa = ((l1 >> 12) ^ (l1 >> 7) ^ ((l1 >> 8) & (l1 >> 5)) ^ (IR[r] & (l1 >> 3)) ^ ka) & 1
        fb = ((l2 >> 18) ^ (l2 >> 7) ^ ((l2 >> 12) & (l2 >> 10)) ^ ((l2 >> 8) & (l2 >> 3)) ^ kb) & 1
        l1 = ((l1 << 1) | fb) & 0x1FFF
        l2 = ((l2 << 1) | fa) & 0x7FFFF
    return (l1 << 19) | l2


def katan32_decrypt(c: int, k: Katan80Key) -> int:
    """Exact inverse of :func:`katan32_encrypt`."""
    if not 0 <= c <= MASK32:
        raise InvalidParameterError("ciphertext must be a 32-bit integer")
    sub = _katan_subkeys(k.value)
    l2 = c & 0x7FFFF
    l1 = (c >> 19) & 0x1FFF
    for r in range(KATAN_ROUNDS - 1, -1, -1):
        ka, kb = sub[2 * r], sub[2 * r + 1]
        fa = l2 & 1
        fb = l1 & 1
        l1o = l1 >> 1  # positions 0..11 of the pre-shift register
        l2o = l2 >> 1
        b12 = (fa ^ (l1o >> 7) ^ ((l1o >> 8) & (l1o >> 5)) ^ (IR[r] & (l1o >> 3)) ^ ka) & 1
        b18 = (fb ^ (l2o >> 7) ^ ((l2o >> 12) & (l2o >> 10)) ^ ((l2o >> 8) & (l2o >> 3)) ^ kb) & 1
        l1 = l1o | (b12 << 12)
        l2 = l2o | (b18 << 18)
    return (l1 << 19) | l2


def katan32_encrypt_many(p: np.ndarray, key_lo: np.ndarray, key_hi: np.ndarray) -> np.ndarray:
    """Vectorised KATAN32 over uint64 plaintexts and (lo 64 | hi 16) key halves."""
    p = p.astype(np.int64, copy=False)
    n = p.shape[0]
    if key_lo.shape != (n,) or key_hi.shape != (n,):
        raise ShapeError("key arrays must match plaintext count")
    # Rolling 80-bit key window, one uint8 column per schedule position.
    window = [None] * 80
    klo = key_lo.astype(np.uint64, copy=False)
    khi = key_hi.astype(np.uint64, copy=False)
    for i in range(80):
        src = klo >> np.uint64(i) if i < 64 else khi >> np.uint64(i - 64)
        window[i] = (src & np.uint64(1)).astype(np.int64)

    pos = 0  # index of schedule bit k_i within the circular window

    def next_bit():
        nonlocal pos
        out = window[pos % 80]
        new = window[pos % 80] ^ window[(pos + 19) % 80] ^ window[(pos + 30) % 80] ^ window[(pos + 67) % 80]
        window[pos % 80] = new
        pos += 1
        return out

    l2 = p & 0x7FFFF
    l1 = (p >> 19) & 0x1FFF
    one = np.int64(1)
    for r in range(KATAN_ROUNDS):
        ka = next_bit()
        kb = next_bit()
        fa = ((l1 >> 12) ^ (l1 >> 7) ^ ((l1 >> 8) & (l1 >> 5)) ^ (IR[r] & (l1 >> 3)) ^ ka) & one
        fb = ((l2 >> 18) ^ (l2 >> 7) ^ ((l2 >> 12) & (l2 >> 10)) ^ ((l2 >> 8) & (l2 >> 3)) ^ kb) & one
        l1 = ((l1 << 1) | fb) & 0x1FFF
        l2 = ((l2 << 1) | fa) & 0x7FFFF
    return ((l1 << 19) | l2).astype(np.uint64)


def katan32_decrypt_many(c: np.ndarray, key_lo: np.ndarray, key_hi: np.ndarray) -> np.ndarray:
    """Vectorised KATAN32 decryption (mirrors :func:`katan32_encrypt_many`)."""
    c = c.astype(np.int64, copy=False)
    n = c.shape[0]
    if key_lo.shape != (n,) or key_hi.shape != (n,):
        raise ShapeError("key arrays must match ciphertext count")
    klo = key_lo.astype(np.uint64, copy=False)
    khi = key_hi.astype(np.uint64, copy=False)
    window = [None] * 80
    for i in range(80):
        src = klo >> np.uint64(i) if i < 64 else khi >> np.uint64(i - 64)
        window[i] = (src & np.uint64(1)).astype(np.int64)
    # Materialise the full subkey stream (508 columns), then walk it backwards.
    stream = []
    pos = 0
    for _ in range(2 * KATAN_ROUNDS):
        out = window[pos % 80]
        new = window[pos % 80] ^ window[(pos + 19) % 80] ^ window[(pos + 30) % 80] ^ window[(pos + 67) % 80]
        stream.append(out)
        window[pos % 80] = new
        pos += 1
    l2 = c & 0x7FFFF
    l1 = (c >> 19) & 0x1FFF
    one = np.int64(1)
    for r in range(KATAN_ROUNDS - 1, -1, -1):
        ka, kb = stream[2 * r], stream[2 * r + 1]
        fa = l2 & one
        fb = l1 & one
        l1o = l1 >> 1
        l2o = l2 >> 1
        b12 = (fa ^ (l1o >> 7) ^ ((l1o >> 8) & (l1o >> 5)) ^ (IR[r] & (l1o >> 3)) ^ ka) & one
        b18 = (fb ^ (l2o >> 7) ^ ((l2o >> 12) & (l2o >> 10)) ^ ((l2o >> 8) & (l2o >> 3)) ^ kb) & one
        l1 = l1o | (b12 << 12)
        l2 = l2o | (b18 << 18)
    return ((l1 << 19) | l2).astype(np.uint64)


# --- SIMON32/64 ------------------------------------------------------------------

def _rol16(x: int, r: int) -> int:
    return ((x << r) | (x >> (16 - r))) & MASK16


def _ror16(x: int, r: int) -> int:
    return ((x >> r) | (x << (16 - r))) & MASK16


def _simon_schedule(key: Simon64Key) -> list[int]:
    k = [key.words[3], key.words[2], key.words[1], key.words[0]]
    for i in range(4, SIMON_ROUNDS):
        tmp = _ror16(k[i - 1], 3) ^ k[i - 3]
        tmp ^= _ror16(tmp, 1)
        k.append((~k[i - 4] & MASK16) ^ tmp ^ _Z0[(i - 4) % 62] ^ 3)
    return k


def simon32_encrypt(p: int, k: Simon64Key) -> int:
    """SIMON32/64: 32 Feistel rounds on 16-bit halves (left = high word)."""
    if not 0 <= p <= MASK32:
        raise InvalidParameterError("plaintext must be a 32-bit integer")
    ks = _simon_schedule(k)
    x, y = (p >> 16) & MASK16, p & MASK16
    for i in range(SIMON_ROUNDS):
        x, y = y ^ (_rol16(x, 1) & _rol16(x, 8)) ^ _rol16(x, 2) ^ ks[i], x
    return (x << 16) | y


def simon32_decrypt(c: int, k: Simon64Key) -> int:
    """Exact inverse of :func:`simon32_encrypt`."""
    if not 0 <= c <= MASK32:
        raise InvalidParameterError("ciphertext must be a 32-bit integer")
    ks = _simon_schedule(k)
    x, y = (c >> 16) & MASK16, c & MASK16
    for i in range(SIMON_ROUNDS - 1, -1, -1):
        x, y = y, x ^ (_rol16(y, 1) & _rol16(y, 8)) ^ _rol16(y, 2) ^ ks[i]
    return (x << 16) | y


def simon32_encrypt_many(p: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Vectorised SIMON32/64 over uint64 plaintext and 64-bit key arrays."""
    p = p.astype(np.uint64, copy=False)
    keys = keys.astype(np.uint64, copy=False)
    if keys.shape != p.shape:
        raise ShapeError("key array must match plaintext count")
    m16 = np.uint64(MASK16)

    def rol(x, r):
        return ((x << np.uint64(r)) | (x >> np.uint64(16 - r))) & m16

    def ror(x, r):
        return ((x >> np.uint64(r)) | (x << np.uint64(16 - r))) & m16

    k = [(keys >> np.uint64(s)) & m16 for s in (0, 16, 32, 48)]
    for i in range(4, SIMON_ROUNDS):
        tmp = ror(k[i - 1], 3) ^ k[i - 3]
        tmp = tmp ^ ror(tmp, 1)
        k.append((~k[i - 4] & m16) ^ tmp ^ np.uint64(_Z0[(i - 4) % 62] ^ 3))
    x, y = (p >> np.uint64(16)) & m16, p & m16
    for i in range(SIMON_ROUNDS):
        x, y = y ^ (rol(x, 1) & rol(x, 8)) ^ rol(x, 2) ^ k[i], x
    return (x << np.uint64(16)) | y


def simon32_decrypt_many(c: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Vectorised SIMON32/64 decryption."""
    c = c.astype(np.uint64, copy=False)
    keys = keys.astype(np.uint64, copy=False)
    if keys.shape != c.shape:
        raise ShapeError("key array must match ciphertext count")
    m16 = np.uint64(MASK16)

    def rol(x, r):
        return ((x << np.uint64(r)) | (x >> np.uint64(16 - r))) & m16

    def ror(x, r):
        return ((x >> np.uint64(r)) | (x << np.uint64(16 - r))) & m16

    k = [(keys >> np.uint64(s)) & m16 for s in (0, 16, 32, 48)]
    for i in range(4, SIMON_ROUNDS):
        tmp = ror(k[i - 1], 3) ^ k[i - 3]
        tmp = tmp ^ ror(tmp, 1)
        k.append((~k[i - 4] & m16) ^ tmp ^ np.uint64(_Z0[(i - 4) % 62] ^ 3))
    x, y = (c >> np.uint64(16)) & m16, c & m16
    for i in range(SIMON_ROUNDS - 1, -1, -1):
        x, y = y, x ^ (rol(y, 1) & rol(y, 8)) ^ rol(y, 2) ^ k[i]
    return (x << np.uint64(16)) | y


# --- bit / real encodings ----------------------------------------------------------

@dataclass(frozen=True)
class BitVector:
    """Fixed-width bit sequence, most significant bit first."""

    bits: np.ndarray
    width: int

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8).ravel()
        if b.size != self.width:
            raise ShapeError(f"expected {self.width} bits, got {b.size}")
        if b.size and b.max() > 1:
            raise InvalidParameterError("bits must be 0 or 1")
        object.__setattr__(self, "bits", b)

    def as_int(self) -> int:
        v = 0
        for b in self.bits:
            v = (v << 1) | int(b)
        return v


def to_bits(x: int, width: int) -> BitVector:
    """Integer to MSB-first bits of the given width."""
    if not 0 <= x < (1 << width):
        raise InvalidParameterError(f"value does not fit in {width} bits")
    return BitVector(np.array([(x >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8), width)


def to_reals(b: BitVector) -> np.ndarray:
    """Bits to float64 0.0/1.0 values."""
    return b.bits.astype(np.float64)


def from_reals(v: np.ndarray, threshold: float = 0.5) -> BitVector:
    """Threshold reals in [0, 1] back to bits; values equal to the threshold map to 1."""
    a = np.asarray(v, dtype=np.float64).ravel()
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise InvalidParameterError("real values must lie in [0, 1]")
    return BitVector((a >= threshold).astype(np.uint8), a.size)


def ints_to_bit_matrix(values: np.ndarray, width: int) -> np.ndarray:
    """(n,) uint64 integers to an (n, width) uint8 bit matrix, MSB first."""
    v = values.astype(np.uint64, copy=False)
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    return ((v[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)


def bit_matrix_to_ints(bits: np.ndarray) -> np.ndarray:
    """(n, width) uint8 MSB-first bit matrix back to uint64 integers."""
    width = bits.shape[1]
    if width > 64:
        raise InvalidParameterError("bit matrix wider than 64 bits")
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    return (bits.astype(np.uint64) << shifts[None, :]).sum(axis=1, dtype=np.uint64)


# --- golden vector files -------------------------------------------------------------

def write_golden(path, triples):
    """One ``plaintext key ciphertext`` hex triple per line."""
    with open(path, "w") as f:
        for p, k, c in triples:
            f.write(f"{p:08x} {k:x} {c:08x}\n")


def read_golden(path):
    triples = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataFormatError(f"line {lineno}: expected 3 hex fields, got {len(parts)}")
            triples.append(tuple(int(x, 16) for x in parts))
    return triples
