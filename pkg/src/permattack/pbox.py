"""Permutation-box generation and the multi-round permutation cipher.

A P-box over an M x N image is a bijective table ``t`` of length M*N: the
pixel at flat position ``i`` of the input lands at position ``t[i]`` of the
output.  Four deterministic patterns turn a parameter record into such a
table:

* ``logistic`` — orbit of the logistic map, argsort-ranked,
* ``lorenz`` — interleaved Lorenz-system coordinates, argsort-ranked,
* ``gcbpm`` — Gray-code-based bijection, restricted to the cell range by
  cycle-walking,
* ``cml`` — coupled-map-lattice values driving per-row right cyclic shifts
  and per-column up cyclic shifts.

All operations are pure given explicit state; generator state is a value the
caller threads through, so everything is safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DataFormatError, DegenerateOrbitError, InvalidParameterError, ShapeError

LOGISTIC_TRANSIENT = 1000
LORENZ_TRANSIENT = 3000
LORENZ_DT = 0.01
CML_TAU_LAMBDA = 3.99


@dataclass(frozen=True)
class Dims:
    """Image dimensions: ``rows`` x ``cols`` cells."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidParameterError(f"dims must be >= 1x1, got {self.rows}x{self.cols}")

    @property
    def cells(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class GrayImage:
    """Flattened grayscale image with intensities in [0, 255]."""

    dims: Dims
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8).ravel()
        if px.size != self.dims.cells:
            raise ShapeError(f"expected {self.dims.cells} pixels, got {px.size}")
        object.__setattr__(self, "pixels", px)

    def as_grid(self) -> np.ndarray:
        return self.pixels.reshape(self.dims.rows, self.dims.cols)


@dataclass(frozen=True)
class PBox:
    """Bijective position table over the cells of a ``Dims`` grid."""

    dims: Dims
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.int64).ravel()
        n = self.dims.cells
        if t.size != n:
            raise ShapeError(f"table length {t.size} != cell count {n}")
        if n > 0 and (t.min() < 0 or t.max() >= n or np.bincount(t, minlength=n).max() != 1):
            raise InvalidParameterError("table is not a permutation of [0, n)")
        object.__setattr__(self, "table", t)


# --- pattern parameter records -------------------------------------------------

@dataclass(frozen=True)
class Logistic:
    """Logistic-map pattern: r_{n+1} = lam * r_n * (1 - r_n)."""

    r0: float
    lam: float
    pattern = "logistic"

    def validate(self):
        if not 0.0 < self.r0 < 1.0:
            raise InvalidParameterError(f"r0 must lie strictly in (0,1), got {self.r0}")
        if not 0.0 < self.lam <= 4.0:
            raise InvalidParameterError(f"lambda must lie in (0,4], got {self.lam}")


@dataclass(frozen=True)
class Lorenz:
    """Lorenz-system pattern; a0/b0/c0 are the initial coordinates."""

    a0: float
    b0: float
    c0: float
    pattern = "lorenz"

    def validate(self):
        for name in ("a0", "b0", "c0"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise InvalidParameterError(f"{name} must be finite, got {v}")


@dataclass(frozen=True)
class Gcbpm:
    """Gray-code-based pattern with shift offsets beta and xor masks delta.

    The index domain is k-bit where k is the smallest width with 2**k >= M*N;
    deltas are reduced to k bits at generation time and both betas must
    satisfy beta + 1 < k.
    """

    beta1: int
    beta2: int
    delta1: int
    delta2: int
    pattern = "gcbpm"

    def validate(self):
        for name in ("beta1", "beta2"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")
        for name in ("delta1", "delta2"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")


@dataclass(frozen=True)
class Cml:
    """Coupled-map-lattice pattern: sites x1, y2 seed the lattice, eps couples."""

    x1: float
    y2: float
    eps: float
    pattern = "cml"

    def validate(self):
        for name in ("x1", "y2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidParameterError(f"{name} must lie strictly in (0,1), got {v}")
        if not 0.0 <= self.eps <= 1.0:
            raise InvalidParameterError(f"eps must lie in [0,1], got {self.eps}")


PatternSpec = Union[Logistic, Lorenz, Gcbpm, Cml]


# --- generator continuation state ----------------------------------------------

@dataclass(frozen=True)
class LogisticState:
    r: float
    pattern = "logistic"


@dataclass(frozen=True)
class LorenzState:
    a: float
    b: float
    c: float
    pattern = "lorenz"


@dataclass(frozen=True)
class GcbpmState:
    delta1: int
    delta2: int
    pattern = "gcbpm"


@dataclass(frozen=True)
class CmlState:
    lattice: tuple
    pattern = "cml"


GeneratorState = Union[LogisticState, LorenzState, GcbpmState, CmlState]


# --- primitive operations ------------------------------------------------------

def gray(theta: int, beta: int, k: int) -> int:
    """Gray-code map ``theta ^ (theta >> (beta + 1))`` on k-bit integers.

    Bijective on [0, 2**k) for any fixed beta with beta + 1 < k.
    """
    if k < 1:
        raise InvalidParameterError(f"bit width k must be >= 1, got {k}")
    if beta < 0:
        raise InvalidParameterError(f"beta must be non-negative, got {beta}")
    if beta + 1 >= k:
        raise InvalidParameterError(f"shift amount {beta + 1} >= bit width {k}")
    if not 0 <= theta < (1 << k):
        raise InvalidParameterError(f"theta {theta} is not a {k}-bit integer")
    return theta ^ (theta >> (beta + 1))


def rank_permutation(values: Sequence[float]) -> np.ndarray:
    """Stable argsort ranks of ``values`` as a permutation of [0, len).

    Ties are broken by original index, so the result is deterministic and
    all-equal input yields the identity.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise InvalidParameterError("cannot rank an empty value sequence")
    return np.argsort(v, kind="stable").astype(np.int64)


def _check_orbit_diversity(values: np.ndarray, n: int):
    if np.unique(values).size < n / 2:
        raise DegenerateOrbitError(
            f"orbit produced {np.unique(values).size} distinct values for {n} cells"
        )


def _logistic_step(r: float, lam: float) -> float:
    return lam * r * (1.0 - r)


def _gen_logistic(spec: Logistic, dims: Dims, state: LogisticState | None):
    n = dims.cells
    if state is None:
        r = spec.r0
        for _ in range(LOGISTIC_TRANSIENT):
            r = _logistic_step(r, spec.lam)
    else:
        r = state.r
    values = np.empty(n, dtype=np.float64)
    for i in range(n):
        r = _logistic_step(r, spec.lam)
        values[i] = r
    _check_orbit_diversity(values, n)
    return PBox(dims, rank_permutation(values)), LogisticState(r)


def _lorenz_rk4(a: float, b: float, c: float):
    def deriv(a, b, c):
        return 10.0 * (b - a), a * (28.0 - c) - b, a * b - (8.0 / 3.0) * c

    h = LORENZ_DT
    k1a, k1b, k1c = deriv(a, b, c)
    k2a, k2b, k2c = deriv(a + 0.5 * h * k1a, b + 0.5 * h * k1b, c + 0.5 * h * k1c)
    k3a, k3b, k3c = deriv(a + 0.5 * h * k2a, b + 0.5 * h * k2b, c + 0.5 * h * k2c)
    k4a, k4b, k4c = deriv(a + h * k3a, b + h * k3b, c + h * k3c)
    return (
        a + h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a),
        b + h / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b),
        c + h / 6.0 * (k1c + 2 * k2c + 2 * k3c + k4c),
    )


def _gen_lorenz(spec: Lorenz, dims: Dims, state: LorenzState | None):
    n = dims.cells
    if state is None:
        a, b, c = spec.a0, spec.b0, spec.c0
        for _ in range(LORENZ_TRANSIENT):
            a, b, c = _lorenz_rk4(a, b, c)
    else:
        a, b, c = state.a, state.b, state.c
    # Interleave the three coordinate sequences (a, b, c, a, b, c, ...) until
    # the table is full; order-deterministic by construction.
    values = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        a, b, c = _lorenz_rk4(a, b, c)
        for coord in (a, b, c):
            if i < n:
                values[i] = coord
                i += 1
    _check_orbit_diversity(values, n)
    return PBox(dims, rank_permutation(values)), LorenzState(a, b, c)


def _gcbpm_width(n: int) -> int:
    return max((n - 1).bit_length(), 1)


def _gen_gcbpm(spec: Gcbpm, dims: Dims, state: GcbpmState | None):
    n = dims.cells
    k = _gcbpm_width(n)
    for name, beta in (("beta1", spec.beta1), ("beta2", spec.beta2)):
        if beta + 1 >= k:
            raise InvalidParameterError(
                f"{name}={beta} needs shift {beta + 1} < index bit width {k} for {n} cells"
            )
    mask = (1 << k) - 1
    d1 = (spec.delta1 if state is None else state.delta1) & mask
    d2 = (spec.delta2 if state is None else state.delta2) & mask
    if spec.beta1 == spec.beta2 and d1 == d2:
        raise DegenerateOrbitError("identical Gray maps (beta1==beta2, delta1==delta2) yield the identity")

    theta = np.arange(1 << k, dtype=np.int64)
    i1 = (theta ^ (theta >> (spec.beta1 + 1))) ^ d1
    i2 = (theta ^ (theta >> (spec.beta2 + 1))) ^ d2
    # Pixel at location I1(theta) moves to I2(theta): the map is I2 o I1^-1.
    g = np.empty(1 << k, dtype=np.int64)
    g[i1] = i2
    table = np.empty(n, dtype=np.int64)
    for x in range(n):
        y = g[x]
        while y >= n:  # cycle-walk back into the valid cell range
            y = g[y]
        table[x] = y
    # Chain the next round by advancing each delta through the opposing map.
    nd1 = ((d1 ^ (d1 >> (spec.beta2 + 1))) ^ d2) & mask
    nd2 = ((d2 ^ (d2 >> (spec.beta1 + 1))) ^ d1) & mask
    return PBox(dims, table), GcbpmState(nd1, nd2)


def _cml_tau(x: np.ndarray) -> np.ndarray:
    return CML_TAU_LAMBDA * x * (1.0 - x)


def _cml_iterate(lattice: np.ndarray, eps: float, steps: int) -> np.ndarray:
    f = lattice
    for _ in range(steps):
        t = _cml_tau(f)
        f = (1.0 - eps) * t + eps * np.roll(t, 1)  # periodic boundary f(0) = f(L)
    return f


def _cml_shifts(lattice: np.ndarray, count: int, modulus: int) -> np.ndarray:
    vals = lattice[np.arange(count) % lattice.size]
    return (vals * 1e16).astype(np.int64) % modulus


def _gen_cml(spec: Cml, dims: Dims, state: CmlState | None):
    m, n = dims.rows, dims.cols
    width = max(m, n)
    if state is None:
        lattice = np.empty(width, dtype=np.float64)
        lattice[0] = spec.x1
        if width > 1:
            lattice[1] = spec.y2
        x = spec.x1
        for i in range(2, width):
            x = CML_TAU_LAMBDA * x * (1.0 - x)
            lattice[i] = x
    else:
        lattice = np.asarray(state.lattice, dtype=np.float64)
        if lattice.size != width:
            raise ShapeError(f"lattice width {lattice.size} does not match dims {m}x{n}")

    steps = max(m, n)
    row_state = _cml_iterate(lattice, spec.eps, steps)
    col_state = _cml_iterate(row_state, spec.eps, steps)
    row_shift = _cml_shifts(row_state, m, n)  # right cyclic shift per row
    col_shift = _cml_shifts(col_state, n, m)  # up cyclic shift per column

    if dims.cells > 1 and not row_shift.any() and not col_shift.any():
        raise DegenerateOrbitError("all cyclic shifts are zero; lattice orbit is degenerate")

    r = np.repeat(np.arange(m), n)
    c = np.tile(np.arange(n), m)
    c2 = (c + row_shift[r]) % n
    r2 = (r - col_shift[c2]) % m
    return PBox(dims, r2 * n + c2), CmlState(tuple(col_state.tolist()))


_GENERATORS = {
    "logistic": _gen_logistic,
    "lorenz": _gen_lorenz,
    "gcbpm": _gen_gcbpm,
    "cml": _gen_cml,
}


def gen_pbox(spec: PatternSpec, dims: Dims, state: GeneratorState | None = None):
    """Generate a P-box for ``dims`` from ``spec``.

    Returns ``(pbox, next_state)``.  Passing the returned state back in
    continues the underlying sequence, so consecutive calls yield the round
    keys K_1, K_2, ... of a multi-round schedule.  A fresh call (state=None)
    is fully determined by (spec, dims).
    """
    spec.validate()
    if state is not None and state.pattern != spec.pattern:
        raise InvalidParameterError(
            f"state pattern {state.pattern!r} does not match spec pattern {spec.pattern!r}"
        )
    if dims.cells == 1:
        # The only permutation of a single cell; generators are bypassed.
        pbox = PBox(dims, np.zeros(1, dtype=np.int64))
        return pbox, state if state is not None else _fresh_state(spec)
    return _GENERATORS[spec.pattern](spec, dims, state)


def _fresh_state(spec: PatternSpec) -> GeneratorState:
    if spec.pattern == "logistic":
        return LogisticState(spec.r0)
    if spec.pattern == "lorenz":
        return LorenzState(spec.a0, spec.b0, spec.c0)
    if spec.pattern == "gcbpm":
        return GcbpmState(spec.delta1, spec.delta2)
    return CmlState((spec.x1,))


def apply_pbox(img: GrayImage, p: PBox) -> GrayImage:
    """Permute ``img``: output pixel at ``p.table[i]`` equals input pixel ``i``."""
    if img.dims != p.dims:
        raise ShapeError(f"image dims {img.dims} != pbox dims {p.dims}")
    out = np.empty_like(img.pixels)
    out[p.table] = img.pixels
    return GrayImage(img.dims, out)


def apply_pbox_batch(pixels: np.ndarray, p: PBox) -> np.ndarray:
    """Vectorised :func:`apply_pbox` over a (count, cells) uint8 array."""
    if pixels.ndim != 2 or pixels.shape[1] != p.dims.cells:
        raise ShapeError(f"expected (n, {p.dims.cells}) pixel array, got {pixels.shape}")
    out = np.empty_like(pixels)
    out[:, p.table] = pixels
    return out


def invert_pbox(p: PBox) -> PBox:
    """Inverse table: ``invert(p).table[p.table[i]] == i`` for all i."""
    inv = np.empty_like(p.table)
    inv[p.table] = np.arange(p.table.size, dtype=np.int64)
    return PBox(p.dims, inv)


def compose(first: PBox, then: PBox) -> PBox:
    """P-box equal to applying ``first`` and then ``then``."""
    if first.dims != then.dims:
        raise ShapeError("cannot compose P-boxes of different dims")
    return PBox(first.dims, then.table[first.table])


def encrypt_rounds(
    images: Sequence[GrayImage],
    spec: PatternSpec,
    rounds: int,
    state: GeneratorState | None = None,
):
    """Multi-round permutation encryption.

    Per round r: generate K_r from the chained generator state, permute every
    image, and feed the ciphertexts into the next round.  Returns
    ``(ciphertexts, schedule)`` where ``schedule`` is the ordered list of
    round keys.
    """
    if rounds < 1:
        raise InvalidParameterError(f"rounds must be >= 1, got {rounds}")
    if len(images) == 0:
        raise InvalidParameterError("image sequence is empty")
    dims = images[0].dims
    for img in images:
        if img.dims != dims:
            raise ShapeError("all images must share dims")
    batch = np.stack([img.pixels for img in images])
    schedule: list[PBox] = []
    for _ in range(rounds):
        key, state = gen_pbox(spec, dims, state)
        schedule.append(key)
        batch = apply_pbox_batch(batch, key)
    return [GrayImage(dims, row) for row in batch], schedule


def decrypt_rounds(images: Sequence[GrayImage], keys: Sequence[PBox]):
    """Exact inverse of :func:`encrypt_rounds` given its key schedule."""
    if len(images) == 0:
        raise InvalidParameterError("image sequence is empty")
    if len(keys) == 0:
        raise InvalidParameterError("key schedule is empty")
    dims = images[0].dims
    for img in images:
        if img.dims != dims:
            raise ShapeError("all images must share dims")
    for key in keys:
        if key.dims != dims:
            raise ShapeError(f"key dims {key.dims} do not match image dims {dims}")
    batch = np.stack([img.pixels for img in images])
    for key in reversed(keys):
        batch = apply_pbox_batch(batch, invert_pbox(key))
    return [GrayImage(dims, row) for row in batch]


# --- PBX1 schedule file ---------------------------------------------------------

PBX1_MAGIC = b"PBX1"


def save_schedule(path, schedule: Sequence[PBox]):
    """Write a key schedule: magic, dims (2 x u32 LE), round count, u32 tables."""
    if len(schedule) == 0:
        raise InvalidParameterError("schedule is empty")
    dims = schedule[0].dims
    for key in schedule:
        if key.dims != dims:
            raise ShapeError("all schedule keys must share dims")
    with open(path, "wb") as f:
        f.write(PBX1_MAGIC)
        header = np.array([dims.rows, dims.cols, len(schedule)], dtype="<u4")
        f.write(header.tobytes())
        for key in schedule:
            f.write(key.table.astype("<u4").tobytes())


def load_schedule(path) -> list[PBox]:
    """Read a PBX1 schedule file; raises :class:`DataFormatError` on damage."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != PBX1_MAGIC:
        raise DataFormatError(f"bad magic {blob[:4]!r}, expected {PBX1_MAGIC!r}", offset=0)
    if len(blob) < 16:
        raise DataFormatError("truncated header", offset=len(blob))
    rows, cols, count = np.frombuffer(blob[4:16], dtype="<u4")
    dims = Dims(int(rows), int(cols))
    n = dims.cells
    need = 16 + 4 * n * int(count)
    if len(blob) < need:
        raise DataFormatError(f"expected {need} bytes for {count} tables", offset=len(blob))
    schedule = []
    for r in range(int(count)):
        start = 16 + 4 * n * r
        table = np.frombuffer(blob[start:start + 4 * n], dtype="<u4").astype(np.int64)
        schedule.append(PBox(dims, table))
    return schedule
