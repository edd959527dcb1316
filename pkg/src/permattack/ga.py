"""Genetic-algorithm permutation-key search with a pluggable ROI oracle.

A candidate key assigns every cell ``(x, y)`` of the cipher image a target
position ``P`` and a state ``E``: 0 while unverified, or the positive id of
the detected region that confirmed the cell.  Confirmed cells are frozen —
crossover copies them untouched and mutation never moves them — so the search
space shrinks monotonically as the oracle finds regions.

The oracle interface is deliberately small (``detect(pixels, dims) ->
regions``) so a detector model can slot in later; the shipped
:class:`TemplateOracle` compares the candidate decryption against a known
reference image, which makes the whole loop testable end to end.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import InvalidParameterError, OracleError, ShapeError
from .pbox import Dims, PBox
from .rng import SplitMix64


@dataclass(frozen=True)
class RoiRegion:
    """A detected region: positive id and the flat positions of its pixels."""

    id: int
    positions: np.ndarray

    @property
    def pixel_count(self) -> int:
        return self.positions.size


class RoiOracle(Protocol):
    def detect(self, pixels: np.ndarray, dims: Dims) -> Sequence[RoiRegion]:
        ...


class TemplateOracle:
    """Region detector backed by a known reference image.

    A region is each maximal run (row-major order) of at least ``min_run``
    consecutive positions whose pixel equals the template.  ``min_run=1``
    makes it a perfect oracle: every correctly placed pixel is confirmed.
    """

    def __init__(self, template: np.ndarray, min_run: int = 4):
        if min_run < 1:
            raise InvalidParameterError("min_run must be >= 1")
        self.template = np.asarray(template, dtype=np.uint8).ravel()
        self.min_run = min_run

    def detect(self, pixels: np.ndarray, dims: Dims) -> list[RoiRegion]:
        pixels = np.asarray(pixels, dtype=np.uint8).ravel()
        if pixels.size != self.template.size:
            raise OracleError(f"image size {pixels.size} != template size {self.template.size}")
        match = pixels == self.template
        regions = []
        at = 0
        next_id = 1
        n = pixels.size
        while at < n:
            if match[at]:
                end = at
                while end + 1 < n and match[end + 1]:
                    end += 1
                if end - at + 1 >= self.min_run:
                    regions.append(RoiRegion(next_id, np.arange(at, end + 1, dtype=np.int64)))
                    next_id += 1
                at = end + 1
            else:
                at += 1
        return regions


@dataclass
class Individual:
    """Candidate key: per-cell target positions plus confirmation states."""

    dims: Dims
    perm: np.ndarray
    state: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64).ravel()
        state = np.asarray(self.state, dtype=np.int64).ravel()
        n = self.dims.cells
        if perm.size != n or state.size != n:
            raise ShapeError(f"individual needs {n} cells")
        if np.bincount(perm, minlength=n).max() != 1 or perm.min() < 0 or perm.max() >= n:
            raise InvalidParameterError("cell positions are not a permutation")
        self.perm = perm
        self.state = state

    def copy(self) -> "Individual":
        return Individual(self.dims, self.perm.copy(), self.state.copy())

    def as_pbox(self) -> PBox:
        return PBox(self.dims, self.perm)


def random_individual(dims: Dims, stream: SplitMix64) -> Individual:
    """Uniform random permutation via seeded Fisher-Yates; all cells unfixed."""
    n = dims.cells
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = stream.next_below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return Individual(dims, perm, np.zeros(n, dtype=np.int64))


def fitness(ind: Individual) -> float:
    """Fraction of confirmed cells (state != 0)."""
    return float(np.count_nonzero(ind.state)) / ind.dims.cells


def apply_key(ind: Individual, cipher: np.ndarray) -> np.ndarray:
    """Candidate decryption: cipher pixel at cell i lands at position perm[i]."""
    cipher = np.asarray(cipher, dtype=np.uint8).ravel()
    if cipher.size != ind.dims.cells:
        raise ShapeError("cipher image does not match key dims")
    out = np.empty_like(cipher)
    out[ind.perm] = cipher
    return out


def evaluate(ind: Individual, cipher: np.ndarray, oracle: RoiOracle) -> Individual:
    """Apply the key, run the oracle, and freeze cells inside detected regions.

    State transitions are monotone: a confirmed cell is never unfixed or
    relabelled by later evaluations.
    """
    out = ind.copy()
    candidate = apply_key(out, cipher)
    try:
        regions = oracle.detect(candidate, out.dims)
    except OracleError:
        raise
    except Exception as e:
        raise OracleError(f"oracle failed on candidate image: {e}") from e
    if not regions:
        return out
    inv = np.empty_like(out.perm)
    inv[out.perm] = np.arange(out.perm.size, dtype=np.int64)
    for region in regions:
        if region.id <= 0:
            raise OracleError(f"oracle returned non-positive region id {region.id}")
        cells = inv[region.positions]
        fresh = out.state[cells] == 0
        out.state[cells[fresh]] = region.id
    return out


def crossover_one_point(a: Individual, b: Individual, stream: SplitMix64) -> Individual:
    """One-point permutation crossover preserving confirmed cells.

    The child's value stream is a's positions before the cut, then b's after
    the cut, then the leftover positions in ascending order; values already
    present are skipped.  Confirmed cells from either parent are copied
    unmoved first (a wins conflicts), and unfixed cells are filled from the
    stream in cell order, so the child is always a valid permutation.
    """
    if a.dims != b.dims:
        raise ShapeError("parents must share dims")
    n = a.dims.cells
    cut = 1 if n <= 2 else 1 + stream.next_below(n - 1)
    child_perm = np.full(n, -1, dtype=np.int64)
    child_state = np.zeros(n, dtype=np.int64)
    used = np.zeros(n, dtype=bool)
    for parent in (a, b):
        fixed = np.nonzero(parent.state != 0)[0]
        for i in fixed:
            v = parent.perm[i]
            if child_perm[i] == -1 and not used[v]:
                child_perm[i] = v
                child_state[i] = parent.state[i]
                used[v] = True
    stream_vals = np.concatenate([a.perm[:cut], b.perm[cut:], np.arange(n, dtype=np.int64)])
    at = 0
    for i in range(n):
        if child_perm[i] != -1:
            continue
        while used[stream_vals[at]]:
            at += 1
        child_perm[i] = stream_vals[at]
        used[stream_vals[at]] = True
    return Individual(a.dims, child_perm, child_state)


def mutate(ind: Individual, prob: float, stream: SplitMix64) -> Individual:
    """With probability ``prob``, swap the positions of two consecutive
    unfixed cells; confirmed cells are never touched."""
    if not 0.0 <= prob <= 1.0:
        raise InvalidParameterError("mutation probability must lie in [0, 1]")
    out = ind.copy()
    if prob == 0.0 or stream.next_unit() >= prob:
        return out
    unfixed = np.nonzero(out.state == 0)[0]
    if unfixed.size < 2:
        return out
    t = stream.next_below(unfixed.size - 1)
    i, j = unfixed[t], unfixed[t + 1]
    out.perm[i], out.perm[j] = out.perm[j], out.perm[i]
    return out


@dataclass
class GaConfig:
    population: int = 50
    max_generations: int = 200
    mutation_prob: float = 0.01
    elitism: int = 2
    seed: int = 0

    def validate(self):
        if self.population < 2:
            raise InvalidParameterError("population must be >= 2")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise InvalidParameterError("mutation probability must lie in [0, 1]")
        if self.max_generations < 1:
            raise InvalidParameterError("max_generations must be >= 1")
        if not 0 <= self.elitism <= self.population:
            raise InvalidParameterError("elitism must lie in [0, population]")


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    fixed_cells: int


@dataclass
class GaResult:
    best: Individual
    log: list
    converged: bool


def run_ga(cipher: np.ndarray, dims: Dims, oracle: RoiOracle, config: GaConfig) -> GaResult:
    """Generational loop: evaluate, elitist truncation, crossover, mutate.

    Stops at fitness 1.0 or after ``max_generations``; returns the best key of
    the final generation (elitism makes it the best ever seen) plus the
    per-generation best-fitness log.
    """
    config.validate()
    stream = SplitMix64(config.seed)
    pop = [random_individual(dims, stream) for _ in range(config.population)]
    log: list[GenerationStats] = []
    best: Individual | None = None
    for gen in range(1, config.max_generations + 1):
        pop = [evaluate(ind, cipher, oracle) for ind in pop]
        pop.sort(key=fitness, reverse=True)
        if best is None or fitness(pop[0]) >= fitness(best):
            best = pop[0].copy()
        log.append(GenerationStats(gen, fitness(best), int(np.count_nonzero(best.state))))
        if fitness(best) >= 1.0:
            return GaResult(best, log, True)
        survivors = pop[:max(2, config.population // 2)]
        nxt = [survivors[i].copy() for i in range(min(config.elitism, len(survivors)))]
        while len(nxt) < config.population:
            pa = survivors[stream.next_below(len(survivors))]
            pb = survivors[stream.next_below(len(survivors))]
            child = crossover_one_point(pa, pb, stream)
            child = mutate(child, config.mutation_prob, stream)
            nxt.append(child)
        pop = nxt
    return GaResult(best, log, False)


def write_convergence_csv(path, log):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["generation", "best_fitness", "fixed_cells"])
        for row in log:
            writer.writerow([row.generation, row.best_fitness, row.fixed_cells])


# --- search-space accounting -------------------------------------------------------------

@dataclass
class SearchSpaceReport:
    total_cells: int
    fixed_cells: int
    residual_cells: int
    factorial: int | None
    log10_factorial: float


def search_space_reduction(dims: Dims, fixed_regions, exact_limit: int = 2000) -> SearchSpaceReport:
    """Residual key-space size ``(M*N - sum(R_j * Z_j))!``.

    ``fixed_regions`` is a sequence of (region_count, pixels_per_region)
    pairs.  The factorial is exact (big integer) when the residual is at most
    ``exact_limit`` cells; the base-10 log uses lgamma either way.
    """
    n = dims.cells
    fixed = 0
    for r_j, z_j in fixed_regions:
        if r_j < 0 or z_j < 0:
            raise InvalidParameterError("region counts and sizes must be non-negative")
        fixed += r_j * z_j
    if fixed > n:
        raise InvalidParameterError(f"fixed cells {fixed} exceed total cells {n}")
    residual = n - fixed
    exact = math.factorial(residual) if residual <= exact_limit else None
    log10 = math.lgamma(residual + 1) / math.log(10.0)
    return SearchSpaceReport(n, fixed, residual, exact, log10)
