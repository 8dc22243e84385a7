"""Exact simulation of stationary isotropic Gaussian fields on regular grids.

Fields are drawn by circulant embedding: the covariance is wrapped onto a
periodic lattice at least twice the grid size, diagonalised by the FFT, and a
complex white noise is coloured by the square-rooted eigenvalues.  The real
part of the transform then has exactly the lattice covariance whenever the
embedding is nonnegative definite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .covariance import IsotropicCovariance, eval_cov, validate_for_lkc

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
DEFAULT_POINT_BUDGET = 2**28

NEGATIVE_MASS_TOL = 1e-8
CLIP_MASS_LIMIT = 1e-3
MAX_EMBED_FACTOR = 8


class GridError(ValueError):
    pass


class SynthesisError(RuntimeError):
    pass


class MemoryBudgetError(SynthesisError):
    pass


def derive_seed(base: int, replication_index: int) -> int:
    """SplitMix64 output for ``base`` advanced ``replication_index + 1`` steps.

    Injective in the index for a fixed base because the mixing function is a
    bijection on 64-bit words.
    """
    z = (int(base) + (int(replication_index) + 1) * GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seeds(base: int, indices) -> np.ndarray:
    """Vectorised :func:`derive_seed` returning ``uint64``."""
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(int(base) & MASK64) + (idx + np.uint64(1)) * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class GridSpec:
    """Regular lattice over the box ``[-T_1, T_1] x ... x [-T_d, T_d]``."""

    dimension: int
    half_extent: float | tuple[float, ...]
    spacing: float
    max_points: int = DEFAULT_POINT_BUDGET

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise GridError("dimension must be 1, 2 or 3")
        if not self.spacing > 0:
            raise GridError("spacing must be positive")
        ext = self.half_extents
        if len(ext) != self.dimension or min(ext) <= 0:
            raise GridError("half_extent must be positive (one value or one per axis)")
        if self.n_points > self.max_points:
            raise MemoryBudgetError(
                f"grid has {self.n_points} points, budget is {self.max_points}")

    @property
    def half_extents(self) -> tuple[float, ...]:
        if np.ndim(self.half_extent) == 0:
            return (float(self.half_extent),) * self.dimension
        return tuple(float(x) for x in self.half_extent)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(math.floor(2 * t / self.spacing + 1e-9)) + 1 for t in self.half_extents)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.shape))

    @property
    def sides(self) -> tuple[float, ...]:
        """Side lengths of the box spanned by the lattice vertices."""
        return tuple((n - 1) * self.spacing for n in self.shape)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def origin(self) -> tuple[float, ...]:
        return tuple(-t for t in self.half_extents)

    def coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.shape[axis])

    def check_resolution(self, length_scale: float) -> None:
        if self.spacing > length_scale:
            raise GridError(
                f"spacing {self.spacing} exceeds the correlation length {length_scale}: "
                "resolution policy requires spacing <= length_scale")


@dataclass
class FieldSample:
    grid: GridSpec
    values: np.ndarray
    seed: int
    fingerprint: bytes
    approximate: bool = False
    clipped_mass: float = 0.0
    embed_factor: int = 1
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class _Embedding:
    shape: tuple[int, ...]
    amplitude: np.ndarray
    factor: int
    negative_mass: float
    approximate: bool


def _embedding_shape(grid, factor):
    return tuple(sfft.next_fast_len(max(2 * (n - 1) * factor, 1)) for n in grid.shape)


def _circulant_eigenvalues(model, grid, shape):
    d = grid.dimension
    lag2 = np.zeros(shape)
    for axis, m in enumerate(shape):
        j = np.arange(m)
        lag = np.minimum(j, m - j) * grid.spacing
        view = [1] * d
        view[axis] = m
        lag2 = lag2 + (lag**2).reshape(view)
    base = eval_cov(model, np.sqrt(lag2))
    # base is real and even, so its spectrum is real
    return sfft.fftn(base).real


@lru_cache(maxsize=4)
def _embedding(model: IsotropicCovariance, grid: GridSpec) -> _Embedding:
    factor = 1
    while True:
        shape = _embedding_shape(grid, factor)
        if np.prod(shape, dtype=float) > grid.max_points * 2**grid.dimension * factor**grid.dimension:
            raise MemoryBudgetError(f"embedding {shape} exceeds the memory budget")
        eig = _circulant_eigenvalues(model, grid, shape)
        neg = -eig[eig < 0].sum()
        mass = float(neg / np.abs(eig).sum())
        if mass <= NEGATIVE_MASS_TOL or factor >= MAX_EMBED_FACTOR:
            break
        factor *= 2
    approximate = mass > NEGATIVE_MASS_TOL
    if mass > CLIP_MASS_LIMIT:
        raise SynthesisError(
            f"embedding not PSD: negative eigenvalue mass {mass:.3e} after "
            f"{factor}x padding exceeds {CLIP_MASS_LIMIT}")
    eig = np.clip(eig, 0.0, None)
    amp = np.sqrt(eig / eig.size)
    amp.setflags(write=False)
    return _Embedding(shape, amp, factor, mass, approximate)


def synthesize(model: IsotropicCovariance, grid: GridSpec, seed: int,
               workers: int = 1) -> FieldSample:
    """Draw one field on ``grid``; bit-for-bit a function of ``(model, grid, seed)``."""
    validate_for_lkc(model)
    grid.check_resolution(model.length_scale)
    seed = int(seed) & MASK64
    emb = _embedding(model, grid)
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.standard_normal((2,) + emb.shape)
    w = emb.amplitude * (noise[0] + 1j * noise[1])
    full = sfft.fftn(w, workers=workers, overwrite_x=True)
    crop = tuple(slice(0, n) for n in grid.shape)
    values = np.ascontiguousarray(full.real[crop])
    return FieldSample(grid, values, seed, model.fingerprint(), emb.approximate,
                       emb.negative_mass if emb.approximate else 0.0, emb.factor)
