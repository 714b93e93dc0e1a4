"""Vector primitives and a deterministic stand-in for the frozen CLIP encoders.

The stub maps a string to a unit vector through a fixed pipeline so that every
(input, spec) pair yields the same bytes on every platform:

1. FNV-1a 64-bit hash of the UTF-8 bytes
   (offset basis ``0xCBF29CE484222325``, prime ``0x100000001B3``).
2. Mix with the encoder seed: ``state = splitmix64(hash ^ splitmix64(seed))``,
   where splitmix64 adds ``0x9E3779B97F4A7C15`` and applies the finalizer
   multipliers ``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB``.
   A zero state is replaced by ``0x9E3779B97F4A7C15``.
3. Draw from xorshift64* (shifts 12, 25, 27; multiplier ``0x2545F4914F6CDD1D``),
   taking the top 53 bits of each output as ``u`` in [0, 1) and emitting ``2u - 1``.
4. L2-normalize.

Text and image stubs share the same stream, so a 1x1 image grid for ``x`` has a
<CLS> vector equal to the text embedding of ``x``. Tests use this to build
fixtures where the tag query coincides with the image's global feature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import xorshift_fill
from .errors import (
    DimensionMismatchError,
    EmptyIdError,
    EmptyTextError,
    NonFiniteError,
    ShapeMismatchError,
    ZeroVectorError,
)

MASK64 = 0xFFFFFFFFFFFFFFFF
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
SM_MUL1 = 0xBF58476D1CE4E5B9
SM_MUL2 = 0x94D049BB133111EB

ZERO_NORM = 1e-12


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def splitmix64(z: int) -> int:
    z = (z + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * SM_MUL1) & MASK64
    z = ((z ^ (z >> 27)) * SM_MUL2) & MASK64
    return z ^ (z >> 31)


def seed_state(text: str, seed: int) -> int:
    """Initial xorshift state for ``text`` under ``seed`` (never zero)."""
    state = splitmix64(fnv1a64(text.encode("utf-8")) ^ splitmix64(seed & MASK64))
    return state or GOLDEN_GAMMA


class SeededStream:
    """Sequential xorshift64* stream for seeded sampling (tag draws, k-means init, params)."""

    def __init__(self, seed: int, label: str = ""):
        self.state = seed_state(label, seed)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` values in [-1, 1)."""
        values, self.state = xorshift_fill(self.state, n)
        return values

    def randbelow(self, n: int) -> int:
        """Integer in ``[0, n)`` from one 53-bit draw (bias at most n / 2**53)."""
        u = (float(self.uniform(1)[0]) + 1.0) / 2.0
        return min(int(u * n), n - 1)

    def sample(self, population_size: int, count: int) -> list[int]:
        """``count`` distinct indices from ``range(population_size)``, partial Fisher-Yates."""
        count = min(count, population_size)
        pool = list(range(population_size))
        for i in range(count):
            j = i + self.randbelow(population_size - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:count]


@dataclass(frozen=True)
class EncoderSpec:
    dim: int = 64
    grid_h: int = 4
    grid_w: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "grid_h", "grid_w"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"EncoderSpec.{name} must be a positive int, got {value!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed <= MASK64:
            raise ValueError(f"EncoderSpec.seed must be a 64-bit unsigned int, got {self.seed!r}")

    @classmethod
    def clip_vit_l14_336(cls, seed: int = 0) -> "EncoderSpec":
        """Shape preset of CLIP ViT-L/14 at 336px: 24x24 patch grid, 1024-d features."""
        return cls(dim=1024, grid_h=24, grid_w=24, seed=seed)

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderSpec":
        return cls(**{k: int(data[k]) for k in ("dim", "grid_h", "grid_w", "seed") if k in data})

    def to_dict(self) -> dict:
        return {"dim": self.dim, "grid_h": self.grid_h, "grid_w": self.grid_w, "seed": self.seed}

    @property
    def cells(self) -> int:
        return self.grid_h * self.grid_w


@dataclass(frozen=True)
class GridFeatures:
    """Row-major patch features, shape ``(grid_h * grid_w, dim)``."""

    rows: np.ndarray
    grid_h: int
    grid_w: int

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != self.grid_h * self.grid_w or rows.shape[0] == 0:
            raise ShapeMismatchError(
                f"grid {self.grid_h}x{self.grid_w} needs {self.grid_h * self.grid_w} rows, "
                f"got shape {rows.shape}"
            )
        if not np.all(np.isfinite(rows)):
            raise NonFiniteError("grid features contain NaN or Inf")
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def _norm(v: np.ndarray) -> float:
    # correctly rounded sum of squares: no BLAS, identical bits on every platform
    return math.sqrt(math.fsum((v * v).tolist()))


def l2_normalize(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeMismatchError(f"expected a nonempty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("vector contains NaN or Inf")
    norm = _norm(arr)
    if norm <= ZERO_NORM:
        raise ZeroVectorError("cannot normalize a zero vector")
    return arr / norm


def cosine(u, v) -> float:
    """Cosine of two unit vectors as their dot product, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return min(1.0, max(-1.0, float(np.dot(u, v))))


def stub_text_embed(text: str, spec: EncoderSpec) -> np.ndarray:
    if not text or not text.strip():
        raise EmptyTextError("text is empty after trimming")
    values, _ = xorshift_fill(seed_state(text, spec.seed), spec.dim)
    return l2_normalize(values)


def stub_image_embed(image_id: str, spec: EncoderSpec) -> tuple[GridFeatures, np.ndarray]:
    """Stub vision encoder: unit-norm grid rows and a <CLS> vector tied to their mean.

    If the rows cancel to a zero mean, <CLS> is the first grid row instead.
    """
    if not image_id:
        raise EmptyIdError("image id is empty")
    values, _ = xorshift_fill(seed_state(image_id, spec.seed), spec.cells * spec.dim)
    rows = values.reshape(spec.cells, spec.dim)
    norms = np.array([_norm(r) for r in rows])
    if np.any(norms <= ZERO_NORM):
        raise ZeroVectorError("stub grid row collapsed to zero")
    rows = rows / norms[:, None]
    if spec.cells == 1:
        cls_vec = rows[0].copy()
    else:
        total = rows[0].copy()
        for r in rows[1:]:
            total += r
        mean = total / spec.cells
        # rows can cancel exactly in tiny dims (D=1: +1 and -1); fall back to the first row
        cls_vec = l2_normalize(mean) if _norm(mean) > ZERO_NORM else rows[0].copy()
    return GridFeatures(rows, spec.grid_h, spec.grid_w), cls_vec


@dataclass(frozen=True)
class LinearProjection:
    """``x -> x @ weight`` (+ bias); aligns real text-feature and vision-feature widths."""

    weight: np.ndarray
    bias: np.ndarray | None = None

    def __call__(self, x):
        out = np.asarray(x, dtype=np.float64) @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]


def seeded_projection(d_in: int, d_out: int, seed: int, label: str = "projection") -> LinearProjection:
    """Identity when widths match, else a fixed seeded matrix scaled by 1/sqrt(d_in)."""
    if d_in == d_out:
        return LinearProjection(np.eye(d_in))
    w = SeededStream(seed, label).uniform(d_in * d_out).reshape(d_in, d_out)
    return LinearProjection(w * math.sqrt(3.0 / d_in))
