"""Bipolar hypervector encoding and multi-level dimension packing.

Feature vectors are mapped into D-dimensional {-1,+1} space by summing, per
dimension, the products of a per-feature random ID vector and the level
vector of the feature's quantized magnitude, then taking the sign. Packing
compresses a length-D bipolar vector to length D/n by summing n adjacent
elements, matching a multi-level cell that stores n bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectra_io import FeatureVector

# Counter-based generator behind every seeded draw; recorded in ItemMemory
# metadata so a run can be reproduced from its outputs alone.
PRNG_ALGORITHM = "numpy-philox4x64"

MAX_PACK_BITS = 7


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic generator: one Philox counter stream per (seed, stream)."""
    bit_gen = np.random.Philox(key=np.uint64(seed))
    if stream:
        bit_gen = bit_gen.jumped(stream)
    return np.random.Generator(bit_gen)


@dataclass
class ItemMemory:
    """Random ID vectors per feature position plus graded level vectors.

    Level vectors are generated by progressive flipping: each step flips a
    fresh batch of floor(D / (2*(m-1))) positions, so neighbouring levels
    stay similar while the first and last differ in about half the
    dimensions.
    """

    dimension: int  # D
    num_features: int  # F
    num_levels: int  # m
    ids: np.ndarray  # (F, D) int8, entries in {-1, +1}
    levels: np.ndarray  # (m, D) int8, entries in {-1, +1}
    seed: int
    algorithm: str = PRNG_ALGORITHM


@dataclass
class PackedHV:
    """n-packed hypervector: sums of n adjacent bipolar elements."""

    values: np.ndarray  # (D // n,) int32, entries in [-n, +n]
    n: int

    def __len__(self) -> int:
        return len(self.values)


def pad_dimension(dimension: int, n: int) -> int:
    """Least multiple of n that is >= dimension."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if not 1 <= n <= MAX_PACK_BITS:
        raise ValueError(f"pack factor must be in [1, {MAX_PACK_BITS}], got {n}")
    return -(-dimension // n) * n


def gen_item_memory(
    seed: int, dimension: int, num_features: int, num_levels: int
) -> ItemMemory:
    """Generate the ID and level vector banks from one seed.

    IDs are i.i.d. uniform over {-1, +1} (near-orthogonal at high D). The
    flip schedule uses disjoint slices of one random permutation, so no
    position is ever flipped twice and hamming(LV_1, LV_m) is exactly
    (m-1) * floor(D / (2*(m-1))).
    """
    if num_levels < 2:
        raise ValueError(f"need at least 2 levels, got {num_levels}")
    if num_features < 1:
        raise ValueError(f"need at least 1 feature, got {num_features}")
    if dimension < 2:
        raise ValueError(f"dimension must be >= 2, got {dimension}")
    rng = make_rng(seed)
    ids = (rng.integers(0, 2, size=(num_features, dimension), dtype=np.int8) * 2 - 1)
    levels = np.empty((num_levels, dimension), dtype=np.int8)
    levels[0] = rng.integers(0, 2, size=dimension, dtype=np.int8) * 2 - 1
    flips_per_step = dimension // (2 * (num_levels - 1))
    perm = rng.permutation(dimension)
    for k in range(1, num_levels):
        levels[k] = levels[k - 1]
        flip = perm[(k - 1) * flips_per_step : k * flips_per_step]
        levels[k, flip] = -levels[k, flip]
    return ItemMemory(
        dimension=dimension,
        num_features=num_features,
        num_levels=num_levels,
        ids=ids,
        levels=levels,
        seed=seed,
    )


def quantize_level(value: float, l_min: float, l_max: float, num_levels: int) -> int:
    """Map a value in [l_min, l_max] to a level index in [1, m]; out-of-range
    values are clipped, and value == l_max maps to m."""
    if not l_min < l_max:
        raise ValueError("l_min must be < l_max")
    v = min(max(value, l_min), l_max)
    level = 1 + int(np.floor((v - l_min) / (l_max - l_min) * num_levels))
    return min(max(level, 1), num_levels)


def quantize_levels(
    values: np.ndarray, l_min: float, l_max: float, num_levels: int
) -> np.ndarray:
    """Vector form of quantize_level."""
    if not l_min < l_max:
        raise ValueError("l_min must be < l_max")
    v = np.clip(values, l_min, l_max)
    levels = 1 + np.floor((v - l_min) / (l_max - l_min) * num_levels).astype(np.int64)
    return np.clip(levels, 1, num_levels)


def sign_bipolar(acc: np.ndarray) -> np.ndarray:
    """Binarize an accumulator: +1 where positive, -1 otherwise (zero included)."""
    return np.where(acc > 0, 1, -1).astype(np.int8)


def encode(feature: FeatureVector, im: ItemMemory, skip_zero: bool = True) -> np.ndarray:
    """Encode a feature vector into a bipolar hypervector.

    Per dimension d: sum over feature positions i of ids[i, d] * levels[q_i, d]
    with q_i the quantized magnitude of feature i, then sign. Zero-valued
    features are skipped by default: spectra are sparse and thousands of
    identical level-1 terms would swamp the occupied bins.
    """
    values = np.asarray(feature.values, dtype=np.float64)
    if values.shape[0] != im.num_features:
        raise ValueError(
            f"feature length {values.shape[0]} != item memory F {im.num_features}"
        )
    if skip_zero:
        (active,) = np.nonzero(values)
    else:
        active = np.arange(values.shape[0])
    if active.size == 0:
        return sign_bipolar(np.zeros(im.dimension, dtype=np.int32))
    q = quantize_levels(values[active], feature.l_min, feature.l_max, im.num_levels)
    acc = np.sum(
        im.ids[active].astype(np.int32) * im.levels[q - 1].astype(np.int32), axis=0
    )
    return sign_bipolar(acc)


def pack(hv: np.ndarray, n: int) -> PackedHV:
    """Sum each group of n adjacent elements; n = 1 is the identity packing."""
    hv = np.asarray(hv)
    if not 1 <= n <= MAX_PACK_BITS:
        raise ValueError(f"pack factor must be in [1, {MAX_PACK_BITS}], got {n}")
    if hv.shape[0] % n != 0:
        raise ValueError(f"dimension {hv.shape[0]} not divisible by pack factor {n}")
    values = hv.reshape(-1, n).sum(axis=1, dtype=np.int32)
    return PackedHV(values=values, n=n)


def bundle(hvs: list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Element-wise sign of the sum of bipolar vectors (HD centroid)."""
    stacked = np.asarray(hvs, dtype=np.int32)
    return sign_bipolar(stacked.sum(axis=0))


def dot_bipolar(a: np.ndarray, b: np.ndarray) -> int:
    """Dot product of two bipolar vectors; equals D - 2 * hamming(a, b)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.dot(a.astype(np.int64), b.astype(np.int64)))


def dot_packed(p: PackedHV, q: PackedHV) -> int:
    """Exact integer dot product in the packed domain (the noiseless
    reference for what the array computes)."""
    if p.n != q.n:
        raise ValueError(f"pack factor mismatch: {p.n} vs {q.n}")
    if p.values.shape != q.values.shape:
        raise ValueError(
            f"length mismatch: {p.values.shape} vs {q.values.shape}"
        )
    return int(np.dot(p.values.astype(np.int64), q.values.astype(np.int64)))


def random_bipolar(rng: np.random.Generator, dimension: int) -> np.ndarray:
    """Uniform random vector over {-1, +1}^dimension."""
    return (rng.integers(0, 2, size=dimension, dtype=np.int8) * 2 - 1)
