"""Seeded synthetic generators and reproducible RNG substreams.

Every generator is a pure function of its config: the seed fully
determines the sample, and global NumPy RNG state is never touched.
Substreams are derived counter-style from (master seed, purpose tag,
indices), so parallel schedules can never reorder draws.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .datamodel import Dataset, DomainError


def _purpose_words(purpose: str) -> list[int]:
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return [int.from_bytes(digest[k : k + 4], "little") for k in range(0, 16, 4)]


def derive_substream(master_seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Independent generator keyed by (master seed, purpose, indices).

    The key is hashed into the seed material, so substreams for
    different purposes or indices are decorrelated while remaining
    bit-reproducible across runs and platforms.
    """
    if master_seed < 0:
        raise DomainError(f"master seed must be non-negative, got {master_seed}")
    clean: list[int] = []
    for ix in indices:
        ix = int(ix)
        if ix < 0:
            raise DomainError(f"substream indices must be non-negative, got {ix}")
        clean.append(ix)
    ss = np.random.SeedSequence([int(master_seed), *_purpose_words(purpose), *clean])
    return np.random.default_rng(ss)


def stable_subseed(master_seed: int, purpose: str, *indices: int) -> int:
    """Collapse a substream key to a single u32, for config plumbing."""
    payload = ":".join([str(int(master_seed)), purpose, *[str(int(i)) for i in indices]])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass(frozen=True)
class SparseLinearGen:
    """Gaussian design with s unit signal coefficients out of d.

    The first s coordinates of the coefficient vector are 1, the rest
    0, and the noise variance is s/nu so that nu is the signal-to-noise
    ratio ||beta||^2 / sigma^2.
    """

    n: int
    d: int
    s: int
    nu: float
    seed: int


@dataclass(frozen=True)
class SparseLinearTruth:
    beta: np.ndarray
    noise_var: float
    design: str = "gaussian-identity"


@dataclass(frozen=True)
class SeriesGen:
    """Polynomial-decay coefficient sequence over iid standard normal features."""

    n: int
    j_max: int
    decay: float
    noise_sd: float
    seed: int


@dataclass(frozen=True)
class SeriesTruth:
    beta: np.ndarray
    noise_sd: float
    tail_energy_ratio: float


def gen_sparse_linear(cfg: SparseLinearGen) -> tuple[Dataset, SparseLinearTruth]:
    """Draw a dataset with Z ~ N(0, I) rows and Y = Z beta + eps."""
    if cfg.n < 1:
        raise DomainError(f"need n >= 1, got {cfg.n}")
    if not 1 <= cfg.s <= cfg.d:
        raise DomainError(f"need 1 <= s <= d, got s={cfg.s}, d={cfg.d}")
    if not cfg.nu > 0:
        raise DomainError(f"need nu > 0, got {cfg.nu}")
    beta = np.zeros(cfg.d)
    beta[: cfg.s] = 1.0
    noise_var = 0.0 if math.isinf(cfg.nu) else cfg.s / cfg.nu
    rng = derive_substream(cfg.seed, "sparse-linear")
    features = rng.standard_normal((cfg.n, cfg.d))
    response = features @ beta
    if noise_var > 0:
        response = response + math.sqrt(noise_var) * rng.standard_normal(cfg.n)
    names = tuple(f"z{j + 1}" for j in range(cfg.d))
    return Dataset(features, response, names), SparseLinearTruth(beta, noise_var)


def series_tail_energy_ratio(j_max: int, decay: float) -> float:
    """Upper bound on tail coefficient energy relative to kept energy.

    Uses the integral bound sum_{j>J} j^{-(1+a)} <= J^{-a} / a.
    """
    kept = sum(float(j) ** -(1 + decay) for j in range(1, j_max + 1))
    tail = float(j_max) ** (-decay) / decay
    return tail / kept


def gen_series(cfg: SeriesGen) -> tuple[Dataset, SeriesTruth]:
    """Draw Y = sum_j beta_j Z_j + eps with beta_j = j^{-(1+a)/2}."""
    if cfg.n < 1:
        raise DomainError(f"need n >= 1, got {cfg.n}")
    if cfg.j_max < 1:
        raise DomainError(f"need j_max >= 1, got {cfg.j_max}")
    if not cfg.decay > 0:
        raise DomainError(f"need decay > 0, got {cfg.decay}")
    if cfg.noise_sd < 0:
        raise DomainError(f"need noise_sd >= 0, got {cfg.noise_sd}")
    js = np.arange(1, cfg.j_max + 1, dtype=np.float64)
    beta = js ** (-(1 + cfg.decay) / 2)
    ratio = series_tail_energy_ratio(cfg.j_max, cfg.decay)
    if ratio >= 0.01:
        warnings.warn(
            f"series truncation keeps too little energy: tail/kept = {ratio:.3g} "
            f"at j_max={cfg.j_max}, decay={cfg.decay}; increase j_max",
            UserWarning,
            stacklevel=2,
        )
    rng = derive_substream(cfg.seed, "series")
    features = rng.standard_normal((cfg.n, cfg.j_max))
    response = features @ beta
    if cfg.noise_sd > 0:
        response = response + cfg.noise_sd * rng.standard_normal(cfg.n)
    names = tuple(f"z{j + 1}" for j in range(cfg.j_max))
    return Dataset(features, response, names), SeriesTruth(beta, cfg.noise_sd, ratio)
