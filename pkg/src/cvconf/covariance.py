"""Plug-in covariance of loss columns, aggregated across folds.

The estimate for each fold is the empirical covariance of that fold's
loss rows (two-pass centering, divisor fold size minus one), and the
global estimate is the plain average over folds.  Standardization to a
correlation matrix drops coordinates whose variance sits below a
relative floor, so exactly duplicated candidates cannot poison the
Gaussian sampling step downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import DomainError, LossMatrix


class DegenerateFoldError(ValueError):
    """A fold holds fewer than two rows, so its covariance is undefined."""


class EmptyProblemError(ValueError):
    """Every coordinate fell below the variance floor."""


@dataclass(frozen=True)
class CovEstimate:
    """Fold-averaged covariance (sigma) and its diagonal (lambda_diag)."""

    sigma: np.ndarray
    lambda_diag: np.ndarray
    divisor: str = "fold size minus one"


@dataclass(frozen=True)
class DiffCovEstimate:
    """Covariance of difference columns loss[r] - loss[s] for s != r.

    Row/column a of sigma corresponds to comparison candidate
    others[a] in the original ordering.
    """

    candidate: int
    sigma: np.ndarray
    lambda_diag: np.ndarray
    others: tuple[int, ...]


def fold_covariance(lm: LossMatrix, v: int) -> np.ndarray:
    """Empirical covariance of fold v's loss rows."""
    if not 0 <= v < lm.plan.V:
        raise DomainError(f"fold index {v} outside [0, {lm.plan.V})")
    ix = lm.plan.index_sets[v]
    if len(ix) < 2:
        raise DegenerateFoldError(f"fold {v} holds {len(ix)} row(s); need at least 2")
    rows = lm.values[ix]
    centered = rows - rows.mean(axis=0)
    cov = centered.T @ centered / (len(ix) - 1)
    return (cov + cov.T) / 2


def aggregate_covariance(lm: LossMatrix) -> CovEstimate:
    """Average the fold covariances and record the diagonal."""
    sigma = fold_covariance(lm, 0)
    for v in range(1, lm.plan.V):
        sigma = sigma + fold_covariance(lm, v)
    sigma = sigma / lm.plan.V
    return CovEstimate(sigma=sigma, lambda_diag=np.diag(sigma).copy())


def variance_floor(lambda_diag: np.ndarray) -> float:
    """Relative floor below which a variance counts as degenerate."""
    return 1e-12 * max(float(np.max(lambda_diag)), 1.0)


def standardized_correlation(cov: CovEstimate, floor: float | None = None):
    """Correlation matrix over coordinates whose variance clears the floor.

    Returns (corr, kept, dropped): corr is k x k over the kept
    coordinates with a unit diagonal and entries clipped to [-1, 1];
    kept and dropped are index arrays into the original ordering.
    """
    diag = np.asarray(cov.lambda_diag, dtype=np.float64)
    if floor is None:
        floor = variance_floor(diag)
    kept = np.flatnonzero(diag > floor)
    dropped = np.flatnonzero(diag <= floor)
    if kept.size == 0:
        raise EmptyProblemError("all coordinates fall below the variance floor")
    sub = cov.sigma[np.ix_(kept, kept)]
    inv_scale = 1.0 / np.sqrt(diag[kept])
    corr = sub * inv_scale[:, None] * inv_scale[None, :]
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr, kept, dropped


def difference_covariance(lm: LossMatrix, r: int) -> DiffCovEstimate:
    """Fold-aggregated covariance of the p-1 columns loss[r] - loss[s]."""
    if lm.p < 2:
        raise DomainError("difference covariance needs at least two models")
    if not 0 <= r < lm.p:
        raise DomainError(f"candidate index {r} outside [0, {lm.p})")
    others = tuple(s for s in range(lm.p) if s != r)
    diff = lm.values[:, [r]] - lm.values[:, list(others)]
    labels = tuple(f"{lm.model_labels[r]}-{lm.model_labels[s]}" for s in others)
    est = aggregate_covariance(LossMatrix(diff, lm.plan, labels))
    return DiffCovEstimate(
        candidate=r, sigma=est.sigma, lambda_diag=est.lambda_diag, others=others
    )
