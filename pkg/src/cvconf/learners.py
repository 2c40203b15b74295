"""Learner bank: least squares, ridge, lasso, forward selection,
single-pass SGD, and truncated series regression.

All fitting functions are pure: identical inputs give identical
outputs, with no dependence on global RNG or iteration order beyond
the documented cyclic/greedy schedules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datamodel import DomainError, FittedModel

try:  # pragma: no cover - exercised implicitly by every lasso fit
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


class ConvergenceError(RuntimeError):
    """An iterative fit stopped before reaching its tolerance."""

    def __init__(self, message: str, iterations: int):
        super().__init__(message)
        self.iterations = iterations


def _check_xy(features, response):
    Z = np.asarray(features, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if Z.ndim != 2:
        raise DomainError(f"features must be 2-d, got shape {Z.shape}")
    if y.ndim != 1 or y.shape[0] != Z.shape[0]:
        raise DomainError(f"response shape {y.shape} does not match {Z.shape[0]} rows")
    return Z, y


# ------------------------------------------------------------ least squares


def fit_ols(features, response) -> FittedModel:
    """Least squares, minimum-norm solution under rank deficiency."""
    Z, y = _check_xy(features, response)
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    return FittedModel(family="ols", coef=coef)


def fit_ridge(features, response, lam: float) -> FittedModel:
    """Closed-form ridge: (Z'Z/n + lam I)^{-1} Z'y / n on the given rows.

    lam = 0 delegates to the minimum-norm least-squares solution, so a
    singular design never raises.
    """
    Z, y = _check_xy(features, response)
    if lam < 0:
        raise DomainError(f"ridge needs lam >= 0, got {lam}")
    if lam == 0:
        coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
        return FittedModel(family="ridge", coef=coef)
    n, d = Z.shape
    gram = Z.T @ Z / n + lam * np.eye(d)
    coef = np.linalg.solve(gram, Z.T @ y / n)
    return FittedModel(family="ridge", coef=coef)


# ------------------------------------------------------------------- lasso


def soft_threshold(value: float, threshold: float) -> float:
    """Shrink toward zero: sign(value) * max(|value| - threshold, 0)."""
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


@njit(cache=True)
def _cd_sweeps(gram, corr, lam, beta, tol, max_sweeps):  # pragma: no cover - jit
    """Cyclic coordinate descent on the gram form of the lasso objective.

    Maintains grad = corr - gram @ beta.  Converged once the largest
    coordinate update in a sweep is below tol and the KKT residual is
    within 10 * tol.
    """
    d = gram.shape[0]
    grad = corr - gram @ beta
    for sweep in range(1, max_sweeps + 1):
        dmax = 0.0
        for j in range(d):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            zj = grad[j] + gjj * beta[j]
            if zj > lam:
                bnew = (zj - lam) / gjj
            elif zj < -lam:
                bnew = (zj + lam) / gjj
            else:
                bnew = 0.0
            diff = bnew - beta[j]
            if diff != 0.0:
                beta[j] = bnew
                grad -= gram[j] * diff
                ad = abs(diff)
                if ad > dmax:
                    dmax = ad
        if dmax < tol:
            kkt = 0.0
            for j in range(d):
                if beta[j] == 0.0:
                    r = abs(grad[j]) - lam
                    if r < 0.0:
                        r = 0.0
                elif beta[j] > 0.0:
                    r = abs(grad[j] - lam)
                else:
                    r = abs(grad[j] + lam)
                if r > kkt:
                    kkt = r
            if kkt <= 10.0 * tol:
                return sweep, True
    return max_sweeps, False


def fit_lasso(
    features,
    response,
    lam: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    gram=None,
    corr=None,
) -> FittedModel:
    """Minimize (1/2n)||y - Z beta||^2 + lam ||beta||_1 by cyclic
    coordinate descent with soft-thresholding from a zero start.

    ``gram`` and ``corr`` may carry precomputed Z'Z/n and Z'y/n so a
    bank of penalties can share the quadratic part.  The returned fit
    satisfies the KKT conditions to within 10 * tol.
    """
    Z, y = _check_xy(features, response)
    if lam < 0:
        raise DomainError(f"lasso needs lam >= 0, got {lam}")
    if tol <= 0 or max_iter < 1:
        raise DomainError(f"need tol > 0 and max_iter >= 1, got {tol}, {max_iter}")
    n, d = Z.shape
    if gram is None:
        gram = Z.T @ Z / n
    if corr is None:
        corr = Z.T @ y / n
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    corr = np.ascontiguousarray(corr, dtype=np.float64)
    beta = np.zeros(d)
    sweeps, ok = _cd_sweeps(gram, corr, float(lam), beta, float(tol), int(max_iter))
    sweeps = int(sweeps)
    if not ok:
        raise ConvergenceError(
            f"lasso did not converge in {sweeps} sweeps at lam={lam:g}, tol={tol:g}",
            iterations=sweeps,
        )
    support = tuple(int(j) for j in np.flatnonzero(beta))
    return FittedModel(family="lasso", coef=beta, support=support, iterations=sweeps)


def lasso_max_lam(features, response) -> float:
    """Smallest penalty with an all-zero solution: ||Z'y||_inf / n."""
    Z, y = _check_xy(features, response)
    return float(np.abs(Z.T @ y).max() / Z.shape[0])


def lasso_grid(features, response, V: int) -> np.ndarray:
    """Ten-point descending penalty grid lam_max * 2^i / sqrt(1 - 1/V)
    for i = 0, -1, ..., -9.

    The common rescale factor compensates for training folds holding
    only a (1 - 1/V) share of the rows.
    """
    if V < 2:
        raise DomainError(f"need V >= 2, got {V}")
    lam_max = lasso_max_lam(features, response)
    if lam_max == 0:
        raise DomainError("degenerate problem: Z'y is identically zero")
    scale = lam_max / math.sqrt(1 - 1 / V)
    return scale * 2.0 ** -np.arange(10, dtype=np.float64)


def lasso_grid_log(features, response, count: int = 50, floor_ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced descending penalties from lam_max down to
    lam_max * floor_ratio."""
    if count < 2:
        raise DomainError(f"need count >= 2, got {count}")
    if not 0 < floor_ratio < 1:
        raise DomainError(f"need floor_ratio in (0, 1), got {floor_ratio}")
    lam_max = lasso_max_lam(features, response)
    if lam_max == 0:
        raise DomainError("degenerate problem: Z'y is identically zero")
    return np.geomspace(lam_max, lam_max * floor_ratio, count)


# ------------------------------------------------------- forward selection


def fit_forward(features, response, steps: int) -> FittedModel:
    """Greedy forward selection for ``steps`` rounds.

    Each round adds the feature whose inclusion minimizes the residual
    sum of squares, breaking ties toward the smallest index; the final
    coefficients are the least-squares refit on the selected support.
    """
    Z, y = _check_xy(features, response)
    n, d = Z.shape
    if steps is None or not 0 <= steps <= d:
        raise DomainError(f"forward needs 0 <= steps <= {d}, got {steps}")
    support: list[int] = []
    for _ in range(steps):
        best_j = -1
        best_rss = np.inf
        for j in range(d):
            if j in support:
                continue
            sub = Z[:, support + [j]]
            coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
            resid = y - sub @ coef
            rss = float(resid @ resid)
            if rss < best_rss:
                best_j, best_rss = j, rss
        support.append(best_j)
    coef = np.zeros(d)
    if support:
        sub = Z[:, support]
        sol, *_ = np.linalg.lstsq(sub, y, rcond=None)
        coef[support] = sol
    return FittedModel(
        family="forward", coef=coef, support=tuple(support), iterations=len(support)
    )


# --------------------------------------------------------------------- sgd


@dataclass(frozen=True)
class SgdConfig:
    """Objective description and curvature constants for projected SGD.

    The step size is t^{-step_exponent} / smoothness; admissibility
    requires strong_convexity <= smoothness so every step satisfies
    alpha_t <= 2 / (smoothness + strong_convexity).  The guarantees the
    constants encode assume every data row (y, z) lies in the
    radius_x ball and, with projection on, iterates stay in the
    radius_theta ball.
    """

    objective: str
    lam: float
    step_exponent: float
    strong_convexity: float
    smoothness: float
    lipschitz: float
    hessian_lipschitz: float
    radius_x: float
    radius_theta: float
    project: bool = True

    def validate(self) -> "SgdConfig":
        if self.objective not in ("ridge_sq", "logistic_ridge"):
            raise DomainError(f"unknown sgd objective {self.objective!r}")
        if not 0 < self.step_exponent < 1:
            raise DomainError(f"step exponent must lie in (0, 1), got {self.step_exponent}")
        if self.lam < 0:
            raise DomainError(f"need lam >= 0, got {self.lam}")
        for name in ("smoothness", "lipschitz", "radius_x", "radius_theta"):
            if not getattr(self, name) > 0:
                raise DomainError(f"need {name} > 0, got {getattr(self, name)}")
        if self.strong_convexity < 0 or self.hessian_lipschitz < 0:
            raise DomainError("curvature constants must be non-negative")
        if self.strong_convexity > self.smoothness:
            raise DomainError(
                "step size admissibility needs strong_convexity <= smoothness, "
                f"got {self.strong_convexity} > {self.smoothness}"
            )
        return self

    @classmethod
    def for_ridge(cls, lam, step_exponent, radius_x, radius_theta, project=True):
        return cls(
            objective="ridge_sq",
            lam=lam,
            step_exponent=step_exponent,
            strong_convexity=lam,
            smoothness=radius_x**2 + lam,
            lipschitz=radius_x**2 * (1 + radius_theta) + lam * radius_theta,
            hessian_lipschitz=0.0,
            radius_x=radius_x,
            radius_theta=radius_theta,
            project=project,
        ).validate()

    @classmethod
    def for_logistic_ridge(cls, lam, step_exponent, radius_x, radius_theta, project=True):
        return cls(
            objective="logistic_ridge",
            lam=lam,
            step_exponent=step_exponent,
            strong_convexity=2 * lam,
            smoothness=radius_x / radius_theta + lam,
            lipschitz=radius_x**2 + math.log1p(math.exp(radius_x * radius_theta)) / radius_theta
            + lam * radius_theta,
            hessian_lipschitz=radius_x**2 / (4 * radius_theta),
            radius_x=radius_x,
            radius_theta=radius_theta,
            project=project,
        ).validate()


def _sigmoid(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def fit_sgd(features, response, config: SgdConfig) -> FittedModel:
    """Single pass of projected SGD from a zero start.

    Rows are consumed once, in ascending index order, with step size
    t^{-a} / smoothness at step t = 1..n.
    """
    config.validate()
    Z, y = _check_xy(features, response)
    n, d = Z.shape
    theta = np.zeros(d)
    a = config.step_exponent
    beta = config.smoothness
    lam = config.lam
    for t in range(1, n + 1):
        z = Z[t - 1]
        if config.objective == "ridge_sq":
            grad = -(y[t - 1] - z @ theta) * z + lam * theta
        else:
            grad = (_sigmoid(float(z @ theta)) - y[t - 1]) * z + 2 * lam * theta
        theta = theta - t**-a / beta * grad
        if config.project:
            nrm = float(np.linalg.norm(theta))
            if nrm > config.radius_theta:
                theta *= config.radius_theta / nrm
    return FittedModel(family="sgd", coef=theta, iterations=n)


# ------------------------------------------------------------------ series


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation level for the series estimator."""

    truncation: int

    def validate(self) -> "SeriesConfig":
        if self.truncation < 1:
            raise DomainError(f"need truncation >= 1, got {self.truncation}")
        return self


def fit_series(features, response, config) -> FittedModel:
    """Moment estimator beta_j = mean(y * z_j) for j below the
    truncation, zero beyond.

    Valid when features are centered with unit variance, as produced by
    the series generator.
    """
    if isinstance(config, int):
        config = SeriesConfig(truncation=config)
    config.validate()
    Z, y = _check_xy(features, response)
    J = config.truncation
    if J > Z.shape[1]:
        raise DomainError(f"truncation {J} exceeds feature count {Z.shape[1]}")
    coef = np.zeros(Z.shape[1])
    coef[:J] = (Z[:, :J] * y[:, None]).mean(axis=0)
    return FittedModel(family="series", coef=coef, support=tuple(range(J)))
