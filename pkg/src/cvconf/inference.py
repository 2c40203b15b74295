"""Bands and model confidence sets for cross-validated risks.

Four inferential products share the machinery below: pointwise intervals
(one model at a time, no multiplicity control), a simultaneous band over
all candidates, the band-overlap confidence set, and the sharper set built
from per-candidate risk differences with one-sided calibration.  All of
them treat the loss-matrix column means as the point estimates and draw
critical values from the Gaussian machinery, so results are deterministic
functions of (data, alpha, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .covariance import (
    CovEstimate,
    EmptyProblemError,
    difference_covariance,
    standardized_correlation,
    variance_floor,
)
from .cv_engine import RiskVector, cv_risk
from .datamodel import DomainError, LossMatrix
from .gaussian_mc import DEFAULT_DRAWS, QuantileRequest, max_quantile
from .simgen import derive_substream

__all__ = [
    "BandSet",
    "ModelConfidenceSet",
    "simultaneous_band",
    "pointwise_band",
    "naive_set",
    "cvc_set",
    "check_coverage",
]


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


@dataclass(frozen=True)
class BandSet:
    """Per-model confidence intervals sharing one critical value.

    ``kind`` records whether ``z_used`` was calibrated for the maximum over
    models ("simultaneous") or for a single coordinate ("pointwise").
    Intervals are centered at the cross-validated risks in ``center``.
    """

    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray
    alpha: float
    z_used: float
    kind: str
    n: int

    def __post_init__(self):
        for name in ("lower", "upper", "center"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if not (self.lower.shape == self.upper.shape == self.center.shape):
            raise DomainError("band arrays must share one shape")
        if self.kind not in ("simultaneous", "pointwise"):
            raise DomainError(f"unknown band kind {self.kind!r}")
        if np.any(self.lower > self.upper):
            raise DomainError("band has a lower endpoint above its upper endpoint")

    @property
    def p(self) -> int:
        return self.center.shape[0]

    @property
    def half_width(self) -> np.ndarray:
        return (self.upper - self.lower) / 2.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "n": self.n,
            "z_used": _jsonable(float(self.z_used)),
            "center": _jsonable(self.center),
            "lower": _jsonable(self.lower),
            "upper": _jsonable(self.upper),
        }


@dataclass(frozen=True)
class ModelConfidenceSet:
    """Index set of candidate models that survive a screening rule.

    For the band-overlap rule ("naive") the per-candidate statistics are
    the interval endpoints and the overlap threshold.  For the
    difference-based rule ("cvc") they are each candidate's worst
    standardized gap and its one-sided critical value; entries are NaN
    where every comparison was degenerate and the sampler was skipped.
    """

    members: tuple[int, ...]
    method: str
    alpha: float
    p: int
    z_alpha: np.ndarray | None = None
    max_stat: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    threshold: float | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(int(r) for r in self.members))
        if self.method not in ("naive", "cvc"):
            raise DomainError(f"unknown set method {self.method!r}")
        if any(not 0 <= r < self.p for r in self.members):
            raise DomainError("set members must index the candidate list")

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "alpha": self.alpha,
            "p": self.p,
            "members": list(self.members),
            "seed": self.seed,
        }
        for name in ("z_alpha", "max_stat", "lower", "upper"):
            val = getattr(self, name)
            if val is not None:
                out[name] = _jsonable(val)
        if self.threshold is not None:
            out["threshold"] = _jsonable(float(self.threshold))
        return out


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def simultaneous_band(
    risks: RiskVector,
    cov: CovEstimate,
    alpha: float,
    *,
    z_hat: float | None = None,
    seed: int | None = None,
    draws: int = DEFAULT_DRAWS,
    chunk_elems: int = 1 << 22,
) -> BandSet:
    """Band risk_r +/- sqrt(sigma_rr) * z / sqrt(n) with a shared critical value.

    When ``z_hat`` is not injected, z is the upper-alpha quantile of the
    max absolute coordinate of a centered Gaussian vector with the
    standardized correlation of ``cov``; coordinates whose variance falls
    below the floor are excluded from the max and get zero-width
    intervals.  If every coordinate is degenerate the band is a point
    band regardless of z.
    """
    _check_alpha(alpha)
    center = np.asarray(risks.values, dtype=np.float64)
    diag = np.clip(np.asarray(cov.lambda_diag, dtype=np.float64), 0.0, None)
    if center.shape[0] != diag.shape[0]:
        raise DomainError("risk vector and covariance diagonal disagree on p")
    if risks.n < 2:
        raise DomainError("need at least two observations")
    scale = np.sqrt(diag)
    if z_hat is None:
        floor = variance_floor(diag)
        try:
            corr, kept, _ = standardized_correlation(cov, floor=floor)
        except EmptyProblemError:
            half = np.zeros_like(center)
            return BandSet(center - half, center + half, center, alpha, 0.0, "simultaneous", risks.n)
        if seed is None:
            raise DomainError("provide either z_hat or a seed for the quantile draw")
        rng = derive_substream(seed, "simultaneous-band")
        z = max_quantile(
            QuantileRequest(corr, alpha, draws, "abs_max", rng, chunk_elems=chunk_elems)
        ).z_hat
        half = np.zeros_like(center)
        half[kept] = scale[kept] * (z / np.sqrt(risks.n))
    else:
        z = float(z_hat)
        if z < 0.0:
            raise DomainError("injected critical value must be nonnegative")
        half = scale * (z / np.sqrt(risks.n))
    return BandSet(center - half, center + half, center, alpha, z, "simultaneous", risks.n)


def pointwise_band(risks: RiskVector, cov: CovEstimate, alpha: float) -> BandSet:
    """Unadjusted per-model intervals with the two-sided normal multiplier."""
    _check_alpha(alpha)
    center = np.asarray(risks.values, dtype=np.float64)
    diag = np.clip(np.asarray(cov.lambda_diag, dtype=np.float64), 0.0, None)
    if center.shape[0] != diag.shape[0]:
        raise DomainError("risk vector and covariance diagonal disagree on p")
    if risks.n < 2:
        raise DomainError("need at least two observations")
    z = float(ndtri(1.0 - alpha / 2.0))
    half = np.sqrt(diag) * (z / np.sqrt(risks.n))
    return BandSet(center - half, center + half, center, alpha, z, "pointwise", risks.n)


def naive_set(band: BandSet) -> ModelConfidenceSet:
    """Models whose lower endpoint overlaps the smallest upper endpoint."""
    if band.kind != "simultaneous":
        raise DomainError("band-overlap screening needs a simultaneous band")
    threshold = float(np.min(band.upper))
    members = tuple(int(r) for r in np.flatnonzero(band.lower <= threshold))
    return ModelConfidenceSet(
        members=members,
        method="naive",
        alpha=band.alpha,
        p=band.p,
        lower=band.lower,
        upper=band.upper,
        threshold=threshold,
    )


def _resolve_injection(z_inject, p: int) -> np.ndarray:
    z = np.asarray(z_inject, dtype=np.float64)
    if z.ndim == 0:
        z = np.full(p, float(z))
    if z.shape != (p,):
        raise DomainError(f"injected quantiles must be scalar or length {p}")
    if np.any(np.isnan(z)):
        raise DomainError("injected quantiles must not be NaN")
    return z


def cvc_set(
    lm: LossMatrix,
    alpha: float,
    *,
    draws: int = DEFAULT_DRAWS,
    seed: int | None = None,
    z_inject=None,
    chunk_elems: int = 1 << 22,
) -> ModelConfidenceSet:
    """Difference-calibrated confidence set of near-optimal models.

    Candidate r stays in the set when its worst standardized risk gap
    sqrt(n) (risk_r - risk_s) / sd(diff_rs) over positive-variance
    comparisons s is at most the candidate's one-sided critical value,
    and its raw gap is nonpositive against every zero-variance
    comparison.  Critical values come from independent substreams keyed
    by candidate index, so the per-candidate computations could run in
    any order or in parallel without changing the answer.
    """
    _check_alpha(alpha)
    n, p = lm.n, lm.p
    if n < 2 * lm.plan.V:
        raise DomainError(f"need n >= 2V for within-fold covariances, got n={n}, V={lm.plan.V}")
    if p == 1:
        return ModelConfidenceSet(members=(0,), method="cvc", alpha=alpha, p=1, seed=seed)
    if z_inject is None and seed is None:
        raise DomainError("provide either a seed or injected quantiles")
    injected = None if z_inject is None else _resolve_injection(z_inject, p)
    risks = cv_risk(lm).values
    sqrt_n = np.sqrt(n)
    z_alpha = np.full(p, np.nan)
    max_stat = np.full(p, np.nan)
    members = []
    for r in range(p):
        diff = difference_covariance(lm, r)
        dvar = diff.lambda_diag
        floor = variance_floor(dvar)
        others = np.array(diff.others)
        gaps = risks[r] - risks[others]
        positive = dvar > floor
        ok = bool(np.all(gaps[~positive] <= 0.0))
        if np.any(positive):
            stats = sqrt_n * gaps[positive] / np.sqrt(dvar[positive])
            max_stat[r] = stats.max()
            if injected is not None:
                z = float(injected[r])
            else:
                corr, _, _ = standardized_correlation(diff, floor=floor)
                rng = derive_substream(seed, "cvc-candidate", r)
                z = max_quantile(
                    QuantileRequest(corr, alpha, draws, "max", rng, chunk_elems=chunk_elems)
                ).z_hat
            z_alpha[r] = z
            ok = ok and max_stat[r] <= z
        # all comparisons degenerate: sampler skipped, sign rule already applied
        if ok:
            members.append(r)
    return ModelConfidenceSet(
        members=tuple(members),
        method="cvc",
        alpha=alpha,
        p=p,
        z_alpha=z_alpha,
        max_stat=max_stat,
        seed=seed,
    )


def check_coverage(obj, target) -> bool:
    """Did the band cover the target vector, or the set catch the best index?

    For a band, ``target`` is the vector of target risks and coverage
    means every coordinate lies inside its interval.  For a set,
    ``target`` is either the best index itself or a vector whose argmin
    (smallest index on ties) must be a member.
    """
    if isinstance(obj, BandSet):
        t = np.asarray(target, dtype=np.float64)
        if t.shape != (obj.p,):
            raise DomainError(f"target must have shape ({obj.p},), got {t.shape}")
        return bool(np.all((obj.lower <= t) & (t <= obj.upper)))
    if isinstance(obj, ModelConfidenceSet):
        if np.isscalar(target) or isinstance(target, (int, np.integer)):
            r_star = int(target)
        else:
            t = np.asarray(target, dtype=np.float64)
            if t.shape != (obj.p,):
                raise DomainError(f"target must have shape ({obj.p},), got {t.shape}")
            r_star = int(np.argmin(t))
        if not 0 <= r_star < obj.p:
            raise DomainError(f"target index {r_star} outside [0, {obj.p})")
        return r_star in obj.members
    raise DomainError(f"cannot check coverage for {type(obj).__name__}")
