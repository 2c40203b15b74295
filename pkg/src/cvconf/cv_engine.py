"""V-fold fitting engine and held-out loss bookkeeping.

Row i is always scored by the model fitted with row i's fold held
out, so column means of the loss matrix are honest V-fold risks.
Replace-one recomputation reuses the one fold whose training rows are
untouched and refits the others, reproducing a from-scratch run
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import (
    Dataset,
    DomainError,
    FittedModel,
    FoldPlan,
    LearnerSpec,
    LossMatrix,
    LOSS_TAGS,
    validate_dataset,
)
from .learners import fit_forward, fit_lasso, fit_ols, fit_ridge, fit_series, fit_sgd
from .simgen import SparseLinearTruth


class FitError(RuntimeError):
    """A learner failed inside the fold loop; carries the location."""

    def __init__(self, fold: int, model: int, spec: LearnerSpec, cause: Exception):
        super().__init__(
            f"fit failed at fold {fold}, model {model} ({spec.label()}): {cause}"
        )
        self.fold = fold
        self.model = model
        self.cause = cause


@dataclass(frozen=True)
class FoldFits:
    """Fitted models indexed fits[v][r] for fold v, candidate r."""

    fits: tuple[tuple[FittedModel, ...], ...]
    specs: tuple[LearnerSpec, ...]
    plan: FoldPlan


@dataclass(frozen=True)
class RiskVector:
    """Cross-validated risk per candidate model."""

    values: np.ndarray
    n: int
    model_labels: tuple[str, ...]

    @property
    def p(self) -> int:
        return self.values.shape[0]


def _fit_one(spec: LearnerSpec, Z: np.ndarray, y: np.ndarray, gram=None, corr=None) -> FittedModel:
    if spec.family == "ols":
        return fit_ols(Z, y)
    if spec.family == "ridge":
        return fit_ridge(Z, y, spec.lam)
    if spec.family == "lasso":
        return fit_lasso(Z, y, spec.lam, gram=gram, corr=corr)
    if spec.family == "forward":
        return fit_forward(Z, y, spec.steps)
    if spec.family == "sgd":
        return fit_sgd(Z, y, spec.sgd)
    if spec.family == "series":
        return fit_series(Z, y, spec.truncation)
    raise DomainError(f"unknown learner family {spec.family!r}")


def fit_all_folds(dataset: Dataset, specs: Sequence[LearnerSpec], plan: FoldPlan) -> FoldFits:
    """Fit every candidate on every training complement.

    Identical specs share one fit per fold, and lasso candidates share
    the fold's gram matrix; neither shortcut changes any result, so
    permuting the bank permutes the fits exactly.
    """
    problems = validate_dataset(dataset)
    if problems:
        raise DomainError("dataset invalid: " + "; ".join(problems))
    if plan.n != dataset.n:
        raise DomainError(f"plan covers {plan.n} rows, dataset has {dataset.n}")
    specs = tuple(specs)
    if not specs:
        raise DomainError("need at least one learner spec")
    for spec in specs:
        spec.validate()

    want_gram = sum(1 for s in specs if s.family == "lasso") >= 2
    rows: list[tuple[FittedModel, ...]] = []
    for v in range(plan.V):
        tr = plan.train_indices(v)
        Z, y = dataset.features[tr], dataset.response[tr]
        gram = corr = None
        if want_gram:
            gram = Z.T @ Z / Z.shape[0]
            corr = Z.T @ y / Z.shape[0]
        seen: dict[LearnerSpec, FittedModel] = {}
        fold_row: list[FittedModel] = []
        for r, spec in enumerate(specs):
            if spec in seen:
                fold_row.append(seen[spec])
                continue
            try:
                if spec.family == "lasso":
                    model = _fit_one(spec, Z, y, gram=gram, corr=corr)
                else:
                    model = _fit_one(spec, Z, y)
            except Exception as exc:
                raise FitError(v, r, spec, exc) from exc
            seen[spec] = model
            fold_row.append(model)
        rows.append(tuple(fold_row))
    return FoldFits(fits=tuple(rows), specs=specs, plan=plan)


def _resolve_losses(losses, p: int) -> list[str]:
    if isinstance(losses, str):
        tags = [losses] * p
    else:
        tags = list(losses)
        if len(tags) != p:
            raise DomainError(f"{len(tags)} loss tags for {p} models")
    for tag in tags:
        if tag not in LOSS_TAGS:
            raise DomainError(f"unknown loss tag {tag!r}")
    return tags


def _apply_loss(tag: str, y: np.ndarray, score: np.ndarray) -> np.ndarray:
    if tag == "squared":
        return (y - score) ** 2
    if tag == "absolute":
        return np.abs(y - score)
    # zero_one: class 1 whenever the logistic link of the score reaches 1/2
    pred = (score >= 0.0).astype(np.float64)
    return (pred != y).astype(np.float64)


def loss_matrix(dataset: Dataset, fold_fits: FoldFits, plan: FoldPlan, losses) -> LossMatrix:
    """Held-out loss of every model on every row."""
    if plan.n != dataset.n:
        raise DomainError(f"plan covers {plan.n} rows, dataset has {dataset.n}")
    p = len(fold_fits.specs)
    tags = _resolve_losses(losses, p)
    values = np.empty((dataset.n, p))
    for v in range(plan.V):
        ix = plan.index_sets[v]
        block_Z = dataset.features[ix]
        block_y = dataset.response[ix]
        coefs = np.column_stack([fold_fits.fits[v][r].coef for r in range(p)])
        icepts = np.array([fold_fits.fits[v][r].intercept for r in range(p)])
        scores = block_Z @ coefs + icepts
        for r in range(p):
            values[ix, r] = _apply_loss(tags[r], block_y, scores[:, r])
    labels = tuple(spec.label() for spec in fold_fits.specs)
    return LossMatrix(values, plan, labels)


def cv_risk(lm: LossMatrix) -> RiskVector:
    """Column means of the loss matrix."""
    return RiskVector(values=lm.values.mean(axis=0), n=lm.n, model_labels=lm.model_labels)


def replace_one_cv_risk(
    dataset: Dataset,
    specs: Sequence[LearnerSpec],
    plan: FoldPlan,
    i: int,
    x_new,
    cached: FoldFits,
    losses="squared",
) -> RiskVector:
    """Risk vector after swapping row i for x_new = (z, y).

    The fold containing row i never trains on it, so its cached fits
    are reused; every other fold is refitted on the modified rows.
    Results equal a full recomputation bit for bit.
    """
    specs = tuple(specs)
    if cached.plan is not plan and (cached.plan.n != plan.n or cached.plan.V != plan.V):
        raise DomainError("cached fits were built for a different fold plan")
    if cached.specs != specs:
        raise DomainError("cached fits were built for a different learner bank")
    z_new, y_new = x_new
    ds2 = dataset.replace_row(i, np.asarray(z_new, dtype=np.float64), float(y_new))
    v_i = int(plan.fold_of[i])
    rows: list[tuple[FittedModel, ...]] = []
    for v in range(plan.V):
        if v == v_i:
            rows.append(cached.fits[v])
            continue
        tr = plan.train_indices(v)
        Z, y = ds2.features[tr], ds2.response[tr]
        seen: dict[LearnerSpec, FittedModel] = {}
        row: list[FittedModel] = []
        for r, spec in enumerate(specs):
            if spec in seen:
                row.append(seen[spec])
                continue
            try:
                model = _fit_one(spec, Z, y)
            except Exception as exc:
                raise FitError(v, r, spec, exc) from exc
            seen[spec] = model
            row.append(model)
        rows.append(tuple(row))
    ff2 = FoldFits(fits=tuple(rows), specs=specs, plan=plan)
    return cv_risk(loss_matrix(ds2, ff2, plan, losses))


def average_fitted_risk_oracle(fold_fits: FoldFits, truth) -> np.ndarray:
    """Exact conditional risk averaged over folds, for the identity-
    covariance Gaussian design under squared loss:
    noise variance plus the squared coefficient error of each fold fit.
    """
    if not isinstance(truth, SparseLinearTruth) or truth.design != "gaussian-identity":
        raise DomainError(
            "risk oracle only supports the identity-covariance Gaussian design"
        )
    for spec in fold_fits.specs:
        if spec.loss != "squared":
            raise DomainError("risk oracle only supports squared loss")
    p = len(fold_fits.specs)
    V = fold_fits.plan.V
    out = np.empty(p)
    for r in range(p):
        acc = 0.0
        for v in range(V):
            model = fold_fits.fits[v][r]
            if model.intercept != 0.0:
                raise DomainError("risk oracle assumes centered linear predictors")
            delta = model.coef - truth.beta
            acc += truth.noise_var + float(delta @ delta)
        out[r] = acc / V
    return out
