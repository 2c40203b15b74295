"""Core containers shared across the package.

Indices are 0-based everywhere.  Fold v of a strict plan on n rows is
the contiguous block ``[n*v // V, n*(v+1) // V)``, which for divisible
n matches the textbook 1-based prescription {n(v-1)/V+1, ..., nv/V}.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .learners import SgdConfig


class DomainError(ValueError):
    """An argument lies outside the documented domain."""


class DivisibilityError(DomainError):
    """Strict fold construction requires V to divide n."""


class DatasetFormatError(ValueError):
    """A dataset file does not follow the expected CSV layout."""


LEARNER_FAMILIES = ("ols", "ridge", "lasso", "forward", "sgd", "series")
LOSS_TAGS = ("squared", "absolute", "zero_one")


def _as_float_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DomainError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, d) paired with a length-n response vector.

    Construction only coerces dtypes; use :func:`validate_dataset` to
    obtain a report of structural violations without raising.
    """

    features: np.ndarray
    response: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", _as_float_array(self.features, "features", 2))
        object.__setattr__(self, "response", _as_float_array(self.response, "response", 1))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def replace_row(self, i: int, z_new: np.ndarray, y_new: float) -> "Dataset":
        """Copy of the dataset with row i swapped for (z_new, y_new)."""
        if not 0 <= i < self.n:
            raise DomainError(f"row index {i} outside [0, {self.n})")
        z_new = _as_float_array(z_new, "z_new", 1)
        if z_new.shape[0] != self.d:
            raise DomainError(f"replacement has {z_new.shape[0]} features, expected {self.d}")
        features = self.features.copy()
        response = self.response.copy()
        features[i] = z_new
        response[i] = float(y_new)
        return Dataset(features, response, self.feature_names)


def validate_dataset(dataset: Dataset) -> list[str]:
    """Return a list of violation descriptions; empty means clean."""
    problems: list[str] = []
    nf, nr = dataset.features.shape[0], dataset.response.shape[0]
    if nf != nr:
        problems.append(f"row counts differ: features has {nf}, response has {nr}")
    if not np.all(np.isfinite(dataset.features)):
        problems.append("features contains non-finite entries")
    if not np.all(np.isfinite(dataset.response)):
        problems.append("response contains non-finite entries")
    if dataset.feature_names is not None and len(dataset.feature_names) != dataset.d:
        problems.append(
            f"feature_names has {len(dataset.feature_names)} entries for {dataset.d} columns"
        )
    return problems


@dataclass(frozen=True)
class FoldPlan:
    """Partition of row indices 0..n-1 into V contiguous folds."""

    n: int
    V: int
    fold_of: np.ndarray
    index_sets: tuple[np.ndarray, ...]

    def fold_sizes(self) -> tuple[int, ...]:
        return tuple(len(ix) for ix in self.index_sets)

    def train_indices(self, v: int) -> np.ndarray:
        """Ascending indices of all rows outside fold v."""
        if not 0 <= v < self.V:
            raise DomainError(f"fold index {v} outside [0, {self.V})")
        return np.flatnonzero(self.fold_of != v)


def make_folds(n: int, V: int, mode: str = "strict") -> FoldPlan:
    """Build a contiguous V-fold plan on n rows.

    Parameters
    ----------
    n, V : int
        Number of rows and folds; requires n >= V >= 2.
    mode : str
        "strict" demands V | n and yields equal blocks of size n/V.
        "balanced" allows any n >= V and yields contiguous blocks whose
        sizes differ by at most one, larger blocks first.
    """
    if V < 2:
        raise DomainError(f"need at least 2 folds, got V={V}")
    if n < V:
        raise DomainError(f"need n >= V, got n={n}, V={V}")
    if mode not in ("strict", "balanced"):
        raise DomainError(f"unknown fold mode {mode!r}")
    if mode == "strict" and n % V != 0:
        raise DivisibilityError(f"strict folds need V | n, got n={n}, V={V}")

    base, rem = divmod(n, V)
    sizes = [base + 1 if v < rem else base for v in range(V)]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    index_sets = tuple(np.arange(bounds[v], bounds[v + 1]) for v in range(V))
    fold_of = np.empty(n, dtype=np.int64)
    for v, ix in enumerate(index_sets):
        fold_of[ix] = v
    return FoldPlan(n=n, V=V, fold_of=fold_of, index_sets=index_sets)


@dataclass(frozen=True)
class LossMatrix:
    """Per-row, per-model losses: entry (i, r) is model r's loss on row i.

    Row i is always scored by the fit that held out row i's fold, so
    column means are honest cross-validated risks.
    """

    values: np.ndarray
    plan: FoldPlan
    model_labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", _as_float_array(self.values, "values", 2))
        object.__setattr__(self, "model_labels", tuple(self.model_labels))
        if self.values.shape[0] != self.plan.n:
            raise DomainError(
                f"loss matrix has {self.values.shape[0]} rows for a plan over {self.plan.n}"
            )
        if self.values.shape[1] != len(self.model_labels):
            raise DomainError(
                f"{self.values.shape[1]} columns but {len(self.model_labels)} labels"
            )
        if not np.all(np.isfinite(self.values)):
            raise DomainError("loss matrix contains non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LearnerSpec:
    """Value-type description of one candidate learner.

    Only the fields relevant to ``family`` are consulted: ``lam`` for
    ridge and lasso, ``steps`` for forward selection, ``truncation``
    for the series estimator, ``sgd`` for the stochastic gradient
    family.  ``loss`` names the evaluation loss, not the training
    objective.
    """

    family: str
    lam: float = 0.0
    steps: int | None = None
    truncation: int | None = None
    loss: str = "squared"
    sgd: "SgdConfig | None" = None

    def validate(self) -> "LearnerSpec":
        if self.family not in LEARNER_FAMILIES:
            raise DomainError(f"unknown learner family {self.family!r}")
        if self.loss not in LOSS_TAGS:
            raise DomainError(f"unknown loss tag {self.loss!r}")
        if self.family in ("ridge", "lasso") and not self.lam >= 0:
            raise DomainError(f"{self.family} needs lam >= 0, got {self.lam}")
        if self.family == "forward":
            if self.steps is None or self.steps < 0:
                raise DomainError(f"forward needs steps >= 0, got {self.steps}")
        if self.family == "series":
            if self.truncation is None or self.truncation < 1:
                raise DomainError(f"series needs truncation >= 1, got {self.truncation}")
        if self.family == "sgd":
            if self.sgd is None:
                raise DomainError("sgd family needs an attached SgdConfig")
            self.sgd.validate()
        return self

    def label(self) -> str:
        if self.family == "ridge" or self.family == "lasso":
            return f"{self.family}:{self.lam:.6g}"
        if self.family == "forward":
            return f"forward:{self.steps}"
        if self.family == "series":
            return f"series:{self.truncation}"
        if self.family == "sgd":
            return f"sgd:{self.sgd.objective if self.sgd else '?'}"
        return self.family


@dataclass(frozen=True)
class FittedModel:
    """Linear predictor produced by any learner in the bank."""

    family: str
    coef: np.ndarray
    intercept: float = 0.0
    support: tuple[int, ...] | None = None
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coef", _as_float_array(self.coef, "coef", 1))

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        return features @ self.coef + self.intercept


def save_dataset_csv(dataset: Dataset, path) -> None:
    """Write ``y,z1,...,zd`` rows in full decimal precision."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"] + [f"z{j + 1}" for j in range(dataset.d)])
        for y, row in zip(dataset.response, dataset.features):
            writer.writerow([repr(float(y))] + [repr(float(z)) for z in row])


def load_dataset_csv(path) -> Dataset:
    """Read a dataset written by :func:`save_dataset_csv`.

    The header must contain a ``y`` column and feature columns named
    ``z1..zd``; every row must provide every field.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path} is empty")
        if "y" not in header:
            raise DatasetFormatError(f"{path} has no 'y' column")
        expected = {f"z{j + 1}" for j in range(len(header) - 1)}
        seen = set(header) - {"y"}
        if seen != expected:
            raise DatasetFormatError(
                f"{path} feature columns {sorted(seen)} are not z1..z{len(header) - 1}"
            )
        y_col = header.index("y")
        z_cols = [header.index(f"z{j + 1}") for j in range(len(header) - 1)]
        ys: list[float] = []
        zs: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header) or any(cell.strip() == "" for cell in row):
                raise DatasetFormatError(f"{path} line {lineno}: missing fields")
            try:
                ys.append(float(row[y_col]))
                zs.append([float(row[c]) for c in z_cols])
            except ValueError as exc:
                raise DatasetFormatError(f"{path} line {lineno}: {exc}") from exc
    if not ys:
        raise DatasetFormatError(f"{path} has a header but no rows")
    return Dataset(np.asarray(zs), np.asarray(ys))
