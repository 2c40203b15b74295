"""Variance estimation by replace-one recomputation with a hold-out set.

The plug-in covariance treats the cross-validated risk as an average and
targets its randomness around the random (training-conditional) centering.
To approximate the variance around a deterministic centering, the recipe
below perturbs the training data itself: swap one sample for a fresh
hold-out point, recompute the full cross-validated risk vector, and
aggregate the outer products of the changes.  Two variants share that
shape:

* pair: always replace the same sample, using the hold-out points two at
  a time, and accumulate outer products of the paired differences with
  weight n^2 / m;
* perturb: replace a different (round-robin) sample per hold-out point
  and accumulate outer products of changes from the unperturbed risks
  with weight n^2 / (2 m).

Both are exactly symmetric PSD by construction and scale as averages in
the number of hold-out points used.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cv_engine import FoldFits, cv_risk, fit_all_folds, loss_matrix, replace_one_cv_risk
from .datamodel import Dataset, DomainError, FoldPlan, LearnerSpec, _as_float_array

__all__ = [
    "ParityError",
    "HoldoutSet",
    "PhiEstimate",
    "default_holdout_size",
    "default_perturb_schedule",
    "phi_pair",
    "phi_perturb",
    "write_phi_csv",
    "read_phi_csv",
]


class ParityError(DomainError):
    """The paired variant needs an even number of hold-out points."""


@dataclass(frozen=True)
class HoldoutSet:
    """Fresh rows from the data distribution, disjoint from the CV data."""

    features: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", _as_float_array(self.features, "features", 2))
        object.__setattr__(self, "response", _as_float_array(self.response, "response", 1))
        if self.features.shape[0] != self.response.shape[0]:
            raise DomainError(
                f"{self.features.shape[0]} feature rows vs {self.response.shape[0]} responses"
            )
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.response))):
            raise DomainError("hold-out entries must be finite")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def row(self, j: int) -> tuple[np.ndarray, float]:
        return self.features[j], float(self.response[j])

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "HoldoutSet":
        return cls(ds.features, ds.response)


@dataclass(frozen=True)
class PhiEstimate:
    """Symmetric p x p variance estimate with its provenance.

    ``indices`` records which dataset rows were perturbed: a single entry
    for the pair variant (the same row throughout) and the full schedule
    for the perturb variant.
    """

    phi: np.ndarray
    m: int
    variant: str
    indices: tuple[int, ...]
    model_labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "phi", _as_float_array(self.phi, "phi", 2))
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if self.phi.shape[0] != self.phi.shape[1]:
            raise DomainError("phi must be square")
        if self.variant not in ("pair", "perturb"):
            raise DomainError(f"unknown variant {self.variant!r}")
        if not np.all(np.isfinite(self.phi)):
            raise DomainError("phi entries must be finite")

    @property
    def p(self) -> int:
        return self.phi.shape[0]


def default_holdout_size(n: int) -> int:
    """ceil(n ** 0.6), rounded up to the next even integer."""
    if n < 1:
        raise DomainError("n must be positive")
    m = math.ceil(n**0.6)
    return m + (m % 2)


def default_perturb_schedule(n: int, m: int) -> tuple[int, ...]:
    """Round-robin over dataset rows: j-th hold-out point perturbs row j mod n."""
    if n < 1 or m < 1:
        raise DomainError("schedule needs positive n and m")
    return tuple(j % n for j in range(m))


def _prepare(
    dataset: Dataset,
    specs: Sequence[LearnerSpec],
    plan: FoldPlan,
    holdout: HoldoutSet,
    cached: FoldFits | None,
):
    specs = tuple(specs)
    if not specs:
        raise DomainError("need at least one learner")
    if holdout.d != dataset.features.shape[1]:
        raise DomainError(
            f"hold-out has {holdout.d} features but the dataset has {dataset.features.shape[1]}"
        )
    if cached is None:
        cached = fit_all_folds(dataset, specs, plan)
    return specs, cached


def phi_pair(
    dataset: Dataset,
    specs: Sequence[LearnerSpec],
    plan: FoldPlan,
    holdout: HoldoutSet,
    *,
    losses="squared",
    replace_index: int = 0,
    cached: FoldFits | None = None,
) -> PhiEstimate:
    """Paired-difference variance estimate.

    For each consecutive hold-out pair (2j, 2j+1), recompute the risk
    vector with row ``replace_index`` swapped for each point and add the
    outer product of the difference; the total is scaled by n^2 / m.
    """
    if holdout.m % 2 != 0 or holdout.m < 2:
        raise ParityError(f"pair variant needs even m >= 2, got {holdout.m}")
    if not 0 <= replace_index < dataset.features.shape[0]:
        raise DomainError(f"replace_index {replace_index} outside the dataset")
    specs, cached = _prepare(dataset, specs, plan, holdout, cached)
    n = dataset.features.shape[0]
    p = len(specs)
    phi = np.zeros((p, p))
    labels = None
    for j in range(holdout.m // 2):
        ra = replace_one_cv_risk(
            dataset, specs, plan, replace_index, holdout.row(2 * j), cached, losses
        )
        rb = replace_one_cv_risk(
            dataset, specs, plan, replace_index, holdout.row(2 * j + 1), cached, losses
        )
        delta = ra.values - rb.values
        phi += np.outer(delta, delta)
        labels = ra.model_labels
    phi *= n**2 / holdout.m
    phi = (phi + phi.T) / 2
    return PhiEstimate(
        phi=phi, m=holdout.m, variant="pair", indices=(replace_index,), model_labels=labels
    )


def phi_perturb(
    dataset: Dataset,
    specs: Sequence[LearnerSpec],
    plan: FoldPlan,
    holdout: HoldoutSet,
    *,
    schedule: Sequence[int] | None = None,
    losses="squared",
    cached: FoldFits | None = None,
) -> PhiEstimate:
    """Multi-index variant: perturb a different row per hold-out point.

    Accumulates outer products of (baseline risks - perturbed risks) over
    the whole hold-out set and scales by n^2 / (2 m).
    """
    if holdout.m < 1:
        raise DomainError("perturb variant needs m >= 1")
    specs, cached = _prepare(dataset, specs, plan, holdout, cached)
    n = dataset.features.shape[0]
    if schedule is None:
        schedule = default_perturb_schedule(n, holdout.m)
    schedule = tuple(int(i) for i in schedule)
    if len(schedule) != holdout.m:
        raise DomainError(f"schedule length {len(schedule)} != m = {holdout.m}")
    if any(not 0 <= i < n for i in schedule):
        raise DomainError("schedule indices must lie in [0, n)")
    base = cv_risk(loss_matrix(dataset, cached, plan, losses))
    p = len(specs)
    phi = np.zeros((p, p))
    for j, i in enumerate(schedule):
        rj = replace_one_cv_risk(dataset, specs, plan, i, holdout.row(j), cached, losses)
        delta = base.values - rj.values
        phi += np.outer(delta, delta)
    phi *= n**2 / (2 * holdout.m)
    phi = (phi + phi.T) / 2
    return PhiEstimate(
        phi=phi, m=holdout.m, variant="perturb", indices=schedule, model_labels=base.model_labels
    )


def write_phi_csv(est: PhiEstimate, path, *, n: int, seed: int | None = None) -> Path:
    """Write phi as a p x p CSV plus a JSON sidecar with the metadata.

    The sidecar lands next to the CSV with a ``.json`` suffix and records
    n, m, variant, and seed.  Returns the sidecar path.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in est.phi:
            writer.writerow([repr(float(v)) for v in row])
    sidecar = path.with_suffix(".json")
    meta = {
        "n": int(n),
        "m": int(est.m),
        "variant": est.variant,
        "seed": seed,
        "p": est.p,
        "indices": list(est.indices),
        "model_labels": list(est.model_labels),
    }
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    return sidecar


def read_phi_csv(path) -> tuple[np.ndarray, dict]:
    """Read back a phi CSV and its JSON sidecar."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    phi = np.asarray(rows, dtype=np.float64)
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return phi, meta
