"""Config-driven experiment harness and command-line entry point.

Campaigns read a sectioned key=value config, run seeded replications in
a worker pool, and emit per-replication CSV tables plus a JSON manifest
whose aggregates are recomputed from the written rows.  Every
replication's work is a pure function of (master seed, experiment kind,
n, replication index), so thread scheduling, completion order, and
resumption never change a result: rerunning into the same directory
keeps completed rows verbatim and computes only what is missing.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .covariance import aggregate_covariance
from .cv_engine import average_fitted_risk_oracle, cv_risk, fit_all_folds, loss_matrix
from .datamodel import Dataset, DomainError, LearnerSpec, make_folds, save_dataset_csv
from .det_variance import (
    HoldoutSet,
    default_holdout_size,
    phi_pair,
    phi_perturb,
    read_phi_csv,
    write_phi_csv,
)
from .inference import (
    check_coverage,
    cvc_set,
    naive_set,
    pointwise_band,
    simultaneous_band,
)
from .learners import lasso_grid, lasso_grid_log
from .simgen import SeriesGen, SparseLinearGen, gen_series, gen_sparse_linear, stable_subseed
from .stability_lab import sgd_first_diff_campaign, sgd_second_diff_campaign

__all__ = [
    "BASE_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "run_band_coverage",
    "run_fwd_pointwise",
    "run_cvc_size",
    "run_stability",
    "run_phi",
    "main",
]


class ConfigError(DomainError):
    """A config file is malformed or inconsistent."""


KINDS = ("band_coverage", "fwd_pointwise", "cvc_size", "stability", "phi")

BASE_COLUMNS = ("rep", "seed", "alpha", "covered", "size_naive", "size_cvc", "ms_elapsed")

_EXTRA_COLUMNS = {
    "band_coverage": ("covered_pw",),
    "cvc_size": ("covered_naive",),
    "fwd_pointwise": ("model",),
}


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view of one experiment config file.

    ``d`` is either a fixed width or the literal string ``"n/10"``; use
    :meth:`d_for` to resolve it per sample size.  ``reps`` doubles as
    the trial count for stability campaigns.
    """

    kind: str
    # generator
    family: str = "sparse_linear"
    n_list: tuple[int, ...] = (100,)
    d: int | str = 20
    s: int = 5
    nu: float = 1000.0
    j_max: int = 8
    decay: float = 2.0
    noise_sd: float = 1.0
    radius_x: float = 1.0
    # learner bank
    lasso: str = "none"
    lasso_count: int = 50
    lasso_ratio: float = 1e-3
    forward_steps: tuple[int, ...] = ()
    ridge_lams: tuple[float, ...] = ()
    series_truncations: tuple[int, ...] = ()
    sgd_lam: float = 1.6
    sgd_a: float = 0.6
    sgd_radius_theta: float = 1.0
    # run
    V: int = 5
    alphas: tuple[float, ...] = (0.05,)
    reps: int = 100
    draws: int = 20000
    seed: int = 0
    out: str = "results"
    threads: int = 0
    variant: str = "both"
    index_mode: str = "uniform"
    holdout_m: int = 0

    def d_for(self, n: int) -> int:
        d = n // 10 if self.d == "n/10" else int(self.d)
        if d < 1:
            raise DomainError(f"resolved feature count {d} at n={n} is not positive")
        return d

    def bank_size(self) -> int:
        lasso = {"none": 0, "log": self.lasso_count, "doubling": 10}[self.lasso]
        return (
            len(self.forward_steps)
            + len(self.ridge_lams)
            + len(self.series_truncations)
            + lasso
        )

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.family not in ("sparse_linear", "series", "bounded_regression"):
            raise ConfigError(f"unknown generator family {self.family!r}")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ConfigError(f"n must be a list of positive sizes, got {self.n_list}")
        if isinstance(self.d, str):
            if self.d != "n/10":
                raise ConfigError(f"d must be an integer or 'n/10', got {self.d!r}")
        elif self.d < 1:
            raise ConfigError(f"need d >= 1, got {self.d}")
        if self.s < 1 or not self.nu > 0:
            raise ConfigError(f"need s >= 1 and nu > 0, got s={self.s}, nu={self.nu}")
        if self.j_max < 1 or not self.decay > 0 or self.noise_sd < 0:
            raise ConfigError("series generator needs j_max >= 1, decay > 0, noise_sd >= 0")
        if not self.radius_x > 0:
            raise ConfigError(f"need radius_x > 0, got {self.radius_x}")
        if self.lasso not in ("none", "log", "doubling"):
            raise ConfigError(f"lasso must be none|log|doubling, got {self.lasso!r}")
        if self.lasso_count < 2 or not 0 < self.lasso_ratio < 1:
            raise ConfigError("lasso grid needs count >= 2 and ratio in (0, 1)")
        if any(st < 0 for st in self.forward_steps):
            raise ConfigError("forward steps must be >= 0")
        if any(lam < 0 for lam in self.ridge_lams):
            raise ConfigError("ridge penalties must be >= 0")
        if any(J < 1 for J in self.series_truncations):
            raise ConfigError("series truncations must be >= 1")
        if self.V < 2:
            raise ConfigError(f"need V >= 2, got {self.V}")
        if not self.alphas or any(not 0 < a < 1 for a in self.alphas):
            raise ConfigError(f"alphas must lie strictly in (0, 1), got {self.alphas}")
        if self.reps < 1:
            raise ConfigError(f"need reps >= 1, got {self.reps}")
        if self.draws < 1:
            raise ConfigError(f"need draws >= 1, got {self.draws}")
        if self.threads < 0:
            raise ConfigError(f"need threads >= 0, got {self.threads}")
        if self.index_mode not in ("uniform", "tail"):
            raise ConfigError(f"index_mode must be uniform|tail, got {self.index_mode!r}")
        if self.holdout_m < 0 or self.holdout_m % 2:
            raise ConfigError(f"holdout_m must be 0 (auto) or even, got {self.holdout_m}")

        needs_oracle = ("band_coverage", "fwd_pointwise", "cvc_size")
        if self.kind in needs_oracle and self.family != "sparse_linear":
            raise ConfigError(
                f"kind {self.kind} needs the sparse_linear generator (its risk "
                f"oracle), got {self.family!r}"
            )
        if self.kind in needs_oracle or self.kind == "phi":
            if self.bank_size() < 1:
                raise ConfigError(f"kind {self.kind} needs a non-empty learner bank")
        if self.kind == "phi":
            if self.family == "bounded_regression":
                raise ConfigError("kind phi needs the sparse_linear or series generator")
            if self.variant not in ("pair", "perturb", "both"):
                raise ConfigError(f"phi variant must be pair|perturb|both, got {self.variant!r}")
        if self.kind == "stability":
            if self.family != "bounded_regression":
                raise ConfigError("kind stability needs the bounded_regression generator")
            if isinstance(self.d, str):
                raise ConfigError("kind stability needs an integer d")
            if self.variant not in ("first", "second", "both"):
                raise ConfigError(
                    f"stability variant must be first|second|both, got {self.variant!r}"
                )
            if not self.sgd_lam > 0 or not 0 < self.sgd_a < 1 or not self.sgd_radius_theta > 0:
                raise ConfigError("stability needs sgd_lam > 0, sgd_a in (0,1), radius > 0")
        return self


def _parse_int(text: str) -> int:
    return int(text.strip())


def _parse_float(text: str) -> float:
    return float(text.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(int(t) for t in items)


def _parse_floats(text: str) -> tuple[float, ...]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(float(t) for t in items)


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_d(text: str):
    text = text.strip()
    return text if text == "n/10" else int(text)


_SECTION_KEYS: dict[str, dict[str, tuple[str, Callable]]] = {
    "generator": {
        "family": ("family", _parse_str),
        "n": ("n_list", _parse_ints),
        "d": ("d", _parse_d),
        "s": ("s", _parse_int),
        "nu": ("nu", _parse_float),
        "j_max": ("j_max", _parse_int),
        "decay": ("decay", _parse_float),
        "noise_sd": ("noise_sd", _parse_float),
        "radius_x": ("radius_x", _parse_float),
    },
    "learners": {
        "lasso": ("lasso", _parse_str),
        "lasso_count": ("lasso_count", _parse_int),
        "lasso_ratio": ("lasso_ratio", _parse_float),
        "forward_steps": ("forward_steps", _parse_ints),
        "ridge_lams": ("ridge_lams", _parse_floats),
        "series_truncations": ("series_truncations", _parse_ints),
        "sgd_lam": ("sgd_lam", _parse_float),
        "sgd_a": ("sgd_a", _parse_float),
        "sgd_radius_theta": ("sgd_radius_theta", _parse_float),
    },
    "run": {
        "kind": ("kind", _parse_str),
        "V": ("V", _parse_int),
        "alphas": ("alphas", _parse_floats),
        "reps": ("reps", _parse_int),
        "draws": ("draws", _parse_int),
        "seed": ("seed", _parse_int),
        "out": ("out", _parse_str),
        "threads": ("threads", _parse_int),
        "variant": ("variant", _parse_str),
        "index_mode": ("index_mode", _parse_str),
        "holdout_m": ("holdout_m", _parse_int),
    },
}


def load_config(path, **overrides) -> ExperimentConfig:
    """Parse a sectioned key=value config file into an ExperimentConfig.

    Sections are [generator], [learners], [run]; keys are case-sensitive
    and unknown keys or sections are errors, so typos never silently
    fall back to defaults.  Keyword overrides (seed, out, reps, threads)
    replace the file's values before validation.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    read = parser.read(str(path))
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    fields: dict = {}
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        known = _SECTION_KEYS[section]
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            field, parse = known[key]
            try:
                fields[field] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r} in [{section}]: {exc}") from exc
    if "kind" not in fields:
        raise ConfigError("config must set kind in the [run] section")
    for key, value in overrides.items():
        if value is not None:
            fields[key] = value
    return ExperimentConfig(**fields).validate()


# ----------------------------------------------------------- shared pieces


def _build_bank(cfg: ExperimentConfig, dataset: Dataset):
    """Candidate specs plus config-stable labels.

    Lasso penalties depend on the data (fractions of that dataset's
    lam_max), so lasso labels are grid positions rather than penalty
    values; the other labels name the learner parameter directly.
    """
    specs: list[LearnerSpec] = []
    labels: list[str] = []
    for steps in cfg.forward_steps:
        specs.append(LearnerSpec(family="forward", steps=steps))
        labels.append(f"forward:{steps}")
    for lam in cfg.ridge_lams:
        specs.append(LearnerSpec(family="ridge", lam=lam))
        labels.append(f"ridge:{lam:g}")
    for J in cfg.series_truncations:
        specs.append(LearnerSpec(family="series", truncation=J))
        labels.append(f"series:{J}")
    if cfg.lasso == "log":
        lams = lasso_grid_log(dataset.features, dataset.response, cfg.lasso_count, cfg.lasso_ratio)
    elif cfg.lasso == "doubling":
        lams = lasso_grid(dataset.features, dataset.response, cfg.V)
    else:
        lams = ()
    for idx, lam in enumerate(lams):
        specs.append(LearnerSpec(family="lasso", lam=float(lam)))
        labels.append(f"lasso[{idx}]")
    if not specs:
        raise DomainError("the configured learner bank is empty")
    return tuple(specs), tuple(labels)


def _generate(cfg: ExperimentConfig, n: int, seed: int, *, d: int | None = None):
    if cfg.family == "sparse_linear":
        width = cfg.d_for(n) if d is None else d
        return gen_sparse_linear(SparseLinearGen(n=n, d=width, s=cfg.s, nu=cfg.nu, seed=seed))
    if cfg.family == "series":
        return gen_series(
            SeriesGen(n=n, j_max=cfg.j_max, decay=cfg.decay, noise_sd=cfg.noise_sd, seed=seed)
        )
    raise DomainError(f"generator family {cfg.family!r} cannot produce datasets here")


def _rep_problem(cfg: ExperimentConfig, n: int, rep: int):
    data_seed = stable_subseed(cfg.seed, cfg.kind, n, rep)
    q_seed = stable_subseed(cfg.seed, cfg.kind + "-quantile", n, rep)
    ds, truth = _generate(cfg, n, data_seed)
    plan = make_folds(n, cfg.V)
    specs, labels = _build_bank(cfg, ds)
    fits = fit_all_folds(ds, specs, plan)
    lm = loss_matrix(ds, fits, plan, "squared")
    target = average_fitted_risk_oracle(fits, truth)
    return data_seed, q_seed, labels, lm, target


def _resolve_workers(cfg: ExperimentConfig) -> int:
    want = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)
    cap_text = os.environ.get("CVCONF_THREADS", "").strip()
    if cap_text:
        cap = int(cap_text)
        if cap > 0:
            want = min(want, cap)
    return max(1, want)


# --------------------------------------------------- replication campaigns


def _band_rows(cfg: ExperimentConfig, n: int, rep: int):
    data_seed, q_seed, _, lm, target = _rep_problem(cfg, n, rep)
    risks, cov = cv_risk(lm), aggregate_covariance(lm)
    rows = []
    for alpha in cfg.alphas:
        band = simultaneous_band(risks, cov, alpha, seed=q_seed, draws=cfg.draws)
        pw = pointwise_band(risks, cov, alpha)
        rows.append(
            [
                str(rep),
                str(data_seed),
                repr(float(alpha)),
                str(int(check_coverage(band, target))),
                str(len(naive_set(band).members)),
                "",
                None,
                str(int(check_coverage(pw, target))),
            ]
        )
    return rows


def _cvc_rows(cfg: ExperimentConfig, n: int, rep: int):
    data_seed, q_seed, _, lm, target = _rep_problem(cfg, n, rep)
    risks, cov = cv_risk(lm), aggregate_covariance(lm)
    rows = []
    for alpha in cfg.alphas:
        band = simultaneous_band(risks, cov, alpha, seed=q_seed, draws=cfg.draws)
        base = naive_set(band)
        cvc = cvc_set(lm, alpha, draws=cfg.draws, seed=q_seed)
        rows.append(
            [
                str(rep),
                str(data_seed),
                repr(float(alpha)),
                str(int(check_coverage(cvc, target))),
                str(len(base.members)),
                str(len(cvc.members)),
                None,
                str(int(check_coverage(base, target))),
            ]
        )
    return rows


def _fwd_rows(cfg: ExperimentConfig, n: int, rep: int):
    data_seed, _, labels, lm, target = _rep_problem(cfg, n, rep)
    risks, cov = cv_risk(lm), aggregate_covariance(lm)
    rows = []
    for alpha in cfg.alphas:
        pw = pointwise_band(risks, cov, alpha)
        for r, label in enumerate(labels):
            hit = pw.lower[r] <= target[r] <= pw.upper[r]
            rows.append(
                [str(rep), str(data_seed), repr(float(alpha)), str(int(hit)), "", "", None, label]
            )
    return rows


_REP_WORKERS = {
    "band_coverage": _band_rows,
    "cvc_size": _cvc_rows,
    "fwd_pointwise": _fwd_rows,
}


def _rows_per_rep(cfg: ExperimentConfig) -> int:
    if cfg.kind == "fwd_pointwise":
        return len(cfg.alphas) * cfg.bank_size()
    return len(cfg.alphas)


def _read_completed(path: Path, header: Sequence[str], per_rep: int) -> dict[int, list[str]]:
    if not path.exists():
        return {}
    lines = path.read_text().splitlines()
    if not lines or lines[0] != ",".join(header):
        raise DomainError(
            f"existing output {path} has a different schema; use a fresh directory"
        )
    groups: dict[int, list[str]] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        groups.setdefault(int(line.split(",", 1)[0]), []).append(line)
    return {rep: rows for rep, rows in groups.items() if len(rows) == per_rep}


def _timed_lines(worker, cfg, n, rep) -> list[str]:
    t0 = time.perf_counter()
    rows = worker(cfg, n, rep)
    ms = repr((time.perf_counter() - t0) * 1e3)
    out = []
    for cells in rows:
        cells = list(cells)
        cells[6] = ms
        out.append(",".join(cells))
    return out


def _science_fields(cfg: ExperimentConfig) -> dict:
    echo = dataclasses.asdict(cfg)
    echo.pop("out")
    echo.pop("threads")
    for key, val in echo.items():
        if isinstance(val, tuple):
            echo[key] = list(val)
    return echo


def _aggregate_rows(kind: str, rows: list[dict]) -> dict:
    by_alpha: dict[str, list[dict]] = {}
    for row in rows:
        by_alpha.setdefault(row["alpha"], []).append(row)
    out = {}
    for alpha, group in by_alpha.items():
        if kind == "fwd_pointwise":
            by_model: dict[str, list[int]] = {}
            for row in group:
                by_model.setdefault(row["model"], []).append(int(row["covered"]))
            out[alpha] = {
                "reps": len({row["rep"] for row in group}),
                "coverage_by_model": {
                    label: float(np.mean(vals)) for label, vals in sorted(by_model.items())
                },
            }
            continue
        agg = {
            "reps": len(group),
            "coverage": float(np.mean([int(r["covered"]) for r in group])),
            "mean_size_naive": float(np.mean([int(r["size_naive"]) for r in group])),
        }
        if kind == "band_coverage":
            agg["coverage_pw"] = float(np.mean([int(r["covered_pw"]) for r in group]))
        if kind == "cvc_size":
            agg["mean_size_cvc"] = float(np.mean([int(r["size_cvc"]) for r in group]))
            agg["coverage_naive"] = float(np.mean([int(r["covered_naive"]) for r in group]))
        out[alpha] = agg
    return out


def _aggregate_csv(kind: str, path: Path) -> dict:
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:] if line.strip()]
    return _aggregate_rows(kind, rows)


def _run_replicated(cfg: ExperimentConfig, kind: str) -> dict:
    if cfg.kind != kind:
        raise DomainError(f"config kind is {cfg.kind!r} but this campaign runs {kind!r}")
    worker = _REP_WORKERS[kind]
    header = list(BASE_COLUMNS) + list(_EXTRA_COLUMNS[kind])
    per_rep = _rows_per_rep(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    failures: dict[str, list] = {}
    completed: dict[str, int] = {}
    resumed: dict[str, int] = {}
    workers = _resolve_workers(cfg)
    for n in cfg.n_list:
        path = out / f"{kind}_n{n}.csv"
        keep = _read_completed(path, header, per_rep)
        todo = [rep for rep in range(cfg.reps) if rep not in keep]
        fresh: dict[int, list[str]] = {}
        fails: list[dict] = []
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {rep: pool.submit(_timed_lines, worker, cfg, n, rep) for rep in todo}
            for rep in todo:
                try:
                    fresh[rep] = futures[rep].result()
                except Exception as exc:
                    fails.append(
                        {
                            "rep": rep,
                            "seed": stable_subseed(cfg.seed, kind, n, rep),
                            "error": f"{type(exc).__name__}: {exc}",
                        }
                    )
        lines = [",".join(header)]
        done = 0
        for rep in range(cfg.reps):
            rows = keep.get(rep) or fresh.get(rep)
            if rows:
                lines.extend(rows)
                done += 1
        path.write_text("\n".join(lines) + "\n")
        key = str(n)
        files[key] = path.name
        failures[key] = fails
        completed[key] = done
        resumed[key] = sum(1 for rep in keep if rep < cfg.reps)
    aggregates = {
        str(n): _aggregate_csv(kind, out / f"{kind}_n{n}.csv") for n in cfg.n_list
    }
    manifest = {
        "kind": kind,
        "config": _science_fields(cfg),
        "columns": header,
        "files": files,
        "reps_completed": completed,
        "resumed_reps": resumed,
        "failures": failures,
        "aggregates": aggregates,
    }
    (out / f"{kind}_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest


def run_band_coverage(cfg: ExperimentConfig) -> dict:
    """Simultaneous vs pointwise band coverage of the fold-averaged true risks."""
    return _run_replicated(cfg, "band_coverage")


def run_cvc_size(cfg: ExperimentConfig) -> dict:
    """Coverage and size of the two model confidence sets."""
    return _run_replicated(cfg, "cvc_size")


def run_fwd_pointwise(cfg: ExperimentConfig) -> dict:
    """Per-model pointwise interval coverage across the configured bank."""
    return _run_replicated(cfg, "fwd_pointwise")


# --------------------------------------------------- stability / phi kinds


def run_stability(cfg: ExperimentConfig) -> dict:
    """Replace-one SGD campaigns; artifacts are skipped when already present."""
    if cfg.kind != "stability":
        raise DomainError(f"config kind is {cfg.kind!r} but this campaign runs 'stability'")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = ("first", "second") if cfg.variant == "both" else (cfg.variant,)
    files: dict[str, dict] = {}
    skipped: list[str] = []
    aggregates: dict[str, dict] = {}
    for variant in variants:
        csv_path = out / f"stability_{variant}.csv"
        json_path = out / f"stability_{variant}.json"
        if csv_path.exists() and json_path.exists():
            skipped.append(variant)
        else:
            if variant == "first":
                report = sgd_first_diff_campaign(
                    cfg.n_list,
                    cfg.reps,
                    lam=cfg.sgd_lam,
                    step_exponent=cfg.sgd_a,
                    radius_x=cfg.radius_x,
                    radius_theta=cfg.sgd_radius_theta,
                    d=int(cfg.d),
                    seed=cfg.seed,
                    index_mode=cfg.index_mode,
                )
            else:
                report = sgd_second_diff_campaign(
                    cfg.n_list,
                    cfg.reps,
                    lam=cfg.sgd_lam,
                    step_exponent=cfg.sgd_a,
                    radius_x=cfg.radius_x,
                    radius_theta=cfg.sgd_radius_theta,
                    d=int(cfg.d),
                    seed=cfg.seed,
                )
            report.write_csv(csv_path)
            report.write_json(json_path)
        blob = json.loads(json_path.read_text())
        files[variant] = {"csv": csv_path.name, "json": json_path.name}
        aggregates[variant] = {
            "kind": blob["kind"],
            "slope": blob["slope"],
            "violations": blob.get("violations", {}),
        }
    manifest = {
        "kind": "stability",
        "config": _science_fields(cfg),
        "files": files,
        "skipped": skipped,
        "aggregates": aggregates,
    }
    (out / "stability_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest


def run_phi(cfg: ExperimentConfig) -> dict:
    """Hold-out variance estimates per n; artifacts are skipped when present."""
    if cfg.kind != "phi":
        raise DomainError(f"config kind is {cfg.kind!r} but this campaign runs 'phi'")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = ("pair", "perturb") if cfg.variant == "both" else (cfg.variant,)
    files: dict[str, dict] = {v: {} for v in variants}
    skipped: list[str] = []
    aggregates: dict[str, dict] = {v: {} for v in variants}
    for n in cfg.n_list:
        m = cfg.holdout_m or default_holdout_size(n)
        prepared = None
        for variant in variants:
            csv_path = out / f"phi_{variant}_n{n}.csv"
            json_path = csv_path.with_suffix(".json")
            if csv_path.exists() and json_path.exists():
                skipped.append(f"{variant}:{n}")
            else:
                if prepared is None:
                    ds, _ = _generate(cfg, n, stable_subseed(cfg.seed, "phi", n))
                    # the hold-out keeps the training feature width even
                    # when d scales with n
                    hold_ds, _ = _generate(
                        cfg,
                        m,
                        stable_subseed(cfg.seed, "phi-holdout", n),
                        d=cfg.d_for(n) if cfg.family == "sparse_linear" else None,
                    )
                    plan = make_folds(n, cfg.V)
                    specs, _ = _build_bank(cfg, ds)
                    prepared = (ds, plan, specs, HoldoutSet.from_dataset(hold_ds))
                ds, plan, specs, holdout = prepared
                if variant == "pair":
                    est = phi_pair(ds, specs, plan, holdout)
                else:
                    est = phi_perturb(ds, specs, plan, holdout)
                write_phi_csv(est, csv_path, n=n, seed=cfg.seed)
            phi, _meta = read_phi_csv(csv_path)
            files[variant][str(n)] = {"csv": csv_path.name, "json": json_path.name}
            aggregates[variant][str(n)] = {"diag": [float(v) for v in np.diag(phi)]}
    manifest = {
        "kind": "phi",
        "config": _science_fields(cfg),
        "files": files,
        "skipped": skipped,
        "aggregates": aggregates,
    }
    (out / "phi_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# -------------------------------------------------------- one-shot commands


def _one_shot_band(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n = cfg.n_list[0]
    ds, _ = _generate(cfg, n, stable_subseed(cfg.seed, "band", n))
    plan = make_folds(n, cfg.V)
    specs, labels = _build_bank(cfg, ds)
    lm = loss_matrix(ds, fit_all_folds(ds, specs, plan), plan, "squared")
    risks, cov = cv_risk(lm), aggregate_covariance(lm)
    q_seed = stable_subseed(cfg.seed, "band-quantile", n)
    bands = [
        {
            "alpha": float(alpha),
            "band": simultaneous_band(risks, cov, alpha, seed=q_seed, draws=cfg.draws).to_dict(),
        }
        for alpha in cfg.alphas
    ]
    path = out / "band.json"
    blob = {"n": n, "seed": cfg.seed, "draws": cfg.draws, "labels": list(labels), "bands": bands}
    path.write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n")
    return path


def _one_shot_cvc(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n = cfg.n_list[0]
    ds, _ = _generate(cfg, n, stable_subseed(cfg.seed, "cvc", n))
    plan = make_folds(n, cfg.V)
    specs, labels = _build_bank(cfg, ds)
    lm = loss_matrix(ds, fit_all_folds(ds, specs, plan), plan, "squared")
    q_seed = stable_subseed(cfg.seed, "cvc-quantile", n)
    sets = [
        {
            "alpha": float(alpha),
            "set": cvc_set(lm, alpha, draws=cfg.draws, seed=q_seed).to_dict(),
        }
        for alpha in cfg.alphas
    ]
    path = out / "cvc.json"
    blob = {"n": n, "seed": cfg.seed, "draws": cfg.draws, "labels": list(labels), "sets": sets}
    path.write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n")
    return path


def _one_shot_gen(cfg: ExperimentConfig) -> list[Path]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for n in cfg.n_list:
        ds, _ = _generate(cfg, n, stable_subseed(cfg.seed, "gen", n))
        path = out / f"dataset_n{n}.csv"
        save_dataset_csv(ds, path)
        paths.append(path)
    return paths


# -------------------------------------------------------------------- CLI


_CAMPAIGNS = {
    "coverage": ("band_coverage", run_band_coverage),
    "fwd": ("fwd_pointwise", run_fwd_pointwise),
    "cvc-size": ("cvc_size", run_cvc_size),
    "stability": ("stability", run_stability),
    "phi": ("phi", run_phi),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cvconf",
        description="Seeded cross-validation inference experiments from config files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("band", "cvc", "coverage", "fwd", "cvc-size", "stability", "phi", "gen"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the experiment config file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--reps", type=int, help="override the replication/trial count")
        p.add_argument("--threads", type=int, help="override the worker count (0 = auto)")
    args = parser.parse_args(argv)
    cfg = load_config(
        args.config, seed=args.seed, out=args.out, reps=args.reps, threads=args.threads
    )
    if args.command in _CAMPAIGNS:
        kind, runner = _CAMPAIGNS[args.command]
        if cfg.kind != kind:
            raise DomainError(
                f"subcommand {args.command!r} runs kind {kind!r} but the config says "
                f"{cfg.kind!r}"
            )
        runner(cfg)
    elif args.command == "band":
        _one_shot_band(cfg)
    elif args.command == "cvc":
        _one_shot_cvc(cfg)
    else:
        _one_shot_gen(cfg)
    return 0
