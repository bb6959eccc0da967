"""Simulation studies: heavy-tailed subset selection and lasso tuning.

Case 1 draws low-dimensional regressions with t-distributed designs and
Cauchy noise, fits every intercept-bearing covariate subset by adaptive
Huber regression, and compares the selection methods on out-of-fold Huber
losses. Case 2 draws high-dimensional AR(1)-correlated Gaussian designs
with t noise and treats a 50-point lasso penalty path as the candidate
family; the sparsest penalty in each confidence set is refit on the full
data after the fold-size correction.

Replicates are independent jobs keyed by (seed, replicate); running them
across processes changes nothing but wall time.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .models import (Dataset, FittedLinear, LossFn, adaptive_tau, enumerate_subsets,
                     fit_huber_adaptive, fit_huber_lasso, huber_lasso_lipschitz,
                     huber_location, lambda_fold_correction, lambda_path, loss_eval,
                     mad_scale, subset_mask_id)
from .ranksum import LossPanel
from .rng import keyed_stream, subseed
from .select import (Candidate, SelectionConfig, cv_select, cvc_style_select,
                     make_folds, panel_from_folds, pcv_select, rsr_from_panel)

TAG_C1_DATA = 201
TAG_C1_FOLDS = 202
TAG_C1_SELECT = 203
TAG_C2_DATA = 211
TAG_C2_FOLDS = 212
TAG_C2_SELECT = 213

ALL_METHODS = ("cv", "cvc_style", "pcv", "rsr")


# Case 1 truth: intercept 1, covariate coefficients (0, 3, 4, 0); only the
# second and third covariate drive the response.
CASE1_BETA = np.array([1.0, 0.0, 3.0, 4.0, 0.0])
CASE1_D = 4
CASE1_TRUE_SUBSET = (1, 2)


def _config_echo(config) -> dict:
    """Config as serialized in reports: everything but the thread count."""
    echo = asdict(config)
    echo.pop("threads", None)
    echo["methods"] = list(config.methods)
    return echo


def _check_methods(methods):
    methods = tuple(methods)
    bad = [m for m in methods if m not in ALL_METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; choose from {ALL_METHODS}")
    if not methods:
        raise ConfigError("need at least one method")
    return methods


@dataclass(frozen=True)
class Case1Config:
    """Subset-selection study settings."""

    n: int
    x_df: float
    seed: int
    reps: int = 100
    alpha: float = 0.1
    B: int = 500
    V: int = 5
    methods: tuple[str, ...] = ALL_METHODS
    screening: bool = True
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "methods", _check_methods(self.methods))
        if self.n < 4 * self.V:
            raise ConfigError(f"n = {self.n} is too small for V = {self.V} folds")
        if self.x_df <= 0:
            raise ConfigError("x_df must be positive")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")


@dataclass(frozen=True)
class Case2Config:
    """Lasso-tuning study settings."""

    n: int
    p: int
    noise_df: float
    rho: float
    seed: int
    reps: int = 50
    folds: int = 5
    k_path: int = 50
    alpha: float = 0.1
    B: int = 500
    methods: tuple[str, ...] = ALL_METHODS
    screening: bool = True
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "methods", _check_methods(self.methods))
        if not -1.0 < self.rho < 1.0:
            raise ConfigError("rho must be in (-1, 1)")
        if self.noise_df <= 0:
            raise ConfigError("noise_df must be positive")
        if self.p < 7:
            raise ConfigError("p must be at least 7 to hold the true support")
        if self.n < 2 * self.folds:
            raise ConfigError("n too small for the fold count")


@dataclass
class AggregateReport:
    """Per-method aggregated metrics plus the raw per-replicate rows.

    The config echo omits the thread count: like wall time it changes
    nothing but scheduling, and reports from different worker counts must
    compare byte-for-byte.
    """

    case: str
    config: dict
    reps: int
    metrics: dict
    replicates: list[dict] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {"case": self.case, "config": self.config, "reps": self.reps,
                "metrics": self.metrics}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def sample_student_t(df: float, stream: np.random.Generator, size=None):
    """Student-t draws via the Gaussian / chi-square ratio."""
    z = stream.standard_normal(size)
    w = stream.chisquare(df, size)
    return z / np.sqrt(w / df)


def _ar1_recurse(z: np.ndarray, rho: float) -> np.ndarray:
    x = np.empty_like(z)
    x[..., 0] = z[..., 0]
    s = math.sqrt(1.0 - rho * rho)
    for j in range(1, z.shape[-1]):
        x[..., j] = rho * x[..., j - 1] + s * z[..., j]
    return x


def sample_ar1_gaussian(p: int, rho: float, stream: np.random.Generator) -> np.ndarray:
    """One N(0, Sigma) vector with Sigma_ij = rho^|i-j|, by AR(1) recursion."""
    if not -1.0 < rho < 1.0:
        raise ConfigError("rho must be in (-1, 1)")
    return _ar1_recurse(stream.standard_normal(p), rho)


def ar1_design(n: int, p: int, rho: float, stream: np.random.Generator) -> np.ndarray:
    """n x p design with AR(1) rows."""
    if not -1.0 < rho < 1.0:
        raise ConfigError("rho must be in (-1, 1)")
    return _ar1_recurse(stream.standard_normal((n, p)), rho)


def _intercept_only_fitter(d: int):
    def fit(x, y):
        scale = mad_scale(y)
        if scale <= 0:
            scale = max(float(np.std(y)), 1e-12)
        tau = adaptive_tau(len(y), 0, scale)
        return FittedLinear(intercept=huber_location(y, tau), coef=np.zeros(d))
    return fit


def _subset_fitter(subset: tuple[int, ...], d: int):
    if not subset:
        return _intercept_only_fitter(d)
    cols = list(subset)

    def fit(x, y):
        fm = fit_huber_adaptive(Dataset(x=x[:, cols], y=y))
        coef = np.zeros(d)
        coef[cols] = fm.coef
        return FittedLinear(intercept=fm.intercept, coef=coef, meta=fm.meta)
    return fit


def subset_candidates(d: int = CASE1_D) -> list[Candidate]:
    """All 2^d intercept-bearing subset models fit by adaptive Huber."""
    return [Candidate(model_id=subset_mask_id(s, d), fit=_subset_fitter(s, d))
            for s in enumerate_subsets(d)]


def _selection_config(case_cfg, rep: int, tag: int, v_folds: int) -> SelectionConfig:
    return SelectionConfig(seed=subseed(case_cfg.seed, tag, rep),
                           alpha=case_cfg.alpha, B=case_cfg.B, V=v_folds,
                           screening_enabled=case_cfg.screening)


def case1_replicate(config: Case1Config, rep: int) -> list[dict]:
    """One Case 1 draw: fit, select with every method, return metric rows."""
    rng = keyed_stream(config.seed, TAG_C1_DATA, rep)
    n, d = config.n, CASE1_D
    x = sample_student_t(config.x_df, rng, size=(n, d))
    eps = sample_student_t(1.0, rng, size=n)
    y = CASE1_BETA[0] + x @ CASE1_BETA[1:] + eps
    data = Dataset(x=x, y=y)

    scale = mad_scale(y)
    if scale <= 0:
        scale = max(float(np.std(y)), 1e-12)
    loss = LossFn("huber", tau=adaptive_tau(n, d, scale))

    candidates = subset_candidates(d)
    folds = make_folds(n, config.V, subseed(config.seed, TAG_C1_FOLDS, rep))
    panel, failed = panel_from_folds(candidates, data, folds, loss)
    if panel is None:
        raise ConfigError("fewer than two candidates survived training")
    true_id = subset_mask_id(CASE1_TRUE_SUBSET, d)
    sel_cfg = _selection_config(config, rep, TAG_C1_SELECT, config.V)

    rows = []
    for method in config.methods:
        if method == "rsr":
            cs = rsr_from_panel(panel, sel_cfg)
        elif method == "pcv":
            cs = pcv_select(panel, sel_cfg)
        elif method == "cvc_style":
            cs = cvc_style_select(panel, sel_cfg)
        else:
            cs = cv_select(panel.losses.mean(axis=0), panel.model_ids,
                           alpha=config.alpha)
        row = {"rep": rep, "method": method,
               "set_size": cs.set_size,
               "correct": bool(true_id in cs.selected_ids),
               "n_failed": len(failed)}
        if method == "rsr":
            row["bootstrap_columns"] = cs.bootstrap_columns
        rows.append(row)
    return rows


def _aggregate(rows, methods, spec):
    """spec: metric name -> ('mean'|'rate', row key)."""
    metrics = {}
    for method in methods:
        sub = [r for r in rows if r["method"] == method]
        out = {}
        for name, (kind, key) in spec.items():
            vals = np.array([float(r[key]) for r in sub if key in r])
            if vals.size == 0:
                continue
            mean = float(vals.mean())
            if kind == "rate":
                se = math.sqrt(max(mean * (1.0 - mean), 0.0) / vals.size)
            else:
                se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
            out[name] = {"mean": mean, "mc_se": se}
        metrics[method] = out
    return metrics


def _run_replicates(worker, config, reps: int, threads: int) -> list[dict]:
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads <= 1:
        results = [worker(config, rep) for rep in range(reps)]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, [config] * reps, range(reps)))
    rows = []
    for per_rep in results:       # already ordered by replicate index
        rows.extend(per_rep)
    return rows


def run_case1(config: Case1Config) -> AggregateReport:
    rows = _run_replicates(case1_replicate, config, config.reps, config.threads)
    n_pairs = 16 * 15
    for row in rows:
        if row["method"] == "rsr":
            row["screening_reduced"] = bool(row["bootstrap_columns"] < n_pairs)
    spec = {
        "set_size": ("mean", "set_size"),
        "correct_rate": ("rate", "correct"),
        "bootstrap_columns": ("mean", "bootstrap_columns"),
        "screening_reduced_rate": ("rate", "screening_reduced"),
    }
    metrics = _aggregate(rows, config.methods, spec)
    return AggregateReport(case="case1", config=_config_echo(config),
                           reps=config.reps, metrics=metrics, replicates=rows)


def _lambda_id(idx: int) -> str:
    return f"lam_{idx:02d}"


def case2_replicate(config: Case2Config, rep: int) -> list[dict]:
    """One Case 2 draw: path fits per fold, selection, corrected refit."""
    rng = keyed_stream(config.seed, TAG_C2_DATA, rep)
    n, p = config.n, config.p
    x = ar1_design(n, p, config.rho, rng)
    beta = np.zeros(p)
    beta[[0, 1, 5, 6]] = 1.0
    eps = sample_student_t(config.noise_df, rng, size=n)
    y = x @ beta + eps
    data = Dataset(x=x, y=y)
    true_support = frozenset(np.nonzero(beta)[0].tolist())

    scale = mad_scale(y)
    if scale <= 0:
        scale = max(float(np.std(y)), 1e-12)
    tau = adaptive_tau(n, p, scale)
    path = lambda_path(data, k_path=config.k_path, tau=tau)
    k = len(path)

    folds = make_folds(n, config.folds, subseed(config.seed, TAG_C2_FOLDS, rep))
    huber_losses = np.empty((n, k))
    squared_losses = np.empty((n, k))
    loss = LossFn("huber", tau=tau)
    for fold in folds:
        train_idx = np.setdiff1d(np.arange(n), fold)
        train = Dataset(x=x[train_idx], y=y[train_idx])
        lip = huber_lasso_lipschitz(train)
        warm = None
        for j, lam in enumerate(path.values):
            warm = fit_huber_lasso(train, lam=float(lam), tau=tau, init=warm, lip=lip)
            resid = y[fold] - warm.predict(x[fold])
            huber_losses[fold, j] = loss_eval(loss, resid)
            squared_losses[fold, j] = resid * resid

    panel = LossPanel(losses=huber_losses,
                      model_ids=tuple(_lambda_id(j) for j in range(k)))
    sel_cfg = _selection_config(config, rep, TAG_C2_SELECT, config.folds)
    full_lip = huber_lasso_lipschitz(data)

    rows = []
    refit_cache: dict[int, FittedLinear] = {}
    for method in config.methods:
        if method == "rsr":
            cs = rsr_from_panel(panel, sel_cfg)
        elif method == "pcv":
            cs = pcv_select(panel, sel_cfg)
        elif method == "cvc_style":
            cs = cvc_style_select(panel, sel_cfg)
        else:
            cs = cv_select(panel.losses.mean(axis=0), panel.model_ids,
                           alpha=config.alpha)
        if method == "cv":
            chosen = cs.selected[0]
        elif cs.selected:
            chosen = min(cs.selected)     # path is decreasing: sparsest model
        else:
            chosen = int(np.argmax(cs.p_values))
        if chosen not in refit_cache:
            lam_corr = lambda_fold_correction(float(path.values[chosen]),
                                              config.folds)
            refit_cache[chosen] = fit_huber_lasso(data, lam=lam_corr, tau=tau,
                                                  lip=full_lip)
        refit = refit_cache[chosen]
        support = frozenset(np.nonzero(refit.coef)[0].tolist())
        rows.append({
            "rep": rep, "method": method,
            "set_size": cs.set_size,
            "chosen_index": int(chosen),
            "chosen_lambda": float(path.values[chosen]),
            "nonzeros": int(len(support)),
            "support_covered": bool(true_support <= support),
            "oracle": bool(true_support == support),
            "cv_error": float(squared_losses[:, chosen].mean()),
        })
    return rows


def run_case2(config: Case2Config) -> AggregateReport:
    rows = _run_replicates(case2_replicate, config, config.reps, config.threads)
    spec = {
        "set_size": ("mean", "set_size"),
        "nonzeros": ("mean", "nonzeros"),
        "support_rate": ("rate", "support_covered"),
        "oracle_rate": ("rate", "oracle"),
        "cv_error": ("mean", "cv_error"),
    }
    metrics = _aggregate(rows, config.methods, spec)
    return AggregateReport(case="case2", config=_config_echo(config),
                           reps=config.reps, metrics=metrics, replicates=rows)
