"""Confidence-set model selection from loss panels.

Four selection routes share one panel of per-observation losses:

* ``rsr_from_panel`` tests, for every reference model m, whether some
  competitor beats it in the generalized rank-sum sense; models whose
  bootstrap p-value reaches alpha stay in the confidence set. Optional
  screening drops competitors that m already beats overwhelmingly before
  the bootstrap runs.
* ``pcv_select`` does the same with paired per-observation win indicators.
* ``cvc_style_select`` is the mean-based contrast: studentized loss
  differences with the same multiplier machinery (intentionally
  non-robust).
* ``cv_select`` is plain argmin of average loss (singleton set).

``rsr_split`` / ``rsr_vfold`` wrap training: they split the data, fit every
candidate, assemble the out-of-sample loss panel, and defer to
``rsr_from_panel``. A candidate whose learner fails is flagged and assigned
p-value 0 instead of aborting the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import BootstrapConfig, normal_quantile, run_min_bootstrap
from .errors import ContractError, LearnerError
from .models import Dataset, LossFn, loss_eval
from .ranksum import LossPanel, pair_stats
from .rng import TieStreams, keyed_stream, subseed

# Key-path tags; every random stream hangs off (seed, tag, ...).
TAG_SPLIT = 101
TAG_RSR_TIES = 102
TAG_RSR_BOOT = 103
TAG_PCV_TIES = 104
TAG_PCV_BOOT = 105
TAG_CVC_BOOT = 106

# Columns whose loss differences have essentially zero spread carry no
# evidence; below this relative scale they are handled by sign instead.
_DEGENERATE_SD = 1e-12


@dataclass(frozen=True)
class SelectionConfig:
    """Settings shared by the confidence-set selection methods."""

    seed: int
    alpha: float = 0.1
    alpha_screen: float = 0.1
    s: float = 0.01
    B: int = 500
    V: int = 5
    projection: str = "symmetrized"
    screening_enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ContractError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 < self.alpha_screen < 1.0:
            raise ContractError(f"alpha_screen must be in (0, 1), got {self.alpha_screen}")
        if self.s <= 0:
            raise ContractError("screening exponent s must be positive")
        if self.V != 0 and self.V < 2:
            raise ContractError("V must be 0 (sample splitting) or >= 2")
        if self.projection not in ("row_only", "symmetrized"):
            raise ContractError(f"unknown projection mode: {self.projection!r}")


@dataclass(frozen=True)
class ConfidenceSet:
    """Selected near-optimal models with per-model p-values."""

    method: str
    alpha: float
    model_ids: tuple[str, ...]
    p_values: np.ndarray
    selected: tuple[int, ...]
    screened_out: dict[int, tuple[int, ...]] = field(default_factory=dict)
    failed: tuple[int, ...] = ()
    diagnostics: dict[int, dict] = field(default_factory=dict)

    @property
    def selected_ids(self) -> tuple[str, ...]:
        return tuple(self.model_ids[i] for i in self.selected)

    @property
    def set_size(self) -> int:
        return len(self.selected)

    @property
    def bootstrap_columns(self) -> int:
        """Total competitor columns that reached the bootstrap stage."""
        return int(sum(d.get("n_cols", 0) for d in self.diagnostics.values()))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.alpha,
            "model_ids": list(self.model_ids),
            "p_values": [float(p) for p in self.p_values],
            "selected": list(self.selected),
            "selected_ids": list(self.selected_ids),
            "screened_out": {str(m): list(js) for m, js in self.screened_out.items()},
            "failed": list(self.failed),
            "diagnostics": {str(m): d for m, d in self.diagnostics.items()},
        }


def screen(mu, se, n_models: int, alpha_screen: float, s: float) -> np.ndarray:
    """Indices of competitors kept for the bootstrap comparison.

    A competitor j is dropped when the reference already beats it beyond
    the Bonferroni-style threshold: mu[j]/se[j] > 2 * Phi^{-1}(1 -
    alpha_screen / (M-1)^{1+s}). Dropped competitors cannot change the
    min statistic (they sit far on the winning side), so removing them
    only shrinks the bootstrap dimension.
    """
    mu = np.asarray(mu, dtype=float)
    se = np.asarray(se, dtype=float)
    if mu.shape != se.shape or mu.ndim != 1:
        raise ContractError("mu and se must be equal-length vectors")
    if np.any(se <= 0):
        raise ContractError("se entries must be positive")
    if n_models < 2:
        raise ContractError("need at least two models")
    c = normal_quantile(1.0 - alpha_screen / (n_models - 1) ** (1.0 + s))
    return np.nonzero(mu / se <= 2.0 * c)[0]


def _assemble(method, panel_ids, alpha, p_vals, screened_out, failed, diagnostics):
    selected = tuple(int(i) for i in np.nonzero(p_vals >= alpha)[0])
    return ConfidenceSet(method=method, alpha=alpha, model_ids=tuple(panel_ids),
                         p_values=p_vals, selected=selected,
                         screened_out=screened_out, failed=tuple(failed),
                         diagnostics=diagnostics)


def rsr_from_panel(panel: LossPanel, config: SelectionConfig,
                   method: str = "rsr_vfold") -> ConfidenceSet:
    """Rank-sum confidence set computed directly from a loss panel."""
    n_models = panel.n_models
    ties = TieStreams(config.seed, TAG_RSR_TIES)
    p_vals = np.zeros(n_models)
    screened_out: dict[int, tuple[int, ...]] = {}
    diagnostics: dict[int, dict] = {}
    for m in range(n_models):
        stats = pair_stats(panel, m, projection=config.projection, ties=ties)
        if config.screening_enabled:
            keep = screen(stats.mu, stats.se, n_models, config.alpha_screen, config.s)
        else:
            keep = np.arange(stats.mu.size)
        dropped = np.setdiff1d(np.arange(stats.mu.size), keep)
        screened_out[m] = tuple(int(stats.competitors[j]) for j in dropped)
        if keep.size == 0:
            # Reference beats every competitor beyond the screening bar;
            # nothing contradicts its optimality.
            p_vals[m] = 1.0
            diagnostics[m] = {"t_obs": math.inf, "n_cols": 0}
            continue
        boot = BootstrapConfig(B=config.B,
                               seed=subseed(config.seed, TAG_RSR_BOOT, m),
                               projection=config.projection)
        result = run_min_bootstrap(stats.mu[keep], stats.psi[:, keep], boot)
        p_vals[m] = result.p_value
        diagnostics[m] = {"t_obs": result.t_obs, "n_cols": int(keep.size)}
    return _assemble(method, panel.model_ids, config.alpha, p_vals,
                     screened_out, [], diagnostics)


def pcv_select(panel: LossPanel, config: SelectionConfig) -> ConfidenceSet:
    """Paired-comparison confidence set: per-observation win indicators."""
    n, n_models = panel.n, panel.n_models
    ties = TieStreams(config.seed, TAG_PCV_TIES)
    p_vals = np.zeros(n_models)
    diagnostics: dict[int, dict] = {}
    for m in range(n_models):
        competitors = [j for j in range(n_models) if j != m]
        ind = np.empty((n, len(competitors)))
        a = panel.column(m)
        for idx, j in enumerate(competitors):
            b = panel.column(j)
            wins = (a < b).astype(float)
            tied = np.nonzero(a == b)[0]
            if tied.size:
                coins = ties.pair(m, j).random(tied.size) < 0.5
                wins[tied] = coins
            ind[:, idx] = wins
        mu = ind.mean(axis=0) - 0.5
        psi = ind - ind.mean(axis=0)
        boot = BootstrapConfig(B=config.B,
                               seed=subseed(config.seed, TAG_PCV_BOOT, m),
                               projection=config.projection)
        result = run_min_bootstrap(mu, psi, boot)
        p_vals[m] = result.p_value
        diagnostics[m] = {"t_obs": result.t_obs, "n_cols": len(competitors)}
    return _assemble("pcv", panel.model_ids, config.alpha, p_vals, {}, [],
                     diagnostics)


def cvc_style_select(panel: LossPanel, config: SelectionConfig) -> ConfidenceSet:
    """Mean-difference confidence set (studentized, multiplier bootstrap).

    For reference m and competitor j the evidence is the studentized mean
    of loss differences, oriented so positive values favor m (as in the
    rank-sum route). Columns with (numerically) constant differences are
    decided by sign: a constant win for the competitor rejects m outright,
    a constant win or exact tie for m carries no evidence against it.
    """
    n, n_models = panel.n, panel.n_models
    p_vals = np.zeros(n_models)
    diagnostics: dict[int, dict] = {}
    for m in range(n_models):
        competitors = [j for j in range(n_models) if j != m]
        diff = panel.losses[:, competitors] - panel.column(m)[:, None]  # >0 favors m
        means = diff.mean(axis=0)
        sds = diff.std(axis=0)
        scale = max(1.0, float(np.abs(panel.losses).max()))
        live = sds > _DEGENERATE_SD * scale
        beaten = (~live) & (means < 0)
        if beaten.any():
            p_vals[m] = 0.0
            diagnostics[m] = {"t_obs": -math.inf, "n_cols": 0}
            continue
        if not live.any():
            p_vals[m] = 1.0
            diagnostics[m] = {"t_obs": math.inf, "n_cols": 0}
            continue
        z_mu = means[live] / sds[live]
        psi = (diff[:, live] - means[live]) / sds[live]
        psi -= psi.mean(axis=0)   # keep centering exact after the 1/sd scaling
        boot = BootstrapConfig(B=config.B,
                               seed=subseed(config.seed, TAG_CVC_BOOT, m),
                               projection=config.projection)
        result = run_min_bootstrap(z_mu, psi, boot)
        p_vals[m] = result.p_value
        diagnostics[m] = {"t_obs": result.t_obs, "n_cols": int(live.sum())}
    return _assemble("cvc_style", panel.model_ids, config.alpha, p_vals, {}, [],
                     diagnostics)


def cv_select(panel_risk, model_ids=None, alpha: float = 0.1) -> ConfidenceSet:
    """Classical cross-validation: the single model with the smallest risk."""
    risks = np.asarray(panel_risk, dtype=float)
    if risks.ndim != 1 or risks.size < 1:
        raise ContractError("panel_risk must be a nonempty vector")
    if not np.all(np.isfinite(risks)):
        raise ContractError("risks must be finite")
    best = int(np.argmin(risks))   # argmin takes the first index on ties
    if model_ids is None:
        model_ids = tuple(str(i) for i in range(risks.size))
    p_vals = np.zeros(risks.size)
    p_vals[best] = 1.0
    return ConfidenceSet(method="cv", alpha=alpha, model_ids=tuple(model_ids),
                         p_values=p_vals, selected=(best,),
                         diagnostics={best: {"risk": float(risks[best])}})


@dataclass(frozen=True)
class Candidate:
    """A named training procedure: fit(x, y) -> fitted predictor."""

    model_id: str
    fit: callable


def make_split(n_total: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded half/half split; an odd leftover point joins the training half."""
    if n_total < 2:
        raise ContractError("need at least two observations to split")
    perm = keyed_stream(seed, TAG_SPLIT).permutation(n_total)
    n_eval = n_total // 2
    return np.sort(perm[: n_total - n_eval]), np.sort(perm[n_total - n_eval:])


def make_folds(n_total: int, v_folds: int, seed: int) -> list[np.ndarray]:
    """Seeded partition into V near-equal folds; extras go to earlier folds."""
    if v_folds < 2:
        raise ContractError("need at least two folds")
    if n_total < 2 * v_folds:
        raise ContractError(f"need n >= 2V, got n={n_total}, V={v_folds}")
    perm = keyed_stream(seed, TAG_SPLIT).permutation(n_total)
    return [np.sort(f) for f in np.array_split(perm, v_folds)]


def _fit_all(candidates, x, y):
    fits = {}
    failed = []
    for c in candidates:
        try:
            fits[c.model_id] = c.fit(x, y)
        except (LearnerError, np.linalg.LinAlgError, FloatingPointError):
            failed.append(c.model_id)
    return fits, failed


def panel_from_split(candidates, data: Dataset, train_idx, eval_idx,
                     loss: LossFn):
    """Train on one index set, evaluate losses on the other.

    Returns (panel over successfully fitted candidates, failed ids).
    A candidate also counts as failed if its predictions produce
    non-finite losses.
    """
    fits, failed = _fit_all(candidates, data.x[train_idx], data.y[train_idx])
    cols = {}
    for c in candidates:
        if c.model_id not in fits:
            continue
        pred = fits[c.model_id].predict(data.x[eval_idx])
        resid = data.y[eval_idx] - pred
        if not np.all(np.isfinite(resid)):
            failed.append(c.model_id)
            continue
        cols[c.model_id] = loss_eval(loss, resid)
    return _panel_from_columns(candidates, cols), failed


def panel_from_folds(candidates, data: Dataset, folds, loss: LossFn):
    """Out-of-fold loss panel over all observations.

    Each candidate is trained once per fold on the complement; observation
    k is scored by the model that never saw it. A candidate failing on any
    fold is dropped entirely.
    """
    n = data.n
    all_idx = np.arange(n)
    preds = {c.model_id: np.empty(n) for c in candidates}
    failed = set()
    for fold in folds:
        train_idx = np.setdiff1d(all_idx, fold)
        fits, bad = _fit_all(candidates, data.x[train_idx], data.y[train_idx])
        failed.update(bad)
        for model_id, fit in fits.items():
            preds[model_id][fold] = fit.predict(data.x[fold])
    cols = {}
    for c in candidates:
        if c.model_id in failed:
            continue
        resid = data.y - preds[c.model_id]
        if not np.all(np.isfinite(resid)):
            failed.add(c.model_id)
            continue
        cols[c.model_id] = loss_eval(loss, resid)
    return _panel_from_columns(candidates, cols), sorted(failed)


def _panel_from_columns(candidates, cols):
    ids = [c.model_id for c in candidates if c.model_id in cols]
    if len(ids) < 2:
        return None
    losses = np.column_stack([cols[i] for i in ids])
    return LossPanel(losses=losses, model_ids=tuple(ids))


def _selection_from_subpanel(candidates, panel, failed, config, method):
    """Map a sub-panel's confidence set back onto the full candidate list."""
    all_ids = tuple(c.model_id for c in candidates)
    p_vals = np.zeros(len(all_ids))
    failed_idx = tuple(i for i, mid in enumerate(all_ids) if mid in failed)
    if panel is None:
        # Fewer than two candidates survived training; the lone survivor
        # (if any) has nothing to be compared against.
        screened_out: dict[int, tuple[int, ...]] = {}
        diagnostics: dict[int, dict] = {}
        for i, mid in enumerate(all_ids):
            if mid not in failed:
                p_vals[i] = 1.0
                diagnostics[i] = {"t_obs": math.inf, "n_cols": 0}
        return _assemble(method, all_ids, config.alpha, p_vals, screened_out,
                         failed_idx, diagnostics)
    sub = rsr_from_panel(panel, config, method=method)
    pos = {mid: i for i, mid in enumerate(all_ids)}
    remap = [pos[mid] for mid in panel.model_ids]
    for sub_i, full_i in enumerate(remap):
        p_vals[full_i] = sub.p_values[sub_i]
    screened_out = {remap[m]: tuple(remap[j] for j in js)
                    for m, js in sub.screened_out.items()}
    diagnostics = {remap[m]: d for m, d in sub.diagnostics.items()}
    return _assemble(method, all_ids, config.alpha, p_vals, screened_out,
                     failed_idx, diagnostics)


def rsr_split(candidates, data: Dataset, config: SelectionConfig,
              loss: LossFn) -> ConfidenceSet:
    """Sample-splitting rank-sum selection: train on half, test on half."""
    if data.n < 8:
        raise ContractError("sample splitting needs at least 8 observations")
    if len(candidates) < 2:
        raise ContractError("need at least two candidates")
    train_idx, eval_idx = make_split(data.n, config.seed)
    panel, failed = panel_from_split(candidates, data, train_idx, eval_idx, loss)
    return _selection_from_subpanel(candidates, panel, set(failed), config,
                                    "rsr_split")


def rsr_vfold(candidates, data: Dataset, config: SelectionConfig,
              loss: LossFn) -> ConfidenceSet:
    """V-fold rank-sum selection over out-of-fold losses on all points."""
    if config.V < 2:
        raise ContractError("rsr_vfold needs V >= 2; use rsr_split for V = 0")
    if len(candidates) < 2:
        raise ContractError("need at least two candidates")
    folds = make_folds(data.n, config.V, config.seed)
    panel, failed = panel_from_folds(candidates, data, folds, loss)
    return _selection_from_subpanel(candidates, panel, set(failed), config,
                                    "rsr_vfold")
