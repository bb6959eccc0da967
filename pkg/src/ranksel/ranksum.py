"""Generalized rank-sum statistics over panels of prediction losses.

The central object is the loss panel: an n x M matrix whose column j holds
the per-observation prediction loss of candidate model j on a common
evaluation set. For a reference model m and a competitor j the statistic

    u = n^-2 * sum_{k,l} 1{ loss_m[k] < loss_j[l] }

compares every ordered pair of evaluation points, including k = l. Exact
ties are resolved by an independent fair coin per tied pair. Centered
values mu = u - 1/2, per-observation projection scores, and standard
errors feed the Gaussian multiplier bootstrap in :mod:`ranksel.bootstrap`.

All pair statistics run in O(n log n) per pair through sorted copies and
binary search; a brute-force O(n^2) evaluation with the same tie stream
produces bit-identical results (the tests rely on this).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError
from .rng import TieStreams, keyed_stream

# Variance floor for (1/6 - 2*cov) before the /n scaling; guards the
# degenerate co-monotone case where the projection variance collapses.
VARIANCE_FLOOR = 1e-6

# Tolerance on projection-score column means, relative to n.
PSI_CENTERING_TOL = 1e-12


def _as_loss_vector(values, name: str = "losses", min_n: int = 2) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=float)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional")
    if arr.size < min_n:
        raise ContractError(f"{name} needs at least {min_n} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def _default_ties() -> np.random.Generator:
    # Fixed fallback stream so calls without an explicit stream stay
    # reproducible; callers that care pass their own keyed Generator.
    return keyed_stream(0)


@dataclass(frozen=True)
class LossPanel:
    """Per-observation losses for M candidate models on n evaluation points."""

    losses: np.ndarray          # (n, M)
    model_ids: tuple[str, ...]

    def __post_init__(self):
        arr = np.asarray(self.losses, dtype=float)
        if arr.ndim != 2:
            raise ContractError("losses must be an n x M matrix")
        n, m = arr.shape
        if n < 2 or m < 2:
            raise ContractError(f"panel needs n >= 2 and M >= 2, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("loss panel contains non-finite values")
        ids = tuple(str(i) for i in self.model_ids)
        if len(ids) != m:
            raise ContractError("model_ids length must match the number of columns")
        if len(set(ids)) != m:
            raise ContractError("model_ids must be unique")
        object.__setattr__(self, "losses", arr)
        object.__setattr__(self, "model_ids", ids)

    @property
    def n(self) -> int:
        return self.losses.shape[0]

    @property
    def n_models(self) -> int:
        return self.losses.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.losses[:, j]


@dataclass(frozen=True)
class EmpiricalCdf:
    """Right-closed empirical CDF: F(x) = #{v <= x} / n."""

    sorted_values: np.ndarray

    def __post_init__(self):
        arr = np.sort(np.asarray(self.sorted_values, dtype=float))
        if arr.size < 1:
            raise ContractError("empirical CDF needs at least one value")
        if not np.all(np.isfinite(arr)):
            raise DataError("empirical CDF values must be finite")
        object.__setattr__(self, "sorted_values", arr)

    def __call__(self, x) -> np.ndarray:
        pos = np.searchsorted(self.sorted_values, x, side="right")
        return pos / self.sorted_values.size


@dataclass(frozen=True)
class PairStats:
    """Rank-sum comparisons of one reference model against its competitors.

    Arrays are aligned with ``competitors`` (model indices j != reference).
    ``psi`` holds mean-zero per-observation projection scores, one column
    per competitor, used as bootstrap scores.
    """

    reference: int
    competitors: np.ndarray     # (p,) int
    u: np.ndarray               # (p,) in [0, 1]
    mu: np.ndarray              # (p,) = u - 0.5
    se: np.ndarray              # (p,) > 0
    psi: np.ndarray             # (n, p)


def _pair_win_counts(a: np.ndarray, b: np.ndarray, ties: np.random.Generator,
                     want_cols: bool):
    """Row and column win counts of 1{a_k < b_l} with randomized ties.

    row[k] = #{l : a_k beats b_l}; col[l] = #{k : a_k beats b_l}. Tie coins
    are consumed in lexicographic (k, l) order, one uniform per tied pair,
    matching a brute-force double loop bit for bit.
    """
    n = a.size
    order = np.argsort(b, kind="stable")    # stable => equal b's stay in index order
    b_sorted = b[order]
    hi = np.searchsorted(b_sorted, a, side="right")
    lo = np.searchsorted(b_sorted, a, side="left")
    row = (n - hi).astype(float)
    col = None
    if want_cols:
        a_sorted = np.sort(a)
        col = np.searchsorted(a_sorted, b, side="left").astype(float)
    tied_rows = np.nonzero(hi > lo)[0]
    for k in tied_rows:
        tied_idx = order[lo[k]:hi[k]]       # ascending original l
        wins = ties.random(tied_idx.size) < 0.5
        row[k] += wins.sum()
        if want_cols:
            np.add.at(col, tied_idx[wins], 1.0)
    return row, col


def ranksum_u(a, b, ties: np.random.Generator | None = None) -> float:
    """Fraction of ordered pairs (k, l) with a[k] < b[l], ties randomized.

    Counts all n^2 ordered pairs including k = l. With no exact ties the
    result is bit-identical to the O(n^2) double loop; exact ties a[k] ==
    b[l] are broken by independent fair coins drawn from ``ties`` in
    lexicographic (k, l) order.
    """
    a = _as_loss_vector(a, "a")
    b = _as_loss_vector(b, "b")
    if a.size != b.size:
        raise ContractError(f"length mismatch: {a.size} vs {b.size}")
    if ties is None:
        ties = _default_ties()
    row, _ = _pair_win_counts(a, b, ties, want_cols=False)
    n = a.size
    return float(row.sum() / (n * n))


def xi_element(a_k: float, b_l: float, ties: np.random.Generator | None = None) -> float:
    """Single centered comparison 1{a_k < b_l} - 0.5, ties randomized."""
    a_k = float(a_k)
    b_l = float(b_l)
    if not (np.isfinite(a_k) and np.isfinite(b_l)):
        raise DataError("xi_element requires finite inputs")
    if a_k < b_l:
        return 0.5
    if a_k > b_l:
        return -0.5
    if ties is None:
        ties = _default_ties()
    return 0.5 if ties.random() < 0.5 else -0.5


def se_ranksum(a, b) -> float:
    """Standard error of the centered rank-sum mean for dependent samples.

    Estimates sqrt(max(floor, 1/6 - 2*c) / n) where c is the 1/n-normalized
    sample covariance between F_a(b_i) and F_b(a_i), the empirical CDF of
    each sample evaluated at the other's paired values. The floor keeps
    screening z-scores finite when the two samples are co-monotone.
    """
    a = _as_loss_vector(a, "a", min_n=4)
    b = _as_loss_vector(b, "b", min_n=4)
    if a.size != b.size:
        raise ContractError(f"length mismatch: {a.size} vs {b.size}")
    n = a.size
    f_a = EmpiricalCdf(a)
    f_b = EmpiricalCdf(b)
    x = f_a(b)
    y = f_b(a)
    cov = float(np.mean(x * y) - np.mean(x) * np.mean(y))
    variance = max(VARIANCE_FLOOR, 1.0 / 6.0 - 2.0 * cov)
    return float(np.sqrt(variance / n))


def pair_stats(panel: LossPanel, m: int, projection: str = "symmetrized",
               ties: TieStreams | None = None,
               competitors=None) -> PairStats:
    """Rank-sum statistics of reference model m against every competitor.

    ``projection`` selects the bootstrap score construction:

    * ``"row_only"``: psi_k = (1/n) sum_l xi(k, l) - mu, the one-sided
      row-mean score.
    * ``"symmetrized"`` (default): psi_k adds the column-mean part,
      (1/n) sum_l xi(k, l) + (1/n) sum_i xi(i, k) - 2 mu, the full
      two-part projection whose empirical variance matches the
      dependent-sample variance formula behind :func:`se_ranksum`.

    Tie coins come from ``ties.pair(m, j)`` so each pair's stream is
    independent of evaluation order. ``competitors`` restricts the columns
    compared (default: all j != m).
    """
    if projection not in ("row_only", "symmetrized"):
        raise ContractError(f"unknown projection mode: {projection!r}")
    n = panel.n
    if n < 4:
        raise ContractError("pair_stats needs n >= 4 evaluation points")
    if not 0 <= m < panel.n_models:
        raise ContractError(f"reference index {m} out of range")
    if ties is None:
        ties = TieStreams(0)
    if competitors is None:
        competitors = [j for j in range(panel.n_models) if j != m]
    else:
        competitors = [int(j) for j in competitors]
        if any(j == m or not 0 <= j < panel.n_models for j in competitors):
            raise ContractError("competitors must be valid indices distinct from m")
    p = len(competitors)
    if p < 1:
        raise ContractError("need at least one competitor")

    a = panel.column(m)
    symmetrized = projection == "symmetrized"
    u = np.empty(p)
    se = np.empty(p)
    psi = np.empty((n, p))
    for idx, j in enumerate(competitors):
        b = panel.column(j)
        row, col = _pair_win_counts(a, b, ties.pair(m, j), want_cols=symmetrized)
        u_j = row.sum() / (n * n)
        mu_j = u_j - 0.5
        if symmetrized:
            psi[:, idx] = (row + col) / n - 1.0 - 2.0 * mu_j
        else:
            psi[:, idx] = row / n - 0.5 - mu_j
        u[idx] = u_j
        se[idx] = se_ranksum(a, b)
    return PairStats(reference=m, competitors=np.array(competitors, dtype=int),
                     u=u, mu=u - 0.5, se=se, psi=psi)


def conformal_pvalue_single(losses, holdout_loss: float,
                            ties: np.random.Generator | None = None) -> float:
    """One-point conformal rank: share of reference losses below a holdout loss."""
    losses = _as_loss_vector(losses, "losses", min_n=1)
    holdout_loss = float(holdout_loss)
    if not np.isfinite(holdout_loss):
        raise DataError("holdout loss must be finite")
    below = int(np.sum(losses < holdout_loss))
    tied = int(np.sum(losses == holdout_loss))
    if tied:
        if ties is None:
            ties = _default_ties()
        below += int(np.sum(ties.random(tied) < 0.5))
    return below / losses.size


def projection_estimates(kernel_values) -> tuple[np.ndarray, np.ndarray]:
    """Centered row/column mean projections of a kernel evaluation matrix.

    For K[k, l] = h(U_k, V_l): g1[k] = row mean - grand mean and
    g2[l] = column mean - grand mean; both sum to zero by construction.
    """
    k_mat = np.asarray(kernel_values, dtype=float)
    if k_mat.ndim != 2 or k_mat.shape[0] != k_mat.shape[1]:
        raise ContractError("kernel_values must be a square matrix")
    if not np.all(np.isfinite(k_mat)):
        raise DataError("kernel_values contains non-finite entries")
    grand = k_mat.mean()
    g1 = k_mat.mean(axis=1) - grand
    g2 = k_mat.mean(axis=0) - grand
    return g1, g2


def gamma_hat(g1, g2) -> np.ndarray:
    """Second-moment matrix (1/n) sum_i (g1_i + g2_i)(g1_i + g2_i)^T."""
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if g1.ndim == 1:
        g1 = g1[:, None]
    if g2.ndim == 1:
        g2 = g2[:, None]
    if g1.shape != g2.shape:
        raise ContractError("g1 and g2 must have matching shapes")
    s = g1 + g2
    n = s.shape[0]
    return s.T @ s / n
