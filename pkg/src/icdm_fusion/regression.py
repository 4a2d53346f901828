"""Traffic estimation: stepwise regression of MMRs counts on cluster centers.

The response is the MMRs vector restricted to common neighbors and the
explanatory variables are the matching rows of the cluster centers, plus
an all-ones intercept column. Coefficient ``beta[k]`` estimates how many
MMRs came from region ``k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import betainc

from .clustering import ClusterModel
from .source_data import CellIndexMap, MmrsVector

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
EXACT_FIT_TOL = 1e-12


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RegressionDesign:
    response: np.ndarray  # R', length N*Q
    design: np.ndarray    # [1 | C'], (N*Q, K+1)
    N: int

    @property
    def K(self) -> int:
        return self.design.shape[1] - 1


@dataclass(frozen=True)
class TrafficEstimate:
    beta: tuple[float, ...]
    entered: tuple[int, ...]
    r_squared: float
    model_p_value: float
    # order in which clusters entered, removals included
    steps: tuple[tuple[str, int, float], ...] = field(default=(), repr=False)
    no_entry: bool = False

    @property
    def K(self) -> int:
        return len(self.beta) - 1

    def clamped(self) -> np.ndarray:
        """Coefficients as nonnegative counts (beta_0 included)."""
        return np.maximum(np.asarray(self.beta, dtype=float), 0.0)

    def to_dict(self) -> dict:
        return {
            "beta": list(self.beta),
            "entered": list(self.entered),
            "r_squared": self.r_squared,
            "model_p_value": self.model_p_value,
            "steps": [list(s) for s in self.steps],
            "no_entry": self.no_entry,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrafficEstimate":
        return cls(
            beta=tuple(float(b) for b in d["beta"]),
            entered=tuple(int(k) for k in d["entered"]),
            r_squared=float(d["r_squared"]),
            model_p_value=float(d["model_p_value"]),
            steps=tuple((str(a), int(b), float(c)) for a, b, c in d.get("steps", ())),
            no_entry=bool(d.get("no_entry", False)),
        )


def build_design(cluster: ClusterModel, mmrs: MmrsVector, index_map: CellIndexMap) -> RegressionDesign:
    """Extract the common-neighbor rows of the MMRs vector and the centers.

    Both inputs must already follow ``index_map`` (see ``align_common_neighbors``).
    """
    N = index_map.n_common
    if N == 0:
        raise ValueError("no common neighboring cells between MMRs and DT data")
    if tuple(mmrs.neighbor_ids[:N]) != tuple(index_map.common_ids):
        raise ValueError("MMRs vector is not aligned with the index map")
    if cluster.neighbor_ids and tuple(cluster.neighbor_ids) != tuple(index_map.dt_ids):
        raise ValueError("cluster centers are not aligned with the index map")
    Q = mmrs.Q
    rows = N * Q
    response = mmrs.counts[:rows].astype(float)
    design = np.column_stack([np.ones(rows), cluster.centers[:rows]])
    return RegressionDesign(response, design, N)


def f_pvalue(f_stat: float, df1: int, df2: int) -> float:
    """Upper-tail probability of F(df1, df2) at ``f_stat``."""
    if f_stat <= 0:
        return 1.0
    if np.isinf(f_stat):
        return 0.0
    x = df2 / (df2 + df1 * f_stat)
    return float(betainc(df2 / 2.0, df1 / 2.0, x))


@dataclass
class _Fit:
    coef: np.ndarray
    resid: np.ndarray
    ssr: float


def ols(X: np.ndarray, y: np.ndarray) -> _Fit:
    """Least squares through a column-pivoted QR; raises on numerical rank loss."""
    Qm, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() <= RANK_TOL * diag.max():
        raise RankDeficientError(
            f"design is rank deficient (pivot ratio {diag.min() / diag.max():.3g})"
        )
    coef = np.empty(X.shape[1])
    coef[piv] = scipy.linalg.solve_triangular(R, Qm.T @ y)
    resid = y - X @ coef
    return _Fit(coef, resid, float(resid @ resid))


def _resid_on(X: np.ndarray, v: np.ndarray) -> np.ndarray:
    Qm, _ = np.linalg.qr(X)
    return v - Qm @ (Qm.T @ v)


def stepwise_fit(design: RegressionDesign, alpha_enter: float = 0.05,
                 alpha_remove: float = 0.10) -> TrafficEstimate:
    """Forward selection by partial correlation with partial-F entry and removal tests.

    The intercept is always in the model. After each entry, in-model
    variables are re-tested and the weakest one is dropped while its
    p-value is at least ``alpha_remove``.
    """
    if alpha_enter > alpha_remove:
        raise ValueError("alpha_enter must not exceed alpha_remove")
    y = design.response
    X = design.design
    n, K = X.shape[0], design.K
    if n < 2:
        raise ValueError("regression needs at least two observations")

    def cols(model):
        return X[:, [0] + list(model)]

    in_model: list[int] = []
    steps: list[tuple[str, int, float]] = []
    seen = {()}
    for _ in range(4 * K + 4):
        base = cols(in_model)
        base_fit = ols(base, y)
        df = n - len(in_model) - 2
        if df < 1:
            break
        e_y = base_fit.resid
        if np.linalg.norm(e_y) <= EXACT_FIT_TOL * np.linalg.norm(y):
            break  # nothing left to explain
        best_k, best_r = None, 0.0
        for k in range(1, K + 1):
            if k in in_model:
                continue
            e_c = _resid_on(base, X[:, k])
            nc = np.linalg.norm(e_c)
            if nc <= RANK_TOL * max(np.linalg.norm(X[:, k]), 1.0):
                continue  # collinear with the current model
            ny = np.linalg.norm(e_y)
            r = 0.0 if ny == 0 else float(e_y @ e_c) / (ny * nc)
            if best_k is None or abs(r) > abs(best_r):
                best_k, best_r = k, r
        if best_k is None:
            break
        trial = sorted(in_model + [best_k])
        fit = ols(cols(trial), y)
        f_stat = _partial_f(base_fit.ssr, fit.ssr, df)
        p_enter = f_pvalue(f_stat, 1, df)
        if p_enter > alpha_enter:
            break
        in_model = trial
        steps.append(("enter", best_k, p_enter))
        log.debug("cluster %d entered, partial r=%.4f p=%.3g", best_k, best_r, p_enter)

        while len(in_model) > 0:
            full = ols(cols(in_model), y)
            df_full = n - len(in_model) - 1
            worst_k, worst_p = None, -1.0
            for k in in_model:
                reduced = ols(cols([j for j in in_model if j != k]), y)
                p = f_pvalue(_partial_f(reduced.ssr, full.ssr, df_full), 1, df_full)
                if p > worst_p:
                    worst_k, worst_p = k, p
            if worst_p < alpha_remove:
                break
            in_model.remove(worst_k)
            steps.append(("remove", worst_k, worst_p))
            log.debug("cluster %d removed, p=%.3g", worst_k, worst_p)
        key = tuple(in_model)
        if key in seen and steps[-1][0] == "remove":
            break  # entry/removal cycle
        seen.add(key)

    if not in_model:
        log.warning("no cluster qualified to enter the traffic model")
        beta = np.zeros(K + 1)
        beta[0] = float(np.mean(y))
        return TrafficEstimate(tuple(beta), (), 0.0, 1.0, tuple(steps), no_entry=True)

    entered = tuple(k for a, k, _ in steps if a == "enter" and k in in_model)
    entered = tuple(dict.fromkeys(entered))
    final = ols(cols(sorted(in_model)), y)
    beta = np.zeros(K + 1)
    beta[[0] + sorted(in_model)] = final.coef
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - final.ssr / sst if sst > 0 else 1.0
    p = len(in_model)
    df_res = n - p - 1
    if df_res < 1:
        model_p = float("nan")
    elif final.ssr <= 0:
        model_p = 0.0
    else:
        model_p = f_pvalue(((sst - final.ssr) / p) / (final.ssr / df_res), p, df_res)
    return TrafficEstimate(tuple(float(b) for b in beta), entered,
                           float(min(max(r2, 0.0), 1.0)), model_p, tuple(steps))


def _partial_f(ssr_reduced: float, ssr_full: float, df_full: int) -> float:
    gain = max(ssr_reduced - ssr_full, 0.0)
    if ssr_full <= 0:
        return np.inf if gain > 0 else 0.0
    return gain / (ssr_full / df_full)
