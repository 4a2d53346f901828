"""The two data fusions.

Fusion I appends MMRs blocks for severe interferers that only the drive
test heard. Fusion II replicates DT records set by set so that the record
count of each region follows the estimated traffic instead of the route.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterModel
from .regression import TrafficEstimate
from .source_data import BinningConfig, CellIndexMap, DtMatrix, MmrsVector


@dataclass(frozen=True, eq=False)
class ReinforcedMmrs:
    base: MmrsVector
    appended_ids: tuple[str, ...]
    appended_counts: np.ndarray  # (N', Q) integer counts

    def __post_init__(self):
        counts = np.asarray(self.appended_counts, dtype=np.int64).reshape(len(self.appended_ids), self.base.Q)
        counts.setflags(write=False)
        object.__setattr__(self, "appended_counts", counts)
        if (counts < 0).any():
            raise ValueError("appended counts must be nonnegative")

    def combined(self) -> MmrsVector:
        """One MMRs vector with the appended blocks after the original ones."""
        return MmrsVector(
            self.base.serving_id,
            self.base.neighbor_ids + self.appended_ids,
            np.concatenate([self.base.counts, self.appended_counts.reshape(-1)]),
            self.base.total_reports,
            self.base.Q,
        )


@dataclass(frozen=True)
class SetTarget:
    k: int
    b: int      # records in the set
    target: int  # floor(beta_k)
    E: int
    F: int


@dataclass(frozen=True, eq=False)
class ReshapedDt:
    matrix: DtMatrix
    per_set_targets: tuple[SetTarget, ...]
    source_columns: np.ndarray  # input record index behind each output column


def _centers_for(cluster: ClusterModel, index_map: CellIndexMap, cell_id: str, Q: int) -> np.ndarray:
    i = index_map.dt_row(cell_id)
    return cluster.centers[i * Q:(i + 1) * Q]  # (Q, K)


def find_omitted_severe(cluster: ClusterModel, beta: TrafficEstimate, index_map: CellIndexMap,
                        binning: BinningConfig, min_weight: float = 0.0) -> list[str]:
    """DT-only neighbors expected to land in a severe interval for some MMR traffic.

    A cell qualifies when the traffic-weighted share of its CIRSP entries in
    intervals ``1..q_threshold`` is strictly above ``min_weight``. Negative
    coefficients count as zero traffic.
    """
    Q = binning.Q
    weights = beta.clamped()[1:]
    found = []
    for cell_id in index_map.dt_only_ids:
        c = _centers_for(cluster, index_map, cell_id, Q)
        if float(c[:binning.q_threshold].sum(axis=0) @ weights) > min_weight:
            found.append(cell_id)
    return found


def expected_omitted_counts(cluster: ClusterModel, beta: TrafficEstimate, index_map: CellIndexMap,
                            omitted: list[str], include_intercept: bool = True) -> np.ndarray:
    """Unrounded MMRs counts of the omitted cells, shape (N', Q)."""
    Q = cluster.Q or (cluster.centers.shape[0] // max(len(index_map.dt_ids), 1))
    b = beta.clamped()
    if not include_intercept:
        b[0] = 0.0
    out = np.zeros((len(omitted), Q))
    for row, cell_id in enumerate(omitted):
        if cell_id not in index_map.dt_only_ids:
            raise ValueError(f"{cell_id} is not a DT-only neighbor")
        c = _centers_for(cluster, index_map, cell_id, Q)
        out[row] = b[0] + c @ b[1:]
    return out


def complete_mmrs(cluster: ClusterModel, beta: TrafficEstimate, index_map: CellIndexMap,
                  omitted: list[str], include_intercept: bool = True) -> np.ndarray:
    """Integer MMRs counts for the omitted cells (round half up, floor at 0)."""
    raw = expected_omitted_counts(cluster, beta, index_map, omitted, include_intercept)
    return np.maximum(np.floor(raw + 0.5), 0).astype(np.int64)


def reinforce(mmrs: MmrsVector, r_dd: np.ndarray, omitted: list[str]) -> ReinforcedMmrs:
    dup = set(omitted) & set(mmrs.neighbor_ids)
    if dup:
        raise ValueError(f"cells already present in MMRs data: {sorted(dup)}")
    if len(set(omitted)) != len(omitted):
        raise ValueError("duplicate omitted cell ids")
    r_dd = np.asarray(r_dd)
    if r_dd.size != len(omitted) * mmrs.Q:
        raise ValueError("completed counts do not match the omitted cells")
    return ReinforcedMmrs(mmrs, tuple(omitted), r_dd)


def reshape_dt(dt: DtMatrix, cluster: ClusterModel, beta: TrafficEstimate, seed: int) -> ReshapedDt:
    """Replicate each set toward ``floor(beta_k)`` records.

    Every record of set k is copied ``E_k = T_k // b_k`` times and ``F_k =
    T_k % b_k`` further records are drawn without replacement. Output is
    ordered by set, then by input order.
    """
    if cluster.membership.size != dt.M:
        raise ValueError("cluster membership does not cover the DT records")
    rng = np.random.default_rng(seed)
    weights = beta.clamped()
    columns, targets = [], []
    for k in range(1, cluster.K + 1):
        members = np.flatnonzero(cluster.membership == k)
        b_k = members.size
        T = int(np.floor(weights[k])) if k < weights.size else 0
        if T > 0 and b_k == 0:
            raise ValueError(f"set {k} is empty but has a traffic target of {T}")
        E, F = (T // b_k, T % b_k) if b_k else (0, 0)
        picked = np.sort(rng.choice(members, size=F, replace=False)) if F else np.empty(0, dtype=np.int64)
        columns.append(np.concatenate([np.tile(members, E), picked]))
        targets.append(SetTarget(k, int(b_k), T, int(E), int(F)))
    src = np.concatenate(columns).astype(np.int64) if columns else np.empty(0, dtype=np.int64)
    if src.size == 0:
        raise ValueError("reshaping produced no DT records (all traffic targets are zero)")
    matrix = DtMatrix(dt.serving_id, dt.neighbor_ids, dt.values[:, src])
    return ReshapedDt(matrix, tuple(targets), src)
