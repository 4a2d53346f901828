"""The shared pipeline stages and the two fusion algorithms built on them."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .cirsp import SpMatrix, build_sp_matrix
from .clustering import ClusterModel, kmeans
from .fusion import (
    ReinforcedMmrs,
    ReshapedDt,
    complete_mmrs,
    find_omitted_severe,
    reinforce,
    reshape_dt,
)
from .icdm import Icdm, icdm_from_dt, icdm_from_mmrs
from .regression import TrafficEstimate, build_design, stepwise_fit
from .source_data import BinningConfig, CellIndexMap, DtMatrix, MmrsVector, align_common_neighbors

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; the message starts with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


@dataclass(frozen=True)
class FusionParams:
    binning: BinningConfig = field(default_factory=BinningConfig)
    k: int = 8
    cluster_seed: int = 0
    max_iter: int = 300
    tol: float = 1e-6
    n_init: int = 10
    alpha_enter: float = 0.05
    alpha_remove: float = 0.10
    fusion_seed: int = 0
    min_weight: float = 0.0
    include_intercept: bool = True


@dataclass
class SharedStages:
    mmrs: MmrsVector
    dt: DtMatrix
    index_map: CellIndexMap
    sp: SpMatrix
    cluster: ClusterModel
    traffic: TrafficEstimate


@dataclass
class MmrsDtResult:
    shared: SharedStages
    omitted: list[str]
    reinforced: ReinforcedMmrs
    im_mr: Icdm
    im_mr_prime: Icdm


@dataclass
class DtMmrsResult:
    shared: SharedStages
    reshaped: ReshapedDt
    im_dt: Icdm
    im_dt_prime: Icdm


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001
        raise StageError(name, exc) from exc


def run_shared(mmrs: MmrsVector, dt: DtMatrix, params: FusionParams,
               cluster: ClusterModel | None = None,
               traffic: TrafficEstimate | None = None) -> SharedStages:
    """Align, profile, cluster and regress: everything both algorithms have in common.

    A previously saved ``cluster`` and/or ``traffic`` estimate skips the
    corresponding stage.
    """
    mmrs_a, dt_a, index_map = _stage("align", align_common_neighbors, mmrs, dt)
    sp = _stage("cirsp", build_sp_matrix, dt_a, params.binning)
    if cluster is None:
        cluster = _stage("cluster", kmeans, sp, params.k, seed=params.cluster_seed,
                         max_iter=params.max_iter, tol=params.tol, n_init=params.n_init)
    elif cluster.M != dt_a.M or tuple(cluster.neighbor_ids) != dt_a.neighbor_ids:
        raise StageError("cluster", ValueError("saved cluster model does not match the DT data"))
    if traffic is None:
        design = _stage("regression", build_design, cluster, mmrs_a, index_map)
        traffic = _stage("regression", stepwise_fit, design, params.alpha_enter, params.alpha_remove)
    log.info("entered clusters %s, R^2=%.3f", list(traffic.entered), traffic.r_squared)
    return SharedStages(mmrs_a, dt_a, index_map, sp, cluster, traffic)


def fuse_mmrs(shared: SharedStages, params: FusionParams) -> MmrsDtResult:
    omitted = _stage("fusion-1", find_omitted_severe, shared.cluster, shared.traffic,
                     shared.index_map, params.binning, params.min_weight)
    r_dd = _stage("fusion-1", complete_mmrs, shared.cluster, shared.traffic, shared.index_map,
                  omitted, params.include_intercept)
    reinforced = _stage("fusion-1", reinforce, shared.mmrs, r_dd, omitted)
    im_mr = _stage("icdm", icdm_from_mmrs, shared.mmrs, params.binning)
    im_mr_prime = _stage("icdm", icdm_from_mmrs, reinforced, params.binning)
    return MmrsDtResult(shared, omitted, reinforced, im_mr, im_mr_prime)


def fuse_dt(shared: SharedStages, params: FusionParams) -> DtMmrsResult:
    reshaped = _stage("fusion-2", reshape_dt, shared.dt, shared.cluster, shared.traffic,
                      params.fusion_seed)
    im_dt = _stage("icdm", icdm_from_dt, shared.dt, params.binning)
    im_dt_prime = _stage("icdm", icdm_from_dt, reshaped, params.binning)
    return DtMmrsResult(shared, reshaped, im_dt, im_dt_prime)
