"""Synthetic single-serving-cell scenarios with a known interference ground truth.

Propagation is log-distance with i.i.d. log-normal shadowing per
(sample, cell). MMRs are drawn at positions sampled from a Gaussian-mixture
traffic density and report the 6 strongest detectable BA-list neighbors;
drive tests sweep every cell at uniform arc-length steps along roads.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .icdm import Icdm
from .source_data import (
    MAX_REPORTED_NEIGHBORS,
    BinningConfig,
    DtRecord,
    MmrReport,
)

GSM_BA_LIMIT = 32
RXLEV_DECIMALS = 1

# independent RNG streams per product, keyed off the caller's seed
_STREAM_MMR = 1
_STREAM_DT = 2
_STREAM_TRUTH = 3


@dataclass(frozen=True)
class CellSite:
    id: str
    x: float
    y: float
    tx_power: float = 43.0
    channel: int = 0

    def __post_init__(self):
        if not math.isfinite(self.tx_power):
            raise ValueError(f"cell {self.id}: tx_power must be finite")


@dataclass(frozen=True)
class Hotspot:
    """One 2-D Gaussian component of the traffic density."""

    weight: float
    x: float
    y: float
    sigma_x: float
    sigma_y: float | None = None

    @property
    def sy(self) -> float:
        return self.sigma_x if self.sigma_y is None else self.sigma_y


@dataclass(frozen=True)
class PathLoss:
    reference_loss_db: float = 30.0
    exponent: float = 3.5
    shadowing_sigma_db: float = 6.0


@dataclass(frozen=True)
class Scenario:
    cells: tuple[CellSite, ...]
    serving_id: str
    ba_list: tuple[str, ...]
    hotspots: tuple[Hotspot, ...]
    roads: tuple[tuple[tuple[float, float], ...], ...] = ()
    pathloss: PathLoss = field(default_factory=PathLoss)
    noise_floor: float = -113.0
    detection_threshold: float = -105.0
    # extra measurement error per source, on top of shadowing
    mmr_noise_db: float = 0.0
    dt_noise_db: float = 0.0
    ba_limit: int = GSM_BA_LIMIT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "ba_list", tuple(self.ba_list))
        object.__setattr__(self, "hotspots", tuple(self.hotspots))
        object.__setattr__(
            self, "roads",
            tuple(tuple((float(x), float(y)) for x, y in road) for road in self.roads),
        )
        ids = [c.id for c in self.cells]
        if len(set(ids)) != len(ids):
            raise ValueError("cell ids must be unique")
        if self.serving_id not in ids:
            raise ValueError(f"serving cell {self.serving_id!r} absent from scenario")
        unknown = set(self.ba_list) - set(ids)
        if unknown:
            raise ValueError(f"BA list references unknown cells: {sorted(unknown)}")
        if self.serving_id in self.ba_list:
            raise ValueError("BA list must not contain the serving cell")
        if len(set(self.ba_list)) != len(self.ba_list):
            raise ValueError("BA list has duplicates")
        if len(self.ba_list) > self.ba_limit:
            raise ValueError(f"BA list has {len(self.ba_list)} cells, limit is {self.ba_limit}")
        if not self.hotspots:
            raise ValueError("traffic density needs at least one hotspot")
        weights = np.array([h.weight for h in self.hotspots])
        if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("hotspot weights must be nonnegative and sum to 1")
        for road in self.roads:
            if len(road) < 2:
                raise ValueError("a road polyline needs at least two points")

    @property
    def cell_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.cells)

    @property
    def neighbor_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.cells if c.id != self.serving_id)

    def cell(self, cell_id: str) -> CellSite:
        for c in self.cells:
            if c.id == cell_id:
                return c
        raise KeyError(cell_id)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roads"] = [[list(p) for p in road] for road in self.roads]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        d["cells"] = [CellSite(**c) for c in d["cells"]]
        d["hotspots"] = [Hotspot(**h) for h in d["hotspots"]]
        d["pathloss"] = PathLoss(**d.get("pathloss", {}))
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class DriveTest:
    records: list[DtRecord]
    road_index: np.ndarray  # which road produced each kept record
    skipped: int = 0


@dataclass(frozen=True)
class GroundTruth:
    icdm_true: Icdm
    region_label_per_dt_record: tuple[int, ...]


def rxlev(scenario: Scenario, cell: CellSite, position: Sequence[float],
          shadowing_draw: float = 0.0) -> float:
    """Received level (dBm) of ``cell`` at ``position`` under log-distance loss."""
    d = max(math.hypot(position[0] - cell.x, position[1] - cell.y), 1.0)
    pl = scenario.pathloss
    return cell.tx_power - (pl.reference_loss_db + 10.0 * pl.exponent * math.log10(d)) + shadowing_draw


def mean_rxlev(scenario: Scenario, cells: Sequence[CellSite], points: np.ndarray) -> np.ndarray:
    """Shadowing-free levels, shape (n_points, n_cells)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    xy = np.array([(c.x, c.y) for c in cells], dtype=float).reshape(-1, 2)
    tx = np.array([c.tx_power for c in cells], dtype=float)
    d = np.hypot(points[:, None, 0] - xy[None, :, 0], points[:, None, 1] - xy[None, :, 1])
    d = np.maximum(d, 1.0)
    pl = scenario.pathloss
    return tx[None, :] - (pl.reference_loss_db + 10.0 * pl.exponent * np.log10(d))


def sample_traffic(scenario: Scenario, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` positions from the hotspot mixture."""
    weights = np.array([h.weight for h in scenario.hotspots])
    comp = rng.choice(len(weights), size=n, p=weights / weights.sum())
    mu = np.array([(h.x, h.y) for h in scenario.hotspots])
    sd = np.array([(h.sigma_x, h.sy) for h in scenario.hotspots])
    z = rng.standard_normal((n, 2))
    return mu[comp] + z * sd[comp]


def _levels(scenario: Scenario, cells: Sequence[CellSite], points: np.ndarray,
            rng: np.random.Generator, extra_noise_db: float) -> np.ndarray:
    rx = mean_rxlev(scenario, cells, points)
    rx = rx + rng.normal(0.0, scenario.pathloss.shadowing_sigma_db, rx.shape)
    if extra_noise_db > 0:
        rx = rx + rng.normal(0.0, extra_noise_db, rx.shape)
    return np.round(rx, RXLEV_DECIMALS)


def simulate_mmrs(scenario: Scenario, n_reports: int, seed: int) -> list[MmrReport]:
    if n_reports < 1:
        raise ValueError("n_reports must be >= 1")
    serving = scenario.cell(scenario.serving_id)
    ba_ids = sorted(scenario.ba_list)
    cells = [serving] + [scenario.cell(i) for i in ba_ids]
    rng = np.random.default_rng([seed, _STREAM_MMR])
    points = sample_traffic(scenario, n_reports, rng)
    rx = _levels(scenario, cells, points, rng, scenario.mmr_noise_db)

    nb = rx[:, 1:]
    key = np.where(nb >= scenario.detection_threshold, -nb, np.inf)
    # stable sort keeps lexicographic id order among equal levels
    order = np.argsort(key, axis=1, kind="stable")[:, :MAX_REPORTED_NEIGHBORS]
    reports = []
    for m in range(n_reports):
        picked = [
            (ba_ids[j], float(nb[m, j])) for j in order[m] if np.isfinite(key[m, j])
        ]
        reports.append(MmrReport(scenario.serving_id, float(rx[m, 0]), tuple(picked)))
    return reports


def road_sample_points(scenario: Scenario, sample_spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Points every ``sample_spacing`` meters of arc length along each road."""
    if not scenario.roads:
        raise ValueError("no DT records: scenario has no roads")
    if sample_spacing <= 0:
        raise ValueError("sample_spacing must be > 0")
    pts, labels = [], []
    for r, road in enumerate(scenario.roads):
        xy = np.asarray(road, dtype=float)
        seg = np.hypot(*np.diff(xy, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        n = int(math.floor(cum[-1] / sample_spacing + 1e-9)) + 1
        s = np.arange(n) * sample_spacing
        pts.append(np.column_stack([np.interp(s, cum, xy[:, 0]), np.interp(s, cum, xy[:, 1])]))
        labels.append(np.full(n, r))
    return np.vstack(pts), np.concatenate(labels)


def simulate_drive_test(scenario: Scenario, sample_spacing: float, seed: int) -> DriveTest:
    points, labels = road_sample_points(scenario, sample_spacing)
    ids = scenario.cell_ids
    rng = np.random.default_rng([seed, _STREAM_DT])
    rx = _levels(scenario, scenario.cells, points, rng, scenario.dt_noise_db)
    s_col = ids.index(scenario.serving_id)
    detected = rx >= scenario.detection_threshold

    records, kept = [], []
    for m in range(len(points)):
        if not detected[m, s_col]:
            continue
        readings = tuple((ids[c], float(rx[m, c])) for c in np.flatnonzero(detected[m]))
        records.append(DtRecord(round(float(points[m, 0]), 1), round(float(points[m, 1]), 1), readings))
        kept.append(m)
    return DriveTest(records, labels[kept], skipped=len(points) - len(kept))


def ground_truth_icdm(scenario: Scenario, n_samples: int, binning: BinningConfig,
                      seed: int, chunk: int = 100_000) -> Icdm:
    """Monte Carlo probability that a detectable neighbor's CIR falls in intervals 1..q_threshold.

    Positions follow the traffic density; every neighbor in the scenario is
    scored, BA membership and the 6-neighbor report limit play no part.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    serving = scenario.cell(scenario.serving_id)
    neighbors = [scenario.cell(i) for i in scenario.neighbor_ids]
    cells = [serving] + neighbors
    rng = np.random.default_rng([seed, _STREAM_TRUTH])
    sigma = scenario.pathloss.shadowing_sigma_db
    hits = np.zeros(len(neighbors), dtype=np.int64)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        points = sample_traffic(scenario, n, rng)
        rx = mean_rxlev(scenario, cells, points) + rng.normal(0.0, sigma, (n, len(cells)))
        nb = rx[:, 1:]
        severe = (rx[:, :1] - nb < binning.cir_threshold) & (nb >= scenario.detection_threshold)
        hits += severe.sum(axis=0)
        done += n
    return Icdm(scenario.serving_id, {c.id: float(h) / n_samples for c, h in zip(neighbors, hits)})


def make_ground_truth(scenario: Scenario, drive_test: DriveTest, binning: BinningConfig,
                      n_samples: int, seed: int) -> GroundTruth:
    return GroundTruth(
        ground_truth_icdm(scenario, n_samples, binning, seed),
        tuple(int(v) for v in drive_test.road_index),
    )
