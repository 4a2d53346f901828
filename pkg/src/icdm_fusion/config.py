"""Pipeline configuration: one TOML file, every seed spelled out."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .pipeline import FusionParams
from .source_data import DEFAULT_EDGES, DEFAULT_Q_THRESHOLD, BinningConfig


@dataclass
class SimulationConfig:
    n_reports: int = 20000
    sample_spacing: float = 10.0
    truth_samples: int = 200_000
    seed: int = 1


@dataclass
class PipelineConfig:
    scenario: Path | None = None
    fixture: str | None = None
    mmrs: Path | None = None
    dt: Path | None = None
    output_dir: Path = Path("out")
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    params: FusionParams = field(default_factory=FusionParams)

    def check_paths(self) -> None:
        for name in ("scenario", "mmrs", "dt"):
            p = getattr(self, name)
            if p is not None and not p.exists():
                raise FileNotFoundError(f"{name} file not found: {p}")


def _path(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_config(path: str | Path) -> PipelineConfig:
    """Read a pipeline TOML file; relative paths resolve against the file's directory."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    base = path.parent
    inputs = raw.get("inputs", {})
    sim = raw.get("simulation", {})
    binning = raw.get("binning", {})
    clus = raw.get("clustering", {})
    reg = raw.get("regression", {})
    fus = raw.get("fusion", {})
    params = FusionParams(
        binning=BinningConfig(
            tuple(binning.get("edges", DEFAULT_EDGES)),
            int(binning.get("q_threshold", DEFAULT_Q_THRESHOLD)),
        ),
        k=int(clus.get("k", 8)),
        cluster_seed=int(clus.get("seed", 0)),
        max_iter=int(clus.get("max_iter", 300)),
        tol=float(clus.get("tol", 1e-6)),
        n_init=int(clus.get("n_init", 10)),
        alpha_enter=float(reg.get("alpha_enter", 0.05)),
        alpha_remove=float(reg.get("alpha_remove", 0.10)),
        fusion_seed=int(fus.get("seed", 0)),
        min_weight=float(fus.get("min_weight", 0.0)),
        include_intercept=bool(fus.get("include_intercept", True)),
    )
    return PipelineConfig(
        scenario=_path(base, inputs.get("scenario")),
        fixture=inputs.get("fixture"),
        mmrs=_path(base, inputs.get("mmrs")),
        dt=_path(base, inputs.get("dt")),
        output_dir=_path(base, inputs.get("output_dir", "out")),
        simulation=SimulationConfig(
            n_reports=int(sim.get("n_reports", 20000)),
            sample_spacing=float(sim.get("sample_spacing", 10.0)),
            truth_samples=int(sim.get("truth_samples", 200_000)),
            seed=int(sim.get("seed", 1)),
        ),
        params=params,
    )


def load_manifest(path: str | Path) -> list[dict]:
    """Per-serving-cell inputs: ``[[cell]]`` tables with ``serving_id``, ``mmrs`` and ``dt``."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    cells = raw.get("cell", [])
    if not cells:
        raise ValueError(f"{path}: manifest lists no [[cell]] entries")
    out = []
    for entry in cells:
        out.append({
            "serving_id": str(entry["serving_id"]),
            "mmrs": _path(path.parent, entry["mmrs"]),
            "dt": _path(path.parent, entry["dt"]),
        })
    return out
