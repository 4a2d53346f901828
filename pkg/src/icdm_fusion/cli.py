"""Command line entry point: ``icdm <subcommand>``.

Every stage writes its artifact into the output directory so a later
stage can be re-run from files alone.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .clustering import ClusterModel
from .config import PipelineConfig, SimulationConfig, load_config, load_manifest
from .fixtures import FIXTURES
from .icdm import Icdm, icdm_from_dt, icdm_from_mmrs, im_error, pearson
from .pipeline import FusionParams, StageError, fuse_dt, fuse_mmrs, run_shared
from .regression import TrafficEstimate
from .scenario import Scenario, ground_truth_icdm, simulate_drive_test, simulate_mmrs
from .source_data import BinningConfig, DtMatrix, MmrsVector, build_dt_matrix, build_mmrs_vector

log = logging.getLogger("icdm_fusion")


class CliError(RuntimeError):
    pass


def _guard(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise StageError(stage, exc) from exc


# -- simulate -----------------------------------------------------------------

def run_simulate(scenario: Scenario, sim: SimulationConfig, binning: BinningConfig,
                 out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = _guard("simulate-mmrs", simulate_mmrs, scenario, sim.n_reports, sim.seed)
    drive = _guard("simulate-dt", simulate_drive_test, scenario, sim.sample_spacing, sim.seed)
    if not drive.records:
        raise StageError("simulate-dt", ValueError("no DT records: serving cell undetectable along every road"))
    truth = _guard("ground-truth", ground_truth_icdm, scenario, sim.truth_samples, binning, sim.seed)

    scenario.save(out_dir / "scenario.json")
    io.write_mmrs_jsonl(out_dir / "mmrs.jsonl", reports)
    io.write_dt_jsonl(out_dir / "dt.jsonl", drive.records)
    io.write_icdm(out_dir / "truth_icdm.csv", truth)
    detected = sorted({i for r in drive.records for i, _ in r.readings} - {scenario.serving_id})
    summary = {
        "serving_id": scenario.serving_id,
        "n_reports": len(reports),
        "n_dt_records": len(drive.records),
        "skipped_dt_points": drive.skipped,
        "detected_neighbors": len(detected),
        "reported_neighbors": len({i for r in reports for i, _ in r.neighbors}),
        "region_label_per_dt_record": drive.road_index.tolist(),
    }
    io.write_json(out_dir / "ground_truth.json", summary)
    return summary


# -- shared loading -----------------------------------------------------------

def _load_sources(args, binning: BinningConfig, cfg: PipelineConfig | None
                  ) -> tuple[MmrsVector, DtMatrix]:
    if getattr(args, "mmrs_vector", None):
        mmrs = _guard("load", io.read_mmrs_vector, args.mmrs_vector)
    else:
        path = args.mmrs or (cfg.mmrs if cfg else None)
        if path is None:
            raise CliError("MMR input missing: pass --mmrs or --mmrs-vector")
        reports = _guard("load", io.read_mmrs_jsonl, path)
        mmrs = _guard("bin", build_mmrs_vector, reports, binning, getattr(args, "serving", None))
    if getattr(args, "dt_matrix", None):
        dt = _guard("load", io.read_dt_matrix, args.dt_matrix)
    else:
        path = args.dt or (cfg.dt if cfg else None)
        if path is None:
            raise CliError("DT input missing: pass --dt or --dt-matrix")
        records = _guard("load", io.read_dt_jsonl, path)
        serving = getattr(args, "serving", None) or mmrs.serving_id
        dt = _guard("bin", build_dt_matrix, records, serving)
    if mmrs.Q != binning.Q:
        raise StageError("bin", ValueError(f"MMRs vector has Q={mmrs.Q}, binning has Q={binning.Q}"))
    return mmrs, dt


def _shared(args, params: FusionParams, cfg, out_dir: Path):
    mmrs, dt = _load_sources(args, params.binning, cfg)
    cluster = ClusterModel.from_dict(io.read_json(args.clusters)) if args.clusters else None
    traffic = TrafficEstimate.from_dict(io.read_json(args.traffic)) if args.traffic else None
    shared = run_shared(mmrs, dt, params, cluster=cluster, traffic=traffic)
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_mmrs_vector(out_dir / "mmrs_vector.csv", shared.mmrs, n_common=shared.index_map.n_common)
    io.write_dt_matrix(out_dir / "dt_matrix.csv", shared.dt, n_common=shared.index_map.n_common)
    if args.dump_sp:
        io.write_sp_matrix(out_dir / "sp.csv", shared.sp)
    io.write_json(out_dir / "clusters.json", shared.cluster.to_dict())
    io.write_json(out_dir / "regression.json", shared.traffic.to_dict())
    return shared


def run_mmrs_dt(args, params: FusionParams, cfg, out_dir: Path) -> dict:
    shared = _shared(args, params, cfg, out_dir)
    res = fuse_mmrs(shared, params)
    combined = res.reinforced.combined()
    io.write_mmrs_vector(out_dir / "reinforced_mmrs.csv", combined,
                         appended_ids=list(res.reinforced.appended_ids))
    io.write_json(out_dir / "fusion_mmrs.json", {
        "omitted_ids": res.omitted,
        "appended_counts": {cid: res.reinforced.appended_counts[n].tolist()
                            for n, cid in enumerate(res.omitted)},
        "entered": list(shared.traffic.entered),
    })
    io.write_icdm(out_dir / "im_mr.csv", res.im_mr)
    io.write_icdm(out_dir / "im_mr_prime.csv", res.im_mr_prime)
    return {"omitted_ids": res.omitted, "entered": list(shared.traffic.entered),
            "r_squared": shared.traffic.r_squared, "im": res.im_mr_prime}


def run_dt_mmrs(args, params: FusionParams, cfg, out_dir: Path) -> dict:
    shared = _shared(args, params, cfg, out_dir)
    res = fuse_dt(shared, params)
    io.write_dt_matrix(out_dir / "reshaped_dt.csv", res.reshaped.matrix,
                       source_columns=res.reshaped.source_columns.tolist())
    targets = [
        {"set": t.k, "b": t.b, "target": t.target, "E": t.E, "F": t.F}
        for t in res.reshaped.per_set_targets
    ]
    io.write_json(out_dir / "fusion_dt.json", {
        "per_set_targets": targets,
        "records_in": shared.dt.M,
        "records_out": res.reshaped.matrix.M,
        "entered": list(shared.traffic.entered),
    })
    io.write_icdm(out_dir / "im_dt.csv", res.im_dt)
    io.write_icdm(out_dir / "im_dt_prime.csv", res.im_dt_prime)
    return {"per_set_targets": targets, "entered": list(shared.traffic.entered),
            "r_squared": shared.traffic.r_squared, "im": res.im_dt_prime}


# -- compare / report ---------------------------------------------------------

def _flatten(rows: list[Icdm]) -> Icdm:
    if len(rows) == 1:
        return rows[0]
    return Icdm("*", {f"{r.serving_id}->{k}": v for r in rows for k, v in r.entries.items()})


def _safe_pearson(a: Icdm, b: Icdm) -> float | None:
    try:
        return pearson(a, b)
    except ValueError:
        return None


def run_compare(paths: list[Path], truth: Path | None = None) -> dict:
    if len(paths) < 2 and truth is None:
        raise CliError("compare needs at least two ICDM files, or one plus --truth")
    ims = [(str(p), _flatten(_guard("parse", io.read_icdm, p))) for p in paths]
    pairs = []
    for (na, a), (nb, b) in itertools.combinations(ims, 2):
        pairs.append({"a": na, "b": nb, "pearson": _safe_pearson(a, b), **im_error(a, b)})
    report = {"pairs": pairs}
    if len(pairs) == 1:
        report.update({k: v for k, v in pairs[0].items() if k not in ("a", "b")})
    if truth is not None:
        t = _flatten(_guard("parse", io.read_icdm, truth))
        report["truth"] = str(truth)
        report["vs_truth"] = [
            {"im": name, "pearson": _safe_pearson(im, t), **im_error(im, t)}
            for name, im in ims
        ]
    return report


def format_compare(report: dict) -> str:
    def f(v):
        return "    n/a" if v is None else f"{v:7.4f}"
    lines = [f"{'A':<28} {'B':<28} {'pearson':>7} {'mae':>7} {'max_ae':>7} {'mismatch':>8}"]
    for p in report["pairs"]:
        lines.append(f"{Path(p['a']).name:<28} {Path(p['b']).name:<28} {f(p['pearson'])} "
                     f"{f(p['mae'])} {f(p['max_ae'])} {p['support_mismatch']:>8d}")
    for row in report.get("vs_truth", []):
        lines.append(f"{Path(row['im']).name:<28} {'(truth)':<28} {f(row['pearson'])} "
                     f"{f(row['mae'])} {f(row['max_ae'])} {row['support_mismatch']:>8d}")
    return "\n".join(lines)


def _cdf_rows(dt: DtMatrix, source: str):
    for i, cid in enumerate(dt.neighbor_ids):
        vals = np.sort(dt.values[i][~np.isnan(dt.values[i])])
        for n, v in enumerate(vals, 1):
            yield [cid, source, repr(float(v)), f"{n / dt.M:.6f}"]


def run_report(run_dir: Path, truth: Path | None, dt_jsonl: Path | None) -> dict:
    ims = sorted(run_dir.glob("im_*.csv"))
    if truth is None and (run_dir / "truth_icdm.csv").exists():
        truth = run_dir / "truth_icdm.csv"
    report = run_compare(ims, truth) if ims else {"pairs": []}
    for name in ("regression.json", "fusion_mmrs.json", "fusion_dt.json"):
        if (run_dir / name).exists():
            report[name.removesuffix(".json")] = io.read_json(run_dir / name)

    import csv
    if (run_dir / "dt_matrix.csv").exists() and (run_dir / "reshaped_dt.csv").exists():
        with open(run_dir / "cir_cdf.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["neighbor_id", "source", "cir_db", "cumulative_probability"])
            w.writerows(_cdf_rows(io.read_dt_matrix(run_dir / "dt_matrix.csv"), "DT"))
            w.writerows(_cdf_rows(io.read_dt_matrix(run_dir / "reshaped_dt.csv"), "DT'"))
    if dt_jsonl is not None and (run_dir / "clusters.json").exists():
        records = io.read_dt_jsonl(dt_jsonl)
        membership = io.read_json(run_dir / "clusters.json")["membership"]
        if len(records) != len(membership):
            raise CliError("DT file and cluster membership disagree on record count")
        with open(run_dir / "dt_sets.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["record_index", "x", "y", "set"])
            for m, (rec, k) in enumerate(zip(records, membership)):
                w.writerow([m, rec.x, rec.y, k])
    io.write_json(run_dir / "report.json", report)
    return report


# -- argument parsing ---------------------------------------------------------

def _binning_from(args, cfg: PipelineConfig | None) -> BinningConfig:
    base = cfg.params.binning if cfg else BinningConfig()
    edges = base.edges
    if args.binning_edges:
        edges = tuple(float(x) for x in args.binning_edges.split(","))
    q_threshold = args.q_threshold if args.q_threshold is not None else base.q_threshold
    return BinningConfig(edges, q_threshold)


def _params_from(args, cfg: PipelineConfig | None) -> FusionParams:
    p = cfg.params if cfg else FusionParams()
    pick = lambda v, d: d if v is None else v  # noqa: E731
    return FusionParams(
        binning=_binning_from(args, cfg),
        k=pick(args.k, p.k),
        cluster_seed=pick(args.seed, p.cluster_seed),
        max_iter=pick(args.max_iter, p.max_iter),
        tol=p.tol,
        n_init=pick(args.n_init, p.n_init),
        alpha_enter=pick(args.alpha_enter, p.alpha_enter),
        alpha_remove=pick(args.alpha_remove, p.alpha_remove),
        fusion_seed=pick(args.fusion_seed, p.fusion_seed),
        min_weight=pick(args.min_weight, p.min_weight),
        include_intercept=p.include_intercept and not args.no_intercept,
    )


def _add_binning(p):
    p.add_argument("--binning-edges", help="comma-separated CIR interval edges in dB")
    p.add_argument("--q-threshold", type=int, help="last interval counted as severe")


def _add_fusion(p):
    p.add_argument("--config", type=Path, help="pipeline TOML file")
    p.add_argument("--mmrs", type=Path, help="MMR reports (JSON lines)")
    p.add_argument("--dt", type=Path, help="DT records (JSON lines)")
    p.add_argument("--mmrs-vector", type=Path, help="binned MMRs CSV instead of --mmrs")
    p.add_argument("--dt-matrix", type=Path, help="DT CIR matrix CSV instead of --dt")
    p.add_argument("--serving", help="serving cell id (defaults to the one in the MMRs)")
    p.add_argument("--manifest", type=Path, help="TOML listing one [[cell]] per serving cell")
    p.add_argument("--clusters", type=Path, help="reuse a saved clusters.json")
    p.add_argument("--traffic", type=Path, help="reuse a saved regression.json")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int, help="clustering seed")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--n-init", type=int)
    p.add_argument("--alpha-enter", type=float)
    p.add_argument("--alpha-remove", type=float)
    p.add_argument("--fusion-seed", type=int)
    p.add_argument("--min-weight", type=float)
    p.add_argument("--no-intercept", action="store_true",
                   help="leave beta_0 out of the completed MMRs counts")
    p.add_argument("--dump-sp", action="store_true", help="write the SP matrix as sp.csv")
    _add_binning(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icdm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a scenario, its measurements and the true ICDM")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", type=Path, help="scenario JSON")
    src.add_argument("--fixture", choices=sorted(FIXTURES))
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--n-reports", type=int)
    p.add_argument("--spacing", type=float, help="DT sample spacing in meters")
    p.add_argument("--truth-samples", type=int)
    p.add_argument("--seed", type=int)
    _add_binning(p)

    p = sub.add_parser("bin", help="bin MMR reports and DT records")
    p.add_argument("--mmrs", type=Path, required=True)
    p.add_argument("--dt", type=Path, required=True)
    p.add_argument("--serving")
    p.add_argument("--out", type=Path, required=True)
    _add_binning(p)

    _add_fusion(sub.add_parser("fuse-mmrs", help="MMRs reinforced by DT (IM-MR')"))
    _add_fusion(sub.add_parser("fuse-dt", help="DT reshaped by MMRs traffic (IM-DT')"))

    p = sub.add_parser("icdm", help="ICDM from a binned MMRs vector or a DT matrix")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--mmrs-vector", type=Path)
    g.add_argument("--dt-matrix", type=Path)
    p.add_argument("--per-neighbor", action="store_true",
                   help="normalize MMRs counts per neighbor instead of per report")
    p.add_argument("--out", type=Path, required=True)
    _add_binning(p)

    p = sub.add_parser("compare", help="pairwise Pearson and error between ICDM files")
    p.add_argument("files", type=Path, nargs="+")
    p.add_argument("--truth", type=Path)
    p.add_argument("--json", type=Path, help="also write the report here")

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--truth", type=Path)
    p.add_argument("--dt", type=Path, help="DT records, to export per-set positions")
    return parser


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config) if args.config else None
    sim = cfg.simulation if cfg else SimulationConfig()
    if args.scenario:
        scenario = Scenario.load(args.scenario)
    elif args.fixture:
        scenario = FIXTURES[args.fixture]()
    elif cfg and cfg.scenario:
        scenario = Scenario.load(cfg.scenario)
    elif cfg and cfg.fixture:
        scenario = FIXTURES[cfg.fixture]()
    else:
        raise CliError("simulate needs --scenario, --fixture or a config naming one")
    sim = SimulationConfig(
        n_reports=args.n_reports or sim.n_reports,
        sample_spacing=args.spacing or sim.sample_spacing,
        truth_samples=args.truth_samples or sim.truth_samples,
        seed=sim.seed if args.seed is None else args.seed,
    )
    out = args.out or (cfg.output_dir if cfg else None)
    if out is None:
        raise CliError("simulate needs --out")
    summary = run_simulate(scenario, sim, _binning_from(args, cfg), out)
    print(f"wrote {summary['n_reports']} MMRs, {summary['n_dt_records']} DT records "
          f"({summary['detected_neighbors']} neighbors detected, "
          f"{summary['reported_neighbors']} reported) to {out}")
    return 0


def _cmd_bin(args) -> int:
    binning = _binning_from(args, None)
    args.mmrs_vector = args.dt_matrix = None
    mmrs, dt = _load_sources(args, binning, None)
    args.out.mkdir(parents=True, exist_ok=True)
    io.write_mmrs_vector(args.out / "mmrs_vector.csv", mmrs)
    io.write_dt_matrix(args.out / "dt_matrix.csv", dt)
    print(f"J={mmrs.J} neighbors over {mmrs.total_reports} reports; I={dt.I} neighbors over M={dt.M} records")
    return 0


def _cmd_fuse(args, runner) -> int:
    cfg = load_config(args.config) if args.config else None
    if cfg:
        cfg.check_paths()
    params = _params_from(args, cfg)
    out = args.out or (cfg.output_dir if cfg else None)
    if out is None:
        raise CliError("missing --out")
    if args.manifest:
        rows = []
        for entry in load_manifest(args.manifest):
            cell_args = argparse.Namespace(**vars(args))
            cell_args.mmrs, cell_args.dt = entry["mmrs"], entry["dt"]
            cell_args.serving = entry["serving_id"]
            cell_args.mmrs_vector = cell_args.dt_matrix = None
            cell_args.clusters = cell_args.traffic = None
            result = runner(cell_args, params, None, out / entry["serving_id"])
            rows.append(result["im"])
            print(f"{entry['serving_id']}: entered clusters {result['entered']}")
        name = "im_mr_prime.csv" if runner is run_mmrs_dt else "im_dt_prime.csv"
        io.write_icdm(out / name, *rows)
        return 0
    result = runner(args, params, cfg, out)
    print(f"entered clusters (in order): {result['entered']}, R^2={result['r_squared']:.3f}")
    if "omitted_ids" in result:
        print(f"recovered omitted severe interferers: {result['omitted_ids'] or 'none'}")
    else:
        total = sum(t["target"] for t in result["per_set_targets"])
        print(f"reshaped DT to {total} records over {len(result['per_set_targets'])} sets")
    print(f"outputs in {out}")
    return 0


def _cmd_icdm(args) -> int:
    binning = _binning_from(args, None)
    if args.mmrs_vector:
        mmrs = _guard("load", io.read_mmrs_vector, args.mmrs_vector)
        im = _guard("icdm", icdm_from_mmrs, mmrs, binning, per_neighbor=args.per_neighbor)
    else:
        dt = _guard("load", io.read_dt_matrix, args.dt_matrix)
        im = _guard("icdm", icdm_from_dt, dt, binning)
    io.write_icdm(args.out, im)
    return 0


def _cmd_compare(args) -> int:
    report = run_compare(args.files, args.truth)
    print(format_compare(report))
    if args.json:
        io.write_json(args.json, report)
    return 0


def _cmd_report(args) -> int:
    report = run_report(args.run_dir, args.truth, args.dt)
    if report.get("pairs"):
        print(format_compare(report))
    print(f"report written to {args.run_dir / 'report.json'}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "simulate": _cmd_simulate,
        "bin": _cmd_bin,
        "fuse-mmrs": lambda a: _cmd_fuse(a, run_mmrs_dt),
        "fuse-dt": lambda a: _cmd_fuse(a, run_dt_mmrs),
        "icdm": _cmd_icdm,
        "compare": _cmd_compare,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except StageError as exc:
        print(f"icdm {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (CliError, FileNotFoundError, io.FormatError, ValueError, KeyError) as exc:
        print(f"icdm {args.command}: error: [{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
