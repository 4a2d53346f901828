import json
import shutil

import pytest

from icdm_fusion import io
from icdm_fusion.cli import main
from icdm_fusion.config import load_config, load_manifest
from icdm_fusion.fixtures import toy_three_cell
from icdm_fusion.icdm import im_error

SIM = ["--n-reports", "3000", "--truth-samples", "20000", "--seed", "2"]


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--fixture", "fusion", "--out", str(out), *SIM]) == 0
    return out


@pytest.fixture(scope="module")
def fused(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fused")
    src = ["--mmrs", str(sim_dir / "mmrs.jsonl"), "--dt", str(sim_dir / "dt.jsonl")]
    assert main(["fuse-mmrs", *src, "--out", str(out), "--dump-sp"]) == 0
    assert main(["fuse-dt", *src, "--out", str(out)]) == 0
    return out


def test_simulate_outputs(sim_dir):
    names = set(_files(sim_dir))
    assert {"scenario.json", "mmrs.jsonl", "dt.jsonl", "truth_icdm.csv", "ground_truth.json"} <= names
    summary = json.loads((sim_dir / "ground_truth.json").read_text())
    assert summary["schema"] == 1
    assert summary["n_dt_records"] == len(summary["region_label_per_dt_record"])


def test_simulate_is_byte_identical(sim_dir, tmp_path):
    assert main(["simulate", "--fixture", "fusion", "--out", str(tmp_path), *SIM]) == 0
    assert _files(tmp_path) == _files(sim_dir)


def test_simulate_from_scenario_file(sim_dir, tmp_path):
    assert main(["simulate", "--scenario", str(sim_dir / "scenario.json"), "--out", str(tmp_path), *SIM]) == 0
    assert (tmp_path / "mmrs.jsonl").read_bytes() == (sim_dir / "mmrs.jsonl").read_bytes()


def test_zero_road_scenario(tmp_path, capsys):
    d = toy_three_cell().to_dict()
    d["roads"] = []
    (tmp_path / "s.json").write_text(json.dumps(d))
    assert main(["simulate", "--scenario", str(tmp_path / "s.json"), "--out", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err
    assert "no DT records" in err and "[simulate-dt]" in err


def test_fuse_outputs(fused):
    names = set(_files(fused))
    assert {"mmrs_vector.csv", "dt_matrix.csv", "sp.csv", "clusters.json", "regression.json",
            "reinforced_mmrs.csv", "fusion_mmrs.json", "im_mr.csv", "im_mr_prime.csv",
            "reshaped_dt.csv", "fusion_dt.json", "im_dt.csv", "im_dt_prime.csv"} <= names
    report = json.loads((fused / "fusion_mmrs.json").read_text())
    assert report["omitted_ids"] == ["C1", "C2", "C6"]
    mr = io.read_single_icdm(fused / "im_mr.csv")
    mr2 = io.read_single_icdm(fused / "im_mr_prime.csv")
    assert set(mr2.support()) > set(mr.support())
    targets = json.loads((fused / "fusion_dt.json").read_text())["per_set_targets"]
    assert {"set", "b", "target", "E", "F"} <= set(targets[0])


def test_rerun_from_intermediates(fused, tmp_path):
    args = ["--mmrs-vector", str(fused / "mmrs_vector.csv"), "--dt-matrix", str(fused / "dt_matrix.csv"),
            "--clusters", str(fused / "clusters.json"), "--traffic", str(fused / "regression.json"),
            "--out", str(tmp_path)]
    assert main(["fuse-mmrs", *args]) == 0
    assert main(["fuse-dt", *args]) == 0
    for name in ("im_mr_prime.csv", "im_dt_prime.csv", "reinforced_mmrs.csv", "reshaped_dt.csv"):
        assert (tmp_path / name).read_bytes() == (fused / name).read_bytes(), name


def test_rerun_is_deterministic(sim_dir, fused, tmp_path):
    src = ["--mmrs", str(sim_dir / "mmrs.jsonl"), "--dt", str(sim_dir / "dt.jsonl")]
    assert main(["fuse-dt", *src, "--out", str(tmp_path)]) == 0
    for name in ("clusters.json", "regression.json", "im_dt_prime.csv", "fusion_dt.json"):
        assert (tmp_path / name).read_bytes() == (fused / name).read_bytes(), name


def test_icdm_subcommand_matches_pipeline(fused, tmp_path):
    assert main(["icdm", "--mmrs-vector", str(fused / "reinforced_mmrs.csv"), "--out", str(tmp_path / "a.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (fused / "im_mr_prime.csv").read_bytes()
    assert main(["icdm", "--dt-matrix", str(fused / "reshaped_dt.csv"), "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "b.csv").read_bytes() == (fused / "im_dt_prime.csv").read_bytes()


def test_no_omission_gives_identical_ims(tmp_path):
    assert main(["simulate", "--fixture", "toy-three-cell", "--out", str(tmp_path), *SIM]) == 0
    out = tmp_path / "f"
    assert main(["fuse-mmrs", "--mmrs", str(tmp_path / "mmrs.jsonl"), "--dt", str(tmp_path / "dt.jsonl"),
                 "--out", str(out), "--k", "3"]) == 0
    assert json.loads((out / "fusion_mmrs.json").read_text())["omitted_ids"] == []
    assert (out / "im_mr.csv").read_bytes() == (out / "im_mr_prime.csv").read_bytes()


def test_compare(fused, sim_dir, tmp_path, capsys):
    a = fused / "im_mr.csv"
    assert main(["compare", str(a), str(a), "--json", str(tmp_path / "c.json")]) == 0
    rep = json.loads((tmp_path / "c.json").read_text())
    assert rep["pearson"] == pytest.approx(1.0) and rep["mae"] == 0.0
    three = [str(fused / n) for n in ("im_mr.csv", "im_mr_prime.csv", "im_dt_prime.csv")]
    assert main(["compare", *three, "--truth", str(sim_dir / "truth_icdm.csv"),
                 "--json", str(tmp_path / "d.json")]) == 0
    rep = json.loads((tmp_path / "d.json").read_text())
    assert len(rep["pairs"]) == 3
    truth = io.read_single_icdm(sim_dir / "truth_icdm.csv")
    expected = im_error(io.read_single_icdm(fused / "im_mr_prime.csv"), truth)["mae"]
    assert rep["vs_truth"][1]["mae"] == pytest.approx(expected, abs=1e-15)
    assert "pearson" in capsys.readouterr().out


def test_compare_parse_error(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("serving_id,neighbor_id,probability\nS,A,x\n")
    (tmp_path / "ok.csv").write_text("serving_id,neighbor_id,probability\nS,A,0.1\n")
    assert main(["compare", str(tmp_path / "bad.csv"), str(tmp_path / "ok.csv")]) == 1
    assert "bad.csv:2" in capsys.readouterr().err


def test_report(fused, sim_dir, tmp_path):
    run = tmp_path / "run"
    shutil.copytree(fused, run)
    shutil.copy(sim_dir / "truth_icdm.csv", run)
    assert main(["report", str(run), "--dt", str(sim_dir / "dt.jsonl")]) == 0
    rep = json.loads((run / "report.json").read_text())
    assert len(rep["vs_truth"]) == 4 and "regression" in rep
    cdf = (run / "cir_cdf.csv").read_text().splitlines()
    assert cdf[0] == "neighbor_id,source,cir_db,cumulative_probability"
    assert any(",DT'," in row for row in cdf)
    sets = (run / "dt_sets.csv").read_text().splitlines()
    assert len(sets) - 1 == json.loads((sim_dir / "ground_truth.json").read_text())["n_dt_records"]


def test_bin(sim_dir, fused, tmp_path):
    assert main(["bin", "--mmrs", str(sim_dir / "mmrs.jsonl"), "--dt", str(sim_dir / "dt.jsonl"),
                 "--out", str(tmp_path)]) == 0
    v = io.read_mmrs_vector(tmp_path / "mmrs_vector.csv")
    assert v.total_reports == 3000


def test_stage_named_in_errors(sim_dir, tmp_path, capsys):
    assert main(["fuse-mmrs", "--mmrs", str(tmp_path / "missing.jsonl"), "--dt", str(sim_dir / "dt.jsonl"),
                 "--out", str(tmp_path)]) == 1
    assert "[load]" in capsys.readouterr().err
    assert main(["fuse-mmrs", "--mmrs", str(sim_dir / "mmrs.jsonl"), "--dt", str(sim_dir / "dt.jsonl"),
                 "--out", str(tmp_path), "--k", "100000"]) == 1
    assert "[cluster]" in capsys.readouterr().err
    assert main(["fuse-mmrs", "--mmrs", str(sim_dir / "mmrs.jsonl"), "--dt", str(sim_dir / "dt.jsonl"),
                 "--out", str(tmp_path), "--q-threshold", "12"]) == 1
    assert "q_threshold" in capsys.readouterr().err


def test_config_file(sim_dir, fused, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f"""
[inputs]
mmrs = "{sim_dir / 'mmrs.jsonl'}"
dt = "{sim_dir / 'dt.jsonl'}"
output_dir = "out"

[clustering]
k = 8
seed = 0

[regression]
alpha_enter = 0.05
alpha_remove = 0.10
""")
    c = load_config(cfg)
    assert c.output_dir == tmp_path / "out"
    assert main(["fuse-mmrs", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "im_mr_prime.csv").read_bytes() == (fused / "im_mr_prime.csv").read_bytes()


def test_config_missing_path(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[inputs]\nmmrs = "nope.jsonl"\ndt = "nope2.jsonl"\n')
    assert main(["fuse-dt", "--config", str(cfg)]) == 1
    assert "not found" in capsys.readouterr().err


def test_manifest(sim_dir, tmp_path):
    (tmp_path / "cells.toml").write_text(f"""
[[cell]]
serving_id = "C0"
mmrs = "{sim_dir / 'mmrs.jsonl'}"
dt = "{sim_dir / 'dt.jsonl'}"
""")
    assert len(load_manifest(tmp_path / "cells.toml")) == 1
    assert main(["fuse-mmrs", "--manifest", str(tmp_path / "cells.toml"), "--out", str(tmp_path / "o")]) == 0
    rows = io.read_icdm(tmp_path / "o" / "im_mr_prime.csv")
    assert [r.serving_id for r in rows] == ["C0"]
    assert (tmp_path / "o" / "C0" / "clusters.json").exists()
