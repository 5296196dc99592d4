import csv
import json

import numpy as np
import pytest

from icqse.cli import main
from icqse.errors import ConfigError
from icqse.pipeline import ExperimentConfig, RunReport, dataset_seed, detune_for, emit_plot_data, run_pipeline
from icqse.statesim import ShadowDataset

SMALL = {"n_qubits": 6, "g_values": [-0.5, 0.5], "n_configs": 512, "shots": 4, "seed": 3,
         "methods": ["krylov"], "eps_ratio": 0.25, "eps_sweep_ratios": [0.02, 0.1, 0.3]}

RECORD_FIELDS = {"g", "n_qubits", "dataset_sha256", "detune", "selected", "unmitigated", "eps_max", "methods",
                 "eps_sweep", "exact", "traces"}
METHOD_FIELDS = {"label", "subspace", "dataset_sha256", "c_opt", "energy", "iterations", "hit_iteration_cap",
                 "diagnostic", "observables", "gevp"}


def write_config(path, **changes):
    cfg = {**SMALL, "output_dir": str(path / "run"), **changes}
    p = path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert main(["run", "--config", str(write_config(d))]) == 0
    return d / "run"


def test_run_writes_report_and_csvs(small_run):
    report = RunReport.load(small_run / "report.json")
    assert len(report.records) == 2
    for rec in report.records:
        assert RECORD_FIELDS <= set(rec)
        m = rec["methods"]["krylov"]
        assert METHOD_FIELDS <= set(m)
        assert len(m["c_opt"]) == 2 and m["subspace"] == ["I", "H"]
        assert not m["diagnostic"]
        assert m["energy"]["std_error"] <= rec["eps_max"] / rec["n_qubits"] * (1 + 1e-9)
        assert m["energy"]["value"] <= rec["unmitigated"]["energy"]["value"] + 1e-12
        assert set(m["observables"]) == {"sx", "szy"}
        points = rec["eps_sweep"]["points"]
        assert [p["eps_ratio"] for p in points] == [0.02, 0.1, 0.3]
        # too small a budget: the start point is reported as infeasible and kept
        assert not points[0]["feasible"] and points[0]["c_opt"] == [1.0, 0.0]
        assert rec["exact"]["energy_density"] == pytest.approx(-2.5)
    assert report.trace_total == sum(sum(r["traces"].values()) for r in report.records)
    assert report.trace_total > 0
    assert set(report.wall_times) == {"g=-0.5", "g=0.5"}


def test_csv_schemas(small_run):
    expected = {
        "energy.csv": ["g", "method", "value", "err", "n_samples"],
        "order_parameters.csv": ["g", "observable", "method", "value", "err", "exact", "theory"],
        "eps_sweep.csv": ["g", "method", "eps_ratio", "eps_max", "value", "err", "snr", "feasible"],
        "gevp.csv": ["g", "method", "discard", "pseudoeigenvalue"],
    }
    for name, header in expected.items():
        rows = read_csv(small_run / "plot_data" / name)
        assert rows[0] == header and len(rows) > 1
        assert all(len(r) == len(header) for r in rows)
    energy = read_csv(small_run / "plot_data" / "energy.csv")
    assert {r[1] for r in energy[1:]} == {"unmitigated", "krylov", "exact"}


def test_report_subcommand_regenerates_csvs(small_run, tmp_path):
    assert main(["report", "--report", str(small_run / "report.json"), "--out-dir", str(tmp_path)]) == 0
    for name in ("energy.csv", "gevp.csv"):
        assert (tmp_path / name).read_bytes() == (small_run / "plot_data" / name).read_bytes()


def test_identical_runs_are_byte_identical(tmp_path):
    cfg = {**SMALL, "g_values": [0.5], "n_configs": 256}
    reports = []
    for name in ("a", "b"):
        d = tmp_path / name
        reports.append(run_pipeline(ExperimentConfig.from_dict({**cfg, "output_dir": str(d)})))
    assert reports[0].to_json(wall_times=False) == reports[1].to_json(wall_times=False)
    assert reports[0].config_hash == reports[1].config_hash


def test_config_hash_tracks_semantic_fields():
    base = ExperimentConfig.from_dict(SMALL)
    assert ExperimentConfig.from_dict({**SMALL, "output_dir": "elsewhere"}).config_hash() == base.config_hash()
    for change in ({"seed": 4}, {"n_configs": 513}, {"depolarizing_p": 0.1}, {"methods": ["krylov", "krylov+"]},
                   {"g_values": [-0.5]}):
        assert ExperimentConfig.from_dict({**SMALL, **change}).config_hash() != base.config_hash()


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, "unknown": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, "methods": ["gevp"]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, "n_configs": 20})


def test_detune_points_toward_transition():
    assert detune_for(0.9, 0.15) == -0.15 and detune_for(-0.9, 0.15) == 0.15
    assert dataset_seed(3, 0) != dataset_seed(3, 1)


def test_gen_shadows_from_config_matches_pipeline(small_run, tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "d.icqs"
    assert main(["gen-shadows", "--config", str(cfg), "--g", "0.5", "--out", str(out)]) == 0
    report = RunReport.load(small_run / "report.json")
    assert ShadowDataset.load(out).digest() == report.records[1]["dataset_sha256"]


@pytest.fixture(scope="module")
def shadows(tmp_path_factory):
    d = tmp_path_factory.mktemp("shadows")
    path = d / "s.icqs"
    assert main(["gen-shadows", "-n", "6", "--g", "-0.5", "--detune", "0.15", "--depolarizing", "0.1",
                 "--n-configs", "1024", "--shots", "4", "--seed", "5", "--out", str(path)]) == 0
    return path


def test_exact_subcommand(tmp_path):
    out = tmp_path / "e.json"
    assert main(["exact", "-n", "6", "--g", "0.5", "--k", "2", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["energy_density"] == -2.5 and len(data["energies"]) == 2
    assert data["couplings"] == {"g_zz": 1.5, "g_x": 2.25, "g_zxz": 0.25}
    assert {"sx_exact", "szy_exact"} <= set(data)


def test_select_then_solve_custom(shadows, tmp_path):
    sel = tmp_path / "sel.txt"
    assert main(["select-paulis", "--shadows", str(shadows), "--g", "-0.5", "--pool-size", "10",
                 "--weights", "1,2", "--top-k", "2", "--out", str(sel)]) == 0
    lines = sel.read_text().splitlines()
    assert lines[:2] == ["I", "H"] and len(lines) <= 6
    out = tmp_path / "solve.json"
    assert main(["solve", "--shadows", str(shadows), "--g", "-0.5", "--subspace", f"custom:{sel}",
                 "--observables", "sx,szy", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["subspace"]["operators"][:2] == ["I", "H"]
    assert len(data["c_opt"]) == len(lines)
    assert data["energy_density"]["value"] <= data["unmitigated"]["value"] + 1e-12
    assert set(data["observables"]) == {"sx", "szy"} and data["trace_counter"] > 0


def test_regularize_and_landscape(shadows, tmp_path):
    reg = tmp_path / "reg.csv"
    assert main(["regularize", "--shadows", str(shadows), "--g", "-0.5", "--out", str(reg)]) == 0
    rows = read_csv(reg)
    assert rows[0] == ["discard", "pseudoeigenvalue", "smallest_kept_sv"] and len(rows) == 3
    land = tmp_path / "land.csv"
    assert main(["landscape", "--shadows", str(shadows), "--g", "-0.5", "--points", "5", "--range=-1,1",
                 "--out", str(land)]) == 0
    rows = read_csv(land)
    assert rows[0] == ["c0", "c1", "value", "err"] and len(rows) == 26
    assert np.isnan(float(rows[13][2]))


def test_exit_codes(tmp_path, shadows, capsys):
    assert main(["gen-shadows", "--g", "0.5", "--out", str(tmp_path / "x")]) == 2
    assert main(["exact", "-n", "40", "--g", "0.5"]) == 4
    assert main(["solve", "--shadows", str(tmp_path / "missing.icqs"), "--g", "0.5"]) == 2
    assert main(["solve", "--shadows", str(shadows), "--g", "0.5", "--eps-ratio", "1e-9"]) == 0
    (tmp_path / "bad.json").write_text("{}")
    assert main(["report", "--report", str(tmp_path / "bad.json")]) == 2
    assert "icqse: error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["no-such-command"])


def test_report_round_trip(small_run, tmp_path):
    report = RunReport.load(small_run / "report.json")
    report.save(tmp_path / "r.json")
    assert RunReport.load(tmp_path / "r.json").to_json() == report.to_json()
    paths = emit_plot_data(report, tmp_path / "pd")
    assert sorted(p.name for p in paths) == ["energy.csv", "eps_sweep.csv", "gevp.csv", "order_parameters.csv"]
