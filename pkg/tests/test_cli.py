import json
import xml.etree.ElementTree as ET

import pytest

from snnmem.cli import OUT_ENV, main


def test_resources_text(capsys):
    assert main(["resources", "oscillatory", "15"]) == 0
    out = capsys.readouterr().out
    assert "neurons                30" in out and "stdp_synapses          210" in out


def test_resources_csv(capsys):
    assert main(["resources", "regulated", "15", "--csv"]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    rec = dict(zip(header.split(","), row.split(",")))
    assert rec["neurons"] == "46" and rec["learning_latency"] == "50" and rec["recall_latency"] == "14"
    assert int(rec["static_synapses_full"]) == int(rec["static_synapses"]) + 210


def test_resources_smallest_and_invalid(capsys):
    assert main(["resources", "oscillatory", "2", "--csv"]) == 0
    assert capsys.readouterr().out.splitlines()[1].split(",")[2] == "4"
    assert main(["resources", "oscillatory", "1"]) == 2
    assert main(["resources", "hopfield", "5"]) == 2


def test_run_fig5_orthogonal_writes_outputs(tmp_path, capsys):
    assert main(["run", "fig5_orthogonal", "--out", str(tmp_path), "--svg"]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {f"fig5_orthogonal_{s}" for s in ("report.json", "spikes.csv", "weights.csv", "raster.svg")}
    report = json.loads((tmp_path / "fig5_orthogonal_report.json").read_text())
    assert report["ok"] and [r["recalled"] for r in report["recalls"]] == [[3], [7], [11]]
    assert (tmp_path / "fig5_orthogonal_spikes.csv").read_text().startswith("population,neuron,time_ms\n")
    ET.fromstring((tmp_path / "fig5_orthogonal_raster.svg").read_text())


def test_run_nonorthogonal_merge_passes(tmp_path):
    assert main(["run", "fig4_nonorthogonal", "--out", str(tmp_path)]) == 0


def test_malformed_spec_exits_2_without_outputs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": "regulated", "n": 15, "patterns": [[0, 99]]}))
    out = tmp_path / "out"
    assert main(["run", "fig5_orthogonal", str(bad), "--out", str(out)]) == 2
    assert not out.exists()


def test_recall_mismatch_exits_1(tmp_path):
    spec = tmp_path / "wrong.json"
    spec.write_text(json.dumps({
        "name": "wrong", "model": "regulated", "n": 15, "patterns": [[0, 1, 2, 3]],
        "recalls": [{"cue": [0, 1, 2], "expect": [4]}],
    }))
    assert main(["run", str(spec), "--out", str(tmp_path / "o")]) == 1
    report = json.loads((tmp_path / "o" / "wrong_report.json").read_text())
    assert report["recalls"][0]["missing"] == 1 and report["recalls"][0]["spurious"] == 1


def test_run_without_specs_is_usage_error():
    assert main(["run"]) == 2
    assert main([]) == 2


def test_csv_outputs_are_byte_identical_on_rerun(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "fig4_orthogonal", "--out", str(a)]) == 0
    assert main(["run", "fig4_orthogonal", "--out", str(b)]) == 0
    for name in ("fig4_orthogonal_spikes.csv", "fig4_orthogonal_weights.csv", "fig4_orthogonal_report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert main(["export", "fig5_orthogonal"]) == 0
    assert {p.name for p in (tmp_path / "env").iterdir()} == {"fig5_orthogonal_spikes.csv", "fig5_orthogonal_weights.csv"}


def test_export_bad_spec(tmp_path):
    assert main(["export", "nope", "--out", str(tmp_path)]) == 2


def test_calibrate_orthogonal_writes_fragment(tmp_path, capsys):
    assert main(["calibrate", "fig5_orthogonal", "--bounds", "0 2", "--step", "0.5", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "w_pc_pc_inh_nA,score" in out and "calibrated w_pc_pc_inh" in out
    fragment = json.loads((tmp_path / "fig5_orthogonal_calibration.json").read_text())
    assert fragment["n"] == 15 and 0 <= fragment["config"]["w_pc_pc_inh"] <= 2


@pytest.mark.parametrize("bounds", ["", "3", "2 1", "-1 2", "a b"])
def test_calibrate_bad_bounds_exit_2(tmp_path, bounds):
    assert main(["calibrate", "fig5_orthogonal", "--bounds", bounds, "--out", str(tmp_path)]) == 2
    assert not any(tmp_path.iterdir())


def test_calibrate_rejects_oscillatory_workload(tmp_path):
    assert main(["calibrate", "fig4_orthogonal", "--out", str(tmp_path)]) == 2


def test_calibrate_degenerate_bounds_nonorthogonal_fails(tmp_path, capsys):
    assert main(["calibrate", "fig5_nonorthogonal", "--bounds", "0 0", "--out", str(tmp_path)]) == 1
    assert "0,0" in capsys.readouterr().out
    assert not any(tmp_path.iterdir())
