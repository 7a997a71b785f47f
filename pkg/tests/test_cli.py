import json
import math
import subprocess
import sys

import pytest

from srblab.cli import DEFAULTS, main, resolve_config

SMALL = {
    "check": ["--set", "g3_terms=200", "--set", "branches=20", "--set", "points_per_post=8"],
    "itinerary": ["--set", "n=6", "--set", "z=[0.3141, 0.2718]"],
    "manifold": ["--set", "past=[1,2,1,2,2,1,1,2,1,2,1,1]", "--set", "grid=33"],
    "distortion": ["--set", "depths=[2,4]", "--set", "points=16"],
    "srb-birkhoff": ["--set", "seeds=8", "--set", "n=2000", "--set", "m=8", "--set", "burn_in=10"],
    "srb-pushforward": ["--set", "past=[1,2,2,1,2,1,1,2]", "--set", "n=500", "--set", "points=64",
                        "--set", "m=8"],
    "holonomy": ["--set", "pairs=200", "--set", "depth=4"],
    "entropy": ["--route", "derivative", "--set", "seeds=4", "--set", "n=1000"],
}
DATA_FILE = {"check": "margins.csv", "itinerary": "orbit.csv", "manifold": "curve.csv",
             "distortion": "distortion.csv", "srb-birkhoff": "histogram.csv",
             "srb-pushforward": "histogram.csv", "holonomy": "holonomy.csv", "entropy": "entropy.csv"}


def run_cli(tmp_path, command, *extra, name="out"):
    out = tmp_path / name
    code = main([command, "--out", str(out), *SMALL.get(command, []), *extra])
    summary = json.loads((out / "summary.json").read_text())
    return code, summary, out


@pytest.mark.parametrize("command", list(SMALL))
def test_every_subcommand_runs(tmp_path, command):
    code, summary, out = run_cli(tmp_path, command, "--family", "lueroth")
    assert code == 0, summary.get("error")
    assert summary["status"] == "ok" and summary["exit_code"] == 0
    assert summary["config"]["command"] == command
    assert set(summary["config"]["params"]) == set(DEFAULTS[command])
    assert DATA_FILE[command] in summary["files"]
    lines = (out / DATA_FILE[command]).read_bytes().split(b"\n")
    assert lines[0].startswith(b"# ")
    assert b"\r" not in b"".join(lines) and lines[-1] == b""


def test_check_baker_margins_pass_through(tmp_path):
    code, summary, _ = run_cli(tmp_path, "check", "--family", "baker", "--map-param", "K0=2")
    assert code == 0
    m = summary["result"]["margins"]
    assert m["H1"]["value"] == 0.75 and m["H2"]["value"] == 0.0
    assert m["H3"]["value"] == 0.75 and m["H4"]["value"] == 0.0
    assert summary["result"]["g3"]["partial_sum"] == pytest.approx(math.log(2), abs=1e-12)


def test_check_exit_code_on_failing_conditions(tmp_path):
    code, summary, _ = run_cli(tmp_path, "check", "--family", "baker", "--map-param", "K0=2.5")
    assert code == 1
    assert summary["status"] == "conditions_failed"
    assert set(summary["result"]["failing"]) >= {"H2", "H4"}


def test_module_error_has_code(tmp_path):
    code, summary, _ = run_cli(tmp_path, "itinerary", "--family", "lueroth", "--map-param", "N_max=5",
                               "--set", "z=[0.01, 0.5]")
    assert code == 2
    assert summary["error"]["code"] == "TAIL_TRUNCATED"


def test_boundary_hit_is_reported_not_failed(tmp_path):
    code, summary, _ = run_cli(tmp_path, "itinerary", "--set", "z=[0.5, 0.3]")
    assert code == 0
    assert summary["result"]["boundary_hit"] == 0 and summary["result"]["symbols"] is None


def test_invalid_parameter_maps_to_error_code(tmp_path):
    code, summary, _ = run_cli(tmp_path, "srb-birkhoff", "--set", "m=0")
    assert code == 2 and summary["error"]["code"] == "CONFIG_INVALID"


def test_config_file_and_unknown_keys(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"family": {"family": "baker"}, "params": {"bogus": 1}}))
    out = tmp_path / "bad"
    assert main(["itinerary", "--config", str(cfg), "--out", str(out)]) == 2
    doc = json.loads((out / "summary.json").read_text())
    assert doc["error"]["code"] == "CONFIG_INVALID"


def test_unknown_family_key_is_rejected(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"family": {"family": "baker", "N": 3}}))
    out = tmp_path / "fam"
    assert main(["itinerary", "--config", str(cfg), "--out", str(out)]) == 2
    assert json.loads((out / "summary.json").read_text())["error"]["code"] == "CONFIG_INVALID"


def test_config_file_values_are_used(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"family": {"family": "baker"}, "params": {"z": [0.3, 0.42], "n": 5},
                               "seed": 3}))
    out = tmp_path / "good"
    assert main(["itinerary", "--config", str(cfg), "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["config"]["seed"] == 3
    assert doc["result"]["symbols"] == [1, 2, 1, 1, 2]


def test_resolve_config_fills_defaults():
    cfg = resolve_config({}, "holonomy")
    assert cfg["params"] == DEFAULTS["holonomy"]
    assert cfg["family"]["family"] == "baker" and cfg["seed"] == 0 and cfg["threads"] == 1


@pytest.mark.parametrize("command", ["srb-birkhoff", "srb-pushforward", "entropy"])
def test_repeated_runs_are_byte_identical(tmp_path, command):
    _, _, a = run_cli(tmp_path, command, "--family", "perturbed_lueroth", "--seed", "5", name="a")
    _, _, b = run_cli(tmp_path, command, "--family", "perturbed_lueroth", "--seed", "5", name="b")
    for f in ("summary.json", DATA_FILE[command]):
        ta = (a / f).read_text().replace(str(a), "OUT")
        tb = (b / f).read_text().replace(str(b), "OUT")
        assert ta == tb


def test_thread_count_does_not_change_numbers(tmp_path, monkeypatch):
    _, s1, a = run_cli(tmp_path, "srb-birkhoff", "--threads", "1", name="t1")
    monkeypatch.setenv("SRBLAB_THREADS", "3")
    _, s3, b = run_cli(tmp_path, "srb-birkhoff", name="t3")
    assert s3["config"]["threads"] == 3
    assert s1["result"] == s3["result"]
    assert (a / "histogram.csv").read_bytes() == (b / "histogram.csv").read_bytes()


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SRBLAB_THREADS", "many")
    code, summary, _ = run_cli(tmp_path, "itinerary")
    assert code == 2 and summary["error"]["code"] == "CONFIG_INVALID"


def test_entropy_all_routes_on_baker(tmp_path):
    out = tmp_path / "ent"
    code = main(["entropy", "--family", "baker", "--out", str(out), "--set", "seeds=4",
                 "--set", "n=1000", "--set", "cylinder_n=20000", "--set", "integral_n=1000"])
    assert code == 0
    routes = json.loads((out / "summary.json").read_text())["result"]
    assert set(routes) == {"derivative", "directional", "cylinder", "integral"}
    for name, r in routes.items():
        assert r["value"] == pytest.approx(math.log(2), abs=0.02), name
    assert routes["derivative"]["value"] == pytest.approx(math.log(2), abs=1e-12)


def test_console_script_entry_point(tmp_path):
    out = tmp_path / "sub"
    proc = subprocess.run([sys.executable, "-m", "srblab.cli", "itinerary", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "itinerary: ok" in proc.stdout
