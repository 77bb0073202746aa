import json
import subprocess
import sys

import pytest

from ail_lab.cli import main


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def fig2_files(tmp_path, capsys):
    mdp = tmp_path / "fig2.json"
    data = tmp_path / "data.json"
    assert run(["gen-instance", "--kind", "fig2_example", "--out", mdp], capsys)[0] == 0
    assert run(["collect", "--mdp", mdp, "--N", 2, "--seed", 1, "--out", data], capsys)[0] == 0
    return mdp, data


def test_gen_then_eval_expert(fig2_files, capsys):
    mdp, _ = fig2_files
    code, out, _ = run(["eval", "--mdp", mdp, "--policy", "expert"], capsys)
    assert code == 0 and json.loads(out)["gap"] == 0.0


def test_fig2_alias(tmp_path, capsys):
    out = tmp_path / "fig2.json"
    assert run(["gen-instance", "--kind", "fig2", "--out", out], capsys)[0] == 0
    assert json.loads(out.read_text())["metadata"]["kind"] == "fig2_example"


def test_reproduce_t7_writes_two_rows(tmp_path, capsys):
    out = tmp_path / "t7.csv"
    code, _, _ = run(["reproduce", "t7", "--out", out], capsys)
    assert code == 0
    lines = out.read_bytes().decode().split("\r\n")
    assert [l.split(",")[0] for l in lines if l][1:] == ["reference", "reproduced"]


def test_reproduce_tolerance_failure_exits_3(capsys):
    code, _, err = run(["reproduce", "t3", "--seeds", 1, "--iterations", 2], capsys)
    assert code == 3 and "tvail_ogd" in err


def test_config_errors_exit_2(tmp_path, capsys):
    assert run(["train", "--config", tmp_path / "missing.json"], capsys)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["run", "--config", bad], capsys)[0] == 2
    assert run(["gen-instance", "--kind", "rbas", "--num-states", 1], capsys)[0] == 2


def test_usage_errors_exit_2(capsys):
    code, _, err = run(["bogus"], capsys)
    assert code == 2 and "usage" in err
    assert run(["reproduce", "t99"], capsys)[0] == 2


def test_train_eval_roundtrip(fig2_files, tmp_path, capsys):
    mdp, data = fig2_files
    cfg = tmp_path / "bc.json"
    cfg.write_text(json.dumps({"algo": "tvail_ogd", "T": 300}))
    pol = tmp_path / "pi.json"
    trace = tmp_path / "trace.csv"
    code, _, _ = run(["train", "--config", cfg, "--mdp", mdp, "--data", data,
                      "--out", pol, "--trace", trace], capsys)
    assert code == 0
    assert trace.read_text().startswith("iter,loss,f_value,eta")
    code, out, _ = run(["eval", "--mdp", mdp, "--policy", pol, "--format", "csv"], capsys)
    assert code == 0 and out.startswith("expert_value,learner_value,gap")


def test_collect_csv(fig2_files, capsys):
    mdp, _ = fig2_files
    code, out, _ = run(["collect", "--mdp", mdp, "--N", 3, "--format", "csv"], capsys)
    assert code == 0
    lines = out.strip().split("\r\n")
    assert lines[0] == "trajectory,step,state,action" and len(lines) == 1 + 3 * 2


def test_audit_bounds(fig2_files, capsys):
    mdp, data = fig2_files
    code, out, _ = run(["audit-bounds", "--mdp", mdp, "--data", data, "--policy",
                        "expert"], capsys)
    assert code == 0 and out.startswith("bound,value,realized")


def test_risk_study(capsys):
    code, out, _ = run(["risk-study", "--support", 100, "--N", 10, "--replications",
                        200, "--seed", 3], capsys)
    assert code == 0 and json.loads(out)["mean_risk"] > 0.3


def test_run_config(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "instance": {"kind": "rbas", "num_states": 4}, "N": [1], "H": [3],
        "learners": [{"algo": "bc"}, {"algo": "expert"}], "num_seeds": 2}))
    first = run(["run", "--config", cfg, "--seed", 5], capsys)
    second = run(["run", "--config", cfg, "--seed", 5], capsys)
    assert first[0] == 0 and first[1] == second[1]
    assert first[1].startswith("instance,learner,N,H,mean_gap")


def test_outputs_are_byte_deterministic(tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert run(["gen-instance", "--kind", "rbas", "--num-states", 6, "--horizon", 4,
                    "--seed", 2, "--out", p], capsys)[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ail_lab.cli", "reproduce", "t7"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("row,")
