import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from chaincheck.cli import main

HOME = str(resources.files("chaincheck").joinpath("data/smart_home.json"))
SCHEMA = json.loads(resources.files("chaincheck").joinpath("data/report.schema.json").read_text())


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_attack(capsys):
    code, out, _ = run(capsys, "check", HOME)
    assert code == 2
    assert "verdict: ATTACK" in out and "trace (3 transitions)" in out


def test_check_json_validates(capsys):
    code, out, _ = run(capsys, "check", HOME, "--format", "json")
    assert out.endswith("}\n") and out.count("\n") == 1
    jsonschema.validate(json.loads(out), SCHEMA)


@pytest.mark.slow
def test_oracle_without_reductions(capsys):
    code, out, _ = run(capsys, "check", HOME, "--engine", "oracle", "--no-group", "--no-prune",
                       "--format", "json")
    assert code == 2 and json.loads(out)["verdict"] == "attack"


def test_privacy_subcommand(capsys):
    code, out, _ = run(capsys, "privacy", HOME, "--format", "json")
    rep = json.loads(out)
    assert code == 2 and rep["mode"] == "privacy"
    assert rep["stats"]["attributes"]["checked"] == 3


def test_unknown_is_exit_3(capsys):
    code, out, _ = run(capsys, "check", HOME, "--no-prune", "--no-group", "--max-states", "2")
    assert code == 3 and "UNKNOWN" in out


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    code, _, err = run(capsys, "check", str(bad))
    assert code == 1 and "syntax error" in err


def test_usage_error_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["check"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_mitigate_then_recheck(tmp_path, capsys):
    out_model = tmp_path / "gated.json"
    code, out, _ = run(capsys, "mitigate", HOME, "--format", "json",
                       "--write-mitigated", str(out_model))
    wl = json.loads(out)
    assert code == 0 and wl["watchlist"]
    code, _, _ = run(capsys, "check", str(out_model))
    assert code == 0


def test_gen_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert run(capsys, "gen", "--seed", "7", "--length", "4", "-o", str(p))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    code, _, _ = run(capsys, "check", str(a))
    assert code == 2


def test_gen_negative_privacy(tmp_path, capsys):
    p = tmp_path / "n.json"
    run(capsys, "gen", "--mode", "privacy", "--negative", "--seed", "1", "-o", str(p))
    assert run(capsys, "privacy", str(p))[0] == 0


def test_bench_csv(tmp_path, capsys):
    csv_path = tmp_path / "bench.csv"
    code, out, _ = run(capsys, "bench", "--sizes", "10,50", "--trials", "2", "--timeout", "2",
                       "-o", str(csv_path))
    lines = csv_path.read_text().splitlines()
    assert code == 0 and lines[0] == "size,trial,engine,phase,millis,verdict"
    assert len(lines) - 1 >= 8
    assert "speedup" in out


def test_watch_subprocess(tmp_path):
    feed = tmp_path / "feed.jsonl"
    feed.write_text('{"temperature": 26}\n{"bogus": 1}\n{"temperature": 45}\n')
    proc = subprocess.run(
        [sys.executable, "-m", "chaincheck", "watch", HOME, "--feed", str(feed),
         "--interval", "0", "--format", "json"],
        capture_output=True, text=True, timeout=120)
    lines = [json.loads(l) for l in proc.stdout.splitlines()]
    reports, summary = lines[:-1], lines[-1]["summary"]
    for r in reports:
        jsonschema.validate(r, SCHEMA)
    assert reports[-1]["watch"]["reason"] == "window-violation"
    assert summary["skipped"] == 1
    assert "unknown attribute" in proc.stderr
    assert proc.returncode == 2


def test_log_level_env(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "chaincheck", "check", HOME],
                          capture_output=True, text=True, env={"CHAINCHECK_LOG": "debug",
                                                               "PATH": ""})
    assert proc.returncode == 2
