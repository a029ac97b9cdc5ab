import json
import math

import pytest

from tracefluct.cli import run
from tracefluct.io import Table, config_hash, emit, read_csv


def test_empty_table_rejected(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        emit(Table([]), tmp_path / "x.csv")


def test_csv_json_roundtrip(tmp_path):
    rows = [{"N": 4, "value": 1 / 3, "flag": True}, {"N": 8, "value": -2.5e-17, "flag": False}]
    t = Table(rows, seed=9, config_hash=config_hash({"a": 1}))
    emit(t, tmp_path / "t.csv")
    emit(t, tmp_path / "t.json", "json")
    from_csv = read_csv(tmp_path / "t.csv")
    from_json = json.loads((tmp_path / "t.json").read_text())["rows"]
    assert [c for c in from_csv[0]] == ["N", "value", "flag", "seed", "config_hash"]
    for a, b in zip(from_csv, from_json):
        assert int(a["N"]) == b["N"]
        assert float(a["value"]) == b["value"]
        assert a["seed"] == "9" and b["seed"] == 9
    assert float(from_csv[0]["value"]) == 1 / 3


def test_config_hash_is_order_free():
    assert config_hash({"a": 1, "b": [2]}) == config_hash({"b": [2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def _run(tmp_path, *args):
    out = tmp_path / "out.csv"
    code = run([*args, "--out", str(out)])
    return code, out


def test_reruns_are_byte_identical(tmp_path):
    args = ["clt", "--dist", "rademacher", "--orders", "2", "--N", "4,8", "--reps", "200", "--seed", "3"]
    run([*args, "--out", str(tmp_path / "a.csv")])
    run([*args, "--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_exit_codes(tmp_path):
    assert _run(tmp_path, "remainder", "--dist", "cauchy", "--k", "2", "--N", "3")[0] == 2
    assert _run(tmp_path, "remainder", "--k", "3,2", "--N", "3")[0] == 2
    assert _run(tmp_path, "combinatorics", "--k", "4", "--N", "9", "--budget", "100")[0] == 3
    assert run(["no-such-command"]) == 2


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TRACEFLUCT_OUTPUT_DIR", str(tmp_path / "redirect"))
    assert run(["remainder", "--k", "2", "--N", "3", "--out", "rem.csv"]) == 0
    assert (tmp_path / "redirect" / "rem.csv").exists()
    manifest = json.loads((tmp_path / "redirect" / "rem.csv.manifest.json").read_text())
    assert manifest["command"] == "remainder" and len(manifest["config_hash"]) == 16


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# remainder run\ndist = normal\norders = 2\nN = 5\n")
    code, out = _run(tmp_path, "remainder", "--config", str(cfg))
    assert code == 0
    assert read_csv(out)[0]["variance"] == "2/5"
    code, out = _run(tmp_path, "remainder", "--config", str(cfg), "--dist", "rademacher")
    assert read_csv(out)[0]["variance"] == "0"


def test_clt_example(tmp_path):
    code, out = _run(tmp_path, "clt", "--dist", "rademacher", "--orders", "2,3", "--N", "16,32,64",
                     "--reps", "10000", "--seed", "7")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 6
    for r in rows:
        assert abs(float(r["variance"]) - float(r["exact_variance"])) <= 4 * float(r["variance_stderr"])
    # exact variances approach k
    for k in (2, 3):
        gaps = [abs(float(r["exact_variance"]) - k) for r in rows if r["k"] == str(k)]
        assert gaps == sorted(gaps, reverse=True)


def test_combinatorics_example(tmp_path):
    code, out = _run(tmp_path, "combinatorics", "--k", "3", "--N", "2..6")
    assert code == 0
    rows = read_csv(out)
    assert {r["N"] for r in rows} == {"2", "3", "4", "5", "6"}
    assert all(r["within_theta"] == "true" for r in rows)


def test_oracle_check_example(tmp_path):
    code, out = _run(tmp_path, "oracle-check", "--dist", "normal", "--k", "2", "--N", "3",
                     "--reps", "100000", "--seed", "1", "--statistic", "covariance")
    assert code == 0
    row = read_csv(out)[0]
    assert row["within_4se"] == "true"
    assert math.isclose(float(row["exact"]), 2.0)


def test_json_output(tmp_path):
    out = tmp_path / "r.json"
    assert run(["remainder", "--k", "2", "--N", "4", "--dist", "normal", "--out", str(out),
                "--format", "json"]) == 0
    data = json.loads(out.read_text())
    assert data["rows"][0]["variance"] == "1/2"
