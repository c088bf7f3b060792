import json
import subprocess
import sys

import pytest

from debit.cli import build_params, main, parse_power, parse_ratio, read_config_file
from debit.model import dbm_to_watts


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_units():
    assert parse_power("30dBm") == pytest.approx(1.0)
    assert parse_power("-40 dBm") == pytest.approx(1e-7)
    assert parse_power("0.5W") == 0.5 and parse_power("2") == 2.0
    assert parse_ratio("10dB") == pytest.approx(10.0) and parse_ratio("3") == 3.0


def test_config_file_and_overrides(tmp_path):
    f = tmp_path / "net.cfg"
    f.write_text("# network\nnum_users = 6\nuser_power = 27dBm   # half a watt\npapr_db = 3\n")
    values = read_config_file(f)
    p = build_params(values)
    assert p.num_users == 6 and p.user_power[0] == pytest.approx(dbm_to_watts(27))
    assert p.relay_power == pytest.approx(6 * dbm_to_watts(27))
    assert p.peak_power == pytest.approx(dbm_to_watts(27) * 10 ** 0.3)


def test_solve_json_is_deterministic(tmp_path, capsys):
    argv = ["solve", "--problem", "p2", "--users", "8", "--target-harvest-dbm", "-12", "--seed", "7"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    code, out, _ = run(argv + ["--out", str(a)], capsys)
    assert code == 0 and "dBm" in out and "bits/s/Hz" in out
    assert run(argv + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["solution"]["feasible"] and doc["params"]["num_users"] == 8
    assert doc["harvested_dbm"] == pytest.approx(-12.0, abs=1e-9)


def test_solve_infeasible_exit_code(capsys):
    code, out, _ = run(["solve", "--problem", "p2", "--users", "4", "--target-harvest-dbm", "0"], capsys)
    assert code == 2 and "reason" in out


@pytest.mark.parametrize("argv", [
    ["solve", "--problem", "p7"],
    ["solve", "--problem", "p1", "--users", "12"],
    ["solve", "--problem", "p2", "--user-power", "lots"],
    ["experiment"],
    ["experiment", "--preset", "fig2", "--config", "x.cfg"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as e:
        raise SystemExit(main(argv))
    assert e.value.code == 64


def test_bounds_output(capsys):
    code, out, _ = run(["bounds", "--users", "16", "--target-harvest-dbm", "-12"], capsys)
    assert code == 0
    assert "average sum-rate lower bound" in out and "3.272326249" in out
    assert "limit with relay budget K P" in out


def write_cfg(path):
    path.write_text("kind = rate-energy-region\nsweep_variable = harvest_dbm\n"
                    "sweep_values = -20, -14\nschemes = p2, baseline\nnum_users = 4\n"
                    "trials = 4\nseed = 2\n")


def test_experiment_outputs(tmp_path, capsys):
    cfg = tmp_path / "small.cfg"
    write_cfg(cfg)
    code, out, _ = run(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 0
    raw = (tmp_path / "o" / "small_p2.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "sweep_value,mean,stderr,trials,feasible_fraction"
    assert [l.split(",")[0] for l in lines[1:]] == ["-20", "-14"]
    m = json.loads((tmp_path / "o" / "small_manifest.json").read_text())
    assert m["end"] and m["seed"] == 2 and m["config"]["trials"] == 4
    assert set(m["outputs"]) == {"p2", "baseline"}
    assert m["config"]["params"]["num_users"] == 4


def test_experiment_workers_byte_identical(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "small.cfg"
    write_cfg(cfg)
    assert main(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path / "w1"),
                 "--workers", "1"]) == 0
    monkeypatch.setenv("DEBIT_WORKERS", "2")
    # the environment supplies the default worker count
    from debit.cli import build_parser
    assert build_parser().parse_args(["experiment", "--preset", "fig2"]).workers == 2
    assert main(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path / "w2"),
                 "--workers", "2"]) == 0
    for s in ("p2", "baseline"):
        assert (tmp_path / "w1" / f"small_{s}.csv").read_bytes() == \
            (tmp_path / "w2" / f"small_{s}.csv").read_bytes()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "debit.cli", "solve", "--problem", "p4", "--users", "4",
                        "--target-sum-rate", "1"], capture_output=True, text=True)
    assert r.returncode == 0 and "feasible     True" in r.stdout
