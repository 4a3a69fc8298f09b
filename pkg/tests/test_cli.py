import csv
import hashlib
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from glvortex import cli
from glvortex.abrikosov import beta_lattice_sum, scan_grid


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gamma_json(capsys):
    code, out, _ = run(capsys, "gamma", "--tau", "0.5,0.8660254037844386")
    assert code == cli.EXIT_OK
    d = json.loads(out)
    assert d["gamma"] > 0
    assert "argmin_k" in json.dumps(d)


def test_beta_json_matches_library(capsys):
    code, out, _ = run(capsys, "beta", "--tau", "0,1", "--method", "lattice-sum")
    assert code == 0
    assert json.loads(out)["lattice_sum"]["beta"] == beta_lattice_sum(1j).beta


def test_negative_tau_with_equals_sign(capsys):
    code, out, _ = run(capsys, "beta", "--tau=-0.2,1.1", "--method", "lattice-sum")
    assert code == 0


def test_usage_errors_exit_64(capsys):
    assert run(capsys, "gamma", "--bogus", "1")[0] == cli.EXIT_USAGE
    assert run(capsys, "nonsense")[0] == cli.EXIT_USAGE
    assert run(capsys)[0] == cli.EXIT_USAGE
    assert run(capsys, "scan", "--quantity", "delta")[0] == cli.EXIT_USAGE


def test_precondition_errors_exit_2(capsys):
    code, _, err = run(capsys, "gamma", "--tau", "0.5,-1")
    assert code == cli.EXIT_PRECONDITION
    assert "error" in err
    assert run(capsys, "bifurcate", "--b", "1.2")[0] == cli.EXIT_PRECONDITION
    assert run(capsys, "dynamics", "--centers=-1,0;1,0")[0] == cli.EXIT_PRECONDITION


def test_numerical_failure_exits_1(capsys, monkeypatch):
    def boom(p):
        raise RuntimeError("did not converge")

    monkeypatch.setitem(cli.HANDLERS, "gamma", boom)
    code, _, err = run(capsys, "gamma")
    assert code == cli.EXIT_NUMERICAL
    assert "did not converge" in err


def test_unwritable_output_exits_1(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run(capsys, "gamma", "--out", str(blocker / "sub" / "g.json"))[0] == cli.EXIT_NUMERICAL


@pytest.mark.slow
def test_scan_csv_shape(capsys):
    code, out, _ = run(capsys, "scan", "--quantity", "gamma", "--res", "64")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert len(rows) == 1 + 64 * 64
    assert all(len(r) == len(rows[0]) for r in rows)
    taus = [complex(float(r[0]), float(r[1])) for r in rows[1:]]
    assert taus == scan_grid(64)


def test_floats_round_trip_exactly(capsys):
    code, out, _ = run(capsys, "scan", "--quantity", "beta", "--res", "8")
    rows = list(csv.reader(io.StringIO(out)))[1:]
    for r in rows:
        tau = complex(float(r[0]), float(r[1]))
        assert float(r[2]) == beta_lattice_sum(tau).beta or not math.isfinite(float(r[2]))
    assert any(len(r[2].replace("-", "").replace(".", "").split("e")[0]) >= 15 for r in rows)


def test_config_replay_is_identical(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["dynamics", "--centers=-5,0;5,0", "--T", "20", "--dt", "2"]
    assert cli.main(argv + ["--out", str(first), "--save-config", str(cfg)]) == 0
    stored = json.loads(cfg.read_text())
    stored["out"] = str(second)
    cfg.write_text(json.dumps(stored))
    assert cli.main(["--config", str(cfg)]) == 0
    h = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
    assert h(first) == h(second)
    capsys.readouterr()


def test_config_rejects_unknown_parameters(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"subcommand": "gamma", "params": {"zeta": 1}}))
    assert run(capsys, "--config", str(cfg))[0] == cli.EXIT_PRECONDITION
    assert run(capsys, "--config", str(tmp_path / "missing.json"))[0] == cli.EXIT_NUMERICAL


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    code, out, _ = run(capsys, "classify")
    assert code == 0 and out == ""
    d = json.loads((tmp_path / "classify.json").read_text())
    assert d["verdict"] == "stable"


def test_scan_jobs_do_not_change_bytes(capsys):
    a = run(capsys, "scan", "--quantity", "kappa_c", "--res", "12", "--jobs", "1")[1]
    b = run(capsys, "scan", "--quantity", "kappa_c", "--res", "12", "--jobs", "3")[1]
    assert a == b


def test_dict_results_render_as_single_csv_row(capsys):
    code, out, _ = run(capsys, "classify", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows) == 2


@pytest.mark.parametrize("sub", sorted(cli.DEFAULTS))
def test_every_subcommand_has_help(sub, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main([sub, "--help"])
    assert e.value.code == 0
    assert "--out" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "glvortex", "gamma", "--tau", "0,1"], capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["gamma"] > 0


SCHEMAS = Path(__file__).parent.parent / "docs" / "schemas"


@pytest.mark.parametrize("schema,argv", [
    ("profile", ["profile", "--N", "400"]),
    ("critical", ["profile", "--report", "critical", "--kappa", "1", "--N", "400"]),
    ("stability", ["stability", "--N", "400", "--mmax", "2"]),
    ("beta", ["beta"]),
    ("gamma", ["gamma"]),
    ("classify", ["classify"]),
    ("classify", ["classify", "--kappa", "0.5", "--b", "0.2"]),
    ("bifurcate", ["bifurcate"]),
])
def test_json_outputs_match_schemas(schema, argv, capsys):
    jsonschema = pytest.importorskip("jsonschema")
    code, out, _ = run(capsys, *argv)
    assert code == 0
    jsonschema.validate(json.loads(out), json.loads((SCHEMAS / f"{schema}.schema.json").read_text()))


def test_saved_config_matches_schema(tmp_path, capsys):
    jsonschema = pytest.importorskip("jsonschema")
    path = tmp_path / "c.json"
    assert cli.main(["gamma", "--save-config", str(path)]) == 0
    capsys.readouterr()
    jsonschema.validate(json.loads(path.read_text()), json.loads((SCHEMAS / "run_config.schema.json").read_text()))


def test_lowfield_record_matches_schema():
    jsonschema = pytest.importorskip("jsonschema")
    from conftest import TRI, cached_low_field

    d = json.loads(cli.render(cli.Result(cached_low_field(TRI, 1.0, 0.05).to_dict()), "json"))
    jsonschema.validate(d, json.loads((SCHEMAS / "lowfield.schema.json").read_text()))
