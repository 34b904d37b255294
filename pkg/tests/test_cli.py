import csv
import io
import json
import subprocess
import sys

import jsonschema
import pytest

from tandemqbd.cli import ConfigError, load_schema, main, read_config_file

SECOND = ["--lambda", "1", "--mu1", "3", "--mu2", "2"]
FIRST = ["--lambda", "1", "--mu1", "2", "--mu2", "3"]


@pytest.fixture(scope="module")
def validator():
    schema = load_schema()
    jsonschema.Draft202012Validator.check_schema(schema)
    return jsonschema.Draft202012Validator(schema)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(argv, capsys, validator):
    code, out, err = run(argv, capsys)
    doc = json.loads(out)
    validator.validate(doc)
    return code, doc


@pytest.mark.parametrize(
    "argv",
    [
        ["spectral", *SECOND],
        ["spectral", *FIRST, "--capacity", "4"],
        ["sweep-zhat", *FIRST, "--m-max", "8"],
        ["design", *SECOND, "--z", "0.7", "--phase-cap", "60", "--level-cap", "60"],
        ["design", *FIRST, "--kind", "removal", "--z", "0.32", "--phase-cap", "60", "--level-cap", "60"],
        ["validate", "--criteria", "2", "3"],
        ["rmatrix", *SECOND, "--capacity", "3"],
        ["rmatrix", *SECOND, "--phase-cap", "10"],
        ["hitting", *FIRST, "--capacity", "2", "--k-max", "50"],
        ["hitting", *FIRST, "--phase-cap", "20", "--k-max", "50"],
        ["invariant", *SECOND, "--z", "0.7", "--n-terms", "5"],
        ["invariant", *FIRST, "--z", "0.2"],
    ],
)
def test_commands_validate_against_schema(argv, capsys, validator):
    code, doc = run_json(argv, capsys, validator)
    assert code == 0
    assert doc["command"] == argv[0]
    assert doc["schema_version"] == "1.0"


def _numeric_nodes(node, path="#"):
    if isinstance(node, dict):
        t = node.get("type")
        types = t if isinstance(t, list) else [t]
        if "number" in types or "integer" in types:
            yield path, node
        for k, v in node.items():
            yield from _numeric_nodes(v, f"{path}/{k}")
    elif isinstance(node, list):
        for i, v in enumerate(node):
            yield from _numeric_nodes(v, f"{path}/{i}")


def test_schema_numeric_nodes_carry_units():
    nodes = list(_numeric_nodes(load_schema()))
    assert nodes
    missing = [p for p, n in nodes if "x-unit" not in n]
    assert missing == []


def test_spectral_values(capsys, validator):
    _, doc = run_json(["spectral", *SECOND], capsys, validator)
    r = doc["result"]
    assert r["rho1"] == pytest.approx(1 / 3)
    assert r["rho2"] == pytest.approx(0.5)


def test_sweep_csv(capsys):
    code, out, _ = run(["sweep-zhat", *SECOND, "--m-max", "5", "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["m", "zhat", "limit", "limit_name", "gap", "error"]
    assert [int(r["m"]) for r in rows] == [1, 2, 3, 4, 5]
    z = [float(r["zhat"]) for r in rows]
    assert all(b > a for a, b in zip(z, z[1:]))


def test_csv_rejected_for_other_commands(capsys):
    assert run(["spectral", *SECOND, "--format", "csv"], capsys)[0] == 2


def test_validate_failure_exit(capsys):
    code, out, err = run(["validate", "--criteria", "2", "--tol", "0.1"], capsys)
    assert code == 1
    assert "[FAIL] criterion 2" in err
    assert json.loads(out)["result"]["passed"] is False


def test_unstable_exit(capsys):
    assert run(["spectral", "--lambda", "2", "--mu1", "1", "--mu2", "5"], capsys)[0] == 3


def test_infeasible_exit(capsys):
    assert run(["design", *FIRST, "--z", "0.2"], capsys)[0] == 4
    assert run(["design", *FIRST, "--kind", "removal", "--z", "0.9"], capsys)[0] == 4
    assert run(["invariant", *FIRST, "--z", "0.9", "--require-feasible"], capsys)[0] == 4


@pytest.mark.parametrize(
    "argv",
    [
        ["spectral", "--lambda", "1", "--mu1", "3"],
        ["spectral", *SECOND, "--capacity", "zero"],
        ["spectral", *SECOND, "--tol", "-1"],
        ["design", *SECOND],
        ["spectral", "--lambda", "-1", "--mu1", "3", "--mu2", "2"],
    ],
)
def test_bad_config_exit(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_config_file_and_precedence(tmp_path, capsys, validator):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# rates\nlambda = 1\nmu1=3\nmu2 = 2\ncapacity = 2\n")
    _, doc = run_json(["spectral", "--config", str(cfg)], capsys, validator)
    assert doc["config"]["capacity"] == 2
    _, doc = run_json(["spectral", "--config", str(cfg), "--capacity", "inf", "--mu2", "4"], capsys, validator)
    assert doc["config"]["capacity"] == "inf"
    assert doc["config"]["mu2"] == 4.0
    assert doc["config"]["mu1"] == 3.0


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("lambda = 1\ncolour = blue\n")
    with pytest.raises(ConfigError):
        read_config_file(str(bad))
    assert run(["spectral", "--config", str(bad)], capsys)[0] == 2
    assert run(["spectral", "--config", str(tmp_path / "missing.cfg")], capsys)[0] == 2
    noeq = tmp_path / "noeq.cfg"
    noeq.write_text("lambda 1\n")
    assert run(["spectral", "--config", str(noeq)], capsys)[0] == 2


def test_output_file_and_env_dir(tmp_path, monkeypatch, capsys):
    target = tmp_path / "a" / "out.json"
    assert run(["spectral", *SECOND, "--output", str(target)], capsys)[0] == 0
    assert json.loads(target.read_text())["command"] == "spectral"

    envdir = tmp_path / "env"
    monkeypatch.setenv("TANDEMQBD_OUTPUT_DIR", str(envdir))
    assert run(["spectral", *SECOND, "--output", str(target)], capsys)[0] == 0
    assert (envdir / "out.json").exists()
    assert run(["sweep-zhat", *SECOND, "--m-max", "3", "--format", "csv"], capsys)[0] == 0
    assert (envdir / "sweep-zhat.csv").read_text().startswith("m,zhat,")


def test_console_script_entry():
    out = subprocess.run(
        [sys.executable, "-m", "tandemqbd.cli", "spectral", *SECOND],
        capture_output=True, text=True, check=False,
    )
    assert out.returncode == 0
    assert json.loads(out.stdout)["command"] == "spectral"
    bad = subprocess.run([sys.executable, "-m", "tandemqbd.cli", "spectral"], capture_output=True, text=True)
    assert bad.returncode == 2
