import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from emcalc import cli
from emcalc.io import digest, load_json, validate_report

ROOT = Path(__file__).resolve().parents[1]

FIXTURE_COMMANDS = {
    "delay_bridge": "icap", "geometric_bridge": "icap", "k4_gate": "gate",
    "lens_16_4": "forcing", "protocol_biased": "protocol-audit", "protocol_trap": "protocol-audit",
    "reversible_flip": "sigma", "route_exact": "route", "strobe_pair": "strobe",
    "three_cycle": "affinity", "three_cycle_dpi": "dpi", "two_block_reveals": "defect",
    "two_triangles": "affinity", "zeno_doubling": "zeno", "zeno_harmonic": "zeno",
    "zeno_table": "zeno",
}


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def test_every_fixture_has_a_command(fixtures_dir):
    assert {p.stem for p in fixtures_dir.glob("*.json")} == set(FIXTURE_COMMANDS)


@pytest.mark.parametrize("stem", sorted(FIXTURE_COMMANDS))
def test_fixture_reports_validate(capsys, fixtures_dir, stem):
    cmd = FIXTURE_COMMANDS[stem]
    path = fixtures_dir / f"{stem}.json"
    r = report(capsys, cmd, str(path))
    validate_report(cmd, r)
    assert r["report"] == cmd and r["schema"] == f"emcalc.{cmd}.v1"
    assert r["manifest"]["input_digest"] == digest(load_json(path))
    assert r["status"] == "pass"


class TestGolden:
    def test_affinity(self, capsys, fixtures_dir):
        r = report(capsys, "affinity", str(fixtures_dir / "three_cycle.json"))
        assert r["beta1"] == 1 and not r["exact"]
        assert len(r["affinities"]) == 1
        assert abs(abs(r["affinities"][0]) - 3 * math.log(3.5)) <= 1e-12

    def test_forcing(self, capsys):
        r = report(capsys, "forcing", "--n", "16", "--k", "4")
        assert r["exact_dyadic"] == "2^-12"
        assert abs(r["p_definable"] - 2.44e-4) <= 5e-7

    def test_forcing_mc_seeded(self, capsys):
        a = report(capsys, "forcing", "--n", "6", "--k", "3", "--mc", "100000", "--seed", "1")
        assert a["monte_carlo"]["hits"] == 12468 and a["manifest"]["seed"] == 1

    def test_sigma_reversible(self, capsys, fixtures_dir):
        r = report(capsys, "sigma", str(fixtures_dir / "reversible_flip.json"),
                   "--rho", "uniform", "--T", "3")
        assert r["value"] == 0.0 and not r["infinite"]

    def test_sigma_rho_file(self, capsys, fixtures_dir, tmp_path):
        rho = tmp_path / "rho.json"
        rho.write_text(json.dumps({"weights": [0.2, 0.3, 0.5]}))
        r = report(capsys, "sigma", str(fixtures_dir / "three_cycle.json"), "--rho", str(rho))
        assert r["value"] > 0

    def test_gate_lowers_rank(self, capsys, fixtures_dir):
        r = report(capsys, "gate", str(fixtures_dir / "k4_gate.json"))
        assert r["status"] == "pass"

    def test_zeno(self, capsys, fixtures_dir):
        r = report(capsys, "zeno", str(fixtures_dir / "zeno_harmonic.json"))
        assert r["decision"]["verdict"] == "diverges"
        r = report(capsys, "zeno", str(fixtures_dir / "zeno_doubling.json"))
        assert r["decision"]["verdict"] == "converges"
        assert abs(r["latency"]["t_J"] - 2.0) <= 1e-9


class TestExitCodes:
    def test_missing_file(self, capsys, tmp_path):
        code, out, err = run(capsys, "sigma", str(tmp_path / "nope.json"))
        assert code == 2 and out == ""
        assert json.loads(err)["error"]["code"] == "ParseError"

    def test_bad_json(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert run(capsys, "gap", str(p))[0] == 2

    def test_schema_violation(self, capsys, tmp_path):
        p = tmp_path / "k.json"
        p.write_text(json.dumps({"rows": "oops"}))
        code, _, err = run(capsys, "gap", str(p))
        assert code == 2 and json.loads(err)["error"]["code"] == "SchemaError"

    def test_not_stochastic(self, capsys, tmp_path):
        p = tmp_path / "k.json"
        p.write_text(json.dumps({"rows": [[0.5, 0.6], [0.5, 0.5]]}))
        code, _, err = run(capsys, "gap", str(p))
        assert code == 2
        assert json.loads(err)["error"]["module"] == "kernel_core"

    def test_missing_input(self, capsys):
        assert run(capsys, "gap")[0] == 2

    def test_no_command(self, capsys):
        assert run(capsys)[0] == 2

    def test_audit_failure(self, capsys, fixtures_dir, monkeypatch):
        real = cli.cz.route_mismatch_audit

        def failing(*a):
            return {**real(*a), "pass": False}

        monkeypatch.setattr(cli.cz, "route_mismatch_audit", failing)
        code, out, _ = run(capsys, "route", str(fixtures_dir / "route_exact.json"))
        assert code == 1 and json.loads(out)["status"] == "fail"

    def test_quiet(self, capsys, fixtures_dir):
        code, out, err = run(capsys, "gap", str(fixtures_dir / "reversible_flip.json"), "--quiet")
        assert code == 0 and out == "" and err == ""


class TestOptions:
    def test_json_schema(self, capsys):
        schema = report(capsys, "zeno", "--json-schema")
        assert schema["properties"]["schema"]["const"] == "emcalc.zeno.v1"

    def test_tolerance_profile(self, capsys, tmp_path, monkeypatch):
        p = tmp_path / "k.json"
        p.write_text(json.dumps({"rows": [[0.5, 0.5001], [0.5, 0.5]]}))
        assert run(capsys, "gap", str(p))[0] == 2
        monkeypatch.setenv(cli.PROFILE_ENV, "loose")
        r = report(capsys, "gap", str(p))
        assert r["manifest"]["tolerances"]["row_sum_tol"] == 1e-3

    def test_flag_overrides_profile(self, capsys, fixtures_dir, monkeypatch):
        monkeypatch.setenv(cli.PROFILE_ENV, "strict")
        r = report(capsys, "gap", str(fixtures_dir / "reversible_flip.json"), "--tol-row-sum", "1e-4")
        assert r["manifest"]["tolerances"]["row_sum_tol"] == 1e-4

    def test_unknown_profile(self, capsys, fixtures_dir, monkeypatch):
        monkeypatch.setenv(cli.PROFILE_ENV, "bogus")
        assert run(capsys, "gap", str(fixtures_dir / "three_cycle.json"))[0] == 2


def test_subprocess_byte_identical(fixtures_dir):
    argv = [sys.executable, "-m", "emcalc.cli", "icap", str(fixtures_dir / "geometric_bridge.json"),
            "--seed", "3"]
    a = subprocess.run(argv, capture_output=True, check=True).stdout
    b = subprocess.run(argv, capture_output=True, check=True).stdout
    assert a == b and json.loads(a)["manifest"]["seed"] == 3


def test_reference_doc_is_current():
    doc = (ROOT / "docs" / "CLI.md").read_text()
    assert doc.rstrip("\n") == cli.render_reference().rstrip("\n")
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, sp in sub.choices.items():
        assert f"## {name}" in doc
        for action in sp._actions:
            for flag in action.option_strings:
                assert flag in doc
