import json

import pandas as pd
import pytest

from app.components.runner import RunConfig, verify_document
from app.main import main
from app.utils.errors import (
    CollisionError,
    SingularJacobianError,
    SpecParseError,
    SpecValidationError,
    VerificationError,
)
from app.utils.rg_core import DickeSpec, Frame, ModelSpec, RapiditySet, rg_residual
from app.utils.spec_parser import emit_spec, parse_spec, parse_spec_text, with_overrides

JC_SPEC = """\
# Jaynes-Cummings at resonance
model = dicke
epsilons = [1.0]
spins = [0.5]
G = 0.5
hbar_omega = 1.0
N = 1
"""

RG_SPEC = """\
model = rg
kind = trigonometric
etas = [1, 2, 3, 4]
degeneracies = [2, 2, 2, 2]
g = -0.15
N = 2
"""


@pytest.fixture
def jc_file(tmp_path):
    path = tmp_path / "jc.spec"
    path.write_text(JC_SPEC)
    return path


def test_parse_dicke_spec():
    spec = parse_spec_text(JC_SPEC)
    assert spec == DickeSpec([1.0], [0.5], 0.5, 1.0, 1)


def test_parse_rg_spec():
    spec = parse_spec_text(RG_SPEC)
    assert isinstance(spec, ModelSpec)
    assert spec.levels.spins == (0.5, 0.5, 0.5, 0.5)
    assert spec.coupling_g == -0.15
    assert spec.n_excitations == 2


def test_duplicate_levels():
    text = JC_SPEC.replace("epsilons = [1.0]", "epsilons = [1.0, 1.0]").replace("spins = [0.5]", "spins = [0.5, 0.5]")
    with pytest.raises(SpecValidationError, match="levels must be distinct"):
        parse_spec_text(text)


def test_parse_error_position():
    with pytest.raises(SpecParseError) as info:
        parse_spec_text(JC_SPEC.replace("G = 0.5", "G = half"))
    assert info.value.line == 5
    assert info.value.column == 5
    with pytest.raises(SpecParseError):
        parse_spec_text("model = rg\netas = [1, 2\n")
    with pytest.raises(SpecParseError):
        parse_spec_text(JC_SPEC + "kind = rational\n")


def test_missing_key():
    with pytest.raises(SpecValidationError):
        parse_spec_text(RG_SPEC.replace("g = -0.15\n", ""))


@pytest.mark.parametrize("text", [JC_SPEC, RG_SPEC])
def test_emit_round_trip(text):
    spec = parse_spec_text(text)
    assert parse_spec_text(emit_spec(spec)) == spec
    assert emit_spec(parse_spec_text(emit_spec(spec))) == emit_spec(spec)


def test_overrides():
    spec = with_overrides(parse_spec_text(JC_SPEC), {"G": "0.3", "N": "2", "cutoff": "9"})
    assert spec.coupling_G == 0.3
    assert spec.n_excitations == 2
    with pytest.raises(SpecValidationError):
        with_overrides(spec, {"N": "1.5"})


def test_parse_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_spec(tmp_path / "absent.spec")


def test_run_config_validation():
    with pytest.raises(SpecValidationError):
        RunConfig(mode="solve-dicke", spec_path="x.spec", xi_steps=0)
    with pytest.raises(ValueError):
        RunConfig(mode="nonsense", spec_path="x.spec")
    config = RunConfig(mode="sweep-xi", spec_path="x.spec", xi_steps=20)
    assert config.policy().max_step == pytest.approx(0.05)


def test_solve_dicke_and_verify(jc_file, tmp_path):
    out = tmp_path / "jc.json"
    assert main(["--mode", "solve-dicke", "--spec", str(jc_file), "--out", str(out)]) == 0
    document = json.loads(out.read_text())
    assert document["status"] == "passed"
    energies = sorted(b["energy"] for b in document["branches"])
    assert energies == pytest.approx([0.0, 1.0], abs=1e-10)
    assert all(b["oracle_residual"] < 1e-10 for b in document["branches"])
    rapidities = sorted(b["rapidities"][0][0] for b in document["branches"])
    assert rapidities == pytest.approx([0.5, 1.5], abs=1e-10)
    assert document["completeness"]["unmatched_oracle"] == []
    assert "tolerances" in document["stamp"]

    assert main(["--mode", "verify", "--spec", str(out)]) == 0


def test_tampered_results_fail_verification(jc_file, tmp_path):
    out = tmp_path / "jc.json"
    assert main(["--mode", "solve-dicke", "--spec", str(jc_file), "--out", str(out)]) == 0
    document = json.loads(out.read_text())
    document["branches"][0]["rapidities"][0][0] += 1e-3
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(document))

    report = tmp_path / "report.json"
    assert main(["--mode", "verify", "--spec", str(tampered), "--out", str(report)]) == 3
    failures = json.loads(report.read_text())["failures"]
    assert len(failures) == 1
    assert "equation 0" in failures[0]
    with pytest.raises(VerificationError):
        verify_document(document)


def test_structured_output_is_deterministic(jc_file, tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    for out in (first, second):
        assert main(["--mode", "solve-dicke", "--spec", str(jc_file), "--out", str(out), "--seed", "4"]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_sweep_rg_tabular(tmp_path):
    spec_file = tmp_path / "rg.spec"
    spec_file.write_text(RG_SPEC)
    out = tmp_path / "sweep.csv"
    code = main(["--mode", "sweep-xi", "--spec", str(spec_file), "--format", "tabular", "--out", str(out)])
    assert code == 0
    frame = pd.read_csv(out)
    assert frame["xi"].iloc[0] == 0.0
    assert frame["xi"].iloc[-1] == 1.0
    assert frame["xi"].is_monotonic_increasing
    assert frame["max_abs"].iloc[-1] < 1e-10
    assert {"re_0", "im_0", "re_1", "im_1", "iterations"} <= set(frame.columns)


def test_ed_spectrum(jc_file, tmp_path):
    out = tmp_path / "spectrum.csv"
    code = main(["--mode", "ed-spectrum", "--spec", str(jc_file), "--boson-cutoff", "3", "--format", "tabular", "--out", str(out)])
    assert code == 0
    frame = pd.read_csv(out)
    sector1 = frame[frame["sector"] == 1]["eigenvalue"].tolist()
    assert sector1 == pytest.approx([0.0, 1.0], abs=1e-12)


def test_invalid_input_exit_codes(tmp_path):
    assert main(["--mode", "solve-dicke", "--spec", str(tmp_path / "absent.spec")]) == 1
    bad = tmp_path / "bad.spec"
    bad.write_text("model = dicke\nepsilons = [1.0, 1.0]\nspins = [0.5, 0.5]\nG = 0.5\nhbar_omega = 1\nN = 1\n")
    assert main(["--mode", "solve-dicke", "--spec", str(bad)]) == 1
    rg = tmp_path / "rg.spec"
    rg.write_text(RG_SPEC)
    assert main(["--mode", "solve-dicke", "--spec", str(rg)]) == 1


def test_single_copy_sweep_starts_from_rg_solution(jc_file, tmp_path):
    out = tmp_path / "contraction.json"
    code = main(["--mode", "sweep-xi", "--spec", str(jc_file), "--family", "single_copy_dicke", "--out", str(out)])
    assert code == 0
    document = json.loads(out.read_text())
    trace = document["trace"]
    assert trace[0]["xi"] == 1.0
    assert trace[-1]["xi"] == 0.0
    assert trace[0]["max_abs"] <= 1e-10

    start = document["rg_start"]
    model = parse_spec_text(start["model"])
    assert model.levels.etas[0] == 1e8
    rapidities = RapiditySet(tuple(complex(re, im) for re, im in start["rapidities"]), Frame.RG_ETA)
    assert rg_residual(model, rapidities).max_abs < 1e-9
    assert start["rg_max_abs"] < 1e-9

    end = trace[-1]["rapidities"][0]
    assert min(abs(end[0] - 0.5), abs(end[0] - 1.5)) < 1e-9
    assert document["dicke_match"]["max_gap"] < 1e-6


def test_unknown_override_is_rejected(jc_file):
    assert main(["--mode", "solve-dicke", "--spec", str(jc_file), "--set", "newton_tolerance=1e-12"]) == 1
    assert main(["--mode", "solve-dicke", "--spec", str(jc_file), "--set", "g=0.1"]) == 1
    with pytest.raises(SpecValidationError, match="newton_tolerance"):
        with_overrides(parse_spec_text(JC_SPEC), {"newton_tolerance": "1e-12"})
    with pytest.raises(SpecValidationError):
        RunConfig(mode="solve-dicke", spec_path="x.spec", overrides={"cutof": "9"})


def test_override_seed_reaches_config():
    config = RunConfig(mode="solve-dicke", spec_path="x.spec", overrides={"seed": "5", "newton_tol": "1e-12"})
    assert config.seed == 5
    assert config.newton_tol == 1e-12


@pytest.mark.parametrize("error", [CollisionError("x collide"), SingularJacobianError("singular", condition=1e20)])
def test_solver_failures_exit_as_non_convergence(jc_file, monkeypatch, error):
    def failing_run(config):
        raise error

    monkeypatch.setattr("app.main.run", failing_run)
    assert main(["--mode", "solve-dicke", "--spec", str(jc_file)]) == 2
