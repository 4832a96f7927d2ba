import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from robustocp.artifacts import (
    ArtifactError,
    read_decision,
    read_scenario_set,
    write_decision,
    write_scenario_set,
)
from robustocp.cli import main
from robustocp.config import ConfigError, build_problem, list_presets, load_preset, parse_config
from robustocp.core import DecisionVector, Scenario
from robustocp.models import example1_problem
from robustocp.reduction import ScenarioSet

PRESETS = {"building_desk", "building_paper", "compressor_desk", "compressor_paper", "example1"}


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve") / "nested" / "dir"
    code = main(["solve", "--model", "example1", "--out", str(out)])
    return code, out


class TestSolve:
    def test_exit_code_and_files(self, solved):
        code, out = solved
        assert code == 0
        for name in ("decision.json", "scenarios.json", "history.csv", "summary.json", "run.log"):
            assert (out / name).is_file()

    def test_history_ends_robust(self, solved):
        _, out = solved
        rows = list(csv.DictReader((out / "history.csv").open()))
        assert float(rows[-1]["g_max"]) <= 1e-6
        first_d = float(rows[0]["worst_d"])
        assert abs(first_d - 0.195) <= 0.01

    def test_scenario_file_contains_interior_worst_case(self, solved):
        _, out = solved
        H = read_scenario_set(out / "scenarios.json", example1_problem())
        assert any(abs(s.d[0] - 0.195) <= 0.01 for s in H)

    def test_summary(self, solved):
        _, out = solved
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "success" and summary["model"] == "example1"
        assert summary["reduction"]["epsilon"] == 1e-8

    def test_run_log_has_iterations(self, solved):
        _, out = solved
        assert "iter 1: G_max" in (out / "run.log").read_text()

    def test_deterministic_outputs(self, solved, tmp_path):
        _, out = solved
        assert main(["solve", "--model", "example1", "--out", str(tmp_path)]) == 0
        for name in ("decision.json", "scenarios.json"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()
        strip = lambda p: [{k: v for k, v in r.items() if k != "elapsed_s"} for r in csv.DictReader(p.open())]
        assert strip(tmp_path / "history.csv") == strip(out / "history.csv")

    def test_iteration_limit_exit_code(self, tmp_path):
        assert main(["solve", "--model", "example1", "--max-iter", "1", "--out", str(tmp_path)]) == 2
        assert json.loads((tmp_path / "summary.json").read_text())["status"] == "max_iterations"

    def test_stall_exit_code(self, tmp_path):
        assert main(["solve", "--model", "example1", "--epsilon", "10", "--out", str(tmp_path)]) == 2


class TestValidateAndWorstCase:
    def test_round_trip_into_validate(self, solved, tmp_path):
        _, out = solved
        code = main(["validate", "--model", "example1", "--decision", str(out / "decision.json"), "--out", str(tmp_path)])
        assert code == 0
        summary = json.loads((tmp_path / "validation_summary.json").read_text())
        assert summary["n_samples"] == 10_000 and summary["max_violation"] <= 1e-6

    def test_round_trip_into_worst_case(self, solved, tmp_path):
        _, out = solved
        code = main(["worst-case", "--model", "example1", "--decision", str(out / "decision.json"), "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "candidates.csv").is_file() and (tmp_path / "candidates.json").is_file()

    def test_nonrobust_decision(self, tmp_path):
        p = example1_problem()
        write_decision(p.initial_guess.with_gamma(1e9), tmp_path / "d.json", model="example1")
        code = main(["validate", "--model", "example1", "--decision", str(tmp_path / "d.json"), "--samples", "2000", "--out", str(tmp_path)])
        assert code == 2
        assert json.loads((tmp_path / "validation_summary.json").read_text())["max_violation"] > 0

    def test_fresh_decision_worst_case_list(self, tmp_path):
        p = example1_problem()
        write_decision(p.initial_guess.with_gamma(1e9), tmp_path / "d.json")
        assert main(["worst-case", "--model", "example1", "--decision", str(tmp_path / "d.json"), "--out", str(tmp_path)]) == 2
        rows = list(csv.DictReader((tmp_path / "candidates.csv").open()))
        assert rows[0]["rank"] == "0" and abs(float(rows[0]["d"]) - 0.195) <= 0.01

    def test_trajectories_flag(self, solved, tmp_path):
        _, out = solved
        args = ["validate", "--model", "example1", "--decision", str(out / "decision.json"), "--samples", "5", "--trajectories", "3", "--out", str(tmp_path)]
        assert main(args) == 0
        assert len((tmp_path / "trajectories.csv").read_text().splitlines()) == 1 + 3 * 6

    def test_dimension_mismatch(self, tmp_path, capsys):
        write_decision(DecisionVector(np.zeros(3), [], 0.0), tmp_path / "d.json")
        code = main(["validate", "--model", "example1", "--decision", str(tmp_path / "d.json"), "--out", str(tmp_path)])
        assert code == 1
        err = capsys.readouterr().err
        assert "n_q=3" in err and "n_q=5" in err

    def test_missing_decision_file(self, tmp_path):
        assert main(["validate", "--model", "example1", "--decision", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 1

    def test_empty_multistart_is_a_config_error(self, tmp_path, capsys):
        write_decision(DecisionVector(np.zeros(5), [], 0.0), tmp_path / "d.json")
        code = main(["worst-case", "--model", "example1", "--multistarts", "0", "--decision", str(tmp_path / "d.json"), "--out", str(tmp_path)])
        assert code == 1
        assert "multistarts" in capsys.readouterr().err


class TestArtifacts:
    def test_decision_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        dec = DecisionVector(rng.normal(size=7) * 1e3, rng.normal(size=2) / 3, float(np.pi * 1e5))
        write_decision(dec, tmp_path / "d.json")
        back = read_decision(tmp_path / "d.json")
        assert np.array_equal(back.q, dec.q) and np.array_equal(back.r, dec.r) and back.gamma == dec.gamma

    def test_scenario_set_bit_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        H = ScenarioSet([Scenario(rng.normal(size=(4, 3)), rng.normal(size=2)) for _ in range(3)], 1e-5)
        write_scenario_set(H, tmp_path / "h.json")
        back = read_scenario_set(tmp_path / "h.json")
        assert back.epsilon == 1e-5 and all(a == b for a, b in zip(back, H))

    def test_empty_disturbance_shape_survives(self, tmp_path):
        H = ScenarioSet([Scenario(np.zeros((5, 0)), [0.1])])
        write_scenario_set(H, tmp_path / "h.json")
        assert read_scenario_set(tmp_path / "h.json")[0].w.shape == (5, 0)

    def test_wrong_format_rejected(self, tmp_path):
        (tmp_path / "x.json").write_text(json.dumps({"format": "other", "version": 1}))
        with pytest.raises(ArtifactError, match="decision"):
            read_decision(tmp_path / "x.json")

    def test_scenario_dimension_check(self, tmp_path):
        write_scenario_set([Scenario(np.zeros((2, 0)), [0.1])], tmp_path / "h.json", epsilon=1e-3)
        with pytest.raises(ArtifactError, match="scenario 0"):
            read_scenario_set(tmp_path / "h.json", example1_problem())


class TestConfig:
    def test_presets_listed(self, capsys):
        assert main(["list-presets"]) == 0
        assert set(capsys.readouterr().out.split()) == PRESETS
        assert set(list_presets()) == PRESETS

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_presets_build(self, name):
        cfg = load_preset(name)
        p = build_problem(cfg)
        expected_N = {"building_paper": 192, "building_desk": 24, "compressor_paper": 200, "compressor_desk": 40, "example1": 5}
        assert p.N == expected_N[name]

    def test_unknown_key_reports_line(self):
        text = "version = 1\n[problem]\nmodel = 'example1'\n\n[reduction]\nepsilon = 1e-3\nepsilom = 2.0\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text, source="cfg.toml")
        assert info.value.line == 7 and info.value.field == "reduction.epsilom"
        assert "cfg.toml: line 7: reduction.epsilom" in str(info.value)

    def test_wrong_type_reports_line(self):
        text = "version = 1\n[reduction]\nmax_iterations = 'ten'\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.line == 3 and "expected int" in str(info.value)

    def test_invalid_value_reports_field(self):
        text = "version = 1\n[reduction]\nmultistarts = 0\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.field == "reduction.multistarts" and info.value.line == 3

    def test_malformed_toml_reports_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("version = 1\n[reduction\n")
        assert info.value.line == 2

    def test_missing_version(self):
        with pytest.raises(ConfigError, match="version"):
            parse_config("[problem]\nmodel = 'example1'\n")

    def test_unknown_model(self):
        with pytest.raises(ConfigError) as info:
            parse_config("version = 1\n[problem]\nmodel = 'boiler'\n")
        assert info.value.line == 3

    def test_integer_accepted_for_float(self):
        assert parse_config("version = 1\n[reduction]\nepsilon = 1\n").reduction.epsilon == 1.0

    def test_config_file_via_cli(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text("version = 1\n[problem]\nmodel = 'example1'\n[reduction]\nepsilon = 1e-8\ntol_G = -1.0\n")
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 1
        assert "line 6" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "absent.toml")]) == 1

    def test_no_model_source(self):
        assert main(["solve"]) == 1

    def test_external_model(self, tmp_path):
        (tmp_path / "toy.py").write_text(
            "from robustocp.models import example1_problem\n"
            "def problem(scale, **kw):\n"
            "    return example1_problem(**kw)\n"
        )
        cfg = tmp_path / "ext.toml"
        cfg.write_text(
            "version = 1\n[problem]\nmodel = 'external'\npath = 'toy.py'\n"
            "[reduction]\nepsilon = 1e-8\n[output]\ndir = 'out'\n"
        )
        p = build_problem(parse_config(cfg.read_text(), base_dir=tmp_path))
        assert p.name == "example1"
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0

    def test_bad_override(self):
        cfg = parse_config("version = 1\n[problem]\nmodel = 'example1'\n[problem.overrides]\nwings = 2\n")
        with pytest.raises(ConfigError, match="override"):
            build_problem(cfg)


class TestFilesystem:
    def test_unwritable_output_dir(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("not a directory")
        assert main(["solve", "--model", "example1", "--out", str(blocker / "sub")]) == 1
        assert "error" in capsys.readouterr().err

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "robustocp", "list-presets"], capture_output=True, text=True, check=True)
        assert "example1" in out.stdout.split()
