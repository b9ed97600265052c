import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughdelay.cli import main
from roughdelay.config import SCHEMA, ConfigError, parse_config, serialize


class TestParse:
    def test_empty_is_defaults(self):
        cfg = parse_config("")
        assert cfg["problem.beta"] == 0.4
        assert cfg["problem.epsilon"] == 0.02
        assert cfg["coeff.lambda"] == 0.9
        assert cfg["problem.T"] == 1.0
        assert cfg["problem.solver_n"] == 1024
        assert cfg["problem.fine_factor"] == 8
        assert cfg["problem.K"] == 1.0
        spec = cfg.problem_spec()
        assert spec.exps.beta_prime == pytest.approx(0.38)

    def test_sections_and_dotted(self):
        text = """
        # a comment
        [problem]
        r = 0.0625   # trailing comment
        [coeff]
        name = sine
        params.scale = 0.5
        study.r_list = 0.25,0.125,0.0625
        """
        cfg = parse_config(text)
        assert cfg["problem.r"] == 0.0625
        assert cfg.params("coeff") == {"scale": 0.5}
        assert cfg["study.r_list"] == (0.25, 0.125, 0.0625)

    def test_grid_multiple_ok(self):
        parse_config("problem.r=0.3\nproblem.T=1\nproblem.solver_n=1000\nproblem.r0=0.3\nstudy.r_list=0.3,0.1,0.05")

    def test_grid_multiple_error(self):
        with pytest.raises(ConfigError, match="line 1: r not a grid multiple"):
            parse_config("problem.r=0.3\nproblem.T=1\nproblem.solver_n=999\nproblem.r0=0.3")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="line 3: unknown key"):
            parse_config("[problem]\nr=0.125\nbogus=1")

    def test_type_mismatch(self):
        with pytest.raises(ConfigError, match="line 2: type mismatch"):
            parse_config("[problem]\nsolver_n=12.5")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("[plot]")

    def test_override_line_numbers(self):
        with pytest.raises(ConfigError, match="line 3"):
            parse_config("[problem]\nr=0.125", overrides=["problem.nope=1"])

    def test_round_trip(self):
        text = "[study]\nseeds=1,2\n[problem]\nr=0.0625\n[signal]\nkind=fourier_holder\nparams.phases=zero\n"
        once = serialize(parse_config(text))
        assert serialize(parse_config(once)) == once
        assert once.startswith("[signal]")


float_keys = sorted(k for k, (p, _) in SCHEMA.items() if p is float and k.startswith("problem.") and k not in ("problem.r", "problem.r0", "problem.T", "problem.beta", "problem.epsilon"))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(float_keys), st.floats(-1e6, 1e6, allow_nan=False))
def test_round_trip_idempotent(key, value):
    cfg = parse_config("", overrides=[f"{key}={value!r}"], validate=False)
    text = serialize(cfg)
    again = parse_config(text, validate=False)
    assert again[key] == value
    assert serialize(again) == text


class TestCli:
    def test_check_defaults(self, tmp_path, capsys):
        assert main(["check", "--out", str(tmp_path)]) == 0
        assert "failed=0" in capsys.readouterr().out
        assert (tmp_path / "check.csv").exists()

    def test_solve_off_grid(self, tmp_path):
        out = tmp_path / "o"
        assert main(["solve", "--out", str(out), "--set", "problem.solver_n=999"]) == 2
        assert not out.exists()

    def test_config_file_error(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("[problem]\nbeta=abc\n")
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_solve_outputs(self, tmp_path, capsys):
        args = ["solve", "--out", str(tmp_path), "--set", "problem.solver_n=64", "--set", "study.r_list=0.25,0.125,0.0625"]
        assert main(args) == 0
        out = capsys.readouterr().out
        assert "sup_norm=" in out and "chen_defect=" in out
        head = (tmp_path / "solution_path.csv").read_text().splitlines()[0]
        assert head == "t,v1"
        assert (tmp_path / "solution_tensor.csv").read_text().startswith("k,t,a1_1\n")

    def test_converge_constant(self, tmp_path, capsys):
        args = ["converge", "--out", str(tmp_path), "--set", "coeff.name=constant", "--set", "problem.solver_n=128"]
        assert main(args) == 0
        assert "flag=exact" in capsys.readouterr().out
        lines = (tmp_path / "converge.csv").read_text().splitlines()
        assert lines[0] == "seed,r,sup_err,tensor_sup_err,holder_err,yy_r_tensor_norm_1,yy_r_tensor_norm_2,runtime_ms"
        assert all(row.split(",")[2:5] == ["0.0", "0.0", "0.0"] for row in lines[1:])

    def test_env_overrides_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ROUGHDELAY_OUT", str(tmp_path / "env"))
        assert main(["gen", "--out", str(tmp_path / "flag"), "--set", "signal.fine_n=64"]) == 0
        assert (tmp_path / "env" / "signal_path.csv").exists()
        assert not (tmp_path / "flag").exists()

    def test_bounds(self, tmp_path, capsys):
        assert main(["bounds", "--out", str(tmp_path), "--set", "problem.solver_n=64", "--set", "study.r_list=0.25,0.125,0.0625"]) == 0
        out = capsys.readouterr().out
        for key in ("rho_eta_b_sigma=", "lambda_y=", "m_eta_y=", "delta_tilde_y=", "lambda_r=", "rho_delay_prop="):
            assert key in out

    def test_seed_flag_changes_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        common = ["--set", "problem.solver_n=64"]
        assert main(["solve", "--out", str(a), "--seed", "1", *common]) == 0
        assert main(["solve", "--out", str(b), "--seed", "2", *common]) == 0
        assert (a / "solution_path.csv").read_bytes() != (b / "solution_path.csv").read_bytes()

    def test_no_temp_leftovers(self, tmp_path):
        assert main(["gen", "--out", str(tmp_path), "--set", "signal.fine_n=64"]) == 0
        assert sorted(os.listdir(tmp_path)) == ["signal_path.csv", "signal_tensor.csv"]
