"""Config parsing, canonical round-trips, subcommands, artifacts, exit codes."""

import json

import numpy as np
import pytest

from polyhess import ConfigError, load_field
from polyhess.cli import (
    build_datum,
    build_domain,
    build_setting,
    config_to_ini,
    load_config,
    main,
    parse_config_text,
)

SMALL_INI = """\
[problem]
n = 2
k = 2
form = strong

[domain]
nodes = 32

[datum]
kind = constant
value = 1.0

[lambda]
value = 0.05
schedule = 0.0 0.05

[solver]
grad_tol = 1e-06
seed = 0

[output]
directory = {out}
dump_fields = true
"""


def write_cfg(tmp_path, text=None, **fmt):
    path = tmp_path / "run.cfg"
    body = SMALL_INI if text is None else text
    fmt.setdefault("out", str(tmp_path / "out"))
    path.write_text(body.format(**fmt))
    return path


def test_config_roundtrip_ini(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    canon = config_to_ini(cfg)
    cfg2 = parse_config_text(canon)
    assert cfg2 == cfg
    assert config_to_ini(cfg2) == canon


def test_config_json_equivalent(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    as_json = json.dumps({
        "problem": {"n": 2, "k": 2, "form": "strong"},
        "domain": {"nodes": "32"},
        "datum": {"kind": "constant", "value": 1.0},
        "lambda": {"value": 0.05, "schedule": "0.0 0.05"},
        "solver": {"grad_tol": 1e-6, "seed": 0},
        "output": {"directory": str(tmp_path / "out"), "dump_fields": True},
    })
    cfg2 = parse_config_text(as_json)
    assert cfg2 == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        parse_config_text("[problem]\nn = 2\nk = 2\nwhatever = 3\n")
    with pytest.raises(ConfigError):
        parse_config_text("[mystery]\nn = 2\n")
    with pytest.raises(ConfigError):
        parse_config_text("[problem]\nn = 2\nk = two\n")
    with pytest.raises(ConfigError):
        parse_config_text("[output]\ndump_fields = maybe\n")
    with pytest.raises(ConfigError):
        parse_config_text("[problem]\nform = strange\n")


def test_build_domain_and_datum(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    dom = build_domain(cfg)
    assert dom.nodes == (32, 32)
    f = build_datum(cfg, dom, ghost_width=2)
    assert np.all(f.values == 1.0)

    gauss = parse_config_text(
        "[problem]\nn = 2\nk = 2\n[domain]\nnodes = 16\n"
        "[datum]\nkind = gaussian\nvalue = 2.0\nwidth = 0.2\n")
    dg = build_datum(gauss, build_domain(gauss), 2)
    assert dg.values.max() <= 2.0
    # nearest node sits h/2 off the center on an even grid
    assert dg.values.max() == pytest.approx(2.0, rel=5e-2)

    checker = parse_config_text(
        "[problem]\nn = 2\nk = 2\n[domain]\nnodes = 16\n"
        "[datum]\nkind = checker\nblocks = 2\n")
    dc = build_datum(checker, build_domain(checker), 2)
    assert set(np.unique(dc.values)) == {-1.0, 1.0}


def test_build_setting_alpha_provenance(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    s = build_setting(cfg)
    assert s.alpha == 2 and not s.alpha_overridden
    override = parse_config_text(
        "[problem]\nn = 2\nk = 2\nalpha = 4\n[domain]\nnodes = 16\n")
    s2 = build_setting(override)
    assert s2.alpha == 4 and s2.alpha_overridden


def test_cmd_exponents(capsys):
    assert main(["exponents", "--n", "5", "--k", "2"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["regime"] == "SUB"
    assert d["alpha_main"] == 3
    assert d["p_star"] == "15/14"
    assert main(["exponents", "--n", "2", "--k", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["regime"] == "SUPER"
    assert main(["exponents", "--n", "4", "--k", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["regime"] == "CRITICAL"
    assert main(["exponents", "--n", "5", "--k", "9"]) == 2


def test_cmd_verify_filter_and_determinism(capsys):
    assert main(["verify", "--suite", "algebra", "--seed", "7"]) == 0
    out1 = capsys.readouterr().out
    assert "algebra.eigen_oracle_equivalence" in out1
    assert "exponents." not in out1
    assert main(["verify", "--suite", "algebra", "--seed", "7"]) == 0
    assert capsys.readouterr().out == out1
    assert main(["verify", "--suite", "nosuch"]) == 2


def test_cmd_verify_jobs_merge_order(capsys):
    assert main(["verify", "--suite", "algebra", "--suite", "exponents"]) == 0
    seq = capsys.readouterr().out
    assert main(["verify", "--suite", "algebra", "--suite", "exponents",
                 "--jobs", "2"]) == 0
    assert capsys.readouterr().out == seq  # worker pool merges in input order


def test_cmd_verify_failure_exit_code(capsys, monkeypatch):
    import polyhess.verify as verify_mod
    from polyhess.verify import CheckResult

    def broken_suite(seed=0):
        return [CheckResult("broken", "always_fails", False, "rigged")]

    monkeypatch.setitem(verify_mod.SUITES, "broken", broken_suite)
    assert main(["verify", "--suite", "broken"]) == 4
    assert "FAIL" in capsys.readouterr().out


def test_cmd_solve_artifacts(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfg_path)]) == 0
    summary = json.loads((out / "run.json").read_text())
    assert summary["command"] == "solve"
    assert summary["regime_report"]["regime"] == "SUPER"
    assert summary["alpha"] == {"value": 2, "source": "alpha_main formula"}
    res = summary["results"]
    assert res["J_m"] < 0.0 < res["J_star"]
    assert res["residual_m"] <= 1e-6 and res["residual_star"] <= 1e-6
    assert "minorant" in res and "radii" in res
    assert res["record_minimize"]["rows"] >= 1
    assert (out / "u_m.f64").exists() and (out / "u_star.meta.json").exists()
    u_m = load_field(out / "u_m")
    assert u_m.domain.nodes == (32, 32)
    assert summary["wall_clock_s"] > 0.0


def test_cmd_solve_lambda_zero_override(tmp_path):
    cfg_path = write_cfg(tmp_path)
    out = tmp_path / "zero"
    assert main(["solve", "--config", str(cfg_path), "--lambda", "0",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "run.json").read_text())
    assert summary["results"]["J_m"] == 0.0
    u_m = load_field(out / "u_m")
    assert np.all(u_m.values == 0.0)


def test_cmd_solve_weak_form_override(tmp_path):
    cfg_path = write_cfg(tmp_path)
    out = tmp_path / "weak"
    assert main(["solve", "--config", str(cfg_path), "--form", "weak",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "run.json").read_text())
    assert summary["config"]["form"] == "weak"
    assert summary["results"]["J_m"] < 0.0 < summary["results"]["J_star"]


def test_cmd_solve_nonconvergence_exit_code(tmp_path, capsys):
    text = SMALL_INI.replace("grad_tol = 1e-06", "grad_tol = 1e-06\nmax_iters = 1")
    cfg_path = write_cfg(tmp_path, text=text)
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfg_path)]) == 3
    summary = json.loads((out / "run.json").read_text())
    assert "error" in summary
    assert summary["partial_record"]["total_iterations"] >= 1


def test_cmd_solve_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[problem]\nn = 2\nk = 9\n")
    assert main(["solve", "--config", str(bad)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cmd_continuation(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["continuation", "--config", str(cfg_path)]) == 0
    csv1 = (out / "continuation.csv").read_bytes()
    lines = csv1.decode().strip().split("\n")
    assert lines[0] == "lambda,J_m,J_star,sep,converged"
    assert len(lines) == 3
    assert lines[1].startswith("0.0,")
    summary = json.loads((out / "run.json").read_text())
    assert summary["results"]["converged_rows"] == 2
    assert summary["results"]["largest_converged_lambda"] == 0.05
    # identical bytes on rerun with the same seed
    assert main(["continuation", "--config", str(cfg_path)]) == 0
    assert (out / "continuation.csv").read_bytes() == csv1


def test_cmd_continuation_requires_schedule(tmp_path):
    text = SMALL_INI.replace("schedule = 0.0 0.05\n", "")
    cfg_path = write_cfg(tmp_path, text=text)
    assert main(["continuation", "--config", str(cfg_path)]) == 2


def test_bundled_configs_parse():
    for name in ("configs/ma2d.cfg", "configs/hess3d.cfg"):
        cfg = load_config(name)
        s = build_setting(cfg)
        assert s.alpha == 2
