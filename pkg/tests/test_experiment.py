import json
from pathlib import Path

import pytest

from coulomblab.cli import main
from coulomblab.experiment import ConfigError, parse_config, run_experiment

MINIMAL = """\
[gas]
d = 3
n_particles = 1
beta = 1.0

[chain]
n_steps = 20000
n_burnin = 2000
n_chains = 2
master_seed = 5
"""

MOMENT = MINIMAL + """
[check:m]
type = moment
observable = sqnorm(0)
expected = 9
"""

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.gas.d == 3 and cfg.gas.n_particles == 1
    assert cfg.target.kind == "free" and cfg.checks == []
    assert cfg.chain.n_chains == 2 and cfg.chain.thinning == 1


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.ini")):
        parse_config(path.read_text())


def test_beta_below_delta_is_rejected():
    with pytest.raises(ConfigError, match=r"line 4: \[gas\] beta"):
        parse_config(MINIMAL.replace("beta = 1.0", "beta = 0"))


def test_conditional_needs_r_below_s():
    text = MINIMAL + "\n[target]\nkind = conditional\nR = 3\nS = 2\n"
    with pytest.raises(ConfigError, match=r"0 < R < S"):
        parse_config(text)


def test_unknown_key_names_its_line():
    text = MINIMAL.replace("n_steps = 20000", "n_steps = 20000\nn_stepz = 3")
    with pytest.raises(ConfigError, match=r"line 8: \[chain\] n_stepz"):
        parse_config(text)


def test_check_requirements():
    with pytest.raises(ConfigError, match="needs key 'expected'"):
        parse_config(MINIMAL + "\n[check:m]\ntype = moment\nobservable = energy\n")
    with pytest.raises(ConfigError, match="conditional target"):
        parse_config(MINIMAL + "\n[check:k]\ntype = kpoint\nballs = ball(0,0,0;0.5)\n")
    with pytest.raises(ConfigError, match="unknown check type"):
        parse_config(MINIMAL + "\n[check:k]\ntype = nonsense\n")


def test_canonical_text_round_trip():
    for path in sorted(CONFIGS.glob("*.ini")):
        cfg = parse_config(path.read_text())
        again = parse_config(cfg.to_text())
        assert again == cfg and again.to_text() == cfg.to_text()


def test_moment_run_passes_and_writes_artifacts(tmp_path):
    status = run_experiment(parse_config(MOMENT), tmp_path)
    assert status == 0
    records = [json.loads(x) for x in (tmp_path / "reports.jsonl").read_text().splitlines()]
    assert {r["name"] for r in records} == {"chain_health", "moment"}
    assert (tmp_path / "summary.txt").read_text().endswith("overall: PASS\n")
    assert len(list((tmp_path / "chains" / "main").glob("*.stats.jsonl"))) == 2


def test_wrong_expectation_fails(tmp_path):
    assert run_experiment(parse_config(MOMENT.replace("expected = 9", "expected = 4.5")), tmp_path) == 1


def test_zero_checks_records_chain_statistics(tmp_path):
    assert run_experiment(parse_config(MINIMAL), tmp_path) == 0
    lines = (tmp_path / "chains" / "main" / "chain_000.stats.jsonl").read_text().splitlines()
    assert json.loads(lines[1])["observable"] == "energy"


def test_rerun_is_byte_identical(tmp_path):
    cfg = parse_config(MOMENT + "\n".join(["", "[output]", "dir = unused"]))
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b", threads=2)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_validate_run_report(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MOMENT)
    assert main(["validate", str(cfg)]) == 0
    assert "[check:m]" in capsys.readouterr().out
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
    assert "overall: PASS" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "out")]) == 0


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(MINIMAL.replace("d = 3", "d = 3\nfoo = 1"))
    assert main(["run", str(cfg)]) == 2
    assert "line 3" in capsys.readouterr().err
    assert main(["report", str(tmp_path / "missing")]) == 2
