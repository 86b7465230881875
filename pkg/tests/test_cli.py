import csv

import pytest

from gbadmm.cli import REFERENCES, main, make_problem
from gbadmm.config import ConfigError, RunConfig, load_config, parse_config

FULL = """\
# full run description
kind = twist6
theta_deg = 3.75
solver = all
seed = 3

[admm]
rho0 = 100
beta = 1.001
alpha = 5e-4
tol_inner = 1e-8

[alm]
beta = 1.0

[penalty]
rho = 800

[certifier]
p = 0.01
n_r = 50
"""


def test_minimal_config_defaults():
    cfg = parse_config("kind=twist6\ntheta_deg=2.5")
    assert cfg.kind == "twist6" and cfg.theta_deg == 2.5
    assert (cfg.admm.rho0, cfg.admm.beta, cfg.admm.alpha, cfg.admm.tol_inner) == (100.0, 1.001, 5e-4, 1e-8)
    assert cfg.alm.beta == 1.0
    assert cfg.penalty.rho == 800.0


def test_full_config_round_trip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(FULL)
    cfg = load_config(path)
    assert cfg.theta_deg == 3.75 and cfg.seed == 3 and cfg.certifier.n_r == 50
    text = cfg.describe()
    for line in ("theta_deg = 3.75", "admm.beta = 1.001", "penalty.rho = 800.0", "certifier.n_r = 50"):
        assert line in text


def test_explicit_run_header_accepted():
    assert parse_config("[run]\nkind = certify\n").kind == "certify"


@pytest.mark.parametrize("theta", ["20", "0", "-1"])
def test_theta_out_of_range_rejected(theta):
    with pytest.raises(ConfigError, match="theta_deg"):
        parse_config(f"kind=twist6\ntheta_deg={theta}")


@pytest.mark.parametrize(
    "text, match",
    [
        ("kind=twist6\nbogus=1", "unknown key"),
        ("kind=twist6\n[nowhere]\nx=1", "unknown section"),
        ("kind=twist6\n[admm]\nbeta=abc", "beta"),
        ("kind=warp", "kind"),
        ("kind=twist6\nsolver=newton", "solver"),
        ("kind=twist6\n[admm]\nbeta=0.5", "beta"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_parse_error_reports_line_number():
    with pytest.raises(ConfigError, match=r":3:"):
        parse_config("kind = twist6\ntheta_deg = 2.5\nthis line is junk\n", source="x.cfg")


def test_explicit_burgers_vectors():
    cfg = parse_config("kind=reduced3\n[burgers]\nb1 = 1, 0, 0\nb2 = 0.5, 0.8660254037844386, 0\n"
                       "b3 = 0.5, -0.8660254037844386, 0\n")
    bs, p = make_problem(cfg, "three")
    assert len(bs) == 3 and p.nu == 0.347


def test_references_have_provenance():
    for entry in REFERENCES.values():
        assert entry["provenance"] and entry["values"]


def test_counterexample_subcommand(tmp_path, capsys):
    assert main(["counterexample", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "deviation" in out
    assert (tmp_path / "scan.csv").exists()
    assert (tmp_path / "summary.txt").read_text() == out


def test_twist6_traces_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["twist6", "--theta-deg", "2.5", "--solver", "admm", "--out", str(d)]) == 0
    assert (a / "trace_admm.csv").read_bytes() == (b / "trace_admm.csv").read_bytes()
    with open(a / "trace_admm.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "objective", "residual_norm", "u_norm", "w_norm", "rho"]
    assert [int(r[0]) for r in rows[1:]] == list(range(len(rows) - 1))
    # 17 significant digits
    assert len(rows[1][1].replace("-", "").replace(".", "").split("e")[0].lstrip("0")) >= 15


def test_cli_rejects_bad_theta(tmp_path, capsys):
    assert main(["twist6", "--theta-deg", "20", "--out", str(tmp_path)]) == 2
    assert "theta_deg" in capsys.readouterr().err


def test_cli_kind_mismatch(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("kind = certify\n")
    assert main(["twist6", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_certify_subcommand_small_grid(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("kind = certify\ntheta_deg = 2.5\n[certifier]\nn_r = 30\nn_phi = 60\n")
    assert main(["certify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "2"]) == 0
    assert (tmp_path / "o" / "grid.csv").exists()
    assert (tmp_path / "o" / "zero_level_detB2.csv").exists()


def test_runconfig_validate_direct():
    with pytest.raises(ConfigError):
        RunConfig(threads=0).validate()
