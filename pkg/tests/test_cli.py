from pathlib import Path

import pytest

from skewtransfer import cli
from skewtransfer.config import build_base, build_fiber, build_system, parse_config
from skewtransfer.errors import ConfigError, HypothesisViolation, UnknownFamilyError
from skewtransfer.skew import bv_bound_constants

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
base.family = dyadic
fiber.family = stepwise
fiber.alpha = 0.5
fiber.offset_odd = 0.5
run.n_bins = 128
run.n_leaves = 32
run.iterations = 30
run.n_max = 6
run.mc_n_max = 3
run.n_orbits = 2000
run.burn_in = 20
run.verify_leaves = 32
run.verify_pairs = 3
run.seed = 11
"""


def write_cfg(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(tmp_path, *args):
    return cli.main(list(args) + ["--out", str(tmp_path / "out")])


# -- configuration ----------------------------------------------------------


def test_parse_defaults_and_types():
    cfg = parse_config("base.family = gauss\nrun.n_bins = 2048  # finer\n")
    assert cfg.run["n_bins"] == 2048 and isinstance(cfg.run["n_bins"], int)
    assert cfg.run["tail_tol"] == 1e-8 and cfg.seed is None
    assert cfg.output_dir == "out"


def test_hash_ignores_order_and_comments():
    a = parse_config("base.family = dyadic\nrun.seed = 3\n")
    b = parse_config("# comment\nrun.seed=3\n\nbase.family =   dyadic\n")
    c = parse_config("base.family = dyadic\nrun.seed = 4\n")
    assert a.hash() == b.hash() != c.hash()
    assert len(a.hash()) == 16
    assert a.header().startswith(f"# config_hash={a.hash()} version=")


@pytest.mark.parametrize("text", [
    "family = dyadic\n",
    "fiber.family = stepwise\n",
    "base.family = dyadic\nrun.n_bins = many\n",
    "base.family = dyadic\nrun.n_leaves = 2.5\n",
    "base.family = dyadic\nrun.tail_tol = 0\n",
    "base.family = dyadic\nbase.family = gauss\n",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_unknown_families():
    with pytest.raises(UnknownFamilyError):
        parse_config("base.family = tent\n")
    with pytest.raises(UnknownFamilyError):
        parse_config("base.family = dyadic\nfiber.family = rotation\n")


def test_builders():
    S = build_system(parse_config(SMALL))
    assert S.base.name == "dyadic" and S.fiber.alpha == 0.5 and S.iterate_k == 1
    f = build_base(parse_config("base.family = luroth\nbase.ratio = 0.3\n"))
    assert f.right(1) - f.left(1) == pytest.approx(0.7)
    cfg = (CONFIGS / "luroth_lip.cfg").read_text()
    G = build_fiber(parse_config(cfg), build_base(parse_config(cfg)))
    assert G.global_lip == pytest.approx(0.1)


def test_variation_constants_reject_violated_hypothesis():
    # slow slope 1/2 gives esssup g = 2, so alpha g reaches 1.2
    S = build_system(parse_config("base.family = slopes2\nfiber.family = stepwise\nfiber.alpha = 0.6\n"))
    with pytest.raises(HypothesisViolation):
        bv_bound_constants(S)


# -- command line -----------------------------------------------------------


@pytest.mark.parametrize("command,files", [
    ("density", ["density.csv"]),
    ("gap", ["gap.csv"]),
    ("evolve", ["evolve.csv", "path.txt"]),
    ("variation", ["variation.csv"]),
    ("correlations", ["correlations.csv", "correlations_mc.csv"]),
    ("verify", ["verify.txt"]),
])
def test_commands_succeed_with_headers(tmp_path, capsys, command, files):
    cfg_path = write_cfg(tmp_path, SMALL)
    assert run(tmp_path, command, "--config", cfg_path) == 0
    header = parse_config(SMALL).header()
    for name in files:
        text = (tmp_path / "out" / name).read_text()
        assert text.startswith(header + f"# command={command}\n")


def test_density_reports_error_for_known_density(tmp_path):
    cfg_path = write_cfg(tmp_path, "base.family = gauss\nrun.n_bins = 256\n")
    assert run(tmp_path, "density", "--config", cfg_path) == 0
    rows = (tmp_path / "out" / "error.csv").read_text().splitlines()
    assert rows[-2] == "n_bins,l1_error"
    assert float(rows[-1].split(",")[1]) < 0.02


def test_exit_code_unknown_family(tmp_path, capsys):
    assert run(tmp_path, "gap", "--config", write_cfg(tmp_path, "base.family = tent\n")) == 2
    assert "unknown base family" in capsys.readouterr().err


def test_exit_code_hypothesis(tmp_path, capsys):
    text = "base.family = slopes2\nfiber.family = stepwise\nfiber.alpha = 0.6\nrun.seed = 1\n"
    assert run(tmp_path, "variation", "--config", write_cfg(tmp_path, text)) == 3
    assert "hypothesis violation" in capsys.readouterr().err


def test_exit_code_usage(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate", "--config", "x.cfg"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["gap"])
    assert exc.value.code == 1
    assert run(tmp_path, "gap", "--config", str(tmp_path / "missing.cfg")) == 1


def test_correlations_need_seed(tmp_path, capsys):
    text = SMALL.replace("run.seed = 11\n", "")
    assert run(tmp_path, "correlations", "--config", write_cfg(tmp_path, text)) == 1
    assert "seed" in capsys.readouterr().err


def test_thread_selection(monkeypatch):
    monkeypatch.delenv(cli.THREADS_ENV, raising=False)
    assert cli._threads(None) == 1
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli._threads(None) == 3
    assert cli._threads(2) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "lots")
    with pytest.raises(ConfigError):
        cli._threads(None)


def test_verify_is_deterministic(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, SMALL)
    assert cli.main(["verify", "--config", cfg_path, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["verify", "--config", cfg_path, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    a = (tmp_path / "a" / "verify.txt").read_bytes()
    assert a == (tmp_path / "b" / "verify.txt").read_bytes()
    assert b"summary:" in a


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "skewtransfer", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("skewtransfer ")
