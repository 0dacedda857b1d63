"""Command-line front end.

    skewtransfer <density|gap|evolve|variation|correlations|verify> --config FILE [--out DIR] [--threads N]

Exit codes: 0 success, 1 usage or configuration error, 2 unknown family,
3 violated standing hypothesis, 4 numerical failure or failed verification.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, build_base, build_system, load_config
from .correlations import birkhoff_correlation, coordinate_y, correlation_sequence
from .errors import (ConfigError, ConvergenceError, FitError, HypothesisViolation, SkewTransferError,
                     UnknownFamilyError)
from .fiber import AtomicMeasure
from .io import fmt, write_correlation, write_density, write_leafpath
from .skew import bv_bound_constants, l1_norm, path_variation, product_path, push_leafpath, s1_norm
from .transfer1d import build_nodal, build_ulam, l1_distance, spectral_gap_estimate, stationary_density
from .verify import reference_density, run_verify

EXIT_OK, EXIT_USAGE, EXIT_FAMILY, EXIT_HYPOTHESIS, EXIT_NUMERIC = 0, 1, 2, 3, 4
THREADS_ENV = "SKEWTRANSFER_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Writer:
    """Writes output files that all start with the configuration header."""

    def __init__(self, cfg: ExperimentConfig, out: Path, command: str):
        self.cfg, self.out, self.command = cfg, out, command
        self.written: List[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def open(self, name: str):
        path = self.out / name
        self.written.append(path)
        fh = open(path, "w", newline="\n")
        fh.write(self.cfg.header())
        fh.write(f"# command={self.command}\n")
        return fh


def _kw(cfg: ExperimentConfig) -> dict:
    r = cfg.run
    return dict(tail_tol=r["tail_tol"], merge_eps=r["merge_eps"], atom_cap=r["atom_cap"])


def cmd_density(cfg: ExperimentConfig, w: _Writer, threads: int) -> int:
    fmap = build_base(cfg)
    M = build_ulam(fmap, cfg.run["n_bins"], tail_tol=cfg.run["tail_tol"], threads=threads)
    h = stationary_density(M)
    with w.open("density.csv") as fh:
        write_density(h, fh)
    ref = reference_density(fmap)
    if ref is not None:
        with w.open("error.csv") as fh:
            fh.write("n_bins,l1_error\n")
            fh.write(f"{h.n_bins},{fmt(l1_distance(h, ref))}\n")
    return EXIT_OK


def cmd_gap(cfg: ExperimentConfig, w: _Writer, threads: int) -> int:
    fmap = build_base(cfg)
    n = cfg.run["n_bins"]
    lam, meta = spectral_gap_estimate(build_nodal(fmap, n, tail_tol=cfg.run["tail_tol"]))
    lam_u, _ = spectral_gap_estimate(build_ulam(fmap, n, tail_tol=cfg.run["tail_tol"], threads=threads))
    with w.open("gap.csv") as fh:
        fh.write(f"lambda2,{fmt(lam)}\n")
        fh.write(f"lambda2_ulam,{fmt(lam_u)}\n")
        fh.write(f"# method={meta['method']} discretization={meta['discretization']} size={meta['size']}\n")
    return EXIT_OK


def cmd_evolve(cfg: ExperimentConfig, w: _Writer, threads: int) -> int:
    S = build_system(cfg)
    kw = _kw(cfg)
    P = product_path(cfg.run["n_leaves"], AtomicMeasure.delta(0.5))
    with w.open("evolve.csv") as fh:
        fh.write("n,l1_residual,s1_norm,variation\n")
        fh.write(f"0,nan,{fmt(s1_norm(P))},{fmt(path_variation(P))}\n")
        for n in range(1, cfg.run["iterations"] + 1):
            Q = push_leafpath(S, P, **kw)
            fh.write(f"{n},{fmt(l1_norm(Q - P))},{fmt(s1_norm(Q))},{fmt(path_variation(Q))}\n")
            P = Q
    P.meta["tag"] = f"iterate_{cfg.run['iterations']}"
    with w.open("path.txt") as fh:
        write_leafpath(P, fh)
    return EXIT_OK


def cmd_variation(cfg: ExperimentConfig, w: _Writer, threads: int) -> int:
    S = build_system(cfg)
    a4, u4 = bv_bound_constants(S)
    kw = _kw(cfg)
    P = product_path(cfg.run["n_leaves"], AtomicMeasure.delta(0.5))
    measured = path_variation(P)
    for n in range(1, cfg.run["iterations"] + 1):
        P = push_leafpath(S, P, **kw)
        if n % S.iterate_k == 0:
            measured = max(measured, path_variation(P))
    with w.open("variation.csv") as fh:
        fh.write("alpha4,U4,bound,measured\n")
        fh.write(f"{fmt(a4)},{fmt(u4)},{fmt(u4 / (1.0 - a4))},{fmt(measured)}\n")
    return EXIT_OK


def cmd_correlations(cfg: ExperimentConfig, w: _Writer, threads: int) -> int:
    from .skew import compute_invariant

    if cfg.seed is None:
        raise ConfigError("run.seed is required for the Monte Carlo estimate")
    S = build_system(cfg)
    r = cfg.run
    P0, _ = compute_invariant(S, r["n_leaves"], r["iterations"], **_kw(cfg))
    u = coordinate_y()
    op = correlation_sequence(S, P0, u, u, r["n_max"], **_kw(cfg))
    mc = birkhoff_correlation(S, u, u, r["mc_n_max"], n_orbits=r["n_orbits"], burn_in=r["burn_in"], seed=cfg.seed)
    with w.open("correlations.csv") as fh:
        write_correlation(op, fh)
    with w.open("correlations_mc.csv") as fh:
        write_correlation(mc, fh)
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, w: _Writer, threads: int) -> int:
    report = run_verify(cfg, threads=threads)
    table = report.table()
    with w.open("verify.txt") as fh:
        fh.write(table)
    sys.stdout.write(table)
    return EXIT_OK if report.passed else EXIT_NUMERIC


COMMANDS: Dict[str, Callable] = {
    "density": cmd_density,
    "gap": cmd_gap,
    "evolve": cmd_evolve,
    "variation": cmd_variation,
    "correlations": cmd_correlations,
    "verify": cmd_verify,
}


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="skewtransfer", description="Transfer operators of countable-branch maps and skew products.")
    p.add_argument("--version", action="version", version=f"skewtransfer {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment configuration file")
    p.add_argument("--out", help="output directory (default: output.dir of the config)")
    p.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        threads = _threads(args.threads)
        writer = _Writer(cfg, Path(args.out or cfg.output_dir), args.command)
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](cfg, writer, threads)
    except UnknownFamilyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAMILY
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ConvergenceError, FitError, SkewTransferError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
