"""Command-line front end: ``regime-mdp {analyze,simulate,rate,mc,validate} --config FILE``.

Every CSV starts with a ``# config_sha256=... seed=...`` comment line and
writes reals with 17 significant digits.  Exit codes: 0 success, 2 config
error, 3 numerical error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import mc, rate
from .config import ExperimentConfig, load_config
from .errors import ConfigError, NotIrreducible, NumericalError
from .model import validate_model
from .poisson import analyze_point
from .simulate import (AveragedPath, averaged_at, default_dt, deviation_path, grid_steps, resolve_workers,
                       simulate_coupled, solve_averaged)

log = logging.getLogger("regime_mdp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return "%.17g" % float(value)


def write_csv(path: Path, header: list, rows, cfg: ExperimentConfig, command: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={cfg.sha256(command)} seed={cfg.command_seed(command)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path):
    """Header and float rows of a CSV, skipping ``#`` comment lines; empty cells read as NaN."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    rows = list(csv.reader(lines))
    if not rows:
        raise ConfigError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) if v.strip() else math.nan for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry: {exc}") from None
    return header, data.reshape(-1, len(header))


def _knot_times(cfg):
    knots = cfg.section("analyze")["knots"]
    if isinstance(knots, list):
        return np.asarray(knots, dtype=float)
    return np.linspace(0.0, cfg.T, knots)


def run_analyze(cfg: ExperimentConfig, workers: int = 1) -> list:
    """Averaging quantities along the averaged path at the configured knots."""
    m = cfg.model
    d, L = m.d, m.L
    times = _knot_times(cfg)
    xs = averaged_at(m, cfg.x0, times, cfg.dt or 1e-3)
    header = (["t"] + [f"xbar_{k + 1}" for k in range(d)] + [f"mu_{i + 1}" for i in range(L)]
              + [f"phi_{i + 1}_{k + 1}" for i in range(L) for k in range(d)]
              + [f"bbar_{k + 1}" for k in range(d)]
              + [f"jac_{k + 1}_{l + 1}" for k in range(d) for l in range(d)]
              + [f"lambda_{j + 1}_{k + 1}" for j in range(d) for k in range(d)])
    rows = []
    for t, x in zip(times, xs):
        try:
            pa = analyze_point(m, x)
        except NotIrreducible as exc:
            raise NotIrreducible(f"at t={t:.17g}: {exc}", x=exc.x) from None
        rows.append([t, *x, *pa.poisson.mu, *pa.poisson.phi.ravel(), *pa.poisson.bbar,
                     *pa.jacobian.ravel(), *pa.cov.lam.ravel()])
    return [write_csv(cfg.output_dir / "analyze.csv", header, rows, cfg, "analyze")]


def run_simulate(cfg: ExperimentConfig, workers: int = 1) -> list:
    """One coupled path plus its jump log.

    ``path.csv`` also carries ``eta_k = (x_k - xbar_k) / (sqrt(eps) h)`` so it
    can be fed straight to the ``rate`` command.
    """
    m = cfg.model
    sim = cfg.section("simulate")
    eps = sim["eps"]
    dt = cfg.dt or default_dt(eps)
    seed = cfg.command_seed("simulate")
    path = simulate_coupled(m, eps, cfg.x0, cfg.y0, cfg.T, dt, seed, path_index=sim["path_index"])
    avg = solve_averaged(m, cfg.x0, cfg.T, dt)
    beta = sim["h_exponent"]
    h = 1.0 if not beta else eps ** -beta
    eta = deviation_path(path, avg, eps, h).eta
    header = ["t"] + [f"x_{k + 1}" for k in range(m.d)] + ["y"] + [f"eta_{k + 1}" for k in range(m.d)]
    rows = ([t, *x, int(y), *e] for t, x, y, e in zip(path.times, path.x, path.y, eta))
    out = [write_csv(cfg.output_dir / "path.csv", header, rows, cfg, "simulate")]
    out.append(write_csv(cfg.output_dir / "jumps.csv", ["t", "from", "to"], path.jump_log, cfg, "simulate"))
    return out


def _load_eta(path: Path, d: int):
    header, data = read_csv(path)
    if not header or header[0] != "t":
        raise ConfigError(f"{path}: first column must be 't'")
    cols = [header.index(f"eta_{k + 1}") if f"eta_{k + 1}" in header else -1 for k in range(d)]
    if min(cols) < 0:
        raise ConfigError(f"{path}: expected columns eta_1..eta_{d}")
    return data[:, 0], data[:, cols]


def run_rate(cfg: ExperimentConfig, workers: int = 1) -> list:
    """Rate functional of the deviation path in ``[rate] path_file``."""
    m = cfg.model
    src = cfg.resolve(cfg.section("rate")["path_file"])
    if not src.is_file():
        raise ConfigError(f"rate.path_file {src} does not exist")
    times, eta = _load_eta(src, m.d)
    if times.size < 3 or abs(times[0]) > 1e-12:
        raise ConfigError(f"{src}: need at least three rows starting at t=0")
    dt = (times[-1] - times[0]) / (times.size - 1)
    if np.abs(np.diff(times) - dt).max() > 1e-9 * max(1.0, times[-1]):
        raise ConfigError(f"{src}: time grid must be uniform")
    grid_steps(times[-1], dt)
    avg = solve_averaged(m, cfg.x0, times[-1], dt)
    avg = AveragedPath(times=times, x=avg.x)
    ev = rate.rate_functional(m, avg, eta)
    pairs = [(i, j) for (i, j) in sorted(m.support) if i != j]
    header = (["t"] + [f"v_{k + 1}" for k in range(m.d)] + ["cost", "feasible"]
              + [f"u_{j + 1}_{k + 1}" for j in range(m.L) for k in range(m.d)]
              + [f"c_{i + 1}_{j + 1}" for i, j in pairs])
    rows = ([t, *p.v, p.cost, p.feasible, *p.u_star.ravel(), *(p.c_star[i, j] for i, j in pairs)]
            for t, p in zip(times, ev.per_knot))
    out = [write_csv(cfg.output_dir / "rate.csv", header, rows, cfg, "rate")]
    out.append(write_csv(cfg.output_dir / "rate_value.csv", ["value", "first_infeasible_t", "n_knots"],
                         [[ev.value, ev.first_infeasible_time, times.size]], cfg, "rate"))
    return out


def mc_target(cfg: ExperimentConfig):
    """Minimal rate of the configured tail event, or None when not configured."""
    sec = cfg.section("mc")
    n = sec["target_knots"]
    if not n or sec["event"] != "terminal" or not math.isfinite(sec["a"]):
        return None
    if sec["a"] <= 0.0:
        return 0.0
    m = cfg.model
    avg = solve_averaged(m, cfg.x0, cfg.T, cfg.T / n)
    direction = np.zeros(m.d)
    direction[0] = 1.0
    return rate.min_rate_to_target(m, avg, sec["a"], cfg.T, n, direction=direction).value


def run_mc(cfg: ExperimentConfig, workers: int = 1) -> list:
    """Tail estimates over ``[mc] eps_grid`` and the matching minimal rate."""
    sec = cfg.section("mc")
    seed = cfg.command_seed("mc")
    dt_rule = (lambda e: cfg.dt) if cfg.dt else default_dt
    target = mc_target(cfg)
    rows = []
    for eps in sec["eps_grid"]:
        est = mc.estimate_tail(cfg.model, eps, sec["h_exponent"], cfg.x0, cfg.y0, cfg.T, dt_rule(eps), sec["a"],
                               sec["event"], sec["n_paths"], seed, workers=workers)
        log.info("eps=%g p_hat=%g decay_rate=%g", eps, est.p_hat, est.decay_rate)
        rows.append([est.eps, est.h_eps, est.threshold, est.n_paths, est.p_hat, est.std_err, est.decay_rate,
                     target])
    header = ["eps", "h_eps", "a", "n_paths", "p_hat", "std_err", "decay_rate", "target_rate"]
    return [write_csv(cfg.output_dir / "mc.csv", header, rows, cfg, "mc")]


def _validation_grid(sec, d):
    per_axis = max(2, math.ceil(sec["points"] ** (1.0 / d))) if sec["points"] > 1 else 1
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(sec["lower"], sec["upper"])]
    return [np.array(p) for p in itertools.product(*axes)]


def run_validate(cfg: ExperimentConfig, workers: int = 1) -> list:
    """Sampled checks of the standing assumptions; exit code 3 if any fails."""
    sec = cfg.section("validate")
    rep = validate_model(cfg.model, _validation_grid(sec, cfg.model.d), sec["h_fd"])
    rows = [["n_samples", rep.n_samples], ["irreducible_everywhere", rep.irreducible_everywhere],
            ["min_invariant_mass", rep.min_invariant_mass], ["zeta_violations", rep.zeta_violations],
            ["rate_upper", rep.rate_bounds[0]], ["rate_lower", rep.rate_bounds[1]]]
    rows += [[f"lipschitz_{k}", v] for k, v in sorted(rep.lipschitz_estimates.items())]
    out = [write_csv(cfg.output_dir / "validate.csv", ["quantity", "value"],
                     ([k, v] for k, v in rows), cfg, "validate")]
    if not rep.irreducible_everywhere:
        raise NotIrreducible("generator is reducible at some sampled point")
    if rep.zeta_violations:
        raise NumericalError(f"{rep.zeta_violations} sampled rates exceed zeta={cfg.model.zeta}")
    return out


COMMANDS = {"analyze": run_analyze, "simulate": run_simulate, "rate": run_rate, "mc": run_mc,
            "validate": run_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regime-mdp", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="TOML experiment file")
    p.add_argument("--workers", type=int, default=0, help="worker threads (0 = all cores)")
    p.add_argument("--seed", type=int, default=None, help="master seed, overrides the config")
    p.add_argument("--out", default=None, help="output directory, overrides output_dir")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg.output_dir = Path(args.out)
        if args.workers < 0:
            raise ConfigError("--workers must be non-negative")
        written = COMMANDS[args.command](cfg, resolve_workers(args.workers))
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
