"""
Command-line front end
----------------------
Subcommands run one stage of the pipeline each:

    equilibria  het  mpep  correction  sweep  simulate  action

Every run writes ``resolved_config.txt`` into the output directory. Library
errors are mapped to exit codes: 1 usage/config, 2 precondition, 3 solver.
"""
import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .core.bvp import DeterministicFlow, mpep, refine_equilibrium, solve_base_connections
from .core.euler_lagrange import assemble_v_form
from .core.melnikov import compute_corrections, finite_difference_check
from .core.model import Path, VectorFieldModel, get_model
from .core.rate_functional import action
from .core.sde import SimConfig, empirical_mpep, exit_statistics, simulate
from .utils.config import RunConfig, load_run_config, parse_float_list
from .utils.errors import ConfigError, EscapePathError, InsufficientDataError, UnsupportedModelError
from .utils.logger import setup_logger
from .utils.path_io import path_columns, read_path, write_lines, write_path, write_table
from .utils.summarize import DefaultStateSummarizer

# Get loggers
console_log, file_log = setup_logger()


def _load_model(config: RunConfig) -> VectorFieldModel:
    try:
        return get_model(config.model)
    except UnsupportedModelError as error:
        raise ConfigError(str(error)) from error


def prepare_output(out: str, force: bool) -> str:
    """Create the output directory, refusing to reuse a non-empty one without ``force``."""
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise ConfigError(f"output directory '{out}' exists; use --force to overwrite")
    os.makedirs(out, exist_ok=True)
    return out


def _out(out: str, name: str) -> str:
    return os.path.join(out, name)


def cmd_equilibria(config: RunConfig, args: argparse.Namespace, out: str) -> int:
    """Refine every equilibrium guess for the forward flow and the Euler-Lagrange system."""
    model = _load_model(config)
    flow = DeterministicFlow(model, args.mu, reversed=False)
    el = assemble_v_form(model, args.mu)
    tol = config.bvp.hyperbolicity_tol
    lines: List[str] = [f"model {model.name}  mu {args.mu:g}", "", "[deterministic]"]
    seen: List[np.ndarray] = []
    for guess in model.equilibrium_guesses:
        eq = refine_equilibrium(flow, guess, tol)
        if any(np.allclose(eq.location, other, atol=1e-9) for other in seen):
            continue
        seen.append(eq.location)
        lines.append(eq.describe())
    lines += ["", "[euler_lagrange]"]
    for location in seen:
        eq = refine_equilibrium(el, np.concatenate([location, np.zeros(model.n)]), tol)
        lines.append(eq.describe())
    for line in lines:
        console_log.info(line)
    write_lines(lines, _out(out, "equilibria.txt"))
    return 0


def cmd_het(config: RunConfig, args: argparse.Namespace, out: str) -> int:
    """Time-reversed deterministic heteroclinic at mu."""
    model = _load_model(config)
    result = mpep(model, args.mu, config.bvp)
    solution = result.reversed
    write_path(solution.path, _out(out, "het_reversed.csv"))
    write_lines([f"T={solution.T:.17g}", f"intervals={solution.mesh_size}",
                 f"residual_norm={solution.residual_norm:.17g}",
                 f"newton_iters={solution.newton_iters}",
                 f"phase={solution.phase_anchor}"] + [f"warning={w}" for w in solution.warnings],
                _out(out, "het_summary.txt"))
    console_log.info(f"✓ Heteroclinic at mu={args.mu:g}: residual {solution.residual_norm:.2e}")
    return 0


def cmd_mpep(config: RunConfig, args: argparse.Namespace, out: str) -> int:
    """Most probable escape path at mu with its gap to the reversed heteroclinic."""
    model = _load_model(config)
    result = mpep(model, args.mu, config.bvp)
    gap = result.gap()
    write_path(result.mpep, _out(out, "mpep.csv"))
    write_path(result.reversed.path, _out(out, "het_reversed.csv"))
    write_table({"t": gap.times, "gap": gap.states[:, 0]}, _out(out, "gap.csv"))
    solution = result.solution
    write_lines([f"mu={result.mu:.17g}", f"max_gap={gap.sup_norm():.17g}",
                 f"unfolding={solution.unfolding:.17g}",
                 f"conserved_defect={solution.conserved_defect():.17g}",
                 f"condition={solution.condition:.17g}",
                 f"T={solution.T:.17g}"] + [f"warning={w}" for w in solution.warnings],
                _out(out, "mpep_summary.txt"))
    if args.plot:
        from .utils.plotting import plot_paths
        plot_paths(_out(out, "mpep.html"), [result.mpep, result.reversed.path],
                   ["escape path", "reversed heteroclinic"], title=f"mu = {args.mu:g}")
    console_log.info(f"✓ Escape path at mu={args.mu:g}: max gap {gap.sup_norm():.6e}")
    return 0


def cmd_correction(config: RunConfig, args: argparse.Namespace, out: str) -> int:
    """First-order corrections with solvability and finite-difference diagnostics."""
    model = _load_model(config)
    bases = solve_base_connections(model, config.bvp)
    bundle = compute_corrections(model, bases.reversed, config.bvp)
    mu_check = config.melnikov.fd_mu
    fd_errors = finite_difference_check(bases, bundle, mu_check, config.bvp)
    write_path(bundle.y0, _out(out, "y0.csv"))
    write_path(bundle.y1, _out(out, "y1.csv"))
    write_path(bundle.u1, _out(out, "u1.csv"))
    write_path(bundle.v1, _out(out, "v1.csv"))
    write_path(bundle.delta1, _out(out, "delta1.csv"))
    write_lines([f"solvability_residual={bundle.solvability_residual:.17g}",
                 f"g1_sup_norm={bundle.g1_sup_norm:.17g}",
                 f"delta1_sup_norm={bundle.delta1_sup_norm:.17g}",
                 f"unfolding={bundle.unfolding:.17g}",
                 f"condition={bundle.condition:.17g}",
                 f"fd_mu={mu_check:.17g}",
                 f"fd_error_uv={fd_errors['uv']:.17g}",
                 f"fd_error_y1={fd_errors['y1']:.17g}"],
                _out(out, "diagnostics.txt"))
    console_log.info(f"✓ Corrections: |Delta1| = {bundle.delta1_sup_norm:.6e}, "
                     f"finite-difference error {fd_errors['uv']:.2e}")
    return 0


def fit_loglog(mus: Sequence[float], remainders: Sequence[float]) -> Dict[str, float]:
    """Least-squares line through (log mu, log R); NaN when fewer than two usable points."""
    mus = np.asarray(mus, dtype=float)
    remainders = np.asarray(remainders, dtype=float)
    usable = (mus > 0) & np.isfinite(remainders) & (remainders > 0)
    if np.count_nonzero(usable) < 2:
        console_log.warning("⚠ fewer than two positive remainders; slope is undefined")
        return {"slope": float('nan'), "intercept": float('nan')}
    slope, intercept = np.polyfit(np.log(mus[usable]), np.log(remainders[usable]), 1)
    return {"slope": float(slope), "intercept": float(intercept)}


@dataclass(frozen=True)
class SweepPoint:
    """Continued escape path at one mu next to its first-order approximation"""
    mu: float
    numerical: Path
    approx: Path

    @property
    def remainder(self) -> float:
        """R(mu) = ||u0 + mu u1 - u_num(mu)||_L2 over the u-components."""
        return (self.approx - self.numerical).l2_norm()


def sweep_paths(model: VectorFieldModel, mus: Sequence[float], config: RunConfig,
                threads: int = 1) -> List[SweepPoint]:
    """u_num(mu) from the mpep pipeline and u0 + mu u1, on the base mesh, for every mu."""
    bases = solve_base_connections(model, config.bvp)
    bundle = compute_corrections(model, bases.reversed, config.bvp)
    u0 = bases.euler_lagrange.path.component(slice(0, model.n))

    def point(mu: float) -> SweepPoint:
        numerical = mpep(model, mu, config.bvp, bases=bases).mpep
        return SweepPoint(float(mu), numerical, Path(u0.times, u0.states + mu * bundle.u1.states))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(point, mus))


def sweep_remainders(model: VectorFieldModel, mus: Sequence[float], config: RunConfig,
                     threads: int = 1) -> List[float]:
    return [p.remainder for p in sweep_paths(model, mus, config, threads)]


def sweep_path_filename(mu: float) -> str:
    return f"sweep_path_mu{mu:g}.csv"


def cmd_sweep(config: RunConfig, args: argparse.Namespace, out: str) -> int:
    """Second-order remainder of the first-order expansion over a list of mu."""
    model = _load_model(config)
    mus = config.sweep.mus
    if not mus:
        raise ConfigError("empty mu list")
    points = sweep_paths(model, mus, config, config.threads)
    remainders = [p.remainder for p in points]
    fit = fit_loglog(mus, remainders)
    write_table({"mu": mus, "R": remainders}, _out(out, "sweep.csv"))
    write_lines([f"slope={fit['slope']:.17g}", f"intercept={fit['intercept']:.17g}"],
                _out(out, "sweep_fit.txt"))
    for p in points:
        columns = {"t": p.numerical.times}
        for label, path in (("u_num", p.numerical), ("u_approx", p.approx)):
            for k, name in enumerate(path_columns(model.n, f"{label}_x")):
                columns[name] = path.states[:, k]
        write_table(columns, _out(out, sweep_path_filename(p.mu)))
    if args.plot:
        from .utils.plotting import plot_paths, plot_sweep
        plot_sweep(_out(out, "sweep.html"), mus, remainders, fit["slope"], fit["intercept"])
        paths, names = [], []
        for p in points:
            paths += [p.numerical, p.approx]
            names += [f"u_num, mu = {p.mu:g}", f"u_approx, mu = {p.mu:g}"]
        plot_paths(_out(out, "sweep_paths.html"), paths, names,
                   title="Escape paths and first-order approximations")
    console_log.info(f"✓ Sweep over {len(mus)} values: slope {fit['slope']:.4f}")
    return 0


def cmd_simulate(config: RunConfig, args: argparse.Namespace, out: str) -> int:
    """Monte Carlo ensemble with exit statistics and the empirical escape path."""
    model = _load_model(config)
    if model.attractor is None:
        raise UnsupportedModelError(f"model '{model.name}' does not name an attractor")
    settings = config.sde
    cfg = SimConfig.from_settings(settings, model.attractor)
    ensemble = simulate(model, cfg, config.threads)

    locations = ensemble.exit_locations()
    columns = {"path_id": [e.path_id for e in ensemble.exits],
               "exit_time": ensemble.exit_times()}
    for k, name in enumerate(path_columns(model.n, "exit_x")):
        columns[name] = locations[:, k]
    write_table(columns, _out(out, "exits.csv"))

    lines = [f"n_paths={cfg.n_paths}", f"n_no_exit={ensemble.n_no_exit}",
             f"exit_rule={cfg.exit_rule.describe()}", f"rng={ensemble.rng}"]
    try:
        lines += exit_statistics(ensemble).lines()
    except InsufficientDataError as error:
        console_log.warning(f"⚠ {error}")
    try:
        path = empirical_mpep(ensemble, settings.n_anchor)
        write_path(path, _out(out, "empirical_mpep.csv"), time_label="s")
    except InsufficientDataError as error:
        console_log.warning(f"⚠ {error}")
    write_lines(lines, _out(out, "summary.txt"))
    return 0


def cmd_action(config: RunConfig, args: argparse.Namespace, out: str) -> int:
    """Action of a path read from CSV."""
    model = _load_model(config)
    path = read_path(args.path)
    report = action(path, model, args.mu)
    for line in report.lines():
        console_log.info(line)
    write_lines(report.lines(), _out(out, "action.txt"))
    return 0


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Fold subcommand options into the run configuration so that it echoes the effective values."""
    if args.out:
        config.out = args.out
    if args.threads is not None:
        config.threads = args.threads
    if args.command == "simulate":
        overrides = {k: v for k, v in (("eps", args.eps), ("mu", args.mu), ("n_paths", args.n),
                                       ("seed", args.seed), ("dt", args.dt), ("t_max", args.tmax))
                     if v is not None}
        config.sde = replace(config.sde, **overrides)
    elif args.command == "sweep" and args.mu_list:
        parse_float_list(args.mu_list)
        config.sweep = replace(config.sweep, mu_list=args.mu_list)
    elif args.command == "correction" and args.mu_check is not None:
        config.melnikov = replace(config.melnikov, fd_mu=args.mu_check)
    return config


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace, str], int]] = {
    "equilibria": cmd_equilibria,
    "het": cmd_het,
    "mpep": cmd_mpep,
    "correction": cmd_correction,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "action": cmd_action,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="escapepath",
                                     description="Most probable escape paths of perturbed gradient systems")
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--out", help="output directory (overrides [run] out)")
    parser.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    parser.add_argument("--threads", type=int, help="worker threads (overrides [run] threads)")
    parser.add_argument("--plot", action="store_true", help="also write HTML figures")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibria", help="refined equilibria and their spectra")
    p.add_argument("--mu", type=float, default=0.0)
    p = sub.add_parser("het", help="time-reversed deterministic heteroclinic")
    p.add_argument("--mu", type=float, default=0.0)
    p = sub.add_parser("mpep", help="most probable escape path")
    p.add_argument("--mu", type=float, default=0.0)
    p = sub.add_parser("correction", help="first-order corrections")
    p.add_argument("--mu-check", type=float, dest="mu_check")
    p = sub.add_parser("sweep", help="remainder of the first-order expansion")
    p.add_argument("--mu-list", dest="mu_list")
    p = sub.add_parser("simulate", help="Monte Carlo escape ensemble")
    p.add_argument("--eps", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--tmax", type=float)
    p = sub.add_parser("action", help="action of a path")
    p.add_argument("--path", required=True)
    p.add_argument("--mu", type=float, default=0.0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return 0 if not exit_.code else 1
    start = time.time()
    try:
        config = apply_overrides(load_run_config(args.config), args)
        out = prepare_output(config.out, args.force)
        resolved = config.resolved_lines()
        write_lines(resolved, _out(out, "resolved_config.txt"))
        file_log.debug("Resolved configuration:\n" + "\n".join(resolved))
        file_log.debug(f"Arguments: {DefaultStateSummarizer().summarize(vars(args))}")
        code = COMMANDS[args.command](config, args, out)
    except EscapePathError as error:
        file_log.error(f"{args.command} failed: {error}", exc_info=True)
        console_log.error(f"✗ {error}")
        return error.exit_code
    console_log.info(f"Done in {time.time() - start:.2f} s → {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
