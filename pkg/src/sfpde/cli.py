"""Command-line front end.

Subcommands:

    solve        deterministic forward solve (optionally checked against the
                 dense reference solver)
    mcs          Monte Carlo statistics over the configured random space
    pcm          probabilistic collocation statistics (tensor or sparse nodes)
    grid         emit a collocation node set without solving anything
    convergence  sweep one resolution parameter and tabulate errors

Every run writes a manifest (key = value lines) with the effective config
hash, seeds, package versions, and wall time, so results can be reproduced
bit for bit.  CSV schemas are fixed per subcommand; figures render to PNG
next to the tables unless plotting is disabled.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    config_reference,
    config_sha256,
    parse_config,
    serialize_config,
)
from .experiments import (
    deterministic_problem,
    node_set,
    observable_grid,
    random_space,
    stochastic_problem,
)
from .pgsolver import (
    assemble,
    evaluate_grid,
    solution_from_text,
    solution_to_text,
    solve_direct,
    solve_fast,
)
from .randomspace import smolyak_grid, tensor_grid
from .uq import exact_expectation_oracle, run_mcs, run_pcm
from . import reporting

__all__ = ["main"]

_ENV_OUT = "SFPDE_OUT_DIR"
_MANUFACTURED = ("ivp_power", "pde_onesided")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfpde",
        description="Spectral forward solver and UQ drivers for stochastic "
                    "fractional PDEs.")
    parser.add_argument("--config-reference", action="store_true",
                        help="print the annotated list of config keys and exit")
    sub = parser.add_subparsers(dest="command")
    for name, doc in [
        ("solve", "deterministic forward solve"),
        ("mcs", "Monte Carlo sampling statistics"),
        ("pcm", "probabilistic collocation statistics"),
        ("grid", "write the collocation node set"),
        ("convergence", "resolution sweep with an error table"),
    ]:
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", metavar="PATH", help="config file (key = value lines)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="override the config thread count")
        if name == "solve":
            p.add_argument("--check-direct", action="store_true",
                           help="cross-validate the fast solve against the dense solver")
    return parser


def _load_config(args) -> ExperimentConfig:
    if args.config is not None:
        text = Path(args.config).read_text()
    else:
        text = ""
    cfg = parse_config(text)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("threads must be at least 1")
        cfg = dataclasses.replace(cfg, threads=args.threads)
    if cfg.experiment is not None and cfg.experiment != args.command:
        raise ConfigError(
            f"config is for experiment {cfg.experiment!r} but the "
            f"{args.command!r} subcommand was invoked")
    return cfg


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out is not None:
        base = args.out
    elif os.environ.get(_ENV_OUT):
        base = os.environ[_ENV_OUT]
    else:
        base = cfg.out_dir
    out = Path(base)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest_base(command: str, cfg: ExperimentConfig) -> dict:
    entries = {"command": command,
               "config_sha256": config_sha256(serialize_config(cfg)),
               "seed": cfg.seed, "threads": cfg.threads}
    entries.update(reporting.version_entries())
    return entries


def _exact_field(cfg: ExperimentConfig, exact, grid):
    if cfg.has_space_dim:
        return exact(grid.times[:, None], grid.axes[0][None, :])
    return exact(grid.times)


class _SolutionCache:
    """Disk store of solved coefficient sets keyed by problem fingerprint."""

    def __init__(self, root: Path | None):
        self.root = root
        self.hits = 0
        self.writes = 0
        if root is not None:
            root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.txt"

    def solve(self, problem, boost: int):
        if self.root is None:
            system = assemble(problem, quadrature_boost=boost)
            return solve_fast(system)
        key = f"{problem.fingerprint()}-q{boost}"
        path = self._path(key)
        if path.exists():
            self.hits += 1
            return solution_from_text(path.read_text())
        system = assemble(problem, quadrature_boost=boost)
        solution = solve_fast(system)
        path.write_text(solution_to_text(solution))
        self.writes += 1
        return solution


def cmd_solve(args, cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    grid = observable_grid(cfg)
    problem, exact = deterministic_problem(cfg)
    cache = _SolutionCache(out / "cache" if cfg.cache else None)
    solution = cache.solve(problem, cfg.quadrature_boost)
    field = evaluate_grid(solution, grid.times, *grid.axes)

    manifest = _manifest_base("solve", cfg)
    if exact is not None:
        diff = field - _exact_field(cfg, exact, grid)
        manifest["l2_error"] = "%.17g" % grid.l2(diff)
        manifest["max_error"] = "%.17g" % grid.linf(diff)
    if args.check_direct:
        system = assemble(problem, quadrature_boost=cfg.quadrature_boost)
        direct = solve_direct(system)
        num = np.max(np.abs(solution.coefficients - direct.coefficients))
        den = max(np.max(np.abs(direct.coefficients)), 1e-300)
        manifest["check_direct_discrepancy"] = "%.17g" % (num / den)
    manifest["cache_hits"] = cache.hits
    manifest["cache_writes"] = cache.writes

    reporting.write_field_csv(out / "solution.csv", grid, field, name="u")
    if cfg.plots:
        reporting.render_field_png(out / "solution.png", grid, field)
    manifest["wall_time_s"] = "%.3f" % (time.perf_counter() - t0)
    reporting.write_manifest(out / "manifest.txt", manifest)
    return 0


def _stats_outputs(cfg: ExperimentConfig, out: Path, result, manifest: dict,
                   space) -> None:
    reporting.write_stats_csv(out / "stats.csv", result)
    reporting.write_norms_csv(out / "sample_norms.csv", result.sample_norms)
    if cfg.plots:
        reporting.render_stats_png(out / "stats.png", result)
    if cfg.case in _MANUFACTURED:
        grid = result.grid
        oracle = exact_expectation_oracle(
            cfg.case, space, grid,
            x_span=(cfg.x_lo, cfg.x_hi) if cfg.has_space_dim else None)
        manifest["mean_l2_error"] = "%.17g" % grid.l2(result.mean - oracle)
    manifest["sample_count"] = result.sample_count
    manifest["provenance"] = result.provenance
    for key, value in result.meta.items():
        if key in ("failed_indices",):
            manifest[key] = ",".join(str(i) for i in value) or "none"
        elif isinstance(value, float):
            manifest[key] = "%.17g" % value
        else:
            manifest[key] = value


def cmd_mcs(args, cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    problem = stochastic_problem(cfg)
    result = run_mcs(problem, cfg.samples, cfg.seed, threads=cfg.threads)
    manifest = _manifest_base("mcs", cfg)
    _stats_outputs(cfg, out, result, manifest, problem.space)
    manifest["wall_time_s"] = "%.3f" % (time.perf_counter() - t0)
    reporting.write_manifest(out / "manifest.txt", manifest)
    return 0


def cmd_pcm(args, cfg: ExperimentConfig, out: Path) -> int:
    if cfg.sweep_parameter == "smolyak_w":
        return _pcm_level_report(cfg, out)
    t0 = time.perf_counter()
    problem = stochastic_problem(cfg)
    nodes = node_set(cfg, problem.space)
    result = run_pcm(problem, nodes, threads=cfg.threads)
    manifest = _manifest_base("pcm", cfg)
    manifest["node_count"] = len(nodes)
    _stats_outputs(cfg, out, result, manifest, problem.space)
    manifest["wall_time_s"] = "%.3f" % (time.perf_counter() - t0)
    reporting.write_manifest(out / "manifest.txt", manifest)
    return 0


def _pcm_level_report(cfg: ExperimentConfig, out: Path) -> int:
    """Sparse-level comparison: statistics at each level in the sweep, with
    the finest level as benchmark; reports normalized discrepancies."""
    t0 = time.perf_counter()
    levels = [int(v) for v in cfg.sweep_values]
    if len(levels) < 2 or sorted(set(levels)) != levels:
        raise ConfigError("smolyak_w sweep needs strictly increasing levels")
    problem = stochastic_problem(cfg)
    grid = problem.observables
    cache: dict = {}
    results = {}
    for w in levels:
        results[w] = run_pcm(problem, smolyak_grid(problem.space, w),
                             threads=cfg.threads, field_cache=cache)
    ref = results[levels[-1]]
    mean_scale = max(grid.l2(ref.mean), 1e-300)
    std_scale = max(grid.l2(ref.std), 1e-300)
    rows = []
    for w in levels[:-1]:
        rows.append([w, results[w].sample_count,
                     grid.l2(results[w].mean - ref.mean) / mean_scale,
                     grid.l2(results[w].std - ref.std) / std_scale])
    reporting.write_table_csv(out / "separation.csv",
                              ["w", "nodes", "mean_discrepancy", "std_discrepancy"],
                              rows)
    manifest = _manifest_base("pcm", cfg)
    manifest["benchmark_w"] = levels[-1]
    manifest["benchmark_nodes"] = ref.sample_count
    manifest["mean_discrepancy"] = "%.17g" % rows[0][2]
    manifest["std_discrepancy"] = "%.17g" % rows[0][3]
    if rows[0][2] > 0.0:
        manifest["discrepancy_ratio"] = "%.17g" % (rows[0][3] / rows[0][2])
    _stats_outputs(cfg, out, ref, manifest, problem.space)
    manifest["wall_time_s"] = "%.3f" % (time.perf_counter() - t0)
    reporting.write_manifest(out / "manifest.txt", manifest)
    return 0


def cmd_grid(args, cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    space = random_space(cfg)
    nodes = node_set(cfg, space)
    reporting.write_nodes_csv(out / "nodes.csv", nodes)
    manifest = _manifest_base("grid", cfg)
    manifest["node_count"] = len(nodes)
    manifest["dimension"] = space.ndim
    manifest["provenance"] = nodes.provenance
    manifest["weight_sum"] = "%.17g" % float(nodes.weights.sum())
    manifest["wall_time_s"] = "%.3f" % (time.perf_counter() - t0)
    reporting.write_manifest(out / "manifest.txt", manifest)
    return 0


def _fit_slope(xs, errors) -> float | None:
    xs = np.asarray(xs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if xs.size < 2 or np.any(errors <= 0.0) or np.any(xs <= 0.0):
        return None
    return float(np.polyfit(np.log10(xs), np.log10(errors), 1)[0])


def _deterministic_sweep(cfg: ExperimentConfig, out: Path):
    grid = observable_grid(cfg)
    cache = _SolutionCache(out / "cache" if cfg.cache else None)
    rows = []
    for value in cfg.sweep_values:
        v = int(value)
        sub = dataclasses.replace(cfg, **{cfg.sweep_parameter: v})
        problem, exact = deterministic_problem(sub)
        solution = cache.solve(problem, sub.quadrature_boost)
        field = evaluate_grid(solution, grid.times, *grid.axes)
        err = grid.l2(field - _exact_field(sub, exact, grid))
        rows.append([v, err])
    header = [cfg.sweep_parameter, "l2_error"]
    fit_x = [r[0] for r in rows]
    extra = {"cache_hits": cache.hits, "cache_writes": cache.writes}
    return header, rows, fit_x, extra


def _sampling_sweep(cfg: ExperimentConfig, out: Path):
    problem = stochastic_problem(cfg)
    grid = problem.observables
    oracle = exact_expectation_oracle(
        cfg.case, problem.space, grid,
        x_span=(cfg.x_lo, cfg.x_hi) if cfg.has_space_dim else None)
    rows = []
    cache: dict = {}
    for value in cfg.sweep_values:
        v = int(value)
        if cfg.sweep_parameter == "samples":
            result = run_mcs(problem, v, cfg.seed, threads=cfg.threads)
            count = v
        elif cfg.sweep_parameter == "smolyak_w":
            result = run_pcm(problem, smolyak_grid(problem.space, v),
                             threads=cfg.threads, field_cache=cache)
            count = result.sample_count
        else:
            orders = (v,) * problem.space.ndim
            result = run_pcm(problem, tensor_grid(problem.space, orders),
                             threads=cfg.threads, field_cache=cache)
            count = result.sample_count
        rows.append([v, count, grid.l2(result.mean - oracle)])
    header = [cfg.sweep_parameter, "evaluations", "mean_l2_error"]
    fit_x = [r[1] for r in rows]
    return header, rows, fit_x, {}


def cmd_convergence(args, cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    if cfg.sweep_parameter is None:
        raise ConfigError("convergence requires sweep_parameter and sweep_values")
    if cfg.sweep_parameter in ("n_time", "m_space"):
        if cfg.case not in _MANUFACTURED:
            raise ConfigError(
                f"{cfg.sweep_parameter} sweep needs a case with a closed-form solution")
        header, rows, fit_x, extra = _deterministic_sweep(cfg, out)
    elif cfg.sweep_parameter == "smolyak_w" and cfg.case not in _MANUFACTURED:
        return _pcm_level_report(cfg, out)
    else:
        if cfg.case not in _MANUFACTURED:
            raise ConfigError(
                f"{cfg.sweep_parameter} sweep needs a case with a closed-form solution")
        header, rows, fit_x, extra = _sampling_sweep(cfg, out)

    reporting.write_table_csv(out / "convergence.csv", header, rows)
    manifest = _manifest_base("convergence", cfg)
    manifest["sweep_parameter"] = cfg.sweep_parameter
    manifest["points"] = len(rows)
    manifest.update(extra)
    slope = _fit_slope(fit_x, [r[-1] for r in rows]) if len(rows) > 1 else None
    if slope is not None:
        manifest["fit_slope"] = "%.6g" % slope
    if cfg.plots and len(rows) > 1 and all(r[-1] > 0 for r in rows):
        reporting.render_convergence_png(
            out / "convergence.png", fit_x, [r[-1] for r in rows],
            xlabel=header[-2] if len(header) > 2 else header[0],
            ylabel=header[-1], slope=slope)
    manifest["wall_time_s"] = "%.3f" % (time.perf_counter() - t0)
    reporting.write_manifest(out / "manifest.txt", manifest)
    return 0


_COMMANDS = {
    "solve": cmd_solve,
    "mcs": cmd_mcs,
    "pcm": cmd_pcm,
    "grid": cmd_grid,
    "convergence": cmd_convergence,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.config_reference:
        print(config_reference())
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        cfg = _load_config(args)
        out = _out_dir(args, cfg)
        return _COMMANDS[args.command](args, cfg, out)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
