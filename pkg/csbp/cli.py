"""
Command-line entry point

    python -m csbp v-table --mechanism neveu
    python -m csbp simulate-lineages --config experiment.toml --seed 7
    python -m csbp verify --threads 4

Exit codes: 0 success, 1 failed checks, 2 usage or configuration error.
"""
import argparse
import json
import logging
import math
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .config import config
from .cumulant import CumulantSolver, kappa_lambda, solver_for, v, v_inf
from .errors import CsbpError
from .flow import simulate_lineage_batch, trajectory_frame
from .laplace import density_g, density_g_grey
from .limit import ancestral_partition, hausdorff_index, partition_frame, path_frame, simulate_W_until
from .models import INF, ExperimentConfig, MechanismConfig, is_infinite
from .sampler import RngStream
from .state import run_metadata
from .validation import ConfigValidator
from .verify import report_json, report_table, run_suite, suite_passed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_USAGE = 2


class ConfigError(Exception):
    """Unusable configuration; the message names the offending key"""


# ============= CONFIGURATION =============

def load_config(path: Optional[str]) -> ExperimentConfig:
    """TOML or JSON experiment file; defaults when path is None"""
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        if p.suffix.lower() == ".json":
            raw = json.loads(p.read_text())
        else:
            with p.open("rb") as fh:
                raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    return _validated(raw)


def _validated(raw: Dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first['loc'])
        raise ConfigError(f"{key}: {first['msg']}")


def apply_overrides(exp: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Command-line flags win over file values"""
    raw = exp.model_dump()
    if args.seed is not None:
        raw['seed'] = args.seed
    if args.threads is not None:
        raw['threads'] = args.threads
    if args.out_dir is not None:
        raw['out_dir'] = args.out_dir
    if args.mechanism is not None:
        raw['mechanism'] = MechanismConfig(builtin=args.mechanism).model_dump()
        # verify runs on built-ins by name; the flag narrows it to one
        raw['verify']['mechanisms'] = [args.mechanism]
    if args.replicas is not None:
        raw['lineages']['replicas'] = args.replicas
        raw['limit']['replicas'] = args.replicas
        raw['verify']['replicas'] = args.replicas
        raw['density']['mc_paths'] = args.replicas
    return _validated(raw)


# ============= OUTPUT =============

def write_csv(frame: pd.DataFrame, path: Path, metadata: Dict[str, str]) -> None:
    """CSV with '# key: value' header lines"""
    with path.open("w", newline="") as fh:
        for key, value in metadata.items():
            fh.write(f"# {key}: {value}\n")
        frame.to_csv(fh, index=False, float_format="%.12g")
    logger.info("wrote %s (%d rows)", path, len(frame))


def write_json(payload: str, path: Path) -> None:
    path.write_text(payload + "\n")
    logger.info("wrote %s", path)


# ============= COMMANDS =============

def cmd_v_table(exp: ExperimentConfig, s: CumulantSolver, out: Path, meta: Dict[str, str]) -> int:
    """v_t(λ), v_t(∞) and κ_λ(θ), κ_∞(θ) over the configured grids"""
    cfg = exp.v_table
    columns = ['t', 'lam', 'v', 'v_inf']
    for theta in cfg.thetas:
        columns += [f"kappa_{theta:g}", f"kappa_inf_{theta:g}"]
    rows = []
    for t in cfg.times:
        vi = v_inf(s, t) if t > 0 else INF
        for lam in cfg.lambdas:
            row = {'t': t, 'lam': lam, 'v': v(s, t, lam), 'v_inf': vi}
            for theta in cfg.thetas:
                row[f"kappa_{theta:g}"] = kappa_lambda(s, lam, theta)
                row[f"kappa_inf_{theta:g}"] = kappa_lambda(s, INF, theta) if s.grey else math.nan
            rows.append(row)
    write_csv(pd.DataFrame(rows, columns=columns), out / "v_table.csv", meta)
    return EXIT_OK


def cmd_simulate_lineages(exp: ExperimentConfig, s: CumulantSolver, out: Path, meta: Dict[str, str]) -> int:
    """Backward lineage trajectories, hitting times and first merges"""
    cfg = exp.lineages
    batch = simulate_lineage_batch(
        s, cfg.x, cfg.horizon, step=cfg.step, resolution=cfg.resolution, levels=cfg.levels,
        replicas=cfg.replicas, stream=RngStream(seed=exp.seed), record_every=cfg.record_every,
        threads=exp.threads,
    )
    write_csv(trajectory_frame(batch), out / "lineages.csv", meta)

    R, n = batch.merge_times.shape[0], batch.x.size
    if batch.levels.size:
        hits = batch.hitting_times
        write_csv(pd.DataFrame({
            'replica': np.repeat(np.arange(R), n * batch.levels.size),
            'x_index': np.tile(np.repeat(np.arange(n), batch.levels.size), R),
            'level': np.tile(batch.levels, R * n),
            'hitting_time': hits.ravel(),
        }), out / "hitting_times.csv", meta)
    if n > 1:
        write_csv(pd.DataFrame({
            'replica': np.repeat(np.arange(R), n - 1),
            'pair': np.tile(np.arange(n - 1), R),
            'merge_time': batch.merge_times.ravel(),
        }), out / "merges.csv", meta)
    if batch.extensions:
        logger.info("%d lineage steps continued past their segment windows", batch.extensions)
    return EXIT_OK


def cmd_simulate_limit(exp: ExperimentConfig, s: CumulantSolver, out: Path, meta: Dict[str, str]) -> int:
    """Paths of W^λ and the ancestral partition of [0, x_max]"""
    cfg = exp.limit
    stream = RngStream(seed=exp.seed)
    paths, parts, bias, eps = [], [], 0.0, 0.0
    for r in range(cfg.replicas):
        p = simulate_W_until(s, cfg.lam, cfg.x_max, eps=cfg.eps, rng=stream.child(r).generator())
        bias, eps = p.truncation_bias, p.eps
        paths.append(path_frame(p).assign(replica=r))
        parts.append(partition_frame(ancestral_partition(p, cfg.x_max)).assign(replica=r))
    write_csv(pd.concat(paths, ignore_index=True), out / "w_paths.csv", meta)
    write_csv(pd.concat(parts, ignore_index=True), out / "partition.csv", meta)
    summary = {
        **meta,
        'lam': cfg.lam,
        'eps': eps,
        'truncation_bias': bias,
        'hausdorff_index': hausdorff_index(s.mechanism),
        'grey': s.grey,
    }
    write_json(json.dumps(summary, indent=2, sort_keys=True), out / "limit_summary.json")
    return EXIT_OK


def cmd_density(exp: ExperimentConfig, s: CumulantSolver, out: Path, meta: Dict[str, str]) -> int:
    """g^λ_x(u) by Monte Carlo, with the series form alongside when it exists"""
    cfg = exp.density
    series_ok = s.grey and is_infinite(cfg.lam)
    stream = RngStream(seed=exp.seed)
    rows = []
    for i, u in enumerate(cfg.u):
        mc, se = density_g(s, cfg.lam, cfg.x, u, cfg.mc_paths, stream.child(i).generator(), eps=cfg.eps)
        series = density_g_grey(s, cfg.x, u, n_max=cfg.n_max) if series_ok else math.nan
        tolerance = exp.verify.z_threshold * se
        rows.append({
            'u': u, 'series': series, 'mc': mc, 'mc_se': se, 'tolerance': tolerance,
            'agree': bool(abs(series - mc) <= tolerance) if series_ok else None,
        })
    frame = pd.DataFrame(rows, columns=['u', 'series', 'mc', 'mc_se', 'tolerance', 'agree'])
    write_csv(frame, out / "density.csv", meta)
    return EXIT_OK


def cmd_verify(exp: ExperimentConfig, s: CumulantSolver, out: Path, meta: Dict[str, str]) -> int:
    """Run the check suite; exit 1 unless it passes"""
    results = run_suite(exp.verify, RngStream(seed=exp.seed), threads=exp.threads)
    write_json(report_json(results, meta), out / "report.json")
    print(report_table(results))
    passed = suite_passed(results)
    print(f"\nsuite {'PASSED' if passed else 'FAILED'}: "
          f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if passed else EXIT_CHECKS_FAILED


COMMANDS: Dict[str, Callable[..., int]] = {
    'v-table': cmd_v_table,
    'simulate-lineages': cmd_simulate_lineages,
    'simulate-limit': cmd_simulate_limit,
    'density': cmd_density,
    'verify': cmd_verify,
}


# ============= ENTRY POINT =============

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", default=None, help="TOML or JSON experiment file")
    common.add_argument("--seed", "-s", type=int, default=None)
    common.add_argument("--replicas", "-R", type=int, default=None)
    common.add_argument("--out-dir", "-o", default=None)
    common.add_argument("--mechanism", "-m", default=None,
                        help=f"built-in mechanism ({', '.join(config.builtin_names)})")
    common.add_argument("--threads", "-t", type=int, default=None)
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(
        prog="csbp",
        description="Subcritical continuous-state branching processes: cumulants, lineages and limits",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or "").strip())
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        exp = apply_overrides(load_config(args.config), args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    errors, warnings = ConfigValidator.validate_experiment(exp, args.command)
    for w in warnings:
        logger.warning(w)
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = run_metadata(args.command, exp, exp.seed)
    write_json(exp.model_dump_json(indent=2), out / "config.json")

    s = solver_for(exp.mechanism.build())
    try:
        return COMMANDS[args.command](exp, s, out, meta)
    except CsbpError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
