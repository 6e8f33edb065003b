"""Batch front end: run experiments from config files and persist artifacts.

Verbs:

* ``bgopt run <config.yaml>``      -- run every seed, write traces/summaries
* ``bgopt validate <config.yaml>`` -- parse and validate only
* ``bgopt oracle <benchmark>``     -- print the pinned optimum fixtures

Exit codes: 0 success, 1 config error, 2 runtime failure.  The environment
variable ``BGOPT_OUTPUT_ROOT``, when set, re-roots relative output
directories.

Per seed the run directory gains ``trace.jsonl`` (one record per iteration,
flushed as written), ``summary.json`` (terminal bounds, recommendation,
resolved config echo), and plot-ready tables ``max_eei.tsv`` and
``pboo.tsv``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import benchmarks
from .design import BoxBounds, lhs
from .gp import Dataset
from .hyper import McmcConfig
from .optimize import BgoConfig, ObjectiveError, ObjectiveFn, RunTrace, run

__all__ = [
    "ConfigError",
    "load_config",
    "run_experiment",
    "external_objective_bridge",
    "main",
]

OUTPUT_ROOT_ENV = "BGOPT_OUTPUT_ROOT"

DEFAULTS = {
    "initial": {"n": 5},
    "run": {
        "max_iters": 50,
        "eei_tolerance": 1e-4,
        "n_candidates": 1000,
        "uq_m": 100,
        "uq_every": 1,
    },
    "mcmc": {
        "n_particles": 90,
        "burn_in": 10000,
        "post_burn_steps": 90000,
        "thin": 1000,
    },
    "seeds": [0],
    "workers": 1,
    "objective": {"timeout": 60.0},
}


class ConfigError(ValueError):
    """Invalid experiment config; ``problems`` lists field-level messages."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _require(cond: bool, problems: list, field: str, message: str):
    if not cond:
        problems.append(f"{field}: {message}")
    return cond


def load_config(path) -> dict:
    """Parse a YAML experiment config and materialize all defaults.

    Raises :class:`ConfigError` with one message per offending field; YAML
    syntax errors keep the parser's line/column information.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: YAML parse error: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a mapping"])

    problems: list[str] = []
    cfg = {
        "objective": dict(DEFAULTS["objective"]),
        "initial": dict(DEFAULTS["initial"]),
        "run": dict(DEFAULTS["run"]),
        "mcmc": dict(DEFAULTS["mcmc"]),
        "seeds": list(DEFAULTS["seeds"]),
        "workers": DEFAULTS["workers"],
    }
    for section in ("objective", "initial", "run", "mcmc"):
        block = raw.get(section, {})
        if not isinstance(block, dict):
            problems.append(f"{section}: must be a mapping")
            continue
        unknown = set(block) - _KNOWN_KEYS[section]
        for key in sorted(unknown):
            problems.append(f"{section}.{key}: unknown key")
        cfg[section].update({k: v for k, v in block.items() if k not in unknown})

    # objective: exactly one of benchmark / command
    obj = cfg["objective"]
    has_bench = "benchmark" in obj
    has_cmd = "command" in obj
    if has_bench == has_cmd:
        problems.append("objective: specify exactly one of 'benchmark' or 'command'")
    if has_bench:
        _require(
            obj["benchmark"] in benchmarks.BENCHMARKS,
            problems,
            "objective.benchmark",
            f"must be one of {benchmarks.BENCHMARKS}",
        )
    if has_cmd:
        ok = isinstance(obj["command"], list) and obj["command"] and all(
            isinstance(a, str) for a in obj["command"]
        )
        _require(ok, problems, "objective.command", "must be a nonempty list of strings")
    noise_block = obj.get("noise", {"kind": "constant", "scale": 0.1})
    if not isinstance(noise_block, dict) or "kind" not in noise_block:
        problems.append("objective.noise: must be a mapping with a 'kind'")
    obj["noise"] = noise_block

    # bounds: required for external commands, defaulted for benchmarks
    bounds_block = raw.get("bounds")
    if bounds_block is None:
        if has_bench and obj.get("benchmark") in benchmarks.BENCHMARKS:
            bb = benchmarks.benchmark_bounds(obj["benchmark"])
            bounds_block = {"lower": bb.lower.tolist(), "upper": bb.upper.tolist()}
        else:
            problems.append("bounds: required when the objective is an external command")
            bounds_block = {"lower": [0.0], "upper": [1.0]}
    if not (
        isinstance(bounds_block, dict)
        and "lower" in bounds_block
        and "upper" in bounds_block
    ):
        problems.append("bounds: must be a mapping with 'lower' and 'upper' lists")
    else:
        try:
            BoxBounds(bounds_block["lower"], bounds_block["upper"])
        except (ValueError, TypeError) as exc:
            problems.append(f"bounds: {exc}")
    cfg["bounds"] = bounds_block

    ini = cfg["initial"]
    _require(
        isinstance(ini.get("n"), int) and ini["n"] >= 1,
        problems,
        "initial.n",
        "must be an integer >= 1",
    )

    runb = cfg["run"]
    for key, min_ok in (("max_iters", 1), ("n_candidates", 1), ("uq_m", 1), ("uq_every", 0)):
        _require(
            isinstance(runb.get(key), int) and runb[key] >= min_ok,
            problems,
            f"run.{key}",
            f"must be an integer >= {min_ok}",
        )
    _require(
        isinstance(runb.get("eei_tolerance"), (int, float)) and runb["eei_tolerance"] > 0,
        problems,
        "run.eei_tolerance",
        "must be a positive number",
    )

    mc = cfg["mcmc"]
    for key in ("n_particles", "burn_in", "post_burn_steps", "thin"):
        _require(
            isinstance(mc.get(key), int) and mc[key] >= 0,
            problems,
            f"mcmc.{key}",
            "must be a nonnegative integer",
        )
    if not problems:
        try:
            McmcConfig(**mc)
        except ValueError as exc:
            problems.append(f"mcmc: {exc}")

    seeds = raw.get("seeds", cfg["seeds"])
    if not (isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds)):
        problems.append("seeds: must be a nonempty list of integers")
    else:
        cfg["seeds"] = seeds

    workers = raw.get("workers", cfg["workers"])
    if not (isinstance(workers, int) and workers >= 1):
        problems.append("workers: must be an integer >= 1")
    else:
        cfg["workers"] = workers

    out_dir = raw.get("output_dir")
    if not isinstance(out_dir, str) or not out_dir:
        problems.append("output_dir: required (string path)")
    cfg["output_dir"] = out_dir

    if problems:
        raise ConfigError(problems)
    return cfg


_KNOWN_KEYS = {
    "objective": {"benchmark", "command", "noise", "timeout"},
    "initial": {"n"},
    "run": {"max_iters", "eei_tolerance", "n_candidates", "uq_m", "uq_every"},
    "mcmc": {"n_particles", "burn_in", "post_burn_steps", "thin"},
}


def _noise_model(noise_block: dict, dim: int) -> benchmarks.NoiseModel:
    kind = noise_block["kind"]
    if kind == "constant":
        return benchmarks.NoiseModel.constant(float(noise_block.get("scale", 0.1)))
    if kind == "heteroscedastic":
        kind = f"heteroscedastic-{dim}d"
    return benchmarks.NoiseModel(kind)


def _build_objective(cfg: dict, dim: int) -> ObjectiveFn:
    obj = cfg["objective"]
    if "benchmark" in obj:
        return benchmarks.make_objective(obj["benchmark"], _noise_model(obj["noise"], dim))
    return external_objective_bridge(obj["command"], timeout=float(obj["timeout"]))


def external_objective_bridge(command: list[str], timeout: float = 60.0) -> ObjectiveFn:
    """Wrap an executable as an objective.

    Per evaluation the design point is written to the child's stdin as one
    whitespace-separated line; a single real number is read back from its
    stdout.  Timeouts, crashes, and unparsable or non-finite output raise
    :class:`ObjectiveError`.
    """

    def evaluate(x: np.ndarray, rng: np.random.Generator) -> float:
        line = " ".join(repr(float(v)) for v in np.asarray(x).reshape(-1)) + "\n"
        try:
            proc = subprocess.run(
                command,
                input=line,
                capture_output=True,
                text=True,
                timeout=timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise ObjectiveError(f"objective command timed out after {timeout}s") from exc
        except OSError as exc:
            raise ObjectiveError(f"objective command failed to start: {exc}") from exc
        if proc.returncode != 0:
            raise ObjectiveError(
                f"objective command exited with {proc.returncode}: {proc.stderr.strip()!r}"
            )
        out = proc.stdout.strip().split()
        try:
            y = float(out[-1])
        except (IndexError, ValueError) as exc:
            raise ObjectiveError(
                f"objective command output not a number: {proc.stdout.strip()!r}"
            ) from exc
        if not math.isfinite(y):
            raise ObjectiveError(f"objective command returned non-finite value {y!r}")
        return y

    return evaluate


def _resolve_output_dir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _seed_dir(out: Path, seed: int) -> Path:
    return out / f"seed-{seed}"


def _trace_tables(seed_dir: Path, trace: RunTrace) -> None:
    with open(seed_dir / "max_eei.tsv", "w") as fh:
        fh.write("iteration\tmax_eei\n")
        for r in trace.records:
            fh.write(f"{r.iteration}\t{r.max_eei!r}\n")
    with open(seed_dir / "pboo.tsv", "w") as fh:
        fh.write("iteration\tpboo_lo\tpboo_median\tpboo_hi\n")
        for r in trace.records:
            if r.pboo_lo is not None:
                fh.write(f"{r.iteration}\t{r.pboo_lo!r}\t{r.pboo_median!r}\t{r.pboo_hi!r}\n")


def _summary_dict(trace: RunTrace, seed: int, resolved: dict) -> dict:
    summary = {
        "seed": seed,
        "status": trace.status,
        "error": trace.error,
        "n_observations": int(trace.dataset.n),
        "n_evaluations": trace.n_evaluations,
        "terminal_pboo": None,
        "recommendation": None,
        "config": resolved,
    }
    if trace.final_pboo is not None:
        summary["terminal_pboo"] = {
            "lo": trace.final_pboo[0],
            "median": trace.final_pboo_median,
            "hi": trace.final_pboo[1],
        }
    if trace.x_best is not None:
        summary["recommendation"] = {
            "x": [float(v) for v in trace.x_best],
        }
    return summary


def _run_seed(cfg: dict, seed: int, out_dir_str: str) -> dict:
    """Run one seed end to end and write its artifacts; returns the summary."""
    seed_dir = Path(out_dir_str) / f"seed-{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    bounds = BoxBounds(cfg["bounds"]["lower"], cfg["bounds"]["upper"])
    objective = _build_objective(cfg, bounds.dim)

    rng_init = np.random.default_rng([seed, 0xB60])
    pts = lhs(cfg["initial"]["n"], bounds, rng_init)
    try:
        values = [objective(p, rng_init) for p in pts]
    except ObjectiveError as exc:
        summary = {
            "seed": seed,
            "status": "objective-error",
            "error": f"initial design evaluation failed: {exc}",
            "n_observations": 0,
            "n_evaluations": 0,
            "terminal_pboo": None,
            "recommendation": None,
            "config": cfg,
        }
        (seed_dir / "summary.json").write_text(json.dumps(summary, indent=2))
        return summary
    initial = Dataset(pts, values)

    bgo = BgoConfig(
        max_iters=cfg["run"]["max_iters"],
        eei_tolerance=cfg["run"]["eei_tolerance"],
        n_candidates=cfg["run"]["n_candidates"],
        mcmc=McmcConfig(**cfg["mcmc"]),
        uq_m=cfg["run"]["uq_m"],
        uq_every=cfg["run"]["uq_every"],
        seed=seed,
    )
    trace = run(objective, initial, bounds, bgo, trace_path=seed_dir / "trace.jsonl")
    _trace_tables(seed_dir, trace)
    summary = _summary_dict(trace, seed, cfg)
    (seed_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def run_experiment(config_path) -> int:
    """Execute every seed of an experiment config; returns the exit code."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1

    out = _resolve_output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True))

    seeds = cfg["seeds"]
    failed = False
    try:
        if cfg["workers"] > 1 and len(seeds) > 1:
            with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
                futures = [pool.submit(_run_seed, cfg, s, str(out)) for s in seeds]
                summaries = [f.result() for f in futures]
        else:
            summaries = [_run_seed(cfg, s, str(out)) for s in seeds]
    except Exception as exc:  # unexpected runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    for summary in summaries:
        tag = f"seed {summary['seed']}: {summary['status']}"
        if summary["terminal_pboo"] is not None:
            tp = summary["terminal_pboo"]
            tag += f"  pboo=[{tp['lo']:.6g}, {tp['hi']:.6g}]"
        if summary["status"] == "objective-error":
            failed = True
        print(tag)
    return 2 if failed else 0


def _cmd_validate(path) -> int:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1
    print(yaml.safe_dump(cfg, sort_keys=True), end="")
    return 0


def _cmd_oracle(benchmark: str) -> int:
    try:
        minimizers, value = benchmarks.oracle_optimum(benchmark)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"benchmark: {benchmark}")
    print(f"optimal value: {value!r}")
    for row in minimizers:
        print("minimizer: " + " ".join(repr(float(v)) for v in row))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bgopt",
        description="Bayesian global optimization of noisy objectives.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to a YAML experiment config")
    p_val = sub.add_parser("validate", help="parse and validate a config")
    p_val.add_argument("config", help="path to a YAML experiment config")
    p_orc = sub.add_parser("oracle", help="print pinned benchmark optimum fixtures")
    p_orc.add_argument("benchmark", help=f"one of {', '.join(benchmarks.BENCHMARKS)}")
    args = parser.parse_args(argv)

    if args.verb == "run":
        return run_experiment(args.config)
    if args.verb == "validate":
        return _cmd_validate(args.config)
    return _cmd_oracle(args.benchmark)


if __name__ == "__main__":
    sys.exit(main())
