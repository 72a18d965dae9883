"""Command line entry point: ``rcv run|validate|list-experiments``.

Config files are JSON objects::

    {"experiment": "loss-landscape", "seed": 1, "output_dir": "out/landscape",
     "parameters": {"m_outer": 200}}

Parameters not given take the experiment defaults (``list-experiments --verbose``
prints them).  ``--seed``, ``--output-dir`` and ``--set key=json`` override the
file, and the environment variable ``RCV_SEED`` overrides every other seed source.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import backend
from .experiments import BUDGETS, DEFAULTS, DESCRIPTIONS, RUNNERS, resolve

log = logging.getLogger("rcv")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
TOP_LEVEL_KEYS = {"experiment", "parameters", "seed", "output_dir"}
MAX_SEED = 2 ** 63 - 1


class ConfigError(ValueError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - running from a source tree
        return "unknown"


def _kind(value):
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    if isinstance(value, dict):
        return "object"
    return "null"


def _check_params(experiment, params, prefix, defaults, errors):
    for key, value in params.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            errors.append(f"unknown parameter {path!r}")
            continue
        ref = defaults[key]
        if ref is None:
            # optional numeric (e.g. a fixed bandwidth)
            if value is not None and _kind(value) not in ("number", "list"):
                errors.append(f"parameter {path!r} must be a number, a list of numbers or null")
            continue
        if isinstance(ref, dict):
            if not isinstance(value, dict):
                errors.append(f"parameter {path!r} must be an object")
            else:
                _check_params(experiment, value, path + ".", ref, errors)
            continue
        want = _kind(ref)
        got = _kind(value)
        if key == "sigma" and got == "string":
            got = "number"
        if want != got:
            errors.append(f"parameter {path!r} must be a {want}, got {got}")
        elif want == "list":
            for item in value:
                if _kind(item) not in ("number", "string") or (isinstance(item, str) and item != "inf"):
                    errors.append(f"parameter {path!r} may only hold numbers (or 'inf' for sigma)")
                    break


def validate_config(cfg) -> list:
    """All problems with a parsed config, as messages (empty when valid)."""
    errors = []
    if not isinstance(cfg, dict):
        return ["config must be a JSON object"]
    for key in sorted(set(cfg) - TOP_LEVEL_KEYS):
        errors.append(f"unknown key {key!r}")
    exp = cfg.get("experiment")
    if exp is None:
        errors.append("missing key 'experiment'")
    elif exp not in RUNNERS:
        errors.append(f"unknown experiment {exp!r}; choose from {sorted(RUNNERS)}")
    seed = cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MAX_SEED:
        errors.append("'seed' must be a nonnegative integer")
    if "output_dir" in cfg and not isinstance(cfg["output_dir"], str):
        errors.append("'output_dir' must be a string")
    params = cfg.get("parameters", {})
    if not isinstance(params, dict):
        errors.append("'parameters' must be an object")
    elif exp in RUNNERS:
        _check_params(exp, params, "", DEFAULTS[exp], errors)
        if not errors:
            errors += _semantic_checks(exp, resolve(exp, params))
    return errors


def _semantic_checks(exp, p) -> list:
    errors = []
    if "level_weighting" in p and p["level_weighting"] not in ("normalized", "coarea"):
        errors.append("'level_weighting' must be 'normalized' or 'coarea'")
    if exp == "circular-loss" and p["denominator"] not in ("exact", "smoothed"):
        errors.append("'denominator' must be 'exact' or 'smoothed'")
    for key in ("sigmas",):
        for s in p.get(key, []):
            if s != "inf" and not (isinstance(s, (int, float)) and s > 0):
                errors.append(f"'{key}' entries must be positive or 'inf'")
                break
    for key in ("n_z", "n_level", "n_pairs", "m_outer", "n_alpha", "n_trials", "grid_k", "samples_per_cell",
                "n_replicas", "n_chains", "k_eigs"):
        if key in p and not (isinstance(p[key], int) and p[key] >= 1):
            errors.append(f"'{key}' must be a positive integer")
    if "n_level" in p and "n_pairs" in p and isinstance(p["n_level"], int) and isinstance(p["n_pairs"], int):
        if p["n_pairs"] > p["n_level"] * (p["n_level"] - 1) // 2:
            errors.append("'n_pairs' exceeds n_level*(n_level-1)/2")
    if exp in ("circular-loss", "spectrum") and "inf" in p["sigmas"]:
        errors.append("the circular potential needs finite sigmas")
    return errors


def load_config(path, overrides=None) -> dict:
    """Parse and validate; ``overrides`` (from flags) replace file keys before validation."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path} is not valid JSON: {exc}"]) from exc
    if isinstance(cfg, dict):
        for key, value in (overrides or {}).items():
            if key == "parameters":
                cfg.setdefault("parameters", {})
                if isinstance(cfg["parameters"], dict):
                    cfg["parameters"].update(value)
            else:
                cfg[key] = value
    errors = validate_config(cfg)
    env = os.environ.get("RCV_SEED")
    if env is not None:
        try:
            seed = int(env)
            if not 0 <= seed <= MAX_SEED:
                raise ValueError
        except ValueError:
            errors.append(f"RCV_SEED={env!r} is not a nonnegative integer")
        else:
            cfg["seed"] = seed
    if errors:
        raise ConfigError(errors)
    return cfg


def _overrides(args) -> dict:
    out, params = {}, {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.output_dir is not None:
        out["output_dir"] = args.output_dir
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError([f"--set expects key=value, got {item!r}"])
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    if params:
        out["parameters"] = params
    return out


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_config(cfg: dict, threads: int = 1, config_path=None) -> dict:
    """Execute a validated config; returns the manifest (also written next to the CSVs)."""
    exp = cfg["experiment"]
    seed = int(cfg.get("seed", 0))
    params = resolve(exp, cfg.get("parameters", {}))
    out = Path(cfg.get("output_dir") or f"rcv-output/{exp}")
    out.mkdir(parents=True, exist_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            paths, summary = RUNNERS[exp](params, seed, out, pool)
    else:
        paths, summary = RUNNERS[exp](params, seed, out, None)
    elapsed = time.perf_counter() - t0
    manifest = {
        "experiment": exp,
        "config_file": str(config_path) if config_path else None,
        "resolved_config": {"experiment": exp, "seed": seed, "output_dir": str(out), "parameters": params},
        "seed_source": "RCV_SEED" if "RCV_SEED" in os.environ else "config",
        "artifact_version": _version(),
        "kernel_backend": backend.NAME,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": threads,
        "budget_seconds": BUDGETS[exp],
        "started_utc": started.isoformat(),
        "elapsed_seconds": elapsed,
        "outputs": [{"file": Path(p).name, "sha256": _sha256(p)} for p in paths],
        "summary": summary,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2)
        fh.write("\n")
    if elapsed > BUDGETS[exp]:
        log.warning("%s took %.0f s, above its declared budget of %d s", exp, elapsed, BUDGETS[exp])
    return manifest


def _parser():
    ap = argparse.ArgumentParser(prog="rcv", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        sp = sub.add_parser(name, help=f"{name} an experiment config")
        sp.add_argument("config", help="path to a JSON config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--output-dir", help="override the config output directory")
        sp.add_argument("--set", action="append", metavar="KEY=JSON", help="override one parameter")
        if name == "run":
            sp.add_argument("--threads", type=int, default=1, help="worker threads for independent tasks")
    ls = sub.add_parser("list-experiments", help="list the available experiments")
    ls.add_argument("--verbose", action="store_true", help="also print default parameters")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-experiments":
        for name in RUNNERS:
            print(f"{name:20s} {DESCRIPTIONS[name]}")
            if args.verbose:
                print("    " + json.dumps(DEFAULTS[name]))
        return EXIT_OK
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(json.dumps({"experiment": cfg["experiment"], "seed": cfg.get("seed", 0),
                          "parameters": resolve(cfg["experiment"], cfg.get("parameters", {}))}, indent=2))
        return EXIT_OK
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with np.errstate(invalid="ignore", divide="ignore"):
            manifest = run_config(cfg, args.threads, args.config)
    except (ArithmeticError, RuntimeError, ValueError, MemoryError, NotImplementedError) as exc:
        log.error("%s failed: %s: %s", cfg["experiment"], type(exc).__name__, exc)
        return EXIT_RUNTIME
    log.info("wrote %d files to %s in %.1f s", len(manifest["outputs"]),
             manifest["resolved_config"]["output_dir"], manifest["elapsed_seconds"])
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
