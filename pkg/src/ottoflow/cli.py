"""Command line entry point: ``run <config>``, ``suite`` and ``plotdata <csv>``.

Configs are JSON documents validated against :data:`CONFIG_SCHEMA` before
anything runs.  A run writes three artifacts to its output directory:

``results.csv``
    One row per recorded time (a leading ``seed`` column for sweeps).
``diagnostics.json``
    Solver diagnostics and the pass/fail record of every invariant check.
``manifest.json``
    Config hash, seeds, library versions and the hashes of the other two
    files.  Nothing time-dependent is stored, so reruns are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .errors import ConfigError, InvariantFailure, MissingColumn, NumericalError, OttoError
from .scenarios import KINDS, ScenarioResult, number, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4

_DECIMAL = {"type": "string", "pattern": r"^\s*[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\s*$"}
_NUMERIC = {"anyOf": [{"type": "number"}, _DECIMAL]}
_VECTOR = {"type": "array", "items": _NUMERIC}

_PARAMS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        **{key: _NUMERIC for key in ("h", "T", "n", "P", "seed", "tol", "paths", "record_every", "window",
                                     "fiber_shift", "fiber_tol", "base_tol", "w2_tol")},
        "seeds": {"type": "array", "items": _NUMERIC, "minItems": 1},
        "scheme": {"type": "string"},
        "solver": {"enum": ["picard", "sweep"]},
        "method": {"enum": ["stratonovich", "ito", "eulerian"]},
        "x0": _VECTOR,
        "q0": _VECTOR,
    },
}

_FIELD_OBJECT = {
    "type": "object",
    "additionalProperties": False,
    "minProperties": 1,
    "properties": {
        "gradient": {"type": "string"},
        "vertical": {"anyOf": [_NUMERIC, _VECTOR]},
        "functional": {"type": "string"},
        "potential": _VECTOR,
        "rotation": _VECTOR,
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "name": {"type": "string"},
        "manifold": {"enum": ["circle", "torus2", "sphere2", "sphere3"]},
        "fields": {"type": "array", "items": {"anyOf": [{"type": "string"}, _FIELD_OBJECT]}},
        "initial": {"type": "string"},
        "v0": {"type": "string"},
        "params": _PARAMS,
        "checks": {"type": "array", "items": {"type": "string"}},
        "output": {"type": "string"},
    },
    "if": {"properties": {"kind": {"not": {"const": "invariants"}}}},
    "then": {"required": ["params"], "properties": {"params": {"required": ["h", "T"]}}},
}


# --------------------------------------------------------------------------
# config handling


def validate_config(cfg) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(cfg)


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# --------------------------------------------------------------------------
# serialisation


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def versions() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "ottoflow": __version__}


# --------------------------------------------------------------------------
# running


def _seeds(cfg: dict) -> list[int] | None:
    params = cfg.get("params", {})
    if "seeds" not in params:
        return None
    return [number({"seed": s}, "seed", kind=int) for s in params["seeds"]]


def execute(cfg: dict) -> tuple[ScenarioResult, list[int] | None]:
    """Run a validated config; sweeps over ``params.seeds`` are merged into one table."""
    seeds = _seeds(cfg)
    if seeds is None:
        return run_scenario(cfg), None
    merged = None
    for s in seeds:
        params = {k: v for k, v in cfg["params"].items() if k != "seeds"}
        params["seed"] = s
        res = run_scenario({**cfg, "params": params})
        if merged is None:
            merged = ScenarioResult(["seed"] + list(res.columns), [], {})
        merged.rows.extend([s] + list(r) for r in res.rows)
        merged.diagnostics[str(s)] = res.diagnostics
        for name, rec in res.invariants.items():
            merged.invariants[f"{name}[seed={s}]"] = rec
    return merged, seeds


def write_artifacts(out_dir: Path, cfg: dict, result: ScenarioResult, seeds) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    results = csv_text(result.columns, result.rows)
    diagnostics = json_text({"kind": cfg["kind"], "passed": result.passed, "invariants": result.invariants,
                             "diagnostics": result.diagnostics})
    params = cfg.get("params", {})
    manifest = {
        "kind": cfg["kind"],
        "config_sha256": config_hash(cfg),
        "seeds": seeds if seeds is not None else [number(params, "seed", 0, int)],
        "versions": versions(),
        "files": {"results.csv": _sha(results), "diagnostics.json": _sha(diagnostics)},
    }
    (out_dir / "results.csv").write_text(results)
    (out_dir / "diagnostics.json").write_text(diagnostics)
    (out_dir / "manifest.json").write_text(json_text(manifest))
    return manifest


def _report(result: ScenarioResult, stream=None) -> None:
    stream = stream or sys.stdout
    for name, rec in result.invariants.items():
        status = "PASS" if rec["pass"] else "FAIL"
        print(f"{status} {name}: {rec['value']:.3e} (tol {rec['tol']:.1e})", file=stream)


def run_config(path, output=None, stream=None) -> ScenarioResult:
    """Load, run and record a config; raises :class:`InvariantFailure` after writing
    the artifacts when a check fails."""
    path = Path(path)
    cfg = load_config(path)
    if output is not None:
        out_dir = Path(output)
    elif "output" in cfg:
        out_dir = path.parent / cfg["output"]
    else:
        out_dir = path.parent / f"{path.stem}_out"
    result, seeds = execute(cfg)
    write_artifacts(out_dir, cfg, result, seeds)
    _report(result, stream)
    print(f"artifacts written to {out_dir}", file=stream or sys.stdout)
    if not result.passed:
        failed = [k for k, v in result.invariants.items() if not v["pass"]]
        raise InvariantFailure(f"invariant checks failed: {', '.join(failed)}")
    return result


def run_suite(output=None, checks=None, stream=None) -> ScenarioResult:
    cfg = {"kind": "invariants"}
    if checks:
        cfg["checks"] = list(checks)
    validate_config(cfg)
    result, _ = execute(cfg)
    if output is not None:
        write_artifacts(Path(output), cfg, result, None)
    _report(result, stream)
    if not result.passed:
        raise InvariantFailure("invariant battery failed")
    return result


# --------------------------------------------------------------------------
# plot data


def long_format(text: str) -> str:
    """Reshape a wide results table to ``[seed,] t, observable, value`` rows,
    grouped by observable."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or "t" not in header:
        raise MissingColumn("results table has no 't' column")
    rows = list(reader)
    keys = ["seed", "t"] if "seed" in header else ["t"]
    index = [header.index(k) for k in keys]
    observables = [(j, c) for j, c in enumerate(header) if c not in keys]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys + ["observable", "value"])
    for j, name in observables:
        for r in rows:
            if len(r) != len(header):
                raise ConfigError(f"ragged results row: {r}")
            w.writerow([r[i] for i in index] + [name, r[j]])
    return buf.getvalue()


def emit_plotdata(csv_path, output=None) -> str:
    csv_path = Path(csv_path)
    try:
        text = csv_path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {csv_path}: {exc}") from exc
    out = long_format(text)
    if output == "-":
        sys.stdout.write(out)
    else:
        target = Path(output) if output else csv_path.with_name(f"{csv_path.stem}_long.csv")
        target.write_text(out)
    return out


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ottoflow", description="Stochastic flows on manifolds and measures.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config")
    run.add_argument("-o", "--output", help="output directory (overrides the config)")
    suite = sub.add_parser("suite", help="run the built-in invariant battery")
    suite.add_argument("-o", "--output", help="also write artifacts to this directory")
    suite.add_argument("--check", action="append", dest="checks", help="restrict to a named check (repeatable)")
    plot = sub.add_parser("plotdata", help="reshape results.csv to long format")
    plot.add_argument("csv")
    plot.add_argument("-o", "--output", help="target file, '-' for stdout (default <stem>_long.csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            run_config(args.config, args.output)
        elif args.command == "suite":
            run_suite(args.output, args.checks)
        else:
            emit_plotdata(args.csv, args.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OttoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
