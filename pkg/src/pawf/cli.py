"""Command line runner: ``pawf <experiment> --config cfg.json [--out dir]``.

Exit codes: 0 when every row passes its tolerance, 1 when an experiment
fails (a tolerance or a construction error), 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import jsonschema

from . import __version__
from .experiments import REGISTRY, Config, Table, get

_NUM = {"type": "number"}
_INTERVAL = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_SIGNS = {"type": "array", "items": {"enum": [-1, 1]}, "minItems": 2, "maxItems": 2}
_NUM_LIST = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"type": "string"},
        "curve": {
            "type": "object",
            "properties": {
                "beta": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                         "minItems": 2, "maxItems": 2},
                "eps": _SIGNS, "delta": _SIGNS,
            },
            "required": ["beta", "eps", "delta"],
            "additionalProperties": False,
        },
        "Q": {"type": "array", "items": _INTERVAL, "minItems": 2, "maxItems": 2},
        "A": {"oneOf": [{"type": "number", "exclusiveMinimum": 2},
                        {"type": "array", "items": {"type": "number", "exclusiveMinimum": 2},
                         "minItems": 1}]},
        "N": {"type": "number", "minimum": 1},
        "M": {"oneOf": [{"const": "auto"}, {"type": "number", "minimum": 0}]},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "b": {"enum": ["x1", "x1x2", "sin_cos", "sin_sin", "sign_x1"]},
        "alpha": _NUM_LIST,
        "lambda": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                   "minItems": 1},
        "zero_mean": {"type": "boolean"},
        "out": {"type": "string"},
    },
    "additionalProperties": False,
}


class UsageError(Exception):
    pass


def list_experiments() -> str:
    width = max(len(e.name) for e in REGISTRY)
    return "\n".join(f"{e.name:<{width}}  {e.about}" for e in REGISTRY)


def _parser() -> argparse.ArgumentParser:
    epilog = "experiments:\n" + "\n".join(f"  {line}" for line in list_experiments().splitlines())
    p = argparse.ArgumentParser(
        prog="pawf", description="Run a factorization experiment and write CSV/SVG.",
        epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("experiment", help="experiment name, or 'list'")
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--out", type=Path, help="output directory (default: config 'out' or runs/)")
    p.add_argument("--plot", action="store_true", help="also write an SVG figure")
    p.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    p.add_argument("--version", action="version", version=f"pawf {__version__}")
    return p


def load_config(name: str, path: Path | None, seed: int | None) -> tuple[Config, dict]:
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
    if seed is not None:
        raw["seed"] = seed
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise UsageError(f"invalid config: {exc.message}") from exc
    if raw.get("experiment", name) != name:
        raise UsageError(f"config is for experiment {raw['experiment']!r}, not {name!r}")
    try:
        cfg = Config.from_dict(name, raw)
    except ValueError as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    return cfg, raw


def run(name: str, config: Path | None = None, out: Path | None = None,
        plot: bool = False, seed: int | None = None) -> int:
    from .report import write_csv, write_manifest, write_svg

    try:
        exp = get(name)
    except KeyError:
        raise UsageError(f"unknown experiment {name!r}; try 'pawf list'") from None
    cfg, raw = load_config(name, config, seed)
    out = Path(out if out is not None else raw.get("out", "runs"))
    out.mkdir(parents=True, exist_ok=True)
    error = None
    try:
        table = exp.func(cfg)
    except Exception as exc:  # reported as a diagnostic row
        error = f"{type(exc).__name__}: {exc}"
        table = Table(["error"])
        table.add([error], False)
    files = [f"{name}.csv"]
    write_csv(table, out / files[0])
    if plot and error is None and table.plot is not None:
        files.append(f"{name}.svg")
        write_svg(table, out / files[1], exp.about)
    write_manifest(out / "manifest.json", experiment=name, config=raw, seed=cfg.seed,
                   version=__version__, files=files, passed=table.all_passed,
                   error=error)
    status = "PASS" if table.all_passed else "FAIL"
    print(f"{name}: {status} ({sum(table.passed)}/{len(table.passed)} rows) -> {out}")
    if error is not None:
        print(error, file=sys.stderr)
    return 0 if table.all_passed else 1


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.experiment == "list":
        print(list_experiments())
        return 0
    try:
        return run(args.experiment, args.config, args.out, args.plot, args.seed)
    except UsageError as exc:
        print(f"pawf: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
