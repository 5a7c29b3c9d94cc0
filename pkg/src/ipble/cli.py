"""Command line: ``ipble run``, ``ipble sweep`` and ``ipble report``.

Exit codes: 0 success, 1 I/O error, 2 invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import results
from .engine import InvalidConfig, NoiseSpec, ScenarioConfig, TrafficConfig, run, sweep

EXIT_OK, EXIT_IO, EXIT_CONFIG = 0, 1, 2
SECTIONS = {"traffic": TrafficConfig, "noise": NoiseSpec}


def _check_keys(table: dict, cls, where: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise InvalidConfig(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _check_types(table: dict, cls, where: str) -> None:
    defaults = cls()
    for key, value in table.items():
        ref = getattr(defaults, key)
        if isinstance(ref, (dict, tuple)) or (ref is None and value is None):
            continue
        if ref is None or isinstance(ref, int) and not isinstance(ref, bool):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(ref, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        else:
            ok = isinstance(value, type(ref))
        if not ok:
            raise InvalidConfig(f"{where}: {key} has the wrong type ({type(value).__name__})")


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a validated scenario; unknown keys and bad values raise :class:`InvalidConfig`."""
    data = dict(data)
    _check_keys(data, ScenarioConfig, "scenario")
    _check_types({k: v for k, v in data.items() if k not in SECTIONS}, ScenarioConfig, "scenario")
    kwargs = {}
    for name, cls in SECTIONS.items():
        if name in data:
            section = data.pop(name)
            if not isinstance(section, dict):
                raise InvalidConfig(f"[{name}] must be a table")
            _check_keys(section, cls, f"[{name}]")
            _check_types(section, cls, f"[{name}]")
            try:
                kwargs[name] = cls(**section)
            except TypeError as exc:
                raise InvalidConfig(str(exc)) from None
    if "conn_interval_ms" in data:
        ci = data["conn_interval_ms"]
        if not isinstance(ci, (list, tuple)) or len(ci) != 2:
            raise InvalidConfig("conn_interval_ms must be a two-element array [lo, hi]")
        data["conn_interval_ms"] = tuple(ci)
    cfg = ScenarioConfig(**data, **kwargs)
    try:
        cfg.validate()
    except TypeError as exc:
        raise InvalidConfig(f"wrong value type: {exc}") from None
    return cfg


def load_scenario(path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from None
    return config_from_dict(data)


def scenario_dict(cfg: ScenarioConfig) -> dict:
    d = asdict(cfg)
    d["conn_interval_ms"] = list(cfg.conn_interval_ms)
    return d


def parse_values(text: str) -> list:
    """``--values`` as a TOML array (``[[15,35],[40,60]]``) or a comma-separated list."""
    text = text.strip()
    if not text.startswith("["):
        text = "[" + ",".join(_scalar(v) for v in text.split(",") if v.strip()) + "]"
    try:
        values = tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig(f"cannot parse --values: {exc}") from None
    return [tuple(v) if isinstance(v, list) else v for v in values]


def _scalar(v: str) -> str:
    v = v.strip()
    try:
        tomllib.loads(f"v = {v}")
        return v
    except tomllib.TOMLDecodeError:
        return json.dumps(v)


def _label(value) -> str:
    if isinstance(value, tuple):
        return "-".join(str(v) for v in value)
    return str(value)


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_param("seed", args.seed)
    log = run(cfg)
    results.write_run(log, args.out, scenario_dict(cfg))
    print(results.format_table([(Path(args.out).name, log)]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_param("seed", args.seed)
    values = parse_values(args.values)
    for v in values:
        cfg.with_param(args.param, v).validate()
    logs = sweep(cfg, args.param, values, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=out.parent))
    try:
        rows = []
        for i, (value, log) in enumerate(zip(values, logs)):
            name = f"{args.param}={_label(value)}"
            run_cfg = cfg.with_param(args.param, value).with_param("seed", cfg.seed + i)
            results.write_run(log, tmp / name, scenario_dict(run_cfg))
            rows.append((_label(value), log))
        results.write_sweep_csv(rows, tmp / "sweep.csv")
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    print(results.format_table(rows))
    return EXIT_OK


def cmd_report(args) -> int:
    root = Path(args.results_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{root}: no such results directory")
    runs = results.find_runs(root)
    if not runs:
        raise FileNotFoundError(f"{root}: no run directories with summary.json")
    rows, mismatches = [], []
    for run_dir in runs:
        log, stored = results.load_run(run_dir)
        again = results.recompute_summary(log)
        for key, value in again.items():
            if stored.get(key) != value:
                mismatches.append(f"{run_dir.name}: {key} stored {stored.get(key)!r} recomputed {value!r}")
        rows.append((run_dir.name, log))
    results.write_cdf_csv(rows, root / "cdf.csv", resolution=args.resolution)
    print(results.format_table(rows))
    for line in mismatches:
        print(f"warning: {line}", file=sys.stderr)
    return EXIT_OK if not mismatches else EXIT_IO


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipble", description="IPv6 over BLE advertising simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario", help="scenario TOML file")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario once per parameter value")
    s.add_argument("scenario", help="scenario TOML file")
    s.add_argument("--param", required=True, help="parameter name, dotted for sections (traffic.interval_s)")
    s.add_argument("--values", required=True, help="comma-separated values or a TOML array")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="summarize result directories and write cdf.csv")
    rep.add_argument("results_dir")
    rep.add_argument("--resolution", type=int, default=1000, help="CDF grid step in us")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
