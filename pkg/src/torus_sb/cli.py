"""Command line driver: ``torus-sb run <config.json> [--out DIR] [--threads N]``.

Writes ``results.csv`` (one row per measurement), ``summary.txt`` (slope table
and checks) and, optionally, SVG plots.  Exit code 0 iff every threshold passes.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

from .studies import STUDIES, SLOPE_MARGIN, _Clock, fit_slope

SCHEMA_VERSION = 1
CSV_COLUMNS = ["study", "param_name", "param_value", "K", "n", "quantity", "value", "reference",
               "runtime_ms", "config_hash"]
OUT_ENV = "TORUS_SB_OUT"

log = logging.getLogger("torus_sb")

DEFAULTS = {
    "t": 0.0,
    "n": 256,
    "K": [1],
    "eps": [0.2, 0.1, 0.05, 0.025],
    "m": [4, 8, 16, 32],
    "tolerances": {},
    "seed": 0,
    "threads": 1,
    "plots": False,
    "record_runtime": True,
    "twin": None,
}


class ConfigError(ValueError):
    def __init__(self, field: str, msg: str):
        super().__init__(f"config field '{field}': {msg}")
        self.field = field


def _positive_list(cfg, key, kind=float):
    v = cfg[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(key, "must be a non-empty list")
    try:
        out = [kind(x) for x in v]
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"bad entry ({exc})") from None
    if any(not x > 0 for x in out):
        raise ConfigError(key, "entries must be positive")
    return out


def validate_config(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    study = raw.get("study")
    if study not in STUDIES:
        raise ConfigError("study", f"must be one of {sorted(STUDIES)}, got {study!r}")
    unknown = set(raw) - set(DEFAULTS) - {"schema_version", "study", "curve", "out", "m_identity"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    cfg = {**DEFAULTS, **raw}
    cfg["curve"] = dict(raw.get("curve", {"kind": "standard"}))
    n = cfg["n"]
    if not isinstance(n, int) or n < 8 or n % 2:
        raise ConfigError("n", "must be an even integer >= 8")
    Ks = cfg["K"] if isinstance(cfg["K"], list) else [cfg["K"]]
    if not all(isinstance(k, int) and not isinstance(k, bool) for k in Ks):
        raise ConfigError("K", "must be integers")
    if any(k < 0 or k > 4 for k in Ks):
        raise ConfigError("K", f"expansion order must lie in [0, 4], got {Ks}")
    cfg["K"] = Ks
    cfg["eps"] = _positive_list(cfg, "eps")
    if any(e > 1.0 for e in cfg["eps"]):
        raise ConfigError("eps", "values must lie in (0, 1]")
    if not 0.0 <= float(cfg["t"]) <= 1.0:
        raise ConfigError("t", "must lie in [0, 1]")
    if study in ("cost_rates", "potential_rates") and any(cfg["t"] + e > 1.0 + 1e-12 for e in cfg["eps"]):
        raise ConfigError("eps", "t + eps must stay inside [0, 1]")
    if study in ("cost_rates", "potential_rates", "self_transport") and len(cfg["eps"]) < 3:
        raise ConfigError("eps", "slope fits need at least 3 values")
    for e in cfg["eps"]:
        if e * n * n < 20:
            raise ConfigError("eps", f"eps={e} infeasible on n={n} (need eps n^2 >= 20)")
    cfg["m"] = [int(m) for m in _positive_list(cfg, "m", int)]
    if study == "stability_vs_m" and len(cfg["m"]) < (3 if not cfg.get("twin") else 2):
        raise ConfigError("m", "too few values")
    if study in ("potential_rates", "self_transport") and min(Ks) < 1:
        raise ConfigError("K", "potential expansions start at K = 1")
    if not isinstance(cfg["tolerances"], dict):
        raise ConfigError("tolerances", "must be an object")
    if int(cfg["threads"]) < 1:
        raise ConfigError("threads", "must be >= 1")
    return cfg


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _slope_table(rows, slopes):
    out = []
    for spec in slopes:
        pts = [(r.param_value, r.value) for r in rows if r.quantity == spec.quantity and r.K == spec.K]
        try:
            slope, icpt, r2 = fit_slope(pts)
        except ValueError as exc:
            out.append((spec, float("nan"), float("nan"), float("nan"), False, str(exc)))
            continue
        ok = slope >= spec.threshold if spec.direction == ">=" else slope <= spec.threshold
        out.append((spec, slope, icpt, r2, ok, ""))
    return out


def run(raw: dict, out_dir: Path, threads: int | None = None) -> int:
    cfg = validate_config(raw)
    threads = int(threads or cfg["threads"])
    h = config_hash(raw)
    rows, slopes, checks = STUDIES[cfg["study"]](cfg, _Clock(bool(cfg["record_runtime"])), threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.study, r.param_name, _fmt(float(r.param_value)), r.K, r.n, r.quantity,
                        _fmt(float(r.value)), _fmt(float(r.reference)), _fmt(float(r.runtime_ms)), h])
    table = _slope_table(rows, slopes)
    passed = all(t[4] for t in table) and all(c.passed for c in checks)
    lines = [f"study: {cfg['study']}", f"schema_version: {SCHEMA_VERSION}", f"config_hash: {h}",
             f"slope margin: {SLOPE_MARGIN}"]
    if table:
        lines += ["", "quantity              K   slope     intercept  r2       threshold  pass"]
    for spec, slope, icpt, r2, ok, note in table:
        lines.append(f"{spec.quantity:<20} {spec.K:>2}  {slope:>8.4f}  {icpt:>9.4f}  {r2:.5f}  "
                     f"{spec.direction}{spec.threshold:<8.3g}  {'PASS' if ok else 'FAIL'} {note}".rstrip())
    if checks:
        lines += ["", "check                                  value         threshold   pass"]
        for c in checks:
            lines.append(f"{c.name:<38} {c.value:<13.4e} {c.threshold:<11.3g} {'PASS' if c.passed else 'FAIL'}")
    lines += ["", f"overall: {'PASS' if passed else 'FAIL'}"]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    if cfg["plots"]:
        _write_plots(cfg, rows, out_dir)
    print("\n".join(lines))
    return 0 if passed else 1


def _write_plots(cfg, rows, out_dir: Path):
    from .plots import loglog_svg

    quantities = sorted({r.quantity for r in rows})
    for q in quantities:
        series = {}
        for r in rows:
            if r.quantity == q and r.param_value > 0 and r.value > 0:
                series.setdefault(f"K={r.K}", []).append((r.param_value, r.value))
        if series:
            svg = loglog_svg(series, f"{cfg['study']}: {q}", rows[0].param_name, q)
            (out_dir / f"{cfg['study']}_{q}.svg").write_text(svg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="torus-sb", description="Schroedinger bridge experiments on the torus")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        raw = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    out = args.out or (Path(os.environ[OUT_ENV]) if os.environ.get(OUT_ENV) else None) \
        or Path(raw.get("out", "out") if isinstance(raw, dict) else "out")
    try:
        return run(raw, out, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
