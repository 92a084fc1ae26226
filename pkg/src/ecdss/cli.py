"""Command-line entry point: ``ecdss bounds | run | sweep-report``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from collections import defaultdict
from pathlib import Path

from . import config as config_mod
from .bounds import bound_report
from .model import ConfigError, Policy
from .runner import run_sweep

SCHEMA_VERSION = 1

RUN_COLUMNS = [
    "schema_version",
    "scenario",
    "sweep_param",
    "sweep_value",
    "class_id",
    "policy",
    "mean_latency",
    "ci95",
    "p50",
    "p95",
    "p99",
    "completed",
    "efficiency_bits_per_J",
    "t_a",
    "t_l",
    "energy_J",
    "lb",
    "ub",
    "naive_lb",
    "seed",
    "std_error",
    "efficiency_ci95",
    "storage_kb",
    "status",
]

BOUNDS_COLUMNS = ["schema_version", "scenario", "sweep_param", "sweep_value", "policy", "stable", "class_id", "naive_lb", "lb", "ub", "notes"]

REPORT_REQUIRED = ["scenario", "sweep_param", "sweep_value", "class_id", "mean_latency", "ci95", "efficiency_bits_per_J", "seed"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ""
    return str(x)


def _write_csv(rows, columns, dest) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    text = buf.getvalue()
    if dest is None:
        sys.stdout.write(text)
    else:
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        Path(dest).write_bytes(text.encode("utf-8"))
    return text


def _overrides(args, for_bounds=False) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError([config_mod.Issue(item, "--set expects path=value")])
        path, value = item.split("=", 1)
        out[path.strip()] = config_mod.parse_value(value)
    if getattr(args, "policy", None):
        out["system.policy"] = Policy.parse(args.policy).value
    if for_bounds or getattr(args, "allow_unstable", False):
        out["sim.allow_unstable"] = True
    if getattr(args, "seed", None) is not None:
        out["sim.seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        out["sim.jobs"] = args.jobs
    if getattr(args, "replications", None) is not None:
        out["sim.replications"] = args.replications
    if getattr(args, "split_merge", False):
        out["sim.split_merge"] = True
    return out


def _load(args, for_bounds=False):
    path = config_mod.resolve(args.config)
    overrides = _overrides(args, for_bounds)
    if "sim.jobs" in overrides and "sim.warmup" not in overrides:
        # a warm-up written for the file's horizon may not fit the new one
        overrides["sim.warmup"] = None
    return config_mod.load(path, overrides)


def _sweep_fields(sc, value):
    return {"sweep_param": sc.sweep_param or "", "sweep_value": "" if value is None else value}


# -- bounds ----------------------------------------------------------------


def cmd_bounds(args) -> int:
    sc = _load(args, for_bounds=True)
    points = sc.points()
    policies = [Policy.parse(args.policy)] if args.policy else list(Policy)
    rows = []
    out = sys.stdout
    print(f"scenario {sc.name}", file=out)
    for value, cfg in points:
        if sc.sweep_param:
            print(f"\n{sc.sweep_param} = {value}", file=out)
        for pol in policies:
            rep = bound_report(cfg, pol)
            verdict = "stable" if rep.stable else "UNSTABLE"
            print(f"  {pol.value:<4} {verdict}", file=out)
            for cb in rep.classes:
                vals = [_cell(cb.naive_lower, cb.naive_valid), _cell(cb.lower, cb.lower_valid), _cell(cb.upper, cb.upper_valid)]
                print(f"    class {cb.class_id}: naive {vals[0]:>12}  lower {vals[1]:>12}  upper {vals[2]:>12}", file=out)
                rows.append(
                    {
                        "schema_version": SCHEMA_VERSION,
                        "scenario": sc.name,
                        **_sweep_fields(sc, value),
                        "policy": pol.value,
                        "stable": rep.stable,
                        "class_id": cb.class_id,
                        "naive_lb": cb.naive_lower if cb.naive_valid else None,
                        "lb": cb.lower if cb.lower_valid else None,
                        "ub": cb.upper if cb.upper_valid else None,
                        "notes": "; ".join(rep.notes + cb.reasons),
                    }
                )
            for note in rep.notes:
                print(f"    note: {note}", file=out)
    if args.out:
        _write_csv(rows, BOUNDS_COLUMNS, Path(args.out) / f"{sc.name}_bounds.csv")
    return 0


def _cell(v, ok):
    return f"{v:.6f}" if ok else "n/a"


# -- run -------------------------------------------------------------------


def run_rows(sc, workers=1) -> list[dict]:
    results = run_sweep(sc.points(), workers=workers)
    rows = []
    for pr in results:
        cfg = pr.cfg
        for c in cfg.classes:
            row = {
                "schema_version": SCHEMA_VERSION,
                "scenario": sc.name,
                **_sweep_fields(sc, pr.sweep_value),
                "class_id": c.id,
                "policy": cfg.policy.value,
                "seed": cfg.sim.seed,
                "storage_kb": cfg.n * c.l / c.k,
            }
            if not pr.ok:
                row["status"] = f"diverged: {pr.divergence}"
                rows.append(row)
                continue
            res = pr.result
            m = res.classes[c.id]
            cb = res.bound_report.for_class(c.id)
            row.update(
                mean_latency=m.mean_latency,
                ci95=m.ci95_half_width,
                p50=m.p50,
                p95=m.p95,
                p99=m.p99,
                completed=m.completed,
                efficiency_bits_per_J=res.efficiency,
                t_a=res.t_a,
                t_l=res.t_l,
                energy_J=res.energy_J,
                lb=cb.lower if cb.lower_valid else None,
                ub=cb.upper if cb.upper_valid else None,
                naive_lb=cb.naive_lower if cb.naive_valid else None,
                std_error=m.std_error,
                efficiency_ci95=res.efficiency_ci95,
                status="missing" if m.missing else "ok",
            )
            rows.append(row)
    return rows


def cmd_run(args) -> int:
    sc = _load(args)
    rows = run_rows(sc, workers=args.workers)
    dest = Path(args.out) / f"{sc.name}.csv" if args.out else None
    _write_csv(rows, RUN_COLUMNS, dest)
    for row in rows:
        if row["status"].startswith("diverged"):
            print(f"warning: {sc.sweep_param or 'run'}={row['sweep_value']} class {row['class_id']}: {row['status']}", file=sys.stderr)
    if dest is not None:
        print(f"wrote {len(rows)} rows to {dest}", file=sys.stderr)
    return 0


# -- sweep-report ----------------------------------------------------------


def _x_name(param: str) -> str:
    parts = param.split(".")
    if parts[0] == "class" and len(parts) == 3:
        return f"{parts[2]}{parts[1]}"
    return parts[-1]


def _label(scenario: str) -> str:
    m = re.match(r"fig\d+[a-z]?_(.+)$", scenario)
    return m.group(1) if m else scenario


def _num(s):
    try:
        return float(s)
    except ValueError:
        return math.nan


def _sort_key(v):
    x = _num(v)
    return (0, x, "") if math.isfinite(x) else (1, 0.0, v)


def cmd_sweep_report(args) -> int:
    src = Path(args.csv_dir)
    out = Path(args.out) if args.out else src / "report"
    rows, warnings = [], []
    for path in sorted(src.glob("*.csv")):
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            if "naive_lb" in header and "mean_latency" not in header and "lb" in header:
                continue  # bounds table, not a run
            missing = [c for c in REPORT_REQUIRED if c not in header]
            if missing:
                print(f"error: {path.name}: missing columns: {', '.join(missing)}", file=sys.stderr)
                return 2
            rows += [dict(r, _file=path.name) for r in reader]
    if not rows:
        print(f"error: no input rows in {src}", file=sys.stderr)
        return 2

    groups = defaultdict(list)
    for r in rows:
        groups[(r["scenario"], r["seed"])].append(r)
    seeds_per = defaultdict(set)
    for scen, seed in groups:
        seeds_per[scen].add(seed)
    for scen, seeds in sorted(seeds_per.items()):
        if len(seeds) > 1:
            msg = f"scenario {scen} has rows from seeds {sorted(seeds, key=_sort_key)}; grouped by seed"
            warnings.append(msg)
            print(f"warning: {msg}", file=sys.stderr)

    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for (scen, seed), grp in sorted(groups.items(), key=lambda kv: (kv[0][0], _sort_key(kv[0][1]))):
        params = {r["sweep_param"] for r in grp}
        if params == {""}:
            warnings.append(f"scenario {scen} has no sweep; skipped")
            continue
        param = sorted(params)[0]
        x = _x_name(param)
        suffix = _label(scen) + (f"_seed{seed}" if len(seeds_per[scen]) > 1 else "")
        xs = sorted({r["sweep_value"] for r in grp}, key=_sort_key)
        cids = sorted({r["class_id"] for r in grp}, key=_sort_key)
        by = {(r["sweep_value"], r["class_id"]): r for r in grp}

        def emit(stem, columns, line_for):
            name = f"{stem}_vs_{x}_{suffix}.dat"
            lines = ["# " + " ".join(columns)]
            for xv in xs:
                lines.append(" ".join([xv] + [v if v != "" else "nan" for v in line_for(xv)]))
            (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
            manifest.append({"file": name, "scenario": scen, "seed": seed, "x": x, "quantity": stem, "columns": columns})

        emit(
            "latency",
            [x] + [f"{col}_class{c}" for c in cids for col in ("mean", "ci95")],
            lambda xv: [by.get((xv, c), {}).get(col, "") for c in cids for col in ("mean_latency", "ci95")],
        )
        first = lambda xv: by.get((xv, cids[0]), {})
        emit("efficiency", [x, "efficiency_bits_per_J", "ci95"], lambda xv: [first(xv).get("efficiency_bits_per_J", ""), first(xv).get("efficiency_ci95", "")])
        if "storage_kb" in grp[0]:
            emit("storage", [x] + [f"storage_kb_class{c}" for c in cids], lambda xv: [by.get((xv, c), {}).get("storage_kb", "") for c in cids])

    (out / "index.json").write_text(json.dumps({"files": manifest, "warnings": warnings}, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(manifest)} data files to {out}", file=sys.stderr)
    return 0


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecdss", description="Erasure-coded storage latency/energy simulator and bounds")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario TOML path or shipped scenario name")
        sp.add_argument("--set", action="append", metavar="PATH=VALUE", help="override a scalar, e.g. class.2.k=3 (repeatable)")
        sp.add_argument("--policy", help="override the scheduling policy (fcfs, npq, pq)")
        sp.add_argument("--out", help="output directory")

    b = sub.add_parser("bounds", help="stability verdict and analytic bounds")
    common(b)
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("run", help="simulate a scenario and write result CSV")
    common(r)
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int, help="completed jobs per replication")
    r.add_argument("--replications", type=int)
    r.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    r.add_argument("--allow-unstable", action="store_true", help="simulate configurations that fail the stability check")
    r.add_argument("--split-merge", action="store_true", help="run the blocking split-merge engine variant")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-report", help="turn run CSVs into plot-ready .dat files")
    s.add_argument("csv_dir")
    s.add_argument("--out", help="output directory (default <csv_dir>/report)")
    s.set_defaults(func=cmd_sweep_report)

    sub.add_parser("scenarios", help="list shipped scenarios").set_defaults(func=cmd_scenarios)
    return p


def cmd_scenarios(args) -> int:
    for name, path in sorted(config_mod.shipped().items()):
        print(f"{name:<16} {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        kind = "unstable configuration" if exc.unstable else "invalid configuration"
        print(f"error: {kind}:", file=sys.stderr)
        for issue in exc.issues:
            print(f"  {issue}", file=sys.stderr)
        if exc.unstable:
            print("  (pass --allow-unstable to simulate anyway)", file=sys.stderr)
        return 2
    except (FileNotFoundError, KeyError) as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
