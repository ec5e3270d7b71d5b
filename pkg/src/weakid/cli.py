"""Command-line entry points: CSV ingestion, estimation and testing
pipelines, Monte Carlo runs, and report emission (plain text + JSON)."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conventional import effective_f_test, first_stage, pruning_ratio, rule_of_thumb, stock_yogo
from .djtest import DJConfig, dj_test
from .errors import (
    ConfigError,
    NotConvergedError,
    ParseError,
    SchemaError,
    SeparationError,
    UnsupportedDesignError,
)
from .estimators import fit_2scml, fit_cugmm, j_statistic, marginal_effect
from .model import Dataset, standardize
from .moments import default_instruments
from .montecarlo import (
    McDesign,
    REPLICATION_COLUMNS,
    SUMMARY_COLUMNS,
    default_workers,
    replication_rows,
    run_design_detailed,
    summary_row,
)


@dataclass
class ColumnRoles:
    y1: str
    y2: str
    x: list[str]
    z: list[str]


@dataclass
class RunConfig:
    command: str
    data_path: str | None = None
    roles: ColumnRoles | None = None
    standardize: bool = True
    dj: DJConfig = field(default_factory=DJConfig)
    out_dir: str = "."
    seed: int = 0
    workers: int | None = None
    mc_designs: list[McDesign] = field(default_factory=list)
    dump_reps: bool = False
    sigma_grid: list[float] = field(
        default_factory=lambda: [1.0, 2.0, 5.0, 10.0, 50.0, 100.0]
    )


def sig6(x) -> float:
    """Round to 6 significant digits so text and JSON agree exactly."""
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return x
    return float(f"{float(x):.6g}")


def load_csv(path: str | Path, roles: ColumnRoles) -> tuple[Dataset, int]:
    """Read a header-ed CSV into a Dataset.

    Rows with missing or non-numeric cells in any used column are dropped
    and counted; y1 must parse to {0, 1} exactly.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        wanted = [roles.y1, roles.y2, *roles.x, *roles.z]
        idx = {}
        for name in wanted:
            matches = [i for i, h in enumerate(header) if h == name]
            if not matches:
                raise SchemaError(f"{path}: column {name!r} not found")
            if len(matches) > 1:
                raise SchemaError(f"{path}: column {name!r} is ambiguous")
            idx[name] = matches[0]
        rows = []
        dropped = 0
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            vals = []
            bad = False
            for name in wanted:
                cell = rec[idx[name]].strip() if idx[name] < len(rec) else ""
                if cell == "" or cell.upper() in ("NA", "NAN", "."):
                    bad = True
                    break
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: cannot parse {cell!r} in column {name!r}"
                    ) from None
                if not np.isfinite(v):
                    bad = True
                    break
                vals.append(v)
            if bad:
                dropped += 1
                continue
            rows.append(vals)
    if not rows:
        raise SchemaError(f"{path}: no usable rows")
    arr = np.asarray(rows, dtype=float)
    y1 = arr[:, 0]
    if not np.all((y1 == 0.0) | (y1 == 1.0)):
        bad = sorted(set(y1) - {0.0, 1.0})
        raise ValueError(f"{path}: y1 column contains non-binary values {bad[:5]}")
    kx = len(roles.x)
    X = np.column_stack([np.ones(arr.shape[0]), arr[:, 2 : 2 + kx]])
    Z = arr[:, 2 + kx :]
    return Dataset(y1=y1, y2=arr[:, 1], X=X, Z=Z), dropped


# ---------------------------------------------------------------------------
# pipeline pieces


def _fit_both(config: RunConfig, data: Dataset):
    fit2 = fit_2scml(data)
    if config.standardize:
        ds, info = standardize(data)
        system = default_instruments(ds, "empirical")
        fit_cu = fit_cugmm(system, ds, init=fit_2scml(ds).theta)
        fit_cu.standardization = info
        return fit2, fit_cu, system, ds
    system = default_instruments(data, "empirical")
    fit_cu = fit_cugmm(system, data, init=fit2.theta)
    return fit2, fit_cu, system, data


def _coef_table(fit, data, x_names, method):
    theta = fit.theta_raw()
    vcov = fit.vcov_raw()
    se = np.sqrt(np.maximum(np.diag(vcov), 0.0))
    kx = theta.k_x
    me = marginal_effect(fit, data)
    rows = []
    names = ["y2", *x_names]
    coefs = [theta.alpha, *theta.beta[1:]]
    ses = [se[1], *se[2 + 1 : 2 + kx]]
    margins = list(me)
    for nm, c, s, m in zip(names, coefs, ses, margins):
        rows.append({"name": nm, "coef": sig6(c), "se": sig6(s), "margin": sig6(m)})
    rows.append(
        {"name": "intercept", "coef": sig6(theta.beta[0]), "se": sig6(se[2]), "margin": None}
    )
    out = {
        "method": method,
        "coefficients": rows,
        "rho": sig6(fit.rho),
        "rho_se": sig6(fit.rho_se),
        "rho_tilde": sig6(fit.theta_raw().rho_tilde),
        "converged": fit.converged,
    }
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _coef_text(block: dict) -> list[str]:
    lines = [f"  [{block['method']}]  coef        se          margin"]
    for row in block["coefficients"]:
        lines.append(
            f"    {row['name']:<12} {_fmt(row['coef']):>10} {_fmt(row['se']):>10}"
            f" {_fmt(row['margin']):>10}"
        )
    lines.append(
        f"    {'rho':<12} {_fmt(block['rho']):>10} {_fmt(block['rho_se']):>10}"
    )
    return lines


def _render_text(payload: dict) -> str:
    cmd = payload["command"]
    lines = [f"weakid {cmd} report"]
    if "resolved" in payload:
        lines.append("settings: " + json.dumps(payload["resolved"], sort_keys=True))
    if "n" in payload:
        lines.append(f"n: {payload['n']} (dropped rows: {payload.get('dropped_rows', 0)})")
    if cmd == "estimate":
        for key in ("2scml", "cugmm"):
            lines.extend(_coef_text(payload[key]))
        jt = payload["j_test"]
        lines.append(
            f"  J-statistic {_fmt(jt['J'])} (df {jt['df']}, p {_fmt(jt['pvalue'])})"
        )
    elif cmd == "djtest":
        d = payload["dj"]
        lines.append(
            f"  distorted J-test ({d['mode']}, m={d['m']}, level {_fmt(d['level'])})"
        )
        lines.append(
            f"  J at minimum {_fmt(d['j_at_min'])}; statistics min {_fmt(d['min_statistic'])}"
            f" max {_fmt(d['max_statistic'])} vs critical {_fmt(d['critical_value'])}"
        )
        lines.append(f"  decision: {d['decision']}")
        lines.append("  delta        statistic")
        for dv, sv in zip(d["deltas"], d["statistics"]):
            lines.append(f"  {_fmt(dv):>10} {_fmt(sv):>12}")
    elif cmd == "weakiv":
        fs = payload["first_stage"]
        lines.append(
            f"  first stage: F {_fmt(fs['F_homoskedastic'])}"
            f" | robust F {_fmt(fs['F_robust'])}"
            f" | effective F {_fmt(fs['effective_F'])}"
        )
        lines.append(f"  {'test':<22} {'statistic':>10} {'critical':>10} decision")
        order = [
            ("ss", "rule of thumb"),
            ("sy_5pct", "stock-yogo 5%"),
            ("sy_10pct", "stock-yogo 10%"),
            ("effective_f_5pct", "effective F 5%"),
            ("effective_f_10pct", "effective F 10%"),
        ]
        for key, label in order:
            t = payload["tests"][key]
            if t is None or "error" in t:
                lines.append(f"  {label:<22} unavailable: {(t or {}).get('error', '')}")
            else:
                lines.append(
                    f"  {label:<22} {_fmt(t['statistic']):>10}"
                    f" {_fmt(t['critical_value']):>10} {t['decision']}"
                )
        d = payload["dj"]
        lines.append(
            f"  {'distorted J (max)':<22} {_fmt(d['max']):>10}"
            f" {_fmt(d['critical_value']):>10} {d['decision']}"
        )
        lines.append(f"  (distorted J min {_fmt(d['min'])})")
    elif cmd == "mc":
        lines.append("  " + ",".join(payload["columns"]))
        for row in payload["rows"]:
            lines.append("  " + ",".join(_fmt(v) for v in row))
    elif cmd == "diag":
        lines.append("  sigma_z^2    retained variance (%)")
        for row in payload["pruning_ratios"]:
            lines.append(f"  {_fmt(row['sigma_z_sq']):>9} {_fmt(row['percent']):>12}")
    else:
        lines.append(json.dumps(payload, indent=2, default=str))
    return "\n".join(lines) + "\n"


def _emit(config: RunConfig, payload: dict) -> None:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cmd = payload["command"]
    (out / f"weakid_{cmd}.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n",
        encoding="utf-8",
    )
    text = _render_text(payload)
    (out / f"weakid_{cmd}.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_estimate(config: RunConfig, data: Dataset, dropped: int, x_names) -> dict:
    fit2, fit_cu, system, _ = _fit_both(config, data)
    J, df, pval = j_statistic(fit_cu)
    payload = {
        "command": "estimate",
        "n": data.n,
        "dropped_rows": dropped,
        "standardized": config.standardize,
        "2scml": _coef_table(fit2, data, x_names, "2scml"),
        "cugmm": _coef_table(fit_cu, data, x_names, "cugmm"),
        "j_test": {"J": sig6(J), "df": df, "pvalue": sig6(pval)},
    }
    return payload


def cmd_djtest(config: RunConfig, data: Dataset, dropped: int, x_names) -> dict:
    _, fit_cu, system, ds = _fit_both(config, data)
    report = dj_test(system, ds, fit_cu, config.dj)
    d = report.to_dict()
    d["statistics"] = [sig6(v) for v in d["statistics"]]
    d["deltas"] = [sig6(v) for v in d["deltas"]]
    for k in ("critical_value", "j_at_min", "min_statistic", "max_statistic"):
        d[k] = sig6(d[k])
    return {
        "command": "djtest",
        "n": data.n,
        "dropped_rows": dropped,
        "dj": d,
    }


def cmd_weakiv(config: RunConfig, data: Dataset, dropped: int, x_names) -> dict:
    summ = first_stage(data)
    tests = {
        "ss": rule_of_thumb(summ).to_dict(),
        "sy_5pct": None,
        "sy_10pct": None,
        "effective_f_5pct": None,
        "effective_f_10pct": None,
    }
    try:
        tests["sy_5pct"] = stock_yogo(summ, distortion="five").to_dict()
        tests["sy_10pct"] = stock_yogo(summ, distortion="ten").to_dict()
    except UnsupportedDesignError as exc:
        tests["sy_5pct"] = tests["sy_10pct"] = {"error": str(exc)}
    try:
        hint = 1.8 if summ.k_z >= 2 else 1.0
        tests["effective_f_5pct"] = effective_f_test(summ, "five", hint).to_dict()
        tests["effective_f_10pct"] = effective_f_test(summ, "ten", hint).to_dict()
    except UnsupportedDesignError as exc:
        tests["effective_f_5pct"] = tests["effective_f_10pct"] = {"error": str(exc)}
    _, fit_cu, system, ds = _fit_both(config, data)
    dj = dj_test(system, ds, fit_cu, config.dj)
    for t in tests.values():
        if t and "statistic" in t:
            t["statistic"] = sig6(t["statistic"])
    payload = {
        "command": "weakiv",
        "n": data.n,
        "dropped_rows": dropped,
        "first_stage": {
            "F_homoskedastic": sig6(summ.F_homoskedastic),
            "F_robust": sig6(summ.F_robust),
            "cragg_donald": sig6(summ.cragg_donald),
            "effective_F": sig6(summ.effective_F),
        },
        "tests": tests,
        "dj": {
            "min": sig6(dj.min_statistic),
            "max": sig6(dj.max_statistic),
            "critical_value": sig6(dj.critical_value),
            "decision": dj.decision,
        },
    }
    return payload


def cmd_mc(config: RunConfig) -> dict:
    rows = []
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, design in enumerate(config.mc_designs):
        summary, results = run_design_detailed(design, workers=config.workers)
        rows.append([sig6(v) if isinstance(v, float) else v for v in summary_row(summary)])
        if config.dump_reps:
            name = "replications.csv" if len(config.mc_designs) == 1 else f"replications_{k}.csv"
            with (out / name).open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(REPLICATION_COLUMNS)
                for row in replication_rows(results):
                    writer.writerow(
                        [sig6(v) if isinstance(v, float) else v for v in row]
                    )
    with (out / "design_summary.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(rows)
    return {
        "command": "mc",
        "columns": list(SUMMARY_COLUMNS),
        "rows": rows,
        "workers": config.workers or default_workers(),
    }


def cmd_diag(config: RunConfig) -> dict:
    ratios = [
        {"sigma_z_sq": s, "percent": sig6(pruning_ratio(s))} for s in config.sigma_grid
    ]
    return {"command": "diag", "pruning_ratios": ratios}


# ---------------------------------------------------------------------------
# argument parsing


def _add_data_args(sp):
    sp.add_argument("--data", required=True, help="CSV file with a header row")
    sp.add_argument("--y1", required=True, help="binary outcome column")
    sp.add_argument("--y2", required=True, help="endogenous regressor column")
    sp.add_argument("--x", default="", help="comma-separated exogenous columns")
    sp.add_argument("--z", required=True, help="comma-separated instrument columns")
    sp.add_argument(
        "--no-standardize",
        action="store_true",
        help="fit on raw columns instead of standardized ones",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="weakid",
        description=(
            "Weak-identification diagnostics for endogenous binary-choice "
            "models: CUGMM/2SCML estimation, the distorted J-test, and "
            "first-stage comparators."
        ),
    )
    ap.add_argument("--out-dir", default=".", help="directory for report files")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument(
        "--config",
        default=None,
        help="JSON file of option defaults; explicit flags take precedence",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("estimate", "djtest", "weakiv"):
        sp = sub.add_parser(name)
        _add_data_args(sp)
        if name in ("djtest", "weakiv"):
            sp.add_argument("--m", type=int, default=20, help="grid size")
            sp.add_argument("--level", type=float, default=0.05)

    mc = sub.add_parser("mc")
    mc.add_argument("--n", type=int, required=True)
    mc.add_argument("--rho", type=float, required=True)
    mc.add_argument("--lambda", dest="lam", type=float, required=True)
    mc.add_argument("--sigma-z", type=float, default=1.0)
    mc.add_argument("--sigma-v", type=float, default=1.0)
    mc.add_argument("--reps", type=int, default=500)
    mc.add_argument("--workers", type=int, default=None)
    mc.add_argument(
        "--dump-reps",
        action="store_true",
        help="also write per-replication estimates to replications.csv",
    )

    dg = sub.add_parser("diag")
    dg.add_argument(
        "--sigma2",
        default="1,2,5,10,50,100",
        help="comma-separated instrument variances",
    )
    return ap


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(command=args.command, out_dir=args.out_dir, seed=args.seed)
    if args.command in ("estimate", "djtest", "weakiv"):
        xcols = [c for c in args.x.split(",") if c.strip()]
        zcols = [c for c in args.z.split(",") if c.strip()]
        if not zcols:
            raise ConfigError("at least one instrument column is required")
        cfg.data_path = args.data
        cfg.roles = ColumnRoles(y1=args.y1, y2=args.y2, x=xcols, z=zcols)
        cfg.standardize = not args.no_standardize
        if args.command in ("djtest", "weakiv"):
            cfg.dj = DJConfig(m=args.m, level=args.level)
    elif args.command == "mc":
        cfg.workers = args.workers
        cfg.dump_reps = args.dump_reps
        cfg.mc_designs = [
            McDesign(
                n=args.n,
                rho=args.rho,
                lam=args.lam,
                sigma_z=args.sigma_z,
                sigma_v=args.sigma_v,
                replications=args.reps,
                seed=args.seed,
            )
        ]
    elif args.command == "diag":
        cfg.sigma_grid = [float(s) for s in args.sigma2.split(",") if s.strip()]
    return cfg


def run_pipeline(config: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    try:
        if config.command == "mc":
            payload = cmd_mc(config)
        elif config.command == "diag":
            payload = cmd_diag(config)
        else:
            data, dropped = load_csv(config.data_path, config.roles)
            if dropped:
                sys.stderr.write(f"warning: dropped {dropped} incomplete rows\n")
            x_names = config.roles.x
            if config.command == "estimate":
                payload = cmd_estimate(config, data, dropped, x_names)
            elif config.command == "djtest":
                payload = cmd_djtest(config, data, dropped, x_names)
            elif config.command == "weakiv":
                payload = cmd_weakiv(config, data, dropped, x_names)
            else:
                raise ConfigError(f"unknown command {config.command!r}")
    except (ParseError, SchemaError, ConfigError, ValueError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (NotConvergedError, SeparationError) as exc:
        sys.stderr.write(f"estimation failed: {exc}\n")
        return 2
    payload["seed"] = config.seed
    payload["resolved"] = _resolved_settings(config)
    _emit(config, payload)
    return 0


def _resolved_settings(config: RunConfig) -> dict:
    out = {"command": config.command, "seed": config.seed, "out_dir": config.out_dir}
    if config.roles is not None:
        out.update(
            data=config.data_path,
            y1=config.roles.y1,
            y2=config.roles.y2,
            x=list(config.roles.x),
            z=list(config.roles.z),
            standardize=config.standardize,
        )
    if config.command in ("djtest", "weakiv"):
        out.update(m=config.dj.m, level=config.dj.level, mode=config.dj.mode)
    if config.command == "mc":
        out.update(
            workers=config.workers or default_workers(),
            dump_reps=config.dump_reps,
            designs=[
                dict(n=d.n, rho=d.rho, lam=d.lam, sigma_z=d.sigma_z,
                     sigma_v=d.sigma_v, replications=d.replications, seed=d.seed)
                for d in config.mc_designs
            ],
        )
    if config.command == "diag":
        out["sigma2"] = list(config.sigma_grid)
    return out


def _apply_config_file(args, argv) -> None:
    """Overlay JSON config values onto parsed args.

    Precedence: built-in defaults < config file < explicit flags. A flag
    counts as explicit when it appears in argv.
    """
    if not args.config:
        return
    try:
        values = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
    if not isinstance(values, dict):
        raise ConfigError(f"{args.config}: expected a JSON object")
    given = {tok.split("=", 1)[0] for tok in argv if tok.startswith("--")}
    for key, val in values.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ConfigError(f"{args.config}: unknown option {key!r}")
        if f"--{key}" in given:
            continue
        setattr(args, dest, val)


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = build_parser().parse_args(argv)
    try:
        _apply_config_file(args, argv)
        config = config_from_args(args)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return run_pipeline(config)


if __name__ == "__main__":
    sys.exit(main())
