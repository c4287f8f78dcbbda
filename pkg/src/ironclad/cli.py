"""Command-line front end.

Exit codes: 0 success, 2 bad arguments or parameters, 3 I/O failure,
4 analytics with no root or a degenerate model.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from . import analytics as an
from . import config as cfgmod
from .errors import BoundaryMaximizerError, DegenerateParameterError, DomainError, InvalidParameterError, NoRootError
from .params import ProtocolParams, derive_rates
from .simulator import REPORT_COLUMNS, SimConfig, compute_metrics, simulate_trace
from .walk import run_walks

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_ANALYTICS = 0, 2, 3, 4
OUTPUT_ENV = "IRONCLAD_OUTPUT_DIR"
DEFAULT_C_GRID = tuple(2.0**k for k in range(-6, 7))
SIM_COLUMNS = REPORT_COLUMNS + ("consistency_broken",)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _schema_line(kind: str) -> str:
    return f"# schema: ironclad-{kind} v{cfgmod.SCHEMA_VERSION}\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(kind: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(_schema_line(kind))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def read_csv_rows(path: Path) -> list[dict]:
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def output_path(name: str | None, default: str) -> Path:
    """Relative paths are resolved against ``$IRONCLAD_OUTPUT_DIR`` when it is set."""
    p = Path(name or default)
    base = os.environ.get(OUTPUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def write_atomic(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        write_atomic(output_path(out, out), text)


# analyze


def _params_from_flags(args, need_q: bool = True) -> ProtocolParams:
    if args.config:
        section = dict(cfgmod.load_config(args.config).get("params", {}))
    else:
        section = {}
    flags = {"p": args.p, "p_per_delta": args.p_per_delta, "rho": args.rho, "delta": args.delta, "q": args.q, "theta": args.theta}
    for k, v in flags.items():
        if v is not None:
            if k in ("p", "p_per_delta"):
                section.pop("p", None)
                section.pop("p_per_delta", None)
                section.pop("p_total", None)
            section[k] = v
    if need_q and "q" not in section:
        raise InvalidParameterError("q", "is required (a number or auto)")
    return cfgmod.build_params(section)


def _safe(fn, *a):
    try:
        return fn(*a)
    except DomainError:
        return math.nan


ANALYZE_COLUMNS = (
    "p", "rho", "delta", "q", "theta", "p_h", "p_a", "q_h", "q_H", "q_a", "q_A", "w_bar",
    "P_sigma1", "P_sigma2", "P_sigma3", "P_sigma4", "E_sigma1", "E_sigma2", "E_sigma3", "E_sigma4",
    "pi0", "pi1", "pi2", "alpha", "beta", "gamma", "A", "A_tilde", "q_star_closed", "q_star_numeric",
    "theta_lower", "R", "g", "f",
)


def analyze_row(params: ProtocolParams, eps: float = 1e-10, slack: float = 0.1) -> dict:
    r = derive_rates(params)
    model = an.embedded_chain(r, params.delta)
    st = model.stats
    row = {
        "p": params.p, "rho": params.rho, "delta": params.delta, "q": params.q, "theta": params.theta,
        "p_h": r.p_h, "p_a": r.p_a, "q_h": r.q_h, "q_H": r.q_H, "q_a": r.q_a, "q_A": r.q_A, "w_bar": r.w_bar,
    }
    for i in range(4):
        row[f"P_sigma{i + 1}"] = float(st.prob[i])
        row[f"E_sigma{i + 1}"] = float(st.exp_len[i])
    for i in range(3):
        row[f"pi{i}"] = float(model.pi[i])
    row["alpha"] = model.alpha
    row["beta"] = an.adversary_weight_rate(r)
    row["gamma"] = an.gamma_margin(params)
    row["A"] = an.tolerance_ratio_exact(params)
    row["A_tilde"] = _safe(an.tolerance_ratio_approx, params)
    if params.theta > 1:
        row["q_star_closed"] = an.optimal_q_closed(params.theta, r.p_h, params.delta)
        row["q_star_numeric"] = an.optimal_q_numeric(r.p_h, params.delta, params.theta)
    else:
        row["q_star_closed"] = row["q_star_numeric"] = math.nan
    row["theta_lower"] = _safe(an.theta_lower_bound, r.p_h, params.delta, params.q, eps)
    row["R"] = an.improvement_ratio(params)
    row["g"] = an.chain_growth_rate(params)
    row["f"] = an.chain_quality_bound(params, slack)
    return row


def cmd_analyze(args) -> int:
    params = _params_from_flags(args)
    row = analyze_row(params, args.eps, args.slack)
    if args.format == "json":
        clean = {k: (v if not isinstance(v, float) or math.isfinite(v) else repr(v)) for k, v in row.items()}
        _emit(json.dumps(clean) + "\n", args.out)
    else:
        _emit(csv_text("analyze", ANALYZE_COLUMNS, [row]), args.out)
    return EXIT_OK


# threshold


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise InvalidParameterError("c-grid", f"expected numbers, got {text!r}") from None


def cmd_threshold(args) -> int:
    if args.inverse is not None:
        try:
            pd = an.nakamoto_rate_limit(args.inverse)
        except DomainError as exc:
            raise InvalidParameterError("inverse", str(exc)) from None
        _emit(csv_text("threshold-inverse", ("rho", "p_per_delta"), [{"rho": args.inverse, "p_per_delta": pd}]), args.out)
        return EXIT_OK
    cs = _float_list(args.c_grid) if args.c_grid else list(DEFAULT_C_GRID)
    if any(not c > 0 for c in cs):
        raise InvalidParameterError("c-grid", "values must be positive")
    if args.curve == "nakamoto":
        rows = [{"c": c, "rho_nakamoto": an.nakamoto_threshold(c, args.delta)} for c in cs]
        _emit(csv_text("threshold", ("c", "rho_nakamoto"), rows), args.out)
        return EXIT_OK
    if args.theta is None:
        raise InvalidParameterError("theta", "is required for the ironclad curve")
    if args.q is None:
        raise InvalidParameterError("q", "is required for the ironclad curve")
    rows = []
    for c in cs:
        q = cfgmod.resolve_q(args.q, 1.0 / (c * args.delta), 0.0, args.delta, args.theta)
        row = an.tabulate_thresholds([c], args.delta, q, args.theta)[0]
        row["q"] = q
        row["no_root"] = math.isnan(row["rho_ironclad"])
        rows.append(row)
    if args.curve == "ironclad":
        cols = ("c", "q", "rho_ironclad", "no_root")
    else:
        cols = ("c", "q", "rho_ironclad", "rho_nakamoto", "no_root")
    _emit(csv_text("threshold", cols, rows), args.out)
    if args.strict and any(r["no_root"] for r in rows):
        return EXIT_ANALYTICS
    return EXIT_OK


# simulate / sweep


def _sim_config_from_args(args) -> SimConfig:
    sections = cfgmod.load_config(args.config) if args.config else {}
    params = dict(sections.get("params", {}))
    sim = dict(sections.get("sim", {}))
    for key in ("rho", "q", "theta", "delta"):
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    if args.p_per_delta is not None:
        for k in ("p", "p_total"):
            params.pop(k, None)
        params["p_per_delta"] = args.p_per_delta
    for key in ("miners", "horizon", "adversary", "chains", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            sim[key] = v
    return cfgmod.build_sim_config({"params": params, "sim": sim})


def sim_row(config: SimConfig, trace_path: Path | None = None) -> dict:
    trace = simulate_trace(config)
    if trace_path is not None:
        write_atomic(trace_path, trace.to_csv())
    rep = compute_metrics(trace)
    row = rep.row()
    row["consistency_broken"] = rep.consistency_broken
    return row


def cmd_simulate(args) -> int:
    config = _sim_config_from_args(args)
    if args.dump_config:
        sys.stdout.write(cfgmod.dump_config(cfgmod.sim_config_sections(config)))
        return EXIT_OK
    out = output_path(args.out, "simulate.csv")
    existing = ""
    if out.exists():
        try:
            existing = out.read_text()
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {out}: {exc.strerror or exc}") from None
    trace_path = output_path(args.trace, args.trace) if args.trace else None
    row = sim_row(config, trace_path)
    if existing:
        body = csv_text("simulate", SIM_COLUMNS, [row]).split("\n", 2)[2]
        text = existing + ("" if existing.endswith("\n") else "\n") + body
    else:
        text = csv_text("simulate", SIM_COLUMNS, [row])
    write_atomic(out, text)
    return EXIT_OK


SWEEP_COLUMNS = ("key",) + SIM_COLUMNS


def _sweep_job(config: SimConfig) -> dict:
    row = sim_row(config)
    row["key"] = cfgmod.point_key(config)
    return row


def cmd_sweep(args) -> int:
    try:
        preset = cfgmod.make_preset(args.preset, seed=args.seed, miners=args.miners, horizon=args.horizon)
    except KeyError:
        raise InvalidParameterError("preset", f"unknown preset {args.preset!r}; choose from {', '.join(cfgmod.PRESET_NAMES)}") from None
    keys = preset.keys()
    if args.dump_config:
        sections = [cfgmod.sim_config_sections(c) for c in preset.points]
        sys.stdout.write(json.dumps({"preset": preset.name, "version": preset.version, "points": sections}, indent=2) + "\n")
        return EXIT_OK
    out = output_path(args.out, f"{preset.name}.csv")
    done: dict[str, dict] = {}
    if out.exists() and not args.fresh:
        try:
            for row in read_csv_rows(out):
                if row.get("key") in keys:
                    done[row["key"]] = row
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {out}: {exc.strerror or exc}") from None
    # fail on an unwritable destination before spending time on simulations
    write_atomic(out, _sweep_text(keys, done))
    todo = [c for c, k in zip(preset.points, keys) if k not in done]
    if args.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_sweep_job, c) for c in todo]
            for fut in as_completed(futures):
                row = fut.result()
                done[row["key"]] = row
                write_atomic(out, _sweep_text(keys, done))
    else:
        for c in todo:
            row = _sweep_job(c)
            done[row["key"]] = row
            write_atomic(out, _sweep_text(keys, done))
    return EXIT_OK


def _sweep_text(keys: list[str], done: dict) -> str:
    rows = [done[k] for k in keys if k in done]
    return csv_text("sweep", SWEEP_COLUMNS, rows)


# walk


def _walk_config_from_args(args):
    sections = cfgmod.load_config(args.config) if args.config else {}
    walk = dict(sections.get("walk", {}))
    for key in ("q_tilde", "gamma", "theta", "threshold", "runs", "seed", "step_cap"):
        v = getattr(args, key)
        if v is not None:
            walk[key] = v
    if args.no_renormalize:
        walk["renormalize"] = False
    q = args.q if args.q is not None else walk.get("q")
    if q is None:
        raise InvalidParameterError("q", "is required (a number or auto)")
    theta = float(walk.get("theta", 1.0))
    walk["q"] = cfgmod.resolve_q(q, args.p_per_delta / args.delta, 0.0, args.delta, theta)
    return cfgmod.build_walk_config({"walk": walk})


def cmd_walk(args) -> int:
    config = _walk_config_from_args(args)
    if args.dump_config:
        sys.stdout.write(cfgmod.dump_config(cfgmod.walk_config_sections(config)))
        return EXIT_OK
    outcome = run_walks(config, jobs=args.jobs)
    hist_text = _schema_line("walk-histogram") + outcome.histogram_csv()
    if args.out_hist:
        write_atomic(output_path(args.out_hist, args.out_hist), hist_text)
    summary = outcome.summary_row()
    summary_text = csv_text("walk-summary", tuple(summary), [summary])
    if args.out_summary:
        write_atomic(output_path(args.out_summary, args.out_summary), summary_text)
    sys.stdout.write(summary_text)
    if outcome.censored:
        print(f"warning: {outcome.censored} walks hit the step cap and were censored", file=sys.stderr)
    return EXIT_OK


# parser


def _add_param_flags(sp, with_config: bool = True):
    sp.add_argument("--p", type=float, help="per-slot block probability")
    sp.add_argument("--p-per-delta", type=float, help="blocks per delta (alternative to --p)")
    sp.add_argument("--rho", type=float)
    sp.add_argument("--q", help="iron-block probability, or 'auto'")
    sp.add_argument("--theta", type=float)
    sp.add_argument("--delta", type=int)
    if with_config:
        sp.add_argument("--config", help="INI or JSON config file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ironclad", description="Weighted-block Nakamoto consensus workbench.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("analyze", help="closed-form quantities for one parameter point")
    _add_param_flags(sp)
    sp.add_argument("--eps", type=float, default=1e-10, help="failure probability for the theta lower bound")
    sp.add_argument("--slack", type=float, default=0.1, help="slack in the chain-quality bound")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("threshold", help="tolerated adversarial share against normalised blocktime c")
    sp.add_argument("--curve", choices=("ironclad", "nakamoto", "both"), default="both")
    sp.add_argument("--c-grid", help="comma-separated c values (default 2^-6 .. 2^6)")
    sp.add_argument("--q", help="iron-block probability, or 'auto'")
    sp.add_argument("--theta", type=float)
    sp.add_argument("--delta", type=int, default=cfgmod.DEFAULT_DELTA)
    sp.add_argument("--inverse", type=float, metavar="RHO", help="print the largest p*delta tolerated at RHO by the unweighted protocol")
    sp.add_argument("--strict", action="store_true", help="exit 4 if any point has no root")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("simulate", help="run one simulation and append its metrics row")
    sp.add_argument("--config")
    sp.add_argument("--p-per-delta", type=float)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--q")
    sp.add_argument("--theta", type=float)
    sp.add_argument("--delta", type=int)
    sp.add_argument("--miners", type=int)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--adversary")
    sp.add_argument("--chains", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="metrics CSV (appended)")
    sp.add_argument("--trace", help="also write the event trace CSV")
    sp.add_argument("--dump-config", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="run a preset grid of simulations")
    sp.add_argument("--preset", required=True, help=", ".join(cfgmod.PRESET_NAMES))
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--miners", type=int, default=50)
    sp.add_argument("--horizon", type=int, default=10_000)
    sp.add_argument("--out")
    sp.add_argument("--fresh", action="store_true", help="ignore rows already in the output file")
    sp.add_argument("--dump-config", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("walk", help="Monte-Carlo attack walks")
    sp.add_argument("--config")
    sp.add_argument("--theta", type=float)
    sp.add_argument("--q", help="adversary iron probability, or 'auto'")
    sp.add_argument("--q-tilde", dest="q_tilde", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--runs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--step-cap", dest="step_cap", type=int)
    sp.add_argument("--no-renormalize", action="store_true")
    sp.add_argument("--p-per-delta", type=float, default=1.0, help="honest blocks per delta used by --q auto")
    sp.add_argument("--delta", type=int, default=cfgmod.DEFAULT_DELTA)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out-hist")
    sp.add_argument("--out-summary")
    sp.add_argument("--dump-config", action="store_true")
    sp.set_defaults(func=cmd_walk)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidParameterError as exc:
        print(f"error: invalid {exc}", file=sys.stderr)
        return EXIT_ARGS
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (NoRootError, DegenerateParameterError, BoundaryMaximizerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYTICS
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_IO
    except (ValueError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
