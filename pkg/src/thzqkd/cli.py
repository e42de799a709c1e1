"""Command-line interface.

Exit codes: 0 success, 2 configuration or usage error, 3 model error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, load_config_dict, snapshot
from .errors import InvalidArgument, ModelError
from .experiments import (ROW_FIELDS, ExperimentConfig, Scenario, SweepSpec,
                          estimate_trial, format_degrees, optimize_phase,
                          reference_phase_deg, run_pipeline, run_sweep, trial_seed)

EXIT_OK, EXIT_USAGE, EXIT_MODEL = 0, 2, 3
MANIFEST = "run_manifest.json"
CLI_VARS = ("distance", "vp_db", "lp", "k", "phi")
_AXIS_LABEL = {"distance": "distance d (m)", "pilot_power_db": "pilot power V_p (dB)",
               "pilot_length": "pilot length L_p", "ris_elements": "RIS elements K",
               "ris_phase": "shared RIS phase phi (rad)"}


class UsageError(InvalidArgument):
    pass


def fmt(x) -> str:
    """Numeric CSV cell: 12 significant digits."""
    if isinstance(x, (bool, str)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.12g" % x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")


def parse_values(values: str | None, rng: str | None) -> list[float]:
    """``--values a,b,c`` or inclusive ``--range start:stop:step``."""
    if (values is None) == (rng is None):
        raise UsageError("give exactly one of --values or --range")
    if values is not None:
        try:
            out = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--values must be comma-separated numbers, got {values!r}") from None
        if not out:
            raise UsageError("--values is empty")
        return out
    try:
        start, stop, step = (float(v) for v in rng.split(":"))
    except ValueError:
        raise UsageError(f"--range must be start:stop:step, got {rng!r}") from None
    if step == 0 or (stop - start) / step < 0 or not all(map(math.isfinite, (start, stop, step))):
        raise UsageError(f"--range {rng!r} does not reach its stop value")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(n)]


# --- commands -------------------------------------------------------------

def cmd_skr(sc: Scenario, exp: ExperimentConfig, args: dict, out: Path) -> list[str]:
    reports, est = run_pipeline(sc, exp)
    docs = [rep.to_dict() for rep in reports.values()]
    for d in docs:
        d["sigma2_ris"] = [float(v) for v in est.sigma2_ris]
        d["r"] = int(est.sigma2_ris.size)
    write_json(out / "skr.json", docs[0] if len(docs) == 1 else {"reports": docs})
    for det, rep in reports.items():
        print(f"total_skr[{det}] = {rep.total_skr:.12g} bits/use")
    return ["skr.json"]


def _gnuplot_script(variable: str, detectors: tuple[str, ...]) -> str:
    col = {name: i + 1 for i, name in enumerate(ROW_FIELDS)}
    x, y, e, d = col["value"], col["mean_skr"], col["stderr_skr"], col["detector"]
    plots = ", \\\n     ".join(
        f"'sweep.csv' using {x}:(strcol({d}) eq '{det}' ? ${y} : 1/0):{e} "
        f"with yerrorlines title '{det}'" for det in detectors)
    return ("# SKR sweep plot; run with: gnuplot sweep.gnuplot\n"
            "set datafile separator ','\n"
            "set key autotitle columnhead\n"
            "set terminal pngcairo size 800,600\n"
            "set output 'sweep.png'\n"
            "set grid\n"
            f"set xlabel '{_AXIS_LABEL[variable]}'\n"
            "set ylabel 'SKR (bits/channel use)'\n"
            f"plot {plots}\n")


def cmd_sweep(sc: Scenario, exp: ExperimentConfig, args: dict, out: Path) -> list[str]:
    spec = SweepSpec(args["var"], tuple(args["values"]), exp.trials, exp.seed, exp.detector)
    rows = run_sweep(spec, sc, exp)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for row in rows:
            rec = row.as_record()
            w.writerow([fmt(rec[k]) for k in ROW_FIELDS])
    (out / "sweep.gnuplot").write_text(_gnuplot_script(spec.variable, exp.detectors),
                                       encoding="utf-8")
    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"warning: {spec.variable}={r.value:g} ({r.detector}): {r.error}", file=sys.stderr)
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return ["sweep.csv", "sweep.gnuplot"]


def cmd_optimize_phase(sc: Scenario, exp: ExperimentConfig, args: dict, out: Path) -> list[str]:
    res = optimize_phase(sc, exp, grid_step=args.get("grid_step"))
    ref = reference_phase_deg(sc.system.N_T, sc.V_p_db, sc.distance) \
        if sc.system.N_T == sc.system.N_R else None
    doc = asdict(res)
    doc["curve"] = [list(p) for p in res.curve]
    doc["phi_opt_deg"] = res.phi_opt_deg
    doc["reference_phi_deg"] = ref
    write_json(out / "phase_opt.json", doc)
    line = f"phi_opt = {format_degrees(res.phi_opt)} (SKR {res.skr_at_opt:.6g} bits/use)"
    if ref is not None:
        line += f"; reference {ref:.2f}°"
    print(line)
    return ["phase_opt.json"]


def cmd_estimate(sc: Scenario, exp: ExperimentConfig, args: dict, out: Path) -> list[str]:
    chan = sc.channel()
    H = chan.H_ris
    rows, r0 = [], None
    for t in range(exp.trials):
        rng = np.random.default_rng(trial_seed(exp.seed, 0, t))
        est, _ = estimate_trial(chan, sc, rng, noiseless=exp.noiseless)
        if r0 is None:
            r0 = int(est.sigma2_ris.size)
        sig = list(est.sigma2_ris[:r0]) + [float("nan")] * (r0 - est.sigma2_ris.size)
        rel = np.linalg.norm(est.H_ls - H) / np.linalg.norm(H)
        rows.append([rel, float(np.real(np.trace(est.C_n_ml)))] + sig)
    with open(out / "estimate.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rel_err", "trace_C_n"] + [f"sigma2_ris_{i + 1}" for i in range(r0)])
        for row in rows:
            w.writerow([fmt(float(v)) for v in row])
    print(f"wrote {len(rows)} trials to {out / 'estimate.csv'}; "
          f"median relative error {np.median([r[0] for r in rows]):.3g}")
    return ["estimate.csv"]


COMMANDS = {"skr": cmd_skr, "sweep": cmd_sweep, "optimize-phase": cmd_optimize_phase,
            "estimate": cmd_estimate}


def execute(command: str, sc: Scenario, exp: ExperimentConfig, args: dict,
            out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    outputs = COMMANDS[command](sc, exp, args, out)
    manifest = {
        "tool": "thzqkd",
        "version": __version__,
        "command": command,
        "args": args,
        "seed": exp.seed,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": snapshot(sc, exp),
        "outputs": outputs,
    }
    write_json(out / MANIFEST, manifest)


# --- argument parsing -------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    p.add_argument("--detector", choices=("homodyne", "heterodyne", "both"))
    p.add_argument("--raw-sum", action="store_true", default=None,
                   help="sum per-mode rates without flooring negatives at zero")
    p.add_argument("--noiseless", action="store_true", default=None,
                   help="diagnostic: zero all pilot-stage noise")
    p.add_argument("--crn", action="store_true", default=None,
                   help="common random numbers across sweep points")
    p.add_argument("--vb", choices=("measured", "thermal"), dest="bob_variance",
                   help="Bob variance used when conditioning Eve's state")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thzqkd", description="RIS-assisted MIMO CV-QKD simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("skr", help="one realization, per-mode SKR report")
    _common(p)
    p = sub.add_parser("sweep", help="Monte Carlo parameter sweep")
    _common(p)
    p.add_argument("--var", required=True, choices=CLI_VARS)
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--range", dest="range_", metavar="START:STOP:STEP",
                   help="inclusive arithmetic range")
    p = sub.add_parser("optimize-phase", help="grid search of the shared RIS phase")
    _common(p)
    p.add_argument("--grid-step", type=float, help="grid spacing (rad)")
    p = sub.add_parser("estimate", help="channel-estimation diagnostics per trial")
    _common(p)
    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, help="output directory (default: manifest's)")
    return ap


_EXP_FLAGS = ("seed", "trials", "detector", "raw_sum", "noiseless", "crn", "bob_variance")


def _dispatch(ns: argparse.Namespace) -> None:
    if ns.command == "replay":
        try:
            man = json.loads(ns.manifest.read_text(encoding="utf-8"))
            command, args, conf = man["command"], man["args"], man["config"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read manifest {ns.manifest}: {exc}") from None
        if command not in COMMANDS:
            raise UsageError(f"manifest names unknown command {command!r}")
        sc, exp = load_config_dict(conf)
        execute(command, sc, exp, args, ns.out or ns.manifest.parent)
        return
    sc, exp = load_config(ns.config)
    overrides = {k: getattr(ns, k) for k in _EXP_FLAGS if getattr(ns, k) is not None}
    exp = replace(exp, **overrides)
    args: dict = {}
    if ns.command == "sweep":
        args = {"var": ns.var, "values": parse_values(ns.values, ns.range_)}
    elif ns.command == "optimize-phase":
        args = {"grid_step": ns.grid_step if ns.grid_step is not None else exp.grid_step}
    execute(ns.command, sc, exp, args, ns.out)


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        _dispatch(ns)
    except ModelError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
