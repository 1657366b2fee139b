"""Command-line front end: simulate | lln | rate | envelope | verify.

Output contract: CSV headers are fixed ("t,x_0,...,x_d,x_bar" for
trajectories, "k,cumulative_value,envelope_low,envelope_high" for
occupancy slices), every float is printed with 17 significant digits,
infinities serialize as the JSON strings "inf"/"-inf", and all JSON
reports carry schema_version.  Exit codes: 0 ok, 1 check failed,
2 usage/config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path as FsPath

import numpy as np

from . import lln, rate, simulator, verify
from .model import InitialProfile, Path, Schedule, config_from_dict

SCHEMA_VERSION = 1

_SECTION_KEYS = {
    "simulate": {"n", "d", "samples", "seed"},
    "lln": {"d", "times"},
    "rate": {"preset", "path_csv", "d", "tol"},
    "envelope": {"d", "times"},
    "verify": {"budget"},
}


class UsageError(Exception):
    pass


def _fmt_float(x: float) -> str:
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    if math.isnan(x):
        return '"nan"'
    return format(x, ".17g")


def _json_token(obj, indent: int) -> str:
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_json_token(v, indent + 2)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {_json_token(v, indent + 2)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    return json.dumps(obj)


def emit_json(obj) -> str:
    """JSON text with non-finite floats as strings and 17-digit floats."""
    return _json_token(obj, 0) + "\n"


def _csv_cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "inf" if math.isinf(x) else format(float(x), ".17g")
    return str(x)


def _write_csv(path: FsPath, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(x) for x in row])


def _load_config(path: str | None):
    """Full CLI config: model schema plus per-command option sections."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    allowed = {"schedule", "profile", "seed_config"} | set(_SECTION_KEYS)
    unknown = set(cfg) - allowed
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for section, keys in _SECTION_KEYS.items():
        extra = set(cfg.get(section, {})) - keys
        if extra:
            raise UsageError(f"unknown keys in '{section}' section: {sorted(extra)}")
    return cfg


def _model_parts(cfg: dict, preset: str | None):
    """(schedule, profile, seed_config) from config, preset, or defaults."""
    if preset in ("homogeneous", "figure1"):
        sched = (verify.classical_schedule() if preset == "homogeneous"
                 else verify.figure1_schedule())
        return sched, InitialProfile.empty(), None
    model_keys = {k: cfg[k] for k in ("schedule", "profile", "seed_config") if k in cfg}
    if "schedule" not in model_keys:
        return verify.classical_schedule(), InitialProfile.empty(), None
    try:
        return config_from_dict(model_keys)
    except ValueError as exc:
        raise UsageError(str(exc))


def _opt(args, cfg, section, key, default):
    val = getattr(args, key, None)
    if val is not None:
        return val
    sec = cfg.get(section, {})
    if key in sec:
        return sec[key]
    return default


def _outdir(args) -> FsPath:
    out = FsPath(args.out if args.out else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    sched, profile, seed_config = _model_parts(cfg, args.preset)
    n = int(_opt(args, cfg, "simulate", "n", 1000))
    d = int(_opt(args, cfg, "simulate", "d", 5))
    samples = int(_opt(args, cfg, "simulate", "samples", 1))
    seed = int(_opt(args, cfg, "simulate", "seed", 0))
    if profile.c_total == 0.0 and seed_config is None:
        seed_config = verify.seed_counts(d)
    from .model import realize_initial
    state0 = realize_initial(profile, n, d, seed_config=seed_config)

    out = _outdir(args)
    run = simulator.run(n, d, sched, state0, seed=seed)
    rows = [(t,) + tuple(v) for t, v in zip(run.interpolated.times,
                                            run.interpolated.values)]
    header = ["t"] + [f"x_{i}" for i in range(d + 1)] + ["x_bar"]
    _write_csv(out / "trajectory.csv", header, rows)

    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "n": n, "d": d, "seed": seed, "samples": samples,
        "terminal_state": [int(z) for z in run.trajectory[-1].counts],
    }
    if samples > 1:
        terminal = simulator.run_ensemble_terminal(n, d, sched, state0,
                                                   num_samples=samples, seed=seed)
        states, counts = np.unique(terminal, axis=0, return_counts=True)
        summary["terminal_histogram"] = {
            ",".join(str(int(x)) for x in row): int(c)
            for row, c in zip(states, counts)
        }
    (out / "summary.json").write_text(emit_json(summary))
    print(f"wrote {out / 'trajectory.csv'} and {out / 'summary.json'}")
    return 0


def _occupancy_slices(args, cfg, section: str):
    sched, profile, _ = _model_parts(cfg, args.preset)
    d = int(_opt(args, cfg, section, "d", 30))
    times = _opt(args, cfg, section, "times", None)
    if times is None:
        times = [0.01, 0.1, 1.0] if args.preset == "figure1" else [0.1, 0.5, 1.0]
    times = [float(t) for t in times]
    sol = lln.solve_lln_closed(d, sched, profile, grid=np.asarray(times))
    env = lln.power_law_envelopes(sched, profile, np.asarray(times), d)
    return sched, profile, d, times, sol, env


def cmd_lln(args) -> int:
    cfg = _load_config(args.config)
    sched, profile, d, times, sol, env = _occupancy_slices(args, cfg, "lln")
    out = _outdir(args)
    files = []
    for idx, t in enumerate(times):
        cum = np.cumsum(sol.values[idx, : d + 1])
        hi = np.cumsum(env.upper.values[idx])
        lo = np.cumsum(env.lower.values[idx])
        rows = [(k, cum[k], lo[k], hi[k]) for k in range(d + 1)]
        fname = out / f"lln_t{t:g}.csv"
        _write_csv(fname, ["k", "cumulative_value", "envelope_low", "envelope_high"],
                   rows)
        files.append(str(fname))
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "lln",
        "d": d,
        "times": times,
        "mass_deviation": sol.mass_deviation(profile),
        "files": files,
    }
    (out / "lln_summary.json").write_text(emit_json(report))
    print(f"wrote {len(files)} time slices and {out / 'lln_summary.json'}")
    return 0


def cmd_envelope(args) -> int:
    cfg = _load_config(args.config)
    sched, profile, d, times, sol, env = _occupancy_slices(args, cfg, "envelope")
    out = _outdir(args)
    rows = [(k, env.eta_prime[k], env.eta[k]) for k in range(d + 1)]
    _write_csv(out / "envelope_slopes.csv", ["k", "slope_low", "slope_high"], rows)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "envelope",
        "d": d,
        "lower_tail_exponent": env.lower_tail_exponent,
        "upper_tail_exponent": env.upper_tail_exponent,
        "eta": list(env.eta),
        "eta_prime": list(env.eta_prime),
    }
    (out / "envelope.json").write_text(emit_json(report))
    print(f"wrote {out / 'envelope_slopes.csv'} and {out / 'envelope.json'}")
    return 0


def _path_from_csv(fname: str) -> Path:
    try:
        with open(fname) as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(x) for x in row] for row in reader if row]
    except (OSError, ValueError, StopIteration) as exc:
        raise UsageError(f"cannot read path CSV {fname}: {exc}")
    if not header or header[0] != "t" or header[-1] != "x_bar":
        raise UsageError("path CSV must have header t,x_0,...,x_d,x_bar")
    arr = np.asarray(rows)
    return Path.from_knots(arr[:, 0], arr[:, 1:])


def cmd_rate(args) -> int:
    cfg = _load_config(args.config)
    sched, profile, _ = _model_parts(cfg, None)
    preset = args.preset or cfg.get("rate", {}).get("preset")
    path_csv = _opt(args, cfg, "rate", "path_csv", None)
    d = int(_opt(args, cfg, "rate", "d", 20))
    tol = float(_opt(args, cfg, "rate", "tol", 1e-6))
    out = _outdir(args)

    report = {"schema_version": SCHEMA_VERSION, "command": "rate"}
    if preset and path_csv:
        raise UsageError("give either a preset or a path CSV, not both")
    if path_csv:
        path = _path_from_csv(path_csv)
        rep = rate.path_rate_Id(path, sched, profile, tol=min(tol, 1e-8))
        cond = rate.condensation_term(path, sched, profile, tol)
        report.update({
            "input": path_csv, "d": path.d, "value": rep.value,
            "condensation_term": cond, "error": rep.error,
            "num_panels": rep.num_panels, "diverged": rep.diverged,
        })
    elif preset in ("star", "straight-road", "geometric") or (
            preset or "").startswith("stretched"):
        if preset == "star":
            law = lln.star_law()
        elif preset == "straight-road":
            law = lln.dirac_law(2)
        elif preset == "geometric":
            law = lln.geometric_law()
        else:
            parts = preset.split(":")
            if len(parts) != 2:
                raise UsageError("stretched preset syntax: stretched:<r>")
            try:
                law = lln.stretched_exponential(float(parts[1]))
            except (ValueError, RuntimeError) as exc:
                raise UsageError(f"bad stretched preset: {exc}")
        rep = rate.path_rate_Iinf(law, sched, profile, tol=tol)
        report.update({
            "preset": preset, "value": rep.value,
            "condensation_term": rep.condensation,
            "escape_mass": rep.escape_mass, "converged": rep.converged,
            "trace": [[dd, val] for dd, val in rep.trace],
            "error": rep.error,
        })
    elif preset == "lln":
        sol = lln.solve_lln_closed(d, sched, profile, rel_spacing=2e-3)
        rep = rate.path_rate_Id(sol.path(), sched, profile, tol=1e-10)
        cond = rate.condensation_term(sol.path(), sched, profile, 1e-10)
        report.update({
            "preset": "lln", "d": d, "value": rep.value,
            "condensation_term": cond, "error": rep.error,
            "num_panels": rep.num_panels, "diverged": rep.diverged,
        })
    elif preset:
        raise UsageError(f"unknown rate preset: {preset}")
    else:
        raise UsageError("rate needs --preset or a path_csv in the config")

    (out / "rate.json").write_text(emit_json(report))
    value = report["value"]
    print(f"rate value: {'inf' if math.isinf(value) else format(value, '.17g')}")
    print(f"wrote {out / 'rate.json'}")
    return 0


def cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    budget = args.budget or cfg.get("verify", {}).get("budget", "default")
    if budget not in ("default", "reduced"):
        raise UsageError("budget must be 'default' or 'reduced'")
    results = verify.run_all(budget)
    out = _outdir(args)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "budget": budget,
        "checks": [
            {"name": r.name, "passed": r.passed, "skipped": r.skipped,
             "expected_failure": r.expected_failure, "details": r.details,
             "seconds": r.seconds}
            for r in results
        ],
    }
    (out / "verify.json").write_text(emit_json(report))
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.skipped and not r.passed]
    print(f"{sum(1 for r in results if r.passed and not r.skipped)} passed, "
          f"{len(failed)} failed, {sum(1 for r in results if r.skipped)} skipped; "
          f"wrote {out / 'verify.json'}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="urnrates",
        description="Time-dependent preferential-attachment urns: simulation, "
                    "limit trajectories, and deviation rates.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "simulate": "sample scheme trajectories and write per-knot scaled counts",
        "lln": "limit occupancy slices with envelope columns",
        "rate": "evaluate the deviation rate of a path or preset",
        "envelope": "power-law envelope slopes and tail exponents",
        "verify": "run the acceptance battery",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, help="RNG seed (simulate)")
        p.add_argument("--n", type=int, help="scheme size")
        p.add_argument("--d", type=int, help="truncation level")
        p.add_argument("--samples", type=int, help="ensemble size (simulate)")
        p.add_argument("--preset", help="named schedule or deviation path")
        p.add_argument("--budget", help="verify budget: default|reduced")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": cmd_simulate, "lln": cmd_lln, "rate": cmd_rate,
                "envelope": cmd_envelope, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
