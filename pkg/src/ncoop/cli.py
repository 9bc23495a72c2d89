"""Experiment driver: ``ncoop run | validate | version``.

A run reads one JSON config, draws ``n_trials`` channels from per-trial
seeds derived from the base seed, evaluates every requested scheme and
writes a long-format CSV plus a JSON summary (mean and standard error per
scheme, sweep point and metric).  Output goes to ``output.dir`` from the
config, else ``$NCOOP_OUTPUT_DIR``, else the current directory.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (coherent_upper_baseline, equal_power_coop, noncoop_joint_bf,
                        noncoop_nullspace_bf, noncoop_power_control,
                        noncoop_power_control_wideband, zf_rate_pair)
from .beamforming import equal_power_bf, frontier_bf, wideband_bf_dual_solve
from .channel import (NarrowbandGains, generate_wideband_miso,
                      generate_wideband_scalar)
from .narrowband import frontier_point, max_rate, max_weighted_sum_rate
from .wideband import dual_solve, highsnr_waterfill

OUTPUT_ENV = "NCOOP_OUTPUT_DIR"
CSV_COLUMNS = ("experiment", "scheme", "snr_or_mu", "trial", "metric", "value")

EXPERIMENTS = {
    "frontier": ("coop", "noncoop"),
    "sumrate-sweep": ("coop", "noncoop"),
    "wideband-sweep": ("dual", "equal-power", "noncoop", "noncoop-dual", "highsnr", "coherent"),
    "beamforming-frontier": ("coop-bf", "noncoop-bf", "zf"),
    "beamforming-wideband-sweep": ("dual-bf", "equal-power-bf", "nullspace-zf", "coherent"),
}
NARROWBAND = ("frontier", "sumrate-sweep", "beamforming-frontier")
MISO = ("beamforming-frontier", "beamforming-wideband-sweep")

TOP_KEYS = {"experiment", "name", "channel", "schemes", "mu", "mu_list", "snr_db", "budget",
            "n_points", "solver", "output", "workers", "gap_at_rate"}
CHANNEL_KEYS = {"mode", "L", "Nt", "mean_gains", "gains", "rho", "seed", "n_trials"}
SOLVER_KEYS = {"eps_lambda", "noncoop_grid"}
OUTPUT_KEYS = {"dir", "prefix"}


class ConfigError(ValueError):
    """Invalid experiment config; ``line`` points into the JSON text when known."""

    def __init__(self, field, message, line=None):
        self.field = field
        self.line = line
        super().__init__(message)

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.field}: {self.args[0]}"


def _line_of(text, key):
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


# -- config ---------------------------------------------------------------------------

def _number(value, field, lo=None, hi=None, lo_open=False, hi_open=True, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, "must be a number")
    if integer and int(value) != value:
        raise ConfigError(field, "must be an integer")
    if not math.isfinite(value):
        raise ConfigError(field, "must be finite")
    if lo is not None and (value < lo or (lo_open and value == lo)) or \
            hi is not None and (value > hi or (hi_open and value == hi)):
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        rng = f"{lb}{'-inf' if lo is None else format(lo, 'g')},{'inf' if hi is None else format(hi, 'g')}{rb}"
        raise ConfigError(field, f"value {value} outside {rng}")
    return int(value) if integer else float(value)


def _numbers(value, field, n=None, **kw):
    if not isinstance(value, list) or not value or (n is not None and len(value) != n):
        size = f"{n} numbers" if n else "a nonempty list of numbers"
        raise ConfigError(field, f"must be {size}")
    return [_number(v, f"{field}[{i}]", **kw) for i, v in enumerate(value)]


def _unknown(doc, allowed, where):
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigError(f"{where}{extra[0]}", "unknown field")


def normalize_config(doc: dict) -> dict:
    """Validate a parsed config and fill defaults; raises ``ConfigError``."""
    if not isinstance(doc, dict):
        raise ConfigError("(root)", "config must be a JSON object")
    _unknown(doc, TOP_KEYS, "")
    kind = doc.get("experiment")
    if kind not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {sorted(EXPERIMENTS)}")
    cfg = {"experiment": kind, "name": doc.get("name", kind)}
    if not isinstance(cfg["name"], str) or not cfg["name"]:
        raise ConfigError("name", "must be a nonempty string")

    chd = doc.get("channel", {})
    if not isinstance(chd, dict):
        raise ConfigError("channel", "must be an object")
    _unknown(chd, CHANNEL_KEYS, "channel.")
    miso = kind in MISO
    mode = chd.get("mode", "miso" if miso else "scalar")
    if mode != ("miso" if miso else "scalar"):
        raise ConfigError("channel.mode", f"must be {'miso' if miso else 'scalar'} for {kind}")
    ch = {
        "mode": mode,
        "L": 1 if kind in NARROWBAND else _number(chd.get("L", 128), "channel.L", lo=1, hi=None, integer=True),
        "rho": _number(chd.get("rho", 0.95), "channel.rho", lo=0.0, hi=1.0),
        "seed": _number(chd.get("seed", 0), "channel.seed", lo=0, hi=None, integer=True),
        "n_trials": _number(chd.get("n_trials", 20), "channel.n_trials", lo=1, hi=None, integer=True),
    }
    if kind in NARROWBAND and "L" in chd and chd["L"] != 1:
        raise ConfigError("channel.L", f"must be 1 for {kind}")
    if miso:
        ch["Nt"] = _number(chd.get("Nt", 2), "channel.Nt", lo=2, hi=None, integer=True)
    elif "Nt" in chd:
        raise ConfigError("channel.Nt", "only valid for MISO experiments")
    default_mean = [1.0 / ch["Nt"]] * 4 if miso else [1.0] * 4
    ch["mean_gains"] = _numbers(chd.get("mean_gains", default_mean), "channel.mean_gains", 4, lo=0.0, hi=None)
    if "gains" in chd:
        if kind not in ("frontier", "sumrate-sweep"):
            raise ConfigError("channel.gains", "fixed gains only for scalar narrowband experiments")
        ch["gains"] = _numbers(chd["gains"], "channel.gains", 4, lo=0.0, hi=None)
    cfg["channel"] = ch

    allowed = EXPERIMENTS[kind]
    schemes = doc.get("schemes", list(allowed))
    if not isinstance(schemes, list) or not schemes:
        raise ConfigError("schemes", "must be a nonempty list")
    for i, s in enumerate(schemes):
        if s not in allowed:
            raise ConfigError(f"schemes[{i}]", f"unknown scheme {s!r}; choose from {list(allowed)}")
    if len(set(schemes)) != len(schemes):
        raise ConfigError("schemes", "duplicate scheme")
    cfg["schemes"] = list(schemes)

    cfg["mu"] = _number(doc.get("mu", 1.0), "mu", lo=0.0, hi=None)
    if kind == "beamforming-frontier":
        cfg["mu_list"] = _numbers(doc.get("mu_list", [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 1e3]),
                                  "mu_list", lo=0.0, hi=None)
    elif "mu_list" in doc:
        raise ConfigError("mu_list", "only valid for beamforming-frontier")
    if kind in ("frontier", "beamforming-frontier"):
        cfg["budget"] = _numbers(doc.get("budget", [5.0, 5.0] if kind == "frontier" else [3.0, 3.0]),
                                 "budget", 2, lo=0.0, hi=None)
        if "snr_db" in doc:
            raise ConfigError("snr_db", f"not used by {kind}; set budget")
    else:
        cfg["snr_db"] = _numbers(doc.get("snr_db", [0.0, 5.0, 10.0, 15.0, 20.0]), "snr_db")
        if "budget" in doc:
            raise ConfigError("budget", f"not used by {kind}; set snr_db")
    if kind == "frontier":
        cfg["n_points"] = _number(doc.get("n_points", 21), "n_points", lo=2, hi=None, integer=True)
    elif "n_points" in doc:
        raise ConfigError("n_points", "only valid for frontier")
    if "highsnr" in cfg["schemes"] and cfg["mu"] != 1.0:
        raise ConfigError("mu", "highsnr scheme requires mu = 1")

    sol = doc.get("solver", {})
    if not isinstance(sol, dict):
        raise ConfigError("solver", "must be an object")
    _unknown(sol, SOLVER_KEYS, "solver.")
    cfg["solver"] = {
        "eps_lambda": _number(sol.get("eps_lambda", 1e-6), "solver.eps_lambda", lo=0.0, hi=1.0, lo_open=True),
        "noncoop_grid": _number(sol.get("noncoop_grid", 65), "solver.noncoop_grid", lo=5, hi=None, integer=True),
    }
    out = doc.get("output", {})
    if not isinstance(out, dict):
        raise ConfigError("output", "must be an object")
    _unknown(out, OUTPUT_KEYS, "output.")
    for k in OUTPUT_KEYS & set(out):
        if not isinstance(out[k], str):
            raise ConfigError(f"output.{k}", "must be a string")
    cfg["output"] = {k: out[k] for k in sorted(out)}
    cfg["workers"] = _number(doc.get("workers", 1), "workers", lo=1, hi=None, integer=True)
    if "gap_at_rate" in doc:
        if kind in ("frontier", "beamforming-frontier"):
            raise ConfigError("gap_at_rate", "only valid for sweeps")
        cfg["gap_at_rate"] = _number(doc["gap_at_rate"], "gap_at_rate", lo=0.0, hi=None, lo_open=True)
    return cfg


def load_config(path) -> tuple[dict, str]:
    """Parse and validate; returns ``(normalized config, raw text)``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("(json)", e.msg, e.lineno) from None
    try:
        return normalize_config(doc), text
    except ConfigError as e:
        if e.line is None:
            e.line = _line_of(text, e.field.split(".")[-1].split("[")[0])
        raise


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical normalized config; output paths excluded."""
    core = {k: v for k, v in cfg.items() if k not in ("output", "workers")}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def trial_seeds(seed: int, n: int) -> list[int]:
    """Independent per-trial seeds spawned from the base seed."""
    kids = np.random.SeedSequence(seed).spawn(n)
    return [int(k.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for k in kids]


# -- trials --------------------------------------------------------------------------

def _channel(cfg, seed):
    c = cfg["channel"]
    if c["mode"] == "miso":
        return generate_wideband_miso(c["L"], c["Nt"], c["mean_gains"], c["rho"], seed)
    return generate_wideband_scalar(c["L"], c["mean_gains"], c["rho"], seed)


def _frontier_rows(cfg, seed):
    c = cfg["channel"]
    g = NarrowbandGains.from_seq(c["gains"]) if "gains" in c else \
        NarrowbandGains.from_seq(_channel(cfg, seed).gains[0])
    b = cfg["budget"]
    top = max_rate(g, b, 1)
    nc_top = math.log2(1.0 + g.g11 * b[0])
    out = []
    for t in np.linspace(0.0, top, cfg["n_points"]):
        t = float(t)
        for s in cfg["schemes"]:
            if s == "coop":
                fp = frontier_point(g, b, min(t, top))
                R1, R2 = fp.rates.R1, fp.rates.R2
            else:
                if t > nc_top:
                    continue
                r = noncoop_power_control(g, b, t, mode="frontier", n_grid=cfg["solver"]["noncoop_grid"] * 4)
                R1, R2 = r.rates.R1, r.rates.R2
            out += [(s, t, "R1", R1), (s, t, "R2", R2)]
    return out


def _sumrate_rows(cfg, seed):
    c = cfg["channel"]
    g = c["gains"] if "gains" in c else _channel(cfg, seed).gains[0]
    out = []
    for db in cfg["snr_db"]:
        P = 10.0 ** (db / 10.0)
        for s in cfg["schemes"]:
            if s == "coop":
                v = max_weighted_sum_rate(g, (P, P), cfg["mu"]).rate
            else:
                v = noncoop_power_control(g, (P, P), cfg["mu"], n_grid=cfg["solver"]["noncoop_grid"] * 2).value
            out.append((s, db, "rate", v))
    return out


def _wideband_rows(cfg, seed):
    ch = _channel(cfg, seed)
    L, mu, eps = ch.L, cfg["mu"], cfg["solver"]["eps_lambda"]
    out = []
    for db in cfg["snr_db"]:
        P = 10.0 ** (db / 10.0)
        bud = (L * P, L * P)
        dual = None
        for s in cfg["schemes"]:
            extra = []
            if s == "dual":
                dual = a = dual_solve(ch, bud, mu, eps)
                extra = [("relative_gap", a.relative_gap)]
            elif s == "equal-power":
                a = equal_power_coop(ch, bud, mu)
            elif s == "noncoop":
                a = noncoop_power_control_wideband(ch, bud, mu, n_grid=cfg["solver"]["noncoop_grid"])
            elif s == "noncoop-dual":
                a = noncoop_power_control_wideband(ch, bud, mu, allocation="dual")
            elif s == "highsnr":
                a = highsnr_waterfill(ch, bud, mu)
            else:
                a = coherent_upper_baseline(ch, bud, mu, noncoherent=dual if dual is not None else "auto")
            out.append((s, db, "rate", a.rate / L))
            out += [(s, db, m, v) for m, v in extra]
    return out


def _bf_frontier_rows(cfg, seed):
    ch = _channel(cfg, seed).subcarrier(0)
    b = cfg["budget"]
    out = []
    for s in cfg["schemes"]:
        if s == "coop-bf":
            pts = [(m, rp) for m, rp, _ in frontier_bf(ch, b, cfg["mu_list"])]
        elif s == "noncoop-bf":
            pts = [(m, noncoop_joint_bf(ch, b, m)[1]) for m in cfg["mu_list"]]
        else:
            rp = zf_rate_pair(ch, b)
            pts = [(m, rp) for m in cfg["mu_list"]]
        for m, rp in pts:
            out += [(s, m, "R1", rp.R1), (s, m, "R2", rp.R2)]
    return out


def _bf_wideband_rows(cfg, seed):
    ch = _channel(cfg, seed)
    L, mu, eps = ch.L, cfg["mu"], cfg["solver"]["eps_lambda"]
    out = []
    for db in cfg["snr_db"]:
        P = 10.0 ** (db / 10.0)
        bud = (L * P, L * P)
        dual = None
        for s in cfg["schemes"]:
            extra = []
            if s == "dual-bf":
                dual = a = wideband_bf_dual_solve(ch, bud, mu, eps)
                extra = [("relative_gap", a.relative_gap)]
            elif s == "equal-power-bf":
                a = equal_power_bf(ch, bud, mu)
            elif s == "nullspace-zf":
                a = noncoop_nullspace_bf(ch, bud, mu)
            else:
                a = coherent_upper_baseline(ch, bud, mu, noncoherent=dual if dual is not None else "auto")
            out.append((s, db, "rate", a.rate / L))
            out += [(s, db, m, v) for m, v in extra]
    return out


RUNNERS = {
    "frontier": _frontier_rows,
    "sumrate-sweep": _sumrate_rows,
    "wideband-sweep": _wideband_rows,
    "beamforming-frontier": _bf_frontier_rows,
    "beamforming-wideband-sweep": _bf_wideband_rows,
}


def run_trial(cfg: dict, seed: int):
    """Rows ``(scheme, snr_or_mu, metric, value)`` for one trial seed."""
    return RUNNERS[cfg["experiment"]](cfg, seed)


def _safe_trial(args):
    cfg, seed = args
    try:
        return run_trial(cfg, seed), None
    except Exception as e:                     # surfaced per trial, run aborts afterwards
        return None, f"{type(e).__name__}: {e}"


# -- output --------------------------------------------------------------------------

def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def rows_to_csv(experiment, trials) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for t, rows in trials:
        for scheme, x, metric, value in rows:
            w.writerow([experiment, scheme, _fmt(x), t, metric, _fmt(value)])
    return buf.getvalue()


def summarize(trials):
    """Mean and standard error per ``(scheme, snr_or_mu, metric)`` in first-seen order."""
    acc = {}
    for _, rows in trials:
        for scheme, x, metric, value in rows:
            acc.setdefault((scheme, float(x), metric), []).append(float(value))
    out = []
    for (scheme, x, metric), vals in acc.items():
        a = np.array(vals)
        se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
        out.append({"scheme": scheme, "snr_or_mu": x, "metric": metric, "n": int(a.size),
                    "mean": float(a.mean()), "stderr": se})
    return out


def horizontal_gaps(summary, reference, rate):
    """dB shift of each scheme's mean rate curve relative to ``reference`` at ``rate``."""
    curves = {}
    for r in summary:
        if r["metric"] == "rate":
            curves.setdefault(r["scheme"], []).append((r["snr_or_mu"], r["mean"]))

    def crossing(pts):
        pts = sorted(pts)
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        if not (y[0] <= rate <= y[-1]) or np.any(np.diff(y) < 0):
            return None
        return float(np.interp(rate, y, x))

    if reference not in curves:
        return {}
    x0 = crossing(curves[reference])
    gaps = {}
    for s, pts in curves.items():
        if s == reference:
            continue
        x = crossing(pts)
        gaps[s] = None if x is None or x0 is None else x - x0
    return gaps


def output_dir(cfg) -> Path:
    return Path(cfg["output"].get("dir") or os.environ.get(OUTPUT_ENV) or ".")


def run(config_path, out_dir=None, stream=sys.stdout) -> int:
    cfg, _ = load_config(config_path)
    n = cfg["channel"]["n_trials"]
    seeds = trial_seeds(cfg["channel"]["seed"], n)
    jobs = [(cfg, s) for s in seeds]
    if cfg["workers"] > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as ex:
            results = list(ex.map(_safe_trial, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_safe_trial(job))
            if results[-1][1] is not None:
                break
    trials, error = [], None
    for t, (rows, err) in enumerate(results):
        if err is not None:
            error = f"trial {t} (seed {seeds[t]}): {err}"
            break
        trials.append((t, rows))

    dest = Path(out_dir) if out_dir else output_dir(cfg)
    dest.mkdir(parents=True, exist_ok=True)
    stem = cfg["output"].get("prefix", cfg["name"])
    csv_path = dest / f"{stem}.csv"
    json_path = dest / f"{stem}.json"
    csv_path.write_bytes(rows_to_csv(cfg["experiment"], trials).encode("utf-8"))
    summary = summarize(trials)
    doc = {
        "experiment": cfg["experiment"],
        "name": cfg["name"],
        "config_hash": config_hash(cfg),
        "seed": cfg["channel"]["seed"],
        "trial_seeds": seeds[:len(trials)],
        "n_trials_completed": len(trials),
        "complete": error is None,
        "error": error,
        "versions": {"ncoop": __version__, "numpy": np.__version__},
        "config": {k: v for k, v in cfg.items() if k != "output"},
        "summary": summary,
    }
    if "gap_at_rate" in cfg:
        ref = cfg["schemes"][0]
        doc["gaps_db"] = {"reference": ref, "at_rate": cfg["gap_at_rate"],
                          "gaps": horizontal_gaps(summary, ref, cfg["gap_at_rate"])}
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {csv_path} and {json_path}", file=stream)
    if error is not None:
        print(f"error: {error}; partial results kept", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="ncoop", description="Noncoherent two-cell cooperation experiments")
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (overrides config and ${OUTPUT_ENV})")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    sub.add_parser("version", help="print the package version")
    args = p.parse_args(argv)
    if args.verb == "version":
        print(__version__)
        return 0
    try:
        if args.verb == "validate":
            load_config(args.config)
            print("valid")
            return 0
        return run(args.config, args.out)
    except ConfigError as e:
        print(f"{args.config}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
