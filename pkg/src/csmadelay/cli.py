"""Command-line entry point.

Subcommands: ``simulate``, ``verify-dtmc``, ``verify-drift``,
``audit-delay``, ``offline-bound`` and ``sweep``. Exit status is 0 on
success, 1 on a configuration error and 2 when a verification fails.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import LoadedConfig, config_from_dict, sweep_T
from .engine import InvariantError, Simulator
from .model import ConfigError
from .oracle.drift import check_record, phi3_ratio
from .oracle.dtmc import DtmcModel, OracleError, enumerate_independent_sets, simulate_frozen_chain, total_variation
from .oracle.offline import offline_optimum

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2

TRACE_HEADER = ["slot", "link", "type", "A", "r", "eta", "d", "mu", "z", "x", "Q", "Y", "Z", "w"]
JOB_HEADER = ["job_id", "link", "type", "admit_slot", "depart_slot", "outcome"]

PRODUCT_FORM_TOL = 1e-9
BALANCE_TOL = 1e-10
ROW_TOL = 1e-12


# -- reports ---------------------------------------------------------------


def render_tree(node, indent: int = 0) -> str:
    """Indented ``key: value`` text for nested dicts and lists."""
    pad = "  " * indent
    lines = []
    if isinstance(node, dict):
        for key, value in node.items():
            if isinstance(value, (dict, list)) and value:
                lines.append(f"{pad}{key}:")
                lines.append(render_tree(value, indent + 1))
            else:
                lines.append(f"{pad}{key}: {_fmt(value)}")
    elif isinstance(node, list):
        for i, value in enumerate(node):
            if isinstance(value, (dict, list)) and value:
                lines.append(f"{pad}- [{i}]")
                lines.append(render_tree(value, indent + 1))
            else:
                lines.append(f"{pad}- {_fmt(value)}")
    else:
        lines.append(f"{pad}{_fmt(node)}")
    return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, Fraction):
        return str(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def emit_report(name: str, report: dict, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    text = render_tree({name: report})
    (out / f"{name}.txt").write_text(text + "\n")
    (out / f"{name}.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=False) + "\n")
    print(text)


# -- CSV writers -----------------------------------------------------------


class TraceWriter:
    """Streams one CSV row per (slot, link, type); queues are start-of-slot values."""

    def __init__(self, fh, cfg):
        self.w = csv.writer(fh, lineterminator="\n")
        self.w.writerow(TRACE_HEADER)
        self.M = cfg.type_count
        self.ids = cfg.type_ids

    def __call__(self, rec):
        M = self.M
        rows = []
        for k in range(len(rec.Q)):
            i, m = divmod(k, M)
            rows.append((rec.slot, i, self.ids[m], rec.A[k], rec.r[k], repr(float(rec.eta[k])), rec.d[k],
                         rec.mu[k], rec.z[i], rec.x[i], rec.Q[k], repr(float(rec.Y[k])), repr(float(rec.Z[k])),
                         repr(float(rec.w[i]))))
        self.w.writerows(rows)


class JobWriter:
    def __init__(self, fh):
        self.w = csv.writer(fh, lineterminator="\n")
        self.w.writerow(JOB_HEADER)

    def __call__(self, job):
        self.w.writerow((job.job_id, job.link, job.type_id, job.admit_slot,
                         "" if job.depart_slot is None else job.depart_slot, job.status.value))


# -- config handling -------------------------------------------------------


def _overridden_raw(args) -> dict:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    import yaml

    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    for flag, key in (("seed", "seed"), ("horizon", "horizon"), ("V", "V"), ("T", "T"), ("W", "W")):
        value = getattr(args, flag, None)
        if value is not None:
            raw[key] = value
    return raw


def _load(args) -> LoadedConfig:
    return config_from_dict(_overridden_raw(args))


# -- subcommands -----------------------------------------------------------


def cmd_simulate(args) -> int:
    loaded = _load(args)
    cfg = loaded.sim
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    with open(out / "jobs.csv", "w", newline="") as jf:
        jobs = JobWriter(jf)
        sim = Simulator(cfg, check=True, trace=args.trace == "on", on_job=jobs)
        if args.trace == "on":
            with open(out / "trace.csv", "w", newline="") as tf:
                summary = sim.run(sink=TraceWriter(tf, cfg))
        else:
            summary = sim.run()
        for job in sim.pending_jobs():
            jobs(job)
    report = summary.to_dict()
    report["runtime_s"] = round(time.perf_counter() - started, 3)
    report.pop("delay_violations")
    emit_report("summary", report, out)
    return EXIT_OK


def _random_weights(rng, n, lo, hi):
    return [float(v) for v in rng.uniform(lo, hi, size=n)]


def cmd_verify_dtmc(args) -> int:
    loaded = _load(args)
    cfg, vs = loaded.sim, loaded.verify
    graph = cfg.graph
    rng = np.random.default_rng(cfg.rng_seed)
    transitions = args.horizon if args.horizon is not None else vs.transitions
    cases = []
    ok = True
    started = time.perf_counter()
    for v in range(vs.weight_vectors):
        weights = _random_weights(rng, graph.link_count, *vs.weight_range)
        model = DtmcModel.build(graph, cfg.W, weights=weights)
        counts = simulate_frozen_chain(graph, cfg.W, weights, transitions, seed=int(rng.integers(2**63)))
        emp = np.array([counts.get(s, 0) for s in model.states], dtype=float) / transitions
        tv = total_variation(emp, model.pi)
        checks = {
            "product_form_deviation": (model.max_deviation, PRODUCT_FORM_TOL),
            "balance_residual": (model.balance_residual, BALANCE_TOL),
            "row_sum_error": (model.max_row_error, ROW_TOL),
            "empirical_tv": (tv, vs.tv_tolerance),
        }
        case = {"weights": [round(w, 6) for w in weights]}
        for name, (value, tol) in checks.items():
            passed = value <= tol
            ok &= passed
            case[name] = {"value": value, "tolerance": tol, "pass": passed}
        cases.append(case)
    report = {
        "links": graph.link_count,
        "W": cfg.W,
        "states": len(enumerate_independent_sets(graph)),
        "transitions_per_case": transitions,
        "cases": cases,
        "runtime_s": round(time.perf_counter() - started, 3),
        "result": "pass" if ok else "FAIL",
    }
    emit_report("verify_dtmc", report, Path(args.out))
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_verify_drift(args) -> int:
    from .engine import exact_replay

    loaded = _load(args)
    cfg = loaded.sim
    slots = args.horizon if args.horizon is not None else loaded.verify.slots
    theta = loaded.verify.theta
    sets = enumerate_independent_sets(cfg.graph) if cfg.link_count <= 20 else None
    records = []
    sim = Simulator(cfg, check=True, trace=True)
    sim.run(slots, sink=records.append)
    failures = []
    failed = 0
    min_slack = math.inf
    ratios = []
    for rec in records:
        terms = check_record(rec, cfg)
        min_slack = min(min_slack, terms.slack)
        if not terms.holds:
            failed += 1
            if len(failures) < 20:
                failures.append({"slot": rec.slot, "lhs": terms.lhs, "rhs": terms.rhs})
        if sets is not None and rec.control:
            ratio = phi3_ratio(rec, cfg, sets)
            if ratio is not None:
                ratios.append(ratio)
    replay_ok = exact_replay(records, cfg)
    ok = not failures and replay_ok
    report = {
        "slots": slots,
        "drift_holds": f"{slots - failed}/{slots}",
        "min_slack": min_slack,
        "failures": failures,
        "exact_replay": "match" if replay_ok else "MISMATCH",
        "phi3_diagnostic": {
            "theta": theta,
            "super_slot_starts": len(ratios),
            "fraction_within_theta": (sum(r >= 1 - theta for r in ratios) / len(ratios)) if ratios else None,
            "mean_ratio": float(np.mean(ratios)) if ratios else None,
        },
        "result": "pass" if ok else "FAIL",
    }
    emit_report("verify_drift", report, Path(args.out))
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_audit_delay(args) -> int:
    loaded = _load(args)
    cfg = loaded.sim
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "jobs.csv", "w", newline="") as jf:
        jobs = JobWriter(jf)
        sim = Simulator(cfg, check=True, on_job=jobs)
        summary = sim.run()
    worst = {}
    for p in summary.pairs:
        worst[f"link {p.link} type {p.type_id}"] = {
            "deadline": cfg.job(p.link, cfg.type_ids.index(p.type_id)).deadline,
            "max_delay": p.max_delay,
            "delivered": p.delivered,
            "dropped": p.dropped,
        }
    violations = summary.delay_violations
    report = {
        "slots": summary.horizon,
        "finished_jobs": sum(p.delivered + p.dropped for p in summary.pairs),
        "delay_violations": len(violations),
        "examples": [
            {"job_id": j.job_id, "link": j.link, "type": j.type_id, "admit": j.admit_slot,
             "depart": j.depart_slot, "outcome": j.status.value} for j in violations[:10]
        ],
        "queue_bound_breaches": summary.bound_violations,
        "pairs": worst,
        "result": "pass" if not violations else "FAIL",
    }
    emit_report("audit_delay", report, out)
    return EXIT_OK if not violations else EXIT_VERIFY


def _offline_for(cfg) -> float:
    means = [[cfg.arrival_law.mean(job.arrival_max) for job in row] for row in cfg.job_types]
    return offline_optimum(cfg.graph, cfg.job_types, means, cfg.utility, cfg.beta)


def cmd_offline_bound(args) -> int:
    cfg = _load(args).sim
    res = _offline_for(cfg)
    report = {
        "optimum": res.value,
        "certified_gap": res.gap,
        "iterations": res.iterations,
        "capacity": res.capacity,
        "job_rates": res.rates,
    }
    emit_report("offline_bound", report, Path(args.out))
    return EXIT_OK


def _sub_seed(seed: int, *key) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint32)[0])


def _sweep_cell(raw: dict, V, T, seed: int, horizon: int):
    raw = copy.deepcopy(raw)
    raw.update({"V": V, "T": T, "seed": seed, "horizon": horizon})
    raw.pop("sweep", None)
    cfg = config_from_dict(raw).sim
    summary = Simulator(cfg, check=True).run()
    return {
        "net_utility": summary.net_utility,
        "decision_net_utility": summary.decision_net_utility,
        "delivered_net_utility": summary.delivered_net_utility,
        "delay_violations": len(summary.delay_violations),
        "bound_violations": summary.bound_violations,
    }


def cmd_sweep(args) -> int:
    raw = _overridden_raw(args)
    loaded = config_from_dict(raw)
    cfg, sw = loaded.sim, loaded.sweep
    horizon = args.horizon if args.horizon is not None else (sw.horizon or cfg.horizon)
    s_max = cfg.max_size
    cells = []
    for a, V in enumerate(sw.V):
        Ts = [sweep_T(V, s_max)] if sw.T == "sqrt" else list(sw.T)
        for b, T in enumerate(Ts):
            for rep in range(sw.seeds):
                cells.append((a, b, rep, V, T, _sub_seed(cfg.rng_seed, a, b, rep)))
    offline = _offline_for(cfg).value
    if sw.workers > 1:
        with ProcessPoolExecutor(sw.workers) as pool:
            results = list(pool.map(_sweep_cell, *zip(*[(raw, V, T, seed, horizon) for *_, V, T, seed in cells])))
    else:
        results = [_sweep_cell(raw, V, T, seed, horizon) for *_, V, T, seed in cells]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["V", "T", "seed", "net_utility", "decision_net_utility", "delivered_net_utility", "offline_optimum",
            "gap", "delay_violations", "bound_violations"]
    groups: dict = {}
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for (a, b, rep, V, T, seed), res in zip(cells, results):
            w.writerow([V, T, seed, repr(res["net_utility"]), repr(res["decision_net_utility"]),
                        repr(res["delivered_net_utility"]), repr(offline), repr(offline - res["net_utility"]),
                        res["delay_violations"], res["bound_violations"]])
            groups.setdefault((V, T), []).append(res["net_utility"])
    rows = []
    for (V, T), vals in groups.items():
        arr = np.array(vals)
        rows.append({"V": V, "T": T, "seeds": len(vals), "mean_net_utility": float(arr.mean()),
                     "std_net_utility": float(arr.std(ddof=1)) if len(vals) > 1 else 0.0,
                     "mean_gap": float(offline - arr.mean())})
    emit_report("sweep", {"horizon": horizon, "offline_optimum": offline, "cells": rows}, out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-dtmc": cmd_verify_dtmc,
    "verify-drift": cmd_verify_drift,
    "audit-delay": cmd_audit_delay,
    "offline-bound": cmd_offline_bound,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csmadelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--horizon", type=int, help="slots to simulate (transitions for verify-dtmc)")
        p.add_argument("--V", type=str, help="rational, e.g. 100 or 1/2")
        p.add_argument("--T", type=int)
        p.add_argument("--W", type=int)
        p.add_argument("--out", default="out")
        p.add_argument("--trace", choices=("on", "off"), default="on")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors are config errors here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantError, OracleError) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
