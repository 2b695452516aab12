"""``balloc`` command line.

Exit codes: 0 on success, 2 on invalid input, 3 when ``--assert`` is given
and the checked property fails.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
from pathlib import Path

import numpy as np

from . import analysis, harness
from .core import LoadVector, normalize
from .potentials import evaluate_all, exploratory_constants
from .processes import PROCESSES, ProcessState
from .sampling import parse_distribution

EXIT_INVALID = 2
EXIT_ASSERT = 3


class AssertionFailed(Exception):
    pass


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, default=_plain)
    sys.stdout.write("\n")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config; flags override its fields")
    p.add_argument("--process", choices=PROCESSES)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--m-mult", type=float, help="set m = m_mult * n")
    p.add_argument("--dist")
    p.add_argument("--weights")
    p.add_argument("--d", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, dest="master_seed")
    p.add_argument("--cadence")
    p.add_argument("--full-trace", action="store_true", default=None)
    p.add_argument("--record-loads", action="store_true", default=None)
    p.add_argument("--out", type=Path, required=True)


def cmd_run(args) -> int:
    base = args.config.parent if args.config else Path.cwd()
    cfg = json.loads(args.config.read_text()) if args.config else {}
    for key in ("process", "n", "m", "dist", "weights", "d", "beta", "trials",
                "master_seed", "cadence", "full_trace", "record_loads"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.m_mult is not None:
        if "n" not in cfg:
            raise ValueError("--m-mult needs n")
        cfg["m"] = int(round(args.m_mult * cfg["n"]))
    missing = [k for k in ("process", "n", "m") if k not in cfg]
    if missing:
        raise ValueError(f"missing required settings: {missing}")
    ecfg = harness.ExperimentConfig.from_dict(cfg)
    res = harness.run_experiment(ecfg, args.out, base)
    finals = [r["final_gap"] for r in res.rows]
    _dump({"out": str(args.out), "trials": len(finals),
           "median_final_gap": statistics.median(finals)})
    return 0


def cmd_sweep(args) -> int:
    grid = json.loads(args.grid.read_text())
    rows = harness.sweep(grid, args.out, args.grid.parent, force=args.force)
    _dump({"out": str(args.out), "rows": len(rows)})
    return 0


def cmd_report(args) -> int:
    rows = harness.report(harness.read_summary(args.summary), args.kind)
    if args.out:
        harness.write_report(args.out, rows)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return 0


def _mode(spec: str) -> tuple[str, int | None]:
    name, _, arg = spec.partition(":")
    if name not in ("closed", "exact", "mc"):
        raise ValueError(f"unknown mode {spec!r}")
    return name, int(float(arg)) if arg else None


def _run_probs(dist, d, mode, seed):
    name, trials = _mode(mode)
    if name == "closed":
        return analysis.weak_memory_run_probs_closed(dist, d)
    if name == "exact":
        return analysis.exact_run_probs(dist, d)
    return analysis.mc_run_probs(dist, d, trials or 10 ** 6, np.random.default_rng(seed))


def cmd_alloc_vector(args) -> int:
    dist = parse_distribution(args.dist, args.n)
    rp = _run_probs(dist, args.d, args.mode, args.seed)
    proxy = analysis.proxy_allocation_vector(rp).p
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["rank"] + [f"p_{j}" for j in range(args.d + 1)] + ["expected", "proxy"])
    exp = rp.expected_balls()
    for i in range(rp.n):
        w.writerow([i + 1] + [repr(float(x)) for x in rp.p_hat[i]]
                   + [repr(float(exp[i])), repr(float(proxy[i]))])
    return 0


def _states(spec: str, n: int, seed: int) -> list[ProcessState]:
    if spec.startswith("random:"):
        k, _, gap_min = spec[len("random:"):].partition(",")
        return analysis.random_states(n, int(k), float(gap_min or 0), np.random.default_rng(seed))
    out = []
    for obj in json.loads(Path(spec).read_text()):
        lv = LoadVector.from_loads(np.asarray(obj["loads"], dtype=np.int64))
        if lv.n != n:
            raise ValueError(f"state has {lv.n} bins, expected {n}")
        out.append(ProcessState(lv, cache=obj.get("cache"), step=int(lv.total_weight)))
    return out


def cmd_verify_drop(args) -> int:
    dist = parse_distribution(args.dist, args.n)
    states = _states(args.states, args.n, args.seed)
    name, trials = _mode(args.mode)
    if name == "exact":
        rep = analysis.verify_drop_exact(args.process, dist, args.alpha, args.d, states,
                                         args.gap_threshold)
    elif name == "mc":
        rep = analysis.verify_drop_mc(args.process, dist, args.alpha, args.d, states,
                                      trials or 10 ** 5, np.random.default_rng(args.seed + 1),
                                      args.gap_threshold)
    else:
        raise ValueError("verify-drop mode must be exact or mc")
    _dump(rep.as_dict())
    if args.check and not rep.all_decrease:
        raise AssertionFailed("drift is not negative in every state")
    return 0


def cmd_fold(args) -> int:
    header, records = harness.read_jsonl(args.trace)
    n = int(header["config"]["n"])
    steplog = analysis.StepLog.from_records(records, n, args.trial)
    cfg = exploratory_constants(args.v, args.alpha2, n)
    seg = analysis.segment_folded(steplog, args.j, cfg)
    out = seg.as_dict()
    if not args.rounds:
        out.pop("rounds")
    _dump(out)
    if args.check and (seg.violations or not seg.is_partition()):
        raise AssertionFailed(f"{len(seg.violations)} folded-constraint violations")
    return 0


def _layered(spec: str, n: int):
    kv = {}
    for part in filter(None, spec.split(",")):
        k, sep, v = part.partition("=")
        if not sep:
            raise ValueError(f"bad --layered entry {part!r}")
        kv[k.strip()] = float(v)
    if "v" not in kv or "alpha2" not in kv:
        raise ValueError("--layered needs v= and alpha2=")
    return exploratory_constants(kv["v"], kv["alpha2"], n, c=kv.get("c", 1.0))


def cmd_potentials(args) -> int:
    if args.loads is not None:
        loads = np.asarray(json.loads(args.loads.read_text()), dtype=np.float64)
        vectors = [("", 0, loads)]
    else:
        _, records = harness.read_jsonl(args.trace)
        vectors = [(r.trial, r.step, np.asarray(r.loads, dtype=np.float64))
                   for r in records if r.loads is not None and (args.trial is None
                                                                or r.trial == args.trial)]
        if not vectors:
            raise ValueError("trace has no load snapshots; rerun with --record-loads")
    cfg = _layered(args.layered, len(vectors[0][2])) if args.layered else None
    layers = [int(x) for x in args.layers.split(",")] if cfg else []
    if args.alpha is None and cfg is None:
        raise ValueError("give --alpha and/or --layered")
    rows = []
    for trial, step, x in vectors:
        y = normalize(LoadVector(x, float(x.sum())))
        rows.append({"trial": trial, "step": step, **evaluate_all(y, args.alpha, cfg, layers)})
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    else:
        _dump(rows)
    return 0


def _vector(spec: str, n: int | None) -> np.ndarray:
    if spec.startswith("twochoice:"):
        return analysis.twochoice_allocation_vector(int(spec.split(":", 1)[1])).p
    if spec.startswith("proxy:"):
        # proxy:<d>:<dist spec>
        d, _, dspec = spec[len("proxy:"):].partition(":")
        if n is None:
            raise ValueError("proxy vectors need --n")
        rp = analysis.exact_run_probs(parse_distribution(dspec, n), int(d))
        return analysis.proxy_allocation_vector(rp).p
    p = np.asarray(json.loads(Path(spec).read_text()), dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise ValueError("allocation vector must be non-negative and sum to 1")
    return p


def cmd_c1(args) -> int:
    p = _vector(args.vector, args.n)
    out = {"n": int(p.size), "delta": args.delta, "max_eps": analysis.c1_max_eps(p, args.delta)}
    if args.eps is not None:
        res = analysis.c1_check(p, args.delta, args.eps)
        out.update(eps=args.eps, passed=res.passed, first_violation=res.first_violation,
                   side=res.side)
        ok = res.passed
    else:
        ok = out["max_eps"] > 0
        out["passed"] = ok
    _dump(out)
    if args.check and not ok:
        raise AssertionFailed("condition C1 fails")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="balloc", description="Balls-into-bins experiment lab")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _add_run_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a grid of experiments")
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate a summary CSV")
    p.add_argument("--summary", type=Path, required=True)
    p.add_argument("--kind", choices=harness.REPORT_KINDS, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("alloc-vector", help="run-allocation matrix and proxy vector")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--mode", default="closed", help="closed | exact | mc[:trials]")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_alloc_vector)

    p = sub.add_parser("verify-drop", help="check the drift of the cosh potential")
    p.add_argument("--process", choices=analysis.DRIFT_PROCESSES, required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--states", required=True, help="file.json or random:k,gapmin")
    p.add_argument("--mode", default="exact", help="exact | mc[:trials]")
    p.add_argument("--gap-threshold", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--assert", dest="check", action="store_true")
    p.set_defaults(func=cmd_verify_drop)

    p = sub.add_parser("fold", help="segment a full Memory trace into folded rounds")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--j", type=int, required=True)
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--alpha2", type=float, required=True)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--rounds", action="store_true", help="include the round list")
    p.add_argument("--assert", dest="check", action="store_true")
    p.set_defaults(func=cmd_fold)

    p = sub.add_parser("potentials", help="evaluate potentials on loads")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--loads", type=Path, help="JSON list of bin loads")
    src.add_argument("--trace", type=Path, help="JSONL trace with load snapshots")
    p.add_argument("--trial", type=int)
    p.add_argument("--alpha", type=float, help="smoothing of the cosh potential")
    p.add_argument("--layered", help="v=..,alpha2=..[,c=..] for the layered potentials")
    p.add_argument("--layers", default="0,1", help="comma-separated layer indices")
    p.add_argument("--out", type=Path, help="CSV output (default: JSON on stdout)")
    p.set_defaults(func=cmd_potentials)

    p = sub.add_parser("c1", help="check Condition C1 on an allocation vector")
    p.add_argument("--vector", required=True, help="file.json | twochoice:n | proxy:d:<dist>")
    p.add_argument("--n", type=int)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--assert", dest="check", action="store_true")
    p.set_defaults(func=cmd_c1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AssertionFailed as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
