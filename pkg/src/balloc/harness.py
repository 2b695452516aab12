"""Experiment configs, seeded multi-trial runs, sweeps, reports and file formats.

A run directory holds ``config.json``, ``trace.jsonl`` (one header line,
then one line per record in trial order) and ``summary.csv`` (one row per
trial). Everything except the header's timestamp is a pure function of the
config, whatever the thread count.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

from .processes import RNG_ALGORITHM, ProcessConfig, Trace, TraceRecord, run_process
from .sampling import parse_distribution, parse_weights

log = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"
MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
SWEEP_CELL_LIMIT = 10 ** 4
SUMMARY_FIELDS = ("process", "n", "m", "d", "beta", "dist", "weights", "trial", "seed",
                  "final_gap", "max_gap", "gaps")
REPORT_KINDS = ("gap-vs-n", "gap-vs-m", "bias-dichotomy")


def mix64(x: int) -> int:
    x &= MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK64
    x ^= x >> 31
    return x


def derive_trial_seed(master_seed: int, trial_index: int) -> int:
    return mix64((master_seed & MASK64) ^ (((trial_index + 1) * GOLDEN_GAMMA) & MASK64))


def thread_count() -> int:
    raw = os.environ.get("BALLOC_THREADS")
    if raw:
        try:
            k = int(raw)
        except ValueError:
            raise ValueError(f"BALLOC_THREADS must be an integer, got {raw!r}") from None
        if k < 1:
            raise ValueError("BALLOC_THREADS must be >= 1")
        return k
    return os.cpu_count() or 1


@dataclass
class ExperimentConfig:
    process: str
    n: int
    m: int
    dist: str = "uniform"
    weights: str = "unit"
    d: int = 2
    beta: float = 0.5
    trials: int = 1
    master_seed: int = 0
    cadence: str = "grid"
    full_trace: bool = False
    record_loads: bool = False
    output: str | None = None
    metadata: dict = field(default_factory=lambda: {"tool_version": TOOL_VERSION,
                                                     "rng": RNG_ALGORITHM})

    def validate(self, base: Path | None = None) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        self.process_config(0, base).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def key(self) -> str:
        """Content hash of everything that affects the results."""
        body = {k: v for k, v in self.to_dict().items() if k not in ("output", "metadata")}
        blob = json.dumps(body, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def process_config(self, trial: int, base: Path | None = None) -> ProcessConfig:
        return ProcessConfig(
            process=self.process, n=self.n, m=self.m,
            dist=parse_distribution(self.dist, self.n, base),
            seed=derive_trial_seed(self.master_seed, trial), d=self.d, beta=self.beta,
            weights=parse_weights(self.weights, base), cadence=self.cadence,
            full_trace=self.full_trace, record_loads=self.record_loads, trial=trial)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list
    rows: list
    directory: Path | None = None

    def gaps_at(self, step: int) -> list[float]:
        out = []
        for tr in self.traces:
            hit = [r.gap for r in tr.records if r.step == step]
            if not hit:
                raise KeyError(f"no snapshot at step {step}")
            out.append(hit[0])
        return out

    def median_gap_at(self, step: int) -> float:
        return statistics.median(self.gaps_at(step))


# ------------------------------------------------------------------ I/O

def header_line(cfg: ExperimentConfig) -> str:
    return json.dumps({"type": "header", "config": cfg.to_dict(),
                       "tool_version": TOOL_VERSION, "rng": RNG_ALGORITHM,
                       "created": datetime.now(timezone.utc).isoformat()}, sort_keys=True)


def record_line(rec: TraceRecord) -> str:
    return json.dumps({"type": "record", **rec.to_json()}, sort_keys=True)


def write_jsonl(path: Path, cfg: ExperimentConfig, traces) -> None:
    with open(path, "w") as fh:
        fh.write(header_line(cfg) + "\n")
        for tr in traces:
            for rec in tr.records:
                fh.write(record_line(rec) + "\n")


def read_jsonl(path: Path) -> tuple[dict, list[TraceRecord]]:
    """Return (header, records). Raises ValueError on schema problems."""
    header = None
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("type", None)
            if kind == "header":
                if header is not None or records:
                    raise ValueError(f"{path}:{lineno}: header must be the first line")
                header = obj
            elif kind == "record":
                records.append(TraceRecord.from_json(obj))
            else:
                raise ValueError(f"{path}:{lineno}: unknown line type {kind!r}")
    if header is None:
        raise ValueError(f"{path}: missing header line")
    return header, records


def jsonl_body(path: Path) -> bytes:
    """Everything after the header line."""
    data = Path(path).read_bytes()
    return data[data.index(b"\n") + 1:]


def summary_row(cfg: ExperimentConfig, trace: Trace) -> dict:
    recs = trace.records
    return {
        "process": cfg.process, "n": cfg.n, "m": cfg.m, "d": cfg.d, "beta": cfg.beta,
        "dist": cfg.dist, "weights": cfg.weights, "trial": trace.config.trial,
        "seed": trace.config.seed,
        "final_gap": recs[-1].gap if recs else 0.0,
        "max_gap": max((r.gap for r in recs), default=0.0),
        "gaps": ";".join(f"{r.step}={r.gap!r}" for r in recs),
    }


def write_summary(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def read_summary(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("n", "m", "d", "trial", "seed"):
            r[k] = int(r[k])
        for k in ("beta", "final_gap", "max_gap"):
            r[k] = float(r[k])
    return rows


def parse_gaps(cell: str) -> list[tuple[int, float]]:
    out = []
    for part in filter(None, cell.split(";")):
        s, _, g = part.partition("=")
        out.append((int(s), float(g)))
    return out


# ------------------------------------------------------------------ runs

def run_trials(cfg: ExperimentConfig, base: Path | None = None,
               threads: int | None = None) -> list[Trace]:
    """Run every trial; traces come back in trial order."""
    cfg.validate(base)
    pcfgs = [cfg.process_config(k, base) for k in range(cfg.trials)]
    threads = threads or thread_count()
    if threads == 1 or cfg.trials == 1:
        return [run_process(p) for p in pcfgs]
    with ThreadPoolExecutor(max_workers=min(threads, cfg.trials)) as pool:
        return list(pool.map(run_process, pcfgs))


def run_experiment(cfg: ExperimentConfig, out_dir: Path | None = None,
                   base: Path | None = None, threads: int | None = None) -> ExperimentResult:
    """Run all trials and, if a directory is given (or cfg.output is set), persist them."""
    traces = run_trials(cfg, base, threads)
    rows = [summary_row(cfg, tr) for tr in traces]
    out_dir = out_dir or (Path(cfg.output) if cfg.output else None)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg.save(out_dir / "config.json")
        write_jsonl(out_dir / "trace.jsonl", cfg, traces)
        write_summary(out_dir / "summary.csv", rows)
        log.info("wrote %d trials to %s", len(traces), out_dir)
    return ExperimentResult(cfg, traces, rows, out_dir)


# ---------------------------------------------------------------- sweeps

SWEEP_AXES = ("process", "n", "m_mult", "a", "b", "d", "beta", "dist", "weights")


def expand_grid(grid: dict) -> list[ExperimentConfig]:
    """Cartesian product of ``grid["axes"]`` over ``grid["base"]``.

    ``m_mult`` sets m = m_mult * n. ``a``/``b`` build a step distribution
    (snapped to an integral M when ``grid["snap"]`` is true).
    """
    base = dict(grid.get("base", {}))
    axes = grid.get("axes", {})
    unknown = set(axes) - set(SWEEP_AXES)
    if unknown:
        raise ValueError(f"unknown sweep axes: {sorted(unknown)}")
    if ("a" in axes) != ("b" in axes):
        raise ValueError("axes a and b must be given together")
    names = list(axes)
    values = [axes[k] if isinstance(axes[k], list) else [axes[k]] for k in names]
    cells = math.prod(len(v) for v in values)
    if cells > SWEEP_CELL_LIMIT and not grid.get("force"):
        raise ValueError(f"grid has {cells} cells (> {SWEEP_CELL_LIMIT}); pass --force")
    out = []
    for combo in itertools.product(*values):
        cell = dict(base)
        cell.update(zip(names, combo))
        mult = cell.pop("m_mult", None)
        a, b = cell.pop("a", None), cell.pop("b", None)
        if mult is not None:
            cell["m"] = int(round(mult * cell["n"]))
        if a is not None:
            cell["dist"] = f"step:a={a},b={b}" + (",snap=1" if grid.get("snap") else "")
        out.append(ExperimentConfig.from_dict(cell))
    return out


def sweep(grid: dict, out_root: Path, base: Path | None = None, force: bool = False,
          threads: int | None = None) -> list[dict]:
    """Run every cell into ``out_root/<config hash>/`` and merge the summaries.

    Cells whose directory already holds a matching config and summary are
    reused rather than rerun.
    """
    grid = dict(grid, force=force or grid.get("force", False))
    cfgs = expand_grid(grid)
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    merged = []
    for cfg in cfgs:
        cell_dir = out_root / cfg.key()
        summary = cell_dir / "summary.csv"
        cfg_file = cell_dir / "config.json"
        if summary.exists() and cfg_file.exists() and ExperimentConfig.load(cfg_file).key() == cfg.key():
            log.info("reusing %s", cell_dir)
            with open(summary, newline="") as fh:
                merged.extend(csv.DictReader(fh))
            continue
        res = run_experiment(cfg, cell_dir, base, threads)
        merged.extend({k: str(v) for k, v in r.items()} for r in res.rows)
    write_summary(out_root / "summary.csv", merged)
    return merged


# --------------------------------------------------------------- reports

def _quantiles(xs: list[float]) -> tuple[float, float]:
    if len(xs) == 1:
        return xs[0], xs[0]
    q = statistics.quantiles(xs, n=10, method="inclusive")
    return q[0], q[-1]


def _group(rows, keys):
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    return groups


def report(rows: list[dict], kind: str) -> list[dict]:
    """Plot-ready aggregates of a summary table."""
    if kind not in REPORT_KINDS:
        raise ValueError(f"unknown report kind {kind!r}; choose from {REPORT_KINDS}")
    if not rows:
        raise ValueError("empty summary")
    keys = ("process", "dist", "weights", "d", "beta")
    out = []
    if kind == "gap-vs-n":
        for key, grp in sorted(_group(rows, keys + ("n", "m")).items()):
            finals = sorted(float(r["final_gap"]) for r in grp)
            n = int(key[-2])
            lo, hi = _quantiles(finals)
            ln = math.log(n) if n > 1 else 0.0
            lnln = math.log(ln) if ln > 1 else float("nan")
            out.append({**dict(zip(keys + ("n", "m"), key)), "trials": len(grp),
                        "median": statistics.median(finals), "q10": lo, "q90": hi,
                        "ln_n": ln, "lnln_n": lnln,
                        "ln_n_over_lnln_n": ln / lnln if lnln and lnln > 0 else float("nan")})
        return out
    if kind == "bias-dichotomy":
        rows = [r for r in rows if not str(r["dist"]).startswith("uniform")]
        if not rows:
            raise ValueError("bias-dichotomy needs rows with a non-uniform distribution")
    for key, grp in sorted(_group(rows, keys + ("n",)).items()):
        per_step: dict[int, list[float]] = {}
        for r in grp:
            for s, g in parse_gaps(r["gaps"]):
                per_step.setdefault(s, []).append(g)
        n = int(key[-1])
        for s in sorted(per_step):
            gs = per_step[s]
            out.append({**dict(zip(keys + ("n",), key)), "step": s, "m_over_n": s / n,
                        "trials": len(gs), "median": statistics.median(gs)})
    return out


def write_report(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
