"""Executes an experiment into a self-describing run directory."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

from .config import ExperimentConfig, SweepPlan, from_dict
from .evaluation import (
    EvalGrid,
    EvalReport,
    evaluate,
    write_cut_csv,
    write_field_csv,
    write_plot_script,
    write_sweep_csv,
)
from .network import save_checkpoint
from .sampling import build_samples
from .training import train

log = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "phi_bd", "phi_bn", "phi_r", "total", "elapsed_ms"]
TIMING_COLUMNS = {"elapsed_ms"}


def k_label(k: float) -> str:
    return f"k={float(k):g}"


@dataclass
class RunResult:
    path: Path
    status: str
    reports: list[EvalReport] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed


def _write_train_log(path, record):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for i, (row, ms) in enumerate(zip(record.history, record.epoch_ms)):
            w.writerow([i + 1] + [repr(v) for v in row.as_row()] + [f"{ms:.3f}"])


def _single(exp: ExperimentConfig, out: Path, extra: dict) -> RunResult:
    """Train once, evaluate at every requested k, write all artifacts."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(exp.to_json())
    cfg = exp.train
    samples = build_samples(cfg)
    samples.to_csv(out / "samples.csv")
    log.info("training %s (%d epochs) into %s", exp.name, cfg.epochs, out)
    record = train(cfg, exp.problem, samples=samples)
    _write_train_log(out / "train_log.csv", record)
    save_checkpoint(out / "checkpoint.json", record.params, cfg.k_encoding, record.optimizer.as_dict())
    summary = record.summary()
    summary["config_digest"] = exp.digest()
    (out / "record.json").write_text(_dumps(summary))

    training_k = [cfg.k_fixed] if cfg.scenario == 1 else samples.k_values.tolist()
    k_list = exp.k_eval
    if cfg.scenario == 2:
        k_list = sorted(set(k_list) | set(exp.sweep.k))
    meta = dict(extra, scenario=cfg.scenario, seed=cfg.seed, status=record.status, final_total=summary["final_total"])
    grid = EvalGrid(exp.eval.grid, exp.eval.grid)
    reports = []
    if record.status == "ok":
        rdir = out / "reports"
        rdir.mkdir(exist_ok=True)
        for k in k_list:
            rep = evaluate(record.params, exp.problem, k, grid, exp.eval.cut_y, cfg.k_encoding, training_k, meta)
            lab = k_label(k)
            (rdir / f"{lab}.json").write_text(rep.to_json())
            write_field_csv(rdir / f"field_{lab}.csv", rep)
            write_cut_csv(rdir / f"cut_{lab}.csv", rep)
            reports.append(rep)
        write_sweep_csv(out / "sweep.csv", reports)
        write_plot_script(out / "plot.py")
    failed = [] if record.status == "ok" else [f"{out}: non-finite loss at epoch {record.failed_epoch}"]
    return RunResult(out, record.status, reports, failed)


def _dumps(d) -> str:
    return json.dumps(d, indent=1, sort_keys=True) + "\n"


def _job(args):
    exp_dict, out, extra = args
    return _single(from_dict(exp_dict), Path(out), extra)


def plan(exp: ExperimentConfig, out: Path, extra: dict | None = None, echoes: list | None = None):
    """Expand sweeps into independent single-training jobs.

    Directories that group several jobs are appended to ``echoes`` with
    their own config so every level of a run stays self-describing.
    """
    extra = dict(extra or {})
    echoes = [] if echoes is None else echoes
    sw = exp.sweep
    if sw.vary:
        (path, values), = sw.vary.items()
        leaf = path.rsplit(".", 1)[-1]
        jobs = []
        for v in values:
            child = exp.with_overrides({path: v})
            child = ExperimentConfig(child.name, child.problem, child.train, child.eval, SweepPlan(k=sw.k))
            jobs += plan(child, out / f"{leaf}={v}", dict(extra, **{leaf: v}), echoes)
        return jobs
    if exp.train.scenario == 1 and sw.k:
        jobs = []
        for k in sw.k:
            child = exp.with_overrides({"train.k_fixed": float(k), "sweep.k": [], "eval.k_eval": [float(k)]})
            jobs += plan(child, out / k_label(k), extra, echoes)
        echoes.append((exp, out))
        return jobs
    return [(exp, out, extra)]


def execute(exp: ExperimentConfig, out, workers: int = 1) -> RunResult:
    exp.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(exp.to_json())
    echoes = []
    jobs = plan(exp, out, echoes=echoes)
    for e, path in echoes:
        path.mkdir(parents=True, exist_ok=True)
        (path / "config.json").write_text(e.to_json())
    if len(jobs) == 1 and jobs[0][1] == out:
        return _single(*jobs[0])
    args = [(e.to_dict(), str(p), x) for e, p, x in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(args)), mp_context=get_context("spawn")) as pool:
            results = list(pool.map(_job, args))
    else:
        results = [_job(a) for a in args]
    reports = [r for res in results for r in res.reports]
    failed = [f for res in results for f in res.failed]
    extra_cols = list(jobs[0][2])
    name = "comparison.csv" if exp.sweep.vary else "sweep.csv"
    _write_aggregate(out / name, reports, extra_cols)
    write_plot_script(out / "plot.py")
    return RunResult(out, "ok" if not failed else "failed", reports, failed)


def _write_aggregate(path, reports, extra_cols):
    if not extra_cols:
        write_sweep_csv(path, reports)
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(extra_cols + ["k", "rmse", "max_abs_error", "extrapolation_flag", "final_total", "status"])
        for r in reports:
            w.writerow(
                [r.metadata.get(c, "") for c in extra_cols]
                + [repr(r.k), repr(r.rmse), repr(r.max_abs_error), int(r.extrapolation)]
                + [repr(r.metadata.get("final_total")), r.metadata.get("status", "")]
            )


# -- replay --------------------------------------------------------------------


def _strip_timing(text: str) -> str:
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        return text
    keep = [i for i, name in enumerate(rows[0]) if name not in TIMING_COLUMNS]
    return "\n".join(",".join(r[i] for i in keep) for r in rows)


def _files(root: Path) -> set[str]:
    out = set()
    for dirpath, dirnames, filenames in os.walk(root):
        rel = Path(dirpath).relative_to(root)
        # eval output added later by the eval subcommand is not part of a run
        if rel == Path("."):
            dirnames[:] = [d for d in dirnames if not d.startswith("eval")]
        dirnames.sort()
        for f in filenames:
            if f.endswith(".png"):
                continue
            out.add(str(rel / f))
    return out


def compare_runs(original: Path, replayed: Path) -> list[str]:
    """Differences between two run directories; timing columns are ignored."""
    a, b = _files(Path(original)), _files(Path(replayed))
    diffs = [f"missing in replay: {p}" for p in sorted(a - b)]
    diffs += [f"not in original: {p}" for p in sorted(b - a)]
    for p in sorted(a & b):
        x, y = (Path(original) / p).read_bytes(), (Path(replayed) / p).read_bytes()
        if x == y:
            continue
        if Path(p).name == "train_log.csv" and _strip_timing(x.decode()) == _strip_timing(y.decode()):
            continue
        diffs.append(f"differs: {p}")
    return diffs
