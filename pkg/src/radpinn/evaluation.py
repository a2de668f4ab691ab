"""Comparison of trained networks against the closed-form solutions."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from multiprocessing import get_context
from pathlib import Path
from typing import Sequence

import numpy as np

from . import batched
from .loss import network_inputs
from .network import KInput, NetworkParams
from .physics import ProblemSpec, exact_solution

REPORT_FORMAT = "radpinn-eval-report/1"


@dataclass(frozen=True)
class EvalGrid:
    nx: int = 101
    ny: int = 101

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 points per direction")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.ny)

    @property
    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass
class EvalReport:
    k: float
    rmse: float
    max_abs_error: float
    max_error_at: tuple[float, float]
    cut_y: float
    cut_values: list[tuple[float, float, float]]
    extrapolation: bool = False
    in_training_set: bool = False
    metadata: dict = field(default_factory=dict)
    field: np.ndarray | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("field")
        d["format"] = REPORT_FORMAT
        d["max_error_at"] = list(self.max_error_at)
        d["cut_values"] = [list(row) for row in self.cut_values]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        if d.pop("format", REPORT_FORMAT) != REPORT_FORMAT:
            raise ValueError("unsupported report format")
        d["max_error_at"] = tuple(d["max_error_at"])
        d["cut_values"] = [tuple(row) for row in d["cut_values"]]
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))


def rmse(pred, exact) -> float:
    """Relative mean square error sum((pred - exact)^2) / sum(exact^2).

    Both sums are exactly rounded, so the value does not depend on point order.
    """
    pred = np.asarray(pred, dtype=float).ravel()
    exact = np.asarray(exact, dtype=float).ravel()
    if pred.shape != exact.shape or pred.size == 0:
        raise ValueError("fields must be nonempty and aligned")
    denom = math.fsum((exact * exact).tolist())
    if denom == 0.0:
        raise ValueError("exact field has zero norm")
    d = pred - exact
    return math.fsum((d * d).tolist()) / denom


def predict(params: NetworkParams, points, k: float, k_input: KInput | None = None) -> np.ndarray:
    """Network prediction at (x, y) points for diffusion coefficient k (float64)."""
    X, _ = network_inputs(points, [k], k_input)
    theta = batched.jnp.asarray(params.data.astype(np.float64))
    return np.asarray(batched.predict(theta, params.shape.layout, batched.jnp.asarray(X)))


def is_extrapolation(k: float, training_k: Sequence[float] | None) -> bool:
    if training_k is None or len(training_k) == 0:
        return False
    return bool(k < min(training_k) or k > max(training_k))


def evaluate(
    params: NetworkParams,
    spec: ProblemSpec,
    k: float,
    grid: EvalGrid = EvalGrid(),
    cut_y: float = 0.5,
    k_input: KInput | None = None,
    training_k: Sequence[float] | None = None,
    metadata: dict | None = None,
    prediction=None,
) -> EvalReport:
    """Full-field comparison at one k.

    ``prediction`` replaces the network with any callable ``f(x, y) -> u``
    (used to feed exact solutions back through the metrics).
    """
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")
    pts = grid.points
    cut = np.column_stack([grid.xs, np.full(grid.nx, float(cut_y))])
    if prediction is None:
        u = predict(params, pts, k, k_input)
        u_cut = predict(params, cut, k, k_input)
    else:
        u = np.asarray(prediction(pts[:, 0], pts[:, 1]), dtype=float)
        u_cut = np.asarray(prediction(cut[:, 0], cut[:, 1]), dtype=float)
    ex = exact_solution(spec, k, pts[:, 0], pts[:, 1])
    ex_cut = exact_solution(spec, k, cut[:, 0], cut[:, 1])
    err = np.abs(u - ex)
    i = int(np.argmax(err))
    field_arr = np.column_stack([pts, u, ex, err])
    return EvalReport(
        k=float(k),
        rmse=rmse(u, ex),
        max_abs_error=float(err[i]),
        max_error_at=(float(pts[i, 0]), float(pts[i, 1])),
        cut_y=float(cut_y),
        cut_values=[(float(x), float(p), float(e)) for x, p, e in zip(grid.xs, u_cut, ex_cut)],
        extrapolation=is_extrapolation(k, training_k),
        in_training_set=bool(training_k is not None and any(float(k) == float(t) for t in training_k)),
        metadata=dict(metadata or {}),
        field=field_arr,
    )


# -- sweeps ------------------------------------------------------------------


def train_and_evaluate(config, spec: ProblemSpec, k_list: Sequence[float], grid=EvalGrid(), cut_y=0.5, tag=None):
    """One training run evaluated at every k in ``k_list``; returns (record, reports)."""
    from .training import train
    from .sampling import build_samples

    samples = build_samples(config)
    record = train(config, spec, samples=samples)
    training_k = [config.k_fixed] if config.scenario == 1 else samples.k_values.tolist()
    meta = {"scenario": config.scenario, "seed": config.seed, "status": record.status}
    if tag is not None:
        meta["tag"] = tag
    reports = [
        evaluate(record.params, spec, k, grid, cut_y, config.k_encoding, training_k, meta) for k in k_list
    ]
    return record, reports


def _job(args):
    return train_and_evaluate(*args)


def sweep(
    scenario: int,
    spec: ProblemSpec,
    k_list: Sequence[float],
    config,
    grid: EvalGrid = EvalGrid(),
    cut_y: float = 0.5,
    workers: int = 1,
    return_records: bool = False,
):
    """RMSE versus k.

    Scenario 1 trains one network per k (``config.k_fixed`` replaced);
    scenario 2 trains once and evaluates the same network at every k.
    """
    if scenario != config.scenario:
        config = config.replace(scenario=scenario)
    if scenario == 1:
        jobs = [(config.replace(k_fixed=float(k)), spec, [float(k)], grid, cut_y) for k in k_list]
    else:
        jobs = [(config, spec, [float(k) for k in k_list], grid, cut_y)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("spawn")) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    reports = [r for _, rs in results for r in rs]
    if return_records:
        return reports, [rec for rec, _ in results]
    return reports


# -- file outputs ------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_field_csv(path, report: EvalReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "u_pred", "u_exact", "abs_error"])
        for row in report.field:
            w.writerow([_fmt(v) for v in row])


def write_cut_csv(path, report: EvalReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "u_pred", "u_exact"])
        for row in report.cut_values:
            w.writerow([_fmt(v) for v in row])


def write_sweep_csv(path, reports: Sequence[EvalReport], extra_columns: Sequence[str] = ()):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(extra_columns) + ["k", "rmse", "max_abs_error", "extrapolation_flag"])
        for r in reports:
            extra = [r.metadata.get(c, "") for c in extra_columns]
            w.writerow(extra + [_fmt(r.k), _fmt(r.rmse), _fmt(r.max_abs_error), int(r.extrapolation)])


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


PLOT_SCRIPT = '''"""Plots for this run directory; reads only the CSV files next to it."""

import csv
import glob
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sweep_plot():
    path = os.path.join(HERE, "sweep.csv")
    if not os.path.exists(path):
        return
    rows = read(path)
    ks = [float(r["k"]) for r in rows]
    errs = [float(r["rmse"]) for r in rows]
    fig, ax = plt.subplots()
    ax.loglog(ks, errs, "o-")
    for k, e, r in zip(ks, errs, rows):
        if r["extrapolation_flag"] == "1":
            ax.loglog([k], [e], "rx", markersize=10)
    ax.set_xlabel("k")
    ax.set_ylabel("relative mean square error")
    fig.savefig(os.path.join(HERE, "sweep.png"), dpi=150)


def cut_plot():
    paths = sorted(glob.glob(os.path.join(HERE, "**", "cut_*.csv"), recursive=True))
    if not paths:
        return
    fig, ax = plt.subplots()
    for i, path in enumerate(paths):
        rows = read(path)
        x = [float(r["x"]) for r in rows]
        color = "C%d" % (i % 10)
        label = os.path.relpath(path, HERE)[:-4]
        ax.plot(x, [float(r["u_exact"]) for r in rows], "-", color=color, label=label)
        ax.plot(x, [float(r["u_pred"]) for r in rows], ":", color=color)
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.legend(fontsize=6)
    fig.savefig(os.path.join(HERE, "cuts.png"), dpi=150)


if __name__ == "__main__":
    sweep_plot()
    cut_plot()
'''


def write_plot_script(path):
    Path(path).write_text(PLOT_SCRIPT)
