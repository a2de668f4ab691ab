"""radpinn command line: train, eval, sweep, preset, replay, validate, config."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .evaluation import EvalGrid, evaluate, write_cut_csv, write_field_csv, write_plot_script, write_sweep_csv
from .network import load_checkpoint
from .runner import compare_runs, execute, k_label

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

OUTPUT_ENV = "RADPINN_OUTPUT"

log = logging.getLogger("radpinn")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _output_root(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV, "runs"))


def run_dir(root: Path, label: str, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = root / label / f"{stamp}-{seed}"
    path, n = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}.{n}")
        n += 1
    return path


def _load_experiment(args) -> tuple[ExperimentConfig, str]:
    if getattr(args, "preset", None):
        exp, label = cfgmod.preset(args.preset), args.preset
    elif getattr(args, "config", None):
        exp, label = cfgmod.load(args.config), None
    else:
        raise ConfigError(["give --preset NAME or --config FILE"])
    overrides = cfgmod.parse_overrides(getattr(args, "set", None))
    if overrides:
        exp = exp.with_overrides(overrides)
    return exp, label


def _run(exp: ExperimentConfig, label: str | None, args) -> int:
    exp.validate()
    out = run_dir(_output_root(args), label or exp.digest(), exp.train.seed)
    result = execute(exp, out, workers=getattr(args, "workers", 1))
    for r in result.reports:
        tag = " ".join(f"{k}={v}" for k, v in r.metadata.items() if k not in ("scenario", "seed", "status", "final_total"))
        flag = " (extrapolation)" if r.extrapolation else ""
        print(f"{tag + ' ' if tag else ''}k={r.k:g} rmse={r.rmse:.4e} max_abs_error={r.max_abs_error:.4e}{flag}")
    print(f"run directory: {out}")
    for f in result.failed:
        print(f"training aborted: {f}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_DIVERGED


def cmd_train(args) -> int:
    exp, label = _load_experiment(args)
    # a single training: drop any sweep plan
    exp = exp.with_overrides({"sweep.k": [], "sweep.vary": {}})
    return _run(exp, label, args)


def cmd_preset(args) -> int:
    exp, label = _load_experiment(args)
    return _run(exp, label, args)


def cmd_sweep(args) -> int:
    exp, label = _load_experiment(args)
    changes = {}
    if args.k:
        changes["sweep.k"] = args.k
        if exp.train.scenario == 1:
            changes["eval.k_eval"] = []
    vary = {}
    if args.c3:
        vary["train.weights.c3"] = args.c3
    for item in args.vary or ():
        path, _, values = item.partition("=")
        if not values:
            raise ConfigError([f"--vary expects path=v1,v2,... (got {item!r})"])
        vary[path] = [cfgmod._parse_value(v) for v in values.split(",")]
    if vary:
        changes["sweep.vary"] = vary
    if changes:
        exp = exp.with_overrides(changes)
    if exp.sweep.empty:
        raise ConfigError(["sweep needs --k, --c3 or --vary (or a sweep section in the config)"])
    return _run(exp, label, args)


def cmd_eval(args) -> int:
    src = Path(args.run_dir)
    exp = cfgmod.load(src / "config.json")
    if not (src / "checkpoint.json").exists():
        raise FileNotFoundError(f"{src / 'checkpoint.json'} not found; point eval at a single-training run directory")
    ck = load_checkpoint(src / "checkpoint.json")
    samples_k = None
    if exp.train.scenario == 2:
        from .sampling import build_samples

        samples_k = build_samples(exp.train).k_values.tolist()
    else:
        samples_k = [exp.train.k_fixed]
    k_list = args.k or exp.k_eval
    grid = EvalGrid(args.grid or exp.eval.grid, args.grid or exp.eval.grid)
    cut_y = exp.eval.cut_y if args.cut_y is None else args.cut_y
    out = Path(args.out) if args.out else src / "eval"
    out.mkdir(parents=True, exist_ok=True)
    meta = {"scenario": exp.train.scenario, "seed": exp.train.seed}
    reports = []
    for k in k_list:
        rep = evaluate(ck.params, exp.problem, k, grid, cut_y, ck.k_input, samples_k, meta)
        lab = k_label(k)
        (out / f"{lab}.json").write_text(rep.to_json())
        write_field_csv(out / f"field_{lab}.csv", rep)
        write_cut_csv(out / f"cut_{lab}.csv", rep)
        reports.append(rep)
        flag = " (extrapolation)" if rep.extrapolation else ""
        print(f"k={k:g} rmse={rep.rmse:.4e} max_abs_error={rep.max_abs_error:.4e}{flag}")
    write_sweep_csv(out / "sweep.csv", reports)
    write_plot_script(out / "plot.py")
    print(f"evaluation written to {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    src = Path(args.run_dir)
    exp = cfgmod.load(src / "config.json")
    if args.out:
        target = Path(args.out)
        if target.exists() and any(target.iterdir()):
            raise ConfigError([f"replay output {target} must be empty or absent"])
        result = execute(exp, target, workers=args.workers)
        diffs = compare_runs(src, target)
    else:
        with tempfile.TemporaryDirectory(prefix="radpinn-replay-") as tmp:
            result = execute(exp, Path(tmp) / "run", workers=args.workers)
            diffs = compare_runs(src, Path(tmp) / "run")
    for d in diffs:
        print(d)
    if diffs:
        print(f"replay mismatch: {len(diffs)} difference(s)")
        return EXIT_MISMATCH
    print("replay identical")
    return EXIT_OK if result.ok else EXIT_DIVERGED


def cmd_validate(args) -> int:
    exp = cfgmod.load(args.file)
    bad = exp.violations()
    for v in bad:
        print(f"invalid: {v}")
    if bad:
        return EXIT_CONFIG
    print(f"valid: {exp.name} (digest {exp.digest()})")
    return EXIT_OK


def cmd_config(args) -> int:
    exp = cfgmod.preset(args.name)
    overrides = cfgmod.parse_overrides(args.set)
    if overrides:
        exp = exp.with_overrides(overrides)
    text = exp.to_json()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radpinn", description="PINNs for reaction-advection-diffusion boundary layers")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    def source(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--preset", choices=sorted(cfgmod.PRESETS))
        g.add_argument("--config", help="experiment JSON file")
        sp.add_argument("--set", action="append", metavar="PATH=VALUE", help="dotted override, e.g. train.epochs=100")
        sp.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./runs)")
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("train", help="one training run plus evaluation")
    source(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sweep", help="independent trainings over k or a config field")
    source(sp)
    sp.add_argument("--k", type=_floats, help="comma-separated k values")
    sp.add_argument("--c3", type=_floats, help="comma-separated residual weights")
    sp.add_argument("--vary", action="append", metavar="PATH=V1,V2", help="sweep any dotted config field")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("preset", help="run a named study end to end")
    sp.add_argument("preset", choices=sorted(cfgmod.PRESETS))
    sp.add_argument("--set", action="append", metavar="PATH=VALUE")
    sp.add_argument("--out")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_preset, config=None)

    sp = sub.add_parser("eval", help="evaluate a saved checkpoint at new k values")
    sp.add_argument("run_dir")
    sp.add_argument("--k", type=_floats)
    sp.add_argument("--grid", type=int)
    sp.add_argument("--cut-y", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("replay", help="re-run from a run directory's config and compare outputs")
    sp.add_argument("run_dir")
    sp.add_argument("--out", help="keep the replayed run here instead of a temporary directory")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("validate", help="check a config file without running it")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("config", help="print a preset as an editable config file")
    sp.add_argument("name", choices=sorted(cfgmod.PRESETS))
    sp.add_argument("--set", action="append", metavar="PATH=VALUE")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
