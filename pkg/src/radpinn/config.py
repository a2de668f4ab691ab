"""Experiment configuration files, dotted overrides and the named presets."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .loss import LossWeights
from .physics import ADVECTION, REACTION, ProblemSpec
from .training import TrainConfig

CONFIG_FORMAT = "radpinn-experiment/1"


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class EvalPlan:
    grid: int = 101
    cut_y: float = 0.5
    k_eval: tuple[float, ...] = ()

    def violations(self) -> list[str]:
        out = []
        if self.grid < 2:
            out.append(f"eval.grid >= 2 (got {self.grid!r})")
        if not (0.0 <= self.cut_y <= 1.0):
            out.append(f"eval.cut_y in [0, 1] (got {self.cut_y!r})")
        if any(not (k > 0 and math.isfinite(k)) for k in self.k_eval):
            out.append(f"eval.k_eval entries > 0 (got {list(self.k_eval)!r})")
        return out

    def to_dict(self) -> dict:
        return {"grid": self.grid, "cut_y": self.cut_y, "k_eval": list(self.k_eval)}


@dataclass(frozen=True)
class SweepPlan:
    """k: one fixed-k training per value (scenario 1) or extra evaluation k's
    (scenario 2). vary: one training per value of a dotted config path."""

    k: tuple[float, ...] = ()
    vary: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.k and not self.vary

    def violations(self) -> list[str]:
        out = []
        if any(not (k > 0 and math.isfinite(k)) for k in self.k):
            out.append(f"sweep.k entries > 0 (got {list(self.k)!r})")
        if len(self.vary) > 1:
            out.append("sweep.vary supports a single parameter")
        for path, values in self.vary.items():
            if not path.startswith("train.") and not path.startswith("problem."):
                out.append(f"sweep.vary path must start with train. or problem. (got {path!r})")
            if not values:
                out.append(f"sweep.vary[{path!r}] needs at least one value")
        return out

    def to_dict(self) -> dict:
        return {"k": list(self.k), "vary": {p: list(v) for p, v in self.vary.items()}}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    problem: ProblemSpec = REACTION
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalPlan = field(default_factory=EvalPlan)
    sweep: SweepPlan = field(default_factory=SweepPlan)

    def to_dict(self) -> dict:
        return {
            "format": CONFIG_FORMAT,
            "name": self.name,
            "problem": self.problem.to_dict(),
            "train": self.train.to_dict(),
            "eval": self.eval.to_dict(),
            "sweep": self.sweep.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]

    def violations(self) -> list[str]:
        out = self.problem.violations() + self.train.violations() + self.eval.violations()
        out += self.sweep.violations()
        if self.problem.kind == "mixed":
            out.append("problem: exact solution needs sigma > 0, a = 0 or sigma = 0, a > 0")
        return out

    def validate(self) -> "ExperimentConfig":
        bad = self.violations()
        if bad:
            raise ConfigError(bad)
        return self

    @property
    def k_eval(self) -> list[float]:
        if self.eval.k_eval:
            return list(self.eval.k_eval)
        if self.train.scenario == 1:
            return [self.train.k_fixed]
        return sorted(set(self.sweep.k)) or [self.train.k_range[0], self.train.k_range[1]]

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        return from_dict(apply_overrides(self.to_dict(), overrides))


def from_dict(d: dict) -> "ExperimentConfig":
    """Build a config, collecting every structural problem before raising."""
    errors = []
    d = dict(d)
    fmt = d.pop("format", CONFIG_FORMAT)
    if fmt != CONFIG_FORMAT:
        errors.append(f"format must be {CONFIG_FORMAT!r} (got {fmt!r})")
    unknown = set(d) - {"name", "problem", "train", "eval", "sweep"}
    if unknown:
        errors.append(f"unknown sections {sorted(unknown)}")
    problem = train = ev = sw = None
    try:
        problem = ProblemSpec.from_dict(d.get("problem", {}))
    except (TypeError, ValueError) as exc:
        errors.append(f"problem: {exc}")
    try:
        train = TrainConfig.from_dict(d.get("train", {}))
    except (TypeError, ValueError, KeyError) as exc:
        errors.append(f"train: {exc}")
    try:
        e = dict(d.get("eval", {}))
        e["k_eval"] = tuple(float(k) for k in e.get("k_eval", ()))
        ev = EvalPlan(**e)
    except (TypeError, ValueError) as exc:
        errors.append(f"eval: {exc}")
    try:
        s = dict(d.get("sweep", {}))
        s["k"] = tuple(float(k) for k in s.get("k", ()))
        s["vary"] = {p: list(v) for p, v in s.get("vary", {}).items()}
        sw = SweepPlan(**s)
    except (TypeError, ValueError, AttributeError) as exc:
        errors.append(f"sweep: {exc}")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(str(d.get("name", "custom")), problem, train, ev, sw)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(d: dict, overrides: dict) -> dict:
    """Set dotted paths (``train.weights.c3``) in a nested config dict."""
    d = copy.deepcopy(d)
    for path, value in overrides.items():
        if isinstance(value, str):
            value = _parse_value(value)
        node = d
        keys = path.split(".")
        for key in keys[:-1]:
            if not isinstance(node.get(key), dict):
                raise ConfigError([f"override path {path!r} does not name a config field"])
            node = node[key]
        if keys[-1] not in node:
            raise ConfigError([f"override path {path!r} does not name a config field"])
        node[keys[-1]] = value
    return d


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError([f"override {item!r} is not of the form path=value"])
        path, value = item.split("=", 1)
        out[path.strip()] = value.strip()
    return out


def load(path) -> ExperimentConfig:
    """Read a config file. OSError is left to the caller; bad content raises ConfigError."""
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from exc
    if not isinstance(d, dict):
        raise ConfigError(["top level must be an object"])
    return from_dict(d)


# -- presets -------------------------------------------------------------------

REACTION_WEIGHTS = LossWeights(2.0, 1.0, 0.01)
ADVECTION_WEIGHTS = LossWeights(1.0, 1.2, 1.0)
REACTION_K_SWEEP = (1.0, 0.1, 0.01, 1e-3, 1e-4)
ADVECTION_K_SWEEP = (1.0, 0.1, 0.01, 1e-3)
REACTION_S2_EVAL = (1e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 1.2)
ADVECTION_S2_EVAL = (1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 1.2)

S1_EPOCHS = 5000
# scenario 2 sees 20x more residual rows; minibatches keep epochs cheap and
# the decayed step settles the parametric fit
S2_TRAIN = dict(epochs=15000, learning_rate=5e-3, lr_decay=0.9998, batch_size=2000, k_input="raw")


def _preset(name, problem, weights, scenario, k_range, k_sweep, k_eval, **train_kw):
    train = TrainConfig(
        scenario=scenario,
        n_bd=200,
        n_bn=200,
        n_r=1000,
        weights=weights,
        k_fixed=1.0,
        k_range=k_range,
        n_k=20,
        **train_kw,
    )
    sweep = SweepPlan(k=k_sweep) if scenario == 1 else SweepPlan()
    return ExperimentConfig(name, problem, train, EvalPlan(101, 0.5, k_eval), sweep)


PRESETS: dict[str, ExperimentConfig] = {
    "reaction-s1": _preset(
        "reaction-s1", REACTION, REACTION_WEIGHTS, 1, (1e-4, 1.0), REACTION_K_SWEEP, (), epochs=S1_EPOCHS
    ),
    "reaction-s2": _preset(
        "reaction-s2", REACTION, REACTION_WEIGHTS, 2, (1e-4, 1.0), (), REACTION_S2_EVAL, **S2_TRAIN
    ),
    "advection-s1": _preset(
        "advection-s1", ADVECTION, ADVECTION_WEIGHTS, 1, (1e-3, 1.0), ADVECTION_K_SWEEP, (), epochs=S1_EPOCHS
    ),
    "advection-s2": _preset(
        "advection-s2", ADVECTION, ADVECTION_WEIGHTS, 2, (1e-3, 1.0), (), ADVECTION_S2_EVAL, **S2_TRAIN
    ),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError([f"unknown preset {name!r}; choose from {sorted(PRESETS)}"]) from None
