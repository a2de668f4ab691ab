"""Full-batch Adam training of the PINN."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import batched
from .loss import LossBreakdown, LossWeights, assemble
from .network import KInput, NetworkParams, NetworkShape, init
from .physics import ProblemSpec
from .sampling import KDistribution, SampleSet, build_samples, rng_stream

log = logging.getLogger(__name__)

DTYPES = ("float32", "float64")


class TrainingDiverged(ArithmeticError):
    def __init__(self, epoch: int, message: str):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    scenario: int = 1
    n_bd: int = 200
    n_bn: int = 200
    n_r: int = 1000
    weights: LossWeights = field(default_factory=LossWeights)
    k_fixed: float = 1.0
    k_range: tuple[float, float] = (1e-4, 1.0)
    n_k: int = 20
    k_distribution: str = "loguniform"
    k_input: str = "log"
    hidden_layers: int = 4
    hidden_width: int = 24
    epochs: int = 20000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay: float | None = None
    batch_size: int | None = None
    seed: int = 0
    dtype: str = "float32"

    def violations(self, prefix: str = "train") -> list[str]:
        """Every violated invariant, not just the first."""
        out = []

        def bad(msg):
            out.append(f"{prefix}.{msg}")

        if self.scenario not in (1, 2):
            bad(f"scenario in {{1, 2}} (got {self.scenario!r})")
        for name in ("n_bd", "n_bn"):
            if getattr(self, name) < 2:
                bad(f"{name} >= 2 (got {getattr(self, name)!r})")
        if self.n_r < 1:
            bad(f"n_r >= 1 (got {self.n_r!r})")
        out += self.weights.violations(f"{prefix}.weights")
        if self.scenario == 1 and not (self.k_fixed > 0 and math.isfinite(self.k_fixed)):
            bad(f"k_fixed > 0 (got {self.k_fixed!r})")
        if self.scenario == 2:
            if self.n_k < 1:
                bad(f"n_k >= 1 (got {self.n_k!r})")
            lo, hi = self.k_range
            if not (0 < lo < hi and math.isfinite(hi)):
                bad(f"k_range requires 0 < k_min < k_max (got {list(self.k_range)!r})")
        if self.k_distribution not in [d.value for d in KDistribution]:
            bad(f"k_distribution in {{uniform, loguniform}} (got {self.k_distribution!r})")
        if self.k_input not in ("log", "raw"):
            bad(f"k_input in {{log, raw}} (got {self.k_input!r})")
        if self.hidden_layers < 1:
            bad(f"hidden_layers >= 1 (got {self.hidden_layers!r})")
        if self.hidden_width < 1:
            bad(f"hidden_width >= 1 (got {self.hidden_width!r})")
        if self.epochs < 1:
            bad(f"epochs >= 1 (got {self.epochs!r})")
        if not (0 < self.learning_rate < 1):
            bad(f"learning_rate in (0, 1) (got {self.learning_rate!r})")
        for name in ("adam_beta1", "adam_beta2"):
            if not (0 < getattr(self, name) < 1):
                bad(f"{name} in (0, 1) (got {getattr(self, name)!r})")
        if not self.adam_eps > 0:
            bad(f"adam_eps > 0 (got {self.adam_eps!r})")
        if self.lr_decay is not None and not (0 < self.lr_decay <= 1):
            bad(f"lr_decay in (0, 1] (got {self.lr_decay!r})")
        if self.batch_size is not None and self.batch_size < 1:
            bad(f"batch_size >= 1 (got {self.batch_size!r})")
        if self.dtype not in DTYPES:
            bad(f"dtype in {{float32, float64}} (got {self.dtype!r})")
        return out

    @property
    def shape(self) -> NetworkShape:
        return NetworkShape(2 if self.scenario == 1 else 3, self.hidden_layers, self.hidden_width)

    @property
    def k_encoding(self) -> KInput | None:
        if self.scenario == 1:
            return None
        return KInput(self.k_input, *self.k_range)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k_range"] = list(self.k_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown train keys: {sorted(unknown)}")
        d = dict(d)
        if "weights" in d:
            d["weights"] = LossWeights(**{k: float(v) for k, v in d["weights"].items()})
        if "k_range" in d:
            d["k_range"] = tuple(float(v) for v in d["k_range"])
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        d = self.to_dict()
        d.update(changes)
        if isinstance(d.get("weights"), LossWeights):
            d["weights"] = d["weights"].to_dict()
        return TrainConfig.from_dict(d)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int, dtype=np.float64) -> "AdamState":
        return cls(np.zeros(n, dtype), np.zeros(n, dtype), 0)

    def as_dict(self) -> dict:
        return {"m": self.m, "v": self.v, "step": self.step}


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, t: int, config: TrainConfig, lr=None):
    """Bias-corrected Adam update; returns (new params, new state).

    Inputs are not modified.
    """
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    grad = np.asarray(grad)
    if grad.shape != params.shape or state.m.shape != params.shape:
        raise ValueError("parameter, gradient and moment lengths differ")
    if not np.all(np.isfinite(grad)):
        first = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise TrainingDiverged(t, f"non-finite gradient entry {first} at step {t}")
    lr = config.learning_rate if lr is None else lr
    b1, b2 = config.adam_beta1, config.adam_beta2
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    mhat = m / (1.0 - b1**t)
    vhat = v / (1.0 - b2**t)
    new = params - lr * mhat / (np.sqrt(vhat) + config.adam_eps)
    return new, AdamState(m, v, t)


@dataclass
class TrainRecord:
    config: dict
    history: list[LossBreakdown]
    params: NetworkParams
    optimizer: AdamState = field(compare=False, repr=False)
    status: str = "ok"
    failed_epoch: int | None = None
    epoch_ms: list[float] = field(default_factory=list, compare=False, repr=False)

    format: str = "radpinn-train-record/1"

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    def summary(self) -> dict:
        first = self.history[0] if self.history else None
        last = self.history[-1] if self.history else None
        return {
            "format": self.format,
            "status": self.status,
            "failed_epoch": self.failed_epoch,
            "epochs_run": self.epochs_run,
            "initial_total": first.total if first else None,
            "final_total": last.total if last else None,
        }


def train(
    config: TrainConfig,
    spec: ProblemSpec,
    *,
    params: NetworkParams | None = None,
    optimizer: AdamState | None = None,
    samples: SampleSet | None = None,
    start_epoch: int = 0,
    progress_every: int = 0,
) -> TrainRecord:
    """init -> sample -> epochs x (loss, gradient, Adam step).

    ``params``/``optimizer``/``start_epoch`` resume an earlier run; the
    loss logged for an epoch is the one the update was computed from.
    """
    bad = config.violations() + spec.violations()
    if bad:
        raise ValueError("invalid configuration: " + "; ".join(bad))
    dtype = np.dtype(config.dtype)
    shape = config.shape
    if params is None:
        params = init(shape, config.seed, dtype)
    params = NetworkParams(shape, params.data.astype(dtype), params.seed)
    if optimizer is None:
        optimizer = AdamState.zeros(shape.n_params, dtype)
    samples = build_samples(config) if samples is None else samples
    k_values = [config.k_fixed] if config.scenario == 1 else list(samples.k_values)
    asm = assemble(samples, k_values, config.k_encoding)

    jnp = batched.jnp
    layout = shape.layout
    coef = batched.as_coef(config.weights, spec, dtype)
    hyper = jnp.asarray(np.array([config.adam_beta1, config.adam_beta2, config.adam_eps]), dtype=dtype)
    n_pairs = asm.collocation.shape[0]
    minibatch = config.batch_size is not None and config.batch_size < n_pairs
    full_batch = asm.batch(dtype)
    mb_rng = rng_stream(config.seed, "minibatch") if minibatch else None

    theta = jnp.asarray(params.data)
    m, v = jnp.asarray(optimizer.m.astype(dtype)), jnp.asarray(optimizer.v.astype(dtype))
    step = optimizer.step
    history: list[LossBreakdown] = []
    epoch_ms: list[float] = []
    status, failed = "ok", None

    for epoch in range(start_epoch, start_epoch + config.epochs):
        t0 = time.perf_counter()
        lr = config.learning_rate * (config.lr_decay**epoch if config.lr_decay else 1.0)
        batch = full_batch
        if minibatch:
            rows = np.sort(mb_rng.choice(n_pairs, size=config.batch_size, replace=False))
            batch = asm.batch(dtype, rows)
        new, m_new, v_new, phis, ok = batched.adam_train_step(
            theta, layout, m, v, jnp.asarray(step + 1, dtype=dtype), jnp.asarray(lr, dtype=dtype), hyper, batch, coef
        )
        phis = np.asarray(phis)
        if not bool(ok):
            status, failed = "failed", epoch
            log.warning("non-finite loss or gradient at epoch %d; aborting", epoch)
            break
        theta, m, v = new, m_new, v_new
        step += 1
        history.append(LossBreakdown.combine(config.weights, *phis))
        epoch_ms.append((time.perf_counter() - t0) * 1e3)
        if progress_every and (epoch + 1) % progress_every == 0:
            log.info("epoch %d total %.6e", epoch + 1, history[-1].total)

    final = NetworkParams(shape, np.asarray(theta), config.seed)
    opt = AdamState(np.asarray(m), np.asarray(v), step)
    return TrainRecord(config.to_dict(), history, final, opt, status, failed, epoch_ms)
