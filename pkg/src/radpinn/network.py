"""Fully connected tanh network with a linear scalar output.

Parameters live in one flat array. Layer ``l`` occupies
``W (rows x cols, row-major)`` followed by ``b (rows)`` starting at its offset.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .autodiff import Dual2, Tape, Var, seed_input
from .sampling import rng_stream

CHECKPOINT_FORMAT = "radpinn-checkpoint/1"


@dataclass(frozen=True)
class NetworkShape:
    input_dim: int = 2
    hidden_layers: int = 4
    hidden_width: int = 24
    output_dim: int = 1

    def __post_init__(self):
        if self.input_dim not in (2, 3):
            raise ValueError(f"input_dim must be 2 or 3, got {self.input_dim}")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("need at least one hidden layer of width >= 1")
        if self.output_dim != 1:
            raise ValueError("only scalar output is supported")

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]

    @property
    def layout(self) -> tuple[tuple[int, int, int], ...]:
        """(rows, cols, offset) for each layer."""
        out, off = [], 0
        for cols, rows in zip(self.sizes[:-1], self.sizes[1:]):
            out.append((rows, cols, off))
            off += rows * cols + rows
        return tuple(out)

    @property
    def n_params(self) -> int:
        return sum(r * c + r for r, c, _ in self.layout)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_layers": self.hidden_layers,
            "hidden_width": self.hidden_width,
            "output_dim": self.output_dim,
        }


@dataclass
class NetworkParams:
    shape: NetworkShape
    data: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.shape != (self.shape.n_params,):
            raise ValueError(f"expected {self.shape.n_params} parameters, got {self.data.shape}")

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
        )

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.shape, self.data.copy(), self.seed)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        for r, c, off in self.shape.layout:
            out.append((self.data[off : off + r * c].reshape(r, c), self.data[off + r * c : off + r * c + r]))
        return out


def init(shape: NetworkShape, seed: int, dtype=np.float64) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    rng = rng_stream(seed, "init")
    data = np.zeros(shape.n_params)
    for r, c, off in shape.layout:
        bound = math.sqrt(6.0 / (c + r))
        data[off : off + r * c] = rng.uniform(-bound, bound, size=r * c)
    return NetworkParams(shape, data.astype(dtype), seed)


@dataclass(frozen=True)
class KInput:
    """How the diffusion coefficient is fed to a 3-input network.

    ``log``: log10(k) mapped affinely from [log10 k_min, log10 k_max] to [-1, 1].
    ``raw``: k itself.
    """

    mode: str = "log"
    k_min: float = 1e-4
    k_max: float = 1.0

    def __post_init__(self):
        if self.mode not in ("log", "raw"):
            raise ValueError(f"unknown k input mode {self.mode!r}")

    def encode(self, k):
        k = np.asarray(k, dtype=float)
        if self.mode == "raw":
            out = k
        else:
            lo, hi = math.log10(self.k_min), math.log10(self.k_max)
            out = 2.0 * (np.log10(k) - lo) / (hi - lo) - 1.0
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "k_min": self.k_min, "k_max": self.k_max}


def _check_point(params: NetworkParams, point) -> list[float]:
    point = [float(v) for v in point]
    if len(point) != params.shape.input_dim:
        raise ValueError(f"point has {len(point)} coordinates, network expects {params.shape.input_dim}")
    if not all(math.isfinite(v) for v in point):
        raise ValueError(f"non-finite network input {point}")
    return point


def forward(params: NetworkParams, point: Sequence[float]) -> float:
    """Plain scalar forward pass.

    Sums in the same order as the tape path, so the result is bit-identical
    to the value channel of :func:`forward_with_derivatives`.
    """
    a = _check_point(params, point)
    layers = params.layers()
    for li, (W, b) in enumerate(layers):
        z = []
        for row, bias in zip(W.tolist(), b.tolist()):
            total = 0.0
            for w, x in zip(row, a):
                if x != 0.0:
                    total += w * x
            z.append(total + bias)
        a = z if li == len(layers) - 1 else [math.tanh(v) for v in z]
    return a[0]


class Derivatives(NamedTuple):
    u: Var
    u_x: Var
    u_y: Var
    u_xx: Var
    u_yy: Var

    def values(self) -> tuple[float, ...]:
        return tuple(v.value if isinstance(v, Var) else float(v) for v in self)


def _tape_layers(params: NetworkParams, pvars: Sequence[Var]):
    out = []
    for r, c, off in params.shape.layout:
        W = [pvars[off + i * c : off + (i + 1) * c] for i in range(r)]
        b = pvars[off + r * c : off + r * c + r]
        out.append((W, b))
    return out


def _dual_pass(tape: Tape, layers, point, seeded: int | None) -> Dual2:
    a = [seed_input(tape, i, seeded, v) for i, v in enumerate(point)]
    for li, (W, b) in enumerate(layers):
        z = []
        for row, bias in zip(W, b):
            z.append(
                Dual2(
                    tape.dot(row, [h.value for h in a], bias),
                    tape.dot(row, [h.d1 for h in a]),
                    tape.dot(row, [h.d2 for h in a]),
                )
            )
        a = z if li == len(layers) - 1 else [h.tanh() for h in z]
    return a[0]


def forward_dual(
    params: NetworkParams,
    point: Sequence[float],
    tape: Tape,
    pvars: Sequence[Var],
    seeded: int | None,
) -> Dual2:
    """One dual pass seeded in input slot ``seeded`` (None: value only)."""
    point = _check_point(params, point)
    return _dual_pass(tape, _tape_layers(params, pvars), point, seeded)


def forward_with_derivatives(
    params: NetworkParams,
    point: Sequence[float],
    tape: Tape | None = None,
    pvars: Sequence[Var] | None = None,
) -> Derivatives:
    """(u, u_x, u_y, u_xx, u_yy) at ``point``, recorded on ``tape``.

    ``pvars`` are the tape parameters for ``params``; they are registered on
    first use and can be passed back in to share them across points.
    """
    point = _check_point(params, point)
    if tape is None:
        tape = Tape()
    if pvars is None:
        pvars = tape.parameters(params.data.astype(float).tolist())
    layers = _tape_layers(params, pvars)
    ux = _dual_pass(tape, layers, point, seeded=0)
    uy = _dual_pass(tape, layers, point, seeded=1)
    return Derivatives(ux.value, ux.d1, uy.d1, ux.d2, uy.d2)


# -- checkpoints -------------------------------------------------------------


def checkpoint_dict(params: NetworkParams, k_input: KInput | None = None, optimizer: dict | None = None) -> dict:
    d = {
        "format": CHECKPOINT_FORMAT,
        "shape": params.shape.to_dict(),
        "seed": params.seed,
        "dtype": str(params.data.dtype),
        "params": [float(v) for v in params.data],
    }
    if k_input is not None:
        d["k_input"] = k_input.to_dict()
    if optimizer is not None:
        d["optimizer"] = {
            "step": int(optimizer["step"]),
            "m": [float(v) for v in optimizer["m"]],
            "v": [float(v) for v in optimizer["v"]],
        }
    return d


def save_checkpoint(path, params: NetworkParams, k_input: KInput | None = None, optimizer: dict | None = None):
    Path(path).write_text(json.dumps(checkpoint_dict(params, k_input, optimizer), indent=1) + "\n")


@dataclass
class Checkpoint:
    params: NetworkParams
    k_input: KInput | None = None
    optimizer: dict | None = field(default=None)


def load_checkpoint(path) -> Checkpoint:
    d = json.loads(Path(path).read_text())
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {d.get('format')!r}")
    dtype = np.dtype(d["dtype"])
    params = NetworkParams(NetworkShape(**d["shape"]), np.array(d["params"], dtype=dtype), d.get("seed"))
    k_input = KInput(**d["k_input"]) if "k_input" in d else None
    opt = None
    if "optimizer" in d:
        o = d["optimizer"]
        opt = {"step": o["step"], "m": np.array(o["m"], dtype=dtype), "v": np.array(o["v"], dtype=dtype)}
    return Checkpoint(params, k_input, opt)
