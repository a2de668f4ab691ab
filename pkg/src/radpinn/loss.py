"""Weighted composite loss c1*phi_bd + c2*phi_bn + c3*phi_r.

Every term is a mean of squares: u on Dirichlet points, du/dn on Neumann
points, and the PDE residual on (collocation point, k) pairs. In the
parametric setting each spatial point is paired with every training k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import batched
from .autodiff import Tape, Var
from .network import KInput, NetworkParams, forward_dual
from .physics import ProblemSpec, residual


@dataclass(frozen=True)
class LossWeights:
    c1: float = 2.0
    c2: float = 1.0
    c3: float = 0.01

    def violations(self, prefix: str = "weights") -> list[str]:
        out = []
        for name in ("c1", "c2", "c3"):
            v = getattr(self, name)
            if not math.isfinite(v):
                out.append(f"{prefix}.{name} must be finite (got {v!r})")
            elif v < 0:
                out.append(f"{prefix}.{name} >= 0 (got {v!r})")
        if all(getattr(self, n) == 0 for n in ("c1", "c2", "c3")):
            out.append(f"{prefix}: not all of c1, c2, c3 may be zero")
        return out

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(self.c1 * factor, self.c2 * factor, self.c3 * factor)

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3}


@dataclass(frozen=True)
class LossBreakdown:
    phi_bd: float
    phi_bn: float
    phi_r: float
    total: float

    @classmethod
    def combine(cls, weights: LossWeights, phi_bd: float, phi_bn: float, phi_r: float) -> "LossBreakdown":
        phi_bd, phi_bn, phi_r = float(phi_bd), float(phi_bn), float(phi_r)
        return cls(phi_bd, phi_bn, phi_r, weights.c1 * phi_bd + weights.c2 * phi_bn + weights.c3 * phi_r)

    def as_row(self) -> list[float]:
        return [self.phi_bd, self.phi_bn, self.phi_r, self.total]


# -- input assembly ----------------------------------------------------------


def network_inputs(points, k_values: Sequence[float], k_input: KInput | None = None):
    """Network input rows and the k attached to each row.

    Without ``k_input`` (fixed-k setting) exactly one k is allowed and the
    inputs are (x, y). Otherwise every point is repeated for every k, k-major,
    with the encoded k as third coordinate.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ks = np.asarray(k_values, dtype=float).reshape(-1)
    if pts.shape[0] == 0:
        raise ValueError("empty point list")
    if ks.size == 0:
        raise ValueError("no k value given")
    if np.any(ks <= 0):
        raise ValueError(f"k values must be positive, got {ks}")
    if k_input is None:
        if ks.size != 1:
            raise ValueError("a 2-input network takes exactly one k")
        return pts, np.full(pts.shape[0], ks[0])
    X = np.concatenate([np.column_stack([pts, np.full(pts.shape[0], k_input.encode(k))]) for k in ks])
    return X, np.repeat(ks, pts.shape[0])


@dataclass
class Assembled:
    """Flattened training arrays for the batched kernel."""

    dirichlet: np.ndarray
    neumann: np.ndarray
    neumann_ny: np.ndarray
    collocation: np.ndarray
    collocation_k: np.ndarray

    def batch(self, dtype, residual_rows: np.ndarray | None = None):
        Xr, kr = self.collocation, self.collocation_k
        if residual_rows is not None:
            Xr, kr = Xr[residual_rows], kr[residual_rows]
        return batched.as_batch(self.dirichlet, self.neumann, self.neumann_ny, Xr, kr, dtype)


def assemble(samples, k_values: Sequence[float], k_input: KInput | None = None) -> Assembled:
    Xd, _ = network_inputs(samples.dirichlet, k_values, k_input)
    Xn, _ = network_inputs(samples.neumann, k_values, k_input)
    ny = np.tile(samples.neumann_normals[:, 1], len(np.atleast_1d(k_values)))
    Xr, kr = network_inputs(samples.collocation, k_values, k_input)
    return Assembled(Xd, Xn, ny, Xr, kr)


def _msq(x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    return math.fsum((x * x).tolist()) / x.size


def _theta(params: NetworkParams):
    return batched.jnp.asarray(params.data.astype(np.float64))


# -- loss terms (float64 batched evaluation) ---------------------------------


def loss_dirichlet(params: NetworkParams, points, k_values=(1.0,), k_input: KInput | None = None) -> float:
    X, _ = network_inputs(points, k_values, k_input)
    u = batched.predict(_theta(params), params.shape.layout, batched.jnp.asarray(X))
    return _msq(u)


def loss_neumann(params: NetworkParams, points, k_values=(1.0,), k_input: KInput | None = None) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    X, _ = network_inputs(pts, k_values, k_input)
    d = batched.derivatives(_theta(params), params.shape.layout, batched.jnp.asarray(X))
    ny = np.tile(np.where(pts[:, 1] == 0.0, -1.0, 1.0), len(np.atleast_1d(k_values)))
    return _msq(np.asarray(d[2]) * ny)


def loss_residual(
    params: NetworkParams, spec: ProblemSpec, points, k_values, k_input: KInput | None = None
) -> float:
    X, kr = network_inputs(points, k_values, k_input)
    d = np.asarray(batched.derivatives(_theta(params), params.shape.layout, batched.jnp.asarray(X)))
    return _msq(residual(spec, kr, tuple(d)))


def total_loss(
    params: NetworkParams,
    samples,
    spec: ProblemSpec,
    weights: LossWeights,
    k_values: Sequence[float],
    k_input: KInput | None = None,
) -> tuple[LossBreakdown, np.ndarray]:
    """Loss breakdown and its gradient, computed in the parameters' precision."""
    dtype = params.data.dtype
    asm = assemble(samples, k_values, k_input)
    theta = batched.jnp.asarray(params.data)
    phis, grad = batched.loss_terms_and_grad(
        theta, params.shape.layout, asm.batch(dtype), batched.as_coef(weights, spec, dtype)
    )
    return LossBreakdown.combine(weights, *np.asarray(phis)), np.asarray(grad)


# -- scalar tape path ---------------------------------------------------------


@dataclass
class TapeLoss:
    breakdown: LossBreakdown
    total: Var
    tape: Tape
    params: list[Var]


def total_loss_tape(
    params: NetworkParams,
    samples,
    spec: ProblemSpec,
    weights: LossWeights,
    k_values: Sequence[float],
    k_input: KInput | None = None,
    tape: Tape | None = None,
) -> TapeLoss:
    """Same loss recorded on a scalar tape; ``reverse(result.total)`` gives the gradient."""
    tape = Tape() if tape is None else tape
    pvars = tape.parameters(params.data.astype(float).tolist())
    Xd, _ = network_inputs(samples.dirichlet, k_values, k_input)
    Xn, _ = network_inputs(samples.neumann, k_values, k_input)
    ny = np.tile(samples.neumann_normals[:, 1], len(np.atleast_1d(k_values)))
    Xr, kr = network_inputs(samples.collocation, k_values, k_input)

    u_bd = [forward_dual(params, p, tape, pvars, seeded=None).value for p in Xd]
    u_bn = [forward_dual(params, p, tape, pvars, seeded=1).d1 * n for p, n in zip(Xn, ny)]
    res = []
    for p, k in zip(Xr, kr):
        dx = forward_dual(params, p, tape, pvars, seeded=0)
        dy = forward_dual(params, p, tape, pvars, seeded=1)
        res.append(residual(spec, float(k), (dx.value, dx.d1, dy.d1, dx.d2, dy.d2)))

    phi_bd, phi_bn, phi_r = (tape.mean_of_squares([_as_var(tape, v) for v in vs]) for vs in (u_bd, u_bn, res))
    total = weights.c1 * phi_bd + weights.c2 * phi_bn + weights.c3 * phi_r
    total = _as_var(tape, total)
    bd = LossBreakdown(phi_bd.value, phi_bn.value, phi_r.value, total.value)
    return TapeLoss(bd, total, tape, pvars)


def _as_var(tape: Tape, v) -> Var:
    return v if isinstance(v, Var) else tape.push("const", float(v))
