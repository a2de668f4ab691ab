"""Steady reaction-advection-diffusion problem on the unit square.

    -k (u_xx + u_yy) + a u_x + sigma u = f   in (0,1)^2
    u = 0                                   on x = 0 and x = 1
    du/dn = 0                               on y = 0 and y = 1

The closed-form solutions are one-dimensional (independent of y) and are
evaluated in factored exponential form so they stay finite for very thin
boundary layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "BoundaryKind",
    "BoundaryPoint",
    "ProblemSpec",
    "REACTION",
    "ADVECTION",
    "residual",
    "exact_reaction",
    "exact_advection",
    "exact_solution",
    "boundary_target",
]


@dataclass(frozen=True)
class ProblemSpec:
    sigma: float = 1.0
    a: float = 0.0
    forcing: float = 1.0

    @property
    def kind(self) -> str:
        if self.sigma > 0 and self.a == 0:
            return "reaction"
        if self.sigma == 0 and self.a > 0:
            return "advection"
        return "mixed"

    def violations(self) -> list[str]:
        out = []
        for name in ("sigma", "a", "forcing"):
            v = getattr(self, name)
            if not math.isfinite(v):
                out.append(f"problem.{name} must be finite (got {v!r})")
        for name in ("sigma", "a"):
            v = getattr(self, name)
            if math.isfinite(v) and v < 0:
                out.append(f"problem.{name} >= 0 (got {v!r})")
        return out

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "a": self.a, "forcing": self.forcing}

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        return cls(**{k: float(v) for k, v in d.items()})


REACTION = ProblemSpec(sigma=1.0, a=0.0)
ADVECTION = ProblemSpec(sigma=0.0, a=1.0)


class BoundaryKind(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class BoundaryPoint:
    x: float
    y: float
    kind: BoundaryKind
    normal: tuple[float, float]

    def __post_init__(self):
        if self.kind is BoundaryKind.DIRICHLET:
            if self.x not in (0.0, 1.0):
                raise ValueError(f"Dirichlet point must lie on x=0 or x=1, got x={self.x}")
        elif self.y not in (0.0, 1.0):
            raise ValueError(f"Neumann point must lie on y=0 or y=1, got y={self.y}")

    @classmethod
    def dirichlet(cls, x: float, y: float) -> "BoundaryPoint":
        return cls(x, y, BoundaryKind.DIRICHLET, (-1.0 if x == 0.0 else 1.0, 0.0))

    @classmethod
    def neumann(cls, x: float, y: float) -> "BoundaryPoint":
        return cls(x, y, BoundaryKind.NEUMANN, (0.0, -1.0 if y == 0.0 else 1.0))


def _check_k(k):
    if np.any(np.asarray(k) <= 0):
        raise ValueError(f"diffusion coefficient must be positive, got k={k!r}")


def residual(spec: ProblemSpec, k, derivs):
    """Interior residual -k*lap(u) + a*u_x + sigma*u - f.

    ``derivs`` is ``(u, u_x, u_y, u_xx, u_yy)``; the entries may be floats,
    numpy arrays or tape variables.
    """
    _check_k(k)
    u, u_x, _u_y, u_xx, u_yy = derivs
    return -k * (u_xx + u_yy) + spec.a * u_x + spec.sigma * u - spec.forcing


def _sinh_ratio(lam, p):
    # sinh(lam*p) / sinh(lam) for p in [0, 1], without overflow for large lam
    return np.exp(-lam * (1.0 - p)) * np.expm1(-2.0 * lam * p) / np.expm1(-2.0 * lam)


def exact_reaction(k, x, y=0.0, sigma: float = 1.0, forcing: float = 1.0):
    """Exact solution for a = 0, sigma > 0 (y is ignored)."""
    _check_k(k)
    if sigma <= 0:
        raise ValueError("reaction solution needs sigma > 0")
    x = np.asarray(x, dtype=float)
    lam = np.sqrt(sigma / np.asarray(k, dtype=float))
    u = (forcing / sigma) * (1.0 - _sinh_ratio(lam, 1.0 - x) - _sinh_ratio(lam, x))
    return u if u.ndim else float(u)


def exact_advection(k, x, y=0.0, a: float = 1.0, forcing: float = 1.0):
    """Exact solution for sigma = 0, a > 0 (y is ignored).

    (1/a) * (x - (e^{a x/k} - 1) / (e^{a/k} - 1)), factored as
    e^{a(x-1)/k} (1 - e^{-a x/k}) / (1 - e^{-a/k}).
    """
    _check_k(k)
    if a <= 0:
        raise ValueError("advection solution needs a > 0")
    x = np.asarray(x, dtype=float)
    r = np.asarray(a / np.asarray(k, dtype=float))
    layer = np.exp(r * (x - 1.0)) * np.expm1(-r * x) / np.expm1(-r)
    u = (forcing / a) * (x - layer)
    return u if u.ndim else float(u)


def exact_solution(spec: ProblemSpec, k, x, y=0.0):
    if spec.kind == "reaction":
        return exact_reaction(k, x, y, sigma=spec.sigma, forcing=spec.forcing)
    if spec.kind == "advection":
        return exact_advection(k, x, y, a=spec.a, forcing=spec.forcing)
    raise NotImplementedError("no closed form for sigma > 0 and a > 0 together")


def boundary_target(point: BoundaryPoint) -> float:
    """Target for the compared quantity: u on Dirichlet edges, grad(u).n on Neumann edges."""
    return 0.0
