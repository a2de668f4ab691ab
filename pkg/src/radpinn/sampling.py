"""Training point generation.

Every point class draws from its own PCG64 sub-stream (seed, stream id), so
changing one count never perturbs the samples of another class.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .physics import BoundaryPoint

__all__ = [
    "KDistribution",
    "SampleSet",
    "rng_stream",
    "sample_interior",
    "sample_boundary",
    "sample_k",
    "build_samples",
]

STREAMS = {"interior": 0, "dirichlet": 1, "neumann": 2, "k": 3, "init": 4, "minibatch": 5}


def rng_stream(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.PCG64(ss))


def _open_unit(rng: np.random.Generator, size) -> np.ndarray:
    # uniform on the open interval (0, 1): multiples of 2**-53, never 0
    return rng.integers(1, 2**53, size=size, dtype=np.int64) * 2.0**-53


class KDistribution(str, Enum):
    UNIFORM = "uniform"
    LOGUNIFORM = "loguniform"


@dataclass
class SampleSet:
    collocation: np.ndarray
    dirichlet: np.ndarray
    neumann: np.ndarray
    k_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def neumann_normals(self) -> np.ndarray:
        ny = np.where(self.neumann[:, 1] == 0.0, -1.0, 1.0)
        return np.stack([np.zeros_like(ny), ny], axis=1)

    @property
    def dirichlet_normals(self) -> np.ndarray:
        nx = np.where(self.dirichlet[:, 0] == 0.0, -1.0, 1.0)
        return np.stack([nx, np.zeros_like(nx)], axis=1)

    def boundary_points(self) -> list[BoundaryPoint]:
        out = [BoundaryPoint.dirichlet(float(x), float(y)) for x, y in self.dirichlet]
        out += [BoundaryPoint.neumann(float(x), float(y)) for x, y in self.neumann]
        return out

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("collocation", "dirichlet", "neumann", "k_values")
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "x", "y", "k", "nx", "ny"])
            for x, y in self.collocation:
                w.writerow(["collocation", repr(float(x)), repr(float(y)), "", "", ""])
            for (x, y), (nx, ny) in zip(self.dirichlet, self.dirichlet_normals):
                w.writerow(["dirichlet", repr(float(x)), repr(float(y)), "", repr(float(nx)), repr(float(ny))])
            for (x, y), (nx, ny) in zip(self.neumann, self.neumann_normals):
                w.writerow(["neumann", repr(float(x)), repr(float(y)), "", repr(float(nx)), repr(float(ny))])
            for k in self.k_values:
                w.writerow(["k", "", "", repr(float(k)), "", ""])

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        rows: dict[str, list] = {"collocation": [], "dirichlet": [], "neumann": [], "k": []}
        with open(Path(path), newline="") as fh:
            for row in csv.DictReader(fh):
                kind = row["class"]
                if kind == "k":
                    rows["k"].append(float(row["k"]))
                else:
                    rows[kind].append((float(row["x"]), float(row["y"])))

        def arr(pts):
            return np.array(pts, dtype=float).reshape(-1, 2)

        return cls(arr(rows["collocation"]), arr(rows["dirichlet"]), arr(rows["neumann"]), np.array(rows["k"], float))


def sample_interior(n: int, seed: int) -> np.ndarray:
    """n i.i.d. uniform points strictly inside the unit square, shape (n, 2)."""
    if n < 1:
        raise ValueError(f"need at least one interior point, got n={n}")
    return _open_unit(rng_stream(seed, "interior"), (n, 2))


def _edge_pair(n: int, rng: np.random.Generator, axis: int) -> np.ndarray:
    n_low = (n + 1) // 2
    pts = np.empty((n, 2))
    pts[:, 1 - axis] = _open_unit(rng, n)
    pts[:n_low, axis] = 0.0
    pts[n_low:, axis] = 1.0
    return pts


def sample_boundary(n_bd: int, n_bn: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet points on x in {0, 1} and Neumann points on y in {0, 1}.

    Counts are split evenly between the two edges; an odd extra point goes to
    the x=0 (resp. y=0) edge.
    """
    if n_bd < 2 or n_bn < 2:
        raise ValueError(f"boundary counts must be >= 2, got n_bd={n_bd}, n_bn={n_bn}")
    dirichlet = _edge_pair(n_bd, rng_stream(seed, "dirichlet"), axis=0)
    neumann = _edge_pair(n_bn, rng_stream(seed, "neumann"), axis=1)
    return dirichlet, neumann


def sample_k(
    n: int,
    k_range: tuple[float, float],
    distribution: KDistribution | str = KDistribution.LOGUNIFORM,
    seed: int = 0,
) -> np.ndarray:
    k_min, k_max = k_range
    if not (0 < k_min < k_max) or not math.isfinite(k_max):
        raise ValueError(f"invalid k range ({k_min}, {k_max}); need 0 < k_min < k_max")
    if n < 1:
        raise ValueError(f"need at least one k value, got n={n}")
    distribution = KDistribution(distribution)
    rng = rng_stream(seed, "k")
    out = np.empty(n)
    filled = 0
    while filled < n:
        u = _open_unit(rng, n - filled)
        if distribution is KDistribution.LOGUNIFORM:
            lo, hi = math.log10(k_min), math.log10(k_max)
            ks = 10.0 ** (lo + u * (hi - lo))
        else:
            ks = k_min + u * (k_max - k_min)
        # rounding can land on an endpoint; redraw those
        ks = ks[(ks > k_min) & (ks < k_max)]
        out[filled : filled + ks.size] = ks
        filled += ks.size
    return out


def build_samples(cfg) -> SampleSet:
    """Full training sample set for a :class:`~radpinn.training.TrainConfig`."""
    dirichlet, neumann = sample_boundary(cfg.n_bd, cfg.n_bn, cfg.seed)
    ks = np.zeros(0)
    if cfg.scenario == 2:
        ks = sample_k(cfg.n_k, tuple(cfg.k_range), cfg.k_distribution, cfg.seed)
    return SampleSet(sample_interior(cfg.n_r, cfg.seed), dirichlet, neumann, ks)
