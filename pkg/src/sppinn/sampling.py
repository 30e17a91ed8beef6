"""Latin hypercube collocation points and deterministic mini-batch iteration.

All randomness comes from numpy's PCG64 bit generator, whose stream is fixed
across platforms for a given seed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .problems import Domain

__all__ = ["BatchPlan", "CollocationSet", "lhs_sample", "next_batch", "rng_from_seed"]


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class CollocationSet:
    points: np.ndarray  # (n, 2) rows of (t, x)
    seed: int
    domain: Domain

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def t(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 1]

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x"])
            for t, x in self.points:
                w.writerow([repr(float(t)), repr(float(x))])
        return path


def lhs_sample(n: int, domain: Domain, seed: int) -> CollocationSet:
    """Latin hypercube sample of ``n`` points in ``[0, T] x [a, b]``.

    Along each axis the interval is cut into ``n`` equal strata and each
    stratum receives exactly one point.
    """
    if n < 1:
        raise ValueError(f"need at least one collocation point, got {n}")
    rng = rng_from_seed(seed)
    unit = np.empty((n, 2))
    for axis in range(2):
        unit[:, axis] = (rng.permutation(n) + rng.random(n)) / n
    lo = np.array([0.0, domain.a])
    hi = np.array([domain.T, domain.b])
    pts = lo + unit * (hi - lo)
    return CollocationSet(np.minimum(pts, hi), seed, domain)


@dataclass
class BatchPlan:
    """Epoch-wise shuffled batches over a collocation set.

    Each epoch is a fresh permutation drawn from the plan's own generator, so
    the batch sequence depends on ``seed`` only. The last batch of an epoch is
    short when ``batch_size`` does not divide the set size.
    """

    n: int
    batch_size: int
    seed: int = 0
    epoch: int = 0
    step: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)
    _order: np.ndarray = field(init=False, repr=False)
    _pos: int = field(init=False, default=0, repr=False)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        self.batch_size = min(self.batch_size, self.n)
        self._rng = rng_from_seed(self.seed)
        self._order = self._rng.permutation(self.n)

    def next_indices(self) -> np.ndarray:
        if self._pos >= self.n:
            self.epoch += 1
            self._order = self._rng.permutation(self.n)
            self._pos = 0
        idx = self._order[self._pos : self._pos + self.batch_size]
        self._pos += len(idx)
        self.step += 1
        return idx

    @property
    def batches_per_epoch(self) -> int:
        return -(-self.n // self.batch_size)


def next_batch(points: CollocationSet, plan: BatchPlan) -> np.ndarray:
    """Next slice of ``(t, x)`` rows according to ``plan``."""
    if plan.n != points.n:
        raise ValueError("batch plan was built for a different collocation set")
    return points.points[plan.next_indices()]


def boundary_points(n: int, domain: Domain, seed: int) -> np.ndarray:
    """``(t, a)`` rows for the periodic-pair term of the baseline loss."""
    rng = rng_from_seed(seed)
    t = np.sort(rng.random(n)) * domain.T
    return np.stack([t, np.full(n, domain.a)], axis=1)


def initial_points(n: int, domain: Domain, seed: int) -> np.ndarray:
    """``(0, x)`` rows for the initial-condition term of the baseline loss."""
    rng = rng_from_seed(seed)
    x = domain.a + (rng.permutation(n) + rng.random(n)) / n * domain.P
    return np.stack([np.zeros(n), x], axis=1)
