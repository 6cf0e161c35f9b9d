"""
Product distributions over categorical agent moves.

q(x) = prod_i q_i(x_i). Holds the simplex-safe arithmetic every other service relies on:
entropy, sampling, interior projection and KL distance.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy.special import entr, rel_entr

from app.core.errors import DivergenceUndefinedError, InvalidDistributionError
from app.core.random import RandomSource
from app.core.settings import settings
from app.schemas.domain import CategoricalDomain, JointSample


class ProductDistribution:
    """Immutable tuple of per-agent probability vectors."""

    __slots__ = ("_probs",)

    def __init__(self, probs: Iterable[Sequence[float] | np.ndarray], tol: float | None = None):
        tol = settings.normalization_tol if tol is None else tol
        vectors = []
        for i, p in enumerate(probs):
            v = np.array(p, dtype=float)
            if v.ndim != 1 or v.size == 0:
                raise InvalidDistributionError(f"agent {i}: expected a non-empty vector")
            if not np.all(np.isfinite(v)):
                raise InvalidDistributionError(f"agent {i}: non-finite component")
            if np.any(v < 0):
                raise InvalidDistributionError(f"agent {i}: negative component {v.min()}")
            if abs(v.sum() - 1.0) > tol:
                raise InvalidDistributionError(f"agent {i}: sums to {v.sum()!r}")
            v.setflags(write=False)
            vectors.append(v)
        if not vectors:
            raise InvalidDistributionError("no agents")
        self._probs: tuple[np.ndarray, ...] = tuple(vectors)

    @classmethod
    def uniform(cls, move_counts: Sequence[int]) -> "ProductDistribution":
        return cls([np.full(n, 1.0 / n) for n in move_counts])

    @classmethod
    def point_mass(cls, move_counts: Sequence[int], x: Sequence[int]) -> "ProductDistribution":
        probs = []
        for n, m in zip(move_counts, x):
            v = np.zeros(n)
            v[m] = 1.0
            probs.append(v)
        return cls(probs)

    @classmethod
    def from_weights(cls, weights: Iterable[Sequence[float] | np.ndarray]) -> "ProductDistribution":
        return cls([np.asarray(w, dtype=float) / np.sum(w) for w in weights])

    @property
    def probs(self) -> tuple[np.ndarray, ...]:
        return self._probs

    @property
    def move_counts(self) -> tuple[int, ...]:
        return tuple(p.size for p in self._probs)

    @property
    def agent_count(self) -> int:
        return len(self._probs)

    @property
    def domain(self) -> CategoricalDomain:
        return CategoricalDomain(move_counts=self.move_counts)

    def __getitem__(self, i: int) -> np.ndarray:
        return self._probs[i]

    def __len__(self) -> int:
        return len(self._probs)

    def __repr__(self) -> str:
        return f"ProductDistribution({self.to_list()})"

    def replace(self, i: int, q_i: Sequence[float] | np.ndarray) -> "ProductDistribution":
        probs = list(self._probs)
        probs[i] = np.asarray(q_i, dtype=float)
        return ProductDistribution(probs)

    def is_interior(self, eps_floor: float | None = None) -> bool:
        eps = settings.eps_floor if eps_floor is None else eps_floor
        return all(np.all(p >= eps) for p in self._probs)

    def modal_moves(self) -> tuple[int, ...]:
        return tuple(int(np.argmax(p)) for p in self._probs)

    def max_abs_diff(self, other: "ProductDistribution") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self._probs, other._probs))

    def to_list(self) -> list[list[float]]:
        return [p.tolist() for p in self._probs]


def agent_entropy(q_i: np.ndarray) -> float:
    # entr(0) == 0, the continuous extension of -x ln x
    return float(np.sum(entr(q_i)))


def entropy(q: ProductDistribution) -> float:
    return sum(agent_entropy(p) for p in q.probs)


def sample_moves(q: ProductDistribution, rng: RandomSource, size: int) -> np.ndarray:
    """Draw `size` joint moves, shape (size, n_agents); agents sampled independently."""
    out = np.empty((size, q.agent_count), dtype=np.int64)
    for i, p in enumerate(q.probs):
        u = rng.random(size)
        idx = np.searchsorted(np.cumsum(p), u, side="right")
        out[:, i] = np.minimum(idx, p.size - 1)
    return out


def sample_joint(q: ProductDistribution, rng: RandomSource) -> JointSample:
    x = sample_moves(q, rng, 1)[0]
    return JointSample(x=tuple(int(m) for m in x))


def project_interior(
    q: ProductDistribution | Sequence[Sequence[float] | np.ndarray],
    eps_floor: float | None = None,
) -> ProductDistribution:
    """Clip negatives, renormalize, and lift every component to at least eps_floor.

    Vectors already on the interior come back unchanged up to renormalization.
    """
    eps = settings.eps_floor if eps_floor is None else eps_floor
    raw = q.probs if isinstance(q, ProductDistribution) else q
    out = []
    for i, p in enumerate(raw):
        v = np.asarray(p, dtype=float)
        if not np.all(np.isfinite(v)):
            raise InvalidDistributionError(f"agent {i}: non-finite component after step")
        total = np.maximum(v, 0.0).sum()
        if total <= 0:
            raise InvalidDistributionError(f"agent {i}: no positive component, step too large")
        w = np.maximum(v, 0.0) / total
        if w.min() < eps:
            w = eps + (1.0 - eps * w.size) * w
        out.append(w)
    return ProductDistribution(out)


def kl_divergence(p1: Sequence[float] | np.ndarray, p2: Sequence[float] | np.ndarray) -> float:
    a = np.asarray(p1, dtype=float)
    b = np.asarray(p2, dtype=float)
    if a.shape != b.shape:
        raise DivergenceUndefinedError(f"shape mismatch {a.shape} vs {b.shape}")
    if np.any((a > 0) & (b <= 0)):
        raise DivergenceUndefinedError("p2 vanishes where p1 has mass")
    return float(np.sum(rel_entr(a, b)))
