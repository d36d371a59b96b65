"""Sparse parity tasks and labeled sample streams."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .boolean_fourier import DEFAULT_CHUNK, MAX_ENUM_DIM, CapacityError, cube_points, subset_mask


@dataclass(frozen=True)
class ParityTask:
    """Target chi_S on {-1,+1}^d with |S| = k; coordinates are 1-indexed.

    ``support`` defaults to ``(1, ..., k)``.
    """

    d: int
    k: int
    support: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.support is None:
            object.__setattr__(self, "support", tuple(range(1, self.k + 1)))
        S = tuple(sorted(int(i) for i in self.support))
        object.__setattr__(self, "support", S)
        if not 1 <= self.k < self.d:
            raise ValueError(f"need 1 <= k < d, got k={self.k}, d={self.d}")
        if len(S) != self.k or len(set(S)) != self.k:
            raise ValueError(f"support must hold k={self.k} distinct coordinates, got {S}")
        if S[0] < 1 or S[-1] > self.d:
            raise ValueError(f"support coordinates must lie in [1, {self.d}]")

    @property
    def index(self) -> np.ndarray:
        """0-based column indices of the support."""
        return np.array(self.support, dtype=np.int64) - 1

    @property
    def in_support(self) -> np.ndarray:
        mask = np.zeros(self.d, dtype=bool)
        mask[self.index] = True
        return mask

    @property
    def mask(self) -> int:
        return subset_mask(self.support, self.d)

    def label(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.prod(X[..., self.index], axis=-1)

    @classmethod
    def from_config(cls, cfg: dict) -> "ParityTask":
        support = cfg.get("support")
        return cls(d=int(cfg["d"]), k=int(cfg["k"]), support=tuple(support) if support else None)


class LabeledBatch(NamedTuple):
    x: np.ndarray  # (B, d) entries in {-1, +1}
    y: np.ndarray  # (B,)


def sample_points(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=(n, d)).astype(np.float64) * 2.0 - 1.0


def sample_batch(task: ParityTask, B: int, rng: np.random.Generator) -> LabeledBatch:
    """B i.i.d. uniform points labeled by the task's parity."""
    if B < 1:
        raise ValueError("batch size must be >= 1")
    X = sample_points(task.d, B, rng)
    return LabeledBatch(X, task.label(X))


def enumerate_all(task: ParityTask, chunk: int = DEFAULT_CHUNK) -> Iterator[LabeledBatch]:
    """Every point of the cube exactly once, ascending bitmask, in chunks."""
    if task.d > MAX_ENUM_DIM:
        raise CapacityError(f"exact enumeration supports d <= {MAX_ENUM_DIM}, got d={task.d}")
    n = 1 << task.d
    for s in range(0, n, chunk):
        X = cube_points(task.d, s, min(n, s + chunk))
        yield LabeledBatch(X, task.label(X))


def spawn_streams(seed, n: int) -> list[np.random.Generator]:
    """Independent generators from one seed (splittable seeding)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n)]
