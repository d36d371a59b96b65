"""Exact analysis of functions on the Boolean cube {-1, +1}^d.

Points are addressed by bitmask: bit ``i - 1`` set means coordinate ``i`` is
``+1``, clear means ``-1``.  Subsets of ``[d]`` use the same bitmask encoding.
Population expectations are computed by full enumeration in fixed-size chunks
whose partial sums are combined in a fixed pairwise tree, so results do not
depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator

import numpy as np

MAX_ENUM_DIM = 24
MAX_TABLE_DIM = 20
DEFAULT_CHUNK = 1 << 13

_workers = 1


class CapacityError(ValueError):
    """Requested exact enumeration exceeds the supported dimension."""


def set_num_workers(n: int) -> None:
    """Number of threads used for chunked enumeration (results are unaffected)."""
    global _workers
    if n < 1:
        raise ValueError("need at least one worker")
    _workers = int(n)


def get_num_workers() -> int:
    return _workers


def sign(t):
    """Elementwise sign with sign(0) = +1."""
    return np.where(np.asarray(t) >= 0, 1.0, -1.0)


def _check_dim(d: int, limit: int = MAX_ENUM_DIM) -> None:
    if d < 0:
        raise ValueError(f"dimension must be nonnegative, got {d}")
    if d > limit:
        raise CapacityError(f"exact enumeration supports d <= {limit}, got d={d}")


def subset_mask(S: Iterable[int], d: int | None = None) -> int:
    """Bitmask of a 1-indexed coordinate subset."""
    mask = 0
    for i in S:
        i = int(i)
        if i < 1 or (d is not None and i > d):
            raise ValueError(f"coordinate {i} outside [1, {d}]")
        mask |= 1 << (i - 1)
    return mask


def mask_subset(mask: int) -> tuple[int, ...]:
    return tuple(i + 1 for i in range(mask.bit_length()) if mask >> i & 1)


def parity(x, S: Iterable[int]):
    """chi_S(x) = prod_{i in S} x_i for a point (d,) or a batch (n, d).

    ``S`` holds 1-indexed coordinates; the empty product is +1.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    idx = [int(i) for i in S]
    for i in idx:
        if i < 1 or i > d:
            raise ValueError(f"coordinate {i} outside [1, {d}]")
    if not idx:
        return np.ones(x.shape[:-1]) if x.ndim > 1 else 1.0
    out = np.prod(x[..., np.array(idx) - 1], axis=-1)
    return out if x.ndim > 1 else float(out)


def majority(v):
    """sign(sum of coordinates) along the last axis, with sign(0) = +1."""
    v = np.asarray(v, dtype=float)
    out = sign(v.sum(axis=-1))
    return out if v.ndim > 1 else float(out)


def cube_points(d: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Points of {-1,+1}^d for bitmasks in [start, stop), ascending."""
    _check_dim(d)
    stop = (1 << d) if stop is None else stop
    masks = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (masks >> np.arange(d, dtype=np.int64)) & 1
    return np.where(bits == 1, 1.0, -1.0)


def iter_cube(d: int, chunk: int = DEFAULT_CHUNK) -> Iterator[np.ndarray]:
    _check_dim(d)
    n = 1 << d
    for s in range(0, n, chunk):
        yield cube_points(d, s, min(n, s + chunk))


def tree_sum(parts: list):
    """Pairwise reduction in a fixed order."""
    if not parts:
        raise ValueError("nothing to sum")
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def cube_sum(fn: Callable[[np.ndarray], np.ndarray], d: int, chunk: int = DEFAULT_CHUNK):
    """Sum of ``fn(X_chunk)`` over all chunks of the cube.

    ``fn`` maps a chunk of points to that chunk's partial sum (any shape).
    Chunks may run on several threads; partials are combined by ``tree_sum``
    in chunk order.
    """
    _check_dim(d)
    n = 1 << d
    starts = list(range(0, n, chunk))

    def work(s):
        return np.asarray(fn(cube_points(d, s, min(n, s + chunk))), dtype=float)

    if _workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(_workers) as ex:
            parts = list(ex.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    return tree_sum(parts)


def cube_mean(fn: Callable[[np.ndarray], np.ndarray], d: int, chunk: int = DEFAULT_CHUNK):
    """E_x[fn-partial] where ``fn`` returns per-chunk *sums*; divides by 2^d."""
    total = cube_sum(fn, d, chunk)
    return total / float(1 << d)


def exact_expectation(f: Callable[[np.ndarray], np.ndarray], d: int, chunk: int = DEFAULT_CHUNK):
    """(1/2^d) * sum over the cube of ``f``.

    ``f`` is vectorized: it takes an (n, d) array of points and returns (n,)
    values, or (n, ...) arrays for vector-valued expectations.
    """
    out = cube_mean(lambda X: np.sum(np.asarray(f(X), dtype=float), axis=0), d, chunk)
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def threshold_correlation(d: int, t: int, b: Fraction | float = 0) -> float:
    """E_u[chi_T(u) * 1{sum(u) + b >= 0}] for any |T| = t, u uniform on the cube.

    Exact combinatorial count (no enumeration), valid for any d.
    """
    if not 0 <= t <= d:
        raise ValueError(f"need 0 <= t <= d, got t={t}, d={d}")
    b = Fraction(b).limit_denominator(10**9) if not isinstance(b, Fraction) else b
    total = 0
    for p in range(t + 1):
        cp = math.comb(t, p) * (-1 if p % 2 else 1)
        for q in range(d - t + 1):
            # p minus-ones inside T, q outside; sum(u) = d - 2(p + q)
            if d - 2 * (p + q) + b >= 0:
                total += cp * math.comb(d - t, q)
    return float(Fraction(total, 1 << d))


def majority_zeta(d: int, i: int, mode: str = "exact") -> float:
    """Degree-i Fourier coefficient of Maj on d bits, E[Maj(x) chi_S(x)], |S| = i.

    ``mode="exact"`` counts exactly for any d (Maj = 2*1{sum >= 0} - 1).
    ``mode="asymptotic"`` returns the order-of-growth expression
    ``i^{-1/3} / C(d, i)`` with constant 1 for odd i, and 0 for even i.  It is
    an approximation only.
    """
    if not 1 <= i <= d:
        raise ValueError(f"need 1 <= i <= d, got i={i}, d={d}")
    if mode == "asymptotic":
        if i % 2 == 0:
            return 0.0
        return i ** (-1.0 / 3.0) / math.comb(d, i)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    return 2.0 * threshold_correlation(d, i, Fraction(0))


def fwht(values: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along axis 0 (length 2^d)."""
    h = np.array(values, dtype=float, copy=True)
    n = h.shape[0]
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    step = 1
    while step < n:
        h = h.reshape(n // (2 * step), 2, step, *h.shape[1:])
        a, b = h[:, 0].copy(), h[:, 1].copy()
        h[:, 0], h[:, 1] = a + b, a - b
        h = h.reshape(n, *h.shape[3:])
        step *= 2
    return h


def popcount(masks: np.ndarray) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros_like(masks)
    m = masks.copy()
    while np.any(m):
        out += m & 1
        m >>= 1
    return out


@dataclass
class FourierTable:
    """Fourier coefficients of f on {-1,+1}^d up to a degree cap, keyed by bitmask."""

    d: int
    max_degree: int
    coeffs: dict[int, float] = field(default_factory=dict)

    def __getitem__(self, S) -> float:
        mask = S if isinstance(S, (int, np.integer)) else subset_mask(S, self.d)
        return self.coeffs.get(int(mask), 0.0)

    def squared_norm(self) -> float:
        return math.fsum(c * c for c in self.coeffs.values())

    def evaluate(self, X) -> np.ndarray:
        """Reconstruct f from the stored coefficients at points X (n, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for mask, c in sorted(self.coeffs.items()):
            out += c * parity(X, mask_subset(mask)) if mask else c
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subset_bitmask", "degree", "coefficient"])
            for mask in sorted(self.coeffs):
                w.writerow([mask, bin(mask).count("1"), repr(float(self.coeffs[mask]))])

    @classmethod
    def from_csv(cls, path, d: int) -> "FourierTable":
        coeffs = {}
        max_deg = 0
        with open(path, encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                coeffs[int(row["subset_bitmask"])] = float(row["coefficient"])
                max_deg = max(max_deg, int(row["degree"]))
        return cls(d=d, max_degree=max_deg, coeffs=coeffs)


def fourier_table(f: Callable[[np.ndarray], np.ndarray], d: int, max_degree: int | None = None) -> FourierTable:
    """All Fourier coefficients of degree <= max_degree, by exact enumeration."""
    _check_dim(d, MAX_TABLE_DIM)
    max_degree = d if max_degree is None else max_degree
    if not 0 <= max_degree <= d:
        raise ValueError(f"max_degree must lie in [0, {d}]")
    values = np.asarray(f(cube_points(d)), dtype=float)
    # point p has x_i = -1 where bit clear, so chi_T(x_p) = (-1)^|T| (-1)^{|T & p|}
    spectrum = fwht(values) / float(1 << d)
    masks = np.arange(1 << d, dtype=np.int64)
    deg = popcount(masks)
    spectrum = np.where(deg % 2 == 1, -spectrum, spectrum)
    keep = deg <= max_degree
    coeffs = {int(m): float(c) for m, c in zip(masks[keep], spectrum[keep])}
    return FourierTable(d=d, max_degree=max_degree, coeffs=coeffs)
