"""Two-layer ReLU networks f(x) = sum_i a_i relu(w_i . x + b_i) and their gradients.

Gradient conventions (fixed, since ties do occur on the Boolean cube):
the ReLU derivative is 1{z >= 0}, and the hinge derivative is 0 at margin
exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

# rows per block when the (n, m) pre-activation matrix would be large
_BLOCK_ELEMS = 1 << 22


@dataclass
class TwoLayerMlp:
    W: np.ndarray  # (m, d) inner weights, rows w_i
    b: np.ndarray  # (m,) biases
    a: np.ndarray  # (m,) outer weights

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        m = self.W.shape[0]
        if self.b.shape != (m,) or self.a.shape != (m,):
            raise ValueError(f"inconsistent shapes W{self.W.shape}, b{self.b.shape}, a{self.a.shape}")
        if not (np.isfinite(self.W).all() and np.isfinite(self.b).all() and np.isfinite(self.a).all()):
            raise ValueError("parameters must be finite")

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "TwoLayerMlp":
        return TwoLayerMlp(self.W.copy(), self.b.copy(), self.a.copy())

    def _check_x(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise ValueError(f"expected inputs of length {self.d}, got {X.shape[-1]}")
        return X

    def preact(self, X) -> np.ndarray:
        X = self._check_x(X)
        return X @ self.W.T + self.b

    def hidden(self, X) -> np.ndarray:
        """relu(W x + b); (m,) for one point, (n, m) for a batch."""
        return np.maximum(self.preact(X), 0.0)

    def forward(self, X):
        X = self._check_x(X)
        if X.ndim == 1:
            return float(self.hidden(X) @ self.a)
        return blockwise(X, self.m, lambda xs: self.hidden(xs) @ self.a)

    __call__ = forward

    def pairing_sign(self) -> int | None:
        """+1 or -1 if rows pair as w_{i+m/2} = s * w_i (with b mirrored, a negated), else None."""
        if self.m % 2:
            return None
        h = self.m // 2
        if not (np.array_equal(self.b[h:], self.b[:h]) and np.array_equal(self.a[h:], -self.a[:h])):
            return None
        if np.array_equal(self.W[h:], -self.W[:h]):
            return -1
        if np.array_equal(self.W[h:], self.W[:h]):
            return 1
        return None

    def has_symmetric_pairing(self) -> bool:
        """w_i = -w_{i-m/2}, b_i = b_{i-m/2}, a_i = -a_{i-m/2} for the second half."""
        return self.pairing_sign() == -1


def blockwise(X: np.ndarray, width: int, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply ``fn`` to row blocks of X sized so that (rows x width) stays bounded."""
    rows = max(1, _BLOCK_ELEMS // max(width, 1))
    if X.shape[0] <= rows:
        return fn(X)
    return np.concatenate([fn(X[s:s + rows]) for s in range(0, X.shape[0], rows)])


def bias_grid(k: int) -> np.ndarray:
    """{-1 + 1/k, -1 + 2/k, ..., 1 - 1/k}: 2k - 1 values."""
    return (np.arange(1, 2 * k) - k) / k


def symmetric_init(m: int, d: int, k: int, rng: np.random.Generator) -> TwoLayerMlp:
    """Paired initialization: first half w ~ U{+-1}^d, b ~ U(bias_grid(k)), a ~ U{+-1/m};
    second half (-w, b, -a)."""
    if m % 2 or m < 2:
        raise ValueError(f"hidden width must be even and positive, got {m}")
    if k < 2:
        raise ValueError(f"bias grid needs k >= 2, got {k}")
    h = m // 2
    W = rng.integers(0, 2, size=(h, d)).astype(float) * 2 - 1
    b = rng.choice(bias_grid(k), size=h)
    a = (rng.integers(0, 2, size=h).astype(float) * 2 - 1) / m
    return TwoLayerMlp(np.vstack([W, -W]), np.concatenate([b, b]), np.concatenate([a, -a]))


def relu(z):
    return np.maximum(z, 0.0)


def phi_b(t, b):
    """relu(t + b) - relu(-t + b): odd and non-decreasing in t."""
    return relu(np.add(t, b)) - relu(np.add(np.negative(t), b))


def hinge_loss(model: TwoLayerMlp, X, y):
    """max(0, 1 - f(x) y); scalar for one sample, per-sample array for a batch."""
    f = model.forward(X)
    return np.maximum(0.0, 1.0 - f * np.asarray(y, dtype=float))


def _batch(model: TwoLayerMlp, X, y=None):
    X = np.atleast_2d(model._check_x(X))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if y is None:
        return X, None
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (X.shape[0],):
        raise ValueError("labels do not match batch")
    return X, y


def _hinge_residual(model, X, y, Z):
    """d loss / d f per sample (already divided by batch size)."""
    f = relu(Z) @ model.a
    return np.where(f * y < 1.0, -y, 0.0) / X.shape[0]


def grad_inner_hinge(model: TwoLayerMlp, X, y) -> np.ndarray:
    """Batch mean of d hinge / d W, shape (m, d)."""
    X, y = _batch(model, X, y)
    G = np.zeros_like(model.W)
    rows = max(1, _BLOCK_ELEMS // model.m)
    for s in range(0, X.shape[0], rows):
        xs, ys = X[s:s + rows], y[s:s + rows]
        Z = xs @ model.W.T + model.b
        r = _hinge_residual(model, xs, ys, Z) * (xs.shape[0] / X.shape[0])
        G += ((Z >= 0) * r[:, None]).T @ xs
    return G * model.a[:, None]


def grad_outer_hinge(model: TwoLayerMlp, X, y) -> np.ndarray:
    """Batch mean of d hinge / d a, shape (m,)."""
    X, y = _batch(model, X, y)
    g = np.zeros(model.m)
    rows = max(1, _BLOCK_ELEMS // model.m)
    for s in range(0, X.shape[0], rows):
        xs, ys = X[s:s + rows], y[s:s + rows]
        Z = xs @ model.W.T + model.b
        r = _hinge_residual(model, xs, ys, Z) * (xs.shape[0] / X.shape[0])
        g += relu(Z).T @ r
    return g


def hinge_grads(model: TwoLayerMlp, X, y) -> tuple[np.ndarray, np.ndarray, float]:
    """(dW, da, mean loss) in one pass; used by the training loops."""
    X, y = _batch(model, X, y)
    Z = X @ model.W.T + model.b
    H = relu(Z)
    f = H @ model.a
    loss = float(np.maximum(0.0, 1.0 - f * y).mean())
    r = np.where(f * y < 1.0, -y, 0.0) / X.shape[0]
    da = H.T @ r
    dW = ((Z >= 0) * r[:, None]).T @ X * model.a[:, None]
    return dW, da, loss


def distill_loss(student: TwoLayerMlp, target, X) -> float:
    """Batch mean of -relu(W_s x + b_s) . g(x), where g = ``target``."""
    X, _ = _batch(student, X)
    g = target(X) if callable(target) else np.asarray(target, dtype=float)
    return float(-(student.hidden(X) * g).sum(axis=1).mean())


def grad_inner_distill(student: TwoLayerMlp, target, X) -> np.ndarray:
    """Batch mean of d/dW of -relu(W_s x + b_s) . g(x).

    Row i is -mean(1{w_i.x + b_i >= 0} g_i(x) x).  ``target`` is either a
    callable x -> (n, m_s) or a precomputed (n, m_s) array.
    """
    X, _ = _batch(student, X)
    G = np.zeros_like(student.W)
    rows = max(1, _BLOCK_ELEMS // student.m)
    pre = None if callable(target) else np.asarray(target, dtype=float)
    if pre is not None and pre.shape != (X.shape[0], student.m):
        raise ValueError(f"target has shape {pre.shape}, expected {(X.shape[0], student.m)}")
    for s in range(0, X.shape[0], rows):
        xs = X[s:s + rows]
        g = target(xs) if pre is None else pre[s:s + rows]
        if g.shape != (xs.shape[0], student.m):
            raise ValueError(f"target has width {g.shape[-1]}, student has {student.m}")
        G -= ((xs @ student.W.T + student.b >= 0) * g).T @ xs
    return G / X.shape[0]


def save_checkpoint(model: TwoLayerMlp, path) -> None:
    """Text checkpoint: 'm d' header, m rows of W, then b, then a (17 significant digits)."""
    fmt = "%.17g"
    lines = [f"{model.m} {model.d}"]
    lines += [" ".join(fmt % v for v in row) for row in model.W]
    lines.append(" ".join(fmt % v for v in model.b))
    lines.append(" ".join(fmt % v for v in model.a))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_checkpoint(path) -> TwoLayerMlp:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    m, d = (int(t) for t in lines[0].split())
    rows = [np.array(line.split(), dtype=float) for line in lines[1:]]
    if len(rows) != m + 2:
        raise ValueError(f"checkpoint has {len(rows)} data rows, expected {m + 2}")
    W = np.vstack(rows[:m]).reshape(m, d)
    return TwoLayerMlp(W, rows[m], rows[m + 1])
