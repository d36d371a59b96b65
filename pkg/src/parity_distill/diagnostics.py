"""Mechanism diagnostics: weight gaps, projected correlations, gradient
decomposition, estimator concentration and support recovery.

Expectations are taken either over the full cube (``mode="exact"``) or over
``B`` random points (``mode="sampled"``).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .boolean_fourier import MAX_ENUM_DIM, CapacityError, cube_points, majority_zeta, sign, tree_sum
from .distill import SymmetricProjection, projected_teacher_hidden
from .mlp import TwoLayerMlp, relu
from .parity_data import ParityTask, sample_points

_CHUNK = 4096


def _points(d: int, mode: str, B: int | None, rng):
    """Chunks of the averaging set plus its size."""
    if mode == "exact":
        if d > MAX_ENUM_DIM:
            raise CapacityError(f"exact mode supports d <= {MAX_ENUM_DIM}, got d={d}")
        n = 1 << d
        return (cube_points(d, s, min(n, s + _CHUNK)) for s in range(0, n, _CHUNK)), n
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    if not B or B < 1 or rng is None:
        raise ValueError("sampled mode needs B >= 1 and an rng")
    return (sample_points(d, min(_CHUNK, B - s), rng) for s in range(0, B, _CHUNK)), B


def _mean(fn: Callable[[np.ndarray], np.ndarray], d: int, mode: str = "exact", B=None, rng=None) -> np.ndarray:
    """Average of per-chunk sums ``fn(X)`` (fixed chunk order, pairwise combine)."""
    chunks, n = _points(d, mode, B, rng)
    return tree_sum([np.asarray(fn(X), dtype=float) for X in chunks]) / n


# ----------------------------------------------------------------------------
# weight gap


@dataclass
class WeightGapReport:
    min_in: np.ndarray  # per neuron, min_{j in S} |w_ij|
    mean_in: np.ndarray
    max_out: np.ndarray  # per neuron, max_{j not in S} |w_ij|
    mean_out: np.ndarray
    gap_ratio: float  # min over neurons of min_in / max over neurons of max_out
    predicted_in: float  # 1/(2k)
    predicted_out: float  # |zeta_{k+1} / zeta_{k-1}| / (2k)

    def summary(self) -> dict:
        return {
            "min_in": float(self.min_in.min()),
            "max_in": float(self.min_in.max()),
            "mean_in": float(self.mean_in.mean()),
            "max_out": float(self.max_out.max()),
            "mean_out": float(self.mean_out.mean()),
            "gap_ratio": self.gap_ratio,
            "predicted_in": self.predicted_in,
            "predicted_out": self.predicted_out,
        }


def weight_gap(model: TwoLayerMlp, task: ParityTask) -> WeightGapReport:
    if model.d != task.d:
        raise ValueError("model and task dimensions differ")
    A = np.abs(model.W)
    ins = task.in_support
    win, wout = A[:, ins], A[:, ~ins]
    lo, hi = float(win.min()), float(wout.max())
    ratio = math.inf if hi == 0.0 else lo / hi
    k = task.k
    if k >= 2 and k + 1 <= task.d:
        z_lo, z_hi = majority_zeta(task.d, k - 1), majority_zeta(task.d, k + 1)
        pred_out = abs(z_hi / z_lo) / (2 * k) if z_lo else math.nan
    else:
        pred_out = math.nan
    return WeightGapReport(win.min(1), win.mean(1), wout.max(1), wout.mean(1), ratio, 1.0 / (2 * k), pred_out)


def support_recovery_score(model: TwoLayerMlp, task: ParityTask) -> float:
    """Fraction of neurons whose k largest |w_ij| are exactly the support.

    Strict: every in-support magnitude must exceed every out-of-support one,
    so ties (e.g. a +-1 initialization) never count.
    """
    A = np.abs(model.W)
    ins = task.in_support
    return float(np.mean(A[:, ins].min(1) > A[:, ~ins].max(1)))


# ----------------------------------------------------------------------------
# correlations of the projected teacher


def scaling_factors(teacher: TwoLayerMlp, mode: str = "exact", B=None, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """s_{ij} = E[phi_{b_i}(w_i.x) x_j] for the first m_t/2 teacher neurons, computed two ways.

    Returns (phi_form, doubled_form): the second uses E[phi x_j] = 2 E[relu(w.x + b) x_j],
    which holds because x and -x are equally likely.
    """
    h = teacher.m // 2
    Wh, bh = teacher.W[:h], teacher.b[:h]

    def both(X):
        Z = X @ Wh.T
        return np.stack([(relu(Z + bh) - relu(bh - Z)).T @ X, 2.0 * relu(Z + bh).T @ X])

    out = _mean(both, teacher.d, mode, B, rng)
    return out[0], out[1]


@dataclass
class CorrelationReport:
    correlations: np.ndarray  # (rows, d): E[(A f_t)_l(x) x_j]
    scaling: np.ndarray  # (m_t/2, d): s_{ij}
    sigma: np.ndarray  # (d,): sqrt(sum_i s_ij^2) / m_t
    in_support: np.ndarray  # (d,) bool
    mode: str
    hist_edges: np.ndarray = field(default=None)
    hist_in: np.ndarray = field(default=None)
    hist_out: np.ndarray = field(default=None)

    def __post_init__(self):
        vals = self.correlations
        top = float(np.abs(vals).max()) or 1.0
        self.hist_edges = np.linspace(-top, top, 42)
        self.hist_in = np.histogram(vals[:, self.in_support], self.hist_edges)[0]
        self.hist_out = np.histogram(vals[:, ~self.in_support], self.hist_edges)[0]

    @property
    def in_dispersion(self) -> float:
        return float(np.std(self.correlations[:, self.in_support]))

    @property
    def out_dispersion(self) -> float:
        return float(np.std(self.correlations[:, ~self.in_support]))

    @property
    def dispersion_ratio(self) -> float:
        out = self.out_dispersion
        return math.inf if out == 0.0 else self.in_dispersion / out

    def per_coordinate_dispersion(self) -> np.ndarray:
        return self.correlations.std(axis=0)

    def summary(self) -> dict:
        ins = self.in_support
        return {
            "mode": self.mode,
            "rows": int(self.correlations.shape[0]),
            "d": int(self.correlations.shape[1]),
            "support": [int(j) + 1 for j in np.flatnonzero(ins)],
            "in_dispersion": self.in_dispersion,
            "out_dispersion": self.out_dispersion,
            "dispersion_ratio": self.dispersion_ratio,
            "per_coordinate_dispersion": [float(v) for v in self.per_coordinate_dispersion()],
            "sigma": [float(v) for v in self.sigma],
            "min_sigma_in": float(self.sigma[ins].min()),
            "max_sigma_out": float(self.sigma[~ins].max()) if (~ins).any() else 0.0,
        }

    def histogram_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "count_in_support", "count_out_support"])
            for i in range(len(self.hist_in)):
                w.writerow([repr(float(self.hist_edges[i])), repr(float(self.hist_edges[i + 1])),
                            int(self.hist_in[i]), int(self.hist_out[i])])

    def summary_json(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def correlation_report(teacher: TwoLayerMlp, A, task: ParityTask, mode: str = "exact",
                       B: int | None = None, rng=None, mirror: bool = True) -> CorrelationReport:
    """Correlations of each projected coordinate with each input bit.

    With g = sum_i A_{li} phi_i (mirror pairing), E[g_l x_j] = sum_i A_{li} s_{ij};
    the literal form uses A @ E[relu(W_t x + b_t) x^T].
    """
    A = A.A if isinstance(A, SymmetricProjection) else np.asarray(A, dtype=float)
    if A.shape[1] != teacher.m:
        raise ValueError("projection width does not match the teacher")
    h = teacher.m // 2
    s_phi, _ = scaling_factors(teacher, mode, B, rng)
    if mirror:
        C = A[:, :h] @ s_phi
    else:
        # literal A relu(W x + b); sampled mode reuses a fresh draw only when rng is given
        full = _mean(lambda X: relu(X @ teacher.W.T + teacher.b).T @ X, teacher.d, mode, B, rng)
        C = A @ full
    sigma = np.sqrt((s_phi**2).sum(axis=0)) / teacher.m
    return CorrelationReport(C, s_phi, sigma, task.in_support, mode)


# Exact-mode values measured at fixed sizes (seed stream "teacher", seed 0);
# smaller measurements at the same sizes are flagged, not treated as failures.
REGRESSION_BASELINES = {
    (16, 4, 4096): {"dispersion_ratio": 4.41, "min_sigma_in_over_max_sigma_out": 4.37},
}


def baseline_flags(report: CorrelationReport, task: ParityTask, m_t: int) -> list[str]:
    """Names of pinned baselines the measured correlation gap falls below."""
    base = REGRESSION_BASELINES.get((task.d, task.k, m_t))
    if base is None:
        return []
    s = report.summary()
    measured = {
        "dispersion_ratio": report.dispersion_ratio,
        "min_sigma_in_over_max_sigma_out": s["min_sigma_in"] / s["max_sigma_out"] if s["max_sigma_out"] else math.inf,
    }
    return [name for name, floor in base.items() if measured[name] < floor]


def scaling_bounds(scaling: np.ndarray, task: ParityTask, threshold: float) -> dict:
    """Per in-support j: neurons with |s_ij| >= threshold; plus the largest out-of-support |s_ij|."""
    S = np.abs(scaling)
    ins = task.in_support
    return {
        "count_above": [int(c) for c in (S[:, ins] >= threshold).sum(axis=0)],
        "max_out": float(S[:, ~ins].max()),
    }


# ----------------------------------------------------------------------------
# gradient decomposition


@dataclass
class GradientDecompositionReport:
    term1: np.ndarray  # E[g_i(x) x_j]
    term2: np.ndarray  # E[g_i(x) Maj(w_i * x) x_j]
    total: np.ndarray  # -E[1{w_i.x + b_i >= 0} g_i(x) x_j]
    tie: np.ndarray  # E[g_i x_j (1{w_i.x + b_i >= 0} - (1 + Maj)/2)]; zero without ties
    in_support: np.ndarray

    @property
    def identity_residual(self) -> float:
        """max |total + (term1 + term2)/2|."""
        return float(np.abs(self.total + 0.5 * (self.term1 + self.term2)).max())

    @property
    def corrected_residual(self) -> float:
        """max |total + (term1 + term2)/2 + tie|; zero up to rounding in any case."""
        return float(np.abs(self.total + 0.5 * (self.term1 + self.term2) + self.tie).max())

    def majority_ratio(self, in_support: bool = True) -> float:
        """||term2|| / ||term1|| over the selected coordinates."""
        cols = self.in_support if in_support else ~self.in_support
        den = float(np.linalg.norm(self.term1[:, cols]))
        return math.inf if den == 0.0 else float(np.linalg.norm(self.term2[:, cols])) / den

    def entry_ratios(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.term2) / np.abs(self.term1)

    def summary(self) -> dict:
        r = self.entry_ratios()
        ins = self.in_support
        return {
            "identity_residual": self.identity_residual,
            "corrected_residual": self.corrected_residual,
            "max_tie": float(np.abs(self.tie).max()),
            "majority_ratio_in": self.majority_ratio(True),
            "majority_ratio_out": self.majority_ratio(False),
            "median_entry_ratio_in": float(np.nanmedian(r[:, ins])),
        }


def gradient_decomposition(student: TwoLayerMlp, teacher: TwoLayerMlp, A, task: ParityTask,
                           mode: str = "exact", B: int | None = None, rng=None,
                           mirror: bool = True) -> GradientDecompositionReport:
    """Split the student's first-step gradient into a plain and a majority-weighted correlation."""
    if np.any(np.abs(student.b) >= 1):
        raise ValueError("the decomposition needs |b_i| < 1")
    g = projected_teacher_hidden(teacher, A, mirror=mirror)
    Ws, bs = student.W, student.b

    def parts(X):
        G = g(X)
        S = X @ Ws.T
        maj = sign(S)  # Maj(w * x) = sign(w . x)
        ind = (S + bs >= 0).astype(float)
        t1 = G.T @ X
        t2 = (G * maj).T @ X
        tot = -(G * ind).T @ X
        tie = (G * (ind - 0.5 * (1.0 + maj))).T @ X
        return np.stack([t1, t2, tot, tie])

    out = _mean(parts, student.d, mode, B, rng)
    return GradientDecompositionReport(out[0], out[1], out[2], out[3], task.in_support)


def majority_mean(w: np.ndarray) -> float:
    """E_x[Maj(w * x)] for w in {+-1}^d, exactly (it equals P(sum = 0) for even d)."""
    w = np.asarray(w, dtype=float)
    d = w.shape[-1]
    return float(_mean(lambda X: sign(X @ w).sum(), d))


# ----------------------------------------------------------------------------
# concentration


@dataclass
class ConcentrationCurve:
    batch_sizes: list[int]
    mean_abs_error: list[float]
    slope: float
    intercept: float

    def rows(self) -> list[tuple[int, float]]:
        return list(zip(self.batch_sizes, self.mean_abs_error))

    def monotone_violations(self, slack: float = 0.2) -> int:
        """Count of steps where the error grows by more than ``slack`` (relative)."""
        e = self.mean_abs_error
        return sum(e[i + 1] > e[i] * (1 + slack) for i in range(len(e) - 1))


def concentration_curve(statistic: Callable[[np.ndarray], np.ndarray], d: int, batch_sizes: Sequence[int],
                        repeats: int, rng: np.random.Generator, population: float | None = None) -> ConcentrationCurve:
    """Mean |sample mean - population mean| of a per-point statistic, versus batch size.

    ``population`` defaults to the exact cube average (d <= 24).  The slope is a
    least-squares fit of log(error) on log(B); curves with zero error get slope 0.
    """
    if repeats < 1 or not batch_sizes:
        raise ValueError("need repeats >= 1 and at least one batch size")
    if population is None:
        population = float(_mean(lambda X: np.sum(statistic(X)), d))
    errs = []
    for B in batch_sizes:
        e = []
        for _ in range(repeats):
            total = tree_sum([float(np.sum(statistic(sample_points(d, min(_CHUNK * 16, B - s), rng))))
                              for s in range(0, B, _CHUNK * 16)])
            e.append(abs(total / B - population))
        errs.append(float(np.mean(e)))
    if min(errs) == 0.0:
        slope, icpt = 0.0, 0.0
    else:
        slope, icpt = np.polyfit(np.log(batch_sizes), np.log(errs), 1)
    return ConcentrationCurve(list(map(int, batch_sizes)), errs, float(slope), float(icpt))


def report_json(obj) -> str:
    """Stable JSON for report dataclasses (arrays become lists)."""
    def conv(v):
        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        raise TypeError(type(v))
    data = obj.summary() if hasattr(obj, "summary") else asdict(obj)
    return json.dumps(data, indent=2, sort_keys=True, default=conv) + "\n"
