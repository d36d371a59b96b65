"""Teacher training, random symmetric projections, and student distillation.

Every protocol here is a sequence of stages run by :func:`run_schedule`:

* ``projected-correlation``: inner-layer steps on the loss
  -relu(W_s x + b_s) . g(x), with g a random projection of the teacher's
  hidden layer.
* ``projected-mse``: inner-layer steps on mean ||relu(W_s x + b_s) - g(x)||^2.
* ``output-inner``: inner-layer steps on the hinge loss against labels.
* ``full-output``: the terminal stage. It runs SGD on the output loss and
  keeps the checkpoint with the lowest evaluation loss.

Biases are never trained.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .boolean_fourier import MAX_ENUM_DIM, CapacityError, cube_points, majority_zeta, sign, threshold_correlation
from .mlp import TwoLayerMlp, blockwise, hinge_grads, relu, symmetric_init
from .parity_data import ParityTask, sample_points

LOSS_KINDS = ("projected-correlation", "projected-mse", "output-inner", "full-output")
_CHUNK = 8192


class ConfigError(ValueError):
    """Hyperparameters violate a required relation."""


# ----------------------------------------------------------------------------
# configuration


@dataclass
class TrainConfig:
    """Hyperparameters for one network's two-stage training.

    ``None`` rates fall back to the closed-form defaults (see ``resolve``).
    """

    eta1: float | None = None
    eta2: float | None = None
    lambda1: float | None = None
    B1: int = 65536
    B2: int = 1
    T1: int = 1
    T2: int = 1000
    epsilon: float = 0.1
    tau_g: float = 0.01
    delta: float = 0.01
    seed: int = 0
    exact_mode: bool = False
    strict_rates: bool = True
    # stage-1 estimator for teachers: "sampled" or "analytic" (population gradient, any d)
    stage1_estimator: str = "sampled"
    # rescale the stage-1 step so the new weights have this RMS (effective eta1 recorded)
    stage1_weight_rms: float | None = None
    # final stage also updates W (with this rate; None means eta2)
    stage2_train_inner: bool = False
    eta2_inner: float | None = None
    # "teacher": hard labels sign(f_t(x)); "task": true parity labels
    label_source: str = "teacher"
    # one-shot output loss: "hard" (hinge on sign f_t) or "soft" (MSE on f_t logits)
    oneshot_target: str = "hard"
    # projection target: pair each teacher neuron with its mirror (True) or use A @ hidden literally
    mirror_pairs: bool = True
    # second-stage loss for curriculum students: "projected-correlation" or "projected-mse"
    projected_loss: str = "projected-correlation"
    eval_size: int = 4096
    eval_every: int = 100
    precision: str = "float64"

    def __post_init__(self):
        for name in ("B1", "B2", "T1", "T2", "eval_size", "eval_every"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("eta1", "eta2", "lambda1", "eta2_inner", "stage1_weight_rms"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("epsilon", "tau_g", "delta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        choices = {
            "stage1_estimator": ("sampled", "analytic"),
            "label_source": ("teacher", "task"),
            "oneshot_target": ("hard", "soft"),
            "projected_loss": ("projected-correlation", "projected-mse"),
            "precision": ("float64", "float32"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    @classmethod
    def from_dict(cls, data: dict, path: str = "train") -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"{path}: unknown keys {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64


def teacher_eta1(m: int, k: int, d: int) -> float:
    """m / (k |zeta_{k-1}|); zeta taken from the exact majority spectrum on d bits."""
    z = majority_zeta(d, k - 1)
    if z == 0.0:
        raise ConfigError(f"zeta_{k - 1} vanishes on d={d} bits (k must be even)")
    return m / (k * abs(z))


def student_eta1(m_t: int) -> float:
    return math.sqrt(m_t)


def eta2_default(k: int, d: int, m: int, T2: int) -> float:
    """4 k^1.5 / (d m (T2 - 1))."""
    if T2 < 2:
        raise ConfigError("the default stage-2 rate needs T2 >= 2")
    return 4.0 * k**1.5 / (d * m * (T2 - 1))


def teacher_b1_bound(m: int, d: int, tau_g: float, delta: float) -> float:
    """tau_g^-2 log(m d / delta), constant taken as 1."""
    return math.log(m * d / delta) / tau_g**2


def student_b1_bound(k: int, d: int, m_t: int, delta: float) -> float:
    """(k d)^2 log(m_t d / delta), constant taken as 1."""
    return (k * d) ** 2 * math.log(m_t * d / delta)


@dataclass(frozen=True)
class ResolvedRates:
    eta1: float
    lambda1: float
    eta2: float
    eta2_inner: float


def resolve(config: TrainConfig, *, eta1_default: float, k: int, d: int, m: int) -> ResolvedRates:
    """Fill unset rates from the closed forms; in strict mode reject overrides."""
    eta1 = config.eta1 if config.eta1 is not None else eta1_default
    lam = config.lambda1 if config.lambda1 is not None else 1.0 / (2.0 * eta1)
    eta2 = config.eta2 if config.eta2 is not None else eta2_default(k, d, m, config.T2)
    if config.strict_rates:
        if config.T1 != 1:
            raise ConfigError("strict mode requires T1 = 1")
        if not math.isclose(eta1, eta1_default, rel_tol=1e-12):
            raise ConfigError(f"eta1 = {eta1} differs from the closed form {eta1_default}")
        if not math.isclose(lam, 1.0 / (2.0 * eta1), rel_tol=1e-12):
            raise ConfigError("strict mode requires lambda1 = 1 / (2 eta1)")
        if config.stage1_weight_rms is not None:
            raise ConfigError("stage1_weight_rms is an exploration override")
    inner = config.eta2_inner if config.eta2_inner is not None else eta2
    return ResolvedRates(eta1, lam, eta2, inner)


# ----------------------------------------------------------------------------
# traces


@dataclass
class TraceRecord:
    step: int
    stage: str
    samples_consumed: int
    eval_loss: float
    eval_accuracy: float
    wall_clock: float


@dataclass
class TrainingTrace:
    records: list[TraceRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, rec: TraceRecord) -> None:
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("trace steps must strictly increase")
        self.records.append(rec)

    @property
    def samples_consumed(self) -> int:
        return self.records[-1].samples_consumed if self.records else 0

    def grid(self) -> list[int]:
        return [r.samples_consumed for r in self.records]

    def final(self) -> TraceRecord:
        return self.records[-1]

    def csv_rows(self, run_id: str, method: str) -> list[list]:
        return [
            [run_id, method, r.stage, r.step, r.samples_consumed, repr(float(r.eval_loss)), repr(float(r.eval_accuracy))]
            for r in self.records
        ]


TRACE_COLUMNS = ["run_id", "method", "stage", "step", "samples_consumed", "eval_loss", "eval_accuracy"]


# ----------------------------------------------------------------------------
# helpers


def inner_step(W: np.ndarray, grad: np.ndarray, eta: float, lam: float) -> np.ndarray:
    """w <- w - eta (grad + lam * 2w).  With lam = 1/(2 eta) this is w <- -eta grad."""
    new = W - eta * (grad + lam * 2.0 * W)
    if math.isclose(2.0 * eta * lam, 1.0, rel_tol=1e-12):
        target = -eta * grad
        scale = max(float(np.abs(target).max(initial=0.0)), float(np.abs(W).max(initial=0.0)) * 1e-3, 1e-300)
        if not np.allclose(new, target, rtol=0.0, atol=1e-12 * scale):
            raise AssertionError("stage-1 assignment identity violated")
    return new


def evaluate(model: TwoLayerMlp, X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(mean hinge loss, accuracy with sign(0) = +1)."""
    f = model.forward(X)
    return float(np.maximum(0.0, 1.0 - f * y).mean()), float(np.mean(sign(f) == y))


def eval_set(task: ParityTask, config: TrainConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """The whole cube in exact mode, otherwise ``eval_size`` fresh samples."""
    X = cube_points(task.d) if config.exact_mode else sample_points(task.d, config.eval_size, rng)
    return X, task.label(X)


def teacher_labels(teacher: TwoLayerMlp) -> Callable[[np.ndarray], np.ndarray]:
    return lambda X: sign(teacher.forward(X))


def _check_exact(d: int) -> None:
    if d > MAX_ENUM_DIM:
        raise CapacityError(f"exact mode supports d <= {MAX_ENUM_DIM}, got d={d}")


def _batches(d: int, n: int, rng: np.random.Generator, exact: bool):
    """Chunks of a stage-1 sample: the whole cube in exact mode, else n random points."""
    if exact:
        _check_exact(d)
        total = 1 << d
        for s in range(0, total, _CHUNK):
            yield cube_points(d, s, min(total, s + _CHUNK))
    else:
        for s in range(0, n, _CHUNK):
            yield sample_points(d, min(_CHUNK, n - s), rng)


# ----------------------------------------------------------------------------
# projection


@dataclass(frozen=True)
class SymmetricProjection:
    """m_s x m_t matrix with entries +-1/m_t and A[:, i + m_t/2] = -A[:, i]."""

    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[1] % 2:
            raise ValueError("projection must be a 2-D array with an even number of columns")
        m_t = A.shape[1]
        if not np.all(np.abs(A) == 1.0 / m_t):
            raise ValueError(f"entries must have magnitude exactly 1/{m_t}")
        h = m_t // 2
        if not np.array_equal(A[:, h:], -A[:, :h]):
            raise ValueError("columns must pair antisymmetrically")
        object.__setattr__(self, "A", A)

    @property
    def m_s(self) -> int:
        return self.A.shape[0]

    @property
    def m_t(self) -> int:
        return self.A.shape[1]

    def __neg__(self) -> "SymmetricProjection":
        return SymmetricProjection(-self.A)


def sample_projection(m_t: int, m_s: int, rng: np.random.Generator) -> SymmetricProjection:
    if m_t % 2 or m_t < 2:
        raise ValueError(f"teacher width must be even, got {m_t}")
    if m_s < 1:
        raise ValueError("student width must be positive")
    half = (rng.integers(0, 2, size=(m_s, m_t // 2)).astype(float) * 2 - 1) / m_t
    return SymmetricProjection(np.hstack([half, -half]))


def projected_teacher_hidden(teacher: TwoLayerMlp, A, mirror: bool = True) -> Callable[[np.ndarray], np.ndarray]:
    """x -> (n, m_s) projection of the teacher's hidden layer.

    ``mirror=False`` computes A relu(W_t x + b_t) literally.  ``mirror=True``
    computes sum_{i <= m_t/2} A_{li} (relu(w_i.x + b_i) - relu(-w_i.x + b_i)),
    which equals the literal form whenever the teacher's second half mirrors
    the first (w' = -w).  It stays nonzero when stage 1 leaves the halves
    equal (w' = +w, even k), where the literal form is identically zero.
    """
    A = A.A if isinstance(A, SymmetricProjection) else np.asarray(A, dtype=float)
    if A.shape[1] != teacher.m:
        raise ValueError(f"projection has {A.shape[1]} columns, teacher has {teacher.m} neurons")
    if mirror:
        h = teacher.m // 2
        Wh, bh, Ah = teacher.W[:h], teacher.b[:h], A[:, :h].T.copy()

        def g(X):
            X = np.atleast_2d(np.asarray(X, dtype=float))

            def block(xs):
                Z = xs @ Wh.T
                return (relu(Z + bh) - relu(bh - Z)) @ Ah

            return blockwise(X, h, block)
    else:
        At = A.T.copy()

        def g(X):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            return blockwise(X, teacher.m, lambda xs: teacher.hidden(xs) @ At)

    return g


# ----------------------------------------------------------------------------
# stage-1 gradients


def hinge_inner_gradient(model: TwoLayerMlp, task: ParityTask, n: int, rng, exact: bool,
                         labels: Callable | None = None) -> tuple[np.ndarray, int]:
    """Mean hinge gradient in W over n samples (or the cube); returns (grad, samples)."""
    G = np.zeros_like(model.W)
    count = 0
    for X in _batches(model.d, n, rng, exact):
        y = task.label(X) if labels is None else labels(X)
        dW, _, _ = hinge_grads(model, X, y)
        G += dW * X.shape[0]
        count += X.shape[0]
    return G / count, count


def analytic_hinge_gradient(model: TwoLayerMlp, task: ParityTask) -> np.ndarray:
    """Population hinge gradient in W assuming every margin is active (|f| < 1).

    For w in {+-1}^d, E[chi_S(x) 1{w.x + b >= 0} x_j] = chi_S(w) w_j K(|S xor {j}|, b)
    with K(t, b) = E_u[chi_T(u) 1{sum u + b >= 0}], so no enumeration is needed.
    """
    W = model.W
    if not np.all(np.abs(W) == 1.0):
        raise ValueError("analytic gradient needs +-1 inner weights")
    d = model.d
    S = task.index
    chi = np.prod(W[:, S], axis=1)
    ins = task.in_support
    G = np.empty_like(W)
    for i in range(model.m):
        b = float(model.b[i])
        k_in = threshold_correlation(d, task.k - 1, b)
        k_out = threshold_correlation(d, task.k + 1, b)
        G[i] = -model.a[i] * chi[i] * W[i] * np.where(ins, k_in, k_out)
    return G


def distill_inner_gradient(student: TwoLayerMlp, target: Callable, n: int, rng, exact: bool,
                           kind: str = "projected-correlation") -> tuple[np.ndarray, int]:
    """Mean gradient in W_s of the projected loss over n samples (or the cube)."""
    G = np.zeros_like(student.W)
    count = 0
    for X in _batches(student.d, n, rng, exact):
        g = target(X)
        Z = X @ student.W.T + student.b
        if kind == "projected-correlation":
            G -= ((Z >= 0) * g).T @ X
        else:
            G += (2.0 * (relu(Z) - g) * (Z >= 0)).T @ X
        count += X.shape[0]
    return G / count, count


# ----------------------------------------------------------------------------
# schedules


@dataclass
class Stage:
    """One stage of a layer-wise schedule.

    kind: one of LOSS_KINDS.  steps: iteration count (0 = skipped).
    batch: samples per step (ignored by exact-mode inner stages, which use the cube).
    eta / weight_decay: inner-layer rate and decay.  weight_rms: optional rescaling of a
    single assignment step.  For ``full-output``: eta is the outer rate, eta_inner the
    inner rate (None = outer only), loss is "hinge" or "logit-mse".
    """

    kind: str
    steps: int
    batch: int
    eta: float
    weight_decay: float = 0.0
    weight_rms: float | None = None
    eta_inner: float | None = None
    loss: str = "hinge"
    layer: int = 1


@dataclass
class CurriculumSchedule:
    stages: list[Stage]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("schedule is empty")
        for s in self.stages:
            if s.kind not in LOSS_KINDS:
                raise ValueError(f"unknown stage kind {s.kind!r}")
            if s.steps < 0 or s.batch < 1:
                raise ValueError("stage steps must be >= 0 and batch >= 1")
            if s.loss not in ("hinge", "logit-mse"):
                raise ValueError(f"unknown output loss {s.loss!r}")
        full = [i for i, s in enumerate(self.stages) if s.kind == "full-output"]
        if full != [len(self.stages) - 1]:
            raise ValueError("a schedule needs exactly one full-output stage, placed last")

    def active(self) -> list[Stage]:
        """Stages with t > 0; the terminal stage always runs its evaluation."""
        return [s for s in self.stages[:-1] if s.steps > 0] + [self.stages[-1]]


def _assign_step(W, G, stage: Stage):
    """One decayed inner step, optionally with the rate chosen to hit a target RMS."""
    eta, lam = stage.eta, stage.weight_decay
    if stage.weight_rms is not None:
        rms = float(np.sqrt(np.mean(G**2)))
        if rms == 0.0:
            raise FloatingPointError("stage-1 gradient vanished; cannot rescale")
        eta = stage.weight_rms / rms
        lam = 1.0 / (2.0 * eta)
    return inner_step(W, G, eta, lam), eta, lam


def run_schedule(student: TwoLayerMlp, teacher: TwoLayerMlp | None, schedule: CurriculumSchedule,
                 config: TrainConfig, rng: np.random.Generator, task: ParityTask,
                 projection: SymmetricProjection | None = None) -> tuple[TwoLayerMlp, TrainingTrace]:
    """Run ``schedule`` on a copy of ``student``.

    Random streams: projection, inner stages, output stage, evaluation set are
    spawned from ``rng`` in that order regardless of which stages run, so arms
    that share a seed share their evaluation set and sample sources.
    """
    proj_rng, inner_rng, out_rng, eval_rng = rng.spawn(4)
    model = student.copy()
    trace = TrainingTrace(meta={"stage_rates": []})
    t0 = time.perf_counter()
    Xe, ye = eval_set(task, config, eval_rng)
    if teacher is not None and projection is None:
        projection = sample_projection(teacher.m, model.m, proj_rng)
    label_fn = teacher_labels(teacher) if (teacher is not None and config.label_source == "teacher") else task.label
    step, samples = 0, 0

    def record(stage_name):
        loss, acc = evaluate(model, Xe, ye)
        trace.add(TraceRecord(step, stage_name, samples, loss, acc, time.perf_counter() - t0))
        return loss

    record("init")
    for stage in schedule.active():
        if stage.kind in ("projected-correlation", "projected-mse"):
            if teacher is None:
                raise ValueError("projected stages need a teacher")
            target = projected_teacher_hidden(teacher, projection, mirror=config.mirror_pairs)
            for _ in range(stage.steps):
                G, n = distill_inner_gradient(model, target, stage.batch, inner_rng, config.exact_mode, stage.kind)
                model.W, eta, lam = _assign_step(model.W, G, stage)
                trace.meta["stage_rates"].append({"kind": stage.kind, "eta": eta, "lambda": lam})
                step += 1
                samples += n
                record(stage.kind)
        elif stage.kind == "output-inner":
            for _ in range(stage.steps):
                G, n = hinge_inner_gradient(model, task, stage.batch, inner_rng, config.exact_mode, labels=label_fn)
                model.W, eta, lam = _assign_step(model.W, G, stage)
                trace.meta["stage_rates"].append({"kind": stage.kind, "eta": eta, "lambda": lam})
                step += 1
                samples += n
                record(stage.kind)
        else:
            target_fn = None
            if stage.loss == "logit-mse":
                if teacher is None:
                    raise ValueError("logit regression needs a teacher")
                target_fn = teacher.forward
            model, step, samples = _output_stage(model, stage, config, out_rng, task, label_fn, target_fn,
                                                 Xe, ye, trace, step, samples, t0)
    trace.meta["total_samples"] = samples
    trace.meta["final_eval_loss"] = trace.meta.get("best_eval_loss", trace.final().eval_loss)
    return model, trace


def _output_stage(model, stage: Stage, config: TrainConfig, rng, task, label_fn, target_fn,
                  Xe, ye, trace: TrainingTrace, step: int, samples: int, t0: float):
    """SGD on the network output; returns the best evaluated checkpoint."""
    dt = config.dtype()
    W = model.W.astype(dt)
    b = model.b.astype(dt)
    a = model.a.astype(dt)
    B, T = stage.batch, stage.steps
    train_inner = stage.eta_inner is not None
    lr_a, lr_w = dt(stage.eta), dt(stage.eta_inner or 0.0)
    best_loss, best = math.inf, model.copy()
    steps_per_draw = max(1, (1 << 16) // B)
    pending = None
    for t in range(T):
        if pending is None or pending[2] >= pending[0].shape[0]:
            n = min(steps_per_draw, T - t) * B
            X = sample_points(task.d, n, rng)
            tgt = target_fn(X) if target_fn is not None else label_fn(X)
            pending = [X.astype(dt), np.asarray(tgt, dtype=dt), 0]
        s = pending[2]
        X, tgt = pending[0][s:s + B], pending[1][s:s + B]
        pending[2] = s + B
        Z = X @ W.T + b
        H = np.maximum(Z, 0)
        f = H @ a
        if target_fn is None:
            r = np.where(f * tgt < 1, -tgt, 0).astype(dt) / dt(B)
        else:
            r = (2 * (f - tgt) / B).astype(dt)
        ga = H.T @ r
        if train_inner:
            gW = ((Z >= 0) * np.outer(r, a)).T @ X
            W -= lr_w * gW
        a -= lr_a * ga
        step += 1
        samples += B
        if (t + 1) % config.eval_every == 0 or t == T - 1:
            model = TwoLayerMlp(W.astype(float), b.astype(float), a.astype(float))
            loss, acc = evaluate(model, Xe, ye)
            trace.add(TraceRecord(step, "full-output", samples, loss, acc, time.perf_counter() - t0))
            if loss < best_loss:
                best_loss, best = loss, model.copy()
                trace.meta["selected_step"] = step
                trace.meta["best_eval_loss"] = loss
                trace.meta["best_eval_accuracy"] = acc
    if T == 0:
        loss, acc = evaluate(model, Xe, ye)
        trace.meta.update(selected_step=step, best_eval_loss=loss, best_eval_accuracy=acc)
    if not math.isfinite(best_loss) and T > 0:
        raise FloatingPointError("output stage diverged")
    return best, step, samples


# ----------------------------------------------------------------------------
# protocols


def teacher_stage1(task: ParityTask, m_t: int, config: TrainConfig,
                   rng: np.random.Generator) -> tuple[TwoLayerMlp, dict]:
    """Symmetric init followed by T1 decayed inner steps on the hinge loss."""
    init_rng, data_rng = rng.spawn(2)
    model = symmetric_init(m_t, task.d, task.k, init_rng)
    if config.exact_mode:
        _check_exact(task.d)
    rates = resolve(config, eta1_default=teacher_eta1(m_t, task.k, task.d), k=task.k, d=task.d, m=m_t)
    if config.strict_rates and not config.exact_mode and config.stage1_estimator == "sampled":
        bound = teacher_b1_bound(m_t, task.d, config.tau_g, config.delta)
        if config.B1 < bound:
            raise ConfigError(f"B1 = {config.B1} is below the concentration bound {bound:.0f}")
    stage = Stage("output-inner", config.T1, config.B1, rates.eta1, rates.lambda1, config.stage1_weight_rms)
    samples = 0
    info = {"rates": dataclasses.asdict(rates), "stage1_estimator": config.stage1_estimator}
    for _ in range(config.T1):
        if config.stage1_estimator == "analytic":
            G, n = analytic_hinge_gradient(model, task), 0
        else:
            G, n = hinge_inner_gradient(model, task, config.B1, data_rng, config.exact_mode)
        model.W, eta, lam = _assign_step(model.W, G, stage)
        info["effective_eta1"], info["effective_lambda1"] = eta, lam
        samples += n
    info["stage1_samples"] = samples
    return model, info


def train_teacher(task: ParityTask, m_t: int, config: TrainConfig,
                  rng: np.random.Generator) -> tuple[TwoLayerMlp, TrainingTrace]:
    """Stage 1 (one inner step), then outer-layer hinge SGD with best-checkpoint selection."""
    s1_rng, s2_rng = rng.spawn(2)
    model, info = teacher_stage1(task, m_t, config, s1_rng)
    rates = resolve(config, eta1_default=teacher_eta1(m_t, task.k, task.d), k=task.k, d=task.d, m=m_t)
    out = Stage("full-output", config.T2, config.B2, rates.eta2,
                eta_inner=rates.eta2_inner if config.stage2_train_inner else None)
    cfg = dataclasses.replace(config, label_source="task")
    best, trace = run_schedule(model, None, CurriculumSchedule([out]), cfg, s2_rng, task)
    # stage-1 samples precede the output stage in the budget
    n1 = info["stage1_samples"]
    for r in trace.records:
        r.samples_consumed += n1
    trace.meta.update(info)
    trace.meta["total_samples"] = trace.meta["total_samples"] + n1
    trace.meta["reached_epsilon"] = trace.meta["best_eval_loss"] <= config.epsilon
    return best, trace


def curriculum_schedule(config: TrainConfig, rates: ResolvedRates, stage1_only: bool = False) -> CurriculumSchedule:
    return CurriculumSchedule([
        Stage(config.projected_loss, config.T1, config.B1, rates.eta1, rates.lambda1, config.stage1_weight_rms),
        Stage("full-output", 0 if stage1_only else config.T2, config.B2, rates.eta2,
              eta_inner=rates.eta2_inner if config.stage2_train_inner else None),
    ])


def oneshot_schedule(config: TrainConfig, rates: ResolvedRates, stage1_only: bool = False) -> CurriculumSchedule:
    loss = "logit-mse" if config.oneshot_target == "soft" else "hinge"
    return CurriculumSchedule([
        Stage("output-inner", config.T1, config.B1, rates.eta1, rates.lambda1, config.stage1_weight_rms),
        Stage("full-output", 0 if stage1_only else config.T2, config.B2, rates.eta2,
              eta_inner=rates.eta2_inner if config.stage2_train_inner else None, loss=loss),
    ])


def _student_rates(task, teacher, m_s, config, projection) -> ResolvedRates:
    if projection is not None and (projection.m_t != teacher.m or projection.m_s != m_s):
        raise ValueError(f"projection is {projection.m_s}x{projection.m_t}, need {m_s}x{teacher.m}")
    if config.exact_mode:
        _check_exact(task.d)
    rates = resolve(config, eta1_default=student_eta1(teacher.m), k=task.k, d=task.d, m=m_s)
    if config.strict_rates and not config.exact_mode:
        bound = student_b1_bound(task.k, task.d, teacher.m, config.delta)
        if config.B1 < bound:
            raise ConfigError(f"B1 = {config.B1} is below the student bound {bound:.0f}")
    return rates


def train_student_curriculum(task: ParityTask, teacher: TwoLayerMlp, m_s: int, config: TrainConfig,
                             rng: np.random.Generator, projection: SymmetricProjection | None = None,
                             stage1_only: bool = False) -> tuple[TwoLayerMlp, TrainingTrace]:
    """Projected first-layer step(s), then the full-output stage.

    ``stage1_only`` skips the output stage and returns the first-stage weights
    that a full run with the same rng would start from.
    """
    rates = _student_rates(task, teacher, m_s, config, projection)
    init_rng, run_rng = rng.spawn(2)
    student = symmetric_init(m_s, task.d, task.k, init_rng)
    model, trace = run_schedule(student, teacher, curriculum_schedule(config, rates, stage1_only), config, run_rng,
                                task, projection)
    trace.meta["method"] = "curriculum"
    return model, trace


def train_student_oneshot(task: ParityTask, teacher: TwoLayerMlp, m_s: int, config: TrainConfig,
                          rng: np.random.Generator, stage1_only: bool = False) -> tuple[TwoLayerMlp, TrainingTrace]:
    """Same two-stage structure, supervised only by the teacher's output."""
    rates = _student_rates(task, teacher, m_s, dataclasses.replace(config, strict_rates=False), None)
    init_rng, run_rng = rng.spawn(2)
    student = symmetric_init(m_s, task.d, task.k, init_rng)
    model, trace = run_schedule(student, teacher, oneshot_schedule(config, rates, stage1_only), config, run_rng, task)
    trace.meta["method"] = "oneshot"
    return model, trace


def run_stream(seed: int, name: str) -> np.random.Generator:
    """Generator for a named purpose under a global seed."""
    key = int.from_bytes(name.encode("utf-8")[:8].ljust(8, b"\0"), "little")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def stage_names(trace: TrainingTrace) -> Sequence[str]:
    return [r.stage for r in trace.records]
