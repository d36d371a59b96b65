"""Config-driven experiment runs that write result bundles.

A bundle directory holds the config snapshot, CSV traces and reports,
checkpoints, and ``manifest.json``.  The manifest lists every file with its
sha256 and carries no timestamps, so identical configs give identical bundles.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from . import __version__
from .boolean_fourier import MAX_ENUM_DIM, set_num_workers
from .diagnostics import (baseline_flags, concentration_curve, correlation_report, gradient_decomposition,
                          majority_mean, support_recovery_score, weight_gap)
from .distill import (TRACE_COLUMNS, ConfigError, TrainConfig, eta2_default, run_stream, sample_projection,
                      student_b1_bound, student_eta1, teacher_b1_bound, teacher_eta1, teacher_stage1,
                      train_student_curriculum, train_student_oneshot, train_teacher)
from .mlp import save_checkpoint, symmetric_init
from .parity_data import ParityTask
from .pcfg import cfg3b, format_masked, length_percentiles, mask_sequence, sample_corpus, write_corpus

KINDS = ("teacher", "curriculum", "oneshot", "compare", "diagnostics", "pcfg")
REFERENCE_TEACHER_WIDTH = 50_000


@dataclass
class DiagnosticsSettings:
    projection_rows: int = 200
    concentration_batches: list = field(default_factory=lambda: [2**p for p in range(10, 19)])
    concentration_repeats: int = 20


@dataclass
class PcfgSettings:
    n: int = 100_000
    mask_fraction: float = 0.30
    write_corpus: bool = True
    masked_sentences: int = 1000


@dataclass
class ExperimentConfig:
    kind: str
    run_id: str = "run"
    seed: int = 0
    seeds: list | None = None
    task: dict = field(default_factory=lambda: {"d": 16, "k": 4})
    m_t: int = 4096
    m_s: int = 100
    teacher: TrainConfig = field(default_factory=TrainConfig)
    student: TrainConfig = field(default_factory=TrainConfig)
    diagnostics: DiagnosticsSettings = field(default_factory=DiagnosticsSettings)
    pcfg: PcfgSettings = field(default_factory=PcfgSettings)
    out: str | None = None
    threads: int = 1
    acknowledged_deviations: list = field(default_factory=list)

    def seed_list(self) -> list[int]:
        return [int(s) for s in self.seeds] if self.seeds else [int(self.seed)]

    def parity_task(self) -> ParityTask:
        try:
            return ParityTask.from_config(self.task)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"task: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _strict(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(data: dict) -> ExperimentConfig:
    """Build a config from plain JSON data; unknown keys anywhere are errors."""
    data = dict(data)
    nested = {"teacher": TrainConfig, "student": TrainConfig, "diagnostics": DiagnosticsSettings, "pcfg": PcfgSettings}
    parts = {}
    for key, cls in nested.items():
        if key in data:
            parts[key] = _strict(cls, data.pop(key), key)
    cfg = _strict(ExperimentConfig, data, "config")
    for key, val in parts.items():
        setattr(cfg, key, val)
    if cfg.kind not in KINDS:
        raise ConfigError(f"config.kind: must be one of {KINDS}")
    task_keys = {"d", "k", "support", "seed"}
    if not isinstance(cfg.task, dict) or set(cfg.task) - task_keys:
        raise ConfigError(f"task: allowed keys are {sorted(task_keys)}")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(data)


# ----------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Finding:
    level: str  # "error" or "warning"
    path: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.path}: {self.message}"


def _rate_findings(cfg: TrainConfig, path: str, eta1_ref: float, k: int, d: int, m: int,
                   b1_ref: float | None, acknowledged: set) -> list[Finding]:
    """Departures from the closed-form relations: errors in strict mode, else warnings."""
    notes = []
    eta1 = cfg.eta1 if cfg.eta1 is not None else eta1_ref
    lam = cfg.lambda1 if cfg.lambda1 is not None else 1.0 / (2.0 * eta1)
    if cfg.eta1 is not None and not math.isclose(cfg.eta1, eta1_ref, rel_tol=1e-12):
        notes.append(("eta1", f"eta1 = {cfg.eta1} differs from the closed form {eta1_ref:.6g}"))
    if not math.isclose(lam, 1.0 / (2.0 * eta1), rel_tol=1e-12):
        notes.append(("lambda1", f"lambda1 = {lam} is not 1/(2 eta1) = {1 / (2 * eta1):.6g}"))
    if cfg.T1 != 1:
        notes.append(("T1", "more than one stage-1 step"))
    if cfg.stage1_weight_rms is not None:
        notes.append(("stage1_weight_rms", "stage-1 rate rescaled to a target weight RMS"))
    if cfg.T2 >= 2 and cfg.eta2 is not None and not math.isclose(cfg.eta2, eta2_default(k, d, m, cfg.T2), rel_tol=1e-12):
        notes.append(("eta2", f"eta2 = {cfg.eta2} differs from the closed form {eta2_default(k, d, m, cfg.T2):.3g}"))
    if cfg.T2 < 2 and cfg.eta2 is None:
        notes.append(("T2", "the default stage-2 rate needs T2 >= 2"))
    if cfg.stage1_estimator == "analytic":
        notes.append(("stage1_estimator", "population stage-1 gradient instead of sampling"))
    if cfg.stage2_train_inner:
        notes.append(("stage2_train_inner", "output stage also trains the inner layer"))
    if b1_ref is not None and not cfg.exact_mode and cfg.stage1_estimator == "sampled" and cfg.B1 < b1_ref:
        notes.append(("B1", f"B1 = {cfg.B1} is below the lower bound {b1_ref:.3g}"))
    out = []
    for key, msg in notes:
        full = f"{path}.{key}"
        if cfg.strict_rates and key != "T2":
            out.append(Finding("error", full, msg))
        elif key == "T2" or full not in acknowledged:
            out.append(Finding("error" if key == "T2" else "warning", full, msg))
    return out


def validate(config: ExperimentConfig) -> list[Finding]:
    """Schema-level and hyperparameter checks.  An empty list means ready to run."""
    found: list[Finding] = []
    ack = set(config.acknowledged_deviations)
    if config.threads < 1:
        found.append(Finding("error", "config.threads", "must be >= 1"))
    if config.kind == "pcfg":
        if config.pcfg.n < 100:
            found.append(Finding("error", "pcfg.n", "need at least 100 sentences"))
        if not 0 < config.pcfg.mask_fraction < 1:
            found.append(Finding("error", "pcfg.mask_fraction", "must lie in (0, 1)"))
        return found
    try:
        task = config.parity_task()
    except ConfigError as exc:
        return found + [Finding("error", "task", str(exc))]
    for name in ("m_t", "m_s"):
        m = getattr(config, name)
        if m < 2 or m % 2:
            found.append(Finding("error", f"config.{name}", "width must be even and >= 2"))
    if found:
        return found
    for role in ("teacher", "student"):
        tc: TrainConfig = getattr(config, role)
        if tc.exact_mode and task.d > MAX_ENUM_DIM:
            found.append(Finding("error", f"{role}.exact_mode",
                                 f"capacity: exact enumeration supports d <= {MAX_ENUM_DIM}, got d={task.d}"))
    if any(f.level == "error" for f in found):
        return found
    k, d = task.k, task.d
    tc = config.teacher
    try:
        eta_t = teacher_eta1(config.m_t, k, d)
    except ConfigError as exc:
        found.append(Finding("error", "task.k", str(exc)))
        return found
    found += _rate_findings(tc, "teacher", eta_t, k, d, config.m_t,
                            teacher_b1_bound(config.m_t, d, tc.tau_g, tc.delta), ack)
    if config.kind in ("curriculum", "oneshot", "compare", "diagnostics"):
        sc = config.student
        found += _rate_findings(sc, "student", student_eta1(config.m_t), k, d, config.m_s,
                                student_b1_bound(k, d, config.m_t, sc.delta), ack)
    if config.kind == "diagnostics" and not config.teacher.exact_mode:
        found.append(Finding("error", "teacher.exact_mode", "diagnostics need exact mode"))
    return found


# ----------------------------------------------------------------------------
# bundles


@dataclass
class ResultBundle:
    out_dir: Path
    manifest: dict
    summary: dict = field(default_factory=dict)

    def path(self, name: str) -> Path:
        return self.out_dir / name


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: Path, data) -> None:
    def conv(v):
        if isinstance(v, (np.floating, np.integer, np.bool_)):
            return v.item()
        if isinstance(v, np.ndarray):
            return v.tolist()
        raise TypeError(type(v))

    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=conv) + "\n", encoding="utf-8", newline="\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def fingerprint(config: ExperimentConfig) -> dict:
    precisions = sorted({config.teacher.precision, config.student.precision})
    return {
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python": platform.python_version(),
        "precision": precisions,
    }


def write_manifest(out: Path, config: ExperimentConfig, status: str, error: str | None = None) -> dict:
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out).as_posix()] = sha256_file(p)
    manifest = {
        "run_id": config.run_id,
        "kind": config.kind,
        "seeds": config.seed_list(),
        "status": status,
        "environment": fingerprint(config),
        "files": files,
    }
    if error:
        manifest["error"] = error
    _write_json(out / "manifest.json", manifest)
    return manifest


def verify_bundle(out_dir) -> list[str]:
    """Files whose hashes do not match the manifest (or are missing)."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    bad = []
    for name, digest in manifest["files"].items():
        p = out / name
        if not p.is_file() or sha256_file(p) != digest:
            bad.append(name)
    return bad


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def run(config: ExperimentConfig, out_dir=None, threads: int | None = None) -> ResultBundle:
    """Validate, execute the requested pipeline, and write a bundle."""
    errors = [f for f in validate(config) if f.level == "error"]
    if errors:
        raise ConfigError("; ".join(map(str, errors)))
    out = Path(out_dir or config.out or f"results/{config.run_id}")
    out.mkdir(parents=True, exist_ok=True)
    set_num_workers(threads or config.threads)
    _write_json(out / "config.json", config.to_dict())
    runner = {
        "teacher": _run_teacher,
        "curriculum": _run_student,
        "oneshot": _run_student,
        "compare": _run_compare,
        "diagnostics": _run_diagnostics,
        "pcfg": _run_pcfg,
    }[config.kind]
    try:
        summary = runner(config, out)
    except Exception as exc:
        write_manifest(out, config, "failed", f"{type(exc).__name__}: {exc}")
        raise
    summary["scale"] = {"m_t": config.m_t, "reference_m_t": REFERENCE_TEACHER_WIDTH}
    _write_json(out / "summary.json", summary)
    manifest = write_manifest(out, config, "complete")
    return ResultBundle(out, manifest, summary)


def _teacher(config: ExperimentConfig, task: ParityTask, seed: int, out: Path):
    t0 = time.perf_counter()
    teacher, trace = train_teacher(task, config.m_t, config.teacher, run_stream(seed, "teacher"))
    save_checkpoint(teacher, out / f"teacher_seed{seed}.txt")
    _log(f"[seed {seed}] teacher accuracy {trace.meta['best_eval_accuracy']:.4f} "
         f"({time.perf_counter() - t0:.1f}s)")
    info = {
        "eval_accuracy": trace.meta["best_eval_accuracy"],
        "eval_loss": trace.meta["best_eval_loss"],
        "selected_step": trace.meta["selected_step"],
        "samples": trace.meta["total_samples"],
        "reached_epsilon": trace.meta["reached_epsilon"],
        "effective_eta1": trace.meta["effective_eta1"],
    }
    return teacher, trace, info


def _run_teacher(config, out):
    task = config.parity_task()
    rows, summary = [], {"seeds": {}}
    for seed in config.seed_list():
        _, trace, info = _teacher(config, task, seed, out)
        rows += trace.csv_rows(f"{config.run_id}-s{seed}", "teacher")
        summary["seeds"][str(seed)] = {"teacher": info}
    _write_csv(out / "trace.csv", TRACE_COLUMNS, rows)
    return summary


def _student_arm(method, config, task, teacher, seed):
    fn = train_student_curriculum if method == "curriculum" else train_student_oneshot
    t0 = time.perf_counter()
    model, trace = fn(task, teacher, config.m_s, config.student, run_stream(seed, "student"))
    _log(f"[seed {seed}] {method} accuracy {trace.meta['best_eval_accuracy']:.4f} "
         f"({time.perf_counter() - t0:.1f}s)")
    return model, trace


def _arm_summary(trace) -> dict:
    return {
        "best_eval_accuracy": trace.meta["best_eval_accuracy"],
        "best_eval_loss": trace.meta["best_eval_loss"],
        "final_eval_accuracy": trace.final().eval_accuracy,
        "selected_step": trace.meta["selected_step"],
        "total_samples": trace.meta["total_samples"],
        "stage_rates": trace.meta["stage_rates"],
    }


def _run_student(config, out):
    task = config.parity_task()
    rows, summary = [], {"seeds": {}}
    for seed in config.seed_list():
        teacher, _, tinfo = _teacher(config, task, seed, out)
        model, trace = _student_arm(config.kind, config, task, teacher, seed)
        save_checkpoint(model, out / f"{config.kind}_seed{seed}.txt")
        rows += trace.csv_rows(f"{config.run_id}-s{seed}", config.kind)
        summary["seeds"][str(seed)] = {"teacher": tinfo, config.kind: _arm_summary(trace)}
    _write_csv(out / "trace.csv", TRACE_COLUMNS, rows)
    return summary


def _run_compare(config, out):
    """Both arms per seed share one teacher, one student init, and one evaluation set."""
    task = config.parity_task()
    rows, summary = [], {"seeds": {}}
    for seed in config.seed_list():
        teacher, _, tinfo = _teacher(config, task, seed, out)
        arms = {}
        for method in ("curriculum", "oneshot"):
            model, trace = _student_arm(method, config, task, teacher, seed)
            save_checkpoint(model, out / f"{method}_seed{seed}.txt")
            rows += trace.csv_rows(f"{config.run_id}-s{seed}", method)
            arms[method] = trace
        if arms["curriculum"].grid() != arms["oneshot"].grid():
            raise RuntimeError("arms consumed different sample budgets")
        entry = {"teacher": tinfo}
        entry.update({m: _arm_summary(t) for m, t in arms.items()})
        entry["accuracy_gap"] = (entry["curriculum"]["best_eval_accuracy"]
                                 - entry["oneshot"]["best_eval_accuracy"])
        summary["seeds"][str(seed)] = entry
    _write_csv(out / "compare.csv", TRACE_COLUMNS, rows)
    return summary


def _run_diagnostics(config, out):
    """Exact-mode mechanism reports for each seed."""
    task = config.parity_task()
    opts = config.diagnostics
    summary = {"seeds": {}}
    for seed in config.seed_list():
        teacher, info = teacher_stage1(task, config.m_t, config.teacher, run_stream(seed, "teacher"))
        gap = weight_gap(teacher, task)
        A = sample_projection(config.m_t, opts.projection_rows, run_stream(seed, "diagnostic-projection"))
        corr = correlation_report(teacher, A, task, "exact", mirror=config.student.mirror_pairs)
        corr.histogram_csv(out / f"correlation_hist_seed{seed}.csv")
        corr.summary_json(out / f"correlation_seed{seed}.json")
        student = symmetric_init(config.m_s, task.d, task.k, run_stream(seed, "diagnostic-student"))
        A_s = sample_projection(config.m_t, config.m_s, run_stream(seed, "diagnostic-student-projection"))
        dec = gradient_decomposition(student, teacher, A_s, task, "exact", mirror=config.student.mirror_pairs)
        # estimator under test: one coordinate of the student's stage-1 hinge gradient at init
        wi, bi, ai, j = student.W[0], float(student.b[0]), float(student.a[0]), int(task.index[0])

        def stat(X):
            return -ai * task.label(X) * (X @ wi + bi >= 0) * X[:, j]

        conc = concentration_curve(stat, task.d, opts.concentration_batches, opts.concentration_repeats,
                                   run_stream(seed, "diagnostic-concentration"))
        _write_csv(out / f"concentration_seed{seed}.csv", ["batch_size", "mean_abs_error"],
                   [[b, repr(e)] for b, e in conc.rows()])
        cur, _ = train_student_curriculum(task, teacher, config.m_s, config.student,
                                          run_stream(seed, "student"), stage1_only=True)
        one, _ = train_student_oneshot(task, teacher, config.m_s, config.student,
                                       run_stream(seed, "student"), stage1_only=True)
        summary["seeds"][str(seed)] = {
            "stage1": info,
            "weight_gap": gap.summary(),
            "correlation": {k: v for k, v in corr.summary().items()
                            if k in ("in_dispersion", "out_dispersion", "dispersion_ratio", "min_sigma_in", "max_sigma_out")},
            "baseline_flags": baseline_flags(corr, task, config.m_t),
            "decomposition": dec.summary(),
            "majority_mean_student_neuron0": majority_mean(student.W[0]),
            "concentration": {"slope": conc.slope, "violations": conc.monotone_violations()},
            "support_recovery": {"init": support_recovery_score(student, task),
                                 "curriculum_stage1": support_recovery_score(cur, task),
                                 "oneshot_stage1": support_recovery_score(one, task)},
        }
    return summary


def _run_pcfg(config, out):
    opts = config.pcfg
    g = cfg3b()
    seed = config.seed_list()[0]
    pct = length_percentiles(g, opts.n, run_stream(seed, "pcfg-lengths"))
    summary = {"grammar": g.name, "n": opts.n, "percentiles": dict(zip(("p25", "p50", "p75", "p95"), pct))}
    if opts.write_corpus:
        sents, _, depths = sample_corpus(g, opts.n, run_stream(seed, "pcfg-corpus"))
        lengths = np.array([len(s) for s in sents])
        meta = {"grammar": g.name, "seed": seed, "sentences": len(sents), "tokens": int(lengths.sum())}
        write_corpus(out / "corpus.txt", sents, meta)
        summary["corpus_percentiles"] = dict(zip(("p25", "p50", "p75", "p95"),
                                                 (float(v) for v in np.percentile(lengths, [25, 50, 75, 95]))))
        summary["corpus_depths"] = sorted({int(x) for x in depths})
        rng = run_stream(seed, "pcfg-mask")
        selected = positions = 0
        counts = np.zeros(3, dtype=np.int64)
        with open(out / "masked.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for s in sents[:opts.masked_sentences]:
                m = mask_sequence(s, opts.mask_fraction, rng)
                fh.write(format_masked(m) + "\n")
                positions += s.size
                selected += m.positions.size
                counts += np.bincount(m.kinds, minlength=3)
        kinds = counts / max(selected, 1)
        summary["masking"] = {"positions": positions, "selected_fraction": selected / max(positions, 1),
                              "kind_split": dict(zip(("mask", "random", "unchanged"), kinds.tolist()))}
    return summary


def report(out_dir) -> dict:
    """Summary of a finished bundle, with hash verification."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    summary_path = out / "summary.json"
    summary = json.loads(summary_path.read_text(encoding="utf-8")) if summary_path.exists() else {}
    return {"manifest": manifest, "summary": summary, "corrupted": verify_bundle(out)}

