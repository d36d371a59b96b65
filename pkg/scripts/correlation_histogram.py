"""Histogram of projected-teacher correlations E[(A f_t)_l(x) x_j], split by support membership."""

import argparse
from pathlib import Path

import numpy as np

from parity_distill.diagnostics import correlation_report, weight_gap
from parity_distill.distill import TrainConfig, run_stream, sample_projection, teacher_stage1
from parity_distill.parity_data import ParityTask


def bar(n, peak, width=30):
    return "#" * int(round(width * n / peak)) if peak else ""


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--m-t", type=int, default=4096)
    p.add_argument("--rows", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/correlation")
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    task = ParityTask(args.d, args.k)
    teacher, _ = teacher_stage1(task, args.m_t, TrainConfig(exact_mode=True), run_stream(args.seed, "teacher"))
    A = sample_projection(args.m_t, args.rows, run_stream(args.seed, "diagnostic-projection"))
    rep = correlation_report(teacher, A, task)
    rep.histogram_csv(out / "correlation_hist.csv")
    rep.summary_json(out / "correlation.json")

    peak = max(rep.hist_in.max(), rep.hist_out.max())
    print(f"{'bin centre':>11}  {'in-support':<32}{'out-of-support'}")
    for i in range(len(rep.hist_in)):
        c = 0.5 * (rep.hist_edges[i] + rep.hist_edges[i + 1])
        print(f"{c:>11.2e}  {bar(rep.hist_in[i], peak):<32}{bar(rep.hist_out[i], peak)}")
    print(f"dispersion in {rep.in_dispersion:.3e}  out {rep.out_dispersion:.3e}  ratio {rep.dispersion_ratio:.3f}")
    print(f"teacher weight gap ratio {weight_gap(teacher, task).gap_ratio:.3f}")
    print(f"wrote {out / 'correlation_hist.csv'}")


if __name__ == "__main__":
    np.set_printoptions(precision=4)
    main()
