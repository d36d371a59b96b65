"""cfg3b sentence-length percentiles and masking statistics."""

import argparse
import time

import numpy as np

from parity_distill.distill import run_stream
from parity_distill.pcfg import cfg3b, length_percentiles, mask_sequence, sample_corpus


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask-positions", type=int, default=1_000_000)
    args = p.parse_args()

    g = cfg3b()
    t0 = time.perf_counter()
    pct = length_percentiles(g, args.n, run_stream(args.seed, "pcfg-lengths"))
    print(f"length percentiles over {args.n} sentences (p25 p50 p75 p95): {pct}  "
          f"[{time.perf_counter() - t0:.1f}s]")

    sents, _, depths = sample_corpus(g, min(args.n, 20_000), run_stream(args.seed, "pcfg-corpus"))
    lengths = np.array([len(s) for s in sents])
    print(f"sampled corpus: {len(sents)} sentences, mean length {lengths.mean():.1f}, "
          f"depths {sorted(set(depths.tolist()))}")

    rng = run_stream(args.seed, "masking")
    m = mask_sequence(rng.integers(1, 4, size=args.mask_positions), 0.30, rng)
    split = np.bincount(m.kinds, minlength=3) / m.kinds.size
    print(f"masking: selected {m.positions.size / args.mask_positions:.4f}, "
          f"mask/random/unchanged = {split[0]:.4f}/{split[1]:.4f}/{split[2]:.4f}")


if __name__ == "__main__":
    main()
