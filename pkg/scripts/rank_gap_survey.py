"""Measure the Weyl-operator singular value gap on the golden corpus.

For each metric, prints the modal kernel rank and the ratio between the
largest singular value that is treated as zero and the smallest that is not.
Used to pick the relative rank threshold and its ambiguity band.
"""

import argparse
from dataclasses import dataclass

import numpy as np

from weylscope.corpus import GOLDEN
from weylscope.curvature import curvature_at
from weylscope.frame import TOL_RANK, _weyl_svd, decide_rank, sample_points


@dataclass
class Config:
    samples: int = 20
    seed: int = 42


def survey(name: str, cfg: Config):
    defn = GOLDEN[name]()
    zero, live, ranks = [], [], []
    for p in sample_points(defn, cfg.samples, cfg.seed):
        _, s, _, scale = _weyl_svd(curvature_at(defn, p))
        smax = max(float(s.max()), 1e-300)
        ranks.append(int(decide_rank(s, scale)[0]))
        rel = np.sort(s / smax)
        below = rel[rel <= TOL_RANK]
        above = rel[rel > TOL_RANK]
        if below.size:
            zero.append(float(below.max()))
        if above.size:
            live.append(float(above.min()))
    k = int(np.bincount(ranks).argmax())
    return k, max(zero, default=0.0), min(live, default=float("nan"))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=Config.samples)
    ap.add_argument("--seed", type=int, default=Config.seed)
    cfg = Config(**vars(ap.parse_args()))
    print(f"{'metric':<28s} {'kernel':>6s} {'max zero s/smax':>16s} {'min live s/smax':>16s}")
    for name in sorted(GOLDEN):
        k, z, lv = survey(name, cfg)
        print(f"{name:<28s} {k:>6d} {z:>16.2e} {lv:>16.2e}")


if __name__ == "__main__":
    main()
