"""Per-subject two-stage slope versus the pooled group fit under UD."""

import argparse

import numpy as np

from adaptive_bias.sim import ScenarioConfig
from adaptive_bias.study import run_replications

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--R", type=int, default=200)
    p.add_argument("--N", type=int, default=25)
    p.add_argument("--T", type=int, default=25)
    a = p.parse_args()
    cfg = ScenarioConfig(scheme="UD", N=a.N, T=a.T, R=a.R)
    table = run_replications(cfg, ["logistic", "two_stage"])
    for est in ("logistic", "two_stage"):
        b, ok = table.column(est, "b")
        b = b[ok & np.isfinite(b)]
        print(f"{est:>10}: mean slope {b.mean():9.3f}  relBias {(b.mean() - cfg.b) / cfg.b:+.3f}  "
              f"({b.size}/{a.R} usable)")
