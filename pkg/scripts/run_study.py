"""Run the full simulation grid and write summary and plot CSVs.

    python scripts/run_study.py --out results/ --threads 4
"""

import argparse
import sys
from pathlib import Path

from adaptive_bias.cli import main

HERE = Path(__file__).resolve().parent

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", default=str(HERE / "configs" / "table2.ini"))
    p.add_argument("--out", default="results")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int)
    a = p.parse_args()
    argv = ["study", "--config", a.config, "--out", a.out, "--threads", str(a.threads), "--verbose"]
    if a.seed is not None:
        argv += ["--seed", str(a.seed)]
    sys.exit(main(argv))
