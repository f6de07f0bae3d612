"""Scan the n-copy non-distillability value of the Werner family over beta.

    python scripts/werner_beta_scan.py --d 3 --n 1 --start 1.0 --stop 1.6 --step 0.05
    python scripts/werner_beta_scan.py --d 3 --n 2 --starts 256   # 81 x 81, slow
"""

import argparse
import sys
from dataclasses import asdict, dataclass

import numpy as np

from entworkbench.io import csv_text, write_text
from entworkbench.nppt import beta_threshold_scan
from entworkbench.productopt import OptConfig


@dataclass
class ScanConfig:
    d: int = 3
    n: int = 1
    start: float = 1.0
    stop: float = 1.6
    step: float = 0.05
    starts: int = 32
    seed: int = 0
    output: str | None = None


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, val in asdict(ScanConfig()).items():
        p.add_argument(f"--{name}", type=type(val) if val is not None else str, default=val)
    cfg = ScanConfig(**vars(p.parse_args(argv)))
    grid = np.round(np.arange(cfg.start, cfg.stop + cfg.step / 2, cfg.step), 10)
    scan = beta_threshold_scan(cfg.d, cfg.n, grid, OptConfig(n_starts=cfg.starts, seed=cfg.seed), allow_large=True)
    write_text(cfg.output, csv_text(["beta", "value", "converged", "starts"], scan.rows))
    print(f"beta_star={scan.beta_star} bracket={scan.bracket}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
