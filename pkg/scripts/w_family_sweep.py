"""Classify the three-qubit family p |W><W| + (1 - p) I/8 along p.

Prints one CSV row per grid point: the lower class bound, the W_W value,
the best fidelity-witness value and the smallest partial-transpose eigenvalue.
"""

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from entworkbench.io import csv_text, write_text
from entworkbench.tripartite import classify, w_family_state


@dataclass
class SweepConfig:
    points: int = 101
    output: str | None = None


def sweep(cfg: SweepConfig) -> list[dict]:
    rows = []
    for p in np.linspace(0, 1, cfg.points):
        ev = classify(w_family_state(float(p)))
        rows.append({"p": float(p), "class_lower": ev.class_lower, "W_W": ev.values["W_W"],
                     "best_hit": min((h["value"] for h in ev.hits), default=float("nan")),
                     "pt_min": min(ev.pt_min)})
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=SweepConfig.points)
    ap.add_argument("-o", "--output")
    cfg = SweepConfig(**vars(ap.parse_args(argv)))
    rows = sweep(cfg)
    write_text(cfg.output, csv_text(list(rows[0]), rows))
    changes = [(a["p"], b["class_lower"]) for a, b in zip(rows, rows[1:]) if a["class_lower"] != b["class_lower"]]
    print(f"class changes (last p before change, new class): {changes}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
