"""PPT entangled states and their non-decomposable witnesses.

For the 3 x 3 Horodecki family: PPT-mode best separable approximation, a
non-decomposable witness built from the PPT edge part, and its value on the
state. For the Werner family on two copies of a qutrit pair plus a qubit
pair: the semidefinite search for a PPT state detected by W(beta).
"""

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from entworkbench.io import csv_text, write_text
from entworkbench.nppt import werner_witness
from entworkbench.separability import best_separable_approximation
from entworkbench.states import horodecki_3x3
from entworkbench.witnesses import construct_nd_edge_witness, ppt_state_minimum


@dataclass
class SearchConfig:
    a_points: int = 5
    betas: tuple[float, ...] = (1.2, 1.3, 1.4, 1.5)
    output: str | None = None


def horodecki_rows(cfg: SearchConfig) -> list[dict]:
    rows = []
    for a in np.linspace(0.1, 0.9, cfg.a_points):
        rho = horodecki_3x3(float(a))
        dec = best_separable_approximation(rho, [3, 3], "PPT")
        row = {"family": "horodecki", "param": float(a), "lambda": dec.lam, "epsilon": float("nan"),
               "value": float("nan")}
        if dec.lam < 1 - 1e-4:
            w = construct_nd_edge_witness(dec.edge_part, [3, 3])
            row.update(epsilon=w.epsilon, value=w.expectation(rho))
        rows.append(row)
    return rows


def werner_rows(cfg: SearchConfig) -> list[dict]:
    rows = []
    for beta in cfg.betas:
        w = werner_witness(3, beta)
        value, _ = ppt_state_minimum(w.raw, list(w.dims))
        rows.append({"family": "werner", "param": beta, "lambda": float("nan"), "epsilon": float("nan"),
                     "value": value})
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a-points", type=int, default=SearchConfig.a_points)
    ap.add_argument("-o", "--output")
    args = ap.parse_args(argv)
    cfg = SearchConfig(a_points=args.a_points, output=args.output)
    rows = horodecki_rows(cfg) + werner_rows(cfg)
    write_text(cfg.output, csv_text(["family", "param", "lambda", "epsilon", "value"], rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
