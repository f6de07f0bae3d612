"""Three-qubit classes S < B < W < GHZ: named vectors, fidelity witnesses, PPT-based witnesses.

Fidelity witnesses ``c 1 - P_v`` use the largest squared overlap ``c`` of
``v`` with the smaller class:

* ``1/2 - P_GHZ`` and ``2/3 - P_W`` are nonnegative on biseparable states, so
  a negative value places the state outside ``B`` (class ``W`` or higher);
* ``3/4 - P_GHZ`` is nonnegative on the ``W`` class, so a negative value
  places the state in ``GHZ \\ W``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import (RANK_TOL, DimensionError, ToleranceError, check_dims, partial_transpose, permute_subsystems,
                     projector, psd_check, range_kernel_projectors, rank)
from .productopt import OptConfig, min_over_product
from .states import as_rng, random_pure
from .witnesses import DETECT_TOL, EPS_SHRINK, WitnessOperator

DIMS = (2, 2, 2)
CLASSES = ("S", "B", "W", "GHZ")


def ghz_vector() -> np.ndarray:
    v = np.zeros(8, dtype=complex)
    v[0] = v[7] = 1 / np.sqrt(2)
    return v


def w_vector() -> np.ndarray:
    v = np.zeros(8, dtype=complex)
    v[[1, 2, 4]] = 1 / np.sqrt(3)
    return v


def _fidelity_witness(vec, c, name, beyond):
    raw = c * np.eye(8, dtype=complex) - projector(vec)
    return WitnessOperator.from_raw(raw, DIMS, "unverified", float("nan"),
                                    {"construction": name, "threshold": c, "beyond": beyond})


def w_witness() -> WitnessOperator:
    """``1/2 - P_GHZ``; ``raw`` is the operator as written, ``matrix`` its unit-trace form."""
    return _fidelity_witness(ghz_vector(), 0.5, "ghz-fidelity-1/2", "B")


def ghz_class_witness() -> WitnessOperator:
    """``3/4 - P_GHZ``: negative only outside the W class."""
    return _fidelity_witness(ghz_vector(), 0.75, "ghz-fidelity-3/4", "W")


def w_projector_witness() -> WitnessOperator:
    """``2/3 - P_W``: negative only outside the biseparable class."""
    return _fidelity_witness(w_vector(), 2 / 3, "w-fidelity-2/3", "B")


def fidelity_witnesses() -> dict[str, WitnessOperator]:
    return {"W_W": w_witness(), "GHZ_W": ghz_class_witness(), "W_proj": w_projector_witness()}


def w_family_state(p: float) -> np.ndarray:
    """``(1 - p)/8 1 + p P_W``."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return (1 - p) / 8 * np.eye(8, dtype=complex) + p * projector(w_vector())


# --- sampling --------------------------------------------------------------


def random_full_product(seed=None) -> np.ndarray:
    rng = as_rng(seed)
    a, b, c = (random_pure(2, rng) for _ in range(3))
    return np.kron(np.kron(a, b), c)


def random_petal_vector(cut: int, seed=None) -> np.ndarray:
    """Haar pair on two qubits times a random state of qubit ``cut``."""
    rng = as_rng(seed)
    single, pair = random_pure(2, rng), random_pure(4, rng)
    v = np.kron(single, pair)  # order (cut, rest...)
    rest = [i for i in range(3) if i != cut]
    order = [cut] + rest
    return permute_subsystems(v, DIMS, np.argsort(order))


def random_biseparable(terms: int = 8, seed=None) -> np.ndarray:
    """Dirichlet mixture of ``terms`` petal projectors with random cuts."""
    rng = as_rng(seed)
    w = rng.dirichlet(np.ones(terms))
    return sum(wi * projector(random_petal_vector(int(rng.integers(3)), rng)) for wi in w)


def random_w_class_vector(seed=None) -> np.ndarray:
    """``(A x B x C)|W>`` normalized, with Gaussian local operators."""
    rng = as_rng(seed)
    ops = [rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(3)]
    v = np.kron(np.kron(ops[0], ops[1]), ops[2]) @ w_vector()
    return v / np.linalg.norm(v)


# --- ball scan -------------------------------------------------------------


@dataclass
class BallScan:
    kappas: np.ndarray
    stable_kappa: dict[str, np.ndarray]  # witness id -> one value per panel state
    signature: dict[str, bool]

    def rows(self) -> list[dict]:
        out = []
        for name, vals in self.stable_kappa.items():
            out += [{"witness": name, "panel_index": i, "stable_kappa": float(v)} for i, v in enumerate(vals)]
        return out


def robustness_ball_scan(rho: np.ndarray, sigma_panel: Sequence[np.ndarray], kappa_max: float = 1.0,
                         steps: int = 101, witnesses: dict[str, WitnessOperator] | None = None,
                         detect_tol: float = DETECT_TOL) -> BallScan:
    """Largest grid ``kappa`` keeping every witness's detect/silent verdict on ``(1-k) rho + k sigma``."""
    witnesses = witnesses or fidelity_witnesses()
    kappas = np.linspace(0.0, kappa_max, steps)
    sig = {name: w.expectation(rho) < -detect_tol for name, w in witnesses.items()}
    stable = {}
    for name, w in witnesses.items():
        vr = w.expectation(rho)
        out = []
        for sigma in sigma_panel:
            vs = w.expectation(sigma)
            vals = (1 - kappas) * vr + kappas * vs  # linear in kappa
            same = (vals < -detect_tol) == sig[name]
            bad = np.flatnonzero(~same)
            out.append(kappas[-1] if bad.size == 0 else (kappas[bad[0] - 1] if bad[0] > 0 else np.nan))
        stable[name] = np.array(out)
    return BallScan(kappas, stable, sig)


# --- PPT-based witness -----------------------------------------------------


def tripartite_nd_witness(delta: np.ndarray, cfg: OptConfig | None = None, rank_tol: float = RANK_TOL,
                          psd_tol: float = 1e-9) -> WitnessOperator:
    """``P + sum_X Q_X^{T_X} - eps 1`` from the kernels of ``delta`` and its three partial transposes."""
    cfg = cfg or OptConfig()
    check_dims(delta, DIMS)
    p = range_kernel_projectors(delta, rank_tol).kernel_proj
    wd = p.copy()
    qs = []
    for x in range(3):
        pt = partial_transpose(delta, DIMS, x)
        ok, lo = psd_check(pt, psd_tol)
        if not ok:
            raise ValueError(f"cut {x} is NPPT (min eigenvalue {lo:.3e})")
        q = range_kernel_projectors(pt, rank_tol).kernel_proj
        qs.append(q)
        wd = wd + partial_transpose(q, DIMS, x)
    eps = min_over_product(wd, DIMS, cfg).value * (1 - EPS_SHRINK)
    if eps <= 0:
        raise ToleranceError("product infimum of the kernel form is not positive")
    raw = wd - eps * np.eye(8)
    if np.trace(raw).real <= 0:
        raise ValueError("kernels too small: the witness has no positive trace")
    prov = {"construction": "three-cut-ppt-edge", "edge_state": delta, "P": p, "Q": qs, "seed": cfg.seed}
    return WitnessOperator.from_raw(raw, DIMS, "non_decomposable", eps, prov)


# --- classification --------------------------------------------------------


@dataclass
class TripartiteClassEvidence:
    class_lower: str
    hits: list[dict]
    ppt_cuts: tuple[bool, bool, bool]
    pt_min: tuple[float, float, float]
    biseparable_by_rank: bool = False
    values: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"class_lower": self.class_lower, "hits": self.hits, "ppt_cuts": list(self.ppt_cuts),
                "pt_min": list(self.pt_min), "biseparable_by_rank": self.biseparable_by_rank,
                "values": self.values}


def classify(rho: np.ndarray, dims: Sequence[int] = DIMS, detect_tol: float = DETECT_TOL,
             psd_tol: float = 1e-9, rank_tol: float = RANK_TOL) -> TripartiteClassEvidence:
    """Strongest lower-bound class supported by the implemented witnesses and PPT tests.

    Only lower bounds are reported. ``biseparable_by_rank`` flags states PPT
    across every cut with rank <= 4, which are separable across ``A|BC`` as a
    ``2 x 4`` system.
    """
    if tuple(dims) != DIMS:
        raise DimensionError(f"three-qubit shape required, got {list(dims)}")
    check_dims(rho, DIMS)
    cuts = [psd_check(partial_transpose(rho, DIMS, x), psd_tol) for x in range(3)]
    ppt = tuple(bool(c[0]) for c in cuts)
    pt_min = tuple(float(c[1]) for c in cuts)
    values, hits = {}, []
    for name, w in fidelity_witnesses().items():
        v = w.expectation(rho, raw=True)
        values[name] = v
        if v < -detect_tol:
            hits.append({"witness": name, "value": v, "beyond": w.provenance["beyond"]})
    beyond = {h["beyond"] for h in hits}
    if "W" in beyond:
        cls = "GHZ"
    elif "B" in beyond:
        cls = "W"
    elif not all(ppt):
        cls = "B"
        hits += [{"witness": f"PT_{x}", "value": pt_min[x], "beyond": "S"} for x in range(3) if not ppt[x]]
    else:
        cls = "S"
    by_rank = all(ppt) and rank(rho, rank_tol) <= 4
    return TripartiteClassEvidence(cls, hits, ppt, pt_min, by_rank, values)
