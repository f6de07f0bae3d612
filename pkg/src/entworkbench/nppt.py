"""Werner-family distillability: n-copy Schmidt-rank-2 values, threshold scans, the assembled witness.

Signs carry different weight: a negative ``n_copy_nondistill_value`` comes
with an explicit Schmidt-rank-2 vector and certifies n-copy distillability;
a nonnegative value is only the best the multi-start optimizer found.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import (PSD_TOL, DimensionError, check_cap, check_dims, partial_transpose, permute_subsystems,
                     psd_check, tensor_product)
from .productopt import OptConfig, OptResult, min_over_schmidt_k, quadratic_form
from .states import WernerFamily, as_rng, random_pure, sym_antisym_projectors
from .witnesses import WitnessOperator

NONDISTILL_TOL = 1e-8
# Largest beta for which n copies are known to admit no negative Schmidt-rank-2 value.
BETA_BOUNDS = {1: lambda d: d / 2, 2: lambda d: (2 + d) / 4}


@dataclass
class NCopyConfig:
    d: int = 3
    n: int = 1
    beta_grid: Sequence[float] = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6)
    opt: OptConfig = field(default_factory=OptConfig)
    allow_large: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        check_cap(self.d ** (2 * self.n), self.allow_large)


def copies_perm(n: int) -> list[int]:
    """Factor order taking ``(A1 B1 A2 B2 ...)`` to ``(A1 .. An B1 .. Bn)``."""
    return [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]


def n_copy_operator(d: int, beta: float, n: int, allow_large: bool = False) -> np.ndarray:
    """``(rho_W(beta)^{T_A})^{(x) n}`` regrouped as ``d^n x d^n``."""
    check_cap(d ** (2 * n), allow_large)
    one = WernerFamily(d, beta).state_pt()
    op = tensor_product(*([one] * n))
    return permute_subsystems(op, [d] * (2 * n), copies_perm(n)) if n > 1 else op


@dataclass
class NCopyValue:
    value: float
    certificate: np.ndarray  # Schmidt rank <= 2 minimizer on d^n x d^n
    converged: bool
    starts: int

    @property
    def distillable(self) -> bool:
        return self.value < -NONDISTILL_TOL


def n_copy_nondistill_value(d: int, beta: float, n: int = 1, cfg: OptConfig | None = None,
                            allow_large: bool = False) -> NCopyValue:
    """Smallest ``<psi2|(rho_W^{T_A})^{(x) n}|psi2>`` found over Schmidt-rank-2 ``psi2``.

    The certificate vector is re-evaluated directly, so a negative value is
    exact up to rounding.
    """
    cfg = cfg or OptConfig()
    op = n_copy_operator(d, beta, n, allow_large)
    res: OptResult = min_over_schmidt_k(op, [d**n, d**n], 2, cfg)
    vec = res.vector()
    return NCopyValue(quadratic_form(op, vec), vec, res.converged, res.starts_used)


def psi2_family_vector(d: int, seed=None) -> np.ndarray:
    """``(|e, e*> + |f, f*>)/sqrt 2`` for a random orthonormal pair ``e, f``."""
    rng = as_rng(seed)
    e = random_pure(d, rng)
    f = random_pure(d, rng)
    f = f - np.vdot(e, f) * e
    f /= np.linalg.norm(f)
    return (np.kron(e, e.conj()) + np.kron(f, f.conj())) / np.sqrt(2)


@dataclass
class ThresholdScan:
    beta_star: float | None
    bracket: tuple[float, float] | None
    rows: list[dict]

    def as_dict(self) -> dict:
        return {"beta_star": self.beta_star, "bracket": self.bracket, "rows": self.rows}


def beta_threshold_scan(d: int, n: int, grid: Sequence[float], cfg: OptConfig | None = None,
                        tol: float = NONDISTILL_TOL, allow_large: bool = False) -> ThresholdScan:
    """First sign change of the n-copy value along ``grid``; ``beta_star`` is the bracket midpoint.

    A grid without a sign change returns ``beta_star = None``.
    """
    cfg = cfg or OptConfig()
    rows = []
    for beta in grid:
        r = n_copy_nondistill_value(d, float(beta), n, cfg, allow_large)
        rows.append({"beta": float(beta), "value": r.value, "converged": r.converged, "starts": r.starts})
    for lo, hi in zip(rows, rows[1:]):
        if lo["value"] >= -tol and hi["value"] < -tol:
            return ThresholdScan((lo["beta"] + hi["beta"]) / 2, (lo["beta"], hi["beta"]), rows)
    return ThresholdScan(None, None, rows)


def _witness_perm(n: int) -> list[int]:
    # (A' B' A1 B1 ... An Bn) -> (A' A1 .. An B' B1 .. Bn)
    return [0] + [2 + 2 * i for i in range(n)] + [1] + [3 + 2 * i for i in range(n)]


def werner_witness(d: int, beta: float, n: int = 1, allow_large: bool = False) -> WitnessOperator:
    """``P_a^{T_A'} (x) rho_W(beta)^{(x) n}`` on ``(A' A^n | B' B^n)``, with ``P_a`` the qubit singlet projector.

    Nonnegative on product vectors whenever the n-copy value at ``beta`` is
    nonnegative. ``provenance["conditional_on_conjecture"]`` marks betas past
    the established n-copy bound.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    side = 2 * d**n
    check_cap(side * side, allow_large)
    _, pa = sym_antisym_projectors(2)
    rho = WernerFamily(d, beta).state()
    op = tensor_product(partial_transpose(pa, [2, 2], 0), *([rho] * n))
    op = permute_subsystems(op, [2, 2] + [d] * (2 * n), _witness_perm(n))
    bound = BETA_BOUNDS[n](d) if n in BETA_BOUNDS else 1.0
    prov = {"construction": "werner-distillation", "d": d, "beta": beta, "n": n,
            "beta_bound": bound, "conditional_on_conjecture": bool(beta > bound)}
    return WitnessOperator.from_raw(op, (side, side), "non_decomposable", float("nan"), prov)


def werner_zero_set_vector(d: int, n: int = 1, seed=None) -> np.ndarray:
    """``|E>|F>_A (x) |E*>|G>_B`` with random ``E`` (qubit) and ``F, G`` (dimension ``d^n``)."""
    rng = as_rng(seed)
    e, f, g = random_pure(2, rng), random_pure(d**n, rng), random_pure(d**n, rng)
    return np.kron(np.kron(e, f), np.kron(e.conj(), g))


def ppt_distillation_map(sigma: np.ndarray, rho: np.ndarray, rho_dims: Sequence[int],
                         primed: Sequence[int] = (2, 2), normalize: bool = True, psd_tol: float = PSD_TOL,
                         zero_tol: float = 1e-12) -> np.ndarray:
    """``Tr_AB[sigma (1_{A'B'} (x) rho)]`` for ``sigma`` on ``(A'A | B'B)``; output on ``A'B'``."""
    da, db = (int(x) for x in rho_dims)
    pa, pb = (int(x) for x in primed)
    check_dims(rho, [da, db])
    check_dims(sigma, [pa * da, pb * db])
    for cut in (0, 1):
        ok, lo = psd_check(partial_transpose(sigma, [pa * da, pb * db], cut), psd_tol)
        if not ok:
            raise ValueError(f"sigma is not PPT (min eigenvalue {lo:.3e})")
    s = sigma.reshape(pa, da, pb, db, pa, da, pb, db)
    r = rho.reshape(da, db, da, db)
    out = np.einsum("iajbkcld,cdab->ijkl", s, r).reshape(pa * pb, pa * pb)
    tr = np.trace(out).real
    if abs(tr) <= zero_tol:
        raise ArithmeticError("zero-trace contraction: sigma and rho have orthogonal supports")
    if not normalize:
        return out
    if tr < 0:
        raise DimensionError("contraction has negative trace")
    return out / tr
