"""Schmidt-number classes: k-witnesses, rank-k decompositions, Schmidt-number bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import (RANK_TOL, DimensionError, ToleranceError, check_dims, projector, pseudo_inverse,
                     range_kernel_projectors)
from .productopt import (EDGE_TOL, OptConfig, alternate_schmidt, min_over_schmidt_k, range_contains_product,
                         range_contains_schmidt_k, schmidt_candidates)
from .separability import (FEAS_TOL, FEAS_TOL_LOOSE, NEG_TOL, WEIGHT_TOL, OptimalDecomposition,
                           _noise_aware_tol, best_separable_approximation)
from .states import max_entangled_projector
from .witnesses import DETECT_TOL, EPS_SHRINK, WitnessOperator

_PENALTY = 50.0


def k_schmidt_witness_opt(k: int, m: int) -> WitnessOperator:
    """``1 - m/(k-1) P_psi`` on ``m x m``: nonnegative on Schmidt rank <= k-1, negative on ``P_psi``.

    ``raw`` keeps the unnormalized operator; ``matrix`` is the unit-trace form.
    """
    if k < 2 or k > m:
        raise ValueError(f"need 2 <= k <= m, got k={k}, m={m}")
    raw = np.eye(m * m, dtype=complex) - m / (k - 1) * max_entangled_projector(m)
    return WitnessOperator.from_raw(raw, (m, m), "unverified", float("nan"),
                                    {"construction": "schmidt-opt", "k": k, "m": m})


def _range_has_rank(delta, dims, k, cfg, edge_tol, rank_tol):
    if k == 1:
        return range_contains_product(delta, dims, cfg, edge_tol, rank_tol)
    return range_contains_schmidt_k(delta, dims, k, cfg, edge_tol, rank_tol)


def canonical_k_witness(delta: np.ndarray, dims: Sequence[int], k: int, cfg: OptConfig | None = None,
                        edge_tol: float = EDGE_TOL, rank_tol: float = RANK_TOL) -> WitnessOperator:
    """``Q - eps 1`` with ``Q`` the kernel projector of ``delta`` and ``eps`` its infimum on rank <= k-1.

    ``delta`` must have no vector of Schmidt rank <= k-1 in its range.
    """
    cfg = cfg or OptConfig()
    dims = check_dims(delta, dims)
    if not 2 <= k <= min(dims):
        raise ValueError(f"k must be in [2, {min(dims)}], got {k}")
    test = _range_has_rank(delta, dims, k - 1, cfg, edge_tol, rank_tol)
    if test.found:
        raise ValueError(f"range holds a Schmidt rank <= {k - 1} vector (residual {test.residual:.2e})")
    q = range_kernel_projectors(delta, rank_tol).kernel_proj
    eps = min_over_schmidt_k(q, dims, k - 1, cfg).value * (1 - EPS_SHRINK)
    if eps <= 0:
        raise ToleranceError("rank-restricted infimum of the kernel projector is not positive")
    prov = {"construction": "schmidt-canonical", "k": k, "edge_state": delta, "Q": q, "seed": cfg.seed}
    return WitnessOperator.from_raw(q - eps * np.eye(q.shape[0]), dims, "unverified", eps, prov)


@dataclass
class SchmidtTerm:
    weight: float
    vector: np.ndarray

    def projector(self) -> np.ndarray:
        return projector(self.vector)


def _polish_rank_k(kern, kb, da, db, x, y, max_sweeps, chunk=25):
    """Alternate on the kernel projector in chunks until every start is feasible or stalled."""
    psi = np.einsum("sal,sbl->sab", x, y).reshape(x.shape[0], -1)
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    res = np.sum(np.abs(psi @ kb.conj()) ** 2, axis=1)
    for _ in range(max(1, max_sweeps // chunk)):
        x, y, psi, _, _ = alternate_schmidt(kern, da, db, x, y, chunk, -np.inf)
        new = np.sum(np.abs(psi @ kb.conj()) ** 2, axis=1)
        done = (new > 0.5 * res) | (new < 1e-26)
        res = new
        if np.all(done):
            break
    return psi, res


def _rank_k_candidate(rem, dims, k, cfg, rank_tol):
    tr = np.trace(rem).real
    r = rem / tr
    tol = _noise_aware_tol(r, rank_tol)
    rk = range_kernel_projectors(r, tol)
    rp = pseudo_inverse(r, tol)
    da, db = dims
    g = rp / np.linalg.norm(rp, 2)
    if rk.rank == r.shape[0]:
        _, _, psi, _, _ = schmidt_candidates(g, dims, k, cfg)
        feas = np.zeros(psi.shape[0])
    else:
        x, y, _, _, _ = schmidt_candidates(g + _PENALTY * rk.kernel_proj, dims, k, cfg)
        psi, feas = _polish_rank_k(rk.kernel_proj, rk.kernel_basis, da, db, x, y, 20 * cfg.max_sweeps)
    lim = FEAS_TOL if np.any(feas <= FEAS_TOL) else FEAS_TOL_LOOSE
    best = None
    for i in np.flatnonzero(feas <= lim):
        w = tr / np.vdot(psi[i], rp @ psi[i]).real
        if best is None or w > best[0]:
            best = (w, psi[i])
    if best is None:
        return None
    w, v = best
    p = projector(v)
    if np.linalg.eigvalsh(rem - w * p)[0] < -NEG_TOL:
        lo, hi = 0.0, w
        for _ in range(50):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if np.linalg.eigvalsh(rem - mid * p)[0] >= -NEG_TOL else (lo, mid)
        w = lo
    return SchmidtTerm(w, v)


def k_decomposition(rho: np.ndarray, dims: Sequence[int], k: int, cfg: OptConfig | None = None,
                    weight_tol: float = WEIGHT_TOL, rank_tol: float = RANK_TOL, edge_tol: float = EDGE_TOL,
                    max_iter: int | None = None) -> OptimalDecomposition:
    """Greedy subtraction of Schmidt rank <= k projectors, mirroring the separable case."""
    cfg = cfg or OptConfig()
    dims = check_dims(rho, dims)
    if len(dims) != 2:
        raise DimensionError("Schmidt decompositions need a bipartite shape")
    m = min(dims)
    if not 1 <= k <= m:
        raise ValueError(f"k must be in [1, {m}], got {k}")
    if k == 1:
        return best_separable_approximation(rho, dims, "ALL", cfg, weight_tol, rank_tol, edge_tol=edge_tol,
                                            max_iter=max_iter)
    rem = (rho + rho.conj().T) / 2
    total = rho.shape[0]
    if k == m:
        # every vector qualifies: the spectral decomposition is already optimal
        vals, vecs = np.linalg.eigh(rem)
        terms = [SchmidtTerm(float(v), vecs[:, i]) for i, v in enumerate(vals) if v > 0]
        lam = float(sum(t.weight for t in terms))
        return OptimalDecomposition(lam, terms, np.zeros_like(rem), dims, len(terms), f"SCHMIDT-{k}",
                                    meta={"k": k})
    max_iter = max_iter or total * total
    terms: list[SchmidtTerm] = []
    it = 0
    while it < max_iter and np.trace(rem).real > weight_tol:
        step = OptConfig(cfg.n_starts, cfg.max_sweeps, cfg.sweep_tol, cfg.seed + it)
        term = _rank_k_candidate(rem, dims, k, step, rank_tol)
        if term is None or term.weight < weight_tol:
            break
        rem = rem - term.weight * term.projector()
        rem = (rem + rem.conj().T) / 2
        terms.append(term)
        it += 1
    lam = float(sum(t.weight for t in terms))
    rest = 1 - lam
    edge = rem / rest if rest > 0 else np.zeros_like(rem)
    residual = float("nan")
    if rest > weight_tol:
        residual = range_contains_schmidt_k(edge, dims, k, cfg, edge_tol, rank_tol).residual
    return OptimalDecomposition(lam, terms, edge, dims, it, f"SCHMIDT-{k}", it >= max_iter, residual,
                                {"k": k})


@dataclass
class SchmidtClassBound:
    lower: int
    upper: int
    evidence: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, **self.evidence}


def schmidt_number_bounds(rho: np.ndarray, dims: Sequence[int], cfg: OptConfig | None = None,
                          lam_tol: float = 1e-4, detect_tol: float = DETECT_TOL) -> SchmidtClassBound:
    """Interval for the Schmidt number: witnesses give the lower end, decompositions the upper."""
    cfg = cfg or OptConfig()
    dims = check_dims(rho, dims)
    if len(dims) != 2:
        raise DimensionError("Schmidt numbers need a bipartite shape")
    m = min(dims)
    hits = []
    if dims[0] == dims[1]:
        for k in range(2, m + 1):
            w = k_schmidt_witness_opt(k, m)
            v = w.expectation(rho, raw=True)
            if v < -detect_tol:
                hits.append({"witness": f"schmidt-opt-{k}", "k": k, "value": v})
    upper, lams = m, {}
    for k in range(1, m):
        dec = k_decomposition(rho, dims, k, cfg)
        lams[k] = dec.lam
        if dec.lam >= 1 - lam_tol:
            upper = k
            break
        # the edge part has no Schmidt rank <= k vectors: a canonical (k+1)-witness
        try:
            w = canonical_k_witness(dec.edge_part, dims, k + 1, cfg)
        except (ValueError, ToleranceError):
            continue
        v = w.expectation(rho)
        if v < -detect_tol:
            hits.append({"witness": f"canonical-{k + 1}", "k": k + 1, "value": v})
    lower = max([1] + [h["k"] for h in hits])
    if lower > upper:
        raise ToleranceError(f"Schmidt bounds crossed: lower {lower} > upper {upper}")
    detecting = max(hits, key=lambda h: h["k"]) if hits else None
    return SchmidtClassBound(lower, upper, {"hits": hits, "lambdas": lams, "detecting_witness": detecting})
