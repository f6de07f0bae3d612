"""Entanglement witnesses: construction from edge states, validation, optimization.

Every statement about positivity on product vectors rests on the local
optimizer in :mod:`productopt`; such results carry ``heuristic=True``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import cvxpy as cp
import numpy as np

from .linalg import (PSD_TOL, RANK_TOL, ToleranceError, check_dims, min_eigenvalue, partial_trace,
                     partial_transpose, projector, psd_check, range_kernel_projectors, tensor_product)
from .productopt import (EDGE_TOL, OptConfig, ProductVector, min_over_product, min_ratio_over_product,
                         ppt_edge_check, product_candidates, range_contains_product)
from .states import as_rng, random_density

VALIDITY_TOL = 1e-7
DETECT_TOL = 1e-9
EPS_SHRINK = 1e-6
# largest total dimension for which the probe solves the PPT-state SDP
SDP_MAX_DIM = 64

KINDS = ("decomposable", "non_decomposable", "unverified")


@dataclass
class WitnessOperator:
    """Unit-trace witness; ``raw = norm * matrix`` keeps the unnormalized form as built."""

    matrix: np.ndarray
    dims: tuple[int, ...]
    kind: str = "unverified"
    epsilon: float = float("nan")
    norm: float = 1.0
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_raw(cls, raw: np.ndarray, dims: Sequence[int], kind: str = "unverified",
                 epsilon: float = float("nan"), provenance: dict | None = None) -> "WitnessOperator":
        dims = check_dims(raw, dims)
        if kind not in KINDS:
            raise ValueError(f"unknown witness kind {kind!r}")
        raw = (raw + raw.conj().T) / 2
        tr = np.trace(raw).real
        if tr <= 0:
            raise ValueError(f"witness trace must be positive, got {tr:.3e}")
        if min_eigenvalue(raw) >= 0:
            raise ValueError("operator is PSD: a pre-witness that detects nothing")
        return cls(raw / tr, dims, kind, epsilon, tr, dict(provenance or {}))

    @property
    def raw(self) -> np.ndarray:
        return self.matrix * self.norm

    def expectation(self, rho: np.ndarray, raw: bool = False) -> float:
        op = self.raw if raw else self.matrix
        return float(np.real(np.trace(op @ rho)))


def _as_matrix(w) -> np.ndarray:
    return w.matrix if isinstance(w, WitnessOperator) else np.asarray(w)


# --- construction ----------------------------------------------------------


def construct_edge_witness(delta: np.ndarray, dims: Sequence[int], cfg: OptConfig | None = None,
                           edge_tol: float = EDGE_TOL, rank_tol: float = RANK_TOL) -> WitnessOperator:
    """``P - eps I`` with ``P`` the kernel projector of an edge state ``delta``."""
    cfg = cfg or OptConfig()
    dims = check_dims(delta, dims)
    test = range_contains_product(delta, dims, cfg, edge_tol, rank_tol)
    if test.found:
        raise ValueError(f"not an edge state: product vector in range (residual {test.residual:.2e})")
    p = range_kernel_projectors(delta, rank_tol).kernel_proj
    eps = min_over_product(p, dims, cfg).value * (1 - EPS_SHRINK)
    if eps <= 0:
        raise ToleranceError("product infimum of the kernel projector is not positive")
    prov = {"construction": "edge", "edge_state": delta, "P": p, "seed": cfg.seed}
    return WitnessOperator.from_raw(p - eps * np.eye(p.shape[0]), dims, "decomposable", eps, prov)


def construct_nd_edge_witness(delta: np.ndarray, dims: Sequence[int], cfg: OptConfig | None = None,
                              edge_tol: float = EDGE_TOL, rank_tol: float = RANK_TOL) -> WitnessOperator:
    """``P + Q^T_A - eps I`` for a PPT edge state ``delta``."""
    cfg = cfg or OptConfig()
    dims = check_dims(delta, dims)
    test = ppt_edge_check(delta, dims, cfg, edge_tol, rank_tol, psd_tol=1e-7)
    if not test.is_ppt_edge:
        raise ValueError(f"not a PPT edge state (residual {test.residual:.2e})")
    p = range_kernel_projectors(delta, rank_tol).kernel_proj
    q = range_kernel_projectors(partial_transpose(delta, dims, 0), rank_tol).kernel_proj
    wd = p + partial_transpose(q, dims, 0)
    eps = min_over_product(wd, dims, cfg).value * (1 - EPS_SHRINK)
    if eps <= 0:
        raise ToleranceError("product infimum of P + Q^T_A is not positive")
    prov = {"construction": "ppt-edge", "edge_state": delta, "P": p, "Q": q, "seed": cfg.seed}
    return WitnessOperator.from_raw(wd - eps * np.eye(p.shape[0]), dims, "non_decomposable", eps, prov)


def swap_witness(d: int) -> WitnessOperator:
    """The flip operator ``V / d``, i.e. ``(d P_psi)^T_A / d``: decomposable by construction."""
    from .linalg import swap_operator
    from .states import max_entangled_projector

    q = d * max_entangled_projector(d)
    return WitnessOperator.from_raw(swap_operator(d).astype(complex), (d, d), "decomposable", 0.0,
                                    {"construction": "Q^T_B", "Q": q})


# --- checks ----------------------------------------------------------------


@dataclass
class Detection:
    detected: bool
    value: float


def detects(w: WitnessOperator, rho: np.ndarray, detect_tol: float = DETECT_TOL) -> Detection:
    if rho.shape != w.matrix.shape:
        raise ValueError(f"shape mismatch {rho.shape} vs {w.matrix.shape}")
    v = w.expectation(rho)
    return Detection(v < -detect_tol, v)


@dataclass
class Validation:
    is_witness: bool
    product_min: float
    min_eig: float
    heuristic: bool = True


def validate_witness(w, dims: Sequence[int], cfg: OptConfig | None = None,
                     validity_tol: float = VALIDITY_TOL) -> Validation:
    op = _as_matrix(w)
    dims = check_dims(op, dims)
    tr = np.trace(op).real
    if tr > 0:
        op = op / tr
    pm = min_over_product(op, dims, cfg).value
    me = min_eigenvalue(op)
    return Validation(pm >= -validity_tol and me < 0, pm, me)


@dataclass
class ReductionCheck:
    holds: bool
    defect: float
    reductions_psd: bool
    min_eig_a: float
    min_eig_b: float


def reduction_range_check(w, dims: Sequence[int], tol: float = 1e-8, rank_tol: float = RANK_TOL,
                          psd_tol: float = PSD_TOL) -> ReductionCheck:
    """Range of a witness lies inside ``R(W_A) (x) R(W_B)``; both reductions PSD."""
    op = _as_matrix(w)
    dims = check_dims(op, dims)
    wa = partial_trace(op, dims, 0)
    wb = partial_trace(op, dims, 1)
    pa = range_kernel_projectors(wa, rank_tol).range_proj
    pb = range_kernel_projectors(wb, rank_tol).range_proj
    pab = tensor_product(pa, pb)
    defect = float(np.max(np.abs(pab @ op @ pab - op)))
    ea, eb = min_eigenvalue(wa), min_eigenvalue(wb)
    psd = ea >= -psd_tol and eb >= -psd_tol
    return ReductionCheck(defect <= tol and psd, defect, psd, ea, eb)


# --- optimization ----------------------------------------------------------


@dataclass
class WitnessOptimizationTrace:
    subtracted: list[tuple[np.ndarray, float]]
    lam: float
    final: WitnessOperator
    optimal_within_search: bool

    def reconstruct(self) -> np.ndarray:
        z = sum((wt * op for op, wt in self.subtracted), np.zeros_like(self.final.matrix))
        return z + (1 - self.lam) * self.final.matrix


def _product_zero_span(op, dims, cfg, zero_tol, conj_first: bool):
    factors, values, _ = product_candidates(op, dims, cfg)
    keep = values <= zero_tol
    if not keep.any():
        return np.zeros((op.shape[0], 0))
    vecs = []
    for i in np.flatnonzero(keep):
        pv = ProductVector([f[i] for f in factors])
        vecs.append((pv.conj_party(0) if conj_first else pv).vector())
    u, s, _ = np.linalg.svd(np.array(vecs).T, full_matrices=True)
    r = int(np.sum(s > 1e-6 * s[0]))
    return u[:, :r]


def _complement(basis: np.ndarray, dim: int) -> np.ndarray:
    if basis.shape[1] == 0:
        return np.eye(dim, dtype=complex)
    u, _, _ = np.linalg.svd(basis, full_matrices=True)
    return u[:, basis.shape[1]:]


def _generators(basis: np.ndarray, transform):
    """``(operator, rank-one parts)`` for each basis vector and for the whole span."""
    parts = [transform(projector(basis[:, j])) for j in range(basis.shape[1])]
    gens = [(p, [p]) for p in parts]
    if len(parts) > 1:
        gens.append((sum(parts), parts))
    return gens


def _safe_weight(cur, gen, lam, dims, cfg, validity_tol):
    """Largest fraction of ``lam`` (halving) keeping ``cur - lam * gen`` nonneg on products."""
    for _ in range(30):
        if lam <= 0:
            return 0.0
        if min_over_product(cur - lam * gen, dims, cfg).value >= -validity_tol * 1e-2:
            return lam
        lam /= 2
    return 0.0


def optimize_witness(w: WitnessOperator, mode: str = "ALL", cfg: OptConfig | None = None,
                     weight_tol: float = 1e-6, zero_tol: float = 1e-9, validity_tol: float = VALIDITY_TOL,
                     max_iter: int | None = None) -> WitnessOptimizationTrace:
    """Subtract rank-one positive operators (mode ``PPT`` also their partial transposes).

    Candidates are drawn from the orthogonal complement of the span of the
    product zeros of the current operator (partially conjugated zeros for the
    transposed generators); each is removed with the largest weight that keeps
    the operator nonnegative on product vectors.
    """
    cfg = cfg or OptConfig()
    mode = mode.upper()
    if mode not in ("ALL", "PPT"):
        raise ValueError(f"unknown mode {mode!r}")
    dims = w.dims
    dim = w.matrix.shape[0]
    cur = w.matrix.copy()
    subtracted: list[tuple[np.ndarray, float]] = []
    max_iter = max_iter or dim * dim
    optimal = False
    for it in range(max_iter):
        step = OptConfig(cfg.n_starts, cfg.max_sweeps, cfg.sweep_tol, cfg.seed + it)
        # generators: rank-one projectors on the complement of the product-zero span,
        # plus the projector on the whole complement (an equal-weight sum of them)
        gens: list[tuple[np.ndarray, list[np.ndarray]]] = []
        comp = _complement(_product_zero_span(cur, dims, step, zero_tol, False), dim)
        gens += _generators(comp, lambda op: op)
        if mode == "PPT":
            compc = _complement(_product_zero_span(cur, dims, step, zero_tol, True), dim)
            gens += _generators(compc, lambda op: partial_transpose(op, dims, 0))
        if not gens:
            optimal = True
            break
        best, best_gain, best_lam = None, 0.0, 0.0
        for g, parts in gens:
            lam = min_ratio_over_product(cur, g, dims, step).value * (1 - EPS_SHRINK)
            gain = lam * len(parts)
            if np.isfinite(lam) and gain > best_gain:
                best, best_gain, best_lam = (g, parts), gain, lam
        if best is None or best_gain < weight_tol:
            optimal = True
            break
        best_lam = _safe_weight(cur, best[0], best_lam, dims, step, validity_tol)
        if best_lam * len(best[1]) < weight_tol:
            break
        cur = cur - best_lam * best[0]
        subtracted += [(part, best_lam) for part in best[1]]
    lam = float(sum(wt for _, wt in subtracted))
    final = WitnessOperator.from_raw(cur, dims, w.kind, w.epsilon,
                                     {**w.provenance, "optimized": mode, "subtracted_weight": lam})
    return WitnessOptimizationTrace(subtracted, lam, final, optimal)


# --- canonical form --------------------------------------------------------


@dataclass
class CanonicalForm:
    z2: np.ndarray
    epsilon: float
    touching_state: np.ndarray
    contact: float


def canonical_form_extract(w, tol: float = 1e-10) -> CanonicalForm:
    """``W = (1 + eps) Z2 - eps I/D`` with the smallest ``eps`` making ``Z2`` PSD."""
    op = _as_matrix(w)
    dim = op.shape[0]
    vals, vecs = np.linalg.eigh((op + op.conj().T) / 2)
    eps = -vals[0] * dim
    if eps <= 0:
        raise ValueError("operator is PSD: no canonical witness form")
    z2 = (op + eps * np.eye(dim) / dim) / (1 + eps)
    low = vecs[:, np.abs(vals - vals[0]) <= 1e-9 * max(1.0, abs(vals[0]))]
    touch = low @ low.conj().T / low.shape[1]
    contact = float(np.real(np.trace(z2 @ touch)))
    if min_eigenvalue(z2) < -tol or abs(contact) > tol:
        raise ToleranceError("canonical form failed its PSD/contact checks")
    return CanonicalForm(z2, float(eps), touch, contact)


# --- non-decomposability probe ---------------------------------------------


@dataclass
class ProbeResult:
    detected_ppt_state: np.ndarray | None
    value: float
    trials: int
    heuristic: bool = True

    @property
    def success(self) -> bool:
        return self.detected_ppt_state is not None


def _ppt_mix(rho, dims):
    """Mix with white noise just enough to make the state PSD and PPT, with a small positive margin."""
    dim = rho.shape[0]
    margin = 1e-13
    m = min(min_eigenvalue(rho), min_eigenvalue(partial_transpose(rho, dims, 0)))
    if m >= margin:
        return rho
    t = (margin - m) / (1 / dim - m)
    return (1 - t) * rho + t * np.eye(dim) / dim


def ppt_state_minimum(w, dims: Sequence[int]) -> tuple[float, np.ndarray | None]:
    """``min Tr(W sigma)`` over PPT states ``sigma`` as an SDP (SCS); returns the value and a repaired state.

    The returned state is pushed into the PPT set by white-noise mixing, so
    ``Tr(W sigma)`` evaluated on it is exact. ``W`` is decomposable iff the
    minimum is nonnegative; solver accuracy (~1e-6) limits the converse.
    """
    op = _as_matrix(w)
    dims = check_dims(op, dims)
    dim = op.shape[0]
    x = cp.Variable((dim, dim), hermitian=True)
    cons = [x >> 0, cp.partial_transpose(x, list(dims), 0) >> 0, cp.real(cp.trace(x)) == 1]
    prob = cp.Problem(cp.Minimize(cp.real(cp.trace(op @ x))), cons)
    try:
        prob.solve(solver=cp.SCS)
    except cp.error.SolverError:
        return float("nan"), None
    if x.value is None:
        return float("nan"), None
    sigma = (x.value + x.value.conj().T) / 2
    sigma = _ppt_mix(sigma / np.trace(sigma).real, dims)
    return float(np.real(np.trace(op @ sigma))), sigma


def _is_ppt_state(rho, dims, tol=1e-12):
    return psd_check(rho, tol)[0] and psd_check(partial_transpose(rho, dims, 0), tol)[0]


def nondecomposability_probe(w, dims: Sequence[int] | None = None, cfg: OptConfig | None = None,
                             candidates: Sequence[np.ndarray] = (), trials: int = 64, steps: int = 40,
                             detect_tol: float = DETECT_TOL) -> ProbeResult:
    """Look for a PPT state with negative witness expectation.

    Success certifies non-decomposability; failure proves nothing. Candidate
    states (e.g. the edge state a witness was built from) are tried first,
    then the PPT-state SDP (bipartite, total dimension <= ``SDP_MAX_DIM``),
    then noise-mixed random states refined by a seeded hill climb.
    """
    cfg = cfg or OptConfig()
    op = _as_matrix(w)
    dims = tuple(dims or w.dims)
    dim = op.shape[0]
    if isinstance(w, WitnessOperator) and "edge_state" in w.provenance:
        candidates = [w.provenance["edge_state"], *candidates]

    def value(rho):
        return float(np.real(np.trace(op @ rho)))

    best_val, best = np.inf, None
    for c in candidates:
        c = c / np.trace(c).real
        if _is_ppt_state(c, dims) and value(c) < best_val:
            best_val, best = value(c), c
    if best_val < -detect_tol:
        return ProbeResult(best, best_val, 0)
    if len(dims) == 2 and dim <= SDP_MAX_DIM:
        val, sigma = ppt_state_minimum(op, dims)
        if sigma is not None and _is_ppt_state(sigma, dims, 0.0) and val < best_val:
            best_val, best = val, sigma
        if best_val < -detect_tol:
            return ProbeResult(best, best_val, 0)
    rng = as_rng(cfg.seed)
    neg = np.linalg.eigh((op + op.conj().T) / 2)[1][:, :1]
    for t in range(trials):
        r = int(rng.integers(1, dim + 1))
        g = rng.standard_normal((dim, r)) + 1j * rng.standard_normal((dim, r))
        if t % 4 == 0:
            g[:, 0] += 3 * neg[:, 0] * np.linalg.norm(g[:, 0])
        rho = _ppt_mix(random_density_from(g), dims)
        val = value(rho)
        scale = 0.3
        for _ in range(steps):
            g2 = g + scale * np.linalg.norm(g) / np.sqrt(g.size) * (
                rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
            rho2 = _ppt_mix(random_density_from(g2), dims)
            v2 = value(rho2)
            if v2 < val:
                g, rho, val = g2, rho2, v2
            else:
                scale *= 0.85
        if val < best_val and _is_ppt_state(rho, dims):
            best_val, best = val, rho
        if best_val < -detect_tol:
            return ProbeResult(best, best_val, t + 1)
    return ProbeResult(None, best_val, trials)


def random_density_from(g: np.ndarray) -> np.ndarray:
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
