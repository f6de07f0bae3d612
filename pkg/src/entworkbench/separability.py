"""PPT tests and the constructive best separable approximation (BSA)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import cvxpy as cp
import numpy as np
from scipy.optimize import least_squares

from .linalg import (PSD_TOL, RANK_TOL, DimensionError, check_dims, partial_transpose, projector,
                     pseudo_inverse, psd_check, range_kernel_projectors, rank)
from .productopt import (EDGE_TOL, OptConfig, ProductVector, alternate_product, product_candidates,
                         range_contains_product, ppt_edge_check)

WEIGHT_TOL = 1e-6
# product candidates must sit this close to the range before they are subtracted;
# subtracting them perturbs the remainder spectrum by at most ~weight * FEAS_TOL
FEAS_TOL = 1e-14  # squared kernel overlap, i.e. EDGE_TOL**2
# second tier, used only when nothing meets FEAS_TOL: nearly degenerate inputs make
# the ranges ill-conditioned, and rounding moves range/product intersections by ~sqrt(noise)
FEAS_TOL_LOOSE = 1e-10
# subtractions never push the remainder spectrum below this
NEG_TOL = 1e-10
_PENALTY = 50.0
_REFINE_FROM = 1e-4
# subtracting at the weight cap creates a zero mode that couples to the kernel at
# first order in the overlap, so candidates are refined well past FEAS_TOL
_REFINED = 1e-26
# cap on pricing rounds of the joint re-weighting; the stall and gap stops usually end it sooner
REFINE_ROUNDS = 40
CLEANUP_WEIGHT = 1e-13  # smallest weight taken by the post-refinement greedy pass


def ppt_criterion(rho: np.ndarray, dims: Sequence[int], cut: int = 0, tol: float = PSD_TOL) -> tuple[bool, float]:
    """``(is_ppt, min PT eigenvalue)`` for the partial transpose on factor ``cut``."""
    return psd_check(partial_transpose(rho, dims, cut), tol)


def decide_separable_low_dim(rho: np.ndarray, dims: Sequence[int], tol: float = PSD_TOL) -> bool:
    """Exact decision for 2x2 and 2x3 (either order), where PPT is equivalent to separability."""
    if sorted(int(d) for d in dims) not in ([2, 2], [2, 3]):
        raise DimensionError(f"PPT decides separability only for 2x2 and 2x3, got {list(dims)}")
    return ppt_criterion(rho, dims, 0, tol)[0]


@dataclass
class RankCondition:
    satisfied: bool
    lhs: int
    rhs: int


def rank_condition(rho: np.ndarray, dims: Sequence[int], rank_tol: float = RANK_TOL) -> RankCondition:
    m, n = check_dims(rho, dims)
    lhs = rank(rho, rank_tol) + rank(partial_transpose(rho, dims, 0), rank_tol)
    rhs = 2 * m * n - m - n + 2
    return RankCondition(lhs <= rhs, lhs, rhs)


@dataclass
class ProductTerm:
    weight: float
    factors: list[np.ndarray]

    def projector(self) -> np.ndarray:
        return projector(ProductVector(self.factors).vector())


@dataclass
class OptimalDecomposition:
    """``rho = lam * sigma + (1 - lam) * delta`` with ``sigma`` an explicit product mixture."""

    lam: float
    terms: list[ProductTerm]
    edge_part: np.ndarray
    dims: tuple[int, ...]
    iterations: int
    mode: str
    hit_max_iterations: bool = False
    edge_residual: float = float("nan")
    meta: dict = field(default_factory=dict)

    def separable_part(self) -> np.ndarray:
        d = int(np.prod(self.dims))
        if self.lam <= 0:
            return np.zeros((d, d), dtype=complex)
        return sum(t.weight * t.projector() for t in self.terms) / self.lam

    def reconstruct(self) -> np.ndarray:
        return self.lam * self.separable_part() + (1 - self.lam) * self.edge_part


@dataclass
class _Candidate:
    weight: float
    factors: list[np.ndarray]


def _kernel_residuals(factors, kb, kbg) -> np.ndarray:
    """``|K^dag v|^2 (+ |K_pt^dag v'|^2)`` per start, accurate far below the rounding of ``v^dag K v``."""
    fa, fb = factors
    v = np.einsum("si,sj->sij", fa, fb).reshape(fa.shape[0], -1)
    res = np.sum(np.abs(v @ kb.conj()) ** 2, axis=1)
    if kbg is not None:
        vc = np.einsum("si,sj->sij", fa.conj(), fb).reshape(fa.shape[0], -1)
        res = res + np.sum(np.abs(vc @ kbg.conj()) ** 2, axis=1)
    return res


def _polish(kern, dims, factors, kb, kbg, max_sweeps):
    res = _kernel_residuals(factors, kb, kbg)
    for _ in range(max(1, max_sweeps // 25)):
        if np.all((res < 1e-24) | ~np.isfinite(res)):
            break
        factors, _, _ = alternate_product(kern, dims, factors, 25, -np.inf)
        new = _kernel_residuals(factors, kb, kbg)
        stalled = new > 0.5 * res
        res = new
        if np.all(stalled | (res < 1e-24)):
            break
    return factors, res


def _refine(fa, fb, kb, kbg):
    """Levenberg-Marquardt on the kernel overlaps; converges where alternation crawls."""
    da, db = fa.size, fb.size

    def split(x):
        e = x[:da] + 1j * x[da:2 * da]
        f = x[2 * da:2 * da + db] + 1j * x[2 * da + db:]
        return e, f

    def resid(x):
        e, f = split(x)
        parts = [kb.conj().T @ np.kron(e, f)]
        if kbg is not None:
            parts.append(kbg.conj().T @ np.kron(e.conj(), f))
        r = np.concatenate(parts)
        out = np.concatenate([r.real, r.imag, [np.vdot(e, e).real - 1, np.vdot(f, f).real - 1]])
        # zero padding keeps LM applicable when the phase gauge leaves it underdetermined
        return np.pad(out, (0, max(0, x.size - out.size)))

    x0 = np.concatenate([fa.real, fa.imag, fb.real, fb.imag])
    x = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15).x
    e, f = split(x)
    e, f = e / np.linalg.norm(e), f / np.linalg.norm(f)
    res = _kernel_residuals([e[None], f[None]], kb, kbg)[0]
    return e, f, res


def _feasible_search(objective, kern, dims, cfg, kb, kbg):
    """Local minima of ``objective`` pushed onto the range; returns factors and kernel residuals."""
    factors, _, _ = product_candidates(objective, dims, cfg)
    factors, feas = _polish(kern, dims, factors, kb, kbg, 20 * cfg.max_sweeps)
    for i in [i for i in np.argsort(feas) if _REFINED < feas[i] <= _REFINE_FROM]:
        e, f, res = _refine(factors[0][i], factors[1][i], kb, kbg)
        if res < feas[i]:
            factors[0][i], factors[1][i], feas[i] = e, f, res
    return factors, feas


def _noise_aware_tol(op, rank_tol):
    """Relative rank cut, raised to ten times the largest negative eigenvalue.

    Negative eigenvalues of a remainder are rounding debris; positive ones of
    the same size are indistinguishable from it and belong to the kernel.
    """
    ev = np.linalg.eigvalsh(op)
    if ev[-1] <= 0:
        return rank_tol
    return max(rank_tol, 10 * max(0.0, -ev[0]) / ev[-1])


def _clip_noise(op: np.ndarray, rank_tol: float) -> tuple[np.ndarray, float]:
    """Zero the eigenvalues at or below the noise floor and restore unit trace; returns the max change."""
    vals, vecs = np.linalg.eigh(op)
    vals = np.where(vals > _noise_aware_tol(op, rank_tol) * vals[-1], vals, 0.0)
    out = (vecs * (vals / vals.sum())) @ vecs.conj().T
    out = (out + out.conj().T) / 2
    return out, float(np.max(np.abs(out - op)))


def _candidate(rem: np.ndarray, dims, phase: str, cfg: OptConfig, rank_tol: float) -> _Candidate | None:
    """Best subtractable product projector for the current remainder.

    The search minimizes ``<v|R^+|v>`` (plus its partial-transpose analogue in
    the PPT phase) with a kernel penalty, then polishes each local minimum
    onto the range before evaluating the exact maximal weight.
    """
    tr = np.trace(rem).real
    r = rem / tr
    rk = range_kernel_projectors(r, _noise_aware_tol(r, rank_tol))
    rp = pseudo_inverse(r, _noise_aware_tol(r, rank_tol))
    g, kern, kbg = rp, rk.kernel_proj, None
    if phase == "ppt":
        rg = partial_transpose(r, dims, 0)
        rgp = pseudo_inverse(rg, _noise_aware_tol(rg, rank_tol))
        rkg = range_kernel_projectors(rg, _noise_aware_tol(rg, rank_tol))
        g = g + partial_transpose(rgp, dims, 0)
        kern = kern + partial_transpose(rkg.kernel_proj, dims, 0)
        kbg = rkg.kernel_basis
    g = g / np.linalg.norm(g, 2)
    if np.max(np.abs(kern)) == 0:
        factors, _, _ = product_candidates(g, dims, cfg)
        feas = np.zeros(factors[0].shape[0])
    else:
        factors, feas = _feasible_search(g + _PENALTY * kern, kern, dims, cfg, rk.kernel_basis, kbg)
        if not np.any(feas <= FEAS_TOL):
            # fallback: pure feasibility search with more, fresh starts
            wide = OptConfig(4 * cfg.n_starts, cfg.max_sweeps, cfg.sweep_tol, cfg.seed + 10**6)
            factors, feas = _feasible_search(kern, kern, dims, wide, rk.kernel_basis, kbg)
    # the cleanest feasibility tier present wins; weight only ranks within a tier
    tol = next((t for t in (_REFINED, FEAS_TOL, FEAS_TOL_LOOSE) if np.any(feas <= t)), FEAS_TOL_LOOSE)
    best = None
    for i in np.flatnonzero(feas <= tol):
        fs = [f[i] for f in factors]
        v = ProductVector(fs).vector()
        q = np.vdot(v, rp @ v).real
        if phase == "ppt":
            vc = ProductVector(fs).conj_party(0).vector()
            q = max(q, np.vdot(vc, rgp @ vc).real)
        w = tr / q
        if best is None or w > best.weight:
            best = _Candidate(w, fs)
    if best is not None:
        best.weight = _verified_weight(rem, dims, phase, best)
    return best


def _verified_weight(rem, dims, phase, cand: _Candidate) -> float:
    """Shrink the closed-form weight until the remainder (and its PT) stay above ``-NEG_TOL``."""
    pv = ProductVector(cand.factors)
    p = projector(pv.vector())
    pg = projector(pv.conj_party(0).vector()) if phase == "ppt" else None
    remg = partial_transpose(rem, dims, 0) if phase == "ppt" else None

    def ok(w):
        if np.linalg.eigvalsh(rem - w * p)[0] < -NEG_TOL:
            return False
        return pg is None or np.linalg.eigvalsh(remg - w * pg)[0] >= -NEG_TOL

    hi = cand.weight
    if ok(hi):
        return hi
    lo = 0.0
    for _ in range(50):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def _white_noise_terms(rem, dims, weight_tol) -> list[ProductTerm]:
    """The largest multiple of the identity removable while keeping ``rem`` PSD and PPT.

    ``mu I / D`` is an equal mixture of computational product projectors. Taking
    it out first spares the greedy search the nearly degenerate spectra of
    heavily noise-mixed inputs, where the two weight caps keep almost tying.
    """
    total = rem.shape[0]
    lo = min(np.linalg.eigvalsh(rem)[0], np.linalg.eigvalsh(partial_transpose(rem, dims, 0))[0])
    mu = total * lo
    if mu <= weight_tol:
        return []
    eye = [np.eye(d, dtype=complex) for d in dims]
    return [ProductTerm(mu / total, [eye[0][i], eye[1][j]]) for i in range(dims[0]) for j in range(dims[1])]


def _real_embed(h):
    return cp.bmat([[cp.real(h), -cp.imag(h)], [cp.imag(h), cp.real(h)]]) if isinstance(h, cp.Expression) else \
        np.block([[h.real, -h.imag], [h.imag, h.real]])


def _complex_dual(s, r):
    """Hermitian ``Z`` with ``Re Tr(Z H) = Tr(S R(H))`` for the real embedding ``R``."""
    return (s[:r, :r] + s[r:, r:]) + 1j * (s[r:, :r] - s[:r, r:])


class _Sides:
    """Range bases of the constrained operators (``rho`` and, in the PPT phase, ``rho^T_A``)."""

    def __init__(self, rho, dims, phase, rank_tol):
        self.dims, self.ppt = dims, phase == "ppt"
        self.ops = [rho] + ([partial_transpose(rho, dims, 0)] if self.ppt else [])
        self.rk = [range_kernel_projectors(o, _noise_aware_tol(o, rank_tol)) for o in self.ops]

    def kernel(self):
        kern = self.rk[0].kernel_proj
        kbg = None
        if self.ppt:
            kern = kern + partial_transpose(self.rk[1].kernel_proj, self.dims, 0)
            kbg = self.rk[1].kernel_basis
        return kern, self.rk[0].kernel_basis, kbg


def _pt_vectors(vecs, dims):
    """Partially conjugated product vectors ``|e*, f>`` (rows of ``vecs`` must be product)."""
    a, b = dims
    out = []
    for v in vecs:
        u, s, vh = np.linalg.svd(v.reshape(a, b))
        out.append(s[0] * np.kron(u[:, 0].conj(), vh[0]))
    return np.array(out)


def _solve_weights(sides: _Sides, vecs):
    """Maximize the total weight of the pool ``vecs`` keeping every constrained operator PSD on its range."""
    w = cp.Variable(len(vecs), nonneg=True)
    cons, bases = [], []
    colsets = [vecs] + ([_pt_vectors(vecs, sides.dims)] if sides.ppt else [])
    for op, rk, cols in zip(sides.ops, sides.rk, colsets):
        u = rk.range_basis
        c = cols @ u.conj()  # coordinates of each column in the range basis
        r = u.shape[1]
        proj = np.einsum("si,sj->sij", c, c.conj()).reshape(len(vecs), -1).T
        red = u.conj().T @ op @ u
        m = red - cp.reshape(proj @ w, (r, r), order="C")
        cons.append(_real_embed(m) >> 0)
        bases.append((u, r))
    prob = cp.Problem(cp.Maximize(cp.sum(w)), cons)
    try:
        with warnings.catch_warnings():
            # inexact solutions are fine: _feasible_scale re-verifies the weights exactly
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        return None, None
    if w.value is None:
        return None, None
    z = 0
    for k, (con, (u, r)) in enumerate(zip(cons, bases)):
        zk = u @ _complex_dual(con.dual_value, r) @ u.conj().T
        z = z + (partial_transpose(zk, sides.dims, 0) if k == 1 else zk)
    return np.clip(w.value, 0, None), (z + z.conj().T) / 2


def _feasible_scale(rho, dims, phase, vecs, w):
    """Largest ``t <= 1`` keeping ``rho - t sum w P`` (and its PT) above ``-NEG_TOL``."""
    s = np.einsum("s,si,sj->ij", w, vecs, vecs.conj())
    sg = partial_transpose(s, dims, 0) if phase == "ppt" else None
    rg = partial_transpose(rho, dims, 0) if phase == "ppt" else None

    def ok(t):
        if np.linalg.eigvalsh(rho - t * s)[0] < -NEG_TOL:
            return False
        return sg is None or np.linalg.eigvalsh(rg - t * sg)[0] >= -NEG_TOL

    if ok(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def _column_generation(rho, dims, phase, terms, cfg, rank_tol, rounds, weight_tol, gap_tol=1e-6, stall_tol=1e-4):
    """Raise the separable weight by re-optimizing all weights jointly over a growing pool of product vectors.

    Each round solves the weight SDP on the pool and prices new product
    vectors against its dual ``Z`` (searched on the range of the constrained
    operators); every distinct local minimum below the common dual value ``c``
    of the columns in use joins the pool. With ``m`` the best price found,
    ``lam (c/m - 1)`` estimates the remaining gap. The loop stops when that
    estimate drops below ``gap_tol``, when three rounds gain less than
    ``stall_tol`` together, or after ``rounds`` rounds. Returns improved
    terms, or ``None`` when nothing was gained.
    """
    sides = _Sides(rho, dims, phase, rank_tol)
    kern, kb, kbg = sides.kernel()
    vecs = np.array([ProductVector(t.factors).vector() for t in terms])
    facs = [list(t.factors) for t in terms]
    base = sum(t.weight for t in terms)
    best, history = None, []
    for rnd in range(rounds):
        w, z = _solve_weights(sides, vecs)
        if w is None:
            break
        t = _feasible_scale(rho, dims, phase, vecs, w)
        lam = t * w.sum()
        history.append(lam)
        if best is None or lam > best[0]:
            best = (lam, t * w, list(facs))
        if len(history) > 3 and history[-1] - history[-4] < stall_tol:
            break
        active = w > 1e-9 * w.max()
        c = np.median(np.einsum("si,ij,sj->s", vecs[active].conj(), z, vecs[active]).real)
        step = OptConfig(cfg.n_starts, cfg.max_sweeps, cfg.sweep_tol, cfg.seed + 7919 * (rnd + 1))
        zn = z / np.linalg.norm(z, 2)
        if np.max(np.abs(kern)) == 0:
            cand, _, _ = product_candidates(zn, dims, step)
            feas = np.zeros(cand[0].shape[0])
        else:
            cand, feas = _feasible_search(zn + _PENALTY * kern, kern, dims, step, kb, kbg)
        ok = np.flatnonzero(feas <= FEAS_TOL)
        if ok.size == 0 or c <= 0:
            break
        cv = np.array([ProductVector([f[i] for f in cand]).vector() for i in ok])
        prices = np.einsum("si,ij,sj->s", cv.conj(), z, cv).real
        if prices.min() <= 0 or lam * (c / prices.min() - 1) < gap_tol:
            break
        picked = []
        for j in np.argsort(prices):
            if prices[j] >= c * (1 - 1e-7):
                break
            if all(abs(np.vdot(cv[j], cv[k])) < 1 - 1e-9 for k in picked):
                picked.append(j)
        if not picked:
            break
        vecs = np.concatenate([vecs, cv[picked]])
        facs += [[f[ok[j]] for f in cand] for j in picked]
    if best is None or best[0] <= base + weight_tol:
        return None
    lam, w, facs = best
    return [ProductTerm(float(wi), fs) for wi, fs in zip(w, facs) if wi > 0]


def best_separable_approximation(rho: np.ndarray, dims: Sequence[int], mode: str = "ALL",
                                 cfg: OptConfig | None = None, weight_tol: float = WEIGHT_TOL,
                                 rank_tol: float = RANK_TOL, psd_tol: float = PSD_TOL,
                                 edge_tol: float = EDGE_TOL, max_iter: int | None = None,
                                 refine_rounds: int = REFINE_ROUNDS) -> OptimalDecomposition:
    """Greedy subtraction of product projectors, then a joint re-weighting over a growing product pool.

    Mode ``PPT`` keeps the remainder PSD and PPT, ending on a PPT edge state.
    Mode ``ALL`` keeps it PSD only; for PPT inputs it first exhausts the
    PPT-preserving subtractions, which cannot hurt the final weight and
    reaches ``lam = 1`` whenever PPT implies separability.
    Greedy subtraction alone stops at an optimal decomposition, whose
    remainder has no removable product vector, but not necessarily at the best
    one. When ``lam < 1`` the weights of all collected product projectors are
    re-optimized together (a small SDP), new product vectors are priced
    against its dual, and the greedy loop resumes on the new remainder;
    ``refine_rounds = 0`` disables this stage.
    The reported ``lam`` is a lower bound on the best separable weight.
    """
    cfg = cfg or OptConfig()
    dims = check_dims(rho, dims)
    if len(dims) != 2:
        raise DimensionError("BSA is implemented for bipartite shapes")
    mode = mode.upper()
    if mode not in ("ALL", "PPT"):
        raise ValueError(f"unknown mode {mode!r}")
    is_ppt, lo = ppt_criterion(rho, dims, 0, psd_tol)
    if mode == "PPT" and not is_ppt:
        raise ValueError(f"PPT mode needs a PPT input (min PT eigenvalue {lo:.3e})")
    phases = ["ppt"] if mode == "PPT" else (["ppt", "psd"] if is_ppt else ["psd"])
    total = rho.shape[0]
    max_iter = max_iter or total * total
    rho = (rho + rho.conj().T) / 2
    rem = rho
    terms: list[ProductTerm] = []
    it = 0

    def greedy(rem, phase, it, min_weight=weight_tol, limit=max_iter):
        found = []
        while it < limit and np.trace(rem).real > min_weight:
            step_cfg = OptConfig(cfg.n_starts, cfg.max_sweeps, cfg.sweep_tol, cfg.seed + it)
            cand = _candidate(rem, dims, phase, step_cfg, rank_tol)
            if cand is None or cand.weight < min_weight:
                break
            term = ProductTerm(cand.weight, cand.factors)
            rem = rem - term.weight * term.projector()
            rem = (rem + rem.conj().T) / 2
            found.append(term)
            it += 1
        return rem, found, it

    for phase in phases:
        if phase == "ppt":
            noise = _white_noise_terms(rem, dims, weight_tol)
            for term in noise:
                rem = rem - term.weight * term.projector()
            rem = (rem + rem.conj().T) / 2
            terms += noise
        rem, found, it = greedy(rem, phase, it)
        terms += found
    meta: dict = {}
    lam = float(sum(t.weight for t in terms))
    if refine_rounds > 0 and terms and 1 - lam > weight_tol:
        better = _column_generation(rho, dims, phases[-1], terms, cfg, rank_tol, refine_rounds, weight_tol)
        if better is not None:
            rem = rho - sum(t.weight * t.projector() for t in better)
            # the re-weighting leaves sub-tolerance tails in the remainder's spectrum; these
            # still span product vectors, so the last pass takes arbitrarily small weights
            rem, found, it = greedy((rem + rem.conj().T) / 2, phases[-1], it, CLEANUP_WEIGHT, it + total * total)
            meta["refined_from"] = lam
            terms = better + found
    lam = float(sum(t.weight for t in terms))
    rest = 1 - lam
    edge = rem / rest if rest > 0 else np.zeros_like(rem)
    if rest > weight_tol:
        edge, meta["edge_clip"] = _clip_noise(edge, rank_tol)
    residual = float("nan")
    if rest > weight_tol:
        if mode == "PPT":
            try:
                residual = ppt_edge_check(edge, dims, cfg, edge_tol, rank_tol, psd_tol=1e-7).residual
            except ValueError as exc:
                # a tiny remainder rescaled to unit trace magnifies rounding noise
                meta["edge_check"] = f"skipped: {exc}"
        else:
            residual = range_contains_product(edge, dims, cfg, edge_tol, rank_tol).residual
    return OptimalDecomposition(lam, terms, edge, dims, it, mode, it >= max_iter, residual, meta)
