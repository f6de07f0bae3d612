"""Minimization of Hermitian quadratic forms over product and Schmidt-rank-k vectors.

All searches are multi-start alternating minimizations: with every factor but
one held fixed the form reduces to a small Hermitian matrix, minimized exactly
by its lowest eigenvector. Every start runs in one batched numpy pipeline.
The returned minima are upper bounds on the true infima.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from string import ascii_letters
from typing import Sequence

import numpy as np

from .linalg import DimensionError, check_dims, partial_transpose, range_kernel_projectors, RANK_TOL, PSD_TOL, psd_check

EDGE_TOL = 1e-7


@dataclass
class ProductVector:
    factors: list[np.ndarray]

    def __post_init__(self):
        self.factors = [np.asarray(f, dtype=complex) / np.linalg.norm(f) for f in self.factors]

    @property
    def dims(self) -> list[int]:
        return [f.size for f in self.factors]

    def vector(self) -> np.ndarray:
        return reduce(np.kron, self.factors)

    def conj_party(self, party: int = 0) -> "ProductVector":
        fs = list(self.factors)
        fs[party] = fs[party].conj()
        return ProductVector(fs)


@dataclass(frozen=True)
class OptConfig:
    n_starts: int = 32
    max_sweeps: int = 200
    sweep_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


@dataclass
class OptResult:
    value: float
    argument: ProductVector | np.ndarray
    starts_used: int
    converged: bool
    factors: tuple = field(default=(), repr=False)

    def vector(self) -> np.ndarray:
        if isinstance(self.argument, ProductVector):
            return self.argument.vector()
        return self.argument


def quadratic_form(op: np.ndarray, vec: np.ndarray) -> float:
    return float(np.real(np.vdot(vec, op @ vec)))


def _random_unit(rng: np.random.Generator, shape) -> np.ndarray:
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def _lowest_eigvec(op: np.ndarray) -> np.ndarray:
    return np.linalg.eigh((op + op.conj().T) / 2)[1][:, 0]


# --- batched engines -------------------------------------------------------


def _reduced_subscripts(n: int, j: int) -> str:
    ket = ascii_letters[:n]
    bra = ascii_letters[n : 2 * n]
    ops = [f"s{ket[k]}" for k in range(n) if k != j]
    ops += [ket + bra]
    ops += [f"s{bra[k]}" for k in range(n) if k != j]
    return ",".join(ops) + f"->s{ket[j]}{bra[j]}"


def _batched_values(op: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    return np.einsum("si,ij,sj->s", vecs.conj(), op, vecs).real


def _assemble(factors: list[np.ndarray]) -> np.ndarray:
    out = factors[0]
    for f in factors[1:]:
        out = np.einsum("si,sj->sij", out, f).reshape(out.shape[0], -1)
    return out


def alternate_product(op, dims, factors, max_sweeps, sweep_tol):
    """Run batched alternating sweeps; ``factors`` is a list of ``(S, d_i)`` arrays."""
    n = len(dims)
    t = op.reshape(tuple(dims) * 2)
    subs = [_reduced_subscripts(n, j) for j in range(n)]
    factors = [f.copy() for f in factors]
    values = _batched_values(op, _assemble(factors))
    converged = np.zeros(values.shape, dtype=bool)
    paths = [None] * n
    for _ in range(max_sweeps):
        for j in range(n):
            others = [factors[k].conj() for k in range(n) if k != j]
            others_r = [factors[k] for k in range(n) if k != j]
            if paths[j] is None:
                paths[j] = np.einsum_path(subs[j], *others, t, *others_r, optimize="greedy")[0]
            m = np.einsum(subs[j], *others, t, *others_r, optimize=paths[j])
            w, v = np.linalg.eigh((m + m.conj().transpose(0, 2, 1)) / 2)
            factors[j] = v[:, :, 0]
        new = w[:, 0]
        converged = values - new < sweep_tol
        values = new
        if converged.all():
            break
    values = _batched_values(op, _assemble(factors))
    return factors, values, converged


def alternate_schmidt(op, da, db, x, y, max_sweeps, sweep_tol):
    """Batched alternating sweeps over ``psi_ab = sum_l x_al y_bl`` with ``x: (S, da, k)``."""
    t = op.reshape(da, db, da, db)
    s, _, k = x.shape
    values = None
    converged = np.zeros(s, dtype=bool)
    path = np.einsum_path("sbl,abcd,sdm->salcm", y.conj(), t, y, optimize="greedy")[0]
    for _ in range(max_sweeps):
        y, _ = np.linalg.qr(y)
        m = np.einsum("sbl,abcd,sdm->salcm", y.conj(), t, y, optimize=path).reshape(s, da * k, da * k)
        w, v = np.linalg.eigh((m + m.conj().transpose(0, 2, 1)) / 2)
        x = v[:, :, 0].reshape(s, da, k)
        x, _ = np.linalg.qr(x)
        m = np.einsum("sal,abcd,scm->sbldm", x.conj(), t, x, optimize=path).reshape(s, db * k, db * k)
        w, v = np.linalg.eigh((m + m.conj().transpose(0, 2, 1)) / 2)
        y = v[:, :, 0].reshape(s, db, k)
        new = w[:, 0]
        if values is not None:
            converged = values - new < sweep_tol
        values = new
        if converged.all():
            break
    psi = np.einsum("sal,sbl->sab", x, y).reshape(s, -1)
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    return x, y, psi, _batched_values(op, psi), converged


def _product_starts(op, dims, cfg: OptConfig, init=None) -> list[np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    starts = [list(pv.factors) for pv in (init or [])]
    # deterministic warm start: local marginals of the lowest eigenvector
    low = _lowest_eigvec(op).reshape(dims)
    warm = []
    for j in range(len(dims)):
        m = np.moveaxis(low, j, 0).reshape(dims[j], -1)
        warm.append(np.linalg.svd(m)[0][:, 0])
    starts.append(warm)
    while len(starts) < cfg.n_starts:
        starts.append([_random_unit(rng, d) for d in dims])
    return [np.array([st[j] for st in starts]) for j in range(len(dims))]


def _best(values: np.ndarray) -> int:
    return int(np.argmin(values))


# --- public API ------------------------------------------------------------


def min_over_product(op: np.ndarray, dims: Sequence[int], cfg: OptConfig | None = None,
                     init: Sequence[ProductVector] | None = None) -> OptResult:
    """Upper bound on ``inf <e,f,...|op|e,f,...>`` over normalized product vectors."""
    cfg = cfg or OptConfig()
    dims = check_dims(op, dims)
    if len(dims) < 2:
        raise DimensionError("product optimization needs at least two factors")
    factors, values, conv = alternate_product(op, dims, _product_starts(op, dims, cfg, init),
                                              cfg.max_sweeps, cfg.sweep_tol)
    i = _best(values)
    pv = ProductVector([f[i] for f in factors])
    return OptResult(quadratic_form(op, pv.vector()), pv, values.size, bool(conv[i]))


def product_candidates(op, dims, cfg: OptConfig | None = None, init=None):
    """All local minima found (one per start) as ``(factor arrays, values, converged)``."""
    cfg = cfg or OptConfig()
    dims = check_dims(op, dims)
    return alternate_product(op, dims, _product_starts(op, dims, cfg, init), cfg.max_sweeps, cfg.sweep_tol)


def _schmidt_starts(op, da, db, k, cfg: OptConfig):
    rng = np.random.default_rng(cfg.seed)
    u, s, vh = np.linalg.svd(_lowest_eigvec(op).reshape(da, db))
    x0 = u[:, :k] * s[:k]
    y0 = vh[:k].T
    xs = _random_unit(rng, (cfg.n_starts - 1, da * k)).reshape(-1, da, k)
    ys = _random_unit(rng, (cfg.n_starts - 1, db * k)).reshape(-1, db, k)
    return np.concatenate([x0[None], xs]), np.concatenate([y0[None], ys])


def schmidt_candidates(op, dims, k, cfg: OptConfig | None = None):
    cfg = cfg or OptConfig()
    da, db = dims
    x, y = _schmidt_starts(op, da, db, k, cfg)
    return alternate_schmidt(op, da, db, x, y, cfg.max_sweeps, cfg.sweep_tol)


def min_over_schmidt_k(op: np.ndarray, dims: Sequence[int], k: int, cfg: OptConfig | None = None) -> OptResult:
    """Upper bound on ``inf <psi|op|psi>`` over unit vectors of Schmidt rank <= k."""
    cfg = cfg or OptConfig()
    dims = check_dims(op, dims)
    if len(dims) != 2:
        raise DimensionError("Schmidt-rank optimization needs a bipartite shape")
    if not 1 <= k <= min(dims):
        raise ValueError(f"k must be in [1, {min(dims)}], got {k}")
    if k == 1:
        return min_over_product(op, dims, cfg)
    x, y, psi, values, conv = schmidt_candidates(op, dims, k, cfg)
    i = _best(values)
    return OptResult(quadratic_form(op, psi[i]), psi[i], values.size, bool(conv[i]), (x[i], y[i]))


def min_ratio_over_product(num: np.ndarray, den: np.ndarray, dims: Sequence[int],
                           cfg: OptConfig | None = None) -> OptResult:
    """Upper bound on ``inf <v|num|v> / <v|den|v>`` over product ``v``.

    ``num`` and ``den`` must both be nonnegative on product vectors (``den``
    may be a partially transposed projector), so each reduced problem is a
    generalized eigenproblem of two PSD matrices.
    """
    cfg = cfg or OptConfig()
    dims = check_dims(num, dims)
    n = len(dims)
    tn = num.reshape(tuple(dims) * 2)
    td = den.reshape(tuple(dims) * 2)
    subs = [_reduced_subscripts(n, j) for j in range(n)]
    factors = _product_starts(den - num, dims, cfg)
    scale = np.trace(num).real / num.shape[0]

    def ratio(fs):
        v = _assemble(fs)
        a, b = _batched_values(num, v), _batched_values(den, v)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(b > 1e-300, a / np.maximum(b, 1e-300), np.inf)

    values = ratio(factors)
    conv = np.zeros(values.shape, dtype=bool)
    paths = [None] * n
    for _ in range(cfg.max_sweeps):
        for j in range(n):
            oc = [factors[k].conj() for k in range(n) if k != j]
            o = [factors[k] for k in range(n) if k != j]
            if paths[j] is None:
                paths[j] = np.einsum_path(subs[j], *oc, tn, *o, optimize="greedy")[0]
            ma = np.einsum(subs[j], *oc, tn, *o, optimize=paths[j])
            mb = np.einsum(subs[j], *oc, td, *o, optimize=paths[j])
            ma = (ma + ma.conj().transpose(0, 2, 1)) / 2
            mb = (mb + mb.conj().transpose(0, 2, 1)) / 2
            reg = ma + (1e-13 * abs(scale) + 1e-300) * np.eye(dims[j])
            lo = np.linalg.cholesky(reg)
            li = np.linalg.inv(lo)
            c = li @ mb @ li.conj().transpose(0, 2, 1)
            w, v = np.linalg.eigh((c + c.conj().transpose(0, 2, 1)) / 2)
            x = np.linalg.solve(lo.conj().transpose(0, 2, 1), v[:, :, -1:])[:, :, 0]
            factors[j] = x / np.linalg.norm(x, axis=1, keepdims=True)
        new = ratio(factors)
        with np.errstate(invalid="ignore"):
            conv = (values == new) | (np.abs(values - new) < cfg.sweep_tol)
        values = np.minimum(values, new)
        if conv.all():
            break
    final = ratio(factors)
    i = _best(final)
    return OptResult(float(final[i]), ProductVector([f[i] for f in factors]), final.size, bool(conv[i]))


# --- range tests -----------------------------------------------------------


@dataclass
class RangeTest:
    found: bool
    residual: float
    vector: ProductVector | np.ndarray | None


def range_contains_product(delta: np.ndarray, dims: Sequence[int], cfg: OptConfig | None = None,
                           edge_tol: float = EDGE_TOL, rank_tol: float = RANK_TOL) -> RangeTest:
    """Search for a product vector in the range of ``delta`` by minimizing its kernel weight."""
    rk = range_kernel_projectors(delta, rank_tol)
    if rk.rank == delta.shape[0]:
        return RangeTest(True, 0.0, ProductVector([np.eye(d)[0] for d in dims]))
    res = min_over_product(rk.kernel_proj, dims, cfg)
    found = res.value <= edge_tol
    return RangeTest(found, max(res.value, 0.0), res.argument)


def range_contains_schmidt_k(delta: np.ndarray, dims: Sequence[int], k: int, cfg: OptConfig | None = None,
                             edge_tol: float = EDGE_TOL, rank_tol: float = RANK_TOL) -> RangeTest:
    rk = range_kernel_projectors(delta, rank_tol)
    if rk.rank == delta.shape[0]:
        return RangeTest(True, 0.0, None)
    res = min_over_schmidt_k(rk.kernel_proj, dims, k, cfg)
    return RangeTest(res.value <= edge_tol, max(res.value, 0.0), res.argument)


@dataclass
class EdgeTest:
    is_ppt_edge: bool
    residual: float
    vector: ProductVector | None


def ppt_edge_operator(delta: np.ndarray, dims: Sequence[int], rank_tol: float = RANK_TOL) -> np.ndarray:
    """``K(delta) + K(delta^T_A)^T_A``: its product expectation vanishes exactly on
    product vectors |e,f> in R(delta) whose partial conjugate |e*,f> lies in R(delta^T_A)."""
    kp = range_kernel_projectors(delta, rank_tol).kernel_proj
    kq = range_kernel_projectors(partial_transpose(delta, dims, 0), rank_tol).kernel_proj
    return kp + partial_transpose(kq, dims, 0)


def ppt_edge_check(delta: np.ndarray, dims: Sequence[int], cfg: OptConfig | None = None,
                   edge_tol: float = EDGE_TOL, rank_tol: float = RANK_TOL, psd_tol: float = PSD_TOL) -> EdgeTest:
    dims = check_dims(delta, dims)
    ok, lo = psd_check(partial_transpose(delta, dims, 0), psd_tol * max(1.0, np.trace(delta).real))
    if not ok:
        raise ValueError(f"input is not PPT (min PT eigenvalue {lo:.3e})")
    res = min_over_product(ppt_edge_operator(delta, dims, rank_tol), dims, cfg)
    return EdgeTest(res.value > edge_tol, max(res.value, 0.0), res.argument)
