"""Dense complex-matrix primitives for operators on multipartite spaces.

Operators are plain ``numpy`` arrays; the tensor structure travels alongside
as a ``dims`` sequence of local dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

HERM_TOL = 1e-10
RANK_TOL = 1e-8
PSD_TOL = 1e-9
# dense storage only; larger problems need an explicit opt-in
MAX_DIM = 200


class DimensionError(ValueError):
    """Operator side length or subsystem index incompatible with ``dims``."""


class NotHermitianError(ValueError):
    pass


class ToleranceError(RuntimeError):
    """A numerical result fell outside its documented tolerance."""


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, matching order

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def check_dims(op: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise DimensionError(f"dims must be positive, got {dims}")
    total = int(np.prod(dims))
    if op.ndim == 1:
        ok = op.shape[0] == total
    else:
        ok = op.ndim == 2 and op.shape == (total, total)
    if not ok:
        raise DimensionError(f"array of shape {op.shape} does not match dims {dims}")
    return dims


def check_cap(total: int, allow_large: bool = False) -> None:
    if total > MAX_DIM and not allow_large:
        raise DimensionError(f"dimension {total} exceeds the dense cap {MAX_DIM}; pass allow_large to override")


def is_hermitian(op: np.ndarray, tol: float = HERM_TOL) -> bool:
    return op.ndim == 2 and op.shape[0] == op.shape[1] and np.max(np.abs(op - op.conj().T), initial=0.0) <= tol


def tensor_product(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of operators or vectors, left to right."""
    return reduce(np.kron, ops)


def _subsystems(sub: int | Sequence[int], n: int) -> list[int]:
    subs = [sub] if np.isscalar(sub) else list(sub)
    for s in subs:
        if not 0 <= int(s) < n:
            raise DimensionError(f"subsystem index {s} out of range for {n} factors")
    return [int(s) for s in subs]


def partial_transpose(op: np.ndarray, dims: Sequence[int], subsystem: int | Sequence[int]) -> np.ndarray:
    """Transpose the listed tensor factors of ``op``."""
    dims = check_dims(op, dims)
    n = len(dims)
    axes = list(range(2 * n))
    for s in _subsystems(subsystem, n):
        axes[s], axes[n + s] = axes[n + s], axes[s]
    t = op.reshape(dims + dims).transpose(axes)
    return t.reshape(op.shape)


def partial_trace(op: np.ndarray, dims: Sequence[int], keep: int | Sequence[int]) -> np.ndarray:
    """Trace out every factor not listed in ``keep`` (kept factors stay in order)."""
    dims = check_dims(op, dims)
    n = len(dims)
    keep = sorted(set(_subsystems(keep, n)))
    if not keep:
        raise DimensionError("keep set must be nonempty")
    drop = [i for i in range(n) if i not in keep]
    dk = int(np.prod([dims[i] for i in keep]))
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    t = op.reshape(dims + dims).transpose(keep + drop + [n + i for i in keep] + [n + i for i in drop])
    return np.einsum("ijkj->ik", t.reshape(dk, dd, dk, dd))


def permute_subsystems(op: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: new factor ``i`` is old factor ``perm[i]``."""
    dims = check_dims(op, dims)
    n = len(dims)
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(n)):
        raise DimensionError(f"{perm} is not a permutation of {n} factors")
    if op.ndim == 1:
        return op.reshape(dims).transpose(perm).reshape(-1)
    t = op.reshape(dims + dims).transpose(perm + [n + p for p in perm])
    return t.reshape(op.shape)


def eigh(op: np.ndarray, tol: float = HERM_TOL) -> SpectralData:
    if not is_hermitian(op, tol):
        raise NotHermitianError("operator is not Hermitian within tolerance")
    w, v = np.linalg.eigh((op + op.conj().T) / 2)
    return SpectralData(w[::-1].copy(), v[:, ::-1].copy())


def min_eigenvalue(op: np.ndarray) -> float:
    return float(np.linalg.eigvalsh((op + op.conj().T) / 2)[0])


def psd_check(op: np.ndarray, tol: float = PSD_TOL) -> tuple[bool, float]:
    """Return ``(is_psd, min_eigenvalue)`` with ``is_psd`` iff min eigenvalue >= -tol."""
    lo = min_eigenvalue(op)
    return lo >= -tol, lo


@dataclass(frozen=True)
class RangeKernel:
    range_proj: np.ndarray
    kernel_proj: np.ndarray
    rank: int
    range_basis: np.ndarray
    kernel_basis: np.ndarray


def range_kernel_projectors(op: np.ndarray, rank_tol: float = RANK_TOL) -> RangeKernel:
    """Split the space into the span of eigenvalues above ``rank_tol * lambda_max`` and the rest.

    Negative eigenvalues always land in the kernel, which is what callers
    want for nearly-PSD remainders.
    """
    spec = eigh(op, tol=max(HERM_TOL, 1e-12 * np.max(np.abs(op), initial=0.0)))
    top = spec.eigenvalues[0] if spec.eigenvalues.size else 0.0
    cut = rank_tol * top if top > 0 else np.inf
    mask = spec.eigenvalues > cut
    r = int(mask.sum())
    rb = spec.eigenvectors[:, mask]
    kb = spec.eigenvectors[:, ~mask]
    return RangeKernel(rb @ rb.conj().T, kb @ kb.conj().T, r, rb, kb)


def pseudo_inverse(op: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Inverse on the range (same cut as :func:`range_kernel_projectors`)."""
    spec = eigh(op, tol=max(HERM_TOL, 1e-12 * np.max(np.abs(op), initial=0.0)))
    top = spec.eigenvalues[0] if spec.eigenvalues.size else 0.0
    mask = spec.eigenvalues > (rank_tol * top if top > 0 else np.inf)
    v = spec.eigenvectors[:, mask]
    return (v / spec.eigenvalues[mask]) @ v.conj().T


def rank(op: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    """Number of eigenvalues with ``|lambda| > rank_tol * max |lambda|`` (signed spectra count fully)."""
    vals = np.abs(eigh(op, tol=max(HERM_TOL, 1e-12 * np.max(np.abs(op), initial=0.0))).eigenvalues)
    top = vals.max(initial=0.0)
    return int(np.sum(vals > rank_tol * top)) if top > 0 else 0


def swap_operator(d: int) -> np.ndarray:
    v = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            v[i * d + j, j * d + i] = 1.0
    return v


def projector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec)
    return np.outer(vec, vec.conj())
