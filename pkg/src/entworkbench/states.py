"""Named states, the Werner family, Schmidt analysis and seeded sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import DimensionError, partial_transpose, projector, swap_operator
from .productopt import ProductVector


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def max_entangled(d: int) -> np.ndarray:
    """sum_i |ii> / sqrt(d) on dims ``[d, d]``."""
    if d < 2:
        raise ValueError("d must be at least 2")
    return np.eye(d).reshape(-1).astype(complex) / np.sqrt(d)


def max_entangled_projector(d: int) -> np.ndarray:
    return projector(max_entangled(d))


def sym_antisym_projectors(d: int) -> tuple[np.ndarray, np.ndarray]:
    if d < 2:
        raise ValueError("d must be at least 2")
    v = swap_operator(d)
    eye = np.eye(d * d)
    return (eye + v) / 2, (eye - v) / 2


def singlet() -> np.ndarray:
    return np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class WernerFamily:
    """U(x)U-invariant family with partial transpose proportional to ``I - beta * P_psi``."""

    d: int
    beta: float

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if not -1 <= self.beta < self.d:
            raise ValueError(f"beta must lie in [-1, {self.d}), got {self.beta}")

    @property
    def alpha(self) -> float:
        return (self.d + self.beta) / (self.d - self.beta)

    @property
    def norm(self) -> float:
        d = self.d
        return d * (d + 1) / 2 + self.alpha * d * (d - 1) / 2

    @property
    def norm_pt(self) -> float:
        return self.d**2 - self.beta

    def state(self) -> np.ndarray:
        ps, pa = sym_antisym_projectors(self.d)
        return ((ps + self.alpha * pa) / self.norm).astype(complex)

    def state_pt(self) -> np.ndarray:
        """The partial transpose, built directly from ``I - beta * P_psi``."""
        d = self.d
        return ((np.eye(d * d) - self.beta * max_entangled_projector(d)) / self.norm_pt).astype(complex)


def werner_state(d: int, beta: float, check: bool = True) -> np.ndarray:
    fam = WernerFamily(d, beta)
    rho = fam.state()
    if check:
        gap = np.max(np.abs(partial_transpose(rho, [d, d], 0) - fam.state_pt()))
        if gap > 1e-10:
            raise ArithmeticError(f"Werner forms disagree by {gap:.2e}")
    return rho


def isotropic_state(d: int, p: float) -> np.ndarray:
    """p * P_psi + (1 - p) * I / d^2."""
    return p * max_entangled_projector(d) + (1 - p) * np.eye(d * d) / d**2


def horodecki_3x3(a: float) -> np.ndarray:
    """Horodecki's 3x3 PPT entangled family, 0 < a < 1."""
    if not 0 <= a <= 1:
        raise ValueError("a must lie in [0, 1]")
    m = np.zeros((9, 9))
    for i in (0, 4, 8):
        for j in (0, 4, 8):
            m[i, j] = a
    for i in (1, 2, 3, 5, 7):
        m[i, i] = a
    b = np.sqrt(1 - a * a) / 2
    m[6, 6] = m[8, 8] = (1 + a) / 2
    m[6, 8] = m[8, 6] = b
    return (m / (8 * a + 1)).astype(complex)


@dataclass(frozen=True)
class SchmidtDecomposition:
    coefficients: np.ndarray
    basis_a: np.ndarray  # columns
    basis_b: np.ndarray  # columns

    def rank(self, tol: float = 1e-8) -> int:
        return int(np.sum(self.coefficients > tol))

    def vector(self) -> np.ndarray:
        return np.einsum("i,ai,bi->ab", self.coefficients, self.basis_a, self.basis_b).reshape(-1)


def schmidt_decompose(psi: np.ndarray, dims: Sequence[int]) -> SchmidtDecomposition:
    if len(dims) != 2:
        raise DimensionError("Schmidt decomposition needs exactly two factors")
    da, db = dims
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (da * db,):
        raise DimensionError(f"vector of length {psi.shape} does not match dims {dims}")
    u, s, vh = np.linalg.svd(psi.reshape(da, db))
    return SchmidtDecomposition(s, u[:, : s.size], vh[: s.size].T)


def schmidt_rank(psi: np.ndarray, dims: Sequence[int], tol: float = 1e-8) -> int:
    return schmidt_decompose(psi, dims).rank(tol)


def random_density(dims: Sequence[int], rank: int | None = None, seed=None) -> np.ndarray:
    """Ginibre-distributed state G G^dag / Tr with G of shape ``total x rank``."""
    total = int(np.prod(dims))
    rank = total if rank is None else rank
    if not 1 <= rank <= total:
        raise ValueError(f"rank must be in [1, {total}]")
    rng = as_rng(seed)
    g = rng.standard_normal((total, rank)) + 1j * rng.standard_normal((total, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(dim: int, seed=None) -> np.ndarray:
    rng = as_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_product_vector(dims: Sequence[int], seed=None) -> ProductVector:
    rng = as_rng(seed)
    return ProductVector([random_pure(d, rng) for d in dims])


def random_separable(dims: Sequence[int], terms: int, seed=None) -> np.ndarray:
    """Dirichlet-weighted mixture of ``terms`` random product projectors."""
    rng = as_rng(seed)
    w = rng.dirichlet(np.ones(terms))
    rho = sum(wi * projector(random_product_vector(dims, rng).vector()) for wi in w)
    return rho
