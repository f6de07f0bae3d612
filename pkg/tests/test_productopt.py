import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entworkbench.linalg import DimensionError, partial_transpose, projector
from entworkbench.productopt import (OptConfig, min_over_product, min_over_schmidt_k, min_ratio_over_product,
                                     ppt_edge_check, quadratic_form, range_contains_product, range_contains_schmidt_k)
from entworkbench.states import (WernerFamily, max_entangled_projector, random_density, random_pure, random_separable,
                                 schmidt_decompose, singlet)

from conftest import random_hermitian
from oracles import brute_min_2x2, form_values, random_local_vectors
from strategies import seeds


def test_identity_and_singlet():
    assert abs(min_over_product(np.eye(6), [2, 3]).value - 1) < 1e-12
    pa = projector(singlet())
    assert abs(min_over_product(pa, [2, 2]).value) < 1e-10
    assert abs(brute_min_2x2(pa, n=20, refine=0)) < 1e-2


def test_max_entangled_complement():
    assert abs(min_over_product(np.eye(4) - max_entangled_projector(2), [2, 2]).value - 0.5) < 1e-9


@pytest.mark.parametrize("m", [2, 3, 4])
def test_k_over_m_overlap_law(m):
    p = max_entangled_projector(m)
    for k in range(1, m + 1):
        res = min_over_schmidt_k(-p, [m, m], k)
        assert abs(-res.value - k / m) < 1e-6
        assert schmidt_decompose(res.vector(), [m, m]).rank(1e-6) <= k


def test_full_k_is_min_eigenvalue(rng):
    h = random_hermitian(9, rng)
    assert abs(min_over_schmidt_k(h, [3, 3], 3).value - np.linalg.eigvalsh(h)[0]) < 1e-8


def test_werner_half_d_zero():
    op = WernerFamily(3, 1.5).state_pt()
    assert abs(min_over_schmidt_k(op, [3, 3], 2).value) < 1e-9


def test_range_contains_product_examples():
    full = random_density([2, 3], seed=1)
    r = range_contains_product(full, [2, 3])
    assert r.found and r.residual == 0
    psi = random_pure(6, 2)
    r = range_contains_product(projector(psi), [2, 3])
    lam_max = schmidt_decompose(psi, [2, 3]).coefficients[0]
    assert not r.found and abs(r.residual - (1 - lam_max**2)) < 1e-8
    sep = random_separable([3, 3], 3, seed=3)
    assert range_contains_product(sep, [3, 3]).found


def test_range_contains_schmidt_k():
    p = max_entangled_projector(3)
    assert not range_contains_schmidt_k(p, [3, 3], 2).found
    assert range_contains_schmidt_k(p, [3, 3], 3).found


def test_ppt_edge_trivial_cases():
    full = random_separable([2, 3], 8, seed=4)
    e = ppt_edge_check(full, [2, 3])
    assert not e.is_ppt_edge and e.residual < 1e-12
    with pytest.raises(ValueError):
        ppt_edge_check(projector(singlet()), [2, 2])


def test_schmidt_needs_bipartite():
    with pytest.raises(DimensionError):
        min_over_schmidt_k(np.eye(8), [2, 2, 2], 2)


def test_brute_force_agreement_2x2(rng):
    for _ in range(3):
        h = random_hermitian(4, rng)
        assert abs(min_over_product(h, [2, 2]).value - brute_min_2x2(h, n=30)) < 1e-4


def test_min_ratio_matches_sampling():
    num = np.eye(4) - max_entangled_projector(2)
    den = np.eye(4)
    res = min_ratio_over_product(num, den, [2, 2])
    assert abs(res.value - 0.5) < 1e-8


@given(seed=seeds)
def test_product_min_bounds(seed):
    rng = np.random.default_rng(seed)
    h = random_hermitian(6, rng)
    res = min_over_product(h, [2, 3], OptConfig(n_starts=8, seed=seed))
    assert res.value >= np.linalg.eigvalsh(h)[0] - 1e-10
    # an upper bound on the infimum: sampled product values never beat it by more than noise
    samples = form_values(h, random_local_vectors([2, 3], 400, rng))
    assert res.value <= samples.min() + 1e-9
    assert abs(quadratic_form(h, res.vector()) - res.value) < 1e-10


@given(seed=seeds)
def test_schmidt_min_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    h = random_hermitian(9, rng)
    vals = [min_over_schmidt_k(h, [3, 3], k, OptConfig(n_starts=8, seed=seed)).value for k in (1, 2, 3)]
    assert vals[0] >= vals[1] - 1e-8 and vals[1] >= vals[2] - 1e-8
    assert abs(vals[2] - np.linalg.eigvalsh(h)[0]) < 1e-8
