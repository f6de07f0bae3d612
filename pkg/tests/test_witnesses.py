import numpy as np
import pytest
from hypothesis import given, settings

from entworkbench.linalg import ToleranceError, partial_transpose, projector, swap_operator
from entworkbench.productopt import OptConfig, min_over_product
from entworkbench.separability import best_separable_approximation
from entworkbench.states import (horodecki_3x3, max_entangled_projector, random_density, random_separable,
                                 singlet)
from entworkbench.witnesses import (WitnessOperator, canonical_form_extract, construct_edge_witness,
                                    construct_nd_edge_witness, detects, nondecomposability_probe,
                                    optimize_witness, reduction_range_check, swap_witness, validate_witness)

from oracles import form_values, random_local_vectors
from strategies import seeds


def schmidt_vector(a):
    b = np.sqrt(1 - a * a)
    return np.array([a, 0, 0, b], dtype=complex)


@pytest.fixture(scope="module")
def horodecki_edge():
    return best_separable_approximation(horodecki_3x3(0.3), [3, 3], "PPT").edge_part


def test_edge_witness_singlet():
    w = construct_edge_witness(projector(singlet()), [2, 2])
    assert abs(w.epsilon - 0.5) < 1e-6
    assert np.allclose(w.provenance["P"], np.eye(4) - projector(singlet()), atol=1e-12)
    assert detects(w, projector(singlet())).detected
    assert abs(np.trace(w.matrix) - 1) < 1e-10


@pytest.mark.parametrize("a", [0.6, 0.75, 0.9])
def test_edge_witness_schmidt_coefficients(a):
    # max product overlap of a pure state is its largest squared Schmidt coefficient
    w = construct_edge_witness(projector(schmidt_vector(a)), [2, 2])
    top = max(a * a, 1 - a * a)
    assert abs(w.epsilon - (1 - top)) < 1e-6


def test_edge_witness_rejects_non_edge():
    with pytest.raises(ValueError):
        construct_edge_witness(random_separable([2, 2], 2, seed=0), [2, 2])


@settings(max_examples=10)
@given(seed=seeds)
def test_edge_witness_nonnegative_on_separable(seed):
    w = construct_edge_witness(projector(singlet()), [2, 2])
    assert w.expectation(random_separable([2, 2], 4, seed=seed)) >= -1e-7


def test_bsa_edge_states_are_detected():
    count = 0
    for seed in range(60):
        dec = best_separable_approximation(random_density([2, 2], rank=3, seed=seed), [2, 2], refine_rounds=0)
        if dec.lam > 1 - 1e-4:
            continue
        w = construct_edge_witness(dec.edge_part, [2, 2])
        assert w.expectation(dec.edge_part) < 0
        assert reduction_range_check(w, [2, 2]).holds
        count += 1
    assert count >= 50


def test_nd_witness_on_horodecki_edge(horodecki_edge, rng):
    delta = horodecki_edge
    w = construct_nd_edge_witness(delta, [3, 3])
    assert w.kind == "non_decomposable"
    # P delta = 0 and Tr(Q^TA delta) = 0 leave only the -eps term
    assert abs(w.expectation(delta) + w.epsilon / w.norm) < 1e-8
    assert form_values(w.matrix, random_local_vectors([3, 3], 200, rng)).min() >= -1e-7
    assert nondecomposability_probe(w).success


def test_detects_contract():
    w = swap_witness(2)
    assert abs(detects(w, np.eye(4) / 4).value - 0.25) < 1e-12
    d = detects(w, projector(singlet()))
    assert d.detected and abs(d.value + 0.5) < 1e-12
    with pytest.raises(ValueError):
        detects(w, np.eye(9) / 9)


def test_validate_examples():
    assert not validate_witness(np.eye(4) / 4, [2, 2]).is_witness
    v = validate_witness(swap_witness(2), [2, 2])
    assert v.is_witness and abs(v.product_min) < 1e-9 and v.min_eig < 0 and v.heuristic
    bad = -max_entangled_projector(2) + 0.1 * np.eye(4)
    assert not validate_witness(bad, [2, 2]).is_witness


def test_reduction_range_examples():
    # a non-witness whose range leaves R(W_A) x R(W_B)
    p = max_entangled_projector(2)
    e00 = np.zeros((4, 4))
    e00[0, 0] = 1
    bad = p - 0.5 * e00
    assert not validate_witness(bad, [2, 2]).is_witness
    assert reduction_range_check(swap_witness(3), [3, 3]).holds


def test_pre_witness_rejected():
    with pytest.raises(ValueError):
        WitnessOperator.from_raw(np.eye(4), (2, 2))


def test_optimize_swap_is_already_optimal():
    tr = optimize_witness(swap_witness(2))
    assert tr.lam == 0 and tr.optimal_within_search


@pytest.mark.parametrize("mode", ["ALL", "PPT"])
def test_optimize_mixture_recovers_swap(mode):
    v = swap_witness(2)
    mix = WitnessOperator.from_raw(0.5 * v.matrix + 0.5 * np.eye(4) / 4, (2, 2))
    tr = optimize_witness(mix, mode)
    assert abs(tr.lam - 0.5) < 1e-5
    assert np.max(np.abs(tr.final.matrix - v.matrix)) < 1e-5
    assert np.max(np.abs(tr.reconstruct() - mix.matrix)) < 1e-8


def test_optimize_is_finer_on_panel():
    w = construct_edge_witness(projector(singlet()), [2, 2])
    tr = optimize_witness(w)
    assert tr.lam < 1
    assert np.max(np.abs(tr.reconstruct() - w.matrix)) < 1e-8
    assert validate_witness(tr.final, [2, 2]).is_witness
    panel = [random_density([2, 2], seed=s) for s in range(500)]
    before = np.array([w.expectation(r) < -1e-9 for r in panel])
    after = np.array([tr.final.expectation(r) < -1e-9 for r in panel])
    assert before.any() and np.all(after[before])


def test_canonical_swap():
    # V/2 on 2x2 has eigenvalues +-1/2, so eps = 4 * 1/2 and Z2 = (V + I)/6 = P_s/3
    cf = canonical_form_extract(swap_witness(2))
    assert abs(cf.epsilon - 2) < 1e-12
    ps = (np.eye(4) + swap_operator(2)) / 2
    assert np.allclose(cf.z2, ps / 3, atol=1e-12)
    w = (1 + cf.epsilon) * cf.z2 - cf.epsilon * np.eye(4) / 4
    assert np.max(np.abs(w - swap_witness(2).matrix)) < 1e-10


def test_canonical_rejects_psd():
    with pytest.raises(ValueError):
        canonical_form_extract(np.eye(4) / 4)


@settings(max_examples=15)
@given(seed=seeds)
def test_canonical_round_trip(seed):
    g = np.random.default_rng(seed).standard_normal((4, 4))
    q = g @ g.T
    w = WitnessOperator.from_raw(partial_transpose(q, [2, 2], 0) + 1e-3 * np.eye(4), (2, 2)) \
        if np.linalg.eigvalsh(partial_transpose(q, [2, 2], 0))[0] < -1e-2 else swap_witness(2)
    cf = canonical_form_extract(w)
    assert cf.epsilon > 0
    assert np.linalg.eigvalsh(cf.z2)[0] >= -1e-10
    rebuilt = (1 + cf.epsilon) * cf.z2 - cf.epsilon * np.eye(4) / 4
    assert np.max(np.abs(rebuilt - w.matrix)) < 1e-10


def test_probe_never_fires_on_decomposable():
    rng = np.random.default_rng(5)
    fired = 0
    for t in range(100):
        g = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
        q = partial_transpose(g @ g.conj().T, [2, 2], 0)
        if np.linalg.eigvalsh(q)[0] >= 0:
            continue
        w = WitnessOperator.from_raw(q, (2, 2), "decomposable")
        fired += nondecomposability_probe(w, cfg=OptConfig(seed=t), trials=2, steps=5).success
    assert fired == 0


def test_edge_witness_tolerance_failure_raises():
    # a "delta" whose kernel projector is zero on a product vector: epsilon would vanish
    e00 = np.zeros(4)
    e00[0] = 1
    delta = np.eye(4) - projector(e00)
    with pytest.raises((ValueError, ToleranceError)):
        construct_edge_witness(delta / 3, [2, 2])


def test_witness_product_minimum_matches_sampling(rng):
    w = construct_edge_witness(projector(schmidt_vector(0.8)), [2, 2])
    lo = min_over_product(w.matrix, [2, 2]).value
    assert lo >= -1e-7
    assert form_values(w.matrix, random_local_vectors([2, 2], 500, rng)).min() >= lo - 1e-9
