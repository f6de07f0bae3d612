import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entworkbench.linalg import DimensionError, partial_trace, projector, swap_operator
from entworkbench.maps import (LinearMapRep, adjoint_detect, classify_operator_map, map_from_operator,
                               operator_from_map)
from entworkbench.separability import best_separable_approximation
from entworkbench.states import horodecki_3x3, max_entangled_projector, random_density, singlet
from entworkbench.witnesses import construct_nd_edge_witness, swap_witness

from conftest import random_hermitian
from strategies import seeds

SHAPES = [(2, 2), (2, 3), (3, 3)]


@pytest.mark.parametrize("shape", SHAPES)
def test_round_trip_both_directions(shape, rng):
    db, dc = shape
    for _ in range(30):
        o = random_hermitian(db * dc, rng)
        assert np.max(np.abs(operator_from_map(map_from_operator(o, shape), db, dc) - o)) <= 1e-12
        # map -> operator -> map on a random input
        a = rng.standard_normal((dc, db)) + 1j * rng.standard_normal((dc, db))
        fn = lambda x: a @ x @ a.conj().T  # noqa: E731
        rep = map_from_operator(operator_from_map(fn, db, dc), shape)
        x = random_hermitian(db, rng)
        assert np.max(np.abs(rep(x) - fn(x))) <= 1e-12


@pytest.mark.parametrize("d", [2, 3])
def test_map_examples(d, rng):
    x = random_hermitian(d, rng)
    ident = map_from_operator(max_entangled_projector(d), [d, d])
    assert np.max(np.abs(ident(x) - x / d)) <= 1e-12
    transpose = map_from_operator(swap_operator(d), [d, d])
    assert np.max(np.abs(transpose(x) - x.T)) <= 1e-12
    o = random_hermitian(d * d, rng)
    assert np.allclose(map_from_operator(o, [d, d])(np.eye(d)), partial_trace(o, [d, d], 1), atol=1e-12)


def test_consistency_pairs():
    d = 3
    assert np.allclose(operator_from_map(lambda x: x, d), d * max_entangled_projector(d), atol=1e-12)
    assert np.allclose(operator_from_map(lambda x: x.T, d), swap_operator(d), atol=1e-12)


@settings(max_examples=20)
@given(seed=seeds, c1=st.floats(-2, 2), c2=st.floats(-2, 2))
def test_linearity(seed, c1, c2):
    rng = np.random.default_rng(seed)
    rep = map_from_operator(random_hermitian(6, rng), [2, 3])
    x, y = random_hermitian(2, rng), random_hermitian(2, rng)
    assert np.allclose(rep(c1 * x + c2 * y), c1 * rep(x) + c2 * rep(y), atol=1e-12)


def test_adjoint_is_hilbert_schmidt_adjoint(rng):
    rep = map_from_operator(random_hermitian(6, rng), [2, 3])
    x, y = random_hermitian(2, rng), random_hermitian(3, rng)
    assert abs(np.trace(rep(x) @ y) - np.trace(x @ rep.adjoint()(y))) < 1e-12


def test_bad_shapes():
    with pytest.raises(DimensionError):
        map_from_operator(np.eye(8), [2, 2, 2])
    with pytest.raises(DimensionError):
        map_from_operator(np.eye(4), [2, 2])(np.eye(3))
    with pytest.raises(DimensionError):
        adjoint_detect(np.eye(4), [2, 2], np.eye(6) / 6, [2, 3])


def test_swap_detects_singlet():
    det = adjoint_detect(swap_operator(2), [2, 2], projector(singlet()), [2, 2])
    assert det.detected
    # psi_value = Tr(O rho) / d_B with the unnormalized operator
    assert abs(det.psi_value - np.trace(swap_operator(2) @ projector(singlet())).real / 2) < 1e-12
    assert det.psi_value < 0


def test_cpm_outputs_psd(rng):
    g = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
    o = g @ g.conj().T
    for s in range(100):
        det = adjoint_detect(o, [3, 3], random_density([3, 3], seed=s), [3, 3])
        assert not det.detected


def test_maps_detect_whenever_witnesses_do():
    w = swap_witness(2).raw
    for s in range(50):
        rho = random_density([2, 2], seed=s)
        det = adjoint_detect(w, [2, 2], rho, [2, 2])
        if np.trace(w @ rho).real < -1e-9:
            assert det.detected and det.psi_value < 0


def test_gl_covariance(rng):
    o = swap_operator(2)
    rho = projector(singlet())
    assert adjoint_detect(o, [2, 2], rho, [2, 2]).detected
    for _ in range(20):
        g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        gi = np.kron(g, np.eye(2))
        r2 = gi @ rho @ gi.conj().T
        r2 /= np.trace(r2).real
        assert adjoint_detect(o, [2, 2], r2, [2, 2]).detected


def test_classify_examples():
    assert classify_operator_map(max_entangled_projector(2), [2, 2]).label == "CPM"
    assert classify_operator_map(swap_witness(2)).label == "decomposable-PM"
    assert classify_operator_map(-np.eye(4) + 0.1 * swap_operator(2), [2, 2]).label == "unknown"
    delta = best_separable_approximation(horodecki_3x3(0.3), [3, 3], "PPT").edge_part
    cls = classify_operator_map(construct_nd_edge_witness(delta, [3, 3]))
    assert cls.label == "nd-PM-evidence" and not cls.heuristic


def test_linear_map_rep_validates_shape():
    with pytest.raises(DimensionError):
        LinearMapRep(2, 3, np.eye(5))
