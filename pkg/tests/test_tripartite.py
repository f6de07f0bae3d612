import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from entworkbench.linalg import DimensionError, ToleranceError, partial_trace, partial_transpose, projector
from entworkbench.productopt import min_over_product
from entworkbench.states import schmidt_rank
from entworkbench.tripartite import (DIMS, classify, fidelity_witnesses, ghz_class_witness, ghz_vector,
                                     random_biseparable, random_full_product, random_petal_vector,
                                     random_w_class_vector, robustness_ball_scan, tripartite_nd_witness,
                                     w_family_state, w_projector_witness, w_vector, w_witness)

from strategies import seeds


def regroup(vec, cut):
    """Three-qubit vector reordered so qubit ``cut`` leads, i.e. on the 2 x 4 grouping."""
    order = [cut] + [i for i in range(3) if i != cut]
    return vec.reshape(2, 2, 2).transpose(order).reshape(-1)


def test_vectors():
    assert abs(np.vdot(ghz_vector(), w_vector())) < 1e-15
    for cut in range(3):
        assert schmidt_rank(regroup(ghz_vector(), cut), [2, 4]) == 2
    red = partial_trace(projector(w_vector()), DIMS, 0)
    assert np.allclose(np.linalg.eigvalsh(red), [1 / 3, 2 / 3], atol=1e-12)


def test_w_witness_values():
    w = w_witness()
    assert w.expectation(projector(ghz_vector()), raw=True) == pytest.approx(-0.5, abs=1e-15)
    assert w.expectation(projector(w_vector()), raw=True) == pytest.approx(0.5, abs=1e-15)
    e000 = np.zeros(8)
    e000[0] = 1
    assert abs(w.expectation(projector(e000), raw=True)) < 1e-15
    assert abs(min_over_product(w.raw, DIMS).value) < 1e-9


def test_w_witness_on_samples():
    raw = w_witness().raw
    for s in range(500):
        v = random_full_product(s)
        assert np.vdot(v, raw @ v).real >= -1e-7
    for s in range(100):
        assert np.trace(raw @ random_biseparable(seed=1000 + s)).real >= -1e-7


def _max_overlap(target, param_fn, n_par, starts, seed):
    """Independent oracle: Nelder-Mead over a parametrized family, best of many starts."""
    rng = np.random.default_rng(seed)

    def f(x):
        v = param_fn(x)
        return -abs(np.vdot(target, v / np.linalg.norm(v))) ** 2

    return max(-minimize(f, rng.standard_normal(n_par), method="Nelder-Mead",
                         options={"maxiter": 6000, "xatol": 1e-9, "fatol": 1e-12}).fun for _ in range(starts))


def _petal(x):
    a = x[0:2] + 1j * x[2:4]
    pair = x[4:8] + 1j * x[8:12]
    return np.kron(a, pair)


def _w_class(x):
    ops = [(x[8 * i:8 * i + 4] + 1j * x[8 * i + 4:8 * i + 8]).reshape(2, 2) for i in range(3)]
    return np.kron(np.kron(ops[0], ops[1]), ops[2]) @ w_vector()


def test_biseparable_overlap_thresholds_oracle():
    # GHZ and W are symmetric, so one cut suffices: 1/2 and 2/3 are the largest petal overlaps
    assert _max_overlap(ghz_vector(), _petal, 12, 20, 0) == pytest.approx(0.5, abs=1e-6)
    assert _max_overlap(w_vector(), _petal, 12, 20, 1) == pytest.approx(2 / 3, abs=1e-6)


def test_w_class_ghz_overlap_oracle():
    # supremum 3/4 over the W-class orbit (approached, not attained)
    top = _max_overlap(ghz_vector(), _w_class, 24, 12, 2)
    assert 0.70 < top <= 0.75 + 1e-6


def test_fidelity_witnesses_on_samples():
    ws = fidelity_witnesses()
    for s in range(200):
        b = random_biseparable(seed=s)
        assert ws["W_W"].expectation(b, raw=True) >= -1e-7
        assert ws["W_proj"].expectation(b, raw=True) >= -1e-7
        v = random_w_class_vector(seed=s)
        assert ghz_class_witness().expectation(projector(v), raw=True) >= -1e-7
    assert w_projector_witness().expectation(projector(w_vector()), raw=True) == pytest.approx(-1 / 3)


def test_w_family():
    assert np.allclose(w_family_state(0), np.eye(8) / 8)
    assert np.allclose(w_family_state(1), projector(w_vector()))
    with pytest.raises(ValueError):
        w_family_state(1.2)
    grid = np.linspace(0, 1, 101)
    prev = None
    for p in grid:
        rho = w_family_state(p)
        assert abs(np.trace(rho) - 1) < 1e-12 and np.linalg.eigvalsh(rho)[0] >= -1e-12
        # W_W never detects the family
        assert w_witness().expectation(rho, raw=True) > 0
        spec = np.linalg.eigvalsh(partial_transpose(rho, DIMS, 0))
        if prev is not None:
            assert np.max(np.abs(spec - prev)) < 0.02  # continuous on the 0.01 grid
        prev = spec


def test_classify_examples():
    assert classify(np.eye(8) / 8).class_lower == "S"
    g = classify(projector(ghz_vector()))
    assert g.class_lower == "GHZ" and any(h["witness"] == "W_W" for h in g.hits)
    w = classify(w_family_state(0.9))
    assert not any(w.ppt_cuts) and w.values["W_W"] > 0
    assert w.class_lower == "W"  # 2/3 - P_W fires: stronger than the NPPT evidence alone
    b = classify(w_family_state(0.3))
    assert b.class_lower == "B"
    with pytest.raises(DimensionError):
        classify(np.eye(4) / 4, [2, 2])


def test_classify_rank_flag():
    rho = random_biseparable(terms=2, seed=3)
    ev = classify(rho)
    assert ev.biseparable_by_rank == (all(ev.ppt_cuts) and np.linalg.matrix_rank(rho) <= 4)
    # a rank-2 mixture of full products is PPT on every cut
    prod = 0.5 * projector(random_full_product(1)) + 0.5 * projector(random_full_product(2))
    assert classify(prod).biseparable_by_rank


@settings(max_examples=20)
@given(seed=seeds, kind=st.sampled_from(["prod", "bisep", "w", "mix"]))
def test_classify_consistent(seed, kind):
    rng = np.random.default_rng(seed)
    rho = {"prod": lambda: projector(random_full_product(rng)),
           "bisep": lambda: random_biseparable(seed=rng),
           "w": lambda: projector(random_w_class_vector(rng)),
           "mix": lambda: w_family_state(rng.uniform())}[kind]()
    ev = classify(rho)
    assert all(h["value"] < 0 for h in ev.hits)
    if kind == "prod":
        assert ev.class_lower == "S"
    if kind == "bisep":
        assert ev.class_lower in ("S", "B")
    if kind == "w":
        assert ev.class_lower in ("S", "B", "W")


def test_ball_scan():
    rho = projector(ghz_vector())
    panel = [np.eye(8) / 8, projector(w_vector()), random_biseparable(seed=1)]
    scan = robustness_ball_scan(rho, panel)
    assert scan.signature["W_W"]
    w = w_witness()
    v = -w.expectation(rho)
    for i, sigma in enumerate(panel):
        bound = v / (v + abs(w.expectation(sigma)))
        step = scan.kappas[1] - scan.kappas[0]
        assert scan.stable_kappa["W_W"][i] >= np.floor(bound / step) * step - 1e-12
    assert len(scan.rows()) == 3 * len(panel)
    # kappa = 0 reproduces the signature of rho itself
    zero = robustness_ball_scan(rho, panel, steps=1, kappa_max=0)
    assert np.all(zero.stable_kappa["W_W"] == 0)


def _three_cut_ppt_edge():
    # rank-4 projector onto the complement of a 4-element product basis (Shifts UPB)
    kets = [np.array([1, 0]), np.array([0, 1]), np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)]
    z, o, p, m = kets
    upb = [(z, o, p), (o, p, z), (p, z, o), (m, m, m)]
    s = sum(projector(np.kron(np.kron(a, b), c)) for a, b, c in upb)
    return (np.eye(8) - s) / 4


def test_nd_witness_on_upb_state(rng):
    delta = _three_cut_ppt_edge()
    for x in range(3):
        assert np.linalg.eigvalsh(partial_transpose(delta, DIMS, x))[0] >= -1e-12
    w = tripartite_nd_witness(delta)
    assert w.kind == "non_decomposable" and w.epsilon > 0
    assert w.expectation(delta) < 0
    for s in range(300):
        v = random_full_product(rng)
        assert np.vdot(v, w.matrix @ v).real >= -1e-7


def test_nd_witness_errors():
    with pytest.raises(ValueError):
        tripartite_nd_witness(projector(ghz_vector()))
    with pytest.raises((ToleranceError, ValueError)):
        tripartite_nd_witness(np.eye(8) / 8)


def test_petal_sampler_is_biseparable():
    for cut in range(3):
        v = random_petal_vector(cut, seed=cut)
        assert schmidt_rank(regroup(v, cut), [2, 4]) == 1
