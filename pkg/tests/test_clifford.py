import numpy as np
import pytest

from monoflow import build_clifford, pin_lift, signed_permutations
from monoflow.clifford import gamma_v, quasi_reflection_vectors

SEED = 1234


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
def test_anticommutation(d):
    rep = build_clifford(d)
    q = rep.fiber_dim
    for i in range(d):
        gi = rep.gammas[i]
        assert np.abs(gi - gi.conj().T).max() < 1e-14
        for j in range(d):
            anti = rep.gammas[i] @ rep.gammas[j] \
                + rep.gammas[j] @ rep.gammas[i]
            target = 2.0 * np.eye(q) if i == j else np.zeros((q, q))
            assert np.abs(anti - target).max() < 1e-14


@pytest.mark.parametrize("d", [2, 4])
def test_grading(d):
    rep = build_clifford(d)
    g = rep.grading
    assert g is not None
    assert np.abs(g @ g - np.eye(rep.fiber_dim)).max() < 1e-14
    for gam in rep.gammas:
        assert np.abs(g @ gam + gam @ g).max() < 1e-14


def test_odd_has_no_grading():
    assert build_clifford(3).grading is None


def test_gamma_v_squares_to_norm():
    rng = np.random.default_rng(SEED)
    for d in (2, 3):
        rep = build_clifford(d)
        for _ in range(20):
            v = rng.standard_normal(d)
            gv = rep.gamma_v(v)
            n2 = float(v @ v)
            assert np.abs(gv @ gv - n2 * np.eye(rep.fiber_dim)).max() < 1e-12
            assert np.abs(gv - gv.conj().T).max() < 1e-12


def test_fiber_dims():
    # 2^floor(d/2) is the irreducible size used throughout
    assert [build_clifford(d).fiber_dim for d in range(1, 6)] \
        == [1, 2, 2, 4, 4]


def test_quasi_reflection_recomposition():
    rng = np.random.default_rng(SEED)
    for d in (2, 3, 4):
        for _ in range(10):
            Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
            vs = quasi_reflection_vectors(Q)
            R = np.eye(d)
            for v in vs:
                R = R @ (2 * np.outer(v, v) - np.eye(d))
            # each factor flips the complement of v; product restores Q
            assert np.abs(R - Q).max() < 1e-8


@pytest.mark.parametrize("d", [2, 3])
def test_pin_lift_covariance(d):
    rep = build_clifford(d)
    rng = np.random.default_rng(SEED)
    # odd d: improper maps have no quasi-reflection factorization
    for O in signed_permutations(d, proper_only=d % 2 == 1):
        lift = pin_lift(rep, O)
        gi = lift.i_g()
        for _ in range(5):
            w = rng.standard_normal(d)
            lhs = lift.g_O @ rep.gamma_v(w) @ gi
            rhs = rep.gamma_v(np.asarray(O) @ w)
            assert np.abs(lhs - rhs).max() < 1e-10


def test_pin_lift_rejects_non_orthogonal():
    rep = build_clifford(2)
    with pytest.raises(ValueError):
        pin_lift(rep, np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_gamma_v_function_matches_method():
    rep = build_clifford(3)
    v = np.array([0.3, -1.2, 0.5])
    assert np.abs(gamma_v(rep, v) - rep.gamma_v(v)).max() == 0.0
