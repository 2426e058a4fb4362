import numpy as np
import pytest

import monoflow as mf
from monoflow.monopole import (DEFAULT_STEP, GaugeField, gauge_potential,
                               phase_matrix)

SEED = 7
REP2 = mf.build_clifford(2)


def small_sweep(rho=4, d=2):
    off = tuple([0.5] * d)
    box = mf.make_box(d, rho, offset=off)
    return mf.CacheSweep(mf.build_clifford(d), box)


def test_potential_selfadjoint_and_origin():
    field = GaugeField(rep=REP2, charge=1.0)
    x = np.array([1.5, -0.5])
    A1 = gauge_potential(field, x, np.array([1.0, 0.0]))
    # (i/2)[gamma_x, gamma_v]/R^2 is selfadjoint and vanishes along x
    assert np.abs(A1 - A1.conj().T).max() < 1e-14
    assert np.abs(gauge_potential(field, x, x)).max() < 1e-14
    with pytest.raises(ValueError):
        gauge_potential(field, np.zeros(2), np.array([1.0, 0.0]))


def test_phase_tables_match_closed_form_d2():
    sweep = small_sweep(4)
    for alpha in (0.3, 0.5, 1.0):
        cache = sweep.cache(alpha)
        closed = mf.closed_phases_d2(sweep.box, alpha)
        for k in range(2):
            dev = np.abs(cache.tables[k] - closed[k]).max()
            assert dev < 1e-8, (alpha, k, dev)


def test_tables_unitary_and_alpha0_identity():
    sweep = small_sweep(3)
    assert sweep.cache(0.7).unitarity_drift() < 1e-10
    c0 = sweep.cache(0.0)
    eye = np.eye(REP2.fiber_dim)
    for T in c0.tables:
        assert np.abs(T - eye).max() == 0.0


def test_plaquette_flux_concentrated_at_origin():
    # the product of the four bond phases around a plaquette is e^{i flux};
    # the scalar (upper) component carries total flux alpha at the origin
    alpha = 0.37
    sweep = small_sweep(5)
    box = sweep.box
    cache = sweep.cache(alpha)
    u1 = cache.scalar_phases(1)
    u2 = cache.scalar_phases(2)
    total = 0.0
    for i, x in enumerate(box.sites):
        if not (box.contains(x + [1, 0]) and box.contains(x + [0, 1])
                and box.contains(x + [1, 1])):
            continue
        # S_k places the phase at the row site: bond x -> x+e_k phase M(x)
        hol = u1[i] * u2[box.index_of(x + [1, 0])] \
            * np.conj(u1[box.index_of(x + [0, 1])]) * np.conj(u2[i])
        f = np.angle(hol) / (2 * np.pi)
        total += f
        near_origin = np.abs(x + 0.5).max() < 1e-9
        if not near_origin:
            assert abs(f) < 1e-6
    assert min(abs(total - alpha), abs(total + alpha)) < 1e-6


def test_dressing_conjugation_random_alpha():
    rng = np.random.default_rng(SEED)
    sweep = small_sweep(4)
    box = sweep.box
    interior = ~box.boundary_site_mask(width=2)
    for _ in range(5):
        a = float(rng.uniform(0.05, 0.95))
        ca, cb = sweep.cache(a), sweep.cache(1.0 - a)
        for k in (1, 2):
            rws, cls = mf.shift_pairs(box, k)
            keep = interior[rws] & interior[cls]
            for r, c in zip(rws[keep][:12], cls[keep][:12]):
                Fx = REP2.gamma_v(box.sites[r]) / np.linalg.norm(box.sites[r])
                Fy = REP2.gamma_v(box.sites[c]) / np.linalg.norm(box.sites[c])
                lhs = Fx @ ca.tables[k - 1][r] @ Fy
                assert np.abs(lhs - cb.tables[k - 1][r]).max() < 1e-8


def test_identity_suite_all_pass():
    rows = mf.identity_suite(small_sweep(4))
    names = {r["name"] for r in rows}
    assert {"dressing_conjugation", "grading_commutation", "covariance",
            "envelope_cprime", "unitarity_drift", "closed_form_d2"} <= names
    for r in rows:
        assert r["passed"], r


def test_identity_suite_d3():
    rows = mf.identity_suite(small_sweep(2, d=3), alphas=(0.5,))
    for r in rows:
        assert r["passed"], r


def test_cache_roundtrip(tmp_path):
    sweep = small_sweep(3)
    cache = sweep.cache(0.42)
    p = tmp_path / "phases.npz"
    cache.save(p)
    back = mf.load_phase_cache(p, sweep.rep, sweep.box)
    for T, T2 in zip(cache.tables, back.tables):
        assert np.abs(T - T2).max() == 0.0
    assert back.content_hash() == cache.content_hash()
    wrong = mf.make_box(2, 4, offset=(0.5, 0.5))
    with pytest.raises(ValueError):
        mf.load_phase_cache(p, sweep.rep, wrong)


def test_monopole_shift_structure():
    sweep = small_sweep(3)
    box = sweep.box
    S = mf.monopole_shift(sweep.cache(0.0), 1).data
    rows, cols = mf.shift_pairs(box, 1)
    bare = np.zeros_like(S)
    q = REP2.fiber_dim
    for r, c in zip(rows, cols):
        bare[r * q:(r + 1) * q, c * q:(c + 1) * q] = np.eye(q)
    assert np.abs(S - bare).max() == 0.0


def test_covariance_rejects_bad_map():
    sweep = small_sweep(3)
    with pytest.raises(ValueError):
        mf.covariance_check(sweep.cache(0.3), np.array([[1.0, 1.0],
                                                        [0.0, 1.0]]))


def test_signed_permutations_count():
    assert len(mf.signed_permutations(2)) == 8
    assert len(mf.signed_permutations(2, proper_only=True)) == 4
    assert len(mf.signed_permutations(3, proper_only=True)) == 24


def test_transport_matches_table():
    # the sitewise transport API agrees with the batched plan
    sweep = small_sweep(3)
    cache = sweep.cache(0.6)
    box = sweep.box
    field = GaugeField(rep=REP2, charge=0.6)
    i = box.index_of(np.array([1.5, 0.5]))
    M = phase_matrix(field, box.sites[i], np.array([1.0, 0.0]),
                     h=DEFAULT_STEP)
    assert np.abs(M - cache.phase(1, i)).max() < 1e-8
