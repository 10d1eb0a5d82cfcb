import math

import numpy as np
import pytest
from conftest import random_state, two_mode_states
from hypothesis import given
from hypothesis import strategies as hst

from bosewitness.fock import (
    QuantumState,
    build_basis,
    close_pairs,
    commutator,
    covariance,
    dumps_state,
    embed,
    expectation,
    fix_global_phase,
    fock_state,
    global_ssr_compliant,
    hop,
    identity,
    ladder,
    loads_state,
    mix,
    mixed_state,
    monomial,
    number_operator,
    padded_basis,
    permute_modes,
    pure_state,
    tensor,
    vacuum,
    variance,
)


def test_basis_order_and_dimension():
    b = build_basis(2, [2, 1])
    assert b.sectors == (1, 2)
    assert b.states == ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    assert build_basis(3, [4]).dim == math.comb(6, 2)


def test_basis_caps():
    b = build_basis(2, [0, 1, 2, 3], caps=(1, 2))
    assert all(o[0] <= 1 and o[1] <= 2 for o in b.states)
    assert b.dim == 6


@pytest.mark.parametrize("bad", [dict(num_modes=0, sectors=[1]), dict(num_modes=2, sectors=[]),
                                 dict(num_modes=2, sectors=[-1]), dict(num_modes=2, sectors=[1], caps=(1,))])
def test_basis_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        build_basis(**bad)


def test_ladder_matrix_elements():
    b = build_basis(1, range(6))
    a = ladder(b, 0).matrix
    for n in range(1, 6):
        assert a[n - 1, n] == pytest.approx(math.sqrt(n))
    ad = ladder(b, 0, "raise").matrix
    assert np.allclose(ad, a.T)


def test_canonical_commutator_away_from_cutoff():
    b = build_basis(2, range(8))
    a, ad = ladder(b, 0), ladder(b, 0, "raise")
    c = commutator(a, ad).matrix
    inner = b.totals() < 7
    assert np.allclose(c[np.ix_(inner, inner)], np.eye(inner.sum()))
    assert a.truncated


def test_truncation_flag_clear_on_closed_operator():
    b = build_basis(2, [4])
    assert not hop(b, 1, 0).truncated
    assert ladder(b, 0).truncated


def test_monomial_exact_across_truncation():
    # a^dag a^dag a a on a single sector equals n(n-1) even though the
    # intermediate states a a |n> leave the basis
    b = build_basis(2, [5])
    m = monomial(b, {0: 2}, {0: 2}).matrix
    n0 = b.occupations()[:, 0]
    assert np.allclose(np.diag(m).real, n0 * (n0 - 1))


def test_number_operator_and_total():
    st = fock_state((2, 3))
    assert expectation(number_operator(st.basis, 0), st).real == 2
    assert expectation(number_operator(st.basis), st).real == 5


def test_vacuum_and_fock_flags():
    v = vacuum(4)
    assert v.basis.states == ((0, 0, 0, 0),)
    assert v.ssr_flags["global_compliant"]


def test_pure_state_normalisation_checked():
    b = build_basis(2, [1])
    with pytest.raises(ValueError):
        pure_state(b, [1.0, 1.0])
    st = pure_state(b, [1.0, 1.0], normalize=True)
    assert np.vdot(st.data, st.data).real == pytest.approx(1.0)


def test_mixed_state_validation():
    b = build_basis(2, [1])
    with pytest.raises(ValueError):
        mixed_state(b, np.diag([0.5, 0.6]))
    with pytest.raises(ValueError):
        mixed_state(b, np.diag([1.5, -0.5]))


def test_global_ssr_detection():
    b = build_basis(2, [0, 1])
    coh = pure_state(b, [1, 1, 0], normalize=True)
    assert not global_ssr_compliant(coh)
    inc = mixed_state(b, np.diag([0.5, 0.5, 0.0]))
    assert global_ssr_compliant(inc)


def test_tensor_and_permute():
    a = pure_state(build_basis(2, [1]), [0.6, 0.8])
    b = fock_state((1, 0))
    st = tensor(a, b)
    assert st.basis.num_modes == 4
    n = [expectation(number_operator(st.basis, m), st).real for m in range(4)]
    assert np.allclose(n, [0.36, 0.64, 1.0, 0.0])
    p = permute_modes(st, [2, 3, 0, 1])
    n2 = [expectation(number_operator(p.basis, m), p).real for m in range(4)]
    assert np.allclose(n2, [1.0, 0.0, 0.36, 0.64])


def test_mix_weights_validated():
    s = fock_state((1, 0))
    t = fock_state((0, 1))
    with pytest.raises(ValueError):
        mix([(0.5, s), (0.6, t)])
    m = mix([(0.25, s), (0.75, t)])
    assert np.allclose(np.diag(m.data).real, [0.25, 0.75])


def test_embed_and_close_pairs():
    st = tensor(fock_state((1, 0)), fock_state((0, 0)))
    capped = embed(st, build_basis(4, [1], caps=(1, 1, 0, 0)))
    closed = close_pairs(capped)
    assert closed.basis.caps == (1, 1, 0, 0)
    mixed_caps = fock_state((1, 0, 0, 0), build_basis(4, [1, 2], caps=(1, 0, 1, 1)))
    assert close_pairs(mixed_caps).basis.caps == (2, 2, 2, 2)


def test_padded_basis():
    b = build_basis(2, [3], caps=(2, 3))
    p = padded_basis(b)
    assert p.sectors == (2, 3, 4)
    assert p.caps == (3, 4)


def test_fix_global_phase():
    v = np.array([0, 1j, 1]) / math.sqrt(2)
    w = fix_global_phase(v)
    assert w[1].real > 0 and w[1].imag == 0
    assert np.allclose(np.abs(w), np.abs(v))


@given(two_mode_states(max_n=5))
def test_json_round_trip_exact(st):
    back = loads_state(dumps_state(st))
    assert back.kind == st.kind
    assert np.array_equal(back.data, np.where(np.abs(st.data) >= 1e-15, st.data, 0))


def test_json_round_trip_keeps_structure_label():
    from bosewitness.states import random_separable
    st = random_separable("Case2", seed=1, n_max=3)
    assert loads_state(dumps_state(st)).meta["structure"] == "Case2"


@given(two_mode_states(max_n=6))
def test_variance_non_negative_and_covariance_symmetric(st):
    a = ladder(st.basis, 0)
    x = (a + a.dag).hermitian()
    n = number_operator(st.basis, 1)
    assert variance(n, st) >= 0
    assert covariance(x, n, st) == pytest.approx(covariance(n, x, st), abs=1e-12)


@given(hst.integers(1, 4), hst.integers(0, 6))
def test_hop_hermitian_pair(modes, n):
    b = build_basis(max(modes, 2), [n])
    h = hop(b, 0, 1).matrix
    assert np.allclose(h.conj().T, hop(b, 1, 0).matrix)


def test_identity_expectation_is_one(rng):
    st = random_state(rng, 3, (2, 3), mixed=True)
    assert expectation(identity(st.basis), st).real == pytest.approx(1.0)


def test_psd_flag_only_skips_the_eigenvalue_check():
    b = build_basis(2, [1])
    bad = np.diag([1.5, -0.5]).astype(complex)
    with pytest.raises(ValueError):
        QuantumState(b, "mixed", bad)
    assert QuantumState(b, "mixed", bad, psd_known=True).kind == "mixed"
    with pytest.raises(ValueError):
        QuantumState(b, "mixed", np.array([[0.5, 1.0], [0.0, 0.5]], dtype=complex), psd_known=True)
    with pytest.raises(ValueError):
        QuantumState(b, "mixed", np.eye(2, dtype=complex), psd_known=True)


def test_embedded_mixed_state_stays_positive(rng):
    st = random_state(rng, 2, (1, 2), mixed=True)
    big = embed(st, build_basis(2, range(5)))
    assert np.linalg.eigvalsh(big.data).min() >= -1e-12
