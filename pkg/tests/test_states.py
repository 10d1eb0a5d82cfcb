import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hst

from bosewitness.fock import (
    build_basis,
    expectation,
    fix_global_phase,
    fock_state,
    ladder,
    monomial,
    number_operator,
)
from bosewitness.spin import (
    evaluate_frame,
    mode_rotation_coefficients,
    principal_frame,
    rotation_unitary,
    spin_operators,
)
from bosewitness.states import (
    DescriptorError,
    SeparableSpec,
    TruncationError,
    binomial_state,
    case3_counterexample,
    coherent_mixture,
    coherent_tail_mass,
    make_state,
    noon_state,
    one_boson_pair_state,
    parse_descriptor,
    phase_operator,
    random_fixed_n_separable,
    random_one_boson_case3,
    random_separable,
    relative_phase_angle,
    relative_phase_state,
    separable_state,
    state_names,
    verstraete_state,
)


def frame_of(st, pairs=None):
    return evaluate_frame(spin_operators(st.basis, pairs), st)


# ---------------------------------------------------------------- NOON

def test_noon_amplitudes():
    st = noon_state(3, 0.4)
    assert st.data[st.basis.index[(3, 0)]] == pytest.approx(math.cos(0.4))
    assert st.data[st.basis.index[(0, 3)]] == pytest.approx(math.sin(0.4))


def test_noon_quarter_pi_moments():
    f = frame_of(noon_state(4, math.pi / 4))
    assert f.bloch[2] == pytest.approx(0, abs=1e-12)
    assert np.diag(f.cov) == pytest.approx([1, 1, 4])


def test_noon_two_correlation():
    st = noon_state(2, math.pi / 4)
    val = expectation(monomial(st.basis, {1: 2}, {0: 2}), st, check_real=False)
    assert val.real == pytest.approx(1.0)


def test_noon_rejects_zero():
    with pytest.raises(ValueError):
        noon_state(0, 0.1)


# ---------------------------------------------------------------- binomial

def _binomial_oracle(n, theta, chi):
    """(-c^dag)^N |0> / sqrt(N!) built by repeated action of the creation matrix."""
    b = build_basis(2, range(n + 1))
    u = mode_rotation_coefficients((-math.pi + chi, -2 * theta, -math.pi))
    cdag = np.conj(u[0, 0]) * ladder(b, 0, "raise").matrix + np.conj(u[0, 1]) * ladder(b, 1, "raise").matrix
    v = np.zeros(b.dim, dtype=complex)
    v[b.index[(0, 0)]] = 1.0
    for _ in range(n):
        v = -cdag @ v
    v /= math.sqrt(math.factorial(n))
    sl = b.sector_slices()[n]
    return v[sl]


@given(hst.integers(1, 12), hst.floats(0, math.pi), hst.floats(-math.pi, math.pi))
def test_binomial_matches_creation_oracle(n, theta, chi):
    st = binomial_state(n, theta, chi)
    oracle = _binomial_oracle(n, theta, chi)
    assert np.allclose(fix_global_phase(st.data), fix_global_phase(oracle), atol=1e-10)


def test_binomial_equal_weights_at_quarter_pi():
    n = 8
    st = binomial_state(n, math.pi / 4, 0.0)
    expect = np.array([math.sqrt(math.comb(n, k)) / 2 ** (n / 2) for k in range(n + 1)])
    got = np.array([abs(st.data[st.basis.index[(n - k, k)]]) for k in range(n + 1)])
    assert got == pytest.approx(expect, abs=1e-12)


@given(hst.integers(1, 14), hst.floats(0, math.pi))
def test_binomial_original_frame(n, theta):
    f = frame_of(binomial_state(n, theta, 0.0))
    c2 = math.cos(2 * theta)
    assert f.bloch[2] == pytest.approx(-n / 2 * c2, abs=1e-10 * n)
    assert f.cov[0, 0] == pytest.approx(n / 4 * c2 ** 2, abs=1e-10 * n)
    assert f.cov[1, 1] == pytest.approx(n / 4, abs=1e-10 * n)


@given(hst.integers(1, 14), hst.floats(0, math.pi), hst.floats(-math.pi, math.pi))
def test_binomial_principal_frame(n, theta, chi):
    _, pf = principal_frame(frame_of(binomial_state(n, theta, chi)))
    assert np.diag(pf.cov) == pytest.approx([n / 4, n / 4, 0], abs=1e-9 * n)
    assert pf.bloch[2] == pytest.approx(-n / 2, abs=1e-9 * n)


# ---------------------------------------------------------------- relative phase

def test_relphase_sz_variance_exact():
    f = frame_of(relative_phase_state(100, 0))
    assert f.cov[2, 2] == pytest.approx(100 * 102 / 12, rel=1e-12)
    assert f.bloch[2] == pytest.approx(0, abs=1e-10)


@pytest.mark.parametrize("n,p", [(10, 0), (10, 3), (9, 2.5), (9, -4.5)])
def test_relphase_uniform_and_phase_eigenvector(n, p):
    st = relative_phase_state(n, p)
    assert np.abs(st.data) == pytest.approx(np.full(n + 1, 1 / math.sqrt(n + 1)))
    theta_p = relative_phase_angle(n, p)
    op = phase_operator(n).matrix
    assert np.linalg.norm(op @ st.data - theta_p * st.data) <= 1e-10


@pytest.mark.parametrize("n,p", [(10, 0.5), (9, 1), (10, 6)])
def test_relphase_off_grid(n, p):
    with pytest.raises(ValueError):
        relative_phase_state(n, p)


def test_relphase_rotated_modes_independent_of_phase():
    vecs = []
    for p in (0, 3, -5):
        st = relative_phase_state(20, p)
        ops = spin_operators(st.basis)
        eul, _ = principal_frame(evaluate_frame(ops, st))
        u = rotation_unitary(eul, ops).matrix
        vecs.append(fix_global_phase(u.conj().T @ st.data))
    assert np.allclose(vecs[0], vecs[1], atol=1e-9)
    assert np.allclose(vecs[0], vecs[2], atol=1e-9)


# ---------------------------------------------------------------- coherent mixture

def test_coherent_mixture_tail_oracle():
    from scipy.stats import poisson
    st = coherent_mixture(math.sqrt(2), 40)
    assert st.meta["tail_mass"] == pytest.approx(poisson.sf(40, 4.0), rel=1e-9)
    assert st.meta["tail_mass"] < 1e-10
    assert coherent_tail_mass(1.0, 5) == pytest.approx(1 - poisson.cdf(5, 2.0))


def test_coherent_mixture_correlations():
    st = coherent_mixture(math.sqrt(2), 40)
    b = st.basis
    ab = expectation(monomial(b, {1: 1}, {0: 1}), st, check_real=False)
    nanb = expectation(monomial(b, {0: 1, 1: 1}, {0: 1, 1: 1}), st).real
    assert ab.real == pytest.approx(2.0, rel=1e-9)
    assert nanb == pytest.approx(4.0, rel=1e-9)
    assert st.ssr_flags["global_compliant"] and not st.ssr_flags["local_compliant"]


def test_coherent_mixture_small_cases():
    assert np.allclose(coherent_mixture(0.0, 3).data[0, 0], 1.0)
    st = coherent_mixture(1.0, 30)
    assert expectation(number_operator(st.basis), st).real == pytest.approx(2.0, rel=1e-9)
    with pytest.raises(TruncationError):
        coherent_mixture(2.0, 10)
    assert coherent_mixture(2.0, 10, allow_truncation=True).meta["tail_mass"] > 1e-10


# ---------------------------------------------------------------- Verstraete

def test_verstraete_values():
    st = verstraete_state()
    b = st.basis
    adb = expectation(monomial(b, {0: 1}, {1: 1}), st, check_real=False)
    nanb = expectation(monomial(b, {0: 1, 1: 1}, {0: 1, 1: 1}), st).real
    assert abs(adb - 0.25) <= 1e-12
    assert abs(nanb - 0.25) <= 1e-12
    assert np.trace(st.data).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(st.data).min() >= -1e-12


# ---------------------------------------------------------------- separable states

def test_separable_single_fock_component():
    spec = SeparableSpec("TwoMode", [1.0], [[fock_state((2,)), fock_state((1,))]])
    st = separable_state(spec)
    assert st.data[st.basis.index[(2, 1)], st.basis.index[(2, 1)]].real == pytest.approx(1.0)


def test_separable_spec_weights_checked():
    with pytest.raises(ValueError):
        separable_state(SeparableSpec("TwoMode", [0.5], [[fock_state((2,)), fock_state((1,))]]))


@pytest.mark.parametrize("structure", ["TwoMode", "Case1", "Case2"])
@pytest.mark.parametrize("seed", range(4))
def test_random_separable_local_correlations_vanish(structure, seed):
    st = random_separable(structure, seed, n_max=4)
    assert st.meta["structure"] == structure
    b = st.basis
    for m in range(1, 4):
        for n in range(1, 4):
            val = expectation(monomial(b, {1: n}, {0: m}), st, check_real=False)
            assert abs(val) <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_case2_transverse_bloch_zero(seed):
    f = frame_of(random_separable("Case2", seed, n_max=4))
    assert abs(f.bloch[0]) <= 1e-10 and abs(f.bloch[1]) <= 1e-10


def test_random_separable_deterministic():
    a = random_separable("Case1", 11, n_max=4)
    b = random_separable("Case1", 11, n_max=4)
    assert np.array_equal(a.data, b.data)


@given(hst.floats(0, math.pi / 2), hst.floats(0, 1), hst.floats(-math.pi, math.pi))
def test_one_boson_pair_sz(alpha, beta, phi):
    st = one_boson_pair_state(alpha, beta, phi)
    assert frame_of(st).bloch[2] == pytest.approx(0.5 * math.cos(2 * alpha), abs=1e-12)


def test_one_boson_case3_sampler():
    st = random_one_boson_case3(3)
    assert st.meta["one_boson_pairs"]
    assert st.basis.num_modes % 2 == 0


def test_fixed_n_separable_sector():
    st = random_fixed_n_separable("Case2", 4, seed=2)
    assert st.basis.sectors == (4,)


def test_case3_counterexample_structure():
    st = case3_counterexample(20, num_pairs=3)
    assert st.meta["structure"] == "Case3"
    assert st.basis.num_modes == 6
    f = frame_of(st)
    ref = frame_of(relative_phase_state(20, 0))
    assert f.bloch == pytest.approx(ref.bloch, abs=1e-12)
    with pytest.raises(ValueError):
        case3_counterexample(10, num_pairs=1)


# ---------------------------------------------------------------- descriptors

def test_descriptor_parse_and_build():
    assert parse_descriptor("noon:N=4,theta=0.5")[:2] == ("noon", {"N": "4", "theta": "0.5"})
    assert make_state("noon:N=4,theta=0.7854").basis.dim == 5
    assert make_state("relphase:N=100,p=0").basis.dim == 101
    assert make_state("fock:occ=2/3").basis.states == ((5, 0), (4, 1), (3, 2), (2, 3), (1, 4), (0, 5))
    assert make_state("verstraete").kind == "mixed"
    assert "binomial" in state_names()


@pytest.mark.parametrize("text,pos", [("noon:N=4,thta=1", 9), ("noon:N=4,theta", 9), ("9noon", 0),
                                       ("noon:N=x", 5), ("nosuch:N=1", 0)])
def test_descriptor_errors_report_position(text, pos):
    with pytest.raises(DescriptorError) as exc:
        make_state(text)
    assert exc.value.position == pos
