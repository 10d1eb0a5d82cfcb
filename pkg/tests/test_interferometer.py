import json
import math

import numpy as np
import pytest
from conftest import two_mode_states
from hypothesis import given
from hypothesis import strategies as hst

from bosewitness.fock import (
    build_basis,
    embed,
    fock_state,
    number_operator,
    tensor,
    vacuum,
)
from bosewitness.interferometer import (
    FRINGE_COLUMNS,
    FreeEvolution,
    PhaseChanger,
    PulseSpec,
    consistency_check,
    evolve,
    fringe_scan,
    heisenberg_measurable,
    m2_protocol,
    measured_moments,
    parse_sequence,
    predict_variance,
    pulse,
    pulse_unitary,
    ramsey,
    run_sequence,
    sample_measurements,
    sequence_to_json,
    sz_distribution,
    tomography,
)
from bosewitness.spin import evaluate_frame, spin_operators
from bosewitness.states import (
    binomial_state,
    noon_state,
    random_separable,
    relative_phase_angle,
    relative_phase_state,
)

GRID = [(t, p) for t in np.linspace(0, math.pi, 5) for p in np.linspace(-math.pi, math.pi, 5)]


def frame_of(st):
    return evaluate_frame(spin_operators(st.basis), st)


# ---------------------------------------------------------------- pulses and free evolution

def test_pi_pulse_twice_is_identity_up_to_phase():
    st = binomial_state(5, 0.3, 0.7)
    out = evolve(evolve(st, pulse(math.pi, 0.4)), pulse(math.pi, 0.4))
    overlap = abs(np.vdot(st.data, out.data))
    assert overlap == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("phi", [0.0, 0.7, -2.1])
def test_half_pi_pulse_splits_single_boson(phi):
    out = evolve(fock_state((1, 0)), pulse(math.pi / 2, phi))
    vals, probs = sz_distribution(out)
    assert probs == pytest.approx([0.5, 0.5], abs=1e-12)
    # 2x2 oracle: the pulse acts on the one-boson sector as exp(-i theta n.sigma / 2)
    theta = math.pi / 2
    gen = np.array([[0, np.exp(-1j * phi)], [np.exp(1j * phi), 0]]) / 2
    w, v = np.linalg.eigh(gen)
    u = (v * np.exp(-1j * theta * w)) @ v.conj().T
    # basis order is (1,0), (0,1); S_x + i S_y = b^dag a maps (1,0) to (0,1)
    assert np.allclose(out.data, u @ np.array([1, 0]), atol=1e-12)


@given(hst.floats(0, 2 * math.pi), hst.floats(-math.pi, math.pi))
def test_pulse_unitary_and_number_conserving(theta, phi):
    b = build_basis(2, range(5))
    u = pulse_unitary(b, theta, phi).matrix
    assert np.allclose(u.conj().T @ u, np.eye(b.dim), atol=1e-12)
    n = number_operator(b).matrix
    assert np.max(np.abs(u @ n - n @ u)) == 0.0


def test_free_evolution_phases():
    st = fock_state((3, 1))
    out = evolve(st, FreeEvolution(0.7, 0.3))
    k = -1.0
    i = st.basis.index[(3, 1)]
    assert out.data[i] == pytest.approx(np.exp(-1j * 4 * 0.3 * k ** 2 * 0.7))
    assert np.abs(out.data) == pytest.approx(np.abs(st.data))


def test_phase_changer_flips_sz():
    st = binomial_state(6, 0.4, 0.0)
    mean, _ = measured_moments(evolve(st, PhaseChanger()))
    assert mean == pytest.approx(-frame_of(st).bloch[2], abs=1e-12)


def test_pulse_spec_validation():
    with pytest.raises(ValueError):
        PulseSpec(float("nan"))
    with pytest.raises(ValueError):
        PulseSpec(1.0, resonant=False)
    with pytest.raises(ValueError):
        FreeEvolution(-1.0)
    assert PulseSpec(3 * math.pi).theta == pytest.approx(math.pi)


def test_sequence_json_round_trip():
    doc = [{"pulse": {"theta": 1.0, "phi": 0.5}}, {"free": {"T": 2.0, "chi": 0.1}}, "phase_changer"]
    seq = parse_sequence(json.dumps(doc))
    assert isinstance(seq[2], PhaseChanger)
    assert parse_sequence(sequence_to_json(seq)) == seq
    with pytest.raises(ValueError):
        parse_sequence([{"mirror": {}}])


# ---------------------------------------------------------------- analytic predictions

def test_measurable_coefficients():
    assert heisenberg_measurable(0.0, 1.3) == pytest.approx((0, 0, 1))
    assert heisenberg_measurable(math.pi / 2, 0.0) == pytest.approx((0, 1, 0))
    assert heisenberg_measurable(math.pi / 2, math.pi / 2) == pytest.approx((1, 0, 0))


@given(two_mode_states(max_n=6), hst.floats(0, math.pi), hst.floats(-math.pi, math.pi))
def test_variance_expansion_matches_quadratic_form(st, theta, phi):
    f = frame_of(st)
    c = np.array(heisenberg_measurable(theta, phi))
    assert predict_variance(f, theta, phi) == pytest.approx(c @ f.cov @ c, abs=1e-10)


@pytest.mark.parametrize("st", [noon_state(4, math.pi / 3), binomial_state(12, math.pi / 8, 0.0)],
                         ids=["noon", "binomial"])
def test_consistency_grid(st):
    scale = max(1.0, st.basis.sectors[-1] ** 2)
    for theta, phi in GRID:
        r = consistency_check(st, theta, phi)
        assert r["mean_residual"] <= 1e-9 * scale
        assert r["variance_residual"] <= 1e-9 * scale


def test_consistency_vacuum_zero():
    for theta, phi in GRID:
        r = consistency_check(vacuum(2), theta, phi)
        assert r["predicted_mean"] == 0.0 and r["measured_mean"] == 0.0
        assert r["predicted_variance"] == 0.0 and r["measured_variance"] == 0.0


@given(two_mode_states(max_n=6), hst.floats(0, 2 * math.pi), hst.floats(-math.pi, math.pi))
def test_consistency_property(st, theta, phi):
    r = consistency_check(st, theta, phi)
    scale = max(1.0, st.basis.sectors[-1] ** 2)
    assert r["mean_residual"] <= 1e-9 * scale
    assert r["variance_residual"] <= 1e-9 * scale


def test_multimode_reduces_to_two_mode():
    two = binomial_state(4, 0.6, 0.2)
    four = tensor(two, fock_state((0, 0)))
    four = embed(four, build_basis(4, [4], caps=(4, 4, 0, 0)))
    for theta, phi in GRID[::4]:
        m2, v2 = measured_moments(evolve(two, pulse(theta, phi)))
        m4, v4 = measured_moments(evolve(four, pulse(theta, phi)))
        assert m4 == pytest.approx(m2, abs=1e-12)
        assert v4 == pytest.approx(v2, abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_inplane_noise_bound_on_separable_inputs(seed):
    st = random_separable("TwoMode", seed, n_max=4)
    f = frame_of(st)
    for phi in np.linspace(0, 2 * math.pi, 13):
        _, var = measured_moments(evolve(st, pulse(math.pi / 2, phi)))
        assert var >= 0.5 * abs(f.bloch[2]) - 1e-9


# ---------------------------------------------------------------- tomography and M^2

def test_tomography_binomial():
    out = tomography(binomial_state(10, math.pi / 8, 0.0), "xy")
    assert out["cov_xx"] == pytest.approx(1.25, abs=1e-9)
    assert out["cov_yy"] == pytest.approx(2.5, abs=1e-9)


def test_tomography_yz_first_run_is_sz_variance():
    st = binomial_state(7, 0.9, 0.4)
    f = frame_of(st)
    out = tomography(st, "yz")
    assert out["cov_zz"] == pytest.approx(f.cov[2, 2], abs=1e-9)
    with pytest.raises(ValueError):
        tomography(st, "xz")


@given(two_mode_states(max_n=6))
def test_tomography_matches_frame(st):
    f = frame_of(st)
    xy, yz = tomography(st, "xy"), tomography(st, "yz")
    ref = {"bloch_x": f.bloch[0], "bloch_y": f.bloch[1], "bloch_z": f.bloch[2], "cov_xx": f.cov[0, 0],
           "cov_yy": f.cov[1, 1], "cov_zz": f.cov[2, 2], "cov_xy": f.cov[0, 1], "cov_yz": f.cov[1, 2]}
    for k, v in {**xy, **yz}.items():
        assert v == pytest.approx(ref[k], abs=1e-9 * max(1.0, st.basis.sectors[-1] ** 2))


def test_m2_protocol_values():
    st = binomial_state(8, 0.5, 0.3)
    ops = spin_operators(st.basis)
    from bosewitness.fock import expectation
    out = m2_protocol(st)
    assert out["sx2"] == pytest.approx(expectation(ops.x @ ops.x, st).real, abs=1e-9)
    assert out["sy2"] == pytest.approx(expectation(ops.y @ ops.y, st).real, abs=1e-9)
    anti = expectation(ops.x @ ops.y + ops.y @ ops.x, st, check_real=False).real
    assert out["anticommutator"] == pytest.approx(anti, abs=1e-9)


def test_m2_relphase_anticommutator_zero():
    out = m2_protocol(relative_phase_state(100, 0))
    assert abs(out["anticommutator"]) <= 1e-9
    assert out["second_order_verdict"] == "entangled"


def test_m2_fock_symmetric():
    out = m2_protocol(fock_state((3, 3)))
    assert out["sx2"] == pytest.approx(out["sy2"], abs=1e-12)
    assert out["second_order_verdict"] == "not_detected"


# ---------------------------------------------------------------- sampling

def test_sampling_fock_eigenstate():
    rec = sample_measurements(fock_state((4, 2)), [], 5000, seed=1)
    assert rec.sample_variance == 0.0
    assert rec.sample_mean == -1.0


def test_sampling_deterministic_and_validated():
    st = binomial_state(6, 0.4, 0.0)
    seq = [pulse(math.pi / 2, 0.3)]
    a = sample_measurements(st, seq, 100, seed=9)
    b = sample_measurements(st, seq, 100, seed=9)
    assert np.array_equal(a.samples, b.samples)
    with pytest.raises(ValueError):
        sample_measurements(st, seq, 0, seed=1)


def test_sampling_mean_within_five_sigma():
    st = binomial_state(10, math.pi / 8, 0.0)
    seq = [pulse(math.pi / 2, 0.0)]
    r = 10_000
    hits = 0
    for seed in range(100):
        rec = sample_measurements(st, seq, r, seed)
        hits += abs(rec.sample_mean - rec.predicted_mean) <= 5 * math.sqrt(rec.predicted_variance / r)
    assert hits >= 99


def test_sampled_values_are_eigenvalues():
    st = relative_phase_state(9, 1.5)
    rec = sample_measurements(st, [pulse(1.0, 0.2)], 500, seed=3)
    assert set(np.unique(rec.samples)) <= set(np.arange(-4.5, 5.0, 1.0))


# ---------------------------------------------------------------- Ramsey

def test_ramsey_fringe_without_collisions():
    n = 6
    st = fock_state((n, 0))
    for phi in np.linspace(0, 2 * math.pi, 9):
        out = ramsey(st, 1.0, 0.0, phi)
        # bloch (0, 0, -N/2) -> after the first pulse (0, N/2, 0) -> cosine fringe
        assert out["mean"] == pytest.approx(0.5 * n * math.cos(phi), abs=1e-10)


def test_ramsey_zero_twisting_equals_double_pulse():
    st = binomial_state(5, 0.3, 0.1)
    out = ramsey(st, 0.0, 3.0, 0.8)
    direct = run_sequence(st, [pulse(math.pi / 2, 0.0), pulse(math.pi / 2, 0.8)])
    assert np.allclose(out["final_state"].data, direct.data, atol=1e-12)


def test_ramsey_twisting_squeezes():
    st = fock_state((20, 0))
    xis = [ramsey(st, 1.0, chi, 0.0)["squeezing_parameter"] for chi in np.linspace(0.005, 0.1, 20)]
    assert min(xis) < 1.0
    assert ramsey(st, 1.0, 0.0, 0.0)["squeezing_parameter"] == pytest.approx(1.0)


# ---------------------------------------------------------------- fringe scans

def test_relphase_fringe_crossing():
    n, p = 100, 3
    tp = relative_phase_angle(n, p)
    phis = np.linspace(tp - 0.2, tp + 0.2, 41)
    rows = fringe_scan(relative_phase_state(n, p), phis)
    means = np.array([r[1] for r in rows])
    cross = int(np.argmin(np.abs(means)))
    assert abs(phis[cross] - tp) <= phis[1] - phis[0]
    assert rows[cross][2] == pytest.approx(0.25 + math.log(n) / 8, rel=0.1)


def test_fringe_scan_rows_and_determinism():
    st = binomial_state(6, 0.4, 0.0)
    phis = np.linspace(0, math.pi, 7)
    a = fringe_scan(st, phis, r=50, seed=4, threads=1)
    b = fringe_scan(st, phis, r=50, seed=4, threads=3)
    assert a == b
    assert len(a) == len(phis) and len(FRINGE_COLUMNS) == len(a[0])
    assert all(math.isnan(r[3]) for r in fringe_scan(st, phis))
