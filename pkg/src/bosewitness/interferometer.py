"""Resonant two-mode interferometer: Heisenberg-picture predictions, direct
evolution, tomography protocols and finite-sample measurement statistics.

A coupling pulse of area theta and phase phi acts as
U = exp(-i theta (cos(phi) S_x - sin(phi) S_y)), under which the measured
population difference S_z becomes
M(theta, phi) = sin(theta) (sin(phi) S_x + cos(phi) S_y) + cos(theta) S_z.
With several mode pairs the same pulse drives every pair.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fock import DERIVED_RTOL, OperatorMatrix, QuantumState
from .parallel import ordered_map
from .spin import (
    SpinFrame,
    _expi_hermitian,
    evaluate_frame,
    principal_frame,
    spin_operators,
)

# ---------------------------------------------------------------- sequence elements

@dataclass(frozen=True)
class PulseSpec:
    theta: float
    phi: float = 0.0
    resonant: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError("pulse area and phase must be finite")
        if not self.resonant:
            raise ValueError("only resonant pulses are modelled")
        object.__setattr__(self, "theta", self.theta % (2 * math.pi))


@dataclass(frozen=True)
class Pulse:
    spec: PulseSpec


@dataclass(frozen=True)
class PhaseChanger:
    """A pi pulse; it maps the measured S_z onto -S_z."""


@dataclass(frozen=True)
class FreeEvolution:
    T: float
    chi: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("free evolution time must be non-negative")


def pulse(theta: float, phi: float = 0.0) -> Pulse:
    return Pulse(PulseSpec(theta, phi))


def parse_sequence(doc) -> list:
    """Elements from the JSON form
    [{"pulse": {"theta": .., "phi": ..}}, {"free": {"T": .., "chi": ..}}, "phase_changer"]."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    out = []
    for i, item in enumerate(doc):
        if item == "phase_changer":
            out.append(PhaseChanger())
        elif isinstance(item, dict) and len(item) == 1 and "pulse" in item:
            p = item["pulse"]
            out.append(pulse(float(p["theta"]), float(p.get("phi", 0.0))))
        elif isinstance(item, dict) and len(item) == 1 and "free" in item:
            f = item["free"]
            out.append(FreeEvolution(float(f["T"]), float(f.get("chi", 0.0)), float(f.get("delta", 0.0))))
        else:
            raise ValueError(f"sequence element {i} not understood: {item!r}")
    return out


def sequence_to_json(seq) -> list:
    out = []
    for el in seq:
        if isinstance(el, PhaseChanger):
            out.append("phase_changer")
        elif isinstance(el, Pulse):
            out.append({"pulse": {"theta": el.spec.theta, "phi": el.spec.phi}})
        else:
            out.append({"free": {"T": el.T, "chi": el.chi, "delta": el.delta}})
    return out


# ---------------------------------------------------------------- predictions

def heisenberg_measurable(theta: float, phi: float):
    """Coefficients (c_x, c_y, c_z) of the measured operator after one pulse."""
    st, ct = math.sin(theta), math.cos(theta)
    return (st * math.sin(phi), st * math.cos(phi), ct)


def predict_mean(frame: SpinFrame, theta: float, phi: float) -> float:
    return float(np.dot(heisenberg_measurable(theta, phi), frame.bloch))


def predict_variance(frame: SpinFrame, theta: float, phi: float) -> float:
    """Variance of the measured operator written out in double angles."""
    c = frame.cov
    c2t, s2t = math.cos(2 * theta), math.sin(2 * theta)
    c2p, s2p = math.cos(2 * phi), math.sin(2 * phi)
    inplane = 0.5 * (1 - c2p) * c[0, 0] + 0.5 * (1 + c2p) * c[1, 1] + s2p * c[0, 1]
    return float(0.5 * (1 - c2t) * inplane + 0.5 * (1 + c2t) * c[2, 2]
                 + s2t * math.cos(phi) * c[1, 2] + s2t * math.sin(phi) * c[2, 0])


# ---------------------------------------------------------------- evolution

def pulse_unitary(basis, theta: float, phi: float, pairs=None) -> OperatorMatrix:
    ops = spin_operators(basis, pairs)
    gen = ops.along((math.cos(phi), -math.sin(phi), 0.0))
    return OperatorMatrix(basis, _expi_hermitian(gen, -theta, basis))


def _free_phases(basis, el: FreeEvolution, pairs=None) -> np.ndarray:
    sz = np.diag(spin_operators(basis, pairs).z.matrix).real
    return np.exp(-1j * el.T * (4 * el.chi * sz ** 2 + el.delta * sz))


def _apply(state: QuantumState, u: np.ndarray, diagonal: bool = False) -> QuantumState:
    if state.is_pure:
        v = u * state.data if diagonal else u @ state.data
        return QuantumState(state.basis, "pure", v, dict(state.ssr_flags), dict(state.meta))
    if diagonal:
        rho = u[:, None] * state.data * u.conj()[None, :]
    else:
        rho = u @ state.data @ u.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return QuantumState(state.basis, "mixed", rho, dict(state.ssr_flags), dict(state.meta), psd_known=True)


def evolve(state: QuantumState, element, pairs=None) -> QuantumState:
    """Apply one sequence element. Collisions are ignored during pulses."""
    if isinstance(element, PhaseChanger):
        element = pulse(math.pi, 0.0)
    if isinstance(element, Pulse):
        u = pulse_unitary(state.basis, element.spec.theta, element.spec.phi, pairs)
        return _apply(state, u.matrix)
    if isinstance(element, FreeEvolution):
        return _apply(state, _free_phases(state.basis, element, pairs), diagonal=True)
    raise TypeError(f"unknown sequence element {element!r}")


def run_sequence(state: QuantumState, seq, pairs=None) -> QuantumState:
    for el in seq:
        state = evolve(state, el, pairs)
    return state


def sz_distribution(state: QuantumState, pairs=None):
    """Eigenvalues of S_z and their Born probabilities."""
    sz = np.diag(spin_operators(state.basis, pairs).z.matrix).real
    pop = np.abs(state.data) ** 2 if state.is_pure else np.diag(state.data).real
    vals = np.unique(np.round(2 * sz).astype(int))
    probs = np.array([pop[np.round(2 * sz).astype(int) == v].sum() for v in vals])
    probs = np.clip(probs, 0.0, None)
    return vals / 2.0, probs / probs.sum()


def measured_moments(state: QuantumState, pairs=None):
    """Mean and variance of S_z on a state, from its Born distribution."""
    vals, probs = sz_distribution(state, pairs)
    mean = float(vals @ probs)
    return mean, float(((vals - mean) ** 2) @ probs)


def consistency_check(state: QuantumState, theta: float, phi: float, pairs=None) -> dict:
    """Residuals between the analytic prediction and direct evolution."""
    frame = evaluate_frame(spin_operators(state.basis, pairs), state)
    out_state = evolve(state, pulse(theta, phi), pairs)
    mean, var = measured_moments(out_state, pairs)
    pm, pv = predict_mean(frame, theta, phi), predict_variance(frame, theta, phi)
    return {"theta": theta, "phi": phi, "predicted_mean": pm, "predicted_variance": pv,
            "measured_mean": mean, "measured_variance": var,
            "mean_residual": abs(pm - mean), "variance_residual": abs(pv - var)}


# ---------------------------------------------------------------- protocols

def _run_measure(state, theta, phi, pairs=None):
    return measured_moments(evolve(state, pulse(theta, phi), pairs), pairs)


def tomography(state: QuantumState, plane: str = "xy", pairs=None) -> dict:
    """Recover Bloch and covariance entries from three simulated runs.

    xy: theta = pi/2 with phi in {0, pi/2, pi/4} gives <S_y>, <S_x>, C_yy,
    C_xx and C_xy. yz: phi = 0 with theta in {0, pi/2, pi/4} gives <S_z>,
    <S_y>, C_zz, C_yy and C_yz.
    """
    h = math.pi / 2
    if plane == "xy":
        m_y, v_y = _run_measure(state, h, 0.0, pairs)
        m_x, v_x = _run_measure(state, h, h, pairs)
        _, v_d = _run_measure(state, h, h / 2, pairs)
        return {"bloch_x": m_x, "bloch_y": m_y, "cov_xx": v_x, "cov_yy": v_y,
                "cov_xy": v_d - 0.5 * (v_x + v_y)}
    if plane == "yz":
        m_z, v_z = _run_measure(state, 0.0, 0.0, pairs)
        m_y, v_y = _run_measure(state, h, 0.0, pairs)
        _, v_d = _run_measure(state, h / 2, 0.0, pairs)
        return {"bloch_y": m_y, "bloch_z": m_z, "cov_yy": v_y, "cov_zz": v_z,
                "cov_yz": v_d - 0.5 * (v_y + v_z)}
    raise ValueError("plane must be 'xy' or 'yz'")


def _second_moment_run(state, phi, pairs=None):
    mean, var = _run_measure(state, math.pi / 2, phi, pairs)
    return var + mean ** 2


def m2_protocol(state: QuantumState, rtol: float = DERIVED_RTOL, pairs=None) -> dict:
    """<S_x^2>, <S_y^2> and <S_x S_y + S_y S_x> from the mean of M^2 at four phases.

    The second-order correlation <(b^dag a)^2> is non-zero exactly when
    <S_x^2> != <S_y^2> or the anticommutator is non-zero.
    """
    q = math.pi / 4
    sy2 = _second_moment_run(state, 0.0, pairs)
    sx2 = _second_moment_run(state, math.pi / 2, pairs)
    anti = _second_moment_run(state, q, pairs) - _second_moment_run(state, -q, pairs)
    scale = max(1.0, abs(sx2), abs(sy2))
    diff = abs(sx2 - sy2)
    fires = diff > rtol * scale or abs(anti) > rtol * scale
    return {"sx2": sx2, "sy2": sy2, "anticommutator": anti,
            "second_order_correlation": complex(sx2 - sy2, anti),
            "second_order_verdict": "entangled" if fires else "not_detected"}


@dataclass
class MeasurementRecord:
    samples: np.ndarray
    R: int
    sample_mean: float
    sample_variance: float
    predicted_mean: float
    predicted_variance: float
    seed: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"samples": [float(x) for x in self.samples], "R": self.R, "sample_mean": self.sample_mean,
                "sample_variance": self.sample_variance, "predicted_mean": self.predicted_mean,
                "predicted_variance": self.predicted_variance, "seed": self.seed}


def sample_from_distribution(vals, probs, r: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws of S_z eigenvalues."""
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return vals[np.searchsorted(cdf, rng.random(r), side="right")]


def sample_measurements(state: QuantumState, sequence, r: int, seed, pairs=None) -> MeasurementRecord:
    """R projective S_z measurements on the state after the sequence."""
    if r < 1:
        raise ValueError("need at least one repetition")
    final = run_sequence(state, sequence, pairs)
    vals, probs = sz_distribution(final, pairs)
    rng = np.random.default_rng(seed)
    samples = sample_from_distribution(vals, probs, r, rng)
    mean = float(vals @ probs)
    var = float(((vals - mean) ** 2) @ probs)
    svar = float(samples.var(ddof=1)) if r > 1 else 0.0
    s = seed if isinstance(seed, int) else -1
    return MeasurementRecord(samples, r, float(samples.mean()), svar, mean, var, s)


def ramsey(state: QuantumState, T: float, chi: float, phi2: float, phi1: float = 0.0,
           delta: float = 0.0, pairs=None) -> dict:
    """pi/2 pulse, free evolution with collisions, pi/2 pulse; measure S_z.

    Also reports the squeezing of the state between the pulses: the
    smallest variance transverse to the Bloch vector, and the parameter
    N * min_var / |<S>|^2 (below one means squeezed).
    """
    seq = [pulse(math.pi / 2, phi1), FreeEvolution(T, chi, delta), pulse(math.pi / 2, phi2)]
    mid = run_sequence(state, seq[:2], pairs)
    frame = evaluate_frame(spin_operators(state.basis, pairs), mid)
    _, pf = principal_frame(frame)
    min_var = float(min(pf.cov[0, 0], pf.cov[1, 1]))
    length2 = float(frame.bloch @ frame.bloch)
    n = frame.n_mean
    xi2 = n * min_var / length2 if length2 > 0 else math.inf
    final = evolve(mid, seq[2], pairs)
    mean, var = measured_moments(final, pairs)
    return {"sequence": seq, "mean": mean, "variance": var, "min_transverse_variance": min_var,
            "squeezing_parameter": xi2, "squeezed": bool(min_var < n / 4 - 1e-12 and xi2 < 1),
            "final_state": final}


FRINGE_COLUMNS = ("phi", "mean", "variance", "sample_mean", "sample_stderr")


def fringe_scan(state: QuantumState, phis, theta: float = math.pi / 2, r: int = 0, seed: int = 0,
                pairs=None, threads: int | None = None) -> list:
    """Rows (phi, mean, variance, sample_mean, sample_stderr) in grid order.

    Means and variances are the analytic predictions; when r > 0 each grid
    point also gets r simulated measurements from its own random stream.
    """
    phis = [float(p) for p in phis]
    frame = evaluate_frame(spin_operators(state.basis, pairs), state)
    streams = np.random.SeedSequence(seed).spawn(len(phis))

    def row(i):
        phi = phis[i]
        mean, var = predict_mean(frame, theta, phi), predict_variance(frame, theta, phi)
        if r > 0:
            rec = sample_measurements(state, [pulse(theta, phi)], r, np.random.default_rng(streams[i]), pairs)
            sm, se = rec.sample_mean, math.sqrt(rec.sample_variance / r) if r > 1 else math.nan
        else:
            sm, se = math.nan, math.nan
        return (phi, mean, var, sm, se)

    return ordered_map(row, range(len(phis)), threads)
