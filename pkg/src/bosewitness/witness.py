"""Entanglement tests for two-mode and multi-mode bosonic states.

Every test returns a WitnessReport. The margin is signed so that a
positive value points toward entanglement, and a test fires only when the
margin exceeds `rtol * scale`, so numerical equality never fires.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .fock import (
    DERIVED_RTOL,
    FockBasis,
    QuantumState,
    close_pairs,
    embed,
    expectation,
    monomial,
    padded_basis,
)
from .parallel import ordered_map
from .spin import (
    AXES,
    SpinFrame,
    evaluate_frame,
    local_spin_operators,
    principal_frame,
    spin_operators,
)

ENTANGLED = "entangled"
NOT_DETECTED = "not_detected"
INAPPLICABLE = "inapplicable"


class EngineError(RuntimeError):
    """A relation that holds for every quantum state was violated numerically."""


@dataclass
class WitnessReport:
    test_id: str
    relation: str
    lhs: float
    rhs: float
    margin: float
    verdict: str
    tolerance: float
    frame: str = "original"
    params: dict = field(default_factory=dict)
    condition_met: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _decide(test_id, relation, lhs, rhs, margin, rtol, scale=None, frame="original",
            params=None, applicable=True, reason=""):
    lhs, rhs, margin = float(lhs), float(rhs), float(margin)
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        raise EngineError(f"{test_id}: non-finite sides {lhs}, {rhs}")
    if scale is None:
        scale = max(1.0, abs(lhs), abs(rhs))
    tol = rtol * scale
    met = margin > tol
    params = dict(params or {})
    if not applicable:
        verdict = INAPPLICABLE
        if reason:
            params["reason"] = reason
    else:
        verdict = ENTANGLED if met else NOT_DETECTED
    return WitnessReport(test_id, relation, lhs, rhs, margin, verdict, tol, frame, params, bool(met))


def _inapplicable(test_id, relation, frame, reason, params=None):
    p = dict(params or {})
    p["reason"] = reason
    return WitnessReport(test_id, relation, 0.0, 0.0, 0.0, INAPPLICABLE, 0.0, frame, p, False)


def _is_case3(structure):
    return structure == "Case3"


# ---------------------------------------------------------------- spin-frame tests

_ORDERINGS = [(a, b) for a in range(3) for b in range(3) if a != b]


def spin_squeezing_test(frame: SpinFrame, pair=None, rtol: float = DERIVED_RTOL,
                        structure: str | None = None) -> list:
    """Var(S_alpha) < |<S_gamma>| / 2 for gamma the axis orthogonal to alpha and beta.

    `pair` is (alpha, beta) as axis indices or letters; all six orderings
    are reported when it is None.
    """
    if pair is None:
        pairs = _ORDERINGS
    else:
        pairs = [tuple(AXES.index(p) if isinstance(p, str) else int(p) for p in pair)]
    var = frame.variances
    out = []
    for a, b in pairs:
        g = 3 - a - b
        name = f"{AXES[a]}{AXES[b]}"
        rel = f"Var(S_{AXES[a]}) < |<S_{AXES[g]}>|/2"
        lhs, rhs = var[a], 0.5 * abs(frame.bloch[g])
        applicable, reason = True, ""
        if _is_case3(structure):
            applicable = False
            reason = "mode-pair sub-systems: squeezing is possible for separable states"
        out.append(_decide("spin_squeezing", rel, lhs, rhs, rhs - lhs, rtol, frame=frame.label,
                           params={"pair": name}, applicable=applicable, reason=reason))
    return out


def inplane_squeezing_test(frame: SpinFrame, rtol: float = DERIVED_RTOL, structure=None) -> WitnessReport:
    """Smallest variance of cos(phi) S_x + sin(phi) S_y over phi against |<S_z>|/2."""
    blk = frame.cov[:2, :2]
    w, v = np.linalg.eigh(0.5 * (blk + blk.T))
    phi = math.atan2(v[1, 0], v[0, 0])
    lhs, rhs = w[0], 0.5 * abs(frame.bloch[2])
    return _decide("inplane_squeezing", "min_phi Var(S_perp(phi)) < |<S_z>|/2", lhs, rhs, rhs - lhs, rtol,
                   frame=frame.label, params={"phi_min": phi}, applicable=not _is_case3(structure),
                   reason="mode-pair sub-systems")


def bloch_vector_test(frame: SpinFrame, rtol: float = DERIVED_RTOL, structure=None) -> WitnessReport:
    """Any non-zero transverse mean <S_x> or <S_y> certifies entanglement."""
    lhs = max(abs(frame.bloch[0]), abs(frame.bloch[1]))
    scale = max(1.0, 0.5 * frame.n_mean)
    return _decide("bloch_vector", "max(|<S_x>|, |<S_y>|) > 0", lhs, 0.0, lhs, rtol, scale=scale,
                   frame=frame.label, applicable=not _is_case3(structure),
                   reason="mode-pair sub-systems: no Bloch vector test")


def hillery_spin_variance_test(frame: SpinFrame, n_mean: float | None = None, rtol: float = DERIVED_RTOL,
                               structure=None) -> WitnessReport:
    """Var(S_x) + Var(S_y) < <N>/2."""
    n = frame.n_mean if n_mean is None else n_mean
    lhs = frame.cov[0, 0] + frame.cov[1, 1]
    rhs = 0.5 * n
    return _decide("hillery", "Var(S_x) + Var(S_y) < <N>/2", lhs, rhs, rhs - lhs, rtol, frame=frame.label,
                   applicable=not _is_case3(structure),
                   reason="mode-pair sub-systems: separable product of entangled pairs satisfies it")


def impossible_sum_audit(frame: SpinFrame, rtol: float = DERIVED_RTOL) -> list:
    """Var(S_a) + Var(S_b) >= |<S_c>| holds for every state; report the slack.

    A violation beyond the tolerance raises EngineError.
    """
    out = []
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        lhs = frame.cov[a, a] + frame.cov[b, b]
        rhs = abs(frame.bloch[c])
        scale = max(1.0, lhs, rhs)
        if lhs < rhs - max(1e-9, rtol) * scale:
            raise EngineError(f"Var(S_{AXES[a]}) + Var(S_{AXES[b]}) = {lhs} < |<S_{AXES[c]}>| = {rhs}")
        out.append(WitnessReport("impossible_sum", f"Var(S_{AXES[a]}) + Var(S_{AXES[b]}) < |<S_{AXES[c]}>|",
                                 float(lhs), float(rhs), float(rhs - lhs), NOT_DETECTED, rtol * scale,
                                 frame.label, {"axes": AXES[a] + AXES[b] + AXES[c], "audit": True}, False))
    return out


def sorensen_test(frame: SpinFrame, n: float | None = None, axis: int = 2, rtol: float = DERIVED_RTOL,
                  structure=None, one_boson_pairs: bool = False) -> WitnessReport:
    """xi^2 = N Var(S_axis) / (sum of the other two means squared) < 1."""
    n = (frame.fixed_n if frame.fixed_n is not None else frame.n_mean) if n is None else n
    others = [k for k in range(3) if k != axis]
    den = float(sum(frame.bloch[k] ** 2 for k in others))
    length = float(np.linalg.norm(frame.bloch))
    params = {"axis": AXES[axis], "bloch_length_ratio": 2 * length / n if n > 0 else 0.0}
    rel = f"xi^2 = N Var(S_{AXES[axis]}) / (<S_{AXES[others[0]]}>^2 + <S_{AXES[others[1]]}>^2) < 1"
    if den <= rtol * max(1.0, (0.5 * n) ** 2):
        return _inapplicable("sorensen", rel, frame.label, "transverse Bloch vector vanishes", params)
    xi2 = n * frame.cov[axis, axis] / den
    params["xi2"] = float(xi2)
    ok = not _is_case3(structure) or one_boson_pairs
    return _decide("sorensen", rel, xi2, 1.0, 1.0 - xi2, rtol, scale=1.0, frame=frame.label, params=params,
                   applicable=ok, reason="mode-pair sub-systems without the one-boson restriction")


def sorensen_principal(pframe: SpinFrame, n=None, rtol=DERIVED_RTOL, structure=None, one_boson_pairs=False):
    """Sorensen parameter in the principal frame, using the smaller transverse variance."""
    axis = 0 if pframe.cov[0, 0] < pframe.cov[1, 1] else 1
    return sorensen_test(pframe, n, axis, rtol, structure, one_boson_pairs)


def benatti_sum_identity(frame: SpinFrame) -> float:
    """Residual of sum_xi Var(J_xi) = N(N+2)/4 - |bloch|^2 for a fixed-N two-mode state."""
    n = frame.fixed_n
    if n is None:
        raise ValueError("identity needs a fixed-N state")
    return float(np.trace(frame.cov) - (n * (n + 2) / 4 - frame.bloch @ frame.bloch))


def benatti_tests(frame: SpinFrame, n: int | None = None, third_axis: int = 2, rtol: float = DERIVED_RTOL,
                  structure=None) -> list:
    """Sum of the three variances < N/2, and
    (N-1)(Var J_1 + Var J_2) - <J_3^2> < N(N-2)/4."""
    n = frame.fixed_n if n is None else n
    r1 = "Var(J_1) + Var(J_2) + Var(J_3) < N/2"
    r2 = "(N-1)(Var(J_1) + Var(J_2)) - <J_3^2> < N(N-2)/4"
    two_mode = len(frame.operators.pairs) == 1 and frame.operators.basis.num_modes == 2
    if n is None or not two_mode:
        why = "needs a two-mode state with a fixed total number"
        return [_inapplicable("benatti_1", r1, frame.label, why), _inapplicable("benatti_2", r2, frame.label, why)]
    case3 = _is_case3(structure)
    lhs1 = float(np.trace(frame.cov))
    rep1 = _decide("benatti_1", r1, lhs1, n / 2, n / 2 - lhs1, rtol, frame=frame.label,
                   params={"N": n}, applicable=not case3, reason="mode-pair sub-systems")
    a, b = [k for k in range(3) if k != third_axis]
    j3sq = frame.cov[third_axis, third_axis] + frame.bloch[third_axis] ** 2
    lhs2 = (n - 1) * (frame.cov[a, a] + frame.cov[b, b]) - j3sq
    rhs2 = n * (n - 2) / 4
    rep2 = _decide("benatti_2", r2, lhs2, rhs2, rhs2 - lhs2, rtol, frame=frame.label,
                   params={"N": n, "third_axis": AXES[third_axis]}, applicable=not case3,
                   reason="mode-pair sub-systems")
    return [rep1, rep2]


def number_diff_sum_test(state: QuantumState, ratio: float = 1.0, rtol: float = DERIVED_RTOL,
                         pairs=None) -> WitnessReport:
    """Var(S_z) < ratio * Var(N)/4: small number-difference noise with large total-number noise.

    This criterion is qualitative. Mixtures of Fock states with very
    different totals can satisfy it while being separable, so the battery
    only runs it on request.
    """
    ops = spin_operators(state.basis, pairs)
    frame = evaluate_frame(ops, state)
    lhs = frame.cov[2, 2]
    rhs = 0.25 * ratio * frame.n_var
    return _decide("number_diff_sum", "Var(S_z) < ratio Var(N)/4", lhs, rhs, rhs - lhs, rtol,
                   params={"ratio": ratio, "var_sz": float(lhs), "var_n": frame.n_var, "qualitative": True})


def planar_squeezing(frame: SpinFrame) -> dict:
    """State property: in-plane noise below |<S_x>|/2 with out-of-plane noise above it."""
    para = float(frame.cov[0, 0] + frame.cov[1, 1])
    perp = float(frame.cov[2, 2])
    half = 0.5 * abs(frame.bloch[0])
    return {"para": para, "perp": perp, "half_abs_sx": half, "planar_squeezed": bool(para < half < perp)}


# ---------------------------------------------------------------- correlation tests

def _spin_form_correlation(state: QuantumState, m: int, n: int, pair):
    """<S_+^m> and the falling-factorial form of the normal-ordered number product.

    In the Fock basis N and S_z are diagonal, so n_a = N/2 - S_z and
    n_b = N/2 + S_z are too, and (a^dag)^m a^m is the falling factorial
    n_a (n_a - 1) ... (n_a - m + 1).
    """
    ops = spin_operators(state.basis, [pair])
    half_n = 0.5 * np.diag(ops.number.matrix).real
    sz = np.diag(ops.z.matrix).real
    na, nb = half_n - sz, half_n + sz
    fall = np.ones(state.basis.dim)
    for k in range(m):
        fall = fall * (na - k)
    for k in range(n):
        fall = fall * (nb - k)
    lhs_op = np.linalg.matrix_power(ops.plus.matrix, m)
    rho = state.density_matrix()
    val = complex(np.sum(lhs_op * rho.T))
    rhs = float(np.sum(fall * np.diag(rho).real))
    return val, rhs


def correlation_test(state: QuantumState, m: int = 1, n: int = 1, pair=(0, 1), strength: str = "weak",
                     rtol: float = DERIVED_RTOL, structure=None) -> WitnessReport:
    """weak: |<a^m (b^dag)^n>|^2 > 0; strong: |<a^m (b^dag)^n>|^2 > <(a^dag)^m a^m (b^dag)^n b^n>."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be at least 1")
    if strength not in ("weak", "strong"):
        raise ValueError("strength must be 'weak' or 'strong'")
    a, b = pair
    basis = state.basis
    corr = expectation(monomial(basis, {b: n}, {a: m}), state, check_real=False)
    lhs = abs(corr) ** 2
    strong_rhs = expectation(monomial(basis, {a: m, b: n}, {a: m, b: n}), state).real
    params = {"m": m, "n": n, "pair": list(pair), "corr_re": corr.real, "corr_im": corr.imag}
    if m != n:
        params["note"] = "zero for every globally SSR-compliant state when m != n"
    else:
        sub, sub_rhs = _spin_form_correlation(state, m, n, pair)
        scale = max(1.0, abs(corr), abs(strong_rhs))
        dev = max(abs(sub - corr), abs(sub_rhs - strong_rhs))
        if dev > 1e-9 * scale:
            raise EngineError(f"spin-operator form disagrees with mode form by {dev:.3g}")
        params["spin_form_deviation"] = float(dev)
    test_id = f"{strength}_correlation"
    applicable = not _is_case3(structure)
    if strength == "weak":
        rel = f"|<a^{m} (b^dag)^{n}>|^2 > 0"
        return _decide(test_id, rel, lhs, 0.0, lhs, rtol, scale=max(1.0, strong_rhs), params=params,
                       applicable=applicable, reason="modes of one pair belong to one sub-system")
    rel = f"|<a^{m} (b^dag)^{n}>|^2 > <(a^dag)^{m} a^{m} (b^dag)^{n} b^{n}>"
    return _decide(test_id, rel, lhs, strong_rhs, lhs - strong_rhs, rtol, params=params,
                   applicable=applicable, reason="modes of one pair belong to one sub-system")


# ---------------------------------------------------------------- quadratures

def _sparse_lower(basis: FockBasis, mode: int):
    rows, cols, vals = [], [], []
    for j, occ in enumerate(basis.states):
        k = occ[mode]
        if k == 0:
            continue
        i = basis.index.get(occ[:mode] + (k - 1,) + occ[mode + 1:])
        if i is not None:
            rows.append(i)
            cols.append(j)
            vals.append(math.sqrt(k))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim), dtype=complex)


class _QuadratureMoments:
    """Quadrature moments on a basis padded by one sector on each side.

    One extra sector is enough for exact first and second moments: the
    intermediate states of X Y lie at most one sector away, and the final
    trace only sees the sectors the state occupies.
    """

    def __init__(self, state: QuantumState, pair=(0, 1)):
        big = padded_basis(state.basis, 1)
        self.state = embed(state, big)
        self.basis = big
        self.lower = {m: _sparse_lower(big, m) for m in pair}
        self.pair = pair
        self._pure = self.state.is_pure
        self._data = self.state.data

    def quad(self, mode: int, theta: float):
        a = self.lower[mode]
        return (a * np.exp(-1j * theta) + a.conj().T * np.exp(1j * theta)) / math.sqrt(2)

    def mean(self, x) -> float:
        if self._pure:
            return float(np.vdot(self._data, x @ self._data).real)
        return float(x.multiply(self._data.T).sum().real)

    def second(self, x, y) -> float:
        if self._pure:
            return float(np.vdot(x.conj().T @ self._data, y @ self._data).real)
        # Tr(X Y rho) as an elementwise sum, avoiding a second sparse-dense product
        return float(x.multiply((y @ self._data).T).sum().real)

    def variance(self, x) -> float:
        return self.second(x, x) - self.mean(x) ** 2

    def cross(self, x, y) -> complex:
        if self._pure:
            return complex(np.vdot(x.conj().T @ self._data, y @ self._data))
        return complex(x.multiply((y @ self._data).T).sum())


def quadrature_tests(state: QuantumState, theta: float = 0.0, pair=(0, 1), rtol: float = DERIVED_RTOL,
                     structure=None) -> list:
    """Correlation coefficient, two-mode quadrature squeezing, and the Duan identity audit."""
    q = _QuadratureMoments(state, pair)
    a, b = pair
    applicable = not _is_case3(structure)
    why = "modes of one pair belong to one sub-system"
    ops = spin_operators(state.basis, [pair])
    sx = expectation(ops.x, state).real
    sy = expectation(ops.y, state).real
    n_pair = expectation(ops.number, state).real
    glob = bool(state.ssr_flags.get("global_compliant"))
    out = []

    # correlation coefficient at two relative angles so both S_x and S_y are probed
    for th, ph in ((theta, theta), (theta, theta + math.pi / 2)):
        xa, xb = q.quad(a, th), q.quad(b, ph)
        c_ab = q.cross(xa, xb)
        den = q.second(xa, xa) * q.second(xb, xb)
        coeff = abs(c_ab) ** 2 / den if den > 0 else 0.0
        params = {"theta": th, "phi": ph, "corr": float(c_ab.real)}
        if glob:
            pred = sx * math.cos(th - ph) + sy * math.sin(th - ph)
            res = abs(c_ab.real - pred)
            if res > 1e-9 * max(1.0, abs(pred), n_pair):
                raise EngineError(f"<X_a X_b> = {c_ab.real} differs from spin form {pred}")
            params["spin_form_residual"] = float(res)
        out.append(_decide("corr_coeff", "|<X_a X_b>|^2 / (<X_a^2><X_b^2>) > 0", coeff, 0.0, coeff, rtol,
                           scale=1.0, params=params, applicable=applicable, reason=why))

    # two-mode quadrature squeezing
    r = 1 / math.sqrt(2)
    xa, xb = q.quad(a, theta), q.quad(b, theta)
    pa, pb = q.quad(a, theta + math.pi / 2), q.quad(b, theta + math.pi / 2)
    variants = {"X+": (xa + xb) * r, "X-": (xa - xb) * r, "P+": (pa + pb) * r, "P-": (pa - pb) * r}
    var = {k: q.variance(v) for k, v in variants.items()}
    best = min(var, key=var.get)
    params = {"theta": theta, "variances": var, "which": best}
    if glob:
        pred = {"X+": 0.5 * (n_pair + 1) + sx, "X-": 0.5 * (n_pair + 1) - sx,
                "P+": 0.5 * (n_pair + 1) + sx, "P-": 0.5 * (n_pair + 1) - sx}
        res = max(abs(var[k] - pred[k]) for k in var)
        if res > 1e-9 * max(1.0, n_pair):
            raise EngineError(f"two-mode quadrature variances differ from spin form by {res:.3g}")
        params["spin_form_residual"] = float(res)
    out.append(_decide("two_mode_squeeze", "min Var(X_theta(+-), P_theta(+-)) < 1/2", var[best], 0.5,
                       0.5 - var[best], rtol, params=params, applicable=applicable, reason=why))

    # Duan identity audit
    xa0, xb0, pa0, pb0 = q.quad(a, 0.0), q.quad(b, 0.0), q.quad(a, math.pi / 2), q.quad(b, math.pi / 2)
    lhs_p = q.variance(xa0 + xb0) + q.variance(pa0 - pb0)
    lhs_m = q.variance(xa0 - xb0) + q.variance(pa0 + pb0)
    target = 2 + 2 * n_pair
    res = max(abs(lhs_p - target), abs(lhs_m - target))
    params = {"sum_plus": lhs_p, "sum_minus": lhs_m, "residual": float(res)}
    if not glob:
        out.append(_inapplicable("duan_audit", "Var(x_A+x_B) + Var(p_A-p_B) = 2 + 2<N>", "original",
                                 "identity needs global SSR compliance", params))
    else:
        if res > 1e-9 * max(1.0, target):
            raise EngineError(f"Duan identity residual {res:.3g}")
        out.append(WitnessReport("duan_audit", "Var(x_A+x_B) + Var(p_A-p_B) = 2 + 2<N>", float(lhs_p),
                                 float(target), 0.0, NOT_DETECTED, 1e-9 * max(1.0, target), "original",
                                 params, False))
    return out


# ---------------------------------------------------------------- four-mode tests

def four_mode_tests(state: QuantumState, rtol: float = DERIVED_RTOL, structure=None) -> list:
    """Tests between wells (a1, b1) and (a2, b2): the local spin product test and
    the variance-sum test for all cyclic axis choices and both signs."""
    if state.basis.num_modes != 4:
        raise ValueError("four-mode tests need modes ordered (a1, b1, a2, b2)")
    state = close_pairs(state)
    w1, w2, _ = local_spin_operators(state.basis)
    applicable = structure not in ("Case1",)
    why = "sub-systems are the a and b mode blocks, not the wells"
    rho = state.density_matrix()
    ev = lambda m: complex(np.sum(m * rho.T))
    p1, m1, p2, m2 = w1.plus.matrix, w1.minus.matrix, w2.plus.matrix, w2.minus.matrix
    lhs = abs(ev(p1 @ m2)) ** 2
    rhs = ev(p1 @ m1 @ p2 @ m2).real
    out = [_decide("he_spin", "|<S1_+ S2_->|^2 > <S1_+ S1_- S2_+ S2_->", lhs, rhs, lhs - rhs, rtol,
                   applicable=applicable, reason=why)]
    f1 = evaluate_frame(w1, state, check=False)
    f2 = evaluate_frame(w2, state, check=False)
    for om, la, th in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        for sign in (1, -1):
            o = w1.components()[om] + w2.components()[om] * sign
            l = w1.components()[la] - w2.components()[la] * sign
            lv = _var(o, state) + _var(l, state)
            rv = abs(f1.bloch[th]) + abs(f2.bloch[th])
            s = "+" if sign > 0 else "-"
            t = "-" if sign > 0 else "+"
            rel = (f"Var(S1_{AXES[om]} {s} S2_{AXES[om]}) + Var(S1_{AXES[la]} {t} S2_{AXES[la]})"
                   f" < |<S1_{AXES[th]}>| + |<S2_{AXES[th]}>|")
            out.append(_decide("raymer", rel, lv, rv, rv - lv, rtol,
                               params={"axes": AXES[om] + AXES[la] + AXES[th], "beta": sign},
                               applicable=applicable, reason=why))
    return out


def _var(op, state):
    from .fock import variance
    return variance(op.hermitian(), state)


# ---------------------------------------------------------------- HUP region

def hup_region(j: float, xi: float, sz_abs: float):
    """Bounds on Var(S_x) allowed by Var(S_x) Var(S_y) = xi <S_z>^2 / 4 and
    <S_x^2> + <S_y^2> + <S_z>^2 <= J(J+1).

    Returns (lower, upper), or None where the discriminant is negative
    (that |<S_z>| is excluded).
    """
    if j <= 0 or xi < 1 or not 0 <= sz_abs <= j:
        raise ValueError("need J > 0, xi >= 1 and 0 <= |<S_z>| <= J")
    a = j * (j + 1) - sz_abs ** 2
    disc = a * a - xi * sz_abs ** 2
    if disc < 0:
        return None
    upper = 0.5 * (a + math.sqrt(disc))
    # the product of the roots is xi <S_z>^2 / 4; dividing avoids cancellation in a - sqrt(disc)
    lower = xi * sz_abs ** 2 / (4 * upper) if upper > 0 else 0.0
    return lower, upper


def hup_boundary(j: float, xi: float, sz_values) -> list:
    """Rows (sz, lower, upper, excluded) in input order; bounds are NaN when excluded."""
    rows = []
    for sz in sz_values:
        b = hup_region(j, xi, float(sz))
        if b is None:
            rows.append((float(sz), math.nan, math.nan, True))
        else:
            rows.append((float(sz), b[0], b[1], False))
    return rows


def excluded_interval(j: float, xi: float):
    """Closed-form |<S_z>| interval with a negative discriminant, or None.

    With u = <S_z>^2 and c = J(J+1), the discriminant (c-u)^2 - xi u is
    negative between the roots u = c + xi/2 -+ sqrt(xi c + xi^2/4).
    """
    c = j * (j + 1)
    half = xi / 2
    root = math.sqrt(xi * c + half * half)
    lo_u, hi_u = c + half - root, c + half + root
    lo, hi = math.sqrt(max(lo_u, 0.0)), math.sqrt(hi_u)
    hi = min(hi, j)
    if lo >= hi:
        return None
    return lo, hi


# ---------------------------------------------------------------- battery

@dataclass
class BatteryConfig:
    structure: str | None = None
    rtol: float = DERIVED_RTOL
    theta: float = 0.0
    orders: tuple = (1, 2)
    max_auto_order: int = 16
    include_qualitative: bool = False
    frames: tuple = ("original", "principal")
    one_boson_pairs: bool = False

    def __post_init__(self):
        if self.rtol <= 0:
            raise ValueError("tolerance must be positive")


def _structure_of(state: QuantumState, config: BatteryConfig) -> str:
    if config.structure:
        return config.structure
    if "structure" in state.meta:
        return state.meta["structure"]
    return "TwoMode" if state.basis.num_modes == 2 else "Case2"


def _frame_tests(frame: SpinFrame, structure, cfg, one_boson) -> list:
    r = cfg.rtol
    out = []
    out += spin_squeezing_test(frame, rtol=r, structure=structure)
    if frame.label == "original":
        out.append(inplane_squeezing_test(frame, r, structure))
        out.append(bloch_vector_test(frame, r, structure))
    out.append(hillery_spin_variance_test(frame, rtol=r, structure=structure))
    out += impossible_sum_audit(frame, r)
    if frame.label == "original":
        out.append(sorensen_test(frame, rtol=r, structure=structure, one_boson_pairs=one_boson))
    else:
        out.append(sorensen_principal(frame, rtol=r, structure=structure, one_boson_pairs=one_boson))
    out += benatti_tests(frame, rtol=r, structure=structure)
    return out


def run_battery(state: QuantumState, config: BatteryConfig | None = None, threads: int | None = None) -> list:
    """Every applicable test in a fixed order: frame tests (original, then
    principal), correlation tests, quadrature tests, four-mode tests."""
    cfg = config or BatteryConfig()
    if state.basis.num_modes % 2 == 0:
        state = close_pairs(state)
    structure = _structure_of(state, cfg)
    one_boson = cfg.one_boson_pairs or bool(state.meta.get("one_boson_pairs"))
    ops = spin_operators(state.basis)
    frame = evaluate_frame(ops, state)
    frames = []
    if "original" in cfg.frames:
        frames.append(frame)
    if "principal" in cfg.frames:
        frames.append(principal_frame(frame)[1])

    jobs = [lambda f=f: _frame_tests(f, structure, cfg, one_boson) for f in frames]
    orders = list(cfg.orders)
    if state.basis.num_modes == 2 and frame.fixed_n and frame.fixed_n <= cfg.max_auto_order:
        # all-or-nothing states such as NOON only correlate at order N
        if frame.fixed_n not in orders:
            orders.append(frame.fixed_n)
    for pair in ops.pairs:
        for k in orders:
            for strength in ("weak", "strong"):
                jobs.append(lambda p=pair, k=k, s=strength: [correlation_test(
                    state, k, k, p, s, cfg.rtol, structure)])
        jobs.append(lambda p=pair: quadrature_tests(state, cfg.theta, p, cfg.rtol, structure))
    if state.basis.num_modes == 4:
        jobs.append(lambda: four_mode_tests(state, cfg.rtol, structure))
    if cfg.include_qualitative:
        jobs.append(lambda: [number_diff_sum_test(state, rtol=cfg.rtol)])
    results = ordered_map(lambda job: job(), jobs, threads)
    return [rep for group in results for rep in group]


def verdict_summary(reports: list) -> dict:
    """Per test_id: entangled if any variant fired, else not_detected, else inapplicable."""
    rank = {INAPPLICABLE: 0, NOT_DETECTED: 1, ENTANGLED: 2}
    out = {}
    for r in reports:
        if r.test_id not in out or rank[r.verdict] > rank[out[r.test_id]]:
            out[r.test_id] = r.verdict
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def reports_to_json(reports: list) -> str:
    return json.dumps([_jsonable(r.to_dict()) for r in reports], indent=1)


CSV_COLUMNS = ["test_id", "relation", "lhs", "rhs", "margin", "verdict", "tolerance", "frame", "params"]


def _fmt(x):
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def reports_to_csv(reports: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        d = r.to_dict()
        w.writerow([_fmt(d[c]) if c != "params" else json.dumps(_jsonable(d[c]), sort_keys=True)
                    for c in CSV_COLUMNS])
    return buf.getvalue()
