"""Schwinger spin operators, spin frames, rotations and quadratures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .fock import (
    FockBasis,
    OperatorMatrix,
    QuantumState,
    commutator,
    expectation,
    hop,
    ladder,
    monomial,
    number_operator,
    second_moment,
)

AXES = ("x", "y", "z")


# ---------------------------------------------------------------- operators

@dataclass(frozen=True)
class SpinOperators:
    basis: FockBasis
    x: OperatorMatrix
    y: OperatorMatrix
    z: OperatorMatrix
    number: OperatorMatrix
    pairs: tuple = ()

    def components(self):
        return (self.x, self.y, self.z)

    def along(self, coeffs) -> OperatorMatrix:
        """Real linear combination  sum_mu c_mu S_mu."""
        c = np.asarray(coeffs, dtype=float)
        m = c[0] * self.x.matrix + c[1] * self.y.matrix + c[2] * self.z.matrix
        return OperatorMatrix(self.basis, m, True)

    def rotated(self, rot) -> "SpinOperators":
        """Operators J_xi = sum_mu rot[xi, mu] S_mu."""
        rot = np.asarray(rot, dtype=float)
        jx, jy, jz = (self.along(rot[k]) for k in range(3))
        return SpinOperators(self.basis, jx, jy, jz, self.number, self.pairs)

    @property
    def plus(self) -> OperatorMatrix:
        """S_x + i S_y = sum_i b_i^dag a_i."""
        return OperatorMatrix(self.basis, self.x.matrix + 1j * self.y.matrix)

    @property
    def minus(self) -> OperatorMatrix:
        """S_x - i S_y = sum_i a_i^dag b_i."""
        return OperatorMatrix(self.basis, self.x.matrix - 1j * self.y.matrix)

    def casimir(self) -> OperatorMatrix:
        m = sum(s.matrix @ s.matrix for s in self.components())
        return OperatorMatrix(self.basis, m).hermitian()


def default_pairs(num_modes: int):
    if num_modes % 2:
        raise ValueError("spin operators need an even number of modes paired as (a_i, b_i)")
    return tuple((2 * i, 2 * i + 1) for i in range(num_modes // 2))


def spin_operators(basis: FockBasis, pairs=None) -> SpinOperators:
    """Schwinger operators summed over mode pairs (a_i, b_i).

    The default pairing for m modes is (0,1), (2,3), ... . The number
    operator returned counts the paired modes only. Results are cached
    per basis; the matrices must be treated as read-only.
    """
    pairs = tuple(tuple(int(m) for m in p) for p in (pairs if pairs is not None
                                                     else default_pairs(basis.num_modes)))
    if basis.dim > 1024:
        # large operator sets are not worth pinning in memory
        return _build_spin_operators(basis, pairs)
    return _spin_operators_cached(basis, pairs)


def _build_spin_operators(basis: FockBasis, pairs: tuple) -> SpinOperators:
    used = [m for p in pairs for m in p]
    if len(set(used)) != len(used):
        raise ValueError("each mode may appear in at most one pair")
    if any(len(p) != 2 for p in pairs) or not pairs:
        raise ValueError("pairs must be (a_mode, b_mode) tuples")
    d = basis.dim
    ba = np.zeros((d, d), dtype=complex)
    nb = np.zeros((d, d), dtype=complex)
    na = np.zeros((d, d), dtype=complex)
    for a, b in pairs:
        h = hop(basis, b, a)
        if h.truncated:
            raise ValueError(f"basis is not closed under hopping between modes {a} and {b}; "
                             "re-embed the state with fock.close_pairs first")
        ba += h.matrix
        na += number_operator(basis, a).matrix
        nb += number_operator(basis, b).matrix
    ab = ba.conj().T
    sx = OperatorMatrix(basis, 0.5 * (ba + ab), True)
    sy = OperatorMatrix(basis, (ba - ab) / 2j).hermitian()
    sz = OperatorMatrix(basis, 0.5 * (nb - na), True)
    num = OperatorMatrix(basis, na + nb, True)
    return SpinOperators(basis, sx, sy, sz, num, pairs)


_spin_operators_cached = lru_cache(maxsize=16)(_build_spin_operators)


def local_spin_operators(basis: FockBasis):
    """Per-well spin triples for modes ordered (a1, b1, a2, b2), plus their sum."""
    if basis.num_modes != 4:
        raise ValueError("local spin operators need a four-mode basis (a1, b1, a2, b2)")
    well1 = spin_operators(basis, [(0, 1)])
    well2 = spin_operators(basis, [(2, 3)])
    total = spin_operators(basis, [(0, 1), (2, 3)])
    return well1, well2, total


# ---------------------------------------------------------------- frames

@dataclass(frozen=True)
class EulerAngles:
    alpha: float
    beta: float
    gamma: float

    def normalized(self) -> "EulerAngles":
        return euler_from_matrix(rotation_matrix(self))

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma)


@dataclass(frozen=True)
class SpinFrame:
    operators: SpinOperators
    bloch: np.ndarray
    cov: np.ndarray
    n_mean: float
    casimir: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    euler: EulerAngles | None = None
    label: str = "original"
    state_ref: str = ""
    n_var: float = 0.0
    fixed_n: int | None = None

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.cov).copy()

    def to_dict(self) -> dict:
        out = {"bloch": [float(v) for v in self.bloch],
               "cov": [[float(v) for v in row] for row in self.cov],
               "casimir": float(self.casimir), "N_mean": float(self.n_mean)}
        if self.euler is not None:
            out["euler"] = {"alpha": self.euler.alpha, "beta": self.euler.beta, "gamma": self.euler.gamma}
            out["principal_variances"] = [float(v) for v in self.variances]
        return out


def _fixed_n(state: QuantumState, ops: SpinOperators):
    w = state.sector_weights()
    live = [n for n, p in w.items() if p > 1e-14]
    if len(live) == 1 and len(ops.pairs) * 2 == state.basis.num_modes:
        return live[0]
    return None


def evaluate_frame(ops: SpinOperators, state: QuantumState, state_ref: str = "",
                   check: bool = True) -> SpinFrame:
    """Bloch vector and symmetrised covariance matrix of the spin triple."""
    comps = ops.components()
    mean = np.array([expectation(s, state) for s in comps])
    if np.max(np.abs(mean.imag)) > 1e-10 * max(1.0, np.max(np.abs(mean.real))):
        raise ValueError("Bloch vector has a non-negligible imaginary part")
    bloch = mean.real
    sec = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            v = second_moment(comps[i], comps[j], state).real
            sec[i, j] = sec[j, i] = v
    cov = sec - np.outer(bloch, bloch)
    n_mean = expectation(ops.number, state).real
    n2 = second_moment(ops.number, ops.number, state).real
    frame = SpinFrame(ops, bloch, cov, float(n_mean), float(np.trace(sec)), state_ref=state_ref,
                      n_var=float(max(n2 - n_mean ** 2, 0.0)), fixed_n=_fixed_n(state, ops))
    if check:
        check_frame(frame)
    return frame


def check_frame(frame: SpinFrame, tol: float = 1e-9):
    cov = frame.cov
    scale = max(1.0, float(np.max(np.abs(cov))))
    if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
        raise ValueError("covariance matrix not symmetric")
    if np.linalg.eigvalsh(cov)[0] < -tol * scale:
        raise ValueError("covariance matrix has a negative eigenvalue")
    var = np.diag(cov)
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        lhs = var[a] * var[b]
        rhs = 0.25 * frame.bloch[c] ** 2
        if lhs < rhs - tol * max(1.0, rhs):
            raise ValueError("uncertainty relation violated; operators or state are inconsistent")


def frame_in_rotation(frame: SpinFrame, rot, label: str = "rotated", euler=None) -> SpinFrame:
    """Re-express a frame along the rows of an orthogonal matrix."""
    rot = np.asarray(rot, dtype=float)
    return replace(frame, operators=frame.operators.rotated(rot), bloch=rot @ frame.bloch,
                   cov=rot @ frame.cov @ rot.T, rotation=rot @ frame.rotation, euler=euler, label=label)


def rotation_matrix(angles) -> np.ndarray:
    """Coefficients M with J_xi = sum_mu M[xi, mu] S_mu for the rotation
    R = exp(i alpha S_z) exp(i beta S_y) exp(i gamma S_z), J = R S R^-1."""
    a, b, g = angles.as_tuple() if isinstance(angles, EulerAngles) else angles
    ca, sa, cb, sb, cg, sg = math.cos(a), math.sin(a), math.cos(b), math.sin(b), math.cos(g), math.sin(g)
    return np.array([
        [ca * cb * cg - sa * sg, -sa * cb * cg - ca * sg, sb * cg],
        [sa * cg + ca * cb * sg, ca * cg - sa * cb * sg, sb * sg],
        [-sb * ca, sa * sb, cb],
    ])


def _wrap_angle(t: float) -> float:
    t = math.remainder(t, 2 * math.pi)
    return math.pi if t <= -math.pi else t


def euler_from_matrix(rot, eps: float = 1e-12) -> EulerAngles:
    """Inverse of rotation_matrix with beta in [0, pi]; gamma = 0 at gimbal lock."""
    m = np.asarray(rot, dtype=float)
    beta = math.acos(min(1.0, max(-1.0, m[2, 2])))
    sb = math.hypot(m[0, 2], m[1, 2])
    if sb > eps:
        gamma = math.atan2(m[1, 2], m[0, 2])
        alpha = math.atan2(m[2, 1], -m[2, 0])
    else:
        gamma = 0.0
        if m[2, 2] > 0:
            beta = 0.0
            alpha = math.atan2(m[1, 0], m[0, 0])
        else:
            beta = math.pi
            alpha = math.atan2(m[1, 0], -m[0, 0])
    return EulerAngles(_wrap_angle(alpha), beta, _wrap_angle(gamma))


def _first_positive(v, tol=1e-8):
    for c in v:
        if abs(c) > tol:
            return v if c > 0 else -v
    return v


def principal_axes(cov, bloch, degen_rtol: float = 1e-10, bloch_tol: float = 1e-9) -> np.ndarray:
    """Rows are orthonormal principal directions of the covariance matrix.

    Ordering: when the Bloch vector is non-negligible, the principal axis
    best aligned with it becomes the third row, oriented so that the mean
    along it is non-positive, and the two transverse axes follow in
    descending variance. Otherwise all three are in descending variance.
    The first row gets its first significant component positive, and the
    second row completes a right-handed frame.
    """
    cov = 0.5 * (np.asarray(cov, float) + np.asarray(cov, float).T)
    bloch = np.asarray(bloch, float)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    gap = degen_rtol * max(abs(np.trace(cov)), 1e-300)
    blen = np.linalg.norm(bloch)
    if blen > bloch_tol * max(1.0, np.sqrt(abs(np.trace(cov))) + blen):
        proj = np.abs(vecs.T @ bloch)
        k = int(np.argmax(proj))
        cluster = [j for j in range(3) if abs(vals[j] - vals[k]) <= gap]
        sub = vecs[:, cluster]
        zdir = sub @ (sub.T @ bloch)
        zdir /= np.linalg.norm(zdir)
        # transverse directions: eigenvectors outside the cluster plus the
        # part of a degenerate cluster orthogonal to the Bloch direction
        rest = [vecs[:, j] for j in range(3) if j not in cluster]
        if len(cluster) > 1:
            comp = sub - np.outer(zdir, zdir @ sub)
            u, sv, _ = np.linalg.svd(comp, full_matrices=False)
            rest.extend(u[:, k] for k in range(len(sv)) if sv[k] > 1e-8)
        rest_vals = [float(r @ cov @ r) for r in rest]
        idx = np.argsort(rest_vals)[::-1]
        xdir = rest[idx[0]]
        if zdir @ bloch > 0:
            zdir = -zdir
    else:
        xdir, zdir = vecs[:, 0], vecs[:, 2]
        zdir = _first_positive(zdir)
    xdir = _first_positive(xdir - (xdir @ zdir) * zdir)
    xdir /= np.linalg.norm(xdir)
    ydir = np.cross(zdir, xdir)
    return np.vstack([xdir, ydir, zdir])


def principal_frame(frame: SpinFrame):
    """Rotate to principal spin operators with a diagonal covariance matrix.

    Returns (EulerAngles, SpinFrame). The Euler angles reproduce the
    rotation matrix through `rotation_matrix`.
    """
    rot = principal_axes(frame.cov, frame.bloch)
    angles = euler_from_matrix(rot)
    pf = frame_in_rotation(frame, rot, label="principal", euler=angles)
    pf = replace(pf, cov=0.5 * (pf.cov + pf.cov.T))
    return angles, pf


# ---------------------------------------------------------------- mode rotations

def mode_rotation_coefficients(angles):
    """2x2 matrix U with (c, d)^T = U (a, b)^T for c = R a R^-1, d = R b R^-1."""
    a, b, g = angles.as_tuple() if isinstance(angles, EulerAngles) else angles
    cb, sb = math.cos(b / 2), math.sin(b / 2)
    ea, eg = np.exp(0.5j * a), np.exp(0.5j * g)
    return np.array([
        [eg * cb * ea, eg * sb / ea],
        [-sb * ea / eg, cb / (ea * eg)],
    ])


def rotate_modes(angles, basis: FockBasis, modes=(0, 1)) -> dict:
    """New mode operators c, d as linear combinations of a, b.

    Returns a dict with c, d (annihilators), the forward coefficient
    matrix and the inverse map (a, b)^T = inverse (c, d)^T.
    """
    if basis.num_modes != 2 and modes == (0, 1) and basis.num_modes % 2:
        raise ValueError("mode rotation needs a two-mode pair")
    coef = mode_rotation_coefficients(angles)
    a = ladder(basis, modes[0])
    b = ladder(basis, modes[1])
    c = OperatorMatrix(basis, coef[0, 0] * a.matrix + coef[0, 1] * b.matrix, False, a.truncated)
    d = OperatorMatrix(basis, coef[1, 0] * a.matrix + coef[1, 1] * b.matrix, False, a.truncated)
    return {"c": c, "d": d, "forward": coef, "inverse": coef.conj().T}


def _expi_hermitian(op: OperatorMatrix, t: float, basis: FockBasis) -> np.ndarray:
    """exp(i t H) for a number-conserving Hermitian H, one sector at a time."""
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    for sl in basis.sector_slices().values():
        blk = op.matrix[sl, sl]
        if np.count_nonzero(blk - np.diag(np.diag(blk))) == 0:
            out[sl, sl] = np.diag(np.exp(1j * t * np.diag(blk).real))
        else:
            w, v = np.linalg.eigh(blk)
            out[sl, sl] = (v * np.exp(1j * t * w)) @ v.conj().T
    return out


def rotation_unitary(angles, ops: SpinOperators) -> OperatorMatrix:
    """R = exp(i alpha S_z) exp(i beta S_y) exp(i gamma S_z)."""
    a, b, g = angles.as_tuple() if isinstance(angles, EulerAngles) else angles
    basis = ops.basis
    m = _expi_hermitian(ops.z, a, basis) @ _expi_hermitian(ops.y, b, basis) @ _expi_hermitian(ops.z, g, basis)
    return OperatorMatrix(basis, m)


def inplane_operators(ops: SpinOperators, phi: float) -> dict:
    """Spin components rotated in the xy plane.

    perp1/perp2 are cos(phi) S_x + sin(phi) S_y and its orthogonal partner.
    x_sharp/y_sharp are the beam-splitter measurables for phase phi,
    sin(phi) S_x + cos(phi) S_y and -cos(phi) S_x + sin(phi) S_y, which are
    the frame rotated about z by 3 pi/2 + phi.
    """
    c, s = math.cos(phi), math.sin(phi)
    return {
        "perp1": ops.along((c, s, 0.0)),
        "perp2": ops.along((-s, c, 0.0)),
        "x_sharp": ops.along((s, c, 0.0)),
        "y_sharp": ops.along((-c, s, 0.0)),
    }


def sharp_operators(ops: SpinOperators, psi: float):
    """S_x^#(psi), S_y^#(psi): the xy components after rotating by psi about z."""
    c, s = math.cos(psi), math.sin(psi)
    return ops.along((c, -s, 0.0)), ops.along((s, c, 0.0))


# ---------------------------------------------------------------- quadratures

@dataclass(frozen=True)
class QuadratureSet:
    theta: float
    xa: OperatorMatrix
    pa: OperatorMatrix
    xb: OperatorMatrix
    pb: OperatorMatrix
    x_plus: OperatorMatrix
    p_plus: OperatorMatrix
    x_minus: OperatorMatrix
    p_minus: OperatorMatrix


def single_quadrature(basis: FockBasis, mode: int, theta: float) -> OperatorMatrix:
    """(a e^{-i theta} + a^dag e^{i theta}) / sqrt(2)."""
    a = ladder(basis, mode).matrix
    m = (a * np.exp(-1j * theta) + a.conj().T * np.exp(1j * theta)) / math.sqrt(2)
    return OperatorMatrix(basis, m, True, ladder(basis, mode).truncated)


def quadrature_set(theta: float, basis: FockBasis, modes=(0, 1)) -> QuadratureSet:
    """Single-mode and two-mode quadratures at angle theta.

    The conjugate P at angle theta is the X operator at theta + pi/2.
    """
    ma, mb = modes
    xa = single_quadrature(basis, ma, theta)
    pa = single_quadrature(basis, ma, theta + math.pi / 2)
    xb = single_quadrature(basis, mb, theta)
    pb = single_quadrature(basis, mb, theta + math.pi / 2)
    r = 1 / math.sqrt(2)
    return QuadratureSet(theta, xa, pa, xb, pb, (xa + xb) * r, (pa + pb) * r, (xa - xb) * r, (pa - pb) * r)


def position_momentum(basis: FockBasis, modes=(0, 1)):
    """x_A, p_A, x_B, p_B (the theta = 0 quadratures)."""
    q = quadrature_set(0.0, basis, modes)
    return q.xa, q.pa, q.xb, q.pb


# ---------------------------------------------------------------- second route

def variance_sx_from_correlations(state: QuantumState, pair=(0, 1)) -> float:
    """Var(S_x) assembled from normal-ordered mode correlation functions."""
    basis = state.basis
    a, b = pair
    e = lambda cr, an: expectation(monomial(basis, cr, an), state, check_real=False)
    b2a2 = e({b: 2}, {a: 2})
    a2b2 = e({a: 2}, {b: 2})
    nanb = e({a: 1, b: 1}, {a: 1, b: 1})
    nb = e({b: 1}, {b: 1})
    na = e({a: 1}, {a: 1})
    ba = e({b: 1}, {a: 1})
    ab = e({a: 1}, {b: 1})
    val = 0.25 * (b2a2 + a2b2 + 2 * nanb + nb + na) - 0.25 * (ba ** 2 + ab ** 2 + 2 * ba * ab)
    return float(val.real)


def closure_residual(ops: SpinOperators) -> float:
    """Max deviation from [S_x, S_y] = i S_z and its cyclic partners."""
    x, y, z = ops.components()
    res = 0.0
    for p, q, r in ((x, y, z), (y, z, x), (z, x, y)):
        res = max(res, float(np.max(np.abs(commutator(p, q).matrix - 1j * r.matrix), initial=0.0)))
    return res
