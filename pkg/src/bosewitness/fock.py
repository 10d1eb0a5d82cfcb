"""Multi-mode bosonic Fock spaces, operators and states.

Everything is dense numpy. A basis is a union of fixed-total-number sectors,
optionally with a per-mode occupation cap so that product states of many
modes stay small.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

STRUCT_TOL = 1e-12
DERIVED_RTOL = 1e-9
TRUNCATION_TOL = 1e-10


def _compositions(total: int, parts: int, caps: Sequence[int]):
    """Yield tuples of `parts` non-negative ints summing to `total`.

    Order is descending lexicographic, so the first mode is emptied last:
    (2,0), (1,1), (0,2).
    """
    if parts == 1:
        if total <= caps[0]:
            yield (total,)
        return
    rest_cap = sum(caps[1:])
    hi = min(total, caps[0])
    lo = max(0, total - rest_cap)
    for first in range(hi, lo - 1, -1):
        for tail in _compositions(total - first, parts - 1, caps[1:]):
            yield (first,) + tail


@dataclass(frozen=True)
class FockBasis:
    num_modes: int
    sectors: tuple
    states: tuple
    caps: tuple | None = None
    index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.index is None:
            object.__setattr__(self, "index", {s: i for i, s in enumerate(self.states)})

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self):
        return len(self.states)

    def occupations(self) -> np.ndarray:
        return np.array(self.states, dtype=np.int64).reshape(self.dim, self.num_modes)

    def totals(self) -> np.ndarray:
        return self.occupations().sum(axis=1)

    def sector_slices(self) -> dict:
        """Map each sector N to the slice of indices it occupies."""
        out = {}
        start = 0
        tot = self.totals()
        for n in self.sectors:
            count = int(np.count_nonzero(tot == n))
            out[n] = slice(start, start + count)
            start += count
        return out

    def same_space(self, other: "FockBasis") -> bool:
        return self is other or (self.num_modes == other.num_modes and self.states == other.states)


def build_basis(num_modes: int, sectors: Iterable[int], caps: Sequence[int] | None = None) -> FockBasis:
    """Enumerate all occupation tuples whose total lies in `sectors`.

    Sectors are sorted ascending; within a sector tuples are in descending
    lexicographic order. `caps`, if given, bounds each mode's occupation.
    """
    if num_modes < 1:
        raise ValueError("num_modes must be at least 1")
    secs = sorted(set(int(n) for n in sectors))
    if not secs:
        raise ValueError("at least one sector is required")
    if secs[0] < 0:
        raise ValueError("sector totals must be non-negative")
    if caps is not None:
        caps = tuple(int(c) for c in caps)
        if len(caps) != num_modes or min(caps) < 0:
            raise ValueError("caps must give one non-negative bound per mode")
    eff_caps = caps if caps is not None else (max(secs),) * num_modes
    states = []
    for n in secs:
        states.extend(_compositions(n, num_modes, eff_caps))
    return FockBasis(num_modes, tuple(secs), tuple(states), caps)


@dataclass(frozen=True)
class OperatorMatrix:
    basis: FockBasis
    matrix: np.ndarray
    hermitian_hint: bool = False
    truncated: bool = False

    def __post_init__(self):
        if self.matrix.shape != (self.basis.dim, self.basis.dim):
            raise ValueError("operator dimension does not match basis")
        if self.hermitian_hint:
            err = np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0)
            if err > STRUCT_TOL * max(1.0, np.max(np.abs(self.matrix), initial=0.0)):
                raise ValueError(f"operator flagged Hermitian but |M - M^dag| = {err:.3g}")

    def _wrap(self, m, herm=False, trunc=False):
        return OperatorMatrix(self.basis, m, herm, self.truncated or trunc)

    def _other(self, other):
        if not self.basis.same_space(other.basis):
            raise ValueError("operators live on different bases")
        return other

    def __add__(self, other):
        other = self._other(other)
        return OperatorMatrix(self.basis, self.matrix + other.matrix,
                              self.hermitian_hint and other.hermitian_hint,
                              self.truncated or other.truncated)

    def __sub__(self, other):
        other = self._other(other)
        return OperatorMatrix(self.basis, self.matrix - other.matrix,
                              self.hermitian_hint and other.hermitian_hint,
                              self.truncated or other.truncated)

    def __neg__(self):
        return self._wrap(-self.matrix, self.hermitian_hint)

    def __mul__(self, c):
        c = complex(c)
        herm = self.hermitian_hint and c.imag == 0.0
        return self._wrap(c * self.matrix if c.imag else c.real * self.matrix, herm)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __matmul__(self, other):
        other = self._other(other)
        return OperatorMatrix(self.basis, self.matrix @ other.matrix, False,
                              self.truncated or other.truncated)

    @property
    def dag(self) -> "OperatorMatrix":
        return self._wrap(self.matrix.conj().T, self.hermitian_hint)

    def hermitian(self) -> "OperatorMatrix":
        """Return the same matrix flagged Hermitian (symmetrised to kill rounding)."""
        m = 0.5 * (self.matrix + self.matrix.conj().T)
        return OperatorMatrix(self.basis, m, True, self.truncated)


def commutator(x: OperatorMatrix, y: OperatorMatrix) -> OperatorMatrix:
    return x @ y - y @ x


def anticommutator(x: OperatorMatrix, y: OperatorMatrix) -> OperatorMatrix:
    return x @ y + y @ x


def identity(basis: FockBasis) -> OperatorMatrix:
    return OperatorMatrix(basis, np.eye(basis.dim, dtype=complex), True)


def _check_mode(basis, mode):
    if not 0 <= mode < basis.num_modes:
        raise ValueError(f"mode {mode} out of range for {basis.num_modes} modes")


def ladder(basis: FockBasis, mode: int, which: str = "lower") -> OperatorMatrix:
    """Annihilation (`lower`) or creation (`raise`) operator for one mode.

    Matrix elements leaving the basis are dropped; `truncated` records
    whether that happened for any basis state.
    """
    _check_mode(basis, mode)
    if which not in ("lower", "raise"):
        raise ValueError("which must be 'lower' or 'raise'")
    m = np.zeros((basis.dim, basis.dim), dtype=complex)
    lost = False
    for j, occ in enumerate(basis.states):
        n = occ[mode]
        if n == 0:
            continue
        tgt = occ[:mode] + (n - 1,) + occ[mode + 1:]
        i = basis.index.get(tgt)
        if i is None:
            lost = True
            continue
        m[i, j] = math.sqrt(n)
    # raising operator is the transpose; it loses exactly the states the
    # lowering operator could not reach from above
    for occ in basis.states:
        up = occ[:mode] + (occ[mode] + 1,) + occ[mode + 1:]
        if up not in basis.index:
            lost = True
            break
    if which == "raise":
        m = m.T.copy()
    return OperatorMatrix(basis, m, False, lost)


def monomial(basis: FockBasis, create: dict | None = None, annihilate: dict | None = None) -> OperatorMatrix:
    """Normal-ordered product  prod_i (a_i^dag)^{p_i}  prod_j (a_j)^{q_j}.

    Built from exact matrix elements rather than by multiplying ladder
    matrices, so it is exact whenever source and target states are both in
    the basis (sector truncation never corrupts it).
    """
    create = dict(create or {})
    annihilate = dict(annihilate or {})
    for md in list(create) + list(annihilate):
        _check_mode(basis, md)
    m = np.zeros((basis.dim, basis.dim), dtype=complex)
    lost = False
    for j, occ in enumerate(basis.states):
        occ = list(occ)
        amp = 1.0
        ok = True
        for md, q in annihilate.items():
            if occ[md] < q:
                ok = False
                break
            amp *= math.sqrt(math.perm(occ[md], q))
            occ[md] -= q
        if not ok:
            continue
        for md, p in create.items():
            amp *= math.sqrt(math.perm(occ[md] + p, p))
            occ[md] += p
        i = basis.index.get(tuple(occ))
        if i is None:
            lost = True
            continue
        m[i, j] = amp
    herm = create == annihilate
    return OperatorMatrix(basis, m, herm, lost)


def hop(basis: FockBasis, to_mode: int, from_mode: int) -> OperatorMatrix:
    """a_to^dag a_from, the number-conserving transfer operator."""
    if to_mode == from_mode:
        return number_operator(basis, to_mode)
    return monomial(basis, {to_mode: 1}, {from_mode: 1})


def number_operator(basis: FockBasis, mode: int | None = None) -> OperatorMatrix:
    """n_mode, or the total number operator when mode is None."""
    occ = basis.occupations()
    if mode is None:
        diag = occ.sum(axis=1)
    else:
        _check_mode(basis, mode)
        diag = occ[:, mode]
    return OperatorMatrix(basis, np.diag(diag.astype(complex)), True)


# ---------------------------------------------------------------- states

@dataclass(frozen=True)
class QuantumState:
    basis: FockBasis
    kind: str
    data: np.ndarray
    ssr_flags: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict, compare=False)
    # set by constructors that copy an already validated density matrix into a
    # larger or permuted basis, where the eigenvalues cannot change
    psd_known: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        d = self.basis.dim
        if self.kind == "pure":
            if self.data.shape != (d,):
                raise ValueError("pure state vector has wrong length")
            nrm = float(np.vdot(self.data, self.data).real)
            if abs(nrm - 1.0) > STRUCT_TOL * 10:
                raise ValueError(f"pure state not normalised (norm^2 = {nrm!r})")
        elif self.kind == "mixed":
            if self.data.shape != (d, d):
                raise ValueError("density matrix has wrong shape")
            herm = np.max(np.abs(self.data - self.data.conj().T), initial=0.0)
            if herm > STRUCT_TOL:
                raise ValueError(f"density matrix not Hermitian ({herm:.3g})")
            tr = np.trace(self.data).real
            if abs(tr - 1.0) > STRUCT_TOL * 10:
                raise ValueError(f"density matrix trace {tr!r} != 1")
            if d <= 4000 and not self.psd_known:
                low = np.linalg.eigvalsh(self.data)[0] if d else 0.0
                if low < -1e-10:
                    raise ValueError(f"density matrix has eigenvalue {low:.3g}")
        else:
            raise ValueError("kind must be 'pure' or 'mixed'")
        if not self.ssr_flags:
            object.__setattr__(self, "ssr_flags", {"global_compliant": global_ssr_compliant(self),
                                                   "local_compliant": None})

    @property
    def is_pure(self) -> bool:
        return self.kind == "pure"

    def density_matrix(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def sector_weights(self) -> dict:
        """Probability carried by each total-number sector."""
        if self.is_pure:
            p = np.abs(self.data) ** 2
        else:
            p = np.diag(self.data).real
        return {n: float(p[sl].sum()) for n, sl in self.basis.sector_slices().items()}


def global_ssr_compliant(state: QuantumState, tol: float = STRUCT_TOL) -> bool:
    """True when no amplitude or coherence links different total numbers."""
    tot = state.basis.totals()
    if state.is_pure:
        occupied = np.unique(tot[np.abs(state.data) > tol])
        return occupied.size <= 1
    off = tot[:, None] != tot[None, :]
    return bool(np.max(np.abs(state.data[off]), initial=0.0) <= tol)


def fix_global_phase(vec: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """Rotate so the first non-negligible amplitude is real and positive."""
    nz = np.flatnonzero(np.abs(vec) > tol)
    if nz.size == 0:
        return vec
    ph = vec[nz[0]] / abs(vec[nz[0]])
    out = vec / ph
    out[nz[0]] = abs(vec[nz[0]])
    return out


def pure_state(basis: FockBasis, vec, normalize: bool = False, ssr_flags: dict | None = None) -> QuantumState:
    v = np.asarray(vec, dtype=complex).copy()
    if normalize:
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValueError("cannot normalise the zero vector")
        v /= nrm
    return QuantumState(basis, "pure", v, dict(ssr_flags or {}))


def mixed_state(basis: FockBasis, rho, ssr_flags: dict | None = None) -> QuantumState:
    r = np.asarray(rho, dtype=complex)
    r = 0.5 * (r + r.conj().T)
    return QuantumState(basis, "mixed", r, dict(ssr_flags or {}))


def fock_state(occupations: Sequence[int], basis: FockBasis | None = None) -> QuantumState:
    occ = tuple(int(n) for n in occupations)
    if basis is None:
        basis = build_basis(len(occ), [sum(occ)])
    v = np.zeros(basis.dim, dtype=complex)
    v[basis.index[occ]] = 1.0
    return pure_state(basis, v, ssr_flags={"global_compliant": True, "local_compliant": True})


def vacuum(num_modes: int = 2) -> QuantumState:
    return fock_state((0,) * num_modes)


# ---------------------------------------------------------------- moments

def _check_same(op: OperatorMatrix, state: QuantumState):
    if not op.basis.same_space(state.basis):
        raise ValueError("operator and state are on different bases")


def expectation(op: OperatorMatrix, state: QuantumState, check_real: bool = True) -> complex:
    """Tr(rho M). For Hermitian-flagged operators the imaginary residue must be tiny."""
    _check_same(op, state)
    if state.is_pure:
        val = np.vdot(state.data, op.matrix @ state.data)
    else:
        val = np.sum(op.matrix * state.data.T)
    if check_real and op.hermitian_hint:
        scale = max(1.0, abs(val))
        if abs(val.imag) > 1e-10 * scale:
            raise ValueError(f"Hermitian expectation has imaginary part {val.imag:.3g}")
    return complex(val)


def second_moment(x: OperatorMatrix, y: OperatorMatrix, state: QuantumState) -> complex:
    """<X Y> without forming the product matrix when the state is pure."""
    _check_same(x, state)
    _check_same(y, state)
    if state.is_pure:
        return complex(np.vdot(x.matrix.conj().T @ state.data, y.matrix @ state.data))
    return complex(np.sum((x.matrix @ y.matrix) * state.data.T))


def covariance(x: OperatorMatrix, y: OperatorMatrix, state: QuantumState) -> float:
    """Symmetrised covariance <XY+YX>/2 - <X><Y> of two Hermitian operators."""
    if not (x.hermitian_hint and y.hermitian_hint):
        raise ValueError("covariance requires Hermitian operators")
    xy = second_moment(x, y, state)
    sym = xy.real  # <YX> = conj(<XY>) for Hermitian X, Y
    return float(sym - expectation(x, state).real * expectation(y, state).real)


def variance(x: OperatorMatrix, state: QuantumState, clamp: bool = True) -> float:
    v = covariance(x, x, state)
    if v < -1e-10 * max(1.0, abs(expectation(x, state))) ** 2:
        raise ValueError(f"negative variance {v:.3g}")
    return max(v, 0.0) if clamp else v


# ---------------------------------------------------------------- composition

def _product_basis(ba: FockBasis, bb: FockBasis) -> FockBasis:
    caps_a = ba.occupations().max(axis=0) if ba.dim else np.zeros(ba.num_modes, int)
    caps_b = bb.occupations().max(axis=0) if bb.dim else np.zeros(bb.num_modes, int)
    sectors = sorted({na + nb for na in ba.sectors for nb in bb.sectors})
    return build_basis(ba.num_modes + bb.num_modes, sectors,
                       tuple(int(c) for c in caps_a) + tuple(int(c) for c in caps_b))


def _embed_matrix(ba, bb, target):
    """Index map from (i_a, i_b) pairs into the target basis."""
    idx = np.empty((ba.dim, bb.dim), dtype=np.int64)
    for i, sa in enumerate(ba.states):
        for j, sb in enumerate(bb.states):
            idx[i, j] = target.index[sa + sb]
    return idx


def tensor(state_a: QuantumState, state_b: QuantumState, basis: FockBasis | None = None) -> QuantumState:
    """Product state with the modes of `state_a` first."""
    target = basis or _product_basis(state_a.basis, state_b.basis)
    idx = _embed_matrix(state_a.basis, state_b.basis, target).ravel()
    flags = {"global_compliant": None, "local_compliant": bool(
        _locally_compliant(state_a) and _locally_compliant(state_b))}
    if state_a.is_pure and state_b.is_pure:
        v = np.zeros(target.dim, dtype=complex)
        v[idx] = np.kron(state_a.data, state_b.data)
        st = QuantumState(target, "pure", v, {})
    else:
        rho = np.zeros((target.dim, target.dim), dtype=complex)
        rho[np.ix_(idx, idx)] = np.kron(state_a.density_matrix(), state_b.density_matrix())
        st = QuantumState(target, "mixed", rho, {})
    flags["global_compliant"] = global_ssr_compliant(st)
    return QuantumState(st.basis, st.kind, st.data, flags, psd_known=True)


def _locally_compliant(state: QuantumState) -> bool:
    """A factor is locally compliant when it carries no number coherences itself."""
    if state.ssr_flags.get("local_compliant") is False:
        return False
    return global_ssr_compliant(state)


def mix(components: Sequence[tuple], tol: float = STRUCT_TOL) -> QuantumState:
    """Convex combination  sum_R P_R rho_R  of states on one common basis."""
    if not components:
        raise ValueError("mix needs at least one component")
    weights = np.array([float(p) for p, _ in components])
    if np.any(weights < 0):
        raise ValueError("mixture weights must be non-negative")
    if abs(weights.sum() - 1.0) > tol:
        raise ValueError(f"mixture weights sum to {weights.sum()!r}")
    basis = components[0][1].basis
    for _, st in components:
        if not st.basis.same_space(basis):
            raise ValueError("mixture components must share a basis")
    if len(components) == 1:
        return components[0][1]
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    for p, st in components:
        if st.is_pure:
            rho += p * np.outer(st.data, st.data.conj())
        else:
            rho += p * st.data
    local = all(st.ssr_flags.get("local_compliant") for _, st in components)
    st = mixed_state(basis, rho)
    return QuantumState(basis, "mixed", st.data,
                        {"global_compliant": global_ssr_compliant(st), "local_compliant": bool(local)},
                        psd_known=True)


def embed(state: QuantumState, basis: FockBasis) -> QuantumState:
    """Re-express a state on a larger basis containing its support."""
    idx = []
    for occ in state.basis.states:
        if occ not in basis.index:
            raise ValueError(f"target basis lacks state {occ}")
        idx.append(basis.index[occ])
    idx = np.array(idx, dtype=np.int64)
    if state.is_pure:
        v = np.zeros(basis.dim, dtype=complex)
        v[idx] = state.data
        return QuantumState(basis, "pure", v, dict(state.ssr_flags))
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    rho[np.ix_(idx, idx)] = state.data
    return QuantumState(basis, "mixed", rho, dict(state.ssr_flags), psd_known=True)


def permute_modes(state: QuantumState, order: Sequence[int]) -> QuantumState:
    """New state whose mode k is old mode order[k]."""
    order = list(order)
    if sorted(order) != list(range(state.basis.num_modes)):
        raise ValueError("order must be a permutation of the modes")
    caps = None if state.basis.caps is None else tuple(state.basis.caps[k] for k in order)
    nb = build_basis(state.basis.num_modes, state.basis.sectors, caps)
    idx = np.array([nb.index[tuple(occ[k] for k in order)] for occ in state.basis.states])
    if state.is_pure:
        v = np.zeros(nb.dim, dtype=complex)
        v[idx] = state.data
        return QuantumState(nb, "pure", v, dict(state.ssr_flags))
    rho = np.zeros((nb.dim, nb.dim), dtype=complex)
    rho[np.ix_(idx, idx)] = state.data
    return QuantumState(nb, "mixed", rho, dict(state.ssr_flags), psd_known=True)


def close_pairs(state: QuantumState, pairs=None) -> QuantumState:
    """Re-embed a state on a basis closed under moving bosons inside each pair.

    Capped product bases are not closed under these moves, which
    number-conserving pair operators need. A pair whose modes are both
    capped at zero stays empty; any other pair is uncapped (capped at the
    largest sector).
    """
    basis = state.basis
    if basis.caps is None:
        return state
    nm = basis.num_modes
    pairs = pairs if pairs is not None else [(2 * i, 2 * i + 1) for i in range(nm // 2)]
    caps = list(basis.caps)
    top = max(basis.sectors)
    for a, b in pairs:
        caps[a] = caps[b] = 0 if basis.caps[a] == basis.caps[b] == 0 else top
    if tuple(caps) == basis.caps:
        return state
    out = embed(state, build_basis(nm, basis.sectors, caps))
    out.meta.update(state.meta)
    return out


def padded_basis(basis: FockBasis, pad: int = 1) -> FockBasis:
    """Same modes with `pad` extra sectors on each side, caps lifted by `pad`."""
    lo, hi = min(basis.sectors), max(basis.sectors)
    secs = range(max(0, lo - pad), hi + pad + 1)
    caps = None if basis.caps is None else tuple(c + pad for c in basis.caps)
    return build_basis(basis.num_modes, secs, caps)


# ---------------------------------------------------------------- JSON

def state_to_dict(state: QuantumState, cutoff: float = 1e-15) -> dict:
    entries = []
    sts = state.basis.states
    if state.is_pure:
        for i in np.flatnonzero(np.abs(state.data) >= cutoff):
            c = state.data[i]
            entries.append({"occupations": list(sts[i]), "re": float(c.real), "im": float(c.imag)})
    else:
        rows, cols = np.nonzero(np.abs(state.data) >= cutoff)
        for i, j in zip(rows, cols):
            c = state.data[i, j]
            entries.append({"occupations": list(sts[i]), "occupations_bra": list(sts[j]),
                            "re": float(c.real), "im": float(c.imag)})
    out = {"num_modes": state.basis.num_modes, "sectors": list(state.basis.sectors),
           "kind": state.kind, "entries": entries}
    if state.basis.caps is not None:
        out["caps"] = list(state.basis.caps)
    meta = {k: v for k, v in state.meta.items() if isinstance(v, (str, int, float, bool))}
    if meta:
        out["meta"] = meta
    return out


def state_from_dict(doc: dict) -> QuantumState:
    basis = build_basis(doc["num_modes"], doc["sectors"], doc.get("caps"))
    if doc["kind"] == "pure":
        v = np.zeros(basis.dim, dtype=complex)
        for e in doc["entries"]:
            v[basis.index[tuple(e["occupations"])]] = complex(e["re"], e["im"])
        return QuantumState(basis, "pure", v, {}, dict(doc.get("meta", {})))
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    for e in doc["entries"]:
        i = basis.index[tuple(e["occupations"])]
        j = basis.index[tuple(e["occupations_bra"])]
        rho[i, j] = complex(e["re"], e["im"])
    return QuantumState(basis, "mixed", rho, {}, dict(doc.get("meta", {})))


def dumps_state(state: QuantumState) -> str:
    # json writes floats with repr, which round-trips binary64 exactly
    return json.dumps(state_to_dict(state))


def loads_state(text: str) -> QuantumState:
    return state_from_dict(json.loads(text))
