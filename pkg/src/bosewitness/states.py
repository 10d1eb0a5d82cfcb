"""Named two-mode and multi-mode states plus random separable generators."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .fock import (
    TRUNCATION_TOL,
    FockBasis,
    OperatorMatrix,
    QuantumState,
    build_basis,
    close_pairs,
    fix_global_phase,
    fock_state,
    mix,
    mixed_state,
    permute_modes,
    pure_state,
    tensor,
)
from .spin import mode_rotation_coefficients

STRUCTURES = ("TwoMode", "Case1", "Case2", "Case3")


class TruncationError(ValueError):
    """Discarded probability mass exceeds the allowed tolerance."""


class DescriptorError(ValueError):
    """A state descriptor string failed to parse."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


def _two_mode_sector(n: int) -> FockBasis:
    return build_basis(2, [n])


def _pure_flags():
    return {"global_compliant": True, "local_compliant": False}


# ---------------------------------------------------------------- named states

def noon_state(n: int, theta: float) -> QuantumState:
    """cos(theta)|N,0> + sin(theta)|0,N>."""
    if n < 1:
        raise ValueError("NOON state needs N >= 1")
    basis = _two_mode_sector(n)
    v = np.zeros(basis.dim, dtype=complex)
    v[basis.index[(n, 0)]] += math.cos(theta)
    v[basis.index[(0, n)]] += math.sin(theta)
    return pure_state(basis, fix_global_phase(v), normalize=True, ssr_flags=_pure_flags())


def binomial_state(n: int, theta: float, chi: float) -> QuantumState:
    """(-c^dag)^N |0> / sqrt(N!) for the rotated mode c.

    The mode c comes from the Euler angles (-pi + chi, -2 theta, -pi), so
    c = -cos(theta) e^{i chi/2} a - sin(theta) e^{-i chi/2} b.
    """
    if n < 1:
        raise ValueError("binomial state needs N >= 1")
    u = mode_rotation_coefficients((-math.pi + chi, -2 * theta, -math.pi))
    # -c^dag = -conj(u00) a^dag - conj(u01) b^dag
    ca, cb = -np.conj(u[0, 0]), -np.conj(u[0, 1])
    basis = _two_mode_sector(n)
    v = np.zeros(basis.dim, dtype=complex)
    for na, nb in basis.states:
        v[basis.index[(na, nb)]] = math.sqrt(math.comb(n, nb)) * ca ** na * cb ** nb
    return pure_state(basis, fix_global_phase(v), normalize=True, ssr_flags=_pure_flags())


def _check_phase_index(n: int, p: float) -> float:
    """Validate the phase label p in {-N/2, ..., N/2} (half-integers for odd N)."""
    twice = 2 * p
    if abs(twice - round(twice)) > 1e-9 or abs(p) > n / 2 + 1e-9:
        raise ValueError(f"p = {p} is not on the grid -N/2..N/2 for N = {n}")
    if (round(twice) - n) % 2:
        raise ValueError(f"p = {p} is off-grid: p + N/2 must be an integer")
    return round(twice) / 2


def relative_phase_angle(n: int, p: float) -> float:
    return 2 * math.pi * _check_phase_index(n, p) / (n + 1)


def _phase_vector(n: int, theta_p: float) -> np.ndarray:
    # basis index i has n_b = i, so k = i - N/2
    k = np.arange(n + 1) - n / 2
    return np.exp(1j * k * theta_p) / math.sqrt(n + 1)


def relative_phase_state(n: int, p: float = 0) -> QuantumState:
    """Uniform-magnitude state sum_k e^{i k theta_p} |N/2-k, N/2+k> / sqrt(N+1)."""
    if n < 1:
        raise ValueError("relative phase state needs N >= 1")
    theta_p = relative_phase_angle(n, p)
    v = fix_global_phase(_phase_vector(n, theta_p))
    st = pure_state(_two_mode_sector(n), v, ssr_flags=_pure_flags())
    st.meta["theta_p"] = theta_p
    return st


def phase_operator(n: int) -> OperatorMatrix:
    """Hermitian relative-phase operator sum_p theta_p |theta_p><theta_p|."""
    basis = _two_mode_sector(n)
    m = np.zeros((basis.dim, basis.dim), dtype=complex)
    for j in range(n + 1):
        p = j - n / 2
        th = relative_phase_angle(n, p)
        v = _phase_vector(n, th)
        m += th * np.outer(v, v.conj())
    return OperatorMatrix(basis, m).hermitian()


def coherent_tail_mass(alpha_abs: float, n_max: int) -> float:
    """Probability that the total number of a two-mode coherent state exceeds n_max."""
    return float(stats.poisson.sf(n_max, 2 * alpha_abs ** 2))


def coherent_mixture(alpha_abs: float, n_max: int, allow_truncation: bool = False) -> QuantumState:
    """Phase-averaged product of coherent states |alpha>|alpha>, built analytically.

    Only equal-total blocks survive the average; within total L the
    elements are e^{-2|alpha|^2} |alpha|^{2L} / sqrt(n! m! n'! m'!).
    """
    if alpha_abs < 0 or n_max < 0:
        raise ValueError("need |alpha| >= 0 and n_max >= 0")
    tail = coherent_tail_mass(alpha_abs, n_max)
    if tail > TRUNCATION_TOL and not allow_truncation:
        raise TruncationError(f"discarded probability {tail:.3g} exceeds {TRUNCATION_TOL:g}; raise n_max")
    basis = build_basis(2, range(n_max + 1))
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    lam = alpha_abs ** 2
    for total, sl in basis.sector_slices().items():
        occ = basis.states[sl]
        if lam == 0.0:
            if total == 0:
                rho[sl, sl] = 1.0
            continue
        logf = np.array([-0.5 * (math.lgamma(na + 1) + math.lgamma(nb + 1)) for na, nb in occ])
        amp = np.exp(-lam + total * math.log(lam) / 2 + logf)
        rho[sl, sl] = np.outer(amp, amp)
    rho /= np.trace(rho).real
    st = mixed_state(basis, rho, {"global_compliant": True, "local_compliant": False})
    st.meta.update({"tail_mass": tail, "alpha_abs": alpha_abs})
    return st


def verstraete_state() -> QuantumState:
    """Equal mixture over omega in {1, i, -1, -i} of |psi_w>|psi_w>,
    |psi_w> = (|0> + w|1>)/sqrt(2)."""
    basis = build_basis(2, [0, 1, 2])
    comps = []
    for w in (1, 1j, -1, -1j):
        v = np.zeros(basis.dim, dtype=complex)
        v[basis.index[(0, 0)]] = 0.5
        v[basis.index[(1, 0)]] = 0.5 * w
        v[basis.index[(0, 1)]] = 0.5 * w
        v[basis.index[(1, 1)]] = 0.5 * w * w
        comps.append((0.25, pure_state(basis, v)))
    st = mix(comps)
    # second route: 1/4 |00><00| + 1/4 |11><11| + 1/2 |Psi+><Psi+|
    alt = np.zeros((basis.dim, basis.dim), dtype=complex)
    alt[basis.index[(0, 0)], basis.index[(0, 0)]] = 0.25
    alt[basis.index[(1, 1)], basis.index[(1, 1)]] = 0.25
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index[(1, 0)]] = psi[basis.index[(0, 1)]] = 1 / math.sqrt(2)
    alt += 0.5 * np.outer(psi, psi.conj())
    err = float(np.max(np.abs(st.data - alt)))
    if err > 1e-12:
        raise RuntimeError(f"mixture and Bell-form constructions differ by {err:.3g}")
    return QuantumState(basis, "mixed", st.data, {"global_compliant": True, "local_compliant": False})


# ---------------------------------------------------------------- separable states

@dataclass
class SeparableSpec:
    """Mixture sum_R P_R (product of sub-system states).

    `factors[R]` lists the sub-system states of component R in sub-system
    order, and `mode_order` maps the assembled product modes onto the
    output ordering (output mode k is product mode mode_order[k]).
    """
    structure: str
    weights: list
    factors: list
    mode_order: tuple | None = None
    ssr_override: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def num_components(self) -> int:
        return len(self.weights)


def _locally_diagonal(st: QuantumState, tol: float = 1e-12) -> bool:
    from .fock import global_ssr_compliant
    return global_ssr_compliant(st, tol)


def validate_spec(spec: SeparableSpec):
    if spec.structure not in STRUCTURES:
        raise ValueError(f"unknown structure {spec.structure!r}")
    w = np.asarray(spec.weights, float)
    if len(w) != len(spec.factors) or len(w) == 0:
        raise ValueError("one weight per component is required")
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise ValueError("weights must be non-negative and sum to 1")
    sizes = None
    for comp in spec.factors:
        shape = tuple(f.basis.num_modes for f in comp)
        if sizes is None:
            sizes = shape
        elif shape != sizes:
            raise ValueError("all components must share the sub-system layout")
        if not spec.ssr_override:
            for f in comp:
                if not _locally_diagonal(f):
                    raise ValueError("sub-system state carries number coherences; set ssr_override")


def _common_factor_bases(spec: SeparableSpec):
    """Per sub-system basis covering every component, so products share a basis."""
    out = []
    for s in range(len(spec.factors[0])):
        bases = [comp[s].basis for comp in spec.factors]
        nm = bases[0].num_modes
        secs = sorted({n for b in bases for n in b.sectors})
        caps = np.zeros(nm, dtype=int)
        for b in bases:
            caps = np.maximum(caps, b.occupations().max(axis=0))
        out.append(build_basis(nm, secs, tuple(int(c) for c in caps)))
    return out


def separable_state(spec: SeparableSpec) -> QuantumState:
    """Assemble the density matrix of a separable spec."""
    from .fock import embed
    validate_spec(spec)
    fbases = _common_factor_bases(spec)
    comps = []
    for p, comp in zip(spec.weights, spec.factors):
        parts = [embed(f, b) for f, b in zip(comp, fbases)]
        st = parts[0]
        for f in parts[1:]:
            st = tensor(st, f)
        comps.append(st)
    target = comps[0].basis
    comps = [(p, st if st.basis.same_space(target) else _reembed(st, target))
             for p, st in zip(spec.weights, comps)]
    out = mix(comps)
    if out.is_pure:
        out = QuantumState(out.basis, "mixed", out.density_matrix(), dict(out.ssr_flags), psd_known=True)
    if spec.mode_order is not None:
        out = permute_modes(out, spec.mode_order)
    if out.basis.num_modes % 2 == 0:
        out = close_pairs(out)
    flags = dict(out.ssr_flags)
    flags["local_compliant"] = not spec.ssr_override
    return QuantumState(out.basis, out.kind, out.data, flags, {"structure": spec.structure}, psd_known=True)


def _reembed(st, target):
    from .fock import embed
    return embed(st, target)


def _random_density_in_sectors(rng, num_modes: int, cap: int) -> QuantumState:
    """Sub-system state with Dirichlet weights over local totals 0..cap and a
    random density matrix inside each total-number sector."""
    basis = build_basis(num_modes, range(cap + 1))
    w = rng.dirichlet(np.ones(cap + 1))
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    for n, sl in basis.sector_slices().items():
        d = sl.stop - sl.start
        if num_modes == 1 or d == 1:
            rho[sl, sl] = w[n] * np.eye(d)
            continue
        rank = int(rng.integers(1, 3))
        g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
        blk = g @ g.conj().T
        rho[sl, sl] = w[n] * blk / np.trace(blk).real
    return mixed_state(basis, rho, {"global_compliant": True, "local_compliant": True})


def one_boson_pair_state(alpha: float, beta: float, phi: float) -> QuantumState:
    """One boson shared by a mode pair, with
    rho_aa = sin^2 alpha, rho_bb = cos^2 alpha,
    rho_ab = sqrt(sin^2 alpha cos^2 alpha) sin^2 beta e^{i phi}."""
    basis = build_basis(2, [1])
    sa2, ca2 = math.sin(alpha) ** 2, math.cos(alpha) ** 2
    off = math.sqrt(sa2 * ca2) * math.sin(beta) ** 2 * complex(math.cos(phi), math.sin(phi))
    ia, ib = basis.index[(1, 0)], basis.index[(0, 1)]
    rho = np.zeros((2, 2), dtype=complex)
    rho[ia, ia], rho[ib, ib] = sa2, ca2
    rho[ia, ib], rho[ib, ia] = off, np.conj(off)
    return mixed_state(basis, rho, {"global_compliant": True, "local_compliant": False})


def _layout(structure: str, num_pairs: int):
    """Sub-system mode counts and the permutation onto (a1, b1, a2, b2, ...)."""
    if structure == "TwoMode":
        return [1, 1], None
    if structure == "Case1":
        # sub-system A = all a_i, sub-system B = all b_i
        order = []
        for i in range(num_pairs):
            order += [i, num_pairs + i]
        return [num_pairs, num_pairs], tuple(order)
    if structure == "Case2":
        return [1] * (2 * num_pairs), None
    if structure == "Case3":
        return [2] * num_pairs, None
    raise ValueError(f"unknown structure {structure!r}")


def _split_caps(n_max: int, parts: int):
    base, extra = divmod(n_max, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def random_separable_spec(structure: str, rng: np.random.Generator, n_max: int = 6,
                          num_pairs: int = 2, num_components: int | None = None) -> SeparableSpec:
    """Random local-SSR-compliant separable spec.

    The number of components is uniform in 1..5 with Dirichlet weights.
    Two-mode states allow up to n_max bosons per mode; multi-mode
    structures split n_max across sub-systems so that the total stays
    at most n_max.
    """
    sizes, order = _layout(structure, num_pairs if structure != "TwoMode" else 1)
    caps = [n_max] * 2 if structure == "TwoMode" else _split_caps(n_max, len(sizes))
    r = int(num_components or rng.integers(1, 6))
    weights = list(rng.dirichlet(np.ones(r)))
    factors = [[_random_density_in_sectors(rng, m, c) for m, c in zip(sizes, caps)] for _ in range(r)]
    return SeparableSpec(structure, weights, factors, order)


def random_separable(structure: str, seed: int, n_max: int = 6, num_pairs: int = 2) -> QuantumState:
    rng = np.random.default_rng(seed)
    return separable_state(random_separable_spec(structure, rng, n_max, num_pairs))


def random_one_boson_case3(seed: int, num_pairs: int | None = None, max_components: int = 5) -> QuantumState:
    """Case-3 mixture where every mode pair holds one boson in a random
    one-boson state; angles uniform on alpha, beta in [0, pi/2], phi in [0, 2 pi)."""
    rng = np.random.default_rng(seed)
    n = int(num_pairs or rng.integers(2, 5))
    r = int(rng.integers(1, max_components + 1))
    weights = list(rng.dirichlet(np.ones(r)))
    factors = []
    for _ in range(r):
        ang = rng.uniform([0, 0, 0], [math.pi / 2, math.pi / 2, 2 * math.pi], size=(n, 3))
        factors.append([one_boson_pair_state(*row) for row in ang])
    spec = SeparableSpec("Case3", weights, factors, None, ssr_override=True)
    st = separable_state(spec)
    st.meta["one_boson_pairs"] = True
    return st


def random_fixed_n_separable(structure: str, n: int, seed: int, num_pairs: int = 2,
                             max_components: int = 5) -> QuantumState:
    """Separable mixture living entirely in the total-N sector.

    Each component is a product of local states with definite local
    numbers summing to N (multi-mode blocks get a random pure state in
    their local sector).
    """
    rng = np.random.default_rng(seed)
    sizes, order = _layout(structure, num_pairs if structure != "TwoMode" else 1)
    r = int(rng.integers(1, max_components + 1))
    weights = list(rng.dirichlet(np.ones(r)))
    factors = []
    for _ in range(r):
        counts = rng.multinomial(n, np.ones(len(sizes)) / len(sizes))
        comp = []
        for m, k in zip(sizes, counts):
            b = build_basis(m, [int(k)])
            v = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
            comp.append(pure_state(b, v, normalize=True, ssr_flags={"global_compliant": True,
                                                                   "local_compliant": True}))
        factors.append(comp)
    st = separable_state(SeparableSpec(structure, weights, factors, order))
    return _restrict_to_sector(st, n)


def _restrict_to_sector(st: QuantumState, n: int) -> QuantumState:
    """Drop empty sectors from a state supported in the single sector n."""
    b = st.basis
    small = build_basis(b.num_modes, [n], b.caps)
    idx = np.array([b.index[s] for s in small.states])
    rho = st.density_matrix()[np.ix_(idx, idx)]
    out = QuantumState(small, "mixed", rho, dict(st.ssr_flags), dict(st.meta))
    return out


def case3_counterexample(n: int, num_pairs: int = 2, pair_state: QuantumState | None = None) -> QuantumState:
    """Product state with a two-mode state in pair 1 and vacuum in the rest.

    The default pair state is the relative-phase state with p = 0. The
    result is separable with respect to the mode-pair partition.
    """
    if num_pairs < 2:
        raise ValueError("need at least two mode pairs")
    first = pair_state if pair_state is not None else relative_phase_state(n, 0)
    st = first
    for _ in range(num_pairs - 1):
        st = tensor(st, fock_state((0, 0)))
    st = close_pairs(st)
    flags = {"global_compliant": st.ssr_flags["global_compliant"], "local_compliant": False}
    return QuantumState(st.basis, st.kind, st.data, flags, {"structure": "Case3"}, psd_known=True)


# ---------------------------------------------------------------- registry

def _f(x):
    return float(x)


_REGISTRY = {
    "noon": (lambda N, theta=0.0: noon_state(int(N), _f(theta)), {"N", "theta"}),
    "binomial": (lambda N, theta=0.0, chi=0.0: binomial_state(int(N), _f(theta), _f(chi)),
                 {"N", "theta", "chi"}),
    "relphase": (lambda N, p=0: relative_phase_state(int(N), _f(p)), {"N", "p"}),
    "verstraete": (lambda: verstraete_state(), set()),
    "vacuum": (lambda modes=2: fock_state((0,) * int(modes)), {"modes"}),
    "case3": (lambda N, pairs=2: case3_counterexample(int(N), int(pairs)), {"N", "pairs"}),
    "separable": (lambda structure="TwoMode", seed=0, nmax=6, pairs=2:
                  random_separable(str(structure), int(seed), int(nmax), int(pairs)),
                  {"structure", "seed", "nmax", "pairs"}),
}


def _cohmix(params):
    if "alpha2" in params and "alpha" in params:
        raise ValueError("give alpha or alpha2, not both")
    if "alpha2" in params:
        a = math.sqrt(float(params.pop("alpha2")))
    else:
        a = float(params.pop("alpha", 0.0))
    nmax = int(params.pop("nmax", 40))
    allow = str(params.pop("allow_truncation", "false")).lower() in ("1", "true", "yes")
    if params:
        raise TypeError(f"unexpected parameters {sorted(params)}")
    return coherent_mixture(a, nmax, allow)


def _fock(params):
    occ = params.pop("occ", None)
    if occ is None:
        occ = f"{params.pop('na', 0)}/{params.pop('nb', 0)}"
    if params:
        raise TypeError(f"unexpected parameters {sorted(params)}")
    return fock_state(tuple(int(x) for x in str(occ).split("/")))


_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^,]*)")


def parse_descriptor(text: str):
    """Split `name:key=value,...` into (name, {key: value-string}, key positions)."""
    name, sep, rest = text.partition(":")
    name = name.strip()
    if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", name):
        raise DescriptorError(f"bad state name {name!r}", 0)
    params, where = {}, {}
    pos = len(name) + len(sep)
    if rest.strip():
        for chunk in rest.split(","):
            m = _TOKEN.fullmatch(chunk)
            if not m or not m.group(2).strip():
                raise DescriptorError(f"expected key=value, got {chunk!r}", pos)
            key = m.group(1)
            if key in params:
                raise DescriptorError(f"duplicate key {key!r}", pos)
            params[key] = m.group(2).strip()
            where[key] = pos
            pos += len(chunk) + 1
    return name, params, where


def state_names():
    return sorted(list(_REGISTRY) + ["cohmix", "fock"])


def make_state(text: str) -> QuantumState:
    """Build a state from a descriptor such as `noon:N=4,theta=0.7854`.

    Angles are in radians. Known names: binomial, case3, cohmix, fock,
    noon, relphase, separable, vacuum, verstraete.
    """
    name, params, where = parse_descriptor(text)
    if name == "cohmix":
        return _cohmix(dict(params))
    if name == "fock":
        return _fock(dict(params))
    if name not in _REGISTRY:
        raise DescriptorError(f"unknown state {name!r}; known: {', '.join(state_names())}", 0)
    fn, keys = _REGISTRY[name]
    for k in params:
        if k not in keys:
            raise DescriptorError(f"unknown parameter {k!r} for {name}", where[k])
    conv = {}
    for k, v in params.items():
        if k == "structure":
            conv[k] = v
            continue
        try:
            conv[k] = float(v) if k in ("theta", "chi", "p") else int(v)
        except ValueError:
            raise DescriptorError(f"parameter {k!r} has non-numeric value {v!r}", where[k]) from None
    return fn(**conv)
