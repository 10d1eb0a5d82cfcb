import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as hst

from bosewitness.fock import build_basis, mixed_state, pure_state

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_state(rng, num_modes=2, sectors=(3,), mixed=False, rank=3, ssr=True):
    """Random pure or mixed state on the given sectors.

    With ssr=True the density matrix is block diagonal in total number.
    """
    basis = build_basis(num_modes, sectors)
    d = basis.dim

    def vec():
        return rng.normal(size=d) + 1j * rng.normal(size=d)

    if not mixed:
        if ssr and len(sectors) > 1:
            # a pure state in one sector only
            sl = basis.sector_slices()[int(rng.choice(list(sectors)))]
            v = np.zeros(d, dtype=complex)
            v[sl] = vec()[sl]
        else:
            v = vec()
        return pure_state(basis, v, normalize=True)
    rho = np.zeros((d, d), dtype=complex)
    w = rng.dirichlet(np.ones(rank))
    for p in w:
        v = vec()
        if ssr:
            sl = basis.sector_slices()[int(rng.choice(list(sectors)))]
            u = np.zeros(d, dtype=complex)
            u[sl] = v[sl]
            v = u
        rho += p * np.outer(v, v.conj()) / np.vdot(v, v).real
    return mixed_state(basis, rho)


@hst.composite
def two_mode_states(draw, max_n=8, allow_mixed=True, fixed_n=False):
    seed = draw(hst.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    if fixed_n:
        sectors = (draw(hst.integers(0, max_n)),)
    else:
        lo = draw(hst.integers(0, max_n))
        hi = draw(hst.integers(lo, max_n))
        sectors = tuple(range(lo, hi + 1))
    mixed = allow_mixed and draw(hst.booleans())
    return random_state(rng, 2, sectors, mixed=mixed, rank=draw(hst.integers(1, 4)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
