import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import brute_purity, dense_one_qubit, random_state
from entgen.entmeas import (
    Bipartition,
    amplitude_matrix,
    asymptotic_entropy,
    asymptotic_purity,
    purity,
    random_schmidt_reference,
    random_schmidt_squares,
    schmidt_spectrum,
    schmidt_squares_batch,
    vn_entropy,
)
from entgen.errors import DomainError
from entgen.qsim import PureState, haar_u2, init_basis_state


def bell_across_cut(n):
    """(|0..0> + |1 at qubit 0 and qubit n-1>)/sqrt2: one Bell pair straddling the cut."""
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = amps[1 | (1 << (n - 1))] = 1 / np.sqrt(2)
    return PureState(n, amps)


def ghz(n):
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = amps[-1] = 1 / np.sqrt(2)
    return PureState(n, amps)


def test_bipartition():
    assert Bipartition.symmetric(6).members == frozenset({0, 1, 2})
    with pytest.raises(DomainError):
        Bipartition.symmetric(5)
    with pytest.raises(DomainError):
        purity(init_basis_state(4, 0), cut={0, 1, 2, 3})
    with pytest.raises(DomainError):
        purity(init_basis_state(4, 0), cut=set())


def test_product_states():
    s = init_basis_state(6, 37)
    assert purity(s) == pytest.approx(1, abs=1e-15)
    assert vn_entropy(s) == pytest.approx(0, abs=1e-12)
    mu = schmidt_spectrum(s).mu
    assert mu[0] == pytest.approx(1) and np.allclose(mu[1:], 0)


def test_bell_and_ghz():
    assert purity(bell_across_cut(4)) == pytest.approx(0.5, abs=1e-14)
    assert vn_entropy(bell_across_cut(4)) == pytest.approx(1.0, abs=1e-12)
    mu = schmidt_spectrum(ghz(6)).mu
    assert np.allclose(mu, [2**-0.5, 2**-0.5, 0, 0, 0, 0, 0, 0], atol=1e-14)


@pytest.mark.parametrize("cut", [None, {0, 2}, {1}, {0, 1, 3}])
def test_purity_matches_partial_trace_oracle(rng, cut):
    n = 4
    psi = random_state(rng, n)
    A = sorted(range(n // 2)) if cut is None else sorted(cut)
    assert purity(PureState(n, psi), cut) == pytest.approx(brute_purity(psi, n, A), abs=1e-12)


def test_amplitude_matrix_batch_consistent(rng):
    amps = np.stack([random_state(rng, 6) for _ in range(5)])
    batch = amplitude_matrix(amps, 6, {1, 4})
    for k in range(5):
        assert np.array_equal(batch[k], amplitude_matrix(amps[k], 6, {1, 4}))
    s2 = schmidt_squares_batch(amps, 6)
    assert np.allclose(s2.sum(axis=1), 1, atol=1e-12)


def test_haar_purity_mean(rng):
    n, N = 8, 16
    z = rng.standard_normal((10_000, 2**n)) + 1j * rng.standard_normal((10_000, 2**n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    mu2 = schmidt_squares_batch(z, n)
    pur = np.sum(mu2**2, axis=1)
    assert asymptotic_purity(n) == pytest.approx(2 * N / (N * N + 1))
    assert abs(pur.mean() - 32 / 257) < 0.002


def test_haar_entropy_mean(rng):
    n = 10
    z = rng.standard_normal((500, 2**n)) + 1j * rng.standard_normal((500, 2**n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    S = np.array([vn_entropy(PureState(n, v)) for v in z])
    assert abs(S.mean() - asymptotic_entropy(n)) < 0.05


def test_reference_values():
    assert asymptotic_purity(2) == pytest.approx(0.8)
    assert asymptotic_entropy(16) == pytest.approx(8 - 1 / math.log(4))
    assert asymptotic_entropy(16) == pytest.approx(7.27865, abs=1e-5)
    assert 2**10 * asymptotic_purity(20) == pytest.approx(2, rel=1e-5)
    for f in (asymptotic_purity, asymptotic_entropy, random_schmidt_squares):
        with pytest.raises(DomainError):
            f(7)


def test_schmidt_reference():
    # oracle: brentq on the implicit equation at the rank-1 bin midpoint
    phi = brentq(lambda f: f - 0.5 * math.sin(2 * f) - 0.5 * math.pi / 32, 0, math.pi / 2,
                 xtol=1e-15)
    assert random_schmidt_reference(1, 16) == pytest.approx(2 * math.cos(phi) / 4, abs=1e-11)
    assert random_schmidt_reference(1, 16) == pytest.approx(0.45568468310961857, abs=1e-11)
    N = 2**20
    assert random_schmidt_reference(1, N) * math.sqrt(N) == pytest.approx(2, rel=1e-3)
    for N in (4, 16, 64):
        mu = [random_schmidt_reference(i, N) for i in range(1, N + 1)]
        assert all(a >= b for a, b in zip(mu, mu[1:]))
    assert abs(random_schmidt_squares(8).sum() - 1) < 0.05
    with pytest.raises(DomainError):
        random_schmidt_reference(0, 4)
    with pytest.raises(DomainError):
        random_schmidt_reference(5, 4)


def test_schmidt_reference_matches_haar_means(rng):
    n = 8
    z = rng.standard_normal((4000, 2**n)) + 1j * rng.standard_normal((4000, 2**n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    mean = schmidt_squares_batch(z, n).mean(axis=0)
    assert np.abs(mean - random_schmidt_squares(n)).sum() < 0.02


@settings(max_examples=1000, deadline=None)
@given(n=st.sampled_from([2, 4, 6]), seed=st.integers(0, 2**32 - 1))
def test_measure_identities(n, seed):
    rng = np.random.default_rng(seed)
    s = PureState(n, random_state(rng, n))
    mu = schmidt_spectrum(s).mu
    assert np.all(mu >= 0) and np.all(np.diff(mu) <= 1e-15)
    assert abs(np.sum(mu**2) - 1) < 1e-10
    assert abs(purity(s) - np.sum(mu**4)) < 1e-10
    p = mu**2
    ent = -np.sum(p[p > 0] * np.log2(p[p > 0]))
    assert abs(vn_entropy(s) - ent) < 1e-10
    # a local unitary inside A leaves purity unchanged
    u = dense_one_qubit(n, 0, haar_u2(rng))
    assert abs(purity(PureState(n, u @ s.amplitudes)) - purity(s)) < 1e-12
