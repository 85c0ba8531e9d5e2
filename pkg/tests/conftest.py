"""Shared brute-force oracles.

These build full matrices element by element from the definitions, so they
share no code paths with the einsum kernels under test.
"""

import itertools

import numpy as np
import pytest

from entgen.gatelib import PAULIS


def bits(x, n):
    return [(x >> q) & 1 for q in range(n)]


def dense_one_qubit(n, q, u):
    """2^n x 2^n operator of ``u`` on qubit ``q`` (little-endian)."""
    dim = 2**n
    m = np.zeros((dim, dim), dtype=complex)
    for a in range(dim):
        for b in range(dim):
            ba, bb = bits(a, n), bits(b, n)
            if all(ba[k] == bb[k] for k in range(n) if k != q):
                m[a, b] = u[ba[q], bb[q]]
    return m


def dense_two_qubit(n, i, j, u):
    """2^n x 2^n operator of ``u`` on ordered pair (i, j), i = high bit of the 4x4 index."""
    dim = 2**n
    m = np.zeros((dim, dim), dtype=complex)
    for a in range(dim):
        for b in range(dim):
            ba, bb = bits(a, n), bits(b, n)
            if all(ba[k] == bb[k] for k in range(n) if k not in (i, j)):
                m[a, b] = u[2 * ba[i] + ba[j], 2 * bb[i] + bb[j]]
    return m


def digits4(x, n):
    return [(x // 4**k) % 4 for k in range(n)]


def dense_chain(kernel16, n, pairs):
    """(1/L) sum over pairs of the embedded 16x16 kernel, built entry by entry."""
    dim = 4**n
    m = np.zeros((dim, dim))
    for i, j in pairs:
        for a in range(dim):
            da = digits4(a, n)
            for b in range(dim):
                db = digits4(b, n)
                if all(da[k] == db[k] for k in range(n) if k not in (i, j)):
                    m[a, b] += kernel16[da[j] + 4 * da[i], db[j] + 4 * db[i]]
    return m / len(pairs)


def pauli_string(alpha, n):
    """Dense Pauli string; digit k of ``alpha`` is the Pauli on qubit k."""
    op = np.ones((1, 1), dtype=complex)
    for k in reversed(range(n)):  # kron order: qubit n-1 leftmost
        op = np.kron(op, PAULIS[digits4(alpha, n)[k]])
    return op


def brute_weights(psi, n):
    rho = np.outer(psi, psi.conj())
    return np.array([np.real(np.trace(rho @ pauli_string(a, n))) ** 2 / 2**n
                     for a in range(4**n)])


def brute_purity(psi, n, A):
    """tr rho_A^2 by explicit partial trace loops."""
    B = [q for q in range(n) if q not in A]
    rho_a = np.zeros((2 ** len(A), 2 ** len(A)), dtype=complex)
    for x in range(2**n):
        for y in range(2**n):
            bx, by = bits(x, n), bits(y, n)
            if all(bx[q] == by[q] for q in B):
                ia = sum(bx[q] << k for k, q in enumerate(A))
                ja = sum(by[q] << k for k, q in enumerate(A))
                rho_a[ia, ja] += psi[x] * np.conj(psi[y])
    return float(np.real(np.trace(rho_a @ rho_a)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


def random_state(rng, n):
    z = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return z / np.linalg.norm(z)


def all_pairs(n):
    return [p for p in itertools.permutations(range(n), 2)]
