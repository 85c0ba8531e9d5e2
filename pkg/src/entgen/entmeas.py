"""Bipartite entanglement of pure states and random-state reference values."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .qsim import PureState


@dataclass(frozen=True)
class Bipartition:
    """Qubit set ``A``; the complement is ``B``."""

    members: frozenset

    @classmethod
    def symmetric(cls, n: int) -> "Bipartition":
        if n % 2:
            raise DomainError(f"symmetric cut needs even n, got {n}")
        return cls(frozenset(range(n // 2)))

    def validate(self, n: int):
        if not self.members or len(self.members) >= n or not self.members <= set(range(n)):
            raise DomainError(f"invalid bipartition {sorted(self.members)} for n={n}")


@dataclass
class SchmidtSpectrum:
    mu: np.ndarray


def _resolve_cut(n: int, cut) -> Bipartition:
    if cut is None:
        cut = Bipartition.symmetric(n)
    elif not isinstance(cut, Bipartition):
        cut = Bipartition(frozenset(cut))
    cut.validate(n)
    return cut


def amplitude_matrix(amps: np.ndarray, n: int, cut=None) -> np.ndarray:
    """Reshape amplitudes (``(2**n,)`` or ``(B, 2**n)``) into ``|A| x |B|`` matrices."""
    cut = _resolve_cut(n, cut)
    batch = amps.shape[:-1]
    a = sorted(cut.members)
    b = [q for q in range(n) if q not in cut.members]
    t = amps.reshape(batch + (2,) * n)
    off = len(batch)
    # tensor axis off + n-1-q holds qubit q
    axes_a = [off + n - 1 - q for q in reversed(a)]
    axes_b = [off + n - 1 - q for q in reversed(b)]
    if axes_a + axes_b != list(range(off, off + n)):
        t = np.transpose(t, tuple(range(off)) + tuple(axes_a + axes_b))
    return t.reshape(batch + (2 ** len(a), 2 ** len(b)))


def schmidt_squares_batch(amps: np.ndarray, n: int, cut=None) -> np.ndarray:
    """Squared Schmidt coefficients, nonincreasing, for a batch of states."""
    m = amplitude_matrix(amps, n, cut)
    s = np.linalg.svd(m, compute_uv=False)
    return s**2


def purity_from_squares(mu2: np.ndarray) -> np.ndarray:
    return np.sum(mu2**2, axis=-1)


def entropy_from_squares(mu2: np.ndarray) -> np.ndarray:
    """``-sum mu^2 log2 mu^2`` with ``0 log 0 = 0``."""
    p = np.clip(mu2, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def schmidt_spectrum(state: PureState, cut=None) -> SchmidtSpectrum:
    m = amplitude_matrix(state.amplitudes, state.n, cut)
    return SchmidtSpectrum(np.linalg.svd(m, compute_uv=False))


def purity(state: PureState, cut=None) -> float:
    """``tr rho_A^2`` from the Gram matrix of the amplitude matrix."""
    m = amplitude_matrix(state.amplitudes, state.n, cut)
    rho = m @ m.conj().T
    return float(np.real(np.vdot(rho, rho)))


def vn_entropy(state: PureState, cut=None) -> float:
    """Von Neumann entropy of ``rho_A`` in bits."""
    mu = schmidt_spectrum(state, cut).mu
    return float(entropy_from_squares(mu**2))


def random_schmidt_reference(i: int, N: int, tol: float = 1e-12) -> float:
    """Mean i-th largest Schmidt coefficient of a random state, ``N x N`` cut.

    Solves ``(k + 1/2) pi / (2N) = phi - sin(2 phi) / 2`` for ``phi`` in
    ``[0, pi/2]`` by bisection, with ``k = i - 1`` the zero-based rank, and
    returns ``2 cos(phi) / sqrt(N)``. The zero-based rank puts each
    coefficient at the midpoint of its quantile bin of the Marchenko-Pastur
    law, so the squares sum to one up to O(N^-2).
    """
    if not 1 <= i <= N:
        raise DomainError(f"rank {i} outside 1..{N}")
    target = (i - 0.5) * math.pi / (2 * N)
    lo, hi = 0.0, math.pi / 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid - 0.5 * math.sin(2 * mid) < target:
            lo = mid
        else:
            hi = mid
    phi = 0.5 * (lo + hi)
    return 2.0 * math.cos(phi) / math.sqrt(N)


def random_schmidt_squares(n: int) -> np.ndarray:
    """Reference ``mu_i^2`` for ``i = 1..2^(n/2)`` at the symmetric cut."""
    if n % 2:
        raise DomainError(f"symmetric cut needs even n, got {n}")
    N = 2 ** (n // 2)
    return np.array([random_schmidt_reference(i, N) ** 2 for i in range(1, N + 1)])


def asymptotic_purity(n: int) -> float:
    """Haar average purity ``2N / (N^2 + 1)`` with ``N = 2^(n/2)``."""
    if n % 2:
        raise DomainError(f"symmetric cut needs even n, got {n}")
    N = 2.0 ** (n // 2)
    return 2 * N / (N * N + 1)


def asymptotic_entropy(n: int) -> float:
    """Large-N random-state entropy ``n/2 - 1/ln 4`` (bits)."""
    if n % 2:
        raise DomainError(f"symmetric cut needs even n, got {n}")
    return n / 2 - 1 / math.log(4)
