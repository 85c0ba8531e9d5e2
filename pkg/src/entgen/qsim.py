"""Dense statevector simulation of n qubits.

Qubit ordering is little-endian: qubit 0 is the least significant bit of a
basis index. For a two-qubit gate acting on the ordered pair ``(i, j)``,
qubit ``i`` is the more significant bit of the 4x4 row index, so the usual
CNOT matrix has ``i`` as control and ``j`` as target.

Besides the single-state API (:class:`PureState`, :func:`apply_one_qubit`,
:func:`apply_two_qubit`) the module exposes batched kernels operating on a
``(batch, 2**n)`` amplitude array, which is what the Monte Carlo protocol uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DomainError, ValidationError

MAX_QUBITS = 24
UNITARY_TOL = 1e-10


@dataclass
class PureState:
    """Normalized pure state of ``n`` qubits."""

    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2**self.n,):
            raise DomainError(
                f"expected {2**self.n} amplitudes for n={self.n}, "
                f"got shape {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "PureState":
        return PureState(self.n, self.amplitudes.copy())


@dataclass
class RngStream:
    """Reproducible random stream identified by ``(seed, stream)``.

    The stream id is mixed in through :class:`numpy.random.SeedSequence`'s
    spawn key, so every replica gets a statistically independent PCG64
    generator whose draws do not depend on how replicas are scheduled.
    """

    seed: int
    stream: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def complex_normal(self, shape) -> np.ndarray:
        z = self.generator.standard_normal((2,) + tuple(np.atleast_1d(shape)))
        return (z[0] + 1j * z[1]) / np.sqrt(2.0)

    def integers(self, high: int) -> int:
        return int(self.generator.integers(high))


def _check_qubits(n: int):
    if not 1 <= n <= MAX_QUBITS:
        raise CapacityError(f"qubit count {n} outside 1..{MAX_QUBITS}")


def _check_unitary(u: np.ndarray, dim: int, tol: float = UNITARY_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (dim, dim):
        raise ValidationError(f"expected a {dim}x{dim} matrix, got {u.shape}")
    err = np.max(np.abs(u @ u.conj().T - np.eye(dim)))
    if err > tol:
        raise ValidationError(f"matrix is not unitary (max deviation {err:.3g})")
    return u


def init_basis_state(n: int, index: int) -> PureState:
    """Computational basis state ``|index>`` on ``n`` qubits."""
    _check_qubits(n)
    if not 0 <= index < 2**n:
        raise DomainError(f"basis index {index} out of range for n={n}")
    amps = np.zeros(2**n, dtype=complex)
    amps[index] = 1.0
    return PureState(n, amps)


# ---------------------------------------------------------------------------
# batched kernels
# ---------------------------------------------------------------------------


def apply_one_qubit_batch(amps: np.ndarray, n: int, q: int, u: np.ndarray) -> np.ndarray:
    """Apply 2x2 unitaries on qubit ``q`` of every state in ``amps``.

    ``amps`` has shape ``(B, 2**n)``; ``u`` is either a single ``(2, 2)``
    matrix or a stack ``(B, 2, 2)``. Returns a new array.
    """
    B = amps.shape[0]
    view = amps.reshape(B, 2 ** (n - 1 - q), 2, 2**q)
    if u.ndim == 2:
        out = np.einsum("pr,zarb->zapb", u, view)
    else:
        out = np.einsum("zpr,zarb->zapb", u, view)
    return out.reshape(B, 2**n)


def apply_two_qubit_batch(
    amps: np.ndarray, n: int, i: int, j: int, u: np.ndarray
) -> np.ndarray:
    """Apply 4x4 unitaries on the ordered pair ``(i, j)`` of every state.

    ``u`` is ``(4, 4)`` or ``(B, 4, 4)``; qubit ``i`` is the high bit of
    the gate's row index.
    """
    B = amps.shape[0]
    hi, lo = (i, j) if i > j else (j, i)
    g = u.reshape(u.shape[:-2] + (2, 2, 2, 2))
    if i < j:
        # re-express the gate with the high-bit qubit first
        g = np.swapaxes(np.swapaxes(g, -4, -3), -2, -1)
    view = amps.reshape(B, 2 ** (n - 1 - hi), 2, 2 ** (hi - lo - 1), 2, 2**lo)
    if g.ndim == 4:
        out = np.einsum("pqrs,zarbsc->zapbqc", g, view, optimize=True)
    else:
        out = np.einsum("zpqrs,zarbsc->zapbqc", g, view, optimize=True)
    return out.reshape(B, 2**n)


# ---------------------------------------------------------------------------
# single-state API
# ---------------------------------------------------------------------------


def apply_one_qubit(state: PureState, q: int, u: np.ndarray) -> PureState:
    """Return ``u`` applied to qubit ``q`` of ``state``."""
    if not 0 <= q < state.n:
        raise DomainError(f"qubit {q} out of range for n={state.n}")
    u = _check_unitary(u, 2)
    out = apply_one_qubit_batch(state.amplitudes[None, :], state.n, q, u)
    return PureState(state.n, out[0])


def apply_two_qubit(state: PureState, i: int, j: int, u: np.ndarray) -> PureState:
    """Return the 4x4 unitary ``u`` applied to the ordered qubit pair ``(i, j)``."""
    if i == j:
        raise DomainError("two-qubit gate needs distinct qubits")
    if not (0 <= i < state.n and 0 <= j < state.n):
        raise DomainError(f"qubits ({i}, {j}) out of range for n={state.n}")
    u = _check_unitary(u, 4)
    out = apply_two_qubit_batch(state.amplitudes[None, :], state.n, i, j, u)
    return PureState(state.n, out[0])


# ---------------------------------------------------------------------------
# Haar (CUE) sampling
# ---------------------------------------------------------------------------


def haar_from_gaussian(z: np.ndarray) -> np.ndarray:
    """Map complex Ginibre matrices (``(..., d, d)``) to Haar unitaries.

    QR-orthonormalizes each matrix and rotates the columns so that the
    diagonal of the triangular factor is real positive (Mezzadri's recipe),
    which makes the result exactly Haar distributed.
    """
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    ph = d / np.abs(d)
    return q * ph[..., None, :]


def haar_unitary(dim: int, rng) -> np.ndarray:
    if isinstance(rng, RngStream):
        z = rng.complex_normal((dim, dim))
    else:
        z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    return haar_from_gaussian(z)


def haar_u2(rng) -> np.ndarray:
    """Haar-random 2x2 unitary (CUE(2))."""
    return haar_unitary(2, rng)


def haar_u4(rng) -> np.ndarray:
    """Haar-random 4x4 unitary (CUE(4))."""
    return haar_unitary(4, rng)


def haar_state(n: int, rng) -> PureState:
    """Random pure state from the unitarily invariant measure."""
    _check_qubits(n)
    if isinstance(rng, RngStream):
        z = rng.complex_normal(2**n)
    else:
        z = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return PureState(n, z / np.linalg.norm(z))
