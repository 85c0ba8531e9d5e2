"""Markov chain for ensemble-averaged squared Pauli coefficients.

State of the chain is a :class:`PauliWeightDist`: the weights
``p_alpha = tr(rho P_alpha)^2 / 2^n`` over the 4^n Pauli strings, which sum
to one for a pure state. String indices are base-4 numbers whose digit ``k``
is the Pauli on qubit ``k`` (0 = I, 1 = X, 2 = Y, 3 = Z).

Kernels use the column convention ``p(t+1) = M p(t)``; all kernels here are
doubly stochastic so rows and columns both sum to one.

The lumped chain tracks only the support pattern of a string (which qubits
carry a non-identity Pauli), a 2^n state space. It is exact for any kernel
on distributions that are uniform over {X, Y, Z} on every supported qubit,
and exact from any start for row-wise lumpable kernels such as U(4).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .coupling import coupling_pairs, normalize_coupling
from .errors import CapacityError, DomainError
from .gatelib import PauliConjugationTable

MAX_FULL_QUBITS = 13
MAX_LUMPED_QUBITS = 26
CLASS_WEIGHTS = np.array([1, 3, 3, 9])


def single_qubit_average_kernel() -> np.ndarray:
    """Haar average over U(2) of squared single-qubit Pauli coefficients."""
    r = np.zeros((4, 4))
    r[0, 0] = 1.0
    r[1:, 1:] = 1.0 / 3.0
    return r


R = single_qubit_average_kernel()


@dataclass
class PairKernel:
    """16x16 doubly stochastic kernel on pair indices ``x = beta_j + 4 beta_i``."""

    matrix: np.ndarray
    name: str = ""

    def to_dict(self):
        return {"name": self.name, "matrix": self.matrix.tolist()}


@dataclass
class PauliWeightDist:
    n: int
    weights: np.ndarray

    @property
    def p_identity(self) -> float:
        return float(self.weights[0])


def _class_of(x: int) -> int:
    return 2 * (x // 4 != 0) + (x % 4 != 0)


PAIR_CLASS = np.array([_class_of(x) for x in range(16)])


def pair_kernel_clifford(table: PauliConjugationTable, name: str = "") -> PairKernel:
    """Kernel ``M[a, b] = R[a_i, b'_i] R[a_j, b'_j]`` with ``b' = perm[b]``."""
    m = np.zeros((16, 16))
    for b in range(16):
        bp = table.perm[b]
        m[:, b] = np.kron(R[:, bp // 4], R[:, bp % 4])
    return PairKernel(m, name)


def pair_kernel_u4() -> PairKernel:
    m = np.zeros((16, 16))
    m[0, 0] = 1.0
    m[1:, 1:] = 1.0 / 15.0
    return PairKernel(m, "u4")


def kernel_for_gate(spec) -> PairKernel:
    """Pair kernel for a parsed gate spec; raises for non-Clifford gates."""
    from .errors import UnsupportedGateError
    from .gatelib import pauli_conjugation_table

    if spec.kind == "u4":
        return pair_kernel_u4()
    table = pauli_conjugation_table(spec.gate())
    if table is None:
        raise UnsupportedGateError(
            f"gate {spec.label()} is not Clifford: Markov description requires a "
            "Clifford gate or u4"
        )
    return pair_kernel_clifford(table, spec.label())


# ---------------------------------------------------------------------------
# lumping
# ---------------------------------------------------------------------------


@dataclass
class LumpReport:
    """Aggregated 4x4 kernel over pair support classes plus lumpability data.

    Classes are indexed ``2 * s_i + s_j``: 0 empty, 1 ``{j}``, 2 ``{i}``,
    3 ``{i, j}``. ``class_ok[c]`` is True when every pair index in class
    ``c`` sends identical total probability into each destination class.
    """

    kernel: np.ndarray
    class_ok: list
    max_spread: float
    tol: float = 1e-12

    @property
    def lumpable(self) -> bool:
        return all(self.class_ok)

    def to_dict(self):
        return {
            "lumped_kernel": self.kernel.tolist(),
            "class_ok": list(self.class_ok),
            "lumpable": self.lumpable,
            "max_spread": self.max_spread,
            "tol": self.tol,
        }


def lump(kernel: PairKernel, tol: float = 1e-12) -> LumpReport:
    m = kernel.matrix
    # flow[d, b] = probability that index b lands in class d
    flow = np.zeros((4, 16))
    for d in range(4):
        flow[d] = m[PAIR_CLASS == d].sum(axis=0)
    k = np.zeros((4, 4))
    ok, spread = [], 0.0
    for c in range(4):
        cols = flow[:, PAIR_CLASS == c]
        k[:, c] = cols.mean(axis=1)
        s = float(np.max(cols.max(axis=1) - cols.min(axis=1)))
        spread = max(spread, s)
        ok.append(s <= tol)
    return LumpReport(k, ok, spread, tol)


# ---------------------------------------------------------------------------
# chain operator
# ---------------------------------------------------------------------------


def _oriented(kernel4: np.ndarray, d: int, i: int, j: int) -> np.ndarray:
    """Pair kernel as a (d,d,d,d) tensor with the higher qubit first."""
    t = kernel4.reshape(d, d, d, d)
    if i < j:
        t = t.transpose(1, 0, 3, 2)
    return t


@dataclass
class ChainOperator:
    """Matrix-free ``M = (1/L) sum_pairs M_pair`` on the full or lumped space.

    Ordered pairs acting on the same two qubits are merged into one tensor
    before application, which halves the work for symmetric pair sets.
    """

    n: int
    coupling: str
    kernel: PairKernel
    mode: str = "full"
    pairs: list = field(default_factory=list)
    lumped_kernel: np.ndarray | None = None

    def __post_init__(self):
        self.coupling = normalize_coupling(self.coupling)
        if self.mode not in ("full", "lumped"):
            raise DomainError(f"unknown chain mode {self.mode!r}")
        limit = MAX_FULL_QUBITS if self.mode == "full" else MAX_LUMPED_QUBITS
        if not 2 <= self.n <= limit:
            raise CapacityError(f"{self.mode} chain supports 2 <= n <= {limit}, got {self.n}")
        self.pairs = coupling_pairs(self.n, self.coupling)
        if self.mode == "lumped" and self.lumped_kernel is None:
            self.lumped_kernel = lump(self.kernel).kernel
        d = self.local_dim
        base = self.kernel.matrix if self.mode == "full" else self.lumped_kernel
        merged = {}
        for i, j in self.pairs:
            key = (max(i, j), min(i, j))
            merged[key] = merged.get(key, 0.0) + _oriented(base, d, i, j)
        L = len(self.pairs)
        self._terms = [(hi, lo, t / L) for (hi, lo), t in sorted(merged.items())]

    @property
    def L(self) -> int:
        return len(self.pairs)

    @property
    def local_dim(self) -> int:
        return 4 if self.mode == "full" else 2

    @property
    def dim(self) -> int:
        return self.local_dim**self.n

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Apply ``M`` to a vector (or to the columns of a ``(dim, m)`` block)."""
        v = np.asarray(v)
        d, n = self.local_dim, self.n
        extra = v.shape[1:]
        m = int(np.prod(extra)) if extra else 1
        out = np.zeros((self.dim, m), dtype=np.result_type(v, float))
        for hi, lo, t in self._terms:
            view = v.reshape(d ** (n - 1 - hi), d, d ** (hi - lo - 1), d, d**lo * m)
            ov = out.reshape(view.shape)
            ov += np.einsum("pqrs,arbsc->apbqc", t, view, optimize=True)
        return out.reshape(v.shape)

    def linear_operator(self) -> LinearOperator:
        return LinearOperator(
            (self.dim, self.dim), matvec=self.matvec, matmat=self.matvec, dtype=float
        )

    def dense(self) -> np.ndarray:
        if self.dim > 4**6:
            raise CapacityError(f"dense matrix of size {self.dim} exceeds 4096")
        return self.matvec(np.eye(self.dim))

    def ergodic(self) -> np.ndarray:
        return ergodic_dist(self.n).weights if self.mode == "full" else lumped_ergodic(self.n)

    def identity_vector(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[0] = 1.0
        return e


def chain_operator(kernel: PairKernel, n: int, coupling: str) -> ChainOperator:
    return ChainOperator(n, coupling, kernel, "full")


def lumped_chain(kernel: PairKernel, n: int, coupling: str) -> ChainOperator:
    return ChainOperator(n, coupling, kernel, "lumped")


# ---------------------------------------------------------------------------
# distributions and purity
# ---------------------------------------------------------------------------


def initial_dist_product_state(n: int) -> PauliWeightDist:
    """Weights of ``|0...0>``: 2^-n on every string built from I and Z."""
    if not 1 <= n <= MAX_FULL_QUBITS:
        raise CapacityError(f"full distribution supports n <= {MAX_FULL_QUBITS}")
    site = np.array([1.0, 0.0, 0.0, 1.0]) / 2.0
    w = np.ones(1)
    for _ in range(n):
        w = np.kron(site, w)
    return PauliWeightDist(n, w)


def ergodic_dist(n: int) -> PauliWeightDist:
    if not 1 <= n <= MAX_FULL_QUBITS:
        raise CapacityError(f"full distribution supports n <= {MAX_FULL_QUBITS}")
    w = np.full(4**n, (1.0 - 2.0**-n) / (4**n - 1))
    w[0] = 2.0**-n
    return PauliWeightDist(n, w)


def lumped_ergodic(n: int) -> np.ndarray:
    """Ergodic distribution projected onto support patterns."""
    size = np.array([bin(s).count("1") for s in range(2**n)])
    w = (1.0 - 2.0**-n) * 3.0**size / (4**n - 1)
    w[0] = 2.0**-n
    return w


def lump_dist(weights: np.ndarray, n: int) -> np.ndarray:
    """Sum full-space weights over support patterns."""
    t = np.asarray(weights).reshape((4,) * n)
    for axis in range(n):
        t = np.stack([t.take(0, axis=axis), t.take([1, 2, 3], axis=axis).sum(axis=axis)], axis=axis)
    return t.reshape(2**n)


def _check_even(n: int):
    if n % 2:
        raise DomainError(f"symmetric cut needs even n, got {n}")


def purity_from_dist(dist, n: int | None = None, lumped: bool = False) -> float:
    """Purity of the first n/2 qubits: ``2^(n/2) * sum of weights with identity on B``.

    B holds the high qubits, so the qualifying strings are exactly the first
    ``4^(n/2)`` (or ``2^(n/2)`` lumped) indices.
    """
    if isinstance(dist, PauliWeightDist):
        n, w = dist.n, dist.weights
    else:
        w = np.asarray(dist)
    _check_even(n)
    half = n // 2
    block = (2 if lumped else 4) ** half
    return float(2.0**half * w[:block].sum())


def evolve(op: ChainOperator, dist, t_max: int) -> np.ndarray:
    """Purity after 0..t_max steps of ``p <- M p``; returns an array of length t_max+1."""
    _check_even(op.n)
    w = dist.weights if isinstance(dist, PauliWeightDist) else np.asarray(dist, dtype=float)
    if w.shape != (op.dim,):
        raise DomainError(f"distribution of size {w.shape} does not match chain dim {op.dim}")
    lumped = op.mode == "lumped"
    out = np.empty(t_max + 1)
    out[0] = purity_from_dist(w, op.n, lumped)
    for t in range(1, t_max + 1):
        w = op.matvec(w)
        out[t] = purity_from_dist(w, op.n, lumped)
    return out


def initial_lumped_product_state(n: int) -> np.ndarray:
    """Support-pattern weights of ``|0...0>`` (2^-n on every pattern)."""
    return np.full(2**n, 2.0**-n)


# ---------------------------------------------------------------------------
# brute-force Pauli weights (oracle for small n)
# ---------------------------------------------------------------------------


def pauli_weights(state) -> PauliWeightDist:
    """Exact ``p_alpha = <psi|P_alpha|psi>^2 / 2^n`` by direct contraction (n <= 8)."""
    from .gatelib import PAULIS

    n = state.n
    if n > 8:
        raise CapacityError("brute-force Pauli weights limited to n <= 8")
    psi = state.amplitudes
    rho = np.outer(psi, psi.conj()).reshape((2,) * (2 * n))
    paulis = np.array(PAULIS)
    # ket axes come first (qubit n-1 leading), bra axes follow; each pass
    # contracts the leading remaining qubit with P[alpha][b, a]
    c = rho
    for k in range(n):
        c = np.tensordot(c, paulis, axes=([0, n - k], [2, 1]))
    # c now has one Pauli axis per qubit in the order qubit n-1, ..., 0
    coeffs = c.real.reshape(4**n)
    return PauliWeightDist(n, coeffs**2 / 2**n)


def kernel_report_json(kernel: PairKernel) -> str:
    return json.dumps({"kernel": kernel.to_dict(), "lump": lump(kernel).to_dict()}, indent=2)
