"""Two-qubit gates: canonical form, named gates, local invariants, Clifford tables.

Pauli products on an ordered pair ``(i, j)`` are indexed by
``x = beta_j + 4 * beta_i`` with ``beta in {0: I, 1: X, 2: Y, 3: Z}`` and
represented as ``kron(sigma[beta_i], sigma[beta_j])`` (qubit ``i`` is the
high bit, matching :mod:`entgen.qsim`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SX, SY, SZ)
PAIR_PAULIS = np.array([np.kron(PAULIS[x // 4], PAULIS[x % 4]) for x in range(16)])

# Bell ("magic") basis, columns; w(a) is diagonal in it.
MAGIC = np.array(
    [[1, 1j, 0, 0], [0, 0, 1j, 1], [0, 0, 1j, -1], [1, -1j, 0, 0]], dtype=complex
) / np.sqrt(2)

CLIFFORD_TOL = 1e-8

_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CNOT_REV = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
_NAMED = {
    "cnot": _CNOT,
    "xy": np.array(
        [[1, 0, 0, 0], [0, 0, -1j, 0], [0, -1j, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
    "dcnot": _CNOT @ _CNOT_REV,
    "swap": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
    "identity": np.eye(4, dtype=complex),
}


@dataclass(frozen=True)
class CanonicalParams:
    ax: float
    ay: float
    az: float

    def as_tuple(self):
        return (self.ax, self.ay, self.az)


@dataclass
class TwoQubitGate:
    matrix: np.ndarray
    name: str | None = None
    params: CanonicalParams | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (4, 4):
            raise ValidationError(f"two-qubit gate must be 4x4, got {self.matrix.shape}")
        err = np.max(np.abs(self.matrix @ self.matrix.conj().T - np.eye(4)))
        if err > 1e-10:
            raise ValidationError(f"gate is not unitary (max deviation {err:.3g})")


@dataclass
class PauliConjugationTable:
    """``g P_x g^dagger = phase[x] * P_perm[x]`` for all 16 pair Paulis."""

    perm: tuple
    phase: tuple

    def __post_init__(self):
        if sorted(self.perm) != list(range(16)) or self.perm[0] != 0 or self.phase[0] != 1:
            raise ValidationError("invalid Pauli conjugation table")


def canonical_gate(p: CanonicalParams) -> TwoQubitGate:
    """``exp(i pi/4 (ax XX + ay YY + az ZZ))`` built in the magic basis."""
    ax, ay, az = p.as_tuple()
    # eigenvalues of (XX, YY, ZZ) on the magic basis columns
    signs = np.array([[1, -1, 1], [-1, 1, 1], [1, 1, -1], [-1, -1, -1]])
    phases = np.exp(0.25j * np.pi * (signs @ np.array([ax, ay, az], dtype=float)))
    return TwoQubitGate((MAGIC * phases) @ MAGIC.conj().T, params=p)


def named_gate(name: str) -> TwoQubitGate:
    key = name.lower()
    if key not in _NAMED:
        raise DomainError(f"unknown gate name {name!r}; expected one of {sorted(_NAMED)}")
    return TwoQubitGate(_NAMED[key].copy(), name=key)


def local_invariants(g) -> tuple[complex, float]:
    """Makhlin invariants ``(G1, G2)`` of a two-qubit unitary.

    With ``m = U_B^T U_B`` in the magic basis,
    ``G1 = tr(m)^2 / (16 det U)`` and ``G2 = (tr(m)^2 - tr(m^2)) / (4 det U)``.
    """
    u = g.matrix if isinstance(g, TwoQubitGate) else np.asarray(g, dtype=complex)
    if u.shape != (4, 4) or np.max(np.abs(u @ u.conj().T - np.eye(4))) > 1e-10:
        raise ValidationError("local invariants need a 4x4 unitary")
    ub = MAGIC.conj().T @ u @ MAGIC
    m = ub.T @ ub
    det = np.linalg.det(u)
    tr = np.trace(m)
    g1 = tr**2 / (16 * det)
    g2 = (tr**2 - np.trace(m @ m)) / (4 * det)
    return complex(g1), float(g2.real)


# ---------------------------------------------------------------------------
# reduction to the fundamental domain 1 >= ax >= ay >= az >= 0
# ---------------------------------------------------------------------------


@dataclass
class Reduction:
    params: CanonicalParams
    transcript: list = field(default_factory=list)
    # parity of applied complex conjugations / adjoints; odd means the
    # reduced gate matches the original only up to w -> w* (G1 -> conj(G1))
    conjugated: bool = False


_AXES = ("ax", "ay", "az")


def reduce_to_fundamental(p: CanonicalParams) -> Reduction:
    """Map canonical parameters into ``1 >= ax >= ay >= az >= 0``.

    Uses only the symmetry generators of the canonical form:

    * ``shift``: ``a_k -> a_k - 2m`` (multiplication by the local ``-i s^k s^k``)
    * ``reflect``: ``1 + a_k -> 1 - a_k`` (local conjugation of ``w*``)
    * ``swap``: exchange two coefficients (local pi/2 rotation on both qubits)

    Each transcript entry is ``(generator, axes, ...)``.
    """
    a = [float(v) for v in p.as_tuple()]
    transcript = []
    conj = False
    for k in range(3):
        m = np.floor(a[k] / 2.0)
        if m != 0:
            a[k] -= 2.0 * m
            transcript.append(("shift", _AXES[k], -2.0 * m))
        if a[k] > 1.0:
            a[k] = 2.0 - a[k]
            conj = not conj
            transcript.append(("reflect", _AXES[k]))
    # bubble sort into descending order with adjacent swaps
    for _ in range(2):
        for k in range(2):
            if a[k] < a[k + 1]:
                a[k], a[k + 1] = a[k + 1], a[k]
                transcript.append(("swap", _AXES[k], _AXES[k + 1]))
    return Reduction(CanonicalParams(*a), transcript, conj)


# ---------------------------------------------------------------------------
# Clifford detection
# ---------------------------------------------------------------------------


def pauli_coefficients(op: np.ndarray) -> np.ndarray:
    """Coefficients ``c_x`` of ``op = sum_x c_x P_x`` (pair Pauli basis)."""
    return np.einsum("xab,ba->x", PAIR_PAULIS, op) / 4.0


def pauli_conjugation_table(g, tol: float = CLIFFORD_TOL) -> PauliConjugationTable | None:
    """Signed permutation induced by ``P -> g P g^dagger``, or ``None``.

    Returns ``None`` when some image is not a single Pauli product times
    one of ``{+1, -1, +i, -i}``.
    """
    u = g.matrix if isinstance(g, TwoQubitGate) else np.asarray(g, dtype=complex)
    perm, phase = [], []
    for x in range(16):
        c = pauli_coefficients(u @ PAIR_PAULIS[x] @ u.conj().T)
        y = int(np.argmax(np.abs(c)))
        rest = np.delete(c, y)
        ph = c[y]
        allowed = np.array([1, -1, 1j, -1j])
        k = int(np.argmin(np.abs(allowed - ph)))
        if np.max(np.abs(rest), initial=0.0) > tol or abs(allowed[k] - ph) > tol:
            return None
        perm.append(y)
        phase.append(complex(allowed[k]))
    if sorted(perm) != list(range(16)):
        return None
    return PauliConjugationTable(tuple(perm), tuple(phase))


# ---------------------------------------------------------------------------
# gate spec grammar shared with the CLI
# ---------------------------------------------------------------------------

_CANON_RE = re.compile(r"^canonical:([^,]+),([^,]+),([^,]+)$")


@dataclass(frozen=True)
class GateSpec:
    """Parsed gate specification.

    ``kind`` is ``"named"``, ``"canonical"`` or ``"u4"`` (fresh Haar gate
    every step).
    """

    kind: str
    name: str | None = None
    params: CanonicalParams | None = None

    def gate(self) -> TwoQubitGate | None:
        if self.kind == "u4":
            return None
        if self.kind == "named":
            return named_gate(self.name)
        return canonical_gate(self.params)

    def label(self) -> str:
        if self.kind == "canonical":
            return "canonical:{:g},{:g},{:g}".format(*self.params.as_tuple())
        return self.name if self.kind == "named" else "u4"


def parse_gate_spec(text: str) -> GateSpec:
    """Parse ``cnot | xy | dcnot | swap | identity | u4 | canonical:ax,ay,az``."""
    s = text.strip().lower()
    if s == "u4":
        return GateSpec("u4")
    if s in _NAMED:
        return GateSpec("named", name=s)
    m = _CANON_RE.match(s)
    if m:
        try:
            vals = [float(v) for v in m.groups()]
        except ValueError:
            raise DomainError(f"bad canonical parameters in {text!r}") from None
        if not all(np.isfinite(vals)):
            raise DomainError(f"non-finite canonical parameters in {text!r}")
        return GateSpec("canonical", params=CanonicalParams(*vals))
    raise DomainError(
        f"invalid gate spec {text!r}; expected cnot|xy|dcnot|swap|identity|u4|canonical:ax,ay,az"
    )
