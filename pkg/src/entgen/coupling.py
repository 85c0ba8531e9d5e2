"""Ordered qubit-pair sets for the three coupling topologies.

Both the Monte Carlo protocol and the Markov chain draw from these lists, so
the two descriptions always average over the same pairs.
"""

from __future__ import annotations

from .errors import DomainError

COUPLINGS = ("random", "nnpbc", "nnobc")


def normalize_coupling(name: str) -> str:
    key = name.strip().lower().replace("-", "").replace("_", "")
    aliases = {"ran": "random", "randomij": "random", "ranij": "random"}
    key = aliases.get(key, key)
    if key not in COUPLINGS:
        raise DomainError(f"unknown coupling {name!r}; expected one of {COUPLINGS}")
    return key


def coupling_pairs(n: int, coupling: str) -> list[tuple[int, int]]:
    """All ordered pairs ``(i, j)`` a gate may act on.

    ``random`` gives the n(n-1) ordered pairs, ``nnpbc`` the 2n pairs
    ``(i, i+1 mod n)`` and ``(i+1 mod n, i)``, ``nnobc`` the 2(n-1) pairs
    without the wrap-around bond.
    """
    coupling = normalize_coupling(coupling)
    if n < 2:
        raise DomainError("need at least two qubits to couple")
    if coupling == "random":
        return [(i, j) for i in range(n) for j in range(n) if i != j]
    bonds = n if coupling == "nnpbc" else n - 1
    pairs = []
    for i in range(bonds):
        k = (i + 1) % n
        pairs.append((i, k))
        pairs.append((k, i))
    return pairs
