"""Eigenvalues, spectral gap and degeneracy profiles of chain operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .errors import CapacityError, ConvergenceError, DomainError, StructuralError
from .paulichain import ChainOperator

UNIT_TOL = 1e-8
DEGENERACY_TOL = 1e-8
MAX_DENSE = {"full": 4**6, "lumped": 2**12}


@dataclass
class SpectrumResult:
    """Leading eigenvalues sorted by decreasing magnitude.

    ``groups`` lists ``(value, multiplicity)`` clusters. When only the top
    ``k`` eigenvalues were computed the last cluster may be cut short, which
    ``complete`` records.
    """

    eigenvalues: np.ndarray
    groups: list
    unit_multiplicity: int
    method: str
    complete: bool = True
    deflated: bool = False
    max_residual: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return gap(self)

    def to_dict(self):
        return {
            "eigenvalues": [[float(v.real), float(v.imag)] for v in self.eigenvalues],
            "groups": [
                {"value": [float(v.real), float(v.imag)], "abs": float(abs(v)), "multiplicity": m}
                for v, m in self.groups
            ],
            "unit_multiplicity": self.unit_multiplicity,
            "method": self.method,
            "deflated": self.deflated,
            "max_residual": self.max_residual,
        }


def _sort_by_magnitude(ev: np.ndarray) -> np.ndarray:
    ev = np.asarray(ev, dtype=complex)
    # stable tie-break on the real part keeps conjugate pairs adjacent
    order = np.lexsort((-ev.imag, -ev.real, -np.round(np.abs(ev), 12)))
    return ev[order]


def group_eigenvalues(ev: np.ndarray, tol: float = DEGENERACY_TOL) -> list:
    """Cluster eigenvalues (sorted by magnitude) whose complex distance is below ``tol``."""
    groups = []
    used = np.zeros(len(ev), dtype=bool)
    for a in range(len(ev)):
        if used[a]:
            continue
        members = [b for b in range(a, len(ev)) if not used[b] and abs(ev[b] - ev[a]) < tol]
        used[members] = True
        groups.append((complex(np.mean(ev[members])), len(members)))
    return groups


def _result(ev, method, complete, deflated=False, residual=0.0, tol=DEGENERACY_TOL):
    ev = _sort_by_magnitude(ev)
    groups = group_eigenvalues(ev, tol)
    units = sum(m for v, m in groups if abs(v - 1.0) < UNIT_TOL)
    if deflated:
        units += 2
    return SpectrumResult(ev, groups, units, method, complete, deflated, residual)


def dense_spectrum(op: ChainOperator, tol: float = DEGENERACY_TOL) -> SpectrumResult:
    """All eigenvalues by dense nonsymmetric eigendecomposition."""
    if op.dim > MAX_DENSE[op.mode]:
        raise CapacityError(
            f"dense spectrum limited to dimension {MAX_DENSE[op.mode]} in {op.mode} mode"
        )
    ev = np.linalg.eigvals(op.dense())
    return _result(ev, "dense", True, tol=tol)


def deflated_operator(op: ChainOperator) -> LinearOperator:
    """``M`` restricted to the complement of its two unit eigenvectors.

    The left unit eigenvectors are the all-ones vector and the identity
    indicator, so ``v -> M (v - v_0 e_0 - (sum_{k>0} v_k) u)`` with ``u`` the
    ergodic state on non-identity strings kills both unit modes and leaves the
    rest of the spectrum unchanged.
    """
    u = op.ergodic().copy()
    u[0] = 0.0
    u /= u.sum()

    def mv(v):
        v = np.asarray(v).reshape(op.dim, -1)
        w = v - np.outer(u, v[1:].sum(axis=0))
        w[0] = 0.0
        return op.matvec(w)

    return LinearOperator((op.dim, op.dim), matvec=mv, matmat=mv, dtype=float)


def _arpack(lin, dim, k, tol, ncv, maxiter):
    v0 = np.random.default_rng(12345).random(dim)
    v0 = lin.matvec(v0) if getattr(lin, "projector", False) else v0
    try:
        vals, vecs = eigs(lin, k=k, which="LM", tol=tol, ncv=ncv, v0=v0,
                          maxiter=maxiter or 50 * dim)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"Arnoldi did not converge ({len(exc.eigenvalues)} of {k} eigenvalues)",
            residual=None,
        ) from exc
    res = 0.0
    for a in range(len(vals)):
        v = vecs[:, a]
        r = lin.matvec(v.real) + 1j * lin.matvec(v.imag) - vals[a] * v
        res = max(res, float(np.linalg.norm(r) / np.linalg.norm(v)))
    if res > max(1e3 * tol, 1e-8):
        raise ConvergenceError(f"Arnoldi residual {res:.3g} above tolerance", residual=res)
    return vals, vecs, res


def _locked_operator(lin, Q):
    """``(I - Q Q^T) M (I - Q Q^T)`` for an orthonormal invariant-subspace basis ``Q``.

    In the basis ``[Q, Q_perp]`` the operator is block upper triangular, so
    the compression keeps exactly the eigenvalues not yet locked (plus zeros).
    """
    def proj(v):
        return v - Q @ (Q.T @ v)

    def mv(v):
        v = np.asarray(v).reshape(lin.shape[0], -1)
        return proj(lin.matmat(proj(v)))

    out = LinearOperator(lin.shape, matvec=mv, matmat=mv, dtype=float)
    out.projector = True
    return out


def _extend_basis(Q, vecs):
    """Append the real span of ``vecs`` to the orthonormal basis ``Q``."""
    cols = np.column_stack([vecs.real, vecs.imag])
    if Q is not None:
        cols = cols - Q @ (Q.T @ cols)
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    keep = u[:, s > 1e-6 * max(s.max(initial=0.0), 1.0)]
    return keep if Q is None else np.column_stack([Q, keep])


def top_eigenvalues(
    op: ChainOperator,
    k: int = 6,
    tol: float = 1e-10,
    deflate: bool = False,
    ncv: int | None = None,
    maxiter: int | None = None,
    group_tol: float = DEGENERACY_TOL,
    lock: bool = True,
    max_rounds: int = 30,
) -> SpectrumResult:
    """``k`` largest-magnitude eigenvalues via implicitly restarted Arnoldi (ARPACK).

    A single-vector Krylov space sees one direction per eigenspace, so
    repeated eigenvalues are only found by round-off. With ``lock`` the
    eigenvectors found so far are locked (Schur deflation) and Arnoldi is
    rerun on the compressed operator until no further eigenvalue enters the
    top ``k``; multiplicities are then exact up to ``group_tol``.
    """
    if not 1 <= k <= 12:
        raise DomainError("top_eigenvalues supports 1 <= k <= 12")
    if k >= op.dim - 1:
        return dense_spectrum(op, group_tol)
    lin = deflated_operator(op) if deflate else op.linear_operator()
    ncv = ncv or min(op.dim, max(4 * k + 1, 40))
    vals, vecs, res = _arpack(lin, op.dim, k, tol, ncv, maxiter)
    if not lock:
        return _result(vals, "arnoldi", False, deflate, res, group_tol)
    found = list(vals)
    Q = _extend_basis(None, vecs)
    for _ in range(max_rounds):
        kth = np.sort(np.abs(found))[::-1][k - 1]
        if Q.shape[1] >= op.dim - ncv - 1:
            break
        new, nvecs, r = _arpack(_locked_operator(lin, Q), op.dim, k, tol, ncv, maxiter)
        res = max(res, r)
        if np.max(np.abs(new)) < kth - group_tol:
            break
        # only values that can still enter the top k are kept
        take = np.abs(new) >= kth - group_tol
        found.extend(new[take])
        Q = _extend_basis(Q, nvecs[:, take])
    else:
        raise ConvergenceError(f"eigenvalue locking did not settle in {max_rounds} rounds",
                               residual=res)
    top = _sort_by_magnitude(np.array(found))[:k]
    return _result(top, "arnoldi-locked", False, deflate, res, group_tol)


def gap(spec: SpectrumResult) -> float:
    """``1 - |largest non-unit eigenvalue|``; requires exactly two unit eigenvalues."""
    if spec.unit_multiplicity != 2:
        raise StructuralError(
            f"expected exactly two unit eigenvalues, found {spec.unit_multiplicity}"
        )
    rest = [v for v, m in spec.groups if abs(v - 1.0) >= UNIT_TOL]
    if not rest:
        raise StructuralError("no non-unit eigenvalue available")
    return float(1.0 - abs(rest[0]))


def nontrivial_groups(spec: SpectrumResult) -> list:
    """Eigenvalue clusters with the unit eigenvalues removed.

    A trailing cluster of a truncated (``complete=False``) spectrum is dropped
    because its multiplicity may be undercounted.
    """
    groups = [(v, m) for v, m in spec.groups if abs(v - 1.0) >= UNIT_TOL]
    if not spec.complete and groups:
        groups = groups[:-1]
    return groups


def degeneracy_profile(spec: SpectrumResult, count: int = 3, tol: float | None = None) -> list:
    """Multiplicities of the first ``count`` nontrivial eigenvalues (unit pair excluded)."""
    if tol is not None:
        regrouped = _result(spec.eigenvalues, spec.method, spec.complete, spec.deflated,
                            spec.max_residual, tol)
        regrouped.unit_multiplicity = spec.unit_multiplicity
        spec = regrouped
    return nontrivial_groups(spec)[:count]


def chain_gap(op: ChainOperator, k: int = 4, tol: float = 1e-12) -> float:
    """Gap from the undeflated operator (checks the two unit eigenvalues)."""
    if op.dim <= 256:
        return gap(dense_spectrum(op))
    return gap(top_eigenvalues(op, k=k, tol=tol))
