"""Monte Carlo simulation of the random two-qubit-gate protocol.

One step picks an ordered pair ``(i, j)`` uniformly from the coupling's pair
set, applies the fixed gate ``W`` on it and then fresh Haar single-qubit
unitaries on ``i`` and ``j`` (or one fresh Haar U(4) gate for the ``u4``
spec). Replica ``r`` draws from :class:`~entgen.qsim.RngStream`
``(seed, first_stream + r)``; per-step draws are made in a fixed order
(pair index, then gate randomness), so a replica's history depends only on
its stream id.

Replicas are simulated in batches. Per-replica samples are kept in the
trace, so statistics are a deterministic function of the concatenated
samples and merging runs over disjoint stream ranges reproduces a single
run bit for bit.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .coupling import coupling_pairs, normalize_coupling
from .entmeas import (
    amplitude_matrix,
    entropy_from_squares,
    schmidt_squares_batch,
)
from .errors import CapacityError, DomainError
from .gatelib import GateSpec, parse_gate_spec
from .qsim import (
    MAX_QUBITS,
    PureState,
    RngStream,
    apply_two_qubit,
    apply_two_qubit_batch,
    haar_from_gaussian,
)

MEASURES = ("purity", "entropy", "schmidt")
# amplitude budget per batch (complex doubles), ~64 MB
_BATCH_AMPLITUDES = 2**22


@dataclass
class ProtocolConfig:
    n: int
    gate: GateSpec | str = "xy"
    coupling: str = "random"
    steps: int = 50
    replicas: int = 1000
    seed: int = 0
    measures: tuple = ("purity",)
    first_stream: int = 0
    threads: int | None = None
    record_every: int = 1

    def __post_init__(self):
        if isinstance(self.gate, str):
            self.gate = parse_gate_spec(self.gate)
        self.coupling = normalize_coupling(self.coupling)
        self.measures = tuple(self.measures)
        bad = set(self.measures) - set(MEASURES)
        if bad:
            raise DomainError(f"unknown measures {sorted(bad)}")
        if not 2 <= self.n <= MAX_QUBITS:
            raise CapacityError(f"protocol supports 2 <= n <= {MAX_QUBITS}")
        if self.n % 2:
            raise DomainError("symmetric-cut measures need even n")
        if self.replicas < 1 or self.steps < 0:
            raise DomainError("need replicas >= 1 and steps >= 0")
        if self.record_every < 1:
            raise DomainError("record_every must be positive")

    def record_times(self) -> np.ndarray:
        t = list(range(0, self.steps + 1, self.record_every))
        if t[-1] != self.steps:
            t.append(self.steps)
        return np.array(t)

    def to_dict(self):
        return {
            "n": self.n,
            "gate": self.gate.label(),
            "coupling": self.coupling,
            "steps": self.steps,
            "replicas": self.replicas,
            "seed": self.seed,
            "measures": list(self.measures),
            "first_stream": self.first_stream,
            "record_every": self.record_every,
        }


def _se(samples: np.ndarray) -> np.ndarray:
    r = samples.shape[0]
    if r < 2:
        return np.zeros(samples.shape[1:])
    return samples.std(axis=0, ddof=1) / np.sqrt(r)


@dataclass
class EnsembleTrace:
    """Per-replica measurement samples, shape ``(R, len(times)[, K])``."""

    n: int
    purity_samples: np.ndarray
    entropy_samples: np.ndarray | None = None
    mu2_samples: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    times: np.ndarray | None = None

    def __post_init__(self):
        if self.times is None:
            self.times = np.arange(self.purity_samples.shape[1])

    @property
    def replicas(self) -> int:
        return self.purity_samples.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.times

    @property
    def purity_mean(self) -> np.ndarray:
        return self.purity_samples.mean(axis=0)

    @property
    def purity_se(self) -> np.ndarray:
        return _se(self.purity_samples)

    @property
    def entropy_mean(self):
        return None if self.entropy_samples is None else self.entropy_samples.mean(axis=0)

    @property
    def entropy_se(self):
        return None if self.entropy_samples is None else _se(self.entropy_samples)

    @property
    def mu2_mean(self):
        return None if self.mu2_samples is None else self.mu2_samples.mean(axis=0)

    def merge(self, other: "EnsembleTrace") -> "EnsembleTrace":
        """Concatenate replicas of two runs (``self``'s streams first)."""
        if self.n != other.n or not np.array_equal(self.times, other.times):
            raise DomainError("cannot merge traces of different shape")

        def cat(a, b):
            return None if a is None or b is None else np.concatenate([a, b])

        cfg = dict(self.config)
        if cfg:
            cfg["replicas"] = self.replicas + other.replicas
        return EnsembleTrace(
            self.n,
            cat(self.purity_samples, other.purity_samples),
            cat(self.entropy_samples, other.entropy_samples),
            cat(self.mu2_samples, other.mu2_samples),
            cfg,
            self.times.copy(),
        )


def choose_pair(coupling: str, n: int, rng: RngStream, pairs=None) -> tuple[int, int]:
    """Uniformly random ordered pair from the coupling's pair set."""
    if n < 2:
        raise DomainError("need at least two qubits")
    pairs = pairs or coupling_pairs(n, coupling)
    return pairs[rng.integers(len(pairs))]


def _draw_step(spec: GateSpec, rng: RngStream, pairs) -> tuple[int, np.ndarray]:
    """Pair index and raw Gaussian draws for one step, in the fixed draw order."""
    k = rng.integers(len(pairs))
    shape = (4, 4) if spec.kind == "u4" else (2, 2, 2)
    return k, rng.complex_normal(shape)


def _step_unitaries(spec: GateSpec, w: np.ndarray | None, z: np.ndarray) -> np.ndarray:
    """Per-replica 4x4 step unitaries from stacked Gaussian draws."""
    if spec.kind == "u4":
        return haar_from_gaussian(z)
    v = haar_from_gaussian(z)  # (B, 2, 2, 2): V_i, V_j
    vv = np.einsum("zab,zcd->zacbd", v[:, 0], v[:, 1]).reshape(-1, 4, 4)
    return vv @ w


def protocol_step(state: PureState, spec, coupling: str, rng: RngStream) -> PureState:
    """One protocol step on a single state."""
    if isinstance(spec, str):
        spec = parse_gate_spec(spec)
    pairs = coupling_pairs(state.n, coupling)
    k, z = _draw_step(spec, rng, pairs)
    g = spec.gate()
    u = _step_unitaries(spec, None if g is None else g.matrix, z[None])[0]
    i, j = pairs[k]
    return apply_two_qubit(state, i, j, u)


def _measure(amps, n, measures, out, t):
    need_svd = "entropy" in measures or "schmidt" in measures
    if need_svd:
        mu2 = schmidt_squares_batch(amps, n)
        out["purity"][:, t] = np.sum(mu2**2, axis=-1)
        if "entropy" in measures:
            out["entropy"][:, t] = entropy_from_squares(mu2)
        if "schmidt" in measures:
            out["schmidt"][:, t] = mu2
    else:
        m = amplitude_matrix(amps, n)
        rho = m @ np.conj(np.swapaxes(m, -1, -2))
        out["purity"][:, t] = np.sum(np.abs(rho) ** 2, axis=(-1, -2))


def _run_batch(cfg: ProtocolConfig, streams: range) -> dict:
    n, T, spec = cfg.n, cfg.steps, cfg.gate
    B = len(streams)
    pairs = coupling_pairs(n, cfg.coupling)
    g = spec.gate()
    w = None if g is None else g.matrix
    rngs = [RngStream(cfg.seed, s) for s in streams]
    N = 2 ** (n // 2)
    times = cfg.record_times()
    slot = {int(t): k for k, t in enumerate(times)}
    out = {"purity": np.empty((B, len(times)))}
    if "entropy" in cfg.measures:
        out["entropy"] = np.empty((B, len(times)))
    if "schmidt" in cfg.measures:
        out["schmidt"] = np.empty((B, len(times), N))
    amps = np.zeros((B, 2**n), dtype=complex)
    amps[:, 0] = 1.0
    _measure(amps, n, cfg.measures, out, 0)
    zshape = (4, 4) if spec.kind == "u4" else (2, 2, 2)
    ks = np.empty(B, dtype=np.int64)
    zs = np.empty((B,) + zshape, dtype=complex)
    for t in range(1, T + 1):
        for b, rng in enumerate(rngs):
            ks[b], zs[b] = _draw_step(spec, rng, pairs)
        us = _step_unitaries(spec, w, zs)
        for k in np.unique(ks):
            idx = np.flatnonzero(ks == k)
            i, j = pairs[k]
            if len(idx) == B:
                amps = apply_two_qubit_batch(amps, n, i, j, us)
            else:
                amps[idx] = apply_two_qubit_batch(amps[idx], n, i, j, us[idx])
        if t in slot:
            _measure(amps, n, cfg.measures, out, slot[t])
    return out


def run_protocol(cfg: ProtocolConfig, batch_size: int | None = None) -> EnsembleTrace:
    """Simulate ``cfg.replicas`` independent replicas and collect samples."""
    batch = batch_size or max(1, min(256, _BATCH_AMPLITUDES // 2**cfg.n))
    starts = range(cfg.first_stream, cfg.first_stream + cfg.replicas, batch)
    chunks = [range(s, min(s + batch, cfg.first_stream + cfg.replicas)) for s in starts]
    threads = cfg.threads or os.cpu_count() or 1
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _run_batch(cfg, c), chunks))
    else:
        parts = [_run_batch(cfg, c) for c in chunks]

    def cat(key):
        if key not in parts[0]:
            return None
        return np.concatenate([p[key] for p in parts])

    return EnsembleTrace(cfg.n, cat("purity"), cat("entropy"), cat("schmidt"), cfg.to_dict(),
                         cfg.record_times())


def split_config(cfg: ProtocolConfig, replicas: int) -> tuple[ProtocolConfig, ProtocolConfig]:
    """Two configs covering the first ``replicas`` streams and the rest."""
    a = replace(cfg, replicas=replicas)
    b = replace(cfg, replicas=cfg.replicas - replicas, first_stream=cfg.first_stream + replicas)
    return a, b
