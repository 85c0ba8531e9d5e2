import numpy as np
import pytest

from conftest import dense_two_qubit
from entgen.coupling import coupling_pairs
from entgen.entmeas import asymptotic_purity, purity
from entgen.errors import CapacityError, DomainError
from entgen.gatelib import named_gate, parse_gate_spec
from entgen.paulichain import chain_operator, evolve, initial_dist_product_state, kernel_for_gate
from entgen.protocol import (
    EnsembleTrace,
    ProtocolConfig,
    choose_pair,
    protocol_step,
    run_protocol,
    split_config,
)
from entgen.qsim import RngStream, haar_from_gaussian, init_basis_state


def test_config_validation():
    with pytest.raises(DomainError):
        ProtocolConfig(n=5)
    with pytest.raises(CapacityError):
        ProtocolConfig(n=26)
    with pytest.raises(DomainError):
        ProtocolConfig(n=4, measures=("purity", "bogus"))
    with pytest.raises(DomainError):
        ProtocolConfig(n=4, coupling="star")
    assert list(ProtocolConfig(n=4, steps=10, record_every=4).record_times()) == [0, 4, 8, 10]


@pytest.mark.parametrize("c", ["random", "nnpbc", "nnobc"])
def test_choose_pair_uniform(c):
    n = 5
    pairs = coupling_pairs(n, c)
    rng = RngStream(3, 0)
    counts = {p: 0 for p in pairs}
    draws = 20_000
    for _ in range(draws):
        counts[choose_pair(c, n, rng)] += 1
    freq = np.array(list(counts.values())) / draws
    p = 1 / len(pairs)
    assert np.abs(freq - p).max() < 4 * np.sqrt(p * (1 - p) / draws)


def test_t0_trace_is_product_state():
    tr = run_protocol(ProtocolConfig(n=6, steps=0, replicas=5, measures=("purity", "entropy")))
    assert tr.purity_samples.shape == (5, 1)
    assert np.all(tr.purity_samples == 1.0)
    assert np.allclose(tr.entropy_samples, 0, atol=1e-12)


def test_swap_keeps_product_state():
    # SWAP followed by local unitaries never entangles
    tr = run_protocol(ProtocolConfig(n=6, gate="swap", steps=30, replicas=8))
    assert np.abs(tr.purity_samples - 1).max() < 1e-12


def test_identity_gate_keeps_product_state():
    tr = run_protocol(ProtocolConfig(n=4, gate="identity", steps=20, replicas=4,
                                     measures=("purity", "entropy")))
    assert np.abs(tr.purity_samples - 1).max() < 1e-12


def test_first_step_cnot_from_zero_state():
    # CNOT acts trivially on |00>, so the first step cannot entangle
    tr = run_protocol(ProtocolConfig(n=4, gate="cnot", steps=1, replicas=20))
    assert np.abs(tr.purity_samples[:, 1] - 1).max() < 1e-12


def test_protocol_step_matches_dense_oracle():
    n, seed, stream = 4, 11, 2
    state = init_basis_state(n, 0)
    out = protocol_step(state, "xy", "random", RngStream(seed, stream))
    # redo the draws by hand: pair index, then two Haar single-qubit unitaries
    rng = RngStream(seed, stream)
    pairs = coupling_pairs(n, "random")
    i, j = pairs[rng.integers(len(pairs))]
    v = haar_from_gaussian(rng.complex_normal((2, 2, 2)))
    u = np.kron(v[0], v[1]) @ named_gate("xy").matrix
    want = dense_two_qubit(n, i, j, u) @ state.amplitudes
    assert np.abs(out.amplitudes - want).max() < 1e-13


@pytest.mark.parametrize("gate", ["xy", "u4"])
def test_batched_run_matches_single_steps(gate):
    cfg = ProtocolConfig(n=4, gate=gate, steps=6, replicas=3, seed=5, first_stream=7)
    tr = run_protocol(cfg, batch_size=2)
    for r in range(3):
        rng = RngStream(5, 7 + r)
        s = init_basis_state(4, 0)
        for t in range(1, 7):
            s = protocol_step(s, parse_gate_spec(gate), "random", rng)
            assert tr.purity_samples[r, t] == pytest.approx(purity(s), abs=1e-12)


def test_determinism_and_batch_independence():
    cfg = ProtocolConfig(n=6, steps=12, replicas=7, seed=42, measures=("purity", "entropy"))
    a = run_protocol(cfg)
    b = run_protocol(cfg, batch_size=3)
    c = run_protocol(ProtocolConfig(n=6, steps=12, replicas=7, seed=42, threads=1,
                                    measures=("purity", "entropy")), batch_size=1)
    assert np.array_equal(a.purity_samples, b.purity_samples)
    assert np.array_equal(a.purity_samples, c.purity_samples)
    assert np.array_equal(a.entropy_samples, c.entropy_samples)
    d = run_protocol(ProtocolConfig(n=6, steps=12, replicas=7, seed=43))
    assert not np.array_equal(a.purity_samples, d.purity_samples)


def test_merge_of_split_runs_is_exact():
    cfg = ProtocolConfig(n=6, gate="cnot", steps=15, replicas=10, seed=9,
                         measures=("purity", "schmidt"))
    whole = run_protocol(cfg)
    first, rest = split_config(cfg, 4)
    merged = run_protocol(first).merge(run_protocol(rest))
    assert np.array_equal(whole.purity_samples, merged.purity_samples)
    assert np.array_equal(whole.mu2_samples, merged.mu2_samples)
    assert np.array_equal(whole.purity_mean, merged.purity_mean)
    assert np.array_equal(whole.purity_se, merged.purity_se)
    assert merged.config["replicas"] == 10


def test_merge_rejects_mismatched_traces():
    a = EnsembleTrace(4, np.ones((2, 3)))
    with pytest.raises(DomainError):
        a.merge(EnsembleTrace(4, np.ones((2, 4))))


def test_schmidt_samples_consistent_with_purity():
    tr = run_protocol(ProtocolConfig(n=6, steps=10, replicas=5, measures=("purity", "schmidt")))
    assert tr.mu2_samples.shape == (5, 11, 8)
    assert np.allclose(tr.mu2_samples.sum(axis=-1), 1, atol=1e-12)
    assert np.allclose((tr.mu2_samples**2).sum(axis=-1), tr.purity_samples, atol=1e-12)


@pytest.mark.parametrize("gate,coupling", [("xy", "random"), ("cnot", "nnobc")])
def test_mc_matches_chain_small_n(gate, coupling):
    n, T = 4, 25
    tr = run_protocol(ProtocolConfig(n=n, gate=gate, coupling=coupling, steps=T,
                                     replicas=1500, seed=1))
    exact = evolve(chain_operator(kernel_for_gate(parse_gate_spec(gate)), n, coupling),
                   initial_dist_product_state(n), T)
    z = np.abs(tr.purity_mean - exact) / np.maximum(tr.purity_se, 1e-12)
    assert np.mean(z[1:] < 3) >= 0.9
    assert np.abs(tr.purity_mean - exact).max() < 0.02


def test_u4_converges_to_random_state_purity():
    tr = run_protocol(ProtocolConfig(n=8, gate="u4", steps=150, replicas=300, seed=3,
                                     record_every=50))
    late = tr.purity_mean[-1]
    assert late == pytest.approx(asymptotic_purity(8), abs=4 * tr.purity_se[-1] + 1e-3)
    assert asymptotic_purity(8) == pytest.approx(32 / 257)
