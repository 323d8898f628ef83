import numpy as np
import pytest

from nisqnet import qcore
from nisqnet.circuits import CNOT, H, Circuit, DQNNSpec, identity_params, random_qaoa_spec
from nisqnet.measure import (
    CostEvaluator,
    Exact,
    Noisy,
    Sampled,
    append_swap_test,
    cost,
    estimate_fidelity_from_counts,
    full_basis_circuit,
    full_circuit,
    full_circuit_fidelity,
    parity_fidelity_expectation,
)
from nisqnet.noise import NOISELESS, NoiseModel
from nisqnet.transpile import reconstruction_residual, transpile_circuit


def _pairs(rng, m, n, v=None):
    v = np.eye(2**m) if v is None else v
    return [(x, v @ x) for x in (qcore.sample_haar_state(m, rng) for _ in range(n))]


def _swap_tested(phi, psi):
    m = qcore.num_qubits_of(phi.shape[0])
    c = append_swap_test(Circuit(2 * m), range(m), range(m, 2 * m))
    state = c.unitary() @ np.kron(phi, psi)
    return qcore.projector(state)


def test_append_swap_test_structure():
    c = append_swap_test(Circuit(2), [0], [1])
    assert [(g.kind, g.qubits) for g in c.gates] == [(CNOT, (0, 1)), (H, (0,))]
    c = append_swap_test(Circuit(4), [0, 1], [2, 3])
    assert c.counts() == {CNOT: 2, H: 2}
    with pytest.raises(ValueError):
        append_swap_test(Circuit(4), [0, 1], [1, 2])


def test_swap_test_fragment_basis_counts():
    c = append_swap_test(Circuit(4), [0, 1], [2, 3])
    assert transpile_circuit(c).counts[CNOT] == 2


def test_parity_expectation_examples():
    assert abs(parity_fidelity_expectation(_swap_tested(qcore.ket("00"), qcore.ket("00")), [0, 1], [2, 3]) - 1) < 1e-12
    assert abs(parity_fidelity_expectation(_swap_tested(qcore.ket("0"), qcore.ket("1")), [0], [1])) < 1e-12
    rng = qcore.make_rng(0)
    for _ in range(20):
        phi, psi = qcore.sample_haar_state(2, rng), qcore.sample_haar_state(2, rng)
        f = parity_fidelity_expectation(_swap_tested(phi, psi), [0, 1], [2, 3])
        assert abs(f - abs(np.vdot(phi, psi)) ** 2) < 1e-10


def test_parity_expectation_mixed_states():
    # for mixed inputs the parity gives Tr(rho sigma)
    rng = qcore.make_rng(1)
    a = sum(w * qcore.projector(qcore.sample_haar_state(1, rng)) for w in (0.3, 0.7))
    b = sum(w * qcore.projector(qcore.sample_haar_state(1, rng)) for w in (0.6, 0.4))
    c = append_swap_test(Circuit(2), [0], [1]).unitary()
    final = c @ np.kron(a, b) @ c.conj().T
    assert abs(parity_fidelity_expectation(final, [0], [1]) - np.trace(a @ b).real) < 1e-12


def test_estimator_examples():
    assert estimate_fidelity_from_counts({"0000": 50}, [0, 1], [2, 3]) == 1
    assert estimate_fidelity_from_counts({"00": 1, "11": 1}, [0], [1]) == 0
    assert estimate_fidelity_from_counts({"11": 3, "01": 1}, [0], [1]) == -0.5
    with pytest.raises(ValueError):
        estimate_fidelity_from_counts({}, [0], [1])


def test_sampled_estimator_statistics_f09():
    # a pair of one-qubit states with overlap 0.9 run through the sampled backend
    rng = qcore.make_rng(2)
    phi = qcore.ket("0")
    theta = 2 * np.arccos(np.sqrt(0.9))
    psi = np.array([np.cos(theta / 2), np.sin(theta / 2)], dtype=complex)
    final = _swap_tested(phi, psi)
    from nisqnet.noise import sample_counts

    bound = 3 * np.sqrt((1 - 0.81) / 8192)
    hits = 0
    for _ in range(1000):
        est = estimate_fidelity_from_counts(sample_counts(final, 8192, rng), [0], [1])
        hits += abs(est - 0.9) <= bound
    assert hits >= 990


def test_cost_exact_examples():
    rng = qcore.make_rng(3)
    spec = DQNNSpec((2, 2))
    pairs = _pairs(rng, 2, 4)
    rep = cost(spec, identity_params(spec), pairs, Exact())
    assert abs(rep.value - 1) < 1e-10 and rep.mode == "exact"
    rep = cost(spec, identity_params(spec), pairs, Noisy(NoiseModel(k=1)))
    assert rep.value < 1 and rep.mode == "expectation"
    # random parameters: mean of independent brute-force fidelities
    v = qcore.sample_haar_unitary(4, rng)
    pairs = _pairs(rng, 2, 4, v)
    p = rng.uniform(0, 2 * np.pi, 24)
    u = spec.build(p).unitary()
    want = []
    for x, y in pairs:
        out = qcore.projector(u @ np.kron(x, qcore.ket("00")))
        want.append(qcore.fidelity(y, qcore.partial_trace(out, [0, 1])))
    rep = cost(spec, p, pairs, Exact())
    assert abs(rep.value - np.mean(want)) < 1e-12
    assert np.allclose(rep.per_pair, want, atol=1e-12)


@pytest.mark.parametrize("net", ["dqnn", "qaoa", "dqnn232"])
@pytest.mark.parametrize("k", [0.0, 1.0, 2.5])
def test_factorized_cost_matches_full_circuit(net, k):
    rng = qcore.make_rng(4)
    if net == "dqnn":
        spec = DQNNSpec((2, 2))
    elif net == "dqnn232":
        spec = DQNNSpec((2, 3, 2))
    else:
        spec = random_qaoa_spec(2, 8, rng)
    nm = NoiseModel(k=k)
    v = qcore.sample_haar_unitary(4, rng)
    pairs = _pairs(rng, 2, 2, v)
    p = rng.uniform(-1, 1, spec.num_params)
    fast = CostEvaluator(spec, pairs, Noisy(nm)).per_pair(p)
    slow = [full_circuit_fidelity(spec, p, x, y, nm) for x, y in pairs]
    assert np.max(np.abs(fast - slow)) < 1e-12
    if k == 0:
        exact = CostEvaluator(spec, pairs, Exact()).per_pair(p)
        assert np.max(np.abs(exact - slow)) < 1e-10


def test_full_basis_circuit_reconstructs_full_circuit():
    rng = qcore.make_rng(5)
    spec = DQNNSpec((2, 2))
    p = rng.uniform(0, 6, 24)
    x, y = qcore.sample_haar_state(2, rng), qcore.sample_haar_state(2, rng)
    bc = full_basis_circuit(spec, p, x, y)
    assert bc.counts[CNOT] == 16
    assert reconstruction_residual(full_circuit(spec, p, x, y), bc) < 1e-8


@pytest.mark.parametrize("backend", [Exact(), Noisy(NoiseModel(k=1.0))])
def test_single_gate_updates_match_full_evaluation(backend):
    rng = qcore.make_rng(6)
    for spec in (DQNNSpec((2, 2)), random_qaoa_spec(2, 8, rng)):
        pairs = _pairs(rng, 2, 3, qcore.sample_haar_unitary(4, rng))
        ev = CostEvaluator(spec, pairs, backend)
        p = rng.uniform(-1, 1, spec.num_params)
        ev.value(p)
        for k in range(spec.num_params):
            q = p.copy()
            q[k] += 0.05
            cached = ev.value(q)
            fresh = CostEvaluator(spec, pairs, backend).value(q)
            assert abs(cached - fresh) < 1e-13


def test_noisy_rz_falls_back_to_full_simulation():
    rng = qcore.make_rng(7)
    spec = DQNNSpec((2, 2))
    nm = NoiseModel({"cnot": 3e-2, "sx": 1e-3, "rz": 5e-3}, 1.0)
    pairs = _pairs(rng, 2, 2, qcore.sample_haar_unitary(4, rng))
    ev = CostEvaluator(spec, pairs, Noisy(nm))
    p = rng.uniform(0, 6, 24)
    ev.value(p)
    q = p.copy()
    q[5] += 0.1
    slow = np.mean([full_circuit_fidelity(spec, q, x, y, nm) for x, y in pairs])
    assert abs(ev.value(q) - slow) < 1e-12


def test_sampled_backend_tracks_expectation_and_is_reproducible():
    rng = qcore.make_rng(8)
    spec = random_qaoa_spec(2, 8, rng)
    pairs = _pairs(rng, 2, 4, qcore.sample_haar_unitary(4, rng))
    p = rng.uniform(-1, 1, 16)
    nm = NoiseModel(k=1)
    exp = cost(spec, p, pairs, Noisy(nm))
    s1 = cost(spec, p, pairs, Sampled(nm, 8192, qcore.make_rng(1)))
    s2 = cost(spec, p, pairs, Sampled(nm, 8192, qcore.make_rng(1)))
    assert s1 == s2 and s1.mode == "sampled(8192)"
    assert abs(s1.value - exp.value) < 0.03
    assert all(0 <= f <= 1 for f in s1.per_pair)


def test_cost_validation():
    spec = DQNNSpec((2, 2))
    with pytest.raises(ValueError):
        cost(spec, np.zeros(24), [], Exact())
    with pytest.raises(ValueError):
        cost(spec, np.zeros(24), [(qcore.ket("0"), qcore.ket("0"))], Exact())
    with pytest.raises(ValueError):
        cost(spec, np.zeros(23), [(qcore.ket("00"), qcore.ket("00"))], Exact())
    with pytest.raises(ValueError):
        Sampled(NOISELESS, 0)
