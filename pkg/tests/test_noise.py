import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nisqnet import qcore
from nisqnet.circuits import CNOT, DQNNSpec, Gate, identity_params, random_qaoa_spec
from nisqnet.noise import (
    DEFAULT_LAMBDA0,
    NOISELESS,
    NoiseModel,
    compile_noisy,
    depolarize,
    execute_noisy,
    sample_counts,
    superoperator,
)
from nisqnet.transpile import BasisCircuit, transpile_circuit


def _random_density(n, rng, rank=2):
    vecs = [qcore.sample_haar_state(n, rng) for _ in range(rank)]
    w = rng.dirichlet(np.ones(rank))
    return sum(p * qcore.projector(v) for p, v in zip(w, vecs))


def _depolarize_oracle(rho, lam, qubits):
    # Kraus form of the n-qubit depolarizing channel: (1 - lam) rho + lam * avg over Paulis
    paulis = [np.eye(2), qcore.X, qcore.Y, qcore.Z]
    n = qcore.num_qubits_of(rho.shape[0])
    k = len(qubits)
    avg = np.zeros_like(rho)
    for idx in np.ndindex(*(4,) * k):
        p = qcore.kron(*[paulis[i] for i in idx])
        full = qcore.embed_operator(p, qubits, n)
        avg = avg + full @ rho @ full.conj().T
    return (1 - lam) * rho + lam * avg / 4**k


def test_noise_model_probabilities():
    nm = NoiseModel(k=1.0)
    assert nm.probability("cnot") == 3.14e-2
    assert nm.probability("SX") == 1.18e-3
    assert nm.probability("rz") == 0.0
    assert NoiseModel(k=100).probability("cnot") == 1.0
    assert nm.scaled(0.5).probability("cnot") == pytest.approx(1.57e-2)
    assert NOISELESS.probability("cnot") == 0.0
    assert DEFAULT_LAMBDA0 == {"cnot": 3.14e-2, "sx": 1.18e-3, "rz": 0.0}
    with pytest.raises(ValueError):
        NoiseModel(k=-1)
    with pytest.raises(ValueError):
        NoiseModel({"cnot": 0.1, "sx": 0.1})
    with pytest.raises(ValueError):
        NoiseModel({"cnot": 1.5, "sx": 0.1, "rz": 0})


def test_depolarize_examples():
    rho = qcore.projector(qcore.ket("0"))
    assert np.array_equal(depolarize(rho, 0, [0]), rho)
    assert np.allclose(depolarize(rho, 0.5, [0]), np.diag([0.75, 0.25]))
    rho = _random_density(3, qcore.make_rng(1))
    assert np.allclose(depolarize(rho, 1, [0, 1, 2]), np.eye(8) / 8)
    with pytest.raises(ValueError):
        depolarize(rho, 1.2, [0])


@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.sampled_from([[0], [2], [1, 0], [0, 2]]))
@settings(max_examples=40, deadline=None)
def test_depolarize_matches_pauli_twirl(seed, lam, qubits):
    rho = _random_density(3, qcore.make_rng(seed))
    assert np.allclose(depolarize(rho, lam, qubits), _depolarize_oracle(rho, lam, qubits), atol=1e-13)


def test_depolarize_trace_preservation_1000_applications():
    rng = qcore.make_rng(2)
    rho = _random_density(3, rng)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(1, 3))
        qubits = [int(q) for q in rng.choice(3, k, replace=False)]
        rho = depolarize(rho, float(rng.uniform()), qubits)
        worst = max(worst, abs(np.trace(rho) - 1))
    assert worst <= 1e-12
    qcore.check_density(rho)


def test_depolarize_composition_law():
    rng = qcore.make_rng(3)
    worst = 0.0
    for _ in range(200):
        rho = _random_density(2, rng)
        l1, l2 = rng.uniform(size=2)
        qubits = [[0], [1], [0, 1]][int(rng.integers(3))]
        two = depolarize(depolarize(rho, l1, qubits), l2, qubits)
        one = depolarize(rho, 1 - (1 - l1) * (1 - l2), qubits)
        worst = max(worst, float(np.max(np.abs(two - one))))
    assert worst <= 1e-12


def test_depolarize_batch_shape():
    rng = qcore.make_rng(4)
    stack = np.array([_random_density(2, rng) for _ in range(3)])
    out = depolarize(stack, 0.3, [1])
    for a, b in zip(out, stack):
        assert np.allclose(a, depolarize(b, 0.3, [1]))


def test_execute_noisy_examples():
    rng = qcore.make_rng(5)
    c = DQNNSpec((1, 1)).build(rng.uniform(0, 6, 9))
    bc = transpile_circuit(c)
    rho0 = _random_density(2, rng)
    u = c.unitary()
    assert np.max(np.abs(execute_noisy(bc, NOISELESS, rho0) - u @ rho0 @ u.conj().T)) < 1e-12
    lam = 3.14e-2
    one = BasisCircuit(2, [Gate(CNOT, (0, 1))])
    rho = qcore.projector(qcore.ket("00"))
    want = (1 - lam) * rho + lam * np.eye(4) / 4
    assert np.allclose(execute_noisy(one, NoiseModel(k=1), rho), want, atol=1e-15)


def test_identity_network_still_adds_noise():
    spec = DQNNSpec((2, 2))
    bc = transpile_circuit(spec.build(identity_params(spec)))
    psi = qcore.sample_haar_state(2, qcore.make_rng(6))
    rho0 = qcore.projector(np.kron(psi, qcore.ket("00")))
    out = qcore.partial_trace(execute_noisy(bc, NoiseModel(k=1), rho0), [0, 1])
    assert qcore.fidelity(psi, out) < 1 - 1e-3
    ideal = qcore.partial_trace(execute_noisy(bc, NOISELESS, rho0), [0, 1])
    assert abs(qcore.fidelity(psi, ideal) - 1) < 1e-10


@pytest.mark.parametrize("k", [0.0, 1.0, 3.0])
def test_fused_program_matches_literal_execution(k):
    rng = qcore.make_rng(7)
    spec = random_qaoa_spec(2, 3, rng)
    nm = NoiseModel({"cnot": 3.14e-2, "sx": 1.18e-3, "rz": 2e-3}, k)
    bc = transpile_circuit(spec.build(rng.uniform(-1, 1, 6)))
    rho0 = _random_density(2, rng)
    prog = compile_noisy(bc, nm)
    assert np.max(np.abs(prog.run(rho0) - execute_noisy(bc, nm, rho0))) < 1e-13
    vec = superoperator(bc, nm) @ rho0.reshape(-1)
    assert np.max(np.abs(vec.reshape(4, 4) - prog.run(rho0))) < 1e-13


def test_adjoint_run_is_heisenberg_dual():
    rng = qcore.make_rng(8)
    spec = DQNNSpec((1, 1))
    bc = transpile_circuit(spec.build(rng.uniform(0, 6, 9)))
    prog = compile_noisy(bc, NoiseModel(k=2))
    rho = _random_density(2, rng)
    obs = qcore.sample_gue(4, rng)
    lhs = np.trace(obs @ prog.run(rho))
    rhs = np.trace(prog.adjoint_run(obs) @ rho)
    assert abs(lhs - rhs) < 1e-13


def test_sample_counts():
    rng = qcore.make_rng(9)
    rho = qcore.projector(qcore.ket("000"))
    assert sample_counts(rho, 100, rng) == {"000": 100}
    counts = sample_counts(np.eye(2) / 2, 100_000, rng)
    sigma = np.sqrt(100_000 * 0.25)
    assert abs(counts["0"] - 50_000) <= 3 * sigma
    a = sample_counts(np.eye(4) / 4, 1000, qcore.make_rng(10))
    b = sample_counts(np.eye(4) / 4, 1000, qcore.make_rng(10))
    assert a == b
    # qubit 0 is the first character
    rho = qcore.projector(qcore.ket("10"))
    assert sample_counts(rho, 5, rng) == {"10": 5}
