"""Fidelity measurement through the destructive swap test, and the cost function.

Three backends evaluate the same cost, the mean output fidelity over a list
of ``(phi_in, phi_out)`` pairs:

* :class:`Exact` simulates the ideal network on pure states and reads off
  ``<phi_out|rho_out|phi_out>`` directly, with no state-preparation circuit.
* :class:`Noisy` runs the transpiled full circuit (state preparation, network,
  swap test) under depolarizing noise and returns the exact expectation of the
  swap-test parity.
* :class:`Sampled` does the same but draws a finite number of shots.

Full-circuit qubit layout: the first ``m`` qubits hold the reference register
prepared in ``phi_out``; the network follows, shifted by ``m``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import qcore
from .circuits import CNOT, Circuit, Gate, H, NetworkSpec, state_prep_circuit
from .noise import (
    NOISELESS,
    NoiseModel,
    compile_noisy,
    execute_noisy,
    sample_counts,
    superoperator,
)
from .transpile import BasisCircuit, lower_gate, transpile_circuit


@dataclass(frozen=True)
class Exact:
    mode = "exact"


@dataclass(frozen=True)
class Noisy:
    noise: NoiseModel = field(default_factory=NoiseModel)
    mode = "expectation"


@dataclass
class Sampled:
    noise: NoiseModel = field(default_factory=NoiseModel)
    shots: int = 8192
    rng: np.random.Generator = field(default_factory=lambda: qcore.make_rng(0))

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be positive")

    @property
    def mode(self) -> str:
        return f"sampled({self.shots})"


Backend = Exact | Noisy | Sampled


@dataclass(frozen=True)
class CostReport:
    value: float
    mode: str
    per_pair: tuple[float, ...]

    def as_dict(self) -> dict:
        return {"value": self.value, "mode": self.mode, "per_pair": list(self.per_pair)}


def _check_registers(reg_a: Sequence[int], reg_b: Sequence[int], n: int | None = None):
    reg_a, reg_b = [int(q) for q in reg_a], [int(q) for q in reg_b]
    if len(reg_a) != len(reg_b) or not reg_a:
        raise ValueError(f"registers differ in size: {reg_a} vs {reg_b}")
    both = reg_a + reg_b
    if len(set(both)) != len(both):
        raise ValueError(f"registers overlap: {reg_a} vs {reg_b}")
    if n is not None and any(q < 0 or q >= n for q in both):
        raise ValueError(f"register index outside {n} qubits")
    return reg_a, reg_b


def swap_test_gates(reg_a: Sequence[int], reg_b: Sequence[int]) -> list[Gate]:
    reg_a, reg_b = _check_registers(reg_a, reg_b)
    gates = []
    for a, b in zip(reg_a, reg_b):
        gates.append(Gate(CNOT, (a, b)))
        gates.append(Gate(H, (a,)))
    return gates


def append_swap_test(c: Circuit, reg_a: Sequence[int], reg_b: Sequence[int]) -> Circuit:
    """Copy of ``c`` with CNOT(a_i -> b_i), H(a_i) appended for every pair."""
    _check_registers(reg_a, reg_b, c.num_qubits)
    out = Circuit(c.num_qubits, list(c.gates))
    out.extend(swap_test_gates(reg_a, reg_b))
    return out


def parity_signs(n: int, reg_a: Sequence[int], reg_b: Sequence[int]) -> np.ndarray:
    """``prod_i (-1)^(x_i y_i)`` for every basis index of ``n`` qubits."""
    reg_a, reg_b = _check_registers(reg_a, reg_b, n)
    idx = np.arange(2**n)
    par = np.zeros(2**n, dtype=int)
    for a, b in zip(reg_a, reg_b):
        par ^= ((idx >> (n - 1 - a)) & 1) & ((idx >> (n - 1 - b)) & 1)
    return 1.0 - 2.0 * par


def parity_fidelity_expectation(
    rho_final: np.ndarray, reg_a: Sequence[int], reg_b: Sequence[int]
) -> float:
    """Expected swap-test parity of a state that already went through the test."""
    rho_final = np.asarray(rho_final)
    n = qcore.num_qubits_of(rho_final.shape[-1])
    probs = np.real(np.diagonal(rho_final, axis1=-2, axis2=-1))
    return float(probs @ parity_signs(n, reg_a, reg_b))


def estimate_fidelity_from_counts(
    counts: Mapping[str, int], reg_a: Sequence[int], reg_b: Sequence[int]
) -> float:
    """Shot average of the parity ``prod_i (-1)^(x_i y_i)``; bit 0 is qubit 0."""
    reg_a, reg_b = _check_registers(reg_a, reg_b)
    total = 0
    acc = 0
    for bits, c in counts.items():
        sign = 1
        for a, b in zip(reg_a, reg_b):
            if bits[a] == "1" and bits[b] == "1":
                sign = -sign
        acc += sign * c
        total += c
    if total <= 0:
        raise ValueError("no shots recorded")
    return acc / total


def _check_pairs(spec: NetworkSpec, pairs) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one (input, output) pair")
    phi_in = np.array([np.asarray(p[0], dtype=complex) for p in pairs])
    phi_out = np.array([np.asarray(p[1], dtype=complex) for p in pairs])
    if phi_in.shape[1:] != (spec.d,) or phi_out.shape[1:] != (spec.d,):
        raise ValueError(f"pair states must have length {spec.d}")
    return phi_in, phi_out


def _stage(gates: Sequence[Gate], qubits: Sequence[int], total: int) -> BasisCircuit:
    """Transpile ``gates`` (written on local qubits 0..k-1) and place them on ``qubits``."""
    bc = transpile_circuit(Circuit(len(qubits), list(gates)))
    return bc.remapped(list(qubits), total)


def _prep_stage(psi: np.ndarray, qubits: Sequence[int], total: int) -> BasisCircuit:
    return _stage(state_prep_circuit(psi, range(len(qubits))), qubits, total)


def _swap_stage(m: int) -> BasisCircuit:
    return transpile_circuit(Circuit(2 * m, swap_test_gates(range(m), range(m, 2 * m))))


def full_circuit(spec: NetworkSpec, params, phi_in, phi_out) -> Circuit:
    """Reference preparation, input preparation, network and swap test, unlowered."""
    m = spec.m
    total = m + spec.num_qubits
    c = Circuit(total)
    c.extend(state_prep_circuit(phi_out, range(m)))
    c.extend(state_prep_circuit(phi_in, [m + q for q in spec.input_qubits]))
    c.extend(g.shifted(m) for g in spec.build(params).gates)
    return append_swap_test(c, range(m), [m + q for q in spec.output_qubits])


def full_basis_circuit(spec: NetworkSpec, params, phi_in, phi_out) -> BasisCircuit:
    """Basis-gate form of :func:`full_circuit`.

    Each stage is transpiled on its own, so no gate merging crosses a stage
    boundary.
    """
    m = spec.m
    total = m + spec.num_qubits
    out = _prep_stage(phi_out, range(m), total)
    out = out + _prep_stage(phi_in, [m + q for q in spec.input_qubits], total)
    out = out + _stage(spec.build(params).gates, range(m, total), total)
    swap = _swap_stage(m)
    return out + swap.remapped(list(range(m)) + [m + q for q in spec.output_qubits], total)


def full_circuit_fidelity(
    spec: NetworkSpec, params, phi_in, phi_out, noise: NoiseModel = NOISELESS
) -> float:
    """Swap-test parity of the whole circuit, simulated gate by gate."""
    bc = full_basis_circuit(spec, params, phi_in, phi_out)
    rho0 = np.zeros((2**bc.num_qubits,) * 2, dtype=complex)
    rho0[0, 0] = 1
    rho = execute_noisy(bc, noise, rho0)
    m = spec.m
    return parity_fidelity_expectation(
        rho, range(m), [m + q for q in spec.output_qubits]
    )


def _noisy_prep(psi: np.ndarray, noise: NoiseModel) -> np.ndarray:
    m = qcore.num_qubits_of(psi.shape[0])
    bc = _prep_stage(psi, range(m), m)
    rho0 = np.zeros((2**m, 2**m), dtype=complex)
    rho0[0, 0] = 1
    return execute_noisy(bc, noise, rho0)


_CHANNELS: OrderedDict[tuple, np.ndarray] = OrderedDict()
_CHANNELS_MAX = 4096


def _gate_channel(gate: Gate, noise: NoiseModel) -> np.ndarray:
    """Superoperator of one gate's noisy lowering on its own qubits (LRU cached)."""
    key = (gate.key(), tuple(sorted(noise.lambda0.items())), noise.k)
    sop = _CHANNELS.get(key)
    if sop is not None:
        _CHANNELS.move_to_end(key)
        return sop
    lowered, _ = lower_gate(gate)
    k = len(gate.qubits)
    if gate.qubits != tuple(range(k)):
        local = {q: i for i, q in enumerate(gate.qubits)}
        lowered = [g.remapped(local) for g in lowered]
    bc = BasisCircuit(k, list(lowered))
    sop = superoperator(bc, noise)
    _CHANNELS[key] = sop
    if len(_CHANNELS) > _CHANNELS_MAX:
        _CHANNELS.popitem(last=False)
    return sop


class CostEvaluator:
    """Cost of one network on a fixed list of pairs, reusable across parameters.

    Everything that does not depend on the parameters is prepared once. In the
    noisy modes that is the noisy reference and input states and, for the
    expectation mode, one effective observable per pair,
    ``O_x = Tr_a[(rho_a x 1) S^dag(P)]``, where ``S^dag`` is the noisy swap
    test in the Heisenberg picture and ``P`` the parity observable. The
    fidelity of a network output ``sigma_x`` is then ``Tr(O_x sigma_x)``.

    The exact and expectation modes also keep, for the last fully evaluated
    parameter vector, the state before every network gate and the observable
    after it. A vector differing from that one in a single gate, as in a
    finite-difference gradient, is then scored by one local update. Noise
    channels on a gate's support commute with the gates elsewhere, so this is
    exact; it is only skipped when RZ gates are noisy, because RZ merging
    across gate boundaries then changes the channel.
    """

    def __init__(self, spec: NetworkSpec, pairs, backend: Backend):
        self.spec = spec
        self.backend = backend
        self.phi_in, self.phi_out = _check_pairs(spec, pairs)
        m, nq = spec.m, spec.num_qubits
        self._rest = [q for q in range(nq) if q not in spec.output_qubits]
        self._base: list[Gate] | None = None
        zeros = np.zeros(2 ** (nq - m))
        zeros[0] = 1
        # network inputs are its first m qubits
        assert spec.input_qubits == list(range(m))
        if isinstance(backend, Exact):
            self._psi0 = np.kron(self.phi_in, zeros)
            proj = np.einsum("ni,nj->nij", self.phi_out, self.phi_out.conj())
            self._final_obs = self._embed_output(proj)
            return
        if not isinstance(backend, (Noisy, Sampled)):
            raise TypeError(f"unknown backend {backend!r}")
        noise = backend.noise
        rho_a = np.array([_noisy_prep(p, noise) for p in self.phi_out])
        rho_in = np.array([_noisy_prep(p, noise) for p in self.phi_in])
        self._rho0 = np.array([np.kron(r, np.diag(zeros)) for r in rho_in])
        swap = compile_noisy(_swap_stage(m), noise)
        if isinstance(backend, Sampled):
            self._rho_a = rho_a
            self._swap = swap
            return
        d = spec.d
        signs = parity_signs(2 * m, range(m), range(m, 2 * m))
        q = swap.adjoint_run(np.diag(signs).astype(complex)).reshape(d, d, d, d)
        self._obs = np.einsum("nyx,xbyc->nbc", rho_a, q)
        self._final_obs = self._embed_output(self._obs)
        self._local = noise.probability("rz") == 0

    def _embed_output(self, obs: np.ndarray) -> np.ndarray:
        # obs on the output qubits, identity on the rest of the network
        nq = self.spec.num_qubits
        rest = np.eye(2 ** len(self._rest))
        full = np.einsum("nij,ab->naibj", obs, rest)
        full = full.reshape(len(obs), 2 ** nq, 2 ** nq)
        order = self._rest + list(self.spec.output_qubits)
        if order == list(range(nq)):
            return full
        inv = list(np.argsort(order))
        t = full.reshape((len(obs),) + (2,) * (2 * nq))
        t = t.transpose([0] + [1 + q for q in inv] + [1 + nq + q for q in inv])
        return t.reshape(len(obs), 2**nq, 2**nq)

    # per-gate steps of the exact and expectation modes

    def _channel(self, gate: Gate) -> np.ndarray:
        return _gate_channel(gate, self.backend.noise)

    def _forward(self, state: np.ndarray, gate: Gate) -> np.ndarray:
        if isinstance(self.backend, Exact):
            return qcore.apply_unitary_batch(state, gate.unitary(), gate.qubits)
        return qcore.apply_superoperator(state, self._channel(gate), gate.qubits)

    def _backward(self, obs: np.ndarray, gate: Gate) -> np.ndarray:
        if isinstance(self.backend, Exact):
            return qcore.conjugate_batch(obs, gate.unitary().conj().T, gate.qubits)
        sop = self._channel(gate)
        return qcore.apply_superoperator(obs, sop.conj().T, gate.qubits)

    def _score(self, obs: np.ndarray, state: np.ndarray) -> np.ndarray:
        if isinstance(self.backend, Exact):
            return np.real(np.einsum("ni,nij,nj->n", state.conj(), obs, state))
        return np.real(np.einsum("nij,nji->n", obs, state))

    def _rebuild(self, gates: list[Gate]) -> np.ndarray:
        state = self._psi0 if isinstance(self.backend, Exact) else self._rho0
        before = []
        for g in gates:
            before.append(state)
            state = self._forward(state, g)
        obs = self._final_obs
        after = [None] * len(gates)
        for i in range(len(gates) - 1, -1, -1):
            after[i] = obs
            obs = self._backward(obs, gates[i])
        self._base = gates
        self._before = before
        self._after = after
        self._base_value = self._score(self._final_obs, state)
        return self._base_value

    def _local_per_pair(self, params) -> np.ndarray:
        gates = self.spec.build(params).gates
        base = self._base
        if base is not None and len(base) == len(gates):
            diff = [i for i, (g, h) in enumerate(zip(gates, base)) if g.key() != h.key()]
            if not diff:
                return self._base_value
            if len(diff) == 1:
                i = diff[0]
                state = self._forward(self._before[i], gates[i])
                return self._score(self._after[i], state)
        return self._rebuild(gates)

    def output_states(self, params) -> np.ndarray:
        """Network outputs on the output qubits, stacked ``(pairs, d, d)``."""
        if isinstance(self.backend, Exact):
            psi = self._exact_outputs(params)
            d = self.spec.d
            return np.einsum("nri,nrj->nij", psi, psi.conj()).reshape(-1, d, d)
        bc = transpile_circuit(self.spec.build(params))
        prog = compile_noisy(bc, self.backend.noise)
        rho = prog.run(self._rho0)
        if not self._rest:
            return rho
        return qcore.partial_trace(rho, self._rest)

    def _exact_outputs(self, params) -> np.ndarray:
        # pure network states, reshaped (pairs, rest, output)
        spec = self.spec
        nq = spec.num_qubits
        psi = self._psi0
        for g in spec.build(params).gates:
            psi = qcore.apply_unitary_batch(psi, g.unitary(), g.qubits)
        t = psi.reshape((-1,) + (2,) * nq)
        t = np.moveaxis(t, [1 + q for q in spec.output_qubits], range(nq - spec.m + 1, nq + 1))
        return t.reshape(-1, 2 ** (nq - spec.m), spec.d)

    def per_pair(self, params) -> np.ndarray:
        b = self.backend
        if isinstance(b, Exact) or (isinstance(b, Noisy) and self._local):
            return self._local_per_pair(params)
        sigma = self.output_states(params)
        if isinstance(b, Noisy):
            return np.real(np.einsum("nij,nji->n", self._obs, sigma))
        m = self.spec.m
        out = []
        for rho_a, s in zip(self._rho_a, sigma):
            final = self._swap.run(np.kron(rho_a, s))
            counts = sample_counts(final, b.shots, b.rng)
            out.append(estimate_fidelity_from_counts(counts, range(m), range(m, 2 * m)))
        return np.array(out)

    def __call__(self, params) -> CostReport:
        f = self.per_pair(params)
        if isinstance(self.backend, Sampled):
            # the shot estimate can stray below zero when F is small
            f = np.clip(f, 0.0, 1.0)
        else:
            if np.any(f < -1e-9) or np.any(f > 1 + 1e-9):
                raise ArithmeticError(f"fidelity outside [0, 1]: {f}")
            f = np.clip(f, 0.0, 1.0)
        per = tuple(float(x) for x in f)
        return CostReport(float(np.mean(f)), self.backend.mode, per)

    def value(self, params) -> float:
        return self(params).value


def cost(network: NetworkSpec, params, pairs, backend: Backend) -> CostReport:
    return CostEvaluator(network, pairs, backend)(params)
