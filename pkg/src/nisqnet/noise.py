"""Per-basis-gate depolarizing noise and density-matrix execution."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import qcore
from .circuits import CNOT, RZ, SX
from .transpile import BasisCircuit

# single-qubit and CNOT error rates of a 2021-era superconducting device
DEFAULT_LAMBDA0 = {"cnot": 3.14e-2, "sx": 1.18e-3, "rz": 0.0}


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing probabilities ``min(k * lambda0[g], 1)`` per basis gate ``g``."""

    lambda0: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_LAMBDA0))
    k: float = 1.0

    def __post_init__(self):
        table = {str(g).lower(): float(v) for g, v in self.lambda0.items()}
        missing = {"cnot", "sx", "rz"} - set(table)
        if missing:
            raise ValueError(f"lambda0 is missing {sorted(missing)}")
        if any(not 0 <= v <= 1 for v in table.values()):
            raise ValueError("base probabilities must lie in [0, 1]")
        if self.k < 0:
            raise ValueError("noise scale k must be non-negative")
        object.__setattr__(self, "lambda0", table)

    def probability(self, kind: str) -> float:
        return min(self.k * self.lambda0[kind.lower()], 1.0)

    def scaled(self, k: float) -> "NoiseModel":
        return NoiseModel(dict(self.lambda0), k)

    def as_dict(self) -> dict:
        return {"lambda0": dict(self.lambda0), "k": self.k}


NOISELESS = NoiseModel(k=0.0)


def _depolarize_batch(rho: np.ndarray, lam: float, qubits: Sequence[int], n: int) -> np.ndarray:
    # rho has shape (B, 2**n, 2**n)
    b = rho.shape[0]
    rest = [q for q in range(n) if q not in qubits]
    s, r = 2 ** len(qubits), 2 ** len(rest)
    perm = [0] + [1 + q for q in rest + list(qubits)]
    perm += [1 + n + q for q in rest + list(qubits)]
    t = rho.reshape([b] + [2] * (2 * n)).transpose(perm).reshape(b, r, s, r, s)
    red = np.einsum("brsqs->brq", t)
    mixed = red[:, :, None, :, None] * (np.eye(s) / s)[None, None, :, None, :]
    t = (1 - lam) * t + lam * mixed
    inv = np.argsort(perm)
    return t.reshape([b] + [2] * (2 * n)).transpose(inv).reshape(b, 2**n, 2**n)


def depolarize(rho: np.ndarray, lam: float, qubits: Sequence[int]) -> np.ndarray:
    """``(1-lam) rho + lam * Tr_S(rho) x I/2^|S|`` on the support ``S``.

    Accepts a single density matrix or a stack of shape ``(..., D, D)``.
    """
    if not 0 <= lam <= 1:
        raise ValueError(f"depolarizing probability {lam} outside [0, 1]")
    rho = np.asarray(rho, dtype=complex)
    n = qcore.num_qubits_of(rho.shape[-1])
    qubits = qcore._check_targets(qubits, n)
    if lam == 0:
        return rho.copy()
    lead = rho.shape[:-2]
    flat = rho.reshape((-1,) + rho.shape[-2:])
    out = _depolarize_batch(flat, lam, qubits, n)
    return out.reshape(lead + rho.shape[-2:])


def execute_noisy(bc: BasisCircuit, nm: NoiseModel, rho0: np.ndarray) -> np.ndarray:
    """Run ``bc`` gate by gate: ideal gate, then depolarize its support."""
    rho = np.asarray(rho0, dtype=complex)
    if rho.shape != (2**bc.num_qubits,) * 2:
        raise ValueError(f"initial state {rho.shape} does not match {bc.num_qubits} qubits")
    for g in bc.gates:
        rho = qcore.apply_unitary(rho, g.unitary(), g.qubits)
        lam = nm.probability(g.kind)
        if lam > 0:
            rho = depolarize(rho, lam, g.qubits)
    return rho


@dataclass
class NoisyProgram:
    """Compiled form of a noisy basis circuit.

    Depolarizing channels commute with unitaries on their own support, so
    runs of single-qubit gates between CNOTs fold into one unitary followed by
    one depolarization with the compounded probability. ``ops`` holds
    ``("u", full_matrix)`` and ``("d", lam, qubits)`` steps.
    """

    num_qubits: int
    ops: list[tuple]

    def run(self, rho: np.ndarray) -> np.ndarray:
        """Evolve one density matrix or a stack ``(B, D, D)``."""
        rho = np.asarray(rho, dtype=complex)
        single = rho.ndim == 2
        if single:
            rho = rho[None]
        for op in self.ops:
            if op[0] == "u":
                m = op[1]
                rho = m @ rho @ m.conj().T
            else:
                rho = _depolarize_batch(rho, op[1], op[2], self.num_qubits)
        return rho[0] if single else rho

    def adjoint_run(self, obs: np.ndarray) -> np.ndarray:
        """Heisenberg picture: ``Tr[obs run(rho)] = Tr[adjoint_run(obs) rho]``."""
        obs = np.asarray(obs, dtype=complex)
        single = obs.ndim == 2
        if single:
            obs = obs[None]
        for op in reversed(self.ops):
            if op[0] == "u":
                m = op[1]
                obs = m.conj().T @ obs @ m
            else:
                # depolarizing maps are self-adjoint
                obs = _depolarize_batch(obs, op[1], op[2], self.num_qubits)
        return obs[0] if single else obs


def compile_noisy(bc: BasisCircuit, nm: NoiseModel) -> NoisyProgram:
    n = bc.num_qubits
    ops: list[tuple] = []
    pending: dict[int, list] = {}

    def flush(q: int):
        if q not in pending:
            return
        mat, survive = pending.pop(q)
        ops.append(("u", qcore.embed_operator(mat, [q], n)))
        if survive < 1:
            ops.append(("d", 1 - survive, (q,)))

    lam_sx = nm.probability(SX)
    lam_rz = nm.probability(RZ)
    lam_cx = nm.probability(CNOT)
    for g in bc.gates:
        if g.kind == CNOT:
            for q in g.qubits:
                flush(q)
            ops.append(("u", qcore.embed_operator(qcore.CNOT, g.qubits, n)))
            if lam_cx > 0:
                ops.append(("d", lam_cx, g.qubits))
            continue
        q = g.qubits[0]
        mat, survive = pending.get(q, (np.eye(2, dtype=complex), 1.0))
        lam = lam_sx if g.kind == SX else lam_rz
        pending[q] = [g.unitary() @ mat, survive * (1 - lam)]
    for q in sorted(pending):
        flush(q)
    return NoisyProgram(n, _merge_unitaries(ops))


def _merge_unitaries(ops: list[tuple]) -> list[tuple]:
    out: list[tuple] = []
    for op in ops:
        if op[0] == "u" and out and out[-1][0] == "u":
            out[-1] = ("u", op[1] @ out[-1][1])
        else:
            out.append(op)
    return out


@lru_cache(maxsize=256)
def _depolarizing_superop(lam: float, qubits: tuple[int, ...], n: int) -> np.ndarray:
    d = 2**n
    basis = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
    return _depolarize_batch(basis, lam, qubits, n).reshape(d * d, d * d).T


def superoperator(bc: BasisCircuit, nm: NoiseModel) -> np.ndarray:
    """Row-major superoperator of the noisy circuit, shape ``(4**n, 4**n)``.

    With ``vec`` stacking rows, ``vec(u rho u^dagger) = (u x conj(u)) vec(rho)``.
    """
    n = bc.num_qubits
    out = np.eye(4**n, dtype=complex)
    for op in compile_noisy(bc, nm).ops:
        if op[0] == "u":
            out = qcore.kron2(op[1], op[1].conj()) @ out
        else:
            out = _depolarizing_superop(op[1], tuple(op[2]), n) @ out
    return out


def sample_counts(
    rho: np.ndarray, shots: int, rng: np.random.Generator
) -> dict[str, int]:
    """Multinomial computational-basis outcomes, keyed by bitstring (qubit 0 first)."""
    if shots < 1:
        raise ValueError("shots must be positive")
    rho = np.asarray(rho)
    n = qcore.num_qubits_of(rho.shape[0])
    probs = np.clip(np.real(np.diag(rho)), 0, None)
    probs = probs / probs.sum()
    draws = rng.multinomial(shots, probs)
    return {
        format(i, f"0{n}b"): int(c) for i, c in enumerate(draws) if c > 0
    }
