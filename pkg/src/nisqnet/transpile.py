"""Lowering of circuits to the {CNOT, SX, RZ} basis.

Every rewrite tracks the global phase, so a :class:`BasisCircuit` reproduces
the source unitary exactly, not just up to phase.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import qcore
from .circuits import (
    CAN,
    CNOT,
    FIXED,
    H,
    RZ,
    SX,
    U,
    Circuit,
    Gate,
    can_matrix,
)

BASIS = (CNOT, SX, RZ)

# Euler special cases are only taken when exact to this tolerance
_ANGLE_TOL = 1e-11
_KAK_TOL = 1e-8


class DecompositionError(RuntimeError):
    pass


@dataclass
class BasisCircuit:
    num_qubits: int
    gates: list[Gate] = field(default_factory=list)
    global_phase: float = 0.0

    def __post_init__(self):
        for g in self.gates:
            if g.kind not in BASIS:
                raise ValueError(f"{g.kind} is not a basis gate")
            if max(g.qubits) >= self.num_qubits:
                raise ValueError(f"{g} does not fit in {self.num_qubits} qubits")

    @property
    def counts(self) -> dict[str, int]:
        tally = {k: 0 for k in BASIS}
        for g in self.gates:
            tally[g.kind] += 1
        return tally

    def as_circuit(self) -> Circuit:
        return Circuit(self.num_qubits, list(self.gates))

    def unitary(self) -> np.ndarray:
        return np.exp(1j * self.global_phase) * self.as_circuit().unitary()

    def __add__(self, other: "BasisCircuit") -> "BasisCircuit":
        # plain concatenation: no RZ merging across the boundary
        n = max(self.num_qubits, other.num_qubits)
        return BasisCircuit(
            n, self.gates + other.gates, self.global_phase + other.global_phase
        )

    def remapped(self, mapping: Sequence[int], num_qubits: int) -> "BasisCircuit":
        return BasisCircuit(
            num_qubits, [g.remapped(mapping) for g in self.gates], self.global_phase
        )


def _wrap(angle: float) -> float:
    return math.remainder(angle, 2 * math.pi)


def _phase_between(target: np.ndarray, built: np.ndarray) -> float:
    return float(np.angle(np.trace(built.conj().T @ target)))


def _sequence_matrix(ops: list[tuple[str, float]]) -> np.ndarray:
    out = np.eye(2, dtype=complex)
    for kind, angle in ops:
        if kind == SX:
            out = qcore.SX @ out
        else:
            # RZ scales the rows by exp(-+ i angle / 2)
            out = out * np.array([[cmath.exp(-0.5j * angle)], [cmath.exp(0.5j * angle)]])
    return out


def decompose_one_qubit(
    u: np.ndarray, qubit: int = 0
) -> tuple[list[Gate], float]:
    """ZXZXZ Euler form ``RZ . SX . RZ . SX . RZ`` of a 2x2 unitary.

    Returns the gates in time order and the global phase. Rotations by a
    multiple of the identity vanish; a quarter-turn uses a single SX.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not qcore.is_unitary(u):
        raise ValueError("decompose_one_qubit needs a 2x2 unitary")
    v = u / cmath.sqrt(u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0])
    a, b = v[0, 0], v[1, 0]
    theta = 2 * math.atan2(abs(b), abs(a))
    # v = RZ(phi) RY(theta) RZ(lam) up to sign
    if abs(b) < 1e-14:
        phi, lam = 0.0, -2 * np.angle(a)
    elif abs(a) < 1e-14:
        phi, lam = 0.0, -2 * np.angle(b)
    else:
        s, d = -2 * np.angle(a), 2 * np.angle(b)
        phi, lam = (s + d) / 2, (s - d) / 2
    if theta < _ANGLE_TOL:
        ops = [(RZ, phi + lam)]
    elif abs(theta - math.pi / 2) < _ANGLE_TOL:
        ops = [(RZ, lam - math.pi / 2), (SX, 0.0), (RZ, phi + math.pi / 2)]
    else:
        ops = [(RZ, lam), (SX, 0.0), (RZ, theta - math.pi), (SX, 0.0), (RZ, phi + math.pi)]
    ops = [(k, _wrap(x)) for k, x in ops]
    ops = [(k, x) for k, x in ops if k == SX or abs(x) > 1e-12]
    phase = _phase_between(u, _sequence_matrix(ops))
    gates = [
        Gate(SX, (qubit,)) if k == SX else Gate(RZ, (qubit,), (x,)) for k, x in ops
    ]
    return gates, phase


def _layer(mats: Sequence[np.ndarray], qubits: Sequence[int]) -> tuple[list[Gate], float]:
    gates, phase = [], 0.0
    for mat, q in zip(mats, qubits):
        gs, p = decompose_one_qubit(mat, q)
        gates += gs
        phase += p
    return gates, phase


_CNOT_10 = qcore.SWAP @ qcore.CNOT @ qcore.SWAP


def _gates_unitary(gates: Sequence[Gate], qubits: Sequence[int]) -> np.ndarray:
    """Unitary of basis gates on the two listed qubits, first one most significant."""
    q0, _ = qubits
    out = np.eye(4, dtype=complex)
    for g in gates:
        if g.kind == CNOT:
            mat = qcore.CNOT if g.qubits[0] == q0 else _CNOT_10
        elif g.qubits[0] == q0:
            mat = qcore.kron2(g.unitary(), qcore.I2)
        else:
            mat = qcore.kron2(qcore.I2, g.unitary())
        out = mat @ out
    return out


_CAN_TEMPLATE_PHASE = math.pi / 4


def decompose_canonical(
    t1: float, t2: float, t3: float, qubits: Sequence[int] = (0, 1), check: bool = False
) -> tuple[list[Gate], float]:
    """Fixed three-CNOT realisation of ``can(t1, t2, t3)``.

    Time order: RZ(pi/2) on the second qubit, CNOT(1->0),
    RZ(pi/2 + pi t3) x RY(pi/2 + pi t1), CNOT(0->1), RY(-pi/2 - pi t2) on the
    second qubit, CNOT(1->0), RZ(-pi/2) on the first qubit.
    """
    q0, q1 = qubits
    pi = math.pi
    gates: list[Gate] = []
    phase = 0.0
    steps = [
        ([qcore.rz(pi / 2)], [q1]),
        (q1, q0),
        ([qcore.rz(pi / 2 + pi * t3), qcore.ry(pi / 2 + pi * t1)], [q0, q1]),
        (q0, q1),
        ([qcore.ry(-pi / 2 - pi * t2)], [q1]),
        (q1, q0),
        ([qcore.rz(-pi / 2)], [q0]),
    ]
    for step in steps:
        if isinstance(step[0], list):
            gs, p = _layer(*step)
            gates += gs
            phase += p
        else:
            gates.append(Gate(CNOT, step))
    # with the Euler phases included the template gives exp(-i pi/4) can(t)
    phase += _CAN_TEMPLATE_PHASE
    if check:
        built = np.exp(1j * phase) * _gates_unitary(gates, [q0, q1])
        if np.max(np.abs(built - can_matrix(t1, t2, t3))) > 1e-9:
            raise DecompositionError("canonical template failed to reproduce can()")
    return gates, phase


# Magic basis: local SU(2) x SU(2) becomes SO(4) and XX, YY, ZZ become diagonal.
MAGIC = np.array(
    [[1, 1j, 0, 0], [0, 0, 1j, 1], [0, 0, 1j, -1], [1, -1j, 0, 0]], dtype=complex
) / np.sqrt(2)
_PAULIS = (qcore.X, qcore.Y, qcore.Z)
_CORE_SIGNS = np.array(
    [np.real(np.diag(MAGIC.conj().T @ np.kron(p, p) @ MAGIC)) for p in _PAULIS]
).T
_SOLVE_CORE = np.linalg.inv(np.column_stack([np.ones(4), _CORE_SIGNS]))
# axis permutations by simultaneous local conjugation: C P_i C^dag = +-P_j
_SWAP_CLIFFORD = {
    (0, 1): np.diag([1, 1j]).astype(complex),
    (0, 2): qcore.H,
    (1, 2): np.array([[1, -1j], [-1j, 1]], dtype=complex) / np.sqrt(2),
}


@dataclass
class KAK:
    """``u = e^{i phase} (post_a x post_b) can(core) (pre_a x pre_b)``."""

    pre_a: np.ndarray
    pre_b: np.ndarray
    core: tuple[float, float, float]
    post_a: np.ndarray
    post_b: np.ndarray
    phase: float

    def unitary(self) -> np.ndarray:
        return (
            np.exp(1j * self.phase)
            * np.kron(self.post_a, self.post_b)
            @ can_matrix(*self.core)
            @ np.kron(self.pre_a, self.pre_b)
        )


def _factor_local(k: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Split ``k = e^{i phase} a x b`` with ``a``, ``b`` in SU(2)."""
    r = k.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    uu, s, vh = np.linalg.svd(r)
    a = np.sqrt(s[0]) * uu[:, 0].reshape(2, 2)
    b = np.sqrt(s[0]) * vh[0].reshape(2, 2)
    da, db = np.sqrt(np.linalg.det(a)), np.sqrt(np.linalg.det(b))
    a, b = a / da, b / db
    phase = _phase_between(k, np.kron(a, b))
    return a, b, phase


def _diagonalizer(m2: np.ndarray) -> np.ndarray:
    # m2 is complex symmetric and unitary: its real and imaginary parts are
    # commuting real symmetric matrices, so a generic real combination shares
    # their eigenbasis
    for c in (0.7071067811865476, 0.3090169943749474, 0.9238795325112867, 0.1):
        s = math.sqrt(1 - c * c)
        _, p = np.linalg.eigh(c * m2.real + s * m2.imag)
        d = p.T @ m2 @ p
        if np.max(np.abs(d - np.diag(np.diag(d)))) < 1e-10:
            if np.linalg.det(p) < 0:
                p[:, 0] = -p[:, 0]
            return p
    raise DecompositionError("could not diagonalise M^T M")


def _canonicalize(kak: KAK) -> KAK:
    t = list(kak.core)
    post_a, post_b = kak.post_a, kak.post_b
    pre_a, pre_b = kak.pre_a, kak.pre_b
    phase = kak.phase

    def shift(i: int, n: int):
        nonlocal pre_a, pre_b, phase
        if n == 0:
            return
        t[i] -= n
        if n % 2:
            pre_a = _PAULIS[i] @ pre_a
            pre_b = _PAULIS[i] @ pre_b
        phase -= n * math.pi / 2

    def flip(i: int, j: int):
        nonlocal post_a, pre_a
        (k,) = {0, 1, 2} - {i, j}
        t[i], t[j] = -t[i], -t[j]
        post_a = post_a @ _PAULIS[k]
        pre_a = _PAULIS[k] @ pre_a

    def swap(i: int, j: int):
        nonlocal post_a, post_b, pre_a, pre_b
        c = _SWAP_CLIFFORD[(min(i, j), max(i, j))]
        t[i], t[j] = t[j], t[i]
        post_a = post_a @ c.conj().T
        post_b = post_b @ c.conj().T
        pre_a = c @ pre_a
        pre_b = c @ pre_b

    for i in range(3):
        shift(i, int(round(t[i])))
    for i in range(3):
        for j in range(2 - i):
            if abs(t[j]) < abs(t[j + 1]):
                swap(j, j + 1)
    if t[0] < 0 and t[1] < 0:
        flip(0, 1)
    elif t[0] < 0:
        flip(0, 2)
    elif t[1] < 0:
        flip(1, 2)
    if t[2] < 0 and t[0] > 0.5 - 1e-12:
        flip(0, 2)
        shift(0, -1)
    core = (t[0] + 0.0, t[1] + 0.0, t[2] + 0.0)
    return KAK(pre_a, pre_b, core, post_a, post_b, phase)


def kak_decompose(u: np.ndarray) -> KAK:
    """Cartan decomposition of a two-qubit unitary via the magic basis.

    The core is brought into the Weyl chamber
    ``1/2 >= t1 >= t2 >= |t3|``.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4) or not qcore.is_unitary(u):
        raise ValueError("kak_decompose needs a 4x4 unitary")
    det = np.linalg.det(u)
    phase = float(np.angle(det)) / 4
    u_su = u * np.exp(-1j * phase)
    up = MAGIC.conj().T @ u_su @ MAGIC
    m2 = up.T @ up
    p = _diagonalizer(m2)
    theta = np.angle(np.diag(p.T @ m2 @ p)) / 2
    k1 = up @ p @ np.diag(np.exp(-1j * theta))
    if np.linalg.det(k1.real) < 0:
        theta[0] += math.pi
        k1 = up @ p @ np.diag(np.exp(-1j * theta))
    if np.max(np.abs(k1.imag)) > 1e-8:
        raise DecompositionError("left factor is not real orthogonal")
    left = MAGIC @ k1.real @ MAGIC.conj().T
    right = MAGIC @ p.T @ MAGIC.conj().T
    sol = _SOLVE_CORE @ theta
    phase += sol[0]
    core = tuple(float(-2 * c / math.pi) for c in sol[1:])
    post_a, post_b, ph_l = _factor_local(left)
    pre_a, pre_b, ph_r = _factor_local(right)
    kak = KAK(pre_a, pre_b, core, post_a, post_b, phase + ph_l + ph_r)
    kak = _canonicalize(kak)
    residual = np.max(np.abs(kak.unitary() - u))
    if residual > _KAK_TOL:
        raise DecompositionError(f"KAK reconstruction residual {residual:.2e}")
    return kak


@lru_cache(maxsize=16384)
def _lower_cached(key: tuple) -> tuple[tuple[Gate, ...], float]:
    kind, qubits, params, raw = key
    if kind in BASIS:
        return (Gate(kind, qubits, params),), 0.0
    if kind == CAN:
        gates, phase = decompose_canonical(*params, qubits=qubits)
        return tuple(gates), phase
    if kind in (U, H):
        mat = Gate(kind, qubits, params).unitary()
        gates, phase = decompose_one_qubit(mat, qubits[0])
        return tuple(gates), phase
    mat = np.frombuffer(raw, dtype=complex)
    if len(qubits) == 1:
        gates, phase = decompose_one_qubit(mat.reshape(2, 2), qubits[0])
        return tuple(gates), phase
    kak = kak_decompose(mat.reshape(4, 4))
    q0, q1 = qubits
    pre, p_pre = _layer([kak.pre_a, kak.pre_b], [q0, q1])
    core, p_core = decompose_canonical(*kak.core, qubits=qubits)
    post, p_post = _layer([kak.post_a, kak.post_b], [q0, q1])
    return tuple(pre + core + post), kak.phase + p_pre + p_core + p_post


def lower_gate(gate: Gate) -> tuple[tuple[Gate, ...], float]:
    """Basis-gate sequence and phase for a single gate (memoised)."""
    if gate.kind == FIXED and len(gate.qubits) > 2:
        raise ValueError("FIXED gates on three or more qubits are not supported")
    return _lower_cached(gate.key())


def merge_rz(num_qubits: int, gates: Sequence[Gate]) -> tuple[list[Gate], float]:
    """Fuse consecutive RZ on each qubit and drop the ones that vanish."""
    pending: dict[int, float] = {}
    out: list[Gate] = []
    phase = 0.0

    def flush(q: int):
        nonlocal phase
        if q not in pending:
            return
        angle = pending.pop(q)
        wrapped = _wrap(angle)
        # RZ(a + 2 pi k) = (-1)^k RZ(a)
        phase += math.pi * round((angle - wrapped) / (2 * math.pi))
        if abs(wrapped) > 1e-12:
            out.append(Gate(RZ, (q,), (wrapped,)))

    for g in gates:
        if g.kind == RZ:
            q = g.qubits[0]
            pending[q] = pending.get(q, 0.0) + g.params[0]
            continue
        for q in g.qubits:
            flush(q)
        out.append(g)
    for q in sorted(pending):
        flush(q)
    return out, phase


def transpile_circuit(circuit: Circuit) -> BasisCircuit:
    gates: list[Gate] = []
    phase = 0.0
    for g in circuit.gates:
        lowered, p = lower_gate(g)
        gates.extend(lowered)
        phase += p
    gates, p = merge_rz(circuit.num_qubits, gates)
    return BasisCircuit(circuit.num_qubits, gates, _wrap(phase + p))


def reconstruction_residual(circuit: Circuit, basis: BasisCircuit) -> float:
    return float(np.max(np.abs(basis.unitary() - circuit.unitary())))
