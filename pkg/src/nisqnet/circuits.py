"""Gate set, circuit container and the two network builders.

Parameter-vector layouts
------------------------
DQNN, for each layer ``l = 1 .. L+1``: the ``(theta, phi, lam)`` triples of
the ``m_{l-1}`` input qubits, then the ``(t1, t2, t3)`` triples of perceptron
``j = 1 .. m_l``, each listing its ``m_{l-1}`` canonical gates in input order.
The ``m`` final output-qubit triples close the vector.

QAOA: ``[t_1, tau_1, ..., t_N, tau_N]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import qcore

CAN = "CAN"
U = "U"
CNOT = "CNOT"
SX = "SX"
RZ = "RZ"
H = "H"
FIXED = "FIXED"

KINDS = (CAN, U, CNOT, SX, RZ, H, FIXED)
_ARITY = {CAN: 2, U: 1, CNOT: 2, SX: 1, RZ: 1, H: 1}
_NPARAMS = {CAN: 3, U: 3, CNOT: 0, SX: 0, RZ: 1, H: 0}

_PAULI_XX = np.kron(qcore.X, qcore.X)
_PAULI_YY = np.kron(qcore.Y, qcore.Y)
_PAULI_ZZ = np.kron(qcore.Z, qcore.Z)


def can_matrix(t1: float, t2: float, t3: float) -> np.ndarray:
    """exp(-i pi/2 t1 XX) exp(-i pi/2 t2 YY) exp(-i pi/2 t3 ZZ)."""
    # the three factors commute and are diagonal in the Bell basis
    out = np.eye(4, dtype=complex)
    for t, p in ((t1, _PAULI_XX), (t2, _PAULI_YY), (t3, _PAULI_ZZ)):
        a = np.pi / 2 * t
        out = out @ (np.cos(a) * np.eye(4) - 1j * np.sin(a) * p)
    return out


def u_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (lam + phi)) * c],
        ],
        dtype=complex,
    )


def u_params(mat: np.ndarray) -> tuple[float, float, float, float]:
    """Angles ``(theta, phi, lam, phase)`` with ``mat = e^{i phase} u(theta, phi, lam)``."""
    mat = np.asarray(mat, dtype=complex)
    a, b = abs(mat[0, 0]), abs(mat[1, 0])
    theta = 2 * np.arctan2(b, a)
    if a > 1e-12:
        phase = np.angle(mat[0, 0])
        if b > 1e-12:
            phi = np.angle(mat[1, 0]) - phase
            lam = np.angle(-mat[0, 1]) - phase
        else:
            phi = 0.0
            lam = np.angle(mat[1, 1]) - phase
    else:
        phi = 0.0
        phase = np.angle(mat[1, 0])
        lam = np.angle(-mat[0, 1]) - phase
    return float(theta), float(phi), float(lam), float(phase)


@dataclass(frozen=True, eq=False)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind == FIXED:
            if self.matrix is None:
                raise ValueError("FIXED gate needs a matrix")
            mat = np.array(self.matrix, dtype=complex)
            mat.setflags(write=False)
            object.__setattr__(self, "matrix", mat)
            arity = qcore.num_qubits_of(mat.shape[0])
        else:
            arity = _ARITY[self.kind]
            if len(self.params) != _NPARAMS[self.kind]:
                raise ValueError(
                    f"{self.kind} takes {_NPARAMS[self.kind]} parameters, "
                    f"got {len(self.params)}"
                )
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.qubits}")

    def unitary(self) -> np.ndarray:
        if self.kind == CAN:
            return can_matrix(*self.params)
        if self.kind == U:
            return u_matrix(*self.params)
        if self.kind == RZ:
            return qcore.rz(self.params[0])
        if self.kind == FIXED:
            return self.matrix
        return {CNOT: qcore.CNOT, SX: qcore.SX, H: qcore.H}[self.kind]

    def key(self) -> tuple:
        """Hashable identity used for caching lowered gates."""
        extra = self.matrix.tobytes() if self.matrix is not None else b""
        return (self.kind, self.qubits, self.params, extra)

    def shifted(self, offset: int) -> "Gate":
        return Gate(
            self.kind, tuple(q + offset for q in self.qubits), self.params, self.matrix
        )

    def remapped(self, mapping: Sequence[int]) -> "Gate":
        """Same gate with qubit ``q`` moved to ``mapping[q]``."""
        return Gate(
            self.kind, tuple(mapping[q] for q in self.qubits), self.params, self.matrix
        )


@dataclass
class Circuit:
    num_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, gate: Gate) -> None:
        if max(gate.qubits) >= self.num_qubits:
            raise ValueError(f"{gate} does not fit in {self.num_qubits} qubits")

    def append(self, gate: Gate) -> None:
        self._check(gate)
        self.gates.append(gate)

    def extend(self, gates: Iterable[Gate]) -> None:
        for g in gates:
            self.append(g)

    def __len__(self) -> int:
        return len(self.gates)

    def unitary(self) -> np.ndarray:
        n = self.num_qubits
        out = np.eye(2**n, dtype=complex)
        for g in self.gates:
            out = qcore.embed_operator(g.unitary(), g.qubits, n) @ out
        return out

    def counts(self) -> dict[str, int]:
        tally: dict[str, int] = {}
        for g in self.gates:
            tally[g.kind] = tally.get(g.kind, 0) + 1
        return tally


def _fmt(x: float) -> str:
    return repr(float(f"{x:.17g}"))


def dumps(circuit: Circuit, global_phase: float | None = None) -> str:
    """Line-oriented text form, one ``KIND q0[,q1] p1,p2,...`` line per gate.

    FIXED gates list their matrix entries row-major as ``re,im`` pairs.
    """
    lines = [f"QUBITS {circuit.num_qubits}"]
    if global_phase is not None:
        lines.append(f"PHASE {_fmt(global_phase)}")
    for g in circuit.gates:
        qs = ",".join(str(q) for q in g.qubits)
        if g.kind == FIXED:
            vals = []
            for z in g.matrix.ravel():
                vals += [z.real, z.imag]
        else:
            vals = list(g.params)
        line = f"{g.kind} {qs}"
        if vals:
            line += " " + ",".join(_fmt(v) for v in vals)
        lines.append(line)
    return "\n".join(lines) + "\n"


def loads(text: str) -> tuple[Circuit, float | None]:
    """Inverse of :func:`dumps`; returns the circuit and the phase line, if any."""
    circuit = None
    phase = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "QUBITS":
            circuit = Circuit(int(parts[1]))
            continue
        if parts[0] == "PHASE":
            phase = float(parts[1])
            continue
        if circuit is None:
            raise ValueError("missing QUBITS header")
        kind, qubits = parts[0], tuple(int(q) for q in parts[1].split(","))
        vals = [float(v) for v in parts[2].split(",")] if len(parts) > 2 else []
        if kind == FIXED:
            arr = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
            d = int(round(np.sqrt(arr.size)))
            circuit.append(Gate(FIXED, qubits, matrix=arr.reshape(d, d)))
        else:
            circuit.append(Gate(kind, qubits, tuple(vals)))
    if circuit is None:
        raise ValueError("missing QUBITS header")
    return circuit, phase


@dataclass(frozen=True)
class DQNNSpec:
    """Dissipative network with layer widths ``(m_0, ..., m_{L+1})``."""

    widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(w < 1 for w in widths):
            raise ValueError("layer widths must be positive")
        if widths[0] != widths[-1]:
            raise ValueError("input and output widths must agree")

    @property
    def m(self) -> int:
        return self.widths[0]

    @property
    def d(self) -> int:
        return 2**self.m

    @property
    def num_params(self) -> int:
        w = self.widths
        return 3 * self.m + 3 * sum(w[l - 1] * (1 + w[l]) for l in range(1, len(w)))

    @property
    def num_qubits(self) -> int:
        return sum(self.widths)

    def layer_qubits(self, layer: int) -> list[int]:
        start = sum(self.widths[:layer])
        return list(range(start, start + self.widths[layer]))

    @property
    def input_qubits(self) -> list[int]:
        return self.layer_qubits(0)

    @property
    def output_qubits(self) -> list[int]:
        return self.layer_qubits(len(self.widths) - 1)

    def build(self, params: Sequence[float]) -> Circuit:
        return build_dqnn(self, params)

    def identity_params(self) -> np.ndarray:
        return identity_params(self)

    def describe(self) -> str:
        return "dqnn " + "-".join(str(w) for w in self.widths)


@dataclass(frozen=True, eq=False)
class QAOASpec:
    """Alternating ``exp(-i A t_l)``, ``exp(-i B tau_l)`` on ``m`` qubits."""

    m: int
    layers: int
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = 2**self.m
        for name in ("a", "b"):
            mat = np.array(getattr(self, name), dtype=complex)
            if mat.shape != (d, d):
                raise ValueError(f"generator {name} must be {d}x{d}")
            if not qcore.is_hermitian(mat, 1e-10):
                raise ValueError(f"generator {name} is not Hermitian")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        if self.layers < 1:
            raise ValueError("need at least one layer pair")

    @property
    def d(self) -> int:
        return 2**self.m

    @property
    def num_params(self) -> int:
        return 2 * self.layers

    @property
    def num_qubits(self) -> int:
        return self.m

    @property
    def input_qubits(self) -> list[int]:
        return list(range(self.m))

    @property
    def output_qubits(self) -> list[int]:
        return list(range(self.m))

    @cached_property
    def _eigs(self):
        return np.linalg.eigh(self.a), np.linalg.eigh(self.b)

    def evolution(self, which: str, t: float) -> np.ndarray:
        """``exp(-i G t)`` for generator ``which`` in {"a", "b"}."""
        evals, vecs = self._eigs[0 if which == "a" else 1]
        return (vecs * np.exp(-1j * evals * t)) @ vecs.conj().T

    def build(self, params: Sequence[float]) -> Circuit:
        return build_qaoa(self, params)

    def identity_params(self) -> np.ndarray:
        return identity_params(self)

    def describe(self) -> str:
        return f"qaoa m={self.m} N={self.layers}"


NetworkSpec = DQNNSpec | QAOASpec


def random_qaoa_spec(m: int, layers: int, rng: np.random.Generator) -> QAOASpec:
    d = 2**m
    a = qcore.sample_gue(d, rng)
    b = qcore.sample_gue(d, rng)
    return QAOASpec(m, layers, a, b)


def _check_params(spec: NetworkSpec, params: Sequence[float]) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.num_params,):
        raise ValueError(
            f"{spec.describe()} takes {spec.num_params} parameters, got {params.shape}"
        )
    return params


def build_dqnn(spec: DQNNSpec, params: Sequence[float]) -> Circuit:
    params = _check_params(spec, params)
    circuit = Circuit(spec.num_qubits)
    pos = 0
    for layer in range(1, len(spec.widths)):
        inputs = spec.layer_qubits(layer - 1)
        outputs = spec.layer_qubits(layer)
        for q in inputs:
            circuit.append(Gate(U, (q,), params[pos : pos + 3]))
            pos += 3
        # U^l = U^l_{m_l} ... U^l_1, so perceptron 1 acts first
        for out in outputs:
            for q in inputs:
                circuit.append(Gate(CAN, (q, out), params[pos : pos + 3]))
                pos += 3
    for q in spec.output_qubits:
        circuit.append(Gate(U, (q,), params[pos : pos + 3]))
        pos += 3
    assert pos == spec.num_params
    return circuit


def build_qaoa(spec: QAOASpec, params: Sequence[float]) -> Circuit:
    params = _check_params(spec, params)
    qubits = tuple(range(spec.m))
    circuit = Circuit(spec.m)
    for t, tau in params.reshape(-1, 2):
        circuit.append(Gate(FIXED, qubits, matrix=spec.evolution("a", t)))
        circuit.append(Gate(FIXED, qubits, matrix=spec.evolution("b", tau)))
    return circuit


def identity_params(spec: NetworkSpec) -> np.ndarray:
    """Parameters at which the noise-free network is the identity channel.

    For the DQNN this needs every layer to be ``m`` wide: perceptron ``j``
    swaps input ``j`` onto its output through ``can(1/2, 1/2, 1/2)``.
    """
    if isinstance(spec, QAOASpec):
        return np.zeros(spec.num_params)
    if any(w != spec.m for w in spec.widths):
        raise ValueError(
            f"no identity parameters for {spec.describe()}: hidden widths must equal m"
        )
    params = np.zeros(spec.num_params)
    pos = 0
    m = spec.m
    for _ in range(1, len(spec.widths)):
        pos += 3 * m
        for j in range(m):
            for i in range(m):
                if i == j:
                    params[pos : pos + 3] = 0.5
                pos += 3
    return params


def state_prep_circuit(psi: np.ndarray, target_qubits: Sequence[int]) -> list[Gate]:
    """Gates taking ``|0...0>`` on ``target_qubits`` to ``psi`` up to global phase.

    Two-qubit states use their Schmidt form: a rotation setting the Schmidt
    weights, a CNOT, and one local unitary per qubit.
    """
    psi = np.asarray(psi, dtype=complex)
    m = len(target_qubits)
    if psi.shape != (2**m,):
        raise ValueError(f"state of length {psi.shape} for {m} target qubits")
    if m == 1:
        theta, phi, _, _ = u_params(
            np.array([[psi[0], -np.conj(psi[1])], [psi[1], np.conj(psi[0])]])
        )
        return [Gate(U, (target_qubits[0],), (theta, phi, 0.0))]
    if m != 2:
        raise ValueError("circuit state preparation supports one or two qubits")
    q0, q1 = target_qubits
    left, schmidt, right = np.linalg.svd(psi.reshape(2, 2))
    theta = 2 * np.arctan2(schmidt[1], schmidt[0])
    # u(theta, 0, pi) is H at the Bell point; theta = 0 keeps identity angles
    lam = np.pi if theta > 1e-12 else 0.0
    la = u_params(left)
    lb = u_params(right.T)
    return [
        Gate(U, (q0,), (theta, 0.0, lam)),
        Gate(CNOT, (q0, q1)),
        Gate(U, (q0,), la[:3]),
        Gate(U, (q1,), lb[:3]),
    ]
