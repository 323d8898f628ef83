"""Dense linear-algebra primitives for small qubit registers.

States and operators are plain numpy arrays. A 1-D complex array of length
``2**n`` is a pure state; a ``(2**n, 2**n)`` array is a density matrix or
operator. Qubit 0 is the most significant bit of the basis-state index.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)

UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64) for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def num_qubits_of(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def rz(angle: float) -> np.ndarray:
    return np.array(
        [[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]], dtype=complex
    )


def ry(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def is_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        return False
    return bool(np.max(np.abs(h - h.conj().T)) <= tol)


def check_density(rho: np.ndarray, tol: float = 1e-10) -> None:
    """Raise ValueError unless ``rho`` is a valid density matrix."""
    rho = np.asarray(rho)
    if not is_hermitian(rho, tol):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ValueError(f"density matrix trace {np.trace(rho).real!r} != 1")
    if np.min(np.linalg.eigvalsh(rho)) < -1e-9:
        raise ValueError("density matrix has a negative eigenvalue")


def kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two matrices (lighter than ``np.kron`` for small ones)."""
    (r1, c1), (r2, c2) = a.shape, b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(r1 * r2, c1 * c2)


def kron(*mats: np.ndarray) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = kron2(out, np.asarray(m, dtype=complex))
    return out


def ket(bits: str) -> np.ndarray:
    """Computational basis state, e.g. ``ket("01")``."""
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int(bits, 2)] = 1
    return psi


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def _check_targets(qubits: Sequence[int], n: int) -> list[int]:
    qubits = [int(q) for q in qubits]
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"duplicate qubit index in {qubits}")
    if any(q < 0 or q >= n for q in qubits):
        raise ValueError(f"qubit index out of range for {n} qubits: {qubits}")
    return qubits


def _apply_left(t: np.ndarray, u: np.ndarray, axes: list[int]) -> np.ndarray:
    # contract u's input legs with the given tensor axes, put outputs back in place
    k = len(axes)
    ut = u.reshape([2] * (2 * k))
    out = np.tensordot(ut, t, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def apply_unitary(
    state: np.ndarray, u: np.ndarray, qubits: Sequence[int]
) -> np.ndarray:
    """Apply ``u`` to the listed qubits of a pure state or density matrix.

    The first listed qubit is the most significant index of ``u``. Density
    matrices are conjugated, ``u rho u^dagger``.
    """
    state = np.asarray(state, dtype=complex)
    u = np.asarray(u, dtype=complex)
    n = num_qubits_of(state.shape[0])
    qubits = _check_targets(qubits, n)
    if u.shape != (2 ** len(qubits),) * 2:
        raise ValueError(
            f"operator of shape {u.shape} does not act on {len(qubits)} qubits"
        )
    if state.ndim == 1:
        t = _apply_left(state.reshape([2] * n), u, qubits)
        return t.reshape(2**n)
    if state.shape != (2**n, 2**n):
        raise ValueError(f"not a square density matrix: {state.shape}")
    t = state.reshape([2] * (2 * n))
    t = _apply_left(t, u, qubits)
    t = _apply_left(t, u.conj(), [q + n for q in qubits])
    return t.reshape(2**n, 2**n)


def apply_unitary_batch(
    states: np.ndarray, u: np.ndarray, qubits: Sequence[int]
) -> np.ndarray:
    """``u`` on ``qubits`` of every pure state in a ``(B, D)`` stack."""
    states = np.asarray(states, dtype=complex)
    b, dim = states.shape
    n = num_qubits_of(dim)
    qubits = _check_targets(qubits, n)
    t = _apply_left(states.reshape((b,) + (2,) * n), u, [1 + q for q in qubits])
    return t.reshape(b, dim)


def conjugate_batch(mats: np.ndarray, u: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """``u X u^dagger`` on ``qubits`` for every matrix in a ``(B, D, D)`` stack."""
    mats = np.asarray(mats, dtype=complex)
    b, dim = mats.shape[:2]
    n = num_qubits_of(dim)
    qubits = _check_targets(qubits, n)
    t = mats.reshape((b,) + (2,) * (2 * n))
    t = _apply_left(t, u, [1 + q for q in qubits])
    t = _apply_left(t, np.conj(u), [1 + n + q for q in qubits])
    return t.reshape(b, dim, dim)


def apply_superoperator(
    mats: np.ndarray, sop: np.ndarray, qubits: Sequence[int]
) -> np.ndarray:
    """Apply a local superoperator to a ``(B, D, D)`` stack.

    ``sop`` acts on row-major vectorized matrices of the ``k`` listed qubits:
    ``out[i, j] = sum_kl sop[(i, j), (k, l)] in[k, l]``.
    """
    mats = np.asarray(mats, dtype=complex)
    b, dim = mats.shape[:2]
    n = num_qubits_of(dim)
    qubits = _check_targets(qubits, n)
    k = len(qubits)
    if sop.shape != (4**k, 4**k):
        raise ValueError(f"superoperator of shape {sop.shape} for {k} qubit(s)")
    t = mats.reshape((b,) + (2,) * (2 * n))
    axes = [1 + q for q in qubits] + [1 + n + q for q in qubits]
    t = _apply_left(t, sop, axes)
    return t.reshape(b, dim, dim)


def embed_operator(u: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Full ``2**n`` matrix of ``u`` acting on ``qubits`` (identity elsewhere)."""
    u = np.asarray(u, dtype=complex)
    qubits = _check_targets(qubits, n)
    if u.shape != (2 ** len(qubits),) * 2:
        raise ValueError(
            f"operator of shape {u.shape} does not act on {len(qubits)} qubits"
        )
    if len(qubits) == 1:
        q = qubits[0]
        return kron(np.eye(2**q), u, np.eye(2 ** (n - q - 1)))
    if qubits == list(range(n)):
        return u.copy()
    t = np.eye(2**n, dtype=complex).reshape([2] * n + [2**n])
    return _apply_left(t, u, qubits).reshape(2**n, 2**n)


def partial_trace(rho: np.ndarray, discard: Sequence[int]) -> np.ndarray:
    """Trace out the ``discard`` qubits; survivors keep their relative order.

    Leading batch dimensions, ``(..., D, D)``, are carried through.
    """
    rho = np.asarray(rho, dtype=complex)
    n = num_qubits_of(rho.shape[-1])
    discard = _check_targets(discard, n)
    if len(discard) >= n:
        raise ValueError("cannot discard every qubit")
    keep = [q for q in range(n) if q not in discard]
    lead = rho.shape[:-2]
    t = rho.reshape(lead + (2,) * (2 * n))
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    rows = list(letters[:n])
    cols = list(letters[n : 2 * n])
    for q in discard:
        cols[q] = rows[q]
    out = "".join(rows[q] for q in keep) + "".join(cols[q] for q in keep)
    t = np.einsum("..." + "".join(rows) + "".join(cols) + "->..." + out, t)
    d = 2 ** len(keep)
    return t.reshape(lead + (d, d))


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """Return ``exp(-i h t)`` for Hermitian ``h`` via its eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h, 1e-10):
        raise ValueError("expm_hermitian requires a Hermitian matrix")
    evals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * evals * t)) @ vecs.conj().T


def sample_haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of U(d) from the QR of a complex Ginibre matrix."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    re = rng.standard_normal((d, d))
    im = rng.standard_normal((d, d))
    z = (re + 1j * im) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def sample_haar_state(num_qubits: int, rng: np.random.Generator) -> np.ndarray:
    if num_qubits < 1:
        raise ValueError("need at least one qubit")
    d = 2**num_qubits
    re = rng.standard_normal(d)
    im = rng.standard_normal(d)
    psi = re + 1j * im
    return psi / np.linalg.norm(psi)


def sample_gue(d: int, rng: np.random.Generator) -> np.ndarray:
    """GUE matrix: unit-variance real diagonal, off-diagonal parts of variance 1/2."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    h = np.zeros((d, d), dtype=complex)
    h[np.diag_indices(d)] = rng.standard_normal(d)
    iu = np.triu_indices(d, k=1)
    m = len(iu[0])
    re = rng.standard_normal(m)
    im = rng.standard_normal(m)
    h[iu] = (re + 1j * im) * np.sqrt(0.5)
    h[(iu[1], iu[0])] = np.conj(h[iu])
    return h


def fidelity(phi: np.ndarray, rho: np.ndarray) -> float:
    """Overlap <phi|rho|phi> of a pure state with a density matrix."""
    phi = np.asarray(phi, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (phi.shape[0], phi.shape[0]):
        raise ValueError(f"state of length {phi.shape[0]} vs matrix {rho.shape}")
    f = np.vdot(phi, rho @ phi)
    if abs(f.imag) > 1e-10 or not -1e-9 <= f.real <= 1 + 1e-9:
        raise ValueError(f"fidelity {f!r} outside [0, 1]")
    return float(min(max(f.real, 0.0), 1.0))
