"""Dense linear algebra for the two-qubit (nuclear x electron) space.

Qubit 1 is the nitrogen nuclear spin and qubit 2 the NV electron spin; the
tensor order is ``qubit1 (x) qubit2`` so computational index = 2*q1 + q2.

    q1 = 0  <->  m_I = +1        q2 = 0  <->  m_s =  0
    q1 = 1  <->  m_I =  0        q2 = 1  <->  m_s = -1

Physical states are labelled 1..4 = |0,+1>, |0,0>, |-1,+1>, |-1,0>
(electron quantum number first). ``PHYS_TO_COMP`` converts between the
two orderings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DIM = 4
HERMITIAN_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_1Q = {"I": I2, "X": SX, "Y": SY, "Z": SZ}

# physical label (m_s, m_I) in the usual listing order -> computational basis index
PHYSICAL_LABELS = ((0, +1), (0, 0), (-1, +1), (-1, 0))
PHYS_TO_COMP = np.array([0, 2, 1, 3])


def physical_to_computational(m_s: int, m_i: int) -> int:
    """Return the computational basis index of physical state |m_s, m_I>."""
    if m_s not in (0, -1) or m_i not in (+1, 0):
        raise ValueError(f"state |{m_s},{m_i}> is outside the qubit subspace")
    q1 = 0 if m_i == +1 else 1
    q2 = 0 if m_s == 0 else 1
    return 2 * q1 + q2


def to_physical_order(values_comp: np.ndarray) -> np.ndarray:
    """Reorder a length-4 vector from computational to physical order."""
    return np.asarray(values_comp)[PHYS_TO_COMP]


def to_computational_order(values_phys: np.ndarray) -> np.ndarray:
    # the permutation is an involution
    return np.asarray(values_phys)[PHYS_TO_COMP]


@dataclass(frozen=True)
class PauliString:
    label: str
    coefficient: float = 1.0

    def __post_init__(self):
        if len(self.label) != 2 or any(c not in PAULI_1Q for c in self.label):
            raise ValueError(f"invalid two-qubit Pauli label {self.label!r}")
        if not np.isfinite(self.coefficient):
            raise ValueError(f"non-finite coefficient for {self.label}")
        object.__setattr__(self, "coefficient", float(self.coefficient))


@dataclass(frozen=True)
class PauliSum:
    """Weighted sum of two-qubit Pauli strings.

    Duplicate labels are merged on construction, keeping first-seen order.
    """

    terms: tuple[PauliString, ...] = field(default_factory=tuple)

    def __post_init__(self):
        merged: dict[str, float] = {}
        for t in self.terms:
            merged[t.label] = merged.get(t.label, 0.0) + t.coefficient
        object.__setattr__(
            self, "terms", tuple(PauliString(k, v) for k, v in merged.items())
        )

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence]) -> PauliSum:
        return cls(tuple(PauliString(str(lbl), float(c)) for lbl, c in pairs))

    def to_pairs(self) -> list[list]:
        return [[t.label, t.coefficient] for t in self.terms]

    def coefficient(self, label: str) -> float:
        for t in self.terms:
            if t.label == label:
                return t.coefficient
        return 0.0

    def __len__(self) -> int:
        return len(self.terms)


def default_hamiltonian() -> PauliSum:
    """H = X1 X2 + Z1 + Z2."""
    return PauliSum.from_pairs([("XX", 1.0), ("ZI", 1.0), ("IZ", 1.0)])


def pauli_matrix(p: PauliString | str, coefficient: float | None = None) -> np.ndarray:
    if isinstance(p, str):
        p = PauliString(p, 1.0 if coefficient is None else coefficient)
    return p.coefficient * np.kron(PAULI_1Q[p.label[0]], PAULI_1Q[p.label[1]])


def pauli_sum_matrix(h: PauliSum) -> np.ndarray:
    m = np.zeros((DIM, DIM), dtype=complex)
    for t in h.terms:
        m += pauli_matrix(t)
    return m


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def ket(index: int) -> np.ndarray:
    v = np.zeros(DIM, dtype=complex)
    v[index] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def validate_state(psi: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (DIM,):
        raise ValueError(f"state vector must have shape ({DIM},), got {psi.shape}")
    if not np.all(np.isfinite(psi)):
        raise ValueError("state vector has non-finite amplitudes")
    norm = np.vdot(psi, psi).real
    if abs(norm - 1.0) > tol:
        raise ValueError(f"state vector norm^2 = {norm!r}, expected 1")
    return psi


def validate_density_matrix(rho: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0]
    if rho.shape != (n, n) or n not in (2, DIM):
        raise ValueError(f"density matrix must be 2x2 or 4x4, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    if not is_hermitian(rho, tol):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError(f"density matrix trace = {np.trace(rho).real!r}")
    if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def expectation(rho: np.ndarray, obs: PauliSum | np.ndarray) -> float:
    """Tr(rho O) for a density matrix, or <psi|O|psi> for a state vector."""
    o = pauli_sum_matrix(obs) if isinstance(obs, PauliSum) else np.asarray(obs)
    if not is_hermitian(o):
        raise ValueError("observable is not Hermitian")
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = projector(rho)
    value = np.trace(rho @ o)
    if abs(value.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary residue {value.imag!r}")
    return float(value.real)


def _jacobi_eigh(m: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    a = np.array(m, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(1.0, float(np.linalg.norm(a)))
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a[offdiag]) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                theta = 0.5 * np.arctan2(2.0 * mag, (a[q, q] - a[p, p]).real)
                c, s = np.cos(theta), np.sin(theta)
                # 2x2 unitary acting on columns (p, q)
                g = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = g.conj().T @ a[idx, :]
                v[:, idx] = v[:, idx] @ g
    else:
        raise RuntimeError("Jacobi eigensolver did not converge")
    return np.diag(a).real.copy(), v


def hermitian_eigensystem(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns).

    Cyclic complex Jacobi rotations; sized for the 4x4 problems here but
    works for any small Hermitian matrix.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("eigensystem input must be a square matrix")
    if not is_hermitian(m):
        raise ValueError("eigensystem input is not Hermitian")
    m = 0.5 * (m + m.conj().T)
    w, v = _jacobi_eigh(m)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def ground_state(h: PauliSum | np.ndarray) -> tuple[float, np.ndarray]:
    m = pauli_sum_matrix(h) if isinstance(h, PauliSum) else h
    w, v = hermitian_eigensystem(m)
    return float(w[0]), v[:, 0]


def closed_form_ground_state() -> np.ndarray:
    """Closed-form ground state of X1X2 + Z1 + Z2 (eigenvalue -sqrt 5)."""
    r5 = np.sqrt(5.0)
    a = -np.sqrt(50 - 20 * r5) / 10
    b = np.sqrt(50 + 20 * r5) / 10
    return np.array([a, 0, 0, b], dtype=complex)


def fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """<target|rho|target>; accepts a state vector for ``rho`` too."""
    target = np.asarray(target, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        return float(abs(np.vdot(target, rho)) ** 2)
    f = np.vdot(target, rho @ target).real
    return float(min(1.0, max(0.0, f)))


def partial_trace(rho: np.ndarray, keep: int) -> np.ndarray:
    """Reduced 2x2 state of qubit ``keep`` (1 = nuclear, 2 = electron)."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = projector(rho)
    t = rho.reshape(2, 2, 2, 2)
    if keep == 1:
        return np.einsum("ajbj->ab", t)
    if keep == 2:
        return np.einsum("iaib->ab", t)
    raise ValueError(f"qubit index must be 1 or 2, got {keep}")


def bloch_vector(rho2: np.ndarray) -> tuple[float, float, float]:
    rho2 = np.asarray(rho2, dtype=complex)
    return tuple(float(np.trace(rho2 @ s).real) for s in (SX, SY, SZ))


def purity(rho: np.ndarray) -> float:
    return float(np.trace(rho @ rho).real)


def entanglement_entropy(psi: np.ndarray) -> float:
    """Von Neumann entropy (nats) of the nuclear reduced state of a pure state."""
    w = np.linalg.eigvalsh(partial_trace(psi, 1))
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log(w)))
