"""Complex linear algebra for small multi-qubit systems.

States and operators are dense; dimensions stay at s = 2**N with N of a
few photons, so nothing here is optimized beyond plain numpy.  The module
also provides the real embedding (doubled dimension, stacked real and
imaginary parts) used by the information-matrix analysis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized pure state of ``num_photons`` polarization qubits.

    ``amplitudes`` has length s = 2**num_photons in the computational
    basis; per channel, index bit 0 is |H> and bit 1 is |V>, with channel
    1 as the most significant bit.
    """

    amplitudes: np.ndarray
    num_photons: int

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1).copy()
        if self.num_photons < 1:
            raise ValueError(f"num_photons must be >= 1, got {self.num_photons}")
        if amps.size != 2**self.num_photons:
            raise ValueError(
                f"expected {2**self.num_photons} amplitudes for "
                f"{self.num_photons} photons, got {amps.size}"
            )
        norm_sq = float(np.vdot(amps, amps).real)
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized: <psi|psi> = {norm_sq!r}")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence[complex]) -> "PureState":
        """Build a state from raw amplitudes, inferring the photon number."""
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(np.log2(amps.size) + 0.5)
        if 2**n != amps.size:
            raise ValueError(f"amplitude count {amps.size} is not a power of two")
        return cls(amps, n)

    @property
    def dim(self) -> int:
        return self.amplitudes.size


def ghz_state(num_photons: int) -> PureState:
    """Maximally entangled state (|H..H> + |V..V>)/sqrt(2)."""
    if num_photons < 1:
        raise ValueError(f"num_photons must be >= 1, got {num_photons}")
    s = 2**num_photons
    amps = np.zeros(s, dtype=complex)
    amps[0] = amps[-1] = 1.0 / np.sqrt(2.0)
    return PureState(amps, num_photons)


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Hermitian, positive-semidefinite matrix wrapper.

    Construction validates hermiticity (entrywise to 1e-12) and positive
    semidefiniteness (eigenvalues >= -1e-10).
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex).copy()
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
        if dev > HERMITIAN_TOL:
            raise ValueError(f"operator is not Hermitian: max |M - M^+| = {dev:.3e}")
        min_eig = float(np.linalg.eigvalsh(m)[0])
        if min_eig < -PSD_TOL:
            raise ValueError(
                f"operator is not positive semidefinite: min eigenvalue {min_eig:.3e}"
            )
        object.__setattr__(self, "matrix", _readonly(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def tensor_product(factors: Sequence[HermitianOperator]) -> HermitianOperator:
    """Kronecker product of operators, first factor slowest-varying."""
    if len(factors) == 0:
        raise ValueError("tensor_product needs at least one factor")
    return HermitianOperator(reduce(np.kron, (f.matrix for f in factors)))


def fidelity(a: PureState, b: PureState) -> float:
    """Squared overlap |<a|b>|^2, invariant under global phases."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    f = float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
    return min(f, 1.0)


def realify_matrix(m: np.ndarray) -> np.ndarray:
    """Real 2d x 2d embedding [[Re, -Im], [Im, Re]] of a complex matrix.

    The embedding is an algebra homomorphism: products and sums of complex
    matrices map to products and sums of their embeddings.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def realify_operator(op: HermitianOperator | np.ndarray) -> np.ndarray:
    """Real embedding of a Hermitian operator; symmetric by construction.

    Accepts either a :class:`HermitianOperator` or a raw matrix; a raw
    matrix is rejected if it is not Hermitian within 1e-12.
    """
    if isinstance(op, HermitianOperator):
        return realify_matrix(op.matrix)
    m = np.asarray(op, dtype=complex)
    dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if dev > HERMITIAN_TOL:
        raise ValueError(f"operator is not Hermitian: max |M - M^+| = {dev:.3e}")
    return realify_matrix(m)


def realify_state(psi: PureState | np.ndarray) -> np.ndarray:
    """Real vector (Re psi; Im psi) of doubled length; preserves the norm."""
    amps = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
    return np.concatenate([amps.real, amps.imag])
