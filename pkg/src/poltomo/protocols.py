"""Measurement protocols for multi-photon polarization tomography.

A protocol is a weighted list of N-channel measurement operators.  Each
channel carries either a rank-1 polarization projector, parameterized by a
unit Bloch vector, or the loss operator I/2 standing for an unregistered
photon.  Three protocol variants are built here:

* ``ideal``        - every channel registers; all-projector elements.
* ``fuzzy``        - per channel, each projector plus the loss outcome;
                     exposures weight registration patterns by the
                     detector efficiency eta.
* ``coincidence``  - only the all-registered elements of the fuzzy
                     protocol (events with any lost photon discarded).

Exposure times are continuous weights in units of allocated state
preparations: the expected number of counts for element j is rate * t_j.
All variants form a unity decomposition, sum_j t_j Lambda_j = c * I, with
c = n for ideal and fuzzy and c = n * eta**N for coincidence.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
from dataclasses import dataclass
from functools import cached_property, reduce
from pathlib import Path
from typing import Sequence

import numpy as np

from .quantum import (
    IDENTITY_2,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    HermitianOperator,
    PureState,
)

BLOCH_NORM_TOL = 1e-12
SET_COMPLETENESS_TOL = 1e-10


class ChannelOpKind(str, enum.Enum):
    PROJECTOR = "projector"
    LOSS = "loss"


class ProtocolVariant(str, enum.Enum):
    IDEAL = "ideal"
    FUZZY = "fuzzy"
    COINCIDENCE = "coincidence"


def projector_matrix(bloch: Sequence[float]) -> np.ndarray:
    """Rank-1 projector (I + u.sigma)/2 for a unit Bloch vector u."""
    u = np.asarray(bloch, dtype=float)
    return 0.5 * (IDENTITY_2 + u[0] * PAULI_X + u[1] * PAULI_Y + u[2] * PAULI_Z)


@dataclass(frozen=True, eq=True)
class ChannelOperator:
    """Single-channel measurement operator: a projector or the loss I/2."""

    kind: ChannelOpKind
    bloch: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind is ChannelOpKind.PROJECTOR:
            if self.bloch is None:
                raise ValueError("projector channel operator needs a Bloch vector")
            u = np.asarray(self.bloch, dtype=float)
            if u.shape != (3,):
                raise ValueError(f"Bloch vector must have 3 components, got {u.shape}")
            if abs(float(np.linalg.norm(u)) - 1.0) > BLOCH_NORM_TOL:
                raise ValueError(f"Bloch vector is not unit length: {self.bloch}")
            object.__setattr__(self, "bloch", tuple(float(x) for x in u))
        elif self.bloch is not None:
            raise ValueError("loss channel operator takes no Bloch vector")

    def materialize(self) -> np.ndarray:
        """Dense 2x2 matrix of this channel operator."""
        if self.kind is ChannelOpKind.LOSS:
            return IDENTITY_2 / 2.0
        return projector_matrix(self.bloch)


def loss_operator() -> ChannelOperator:
    return ChannelOperator(ChannelOpKind.LOSS)


@dataclass(frozen=True, eq=False)
class SingleQubitProjectorSet:
    """Set of m1 unit Bloch directions defining the per-channel projectors.

    The directions must sum to projectors totalling (m1/2) * I, which is
    what makes the derived protocols form a unity decomposition.
    """

    directions: np.ndarray

    def __post_init__(self) -> None:
        dirs = np.asarray(self.directions, dtype=float).copy()
        if dirs.ndim != 2 or dirs.shape[1] != 3 or dirs.shape[0] < 1:
            raise ValueError(f"directions must have shape (m1, 3), got {dirs.shape}")
        norms = np.linalg.norm(dirs, axis=1)
        if np.max(np.abs(norms - 1.0)) > BLOCH_NORM_TOL:
            raise ValueError("all directions must be unit Bloch vectors")
        total = sum(projector_matrix(u) for u in dirs)
        target = (dirs.shape[0] / 2.0) * IDENTITY_2
        if np.max(np.abs(total - target)) > SET_COMPLETENESS_TOL:
            raise ValueError(
                "projector set does not resolve the identity: "
                "sum of projectors must equal (m1/2) * I"
            )
        dirs.setflags(write=False)
        object.__setattr__(self, "directions", dirs)

    @property
    def m1(self) -> int:
        return self.directions.shape[0]

    def projector(self, index: int) -> ChannelOperator:
        return ChannelOperator(ChannelOpKind.PROJECTOR, tuple(self.directions[index]))


def octahedron_set() -> SingleQubitProjectorSet:
    """The eight cube-vertex directions (+-1, +-1, +-1)/sqrt(3).

    Ordered lexicographically by sign pattern with -1 before +1.  The set
    splits into four antipodal pairs, matching a two-detector polarizing
    beam splitter readout, and satisfies sum P = 4 * I.
    """
    dirs = np.array(list(itertools.product([-1.0, 1.0], repeat=3))) / np.sqrt(3.0)
    return SingleQubitProjectorSet(dirs)


NAMED_SETS = {"octahedron8": octahedron_set}


@dataclass(frozen=True, eq=True)
class ProtocolElement:
    """One protocol row: N channel operators and an exposure weight."""

    channel_ops: tuple[ChannelOperator, ...]
    exposure: float

    def __post_init__(self) -> None:
        if len(self.channel_ops) < 1:
            raise ValueError("element needs at least one channel operator")
        # eta = 1 fuzzy protocols legitimately carry zero-exposure loss elements
        if not np.isfinite(self.exposure) or self.exposure < 0:
            raise ValueError(f"exposure must be finite and >= 0, got {self.exposure}")

    @property
    def registered_count(self) -> int:
        """Number of channels that register a photon (projector entries)."""
        return sum(1 for op in self.channel_ops if op.kind is ChannelOpKind.PROJECTOR)


@dataclass(frozen=True, eq=False)
class Protocol:
    """Immutable measurement protocol over ``num_photons`` channels."""

    variant: ProtocolVariant
    num_photons: int
    sample_size: float
    efficiency: float
    projector_set: SingleQubitProjectorSet
    elements: tuple[ProtocolElement, ...]

    def __post_init__(self) -> None:
        if self.num_photons < 1:
            raise ValueError(f"num_photons must be >= 1, got {self.num_photons}")
        if not (self.sample_size > 0 and np.isfinite(self.sample_size)):
            raise ValueError(f"sample_size must be positive, got {self.sample_size}")
        if not (0.0 < self.efficiency <= 1.0):
            raise ValueError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        m1 = self.projector_set.m1
        expected_m = {
            ProtocolVariant.IDEAL: m1**self.num_photons,
            ProtocolVariant.COINCIDENCE: m1**self.num_photons,
            ProtocolVariant.FUZZY: (m1 + 1) ** self.num_photons,
        }[self.variant]
        if len(self.elements) != expected_m:
            raise ValueError(
                f"{self.variant.value} protocol with m1={m1}, N={self.num_photons} "
                f"must have {expected_m} elements, got {len(self.elements)}"
            )
        for e in self.elements:
            if len(e.channel_ops) != self.num_photons:
                raise ValueError("every element must span all channels")

    @property
    def num_elements(self) -> int:
        return len(self.elements)

    @property
    def dim(self) -> int:
        return 2**self.num_photons

    @property
    def unity_constant(self) -> float:
        """Constant c in sum_j t_j Lambda_j = c * I."""
        if self.variant is ProtocolVariant.COINCIDENCE:
            return self.sample_size * self.efficiency**self.num_photons
        return self.sample_size

    @cached_property
    def exposures(self) -> np.ndarray:
        t = np.array([e.exposure for e in self.elements], dtype=float)
        t.setflags(write=False)
        return t

    @cached_property
    def operator_stack(self) -> np.ndarray:
        """Dense (m, s, s) stack of all element operators."""
        stack = np.stack([_element_matrix(e) for e in self.elements])
        stack.setflags(write=False)
        return stack


def _element_matrix(element: ProtocolElement) -> np.ndarray:
    return reduce(np.kron, (op.materialize() for op in element.channel_ops))


def element_operator(element: ProtocolElement) -> HermitianOperator:
    """Dense tensor-product operator of an element, channel 1 leftmost."""
    return HermitianOperator(_element_matrix(element))


def element_rate(element: ProtocolElement, psi: PureState) -> float:
    """Event rate <psi|Lambda|psi> of one element; lies in [0, 1]."""
    mat = _element_matrix(element)
    if mat.shape[0] != psi.dim:
        raise ValueError(f"dimension mismatch: element {mat.shape[0]}, state {psi.dim}")
    return float(np.vdot(psi.amplitudes, mat @ psi.amplitudes).real)


def element_rates(protocol: Protocol, psi: PureState) -> np.ndarray:
    """Event rates of all elements at once."""
    if protocol.dim != psi.dim:
        raise ValueError(f"dimension mismatch: protocol {protocol.dim}, state {psi.dim}")
    amps = psi.amplitudes
    applied = protocol.operator_stack.reshape(-1, protocol.dim) @ amps
    applied = applied.reshape(protocol.num_elements, protocol.dim)
    return (applied @ amps.conj()).real


def verify_unity_decomposition(protocol: Protocol) -> float:
    """Max-norm residual of sum_j t_j Lambda_j against c * I, relative to c."""
    total = np.einsum("j,jab->ab", protocol.exposures, protocol.operator_stack)
    c = protocol.unity_constant
    residual = np.max(np.abs(total - c * np.eye(protocol.dim)))
    return float(residual / c)


def _check_build_args(num_photons: int, sample_size: float, efficiency: float) -> None:
    if num_photons < 1:
        raise ValueError(f"num_photons must be >= 1, got {num_photons}")
    if not (sample_size > 0 and np.isfinite(sample_size)):
        raise ValueError(f"sample_size must be positive, got {sample_size}")
    if not (0.0 < efficiency <= 1.0):
        raise ValueError(f"efficiency must lie in (0, 1], got {efficiency}")


def build_ideal_protocol(
    projector_set: SingleQubitProjectorSet, num_photons: int, sample_size: float
) -> Protocol:
    """All tensor products of set projectors with equal exposures n*s/m."""
    _check_build_args(num_photons, sample_size, 1.0)
    m1 = projector_set.m1
    s = 2**num_photons
    exposure = sample_size * s / m1**num_photons
    projs = [projector_set.projector(i) for i in range(m1)]
    elements = tuple(
        ProtocolElement(tuple(projs[i] for i in combo), exposure)
        for combo in itertools.product(range(m1), repeat=num_photons)
    )
    return Protocol(
        ProtocolVariant.IDEAL, num_photons, float(sample_size), 1.0, projector_set, elements
    )


def _fuzzy_exposure(
    num_photons: int, sample_size: float, efficiency: float, m1: int, registered: int
) -> float:
    s = 2**num_photons
    return (
        sample_size
        * s
        / m1**registered
        * efficiency**registered
        * (1.0 - efficiency) ** (num_photons - registered)
    )


def build_fuzzy_protocol(
    projector_set: SingleQubitProjectorSet,
    num_photons: int,
    sample_size: float,
    efficiency: float,
) -> Protocol:
    """Per channel, every set projector plus the loss outcome.

    Elements are enumerated mixed-radix over channels with channel 1 most
    significant; the per-channel digit order is projector 0..m1-1, then
    loss.  The exposure of an element registering photons in exactly k
    channels is (n*s/m1**k) * eta**k * (1-eta)**(N-k).
    """
    _check_build_args(num_photons, sample_size, efficiency)
    m1 = projector_set.m1
    ops = [projector_set.projector(i) for i in range(m1)] + [loss_operator()]
    elements = []
    for combo in itertools.product(range(m1 + 1), repeat=num_photons):
        k = sum(1 for c in combo if c < m1)
        exposure = _fuzzy_exposure(num_photons, sample_size, efficiency, m1, k)
        elements.append(ProtocolElement(tuple(ops[c] for c in combo), exposure))
    return Protocol(
        ProtocolVariant.FUZZY,
        num_photons,
        float(sample_size),
        float(efficiency),
        projector_set,
        tuple(elements),
    )


def build_coincidence_protocol(
    projector_set: SingleQubitProjectorSet,
    num_photons: int,
    sample_size: float,
    efficiency: float,
) -> Protocol:
    """Only the all-registered elements, with exposures (n*s/m1**N) * eta**N.

    Models the conventional scheme that keeps N-fold coincidence events and
    discards everything else; the unity decomposition closes with the
    reduced constant c = n * eta**N.
    """
    _check_build_args(num_photons, sample_size, efficiency)
    m1 = projector_set.m1
    exposure = _fuzzy_exposure(num_photons, sample_size, efficiency, m1, num_photons)
    projs = [projector_set.projector(i) for i in range(m1)]
    elements = tuple(
        ProtocolElement(tuple(projs[i] for i in combo), exposure)
        for combo in itertools.product(range(m1), repeat=num_photons)
    )
    return Protocol(
        ProtocolVariant.COINCIDENCE,
        num_photons,
        float(sample_size),
        float(efficiency),
        projector_set,
        elements,
    )


def build_protocol(
    variant: ProtocolVariant,
    projector_set: SingleQubitProjectorSet,
    num_photons: int,
    sample_size: float,
    efficiency: float,
) -> Protocol:
    """Dispatch to the builder for ``variant``; ideal ignores the efficiency."""
    if variant is ProtocolVariant.IDEAL:
        return build_ideal_protocol(projector_set, num_photons, sample_size)
    if variant is ProtocolVariant.FUZZY:
        return build_fuzzy_protocol(projector_set, num_photons, sample_size, efficiency)
    return build_coincidence_protocol(projector_set, num_photons, sample_size, efficiency)


# --- serialization ---------------------------------------------------------
#
# The on-disk form is a JSON document:
#   {"variant", "N", "n", "eta", "m1", "directions", "elements"}
# with elements as {"channel_ops": [...], "exposure": t}.  Channel ops are
# encoded as the projector's index into "directions", or -1 for the loss
# outcome.  Floats round-trip exactly through repr.


def _direction_index(protocol_set: SingleQubitProjectorSet) -> dict:
    return {tuple(d): i for i, d in enumerate(protocol_set.directions)}


def protocol_to_dict(protocol: Protocol) -> dict:
    index = _direction_index(protocol.projector_set)
    elements = []
    for e in protocol.elements:
        ops = []
        for op in e.channel_ops:
            if op.kind is ChannelOpKind.LOSS:
                ops.append(-1)
            else:
                try:
                    ops.append(index[op.bloch])
                except KeyError:
                    raise ValueError(
                        f"element direction {op.bloch} is not in the projector set"
                    ) from None
        elements.append({"channel_ops": ops, "exposure": e.exposure})
    return {
        "variant": protocol.variant.value,
        "N": protocol.num_photons,
        "n": protocol.sample_size,
        "eta": protocol.efficiency,
        "m1": protocol.projector_set.m1,
        "directions": [list(d) for d in protocol.projector_set.directions],
        "elements": elements,
    }


def protocol_from_dict(data: dict) -> Protocol:
    try:
        variant = ProtocolVariant(data["variant"])
        directions = np.asarray(data["directions"], dtype=float)
        projector_set = SingleQubitProjectorSet(directions)
        elements = []
        for raw in data["elements"]:
            ops = tuple(
                loss_operator() if i == -1 else projector_set.projector(i)
                for i in raw["channel_ops"]
            )
            elements.append(ProtocolElement(ops, float(raw["exposure"])))
        return Protocol(
            variant,
            int(data["N"]),
            float(data["n"]),
            float(data["eta"]),
            projector_set,
            tuple(elements),
        )
    except KeyError as exc:
        raise ValueError(f"protocol document is missing field {exc}") from None


def protocol_fingerprint(protocol: Protocol) -> str:
    """Content hash of a protocol, stable across runs and platforms."""
    payload = json.dumps(protocol_to_dict(protocol), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def save_protocol(protocol: Protocol, path: str | Path) -> None:
    Path(path).write_text(json.dumps(protocol_to_dict(protocol), indent=2) + "\n")


def load_protocol(path: str | Path) -> Protocol:
    return protocol_from_dict(json.loads(Path(path).read_text()))
