"""Synthetic measurement outcomes: expected and Poisson-sampled counts.

Counts are drawn independently per element from Poisson(rate * exposure).
Each element uses its own PCG64 stream seeded from (seed, element index),
so a record is identical no matter in what order or on how many threads
the elements are evaluated.  Total exposure is fixed, not total counts, so
the summed count of a record is itself random.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .protocols import Protocol, element_rates, protocol_fingerprint
from .quantum import PureState

MAX_SEED = 2**64 - 1


@dataclass(frozen=True, eq=False)
class CountsRecord:
    """Per-element event counts plus the seed and protocol that produced them."""

    counts: np.ndarray
    seed: int
    protocol_fingerprint: str

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if not np.issubdtype(counts.dtype, np.integer):
            raise ValueError("counts must be integers")
        if counts.ndim != 1:
            raise ValueError(f"counts must be a vector, got shape {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if not (0 <= self.seed <= MAX_SEED):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def expected_counts(protocol: Protocol, psi: PureState) -> np.ndarray:
    """Mean count per element, rate * exposure; sums to the unity constant.

    Elements orthogonal to the state can evaluate to rates a few ulp below
    zero; those are clamped so the means stay valid Poisson parameters.
    """
    return np.maximum(element_rates(protocol, psi) * protocol.exposures, 0.0)


def sample_counts(protocol: Protocol, psi: PureState, seed: int) -> CountsRecord:
    """Draw one Poisson counts record; deterministic given (protocol, psi, seed)."""
    if not (0 <= seed <= MAX_SEED):
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    means = expected_counts(protocol, psi)
    counts = np.empty(means.size, dtype=np.int64)
    for j, mu in enumerate(means):
        counts[j] = np.random.default_rng([seed, j]).poisson(mu)
    return CountsRecord(counts, seed, protocol_fingerprint(protocol))


def counts_to_dict(record: CountsRecord) -> dict:
    return {
        "seed": record.seed,
        "protocol_fingerprint": record.protocol_fingerprint,
        "counts": [int(k) for k in record.counts],
    }


def counts_from_dict(data: dict) -> CountsRecord:
    try:
        return CountsRecord(
            np.asarray(data["counts"], dtype=np.int64),
            int(data["seed"]),
            str(data["protocol_fingerprint"]),
        )
    except KeyError as exc:
        raise ValueError(f"counts document is missing field {exc}") from None


def save_counts(record: CountsRecord, path: str | Path) -> None:
    Path(path).write_text(json.dumps(counts_to_dict(record), indent=2) + "\n")


def load_counts(path: str | Path) -> CountsRecord:
    return counts_from_dict(json.loads(Path(path).read_text()))
