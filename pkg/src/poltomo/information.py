"""Accuracy theory for tomography protocols.

The central object is the complete information matrix

    H = 2 * sum_j (t_j / rate_j) * v_j v_j^T,    v_j = realify(Lambda_j psi),

a real 2s x 2s generalization of the Fisher information matrix over the
realified state vector.  Two directions of the realified space carry no
physical information: the normalization direction (the realified state
itself) and the global-phase direction (the realified i * psi).  The
spectrum restricted to their orthogonal complement has 2s - 2 entries,
one per independent state parameter, and bounds the reconstruction
fluctuations: fidelity losses behave like 1 - F = sum_j d_j xi_j^2 with
independent standard-normal xi and loss coefficients d_j equal to half
the inverse projected eigenvalues.

The trace of H, normalized to 2ns, is the fraction of the ideal
information a protocol gathers.  Closed forms: 1 for the ideal protocol,
eta**N for N-fold coincidence, and ((1 + eta)/2)**N for the fuzzy
protocol, independent of the state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from scipy.linalg import null_space
from scipy.stats import chi2

from .protocols import Protocol, ProtocolVariant
from .quantum import PureState, realify_state

ZERO_RATE_TOL = 1e-14
ZERO_APPLIED_TOL = 1e-7
SPECTRUM_FLOOR_REL = 1e-10


class InformationallyIncompleteError(RuntimeError):
    """The protocol leaves some state directions with no information."""


def _rated_terms(protocol: Protocol, psi: PureState) -> Iterator[tuple[float, float, np.ndarray]]:
    """Yield (exposure, rate, Lambda psi) for elements that contribute.

    Elements with zero exposure contribute nothing.  A vanishing rate on a
    positive-semidefinite operator forces Lambda psi = 0, so such elements
    contribute nothing either; a vanishing rate with a non-vanishing
    applied vector means the operator is broken and is rejected.
    """
    if protocol.dim != psi.dim:
        raise ValueError(f"dimension mismatch: protocol {protocol.dim}, state {psi.dim}")
    amps = psi.amplitudes
    s = protocol.dim
    applied = (protocol.operator_stack.reshape(-1, s) @ amps).reshape(-1, s)
    rates = (applied @ amps.conj()).real
    for t, lam, w in zip(protocol.exposures, rates, applied):
        if t == 0.0:
            continue
        if lam < ZERO_RATE_TOL:
            if np.linalg.norm(w) >= ZERO_APPLIED_TOL:
                raise ValueError(
                    "element has zero rate but non-zero applied vector; "
                    "operator is not positive semidefinite"
                )
            continue
        yield float(t), float(lam), w


def information_matrix(protocol: Protocol, psi: PureState) -> np.ndarray:
    """Complete information matrix of shape (2s, 2s); symmetric PSD, linear in n."""
    two_s = 2 * protocol.dim
    h = np.zeros((two_s, two_s))
    for t, lam, w in _rated_terms(protocol, psi):
        v = np.concatenate([w.real, w.imag])
        h += (2.0 * t / lam) * np.outer(v, v)
    return 0.5 * (h + h.T)


def gauge_projected_spectrum(h: np.ndarray, psi: PureState) -> np.ndarray:
    """Eigenvalues of H on the complement of the two gauge directions.

    Returns 2s - 2 eigenvalues sorted descending.  Eigenvalues below
    1e-10 times the largest signal that the protocol is informationally
    incomplete for this state and raise.
    """
    psi_r = realify_state(psi)
    phase_r = np.concatenate([-psi.amplitudes.imag, psi.amplitudes.real])
    basis = null_space(np.vstack([psi_r, phase_r]))
    if basis.shape[1] != psi_r.size - 2:
        raise ValueError("gauge directions are degenerate; state must be normalized")
    projected = basis.T @ h @ basis
    eigenvalues = np.linalg.eigvalsh(0.5 * (projected + projected.T))
    scale = float(np.max(np.abs(np.linalg.eigvalsh(h)))) if h.size else 0.0
    floor = SPECTRUM_FLOOR_REL * scale
    deficient = int(np.sum(eigenvalues <= floor))
    if deficient:
        raise InformationallyIncompleteError(
            f"{deficient} of {eigenvalues.size} informative directions carry "
            f"no information (eigenvalues <= {floor:.3e})"
        )
    return eigenvalues[::-1].copy()


def loss_statistics(spectrum: np.ndarray) -> tuple[np.ndarray, float]:
    """Loss coefficients d_j = 1/(2 h_j) and the mean fidelity loss sum d_j."""
    spectrum = np.asarray(spectrum, dtype=float)
    if np.any(spectrum <= 0):
        raise ValueError("spectrum entries must be positive")
    coefficients = 1.0 / (2.0 * spectrum)
    return coefficients, float(coefficients.sum())


_SAMPLE_CHUNK = 100_000


def sample_loss_distribution(
    loss_coefficients: np.ndarray, num_samples: int, seed: int
) -> np.ndarray:
    """Monte Carlo draw of z = -log10(1 - F) under the fluctuation model.

    Each sample is z for a loss 1 - F = sum_j d_j xi_j^2 with fresh
    standard-normal xi; deterministic given the seed.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    d = np.asarray(loss_coefficients, dtype=float)
    rng = np.random.default_rng(seed)
    out = np.empty(num_samples)
    for start in range(0, num_samples, _SAMPLE_CHUNK):
        stop = min(start + _SAMPLE_CHUNK, num_samples)
        xi = rng.standard_normal((stop - start, d.size))
        losses = np.maximum((xi * xi) @ d, np.finfo(float).tiny)
        out[start:stop] = -np.log10(losses)
    return out


def loss_to_z(loss: np.ndarray | float) -> np.ndarray | float:
    """Number-of-nines transform z = -log10(1 - F) applied to a loss 1 - F."""
    return -np.log10(np.maximum(loss, np.finfo(float).tiny))


def normalized_full_information(protocol: Protocol, psi: PureState) -> float:
    """Trace of H over 2ns: the gathered fraction of the ideal information."""
    acc = 0.0
    for t, lam, w in _rated_terms(protocol, psi):
        acc += t * float(np.vdot(w, w).real) / lam
    return acc / (protocol.sample_size * protocol.dim)


def closed_form_information(variant: ProtocolVariant, num_photons: int, efficiency: float) -> float:
    """Known closed form of the normalized full information per variant."""
    if variant is ProtocolVariant.IDEAL:
        return 1.0
    if variant is ProtocolVariant.COINCIDENCE:
        return efficiency**num_photons
    return ((1.0 + efficiency) / 2.0) ** num_photons


@dataclass(frozen=True, eq=False)
class InformationAnalysis:
    """Bundle of the information matrix and derived accuracy statistics."""

    matrix: np.ndarray
    spectrum: np.ndarray
    loss_coefficients: np.ndarray
    mean_loss: float
    normalized_information: float


def analyze_protocol(protocol: Protocol, psi: PureState) -> InformationAnalysis:
    h = information_matrix(protocol, psi)
    spectrum = gauge_projected_spectrum(h, psi)
    coefficients, mean_loss = loss_statistics(spectrum)
    return InformationAnalysis(
        matrix=h,
        spectrum=spectrum,
        loss_coefficients=coefficients,
        mean_loss=mean_loss,
        normalized_information=normalized_full_information(protocol, psi),
    )


def analysis_to_dict(analysis: InformationAnalysis) -> dict:
    return {
        "spectrum": [float(x) for x in analysis.spectrum],
        "loss_coefficients": [float(x) for x in analysis.loss_coefficients],
        "mean_loss": analysis.mean_loss,
        "normalized_information": analysis.normalized_information,
    }


class GofResult(NamedTuple):
    statistic: float
    degrees_of_freedom: int
    p_value: float


def chi_squared_gof(
    empirical: np.ndarray, theoretical: np.ndarray, num_bins: int
) -> GofResult:
    """Pearson chi-squared of an empirical sample against a reference sample.

    Bins are equiprobable quantiles of the theoretical sample; bin
    probabilities are estimated from it as well, so it should be much
    larger (100x or more) than the empirical one for the probabilities to
    be treated as exact -- that ratio is the caller's responsibility.
    Expected counts below 5 are rejected with a hint to use fewer bins.
    """
    empirical = np.asarray(empirical, dtype=float)
    theoretical = np.asarray(theoretical, dtype=float)
    if num_bins < 2:
        raise ValueError("num_bins must be >= 2")
    if empirical.size < 5 * num_bins:
        raise ValueError(
            f"empirical sample of {empirical.size} is too small for {num_bins} "
            "bins; use fewer bins (need >= 5 expected counts per bin)"
        )
    quantiles = np.arange(1, num_bins) / num_bins
    edges = np.quantile(theoretical, quantiles)
    probabilities = np.bincount(
        np.searchsorted(edges, theoretical, side="right"), minlength=num_bins
    ) / theoretical.size
    expected = probabilities * empirical.size
    if np.any(expected < 5):
        raise ValueError(
            f"minimum expected bin count {expected.min():.2f} is below 5; "
            "use fewer bins"
        )
    observed = np.bincount(
        np.searchsorted(edges, empirical, side="right"), minlength=num_bins
    )
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    dof = num_bins - 1
    return GofResult(statistic, dof, float(chi2.sf(statistic, dof)))
