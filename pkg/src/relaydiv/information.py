"""Mutual information of the effective channel and the outage indicator.

All logarithms are base 2; rates are in bits per channel use.  The factor
1/2 in every expression reflects the two-slot half-duplex protocol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel_model import ChannelRealization, EffectiveChannel
from .errors import InternalConsistencyError, InvalidParameterError
from .relay_schemes import EIGENVALUE_CLAMP_TOL, GramianSummary


@dataclass(frozen=True)
class MiResult:
    """Exact mutual information and its Jensen upper bound, bits/use."""

    exact_mi: float
    jensen_mi: float


def mutual_information(heff: EffectiveChannel, rho: float) -> float:
    """(1/2N) sum_n log2(1 + rho lambda_n(H H^H))."""
    _check_rho(rho)
    m = heff.matrix
    eig = np.linalg.eigvalsh(m @ m.conj().T)
    if eig.size and eig[0] < EIGENVALUE_CLAMP_TOL:
        raise InternalConsistencyError(
            f"H H^H eigenvalue {eig[0]:.3e} below clamp tolerance"
        )
    eig = np.clip(eig, 0.0, None)
    n = heff.block_length
    return float(np.sum(np.log2(1.0 + rho * eig)) / (2.0 * n))


def jensen_mi(heff: EffectiveChannel, rho: float) -> float:
    """(1/2) log2(1 + (rho/N) ||H||_F^2), tight iff all eigenvalues equal."""
    _check_rho(rho)
    n = heff.block_length
    fro2 = float(np.sum(np.abs(heff.matrix) ** 2))
    return 0.5 * float(np.log2(1.0 + rho / n * fro2))


def jensen_mi_via_gramian(
    gram: GramianSummary, ch: ChannelRealization, rho: float
) -> float:
    """Jensen bound through the Gramian quadratic form.

    ||H_eff||_F^2 = h~^H gram h~ / (1 + ||h||^2) with h~ = h o f, so the
    bound equals (1/2) log2(1 + (rho/N) h~^H gram h~ / (1 + ||h||^2)); it
    must agree with the full-matrix path to 1e-10 relative.
    """
    _check_rho(rho)
    quad = gramian_quadratic_form(gram, ch)
    return 0.5 * float(np.log2(1.0 + rho / gram.block_length * quad))


def gramian_quadratic_form(gram: GramianSummary, ch: ChannelRealization) -> float:
    """h~^H gram h~ / (1 + ||h||^2); equals the squared Frobenius norm of
    the effective channel for the scheme that produced the Gramian."""
    ht = ch.h_tilde
    quad = float(np.real(ht.conj() @ gram.gram @ ht))
    denom = 1.0 + float(np.linalg.norm(ch.h) ** 2)
    return max(quad, 0.0) / denom


def mi_result(heff: EffectiveChannel, rho: float) -> MiResult:
    return MiResult(mutual_information(heff, rho), jensen_mi(heff, rho))


def is_outage(mi: float, r: float, rho: float) -> bool:
    """True iff mi < r log2(rho); strict inequality, so r = 0 never outages."""
    if rho <= 1:
        raise InvalidParameterError("rho must exceed 1 for a rate target")
    return mi < r * np.log2(rho)


def _check_rho(rho: float) -> None:
    if rho <= 0:
        raise InvalidParameterError("rho must be positive")
