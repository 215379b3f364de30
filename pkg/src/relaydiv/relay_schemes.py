"""Linear relay transformation families and their Gramian.

A scheme is a set of K complex N x N matrices G_i, each satisfying the
unitary-scaling constraint G_i G_i^H = I/N.  Built-in families are cyclic
delay diversity (scaled cyclic-shift permutations) and phase rolling
(scaled progressive phase ramps); the two are DFT duals of each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InternalConsistencyError, InvalidParameterError, SchemeInvalidError

# Elementwise tolerance on |G G^H - I/N|.
UNITARY_SCALING_TOL = 1e-12

# Hermitian eigenvalues more negative than this indicate a bug.
EIGENVALUE_CLAMP_TOL = -1e-10


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RelayScheme:
    """K linear transformation matrices, immutable after construction."""

    matrices: tuple[np.ndarray, ...]
    name: str = "custom"

    def __post_init__(self):
        if len(self.matrices) == 0:
            raise InvalidParameterError("scheme needs at least one matrix")
        mats = tuple(_as_readonly(g) for g in self.matrices)
        n = mats[0].shape[0]
        for i, g in enumerate(mats):
            if g.ndim != 2 or g.shape != (n, n):
                raise InvalidParameterError(
                    f"matrix {i} has shape {g.shape}, expected ({n}, {n})"
                )
        if len(mats) > n:
            raise InvalidParameterError(
                f"relay count K={len(mats)} exceeds block length N={n}"
            )
        object.__setattr__(self, "matrices", mats)

    @property
    def num_relays(self) -> int:
        return len(self.matrices)

    @property
    def block_length(self) -> int:
        return self.matrices[0].shape[0]

    def stacked(self) -> np.ndarray:
        """All matrices as one (K, N, N) array."""
        return np.stack(self.matrices)


@dataclass(frozen=True)
class GramianSummary:
    """Normalized trace inner products of the scheme matrices.

    gram[r, c] = trace(G_c G_r^H), a Hermitian PSD K x K matrix.  Under the
    unitary-scaling constraint this equals trace(U_c U_r^H)/N for the
    unitary factors U_i = sqrt(N) G_i, so every diagonal entry is exactly 1
    and the trace equals K.  Its eigenvalue extremes govern the
    Jensen-outage bracket; the block length rides along because the
    quadratic-form identity for the Jensen bound carries a 1/N.
    """

    gram: np.ndarray
    lambda_min: float
    lambda_max: float
    block_length: int
    eigenvalues: np.ndarray = field(repr=False, default=None)


def cyclic_delay_scheme(num_relays: int, block_length: int) -> RelayScheme:
    """G_i = P_i / sqrt(N) where P_i cyclically shifts a vector up by i-1."""
    _check_kn(num_relays, block_length)
    n = block_length
    eye = np.eye(n)
    mats = [np.roll(eye, i, axis=1).astype(complex) / np.sqrt(n) for i in range(num_relays)]
    return RelayScheme(tuple(mats), name="cdd")


def phase_rolling_scheme(num_relays: int, block_length: int) -> RelayScheme:
    """G_i = diag(exp(j 2 pi n (i-1) / N)) / sqrt(N) for n = 0..N-1."""
    _check_kn(num_relays, block_length)
    n = block_length
    grid = np.arange(n)
    mats = []
    for i in range(num_relays):
        phases = np.exp(2j * np.pi * grid * i / n)
        mats.append(np.diag(phases) / np.sqrt(n))
    return RelayScheme(tuple(mats), name="phase-rolling")


def dft_matrix(block_length: int) -> np.ndarray:
    """Unitary DFT matrix, [F]_{ln} = exp(-j 2 pi (l-1)(n-1) / N) / sqrt(N)."""
    if block_length < 1:
        raise InvalidParameterError("block length must be >= 1")
    n = block_length
    grid = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(grid, grid) / n) / np.sqrt(n)


def custom_scheme(matrices, name: str = "custom") -> RelayScheme:
    """Build a scheme from user matrices, enforcing G_i G_i^H = I/N.

    Raises SchemeInvalidError naming the first offending matrix and its
    maximum elementwise deviation from I/N.
    """
    mats = [np.asarray(g, dtype=complex) for g in matrices]
    if not mats:
        raise InvalidParameterError("scheme needs at least one matrix")
    n = mats[0].shape[0] if mats[0].ndim == 2 else 0
    for i, g in enumerate(mats):
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] != n:
            raise InvalidParameterError(
                f"matrix {i} has shape {g.shape}, expected square ({n}, {n})"
            )
        dev = np.abs(g @ g.conj().T - np.eye(n) / n).max()
        if dev > UNITARY_SCALING_TOL:
            raise SchemeInvalidError(i, float(dev))
    return RelayScheme(tuple(mats), name=name)


def gramian(scheme: RelayScheme) -> GramianSummary:
    """Gramian with entries trace(G_c G_r^H) and its eigenvalue extremes."""
    g = scheme.stacked()
    # gram[r, c] = tr(G_c G_r^H) = sum_{ab} G_c[a,b] conj(G_r[a,b])
    gram = np.einsum("cab,rab->rc", g, g.conj())
    gram = 0.5 * (gram + gram.conj().T)  # symmetrize roundoff
    eig = np.linalg.eigvalsh(gram)
    if eig[0] < EIGENVALUE_CLAMP_TOL:
        raise InternalConsistencyError(
            f"Gramian eigenvalue {eig[0]:.3e} below clamp tolerance"
        )
    eig = np.clip(eig, 0.0, None)
    return GramianSummary(
        gram=_as_readonly(gram),
        lambda_min=float(eig[0]),
        lambda_max=float(eig[-1]),
        block_length=scheme.block_length,
        eigenvalues=eig,
    )


def _check_kn(num_relays: int, block_length: int) -> None:
    if num_relays < 1:
        raise InvalidParameterError("relay count must be >= 1")
    if block_length < num_relays:
        raise InvalidParameterError(
            f"block length N={block_length} must be >= relay count K={num_relays}"
        )
