"""Truncated Fock-space linear algebra.

Dense Hermitian matrices, Kronecker products, partial traces and diagonal
purifications, with a single flat bipartite index convention (``r * dimB + b``)
shared by every consumer in the package.  Dimensions stay small (a few hundred
at most), so everything is dense and eagerly validated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidDimensionError,
    InvalidDistributionError,
    InvalidParameterError,
)

__all__ = [
    "HermitianMatrix",
    "BipartiteIndex",
    "EnergyBudget",
    "number_operator",
    "tensor",
    "partial_trace_B",
    "partial_trace_R",
    "purify_diagonal",
]

# Largest allowed deviation between a matrix and its conjugate transpose,
# relative to the matrix scale, before construction refuses to symmetrize.
SYMMETRIZE_TOL = 1e-12


class HermitianMatrix:
    """Dense complex square matrix certified Hermitian at construction.

    The input is averaged with its conjugate transpose, so the stored entries
    satisfy ``entries[i, j] == conj(entries[j, i])`` exactly.  Inputs whose
    Hermiticity defect exceeds ``SYMMETRIZE_TOL`` (scaled by the largest entry
    magnitude) are rejected rather than silently repaired.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries, *, tol: float = SYMMETRIZE_TOL):
        m = np.atleast_2d(np.asarray(entries, dtype=complex))
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise InvalidDimensionError(
                f"expected a square matrix, got shape {m.shape}"
            )
        scale = max(1.0, float(np.max(np.abs(m))))
        defect = float(np.max(np.abs(m - m.conj().T)))
        if defect > tol * scale:
            raise InvalidDimensionError(
                f"matrix is not Hermitian: defect {defect:.3e} exceeds "
                f"{tol:.1e} * scale"
            )
        sym = (m + m.conj().T) / 2.0
        sym.setflags(write=False)
        self._entries = sym

    @property
    def entries(self) -> np.ndarray:
        """Read-only ``dim x dim`` complex array."""
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self._entries)))

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._entries)

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self._entries.astype(dtype)
        return self._entries

    def __add__(self, other: "HermitianMatrix") -> "HermitianMatrix":
        return HermitianMatrix(self._entries + other._entries)

    def __sub__(self, other: "HermitianMatrix") -> "HermitianMatrix":
        return HermitianMatrix(self._entries - other._entries)

    def __mul__(self, scalar: float) -> "HermitianMatrix":
        return HermitianMatrix(self._entries * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"HermitianMatrix(dim={self.dim})"


@dataclass(frozen=True)
class BipartiteIndex:
    """Index bookkeeping for an R x B tensor factorization.

    The flat index of the basis vector ``|r> x |b>`` is ``r * dimB + b``.
    """

    dimR: int
    dimB: int

    def __post_init__(self):
        if self.dimR < 1 or self.dimB < 1:
            raise InvalidDimensionError(
                f"factor dimensions must be positive, got {self.dimR}x{self.dimB}"
            )

    @property
    def dim(self) -> int:
        return self.dimR * self.dimB

    def flat(self, r: int, b: int) -> int:
        return r * self.dimB + b

    def check(self, m: HermitianMatrix) -> None:
        if m.dim != self.dim:
            raise InvalidDimensionError(
                f"matrix dim {m.dim} does not match {self.dimR}x{self.dimB}"
            )


@dataclass(frozen=True)
class EnergyBudget:
    """Photon-number Hamiltonian together with a mean-energy bound.

    The Hamiltonian must be the number operator of some cutoff: diagonal with
    entries 0, 1, ..., N.
    """

    hamiltonian: HermitianMatrix
    budget: float

    def __post_init__(self):
        h = self.hamiltonian.entries
        expected = np.diag(np.arange(h.shape[0], dtype=float))
        if not np.allclose(h, expected, atol=1e-12):
            raise InvalidParameterError(
                "hamiltonian must be diagonal with entries 0, 1, ..., N"
            )
        if self.budget < 0:
            raise InvalidParameterError("energy budget must be non-negative")

    @classmethod
    def for_cutoff(cls, cutoff: int, budget: float) -> "EnergyBudget":
        """Budget on the space with Fock indices 0..cutoff (dim cutoff+1)."""
        return cls(number_operator(cutoff + 1), float(budget))

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    @property
    def levels(self) -> np.ndarray:
        """The diagonal of the Hamiltonian, as a real vector."""
        return np.real(np.diag(self.hamiltonian.entries)).copy()


def number_operator(cutoff: int) -> HermitianMatrix:
    """Diagonal photon-number operator ``diag(0, 1, ..., cutoff - 1)``.

    ``cutoff`` here counts levels (the matrix dimension), so the vacuum-only
    space is ``number_operator(1)``.
    """
    if cutoff < 1:
        raise InvalidDimensionError("cutoff must be a positive integer")
    return HermitianMatrix(np.diag(np.arange(cutoff, dtype=float)))


def tensor(a: HermitianMatrix, b: HermitianMatrix) -> HermitianMatrix:
    """Kronecker product ``a (x) b`` under the flat index ``r * dimB + b``."""
    return HermitianMatrix(np.kron(a.entries, b.entries))


def partial_trace_B(m: HermitianMatrix, idx: BipartiteIndex) -> HermitianMatrix:
    """Trace out the second (B) factor of a bipartite operator."""
    idx.check(m)
    t = m.entries.reshape(idx.dimR, idx.dimB, idx.dimR, idx.dimB)
    return HermitianMatrix(np.einsum("ibjb->ij", t))


def partial_trace_R(m: HermitianMatrix, idx: BipartiteIndex) -> HermitianMatrix:
    """Trace out the first (R) factor of a bipartite operator."""
    idx.check(m)
    t = m.entries.reshape(idx.dimR, idx.dimB, idx.dimR, idx.dimB)
    return HermitianMatrix(np.einsum("rirj->ij", t))


def purify_diagonal(spectrum) -> HermitianMatrix:
    """Rank-one projector onto ``sum_i sqrt(p_i) |ii>``.

    Parameters
    ----------
    spectrum : array_like
        Probability vector over Fock indices; entries must be non-negative
        and sum to one within 1e-9.

    Returns
    -------
    HermitianMatrix
        A ``d**2 x d**2`` projector whose partial trace over either factor
        recovers ``diag(spectrum)``.
    """
    p = np.asarray(spectrum, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise InvalidDistributionError("spectrum must be a non-empty vector")
    if np.any(p < -1e-12):
        raise InvalidDistributionError("spectrum has negative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise InvalidDistributionError(
            f"spectrum sums to {p.sum():.12f}, expected 1"
        )
    d = p.size
    vec = np.zeros(d * d, dtype=complex)
    amps = np.sqrt(np.clip(p, 0.0, None))
    vec[np.arange(d) * d + np.arange(d)] = amps
    return HermitianMatrix(np.outer(vec, vec.conj()))
