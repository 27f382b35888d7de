"""Matrix functions of Hermitian operators.

Weighted operator geometric means, the operator relative entropy, rational
approximations of the matrix logarithm and support-restricted powers.  Every
function goes through a Hermitian eigendecomposition; eigenvalues below a
floor relative to the largest one are treated as exact zeros, which realizes
"inverse with respect to the support" uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidInputError,
    InvalidParameterError,
    SupportViolationError,
)
from .hilbert import HermitianMatrix

__all__ = [
    "SupportInfo",
    "QuadratureRule",
    "support_info",
    "matrix_power",
    "weighted_geometric_mean",
    "operator_relative_entropy",
    "gauss_legendre",
    "rational_log_approx",
]

# Relative eigenvalue floor: lambda <= EIGEN_FLOOR_REL * lambda_max is zero.
EIGEN_FLOOR_REL = 1e-12

# Kernel mass of the second argument on the first argument's support above
# which the operator relative entropy is declared infinite.
SUPPORT_TOL = 1e-8


@dataclass(frozen=True)
class SupportInfo:
    """Rank, support projector and the eigenvalue floor that defined them."""

    rank: int
    projector: HermitianMatrix
    eigen_floor: float


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of an m-point rule on [0, 1] with unit total weight."""

    m: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.m < 1 or len(self.nodes) != self.m or len(self.weights) != self.m:
            raise InvalidParameterError("rule size does not match m")
        if np.any(self.nodes < 0.0) or np.any(self.nodes > 1.0):
            raise InvalidParameterError("nodes must lie in [0, 1]")
        if np.any(self.weights <= 0.0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidParameterError("weights must be positive and sum to 1")


def _eigh(x: HermitianMatrix) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(x.entries)


def _sym(a: np.ndarray) -> np.ndarray:
    return (a + a.conj().T) / 2.0


def _floor_for(eigs: np.ndarray, eigen_floor: float | None) -> float:
    if eigen_floor is not None:
        return eigen_floor
    top = float(np.max(eigs)) if eigs.size else 0.0
    return EIGEN_FLOOR_REL * max(top, 0.0)


def support_info(x: HermitianMatrix, eigen_floor: float | None = None) -> SupportInfo:
    """Support projector of a PSD matrix, with the floor actually used."""
    w, v = _eigh(x)
    floor = _floor_for(w, eigen_floor)
    keep = w > floor
    proj = (v[:, keep] @ v[:, keep].conj().T) if keep.any() else np.zeros_like(x.entries)
    return SupportInfo(int(keep.sum()), HermitianMatrix(proj), floor)


def _apply_spectral(x: HermitianMatrix, fn, eigen_floor: float | None = None) -> HermitianMatrix:
    """Rebuild ``x`` with ``fn`` applied to its above-floor eigenvalues.

    ``fn(lam, kept)`` receives the clipped eigenvalue array and a boolean
    mask; entries where ``kept`` is False must come back 0.
    """
    w, v = _eigh(x)
    floor = _floor_for(w, eigen_floor)
    kept = w > floor
    out = fn(np.where(kept, w, 0.0), kept)
    return HermitianMatrix((v * out) @ v.conj().T)


def _support_frame(
    x: HermitianMatrix, eigen_floor: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Square roots of the above-floor eigenvalues and their eigenvectors."""
    w, v = _eigh(x)
    kept = w > _floor_for(w, eigen_floor)
    return np.sqrt(w[kept]), v[:, kept]


def _scaled_congruence(
    y: HermitianMatrix, scale: np.ndarray, vk: np.ndarray
) -> HermitianMatrix:
    # x^{-1/2} y x^{-1/2} restricted to supp(x), scaled entrywise in the
    # eigenbasis of x.  Dense products with an explicit x^{-1/2} would smear
    # eps * cond(x) over every entry and wreck the O(1) eigenvalues.
    rotated = vk.conj().T @ y.entries @ vk
    return HermitianMatrix(rotated / np.outer(scale, scale))


def matrix_power(
    x: HermitianMatrix, p: float, eigen_floor: float | None = None
) -> HermitianMatrix:
    """Spectral power of a PSD matrix; negative powers invert on the support.

    ``p = 0`` returns the support projector.  Eigenvalues at or below the
    floor (default ``1e-12 * lambda_max``) map to zero for every ``p``.
    """

    def fn(w, kept):
        out = np.zeros_like(w)
        if p == 0:
            out[kept] = 1.0
        else:
            out[kept] = w[kept] ** p
        return out

    return _apply_spectral(x, fn, eigen_floor)


def weighted_geometric_mean(
    x: HermitianMatrix, y: HermitianMatrix, t: float
) -> HermitianMatrix:
    """Weighted operator geometric mean
    ``G_t(x, y) = x^{1/2} (x^{-1/2} y x^{-1/2})^t x^{1/2}``.

    The inverse square root is taken on the support of ``x``, so
    ``G_0(x, y)`` is ``x`` compressed to its own support.  Only
    ``t in [-1, 1]`` is accepted; nothing outside that range is ever needed
    and extrapolation there is numerically treacherous.
    """
    if not -1.0 <= t <= 1.0:
        raise InvalidParameterError(f"t = {t} outside [-1, 1]")
    if x.dim != y.dim:
        raise InvalidParameterError("operands must share a dimension")
    scale, vk = _support_frame(x)
    if scale.size == 0:
        return HermitianMatrix(np.zeros_like(x.entries))
    mid = _scaled_congruence(y, scale, vk)
    mid_t = matrix_power(mid, t).entries
    core = scale[:, None] * mid_t * scale[None, :]
    return HermitianMatrix(_sym(vk @ core @ vk.conj().T))


def operator_relative_entropy(
    x: HermitianMatrix, y: HermitianMatrix, *, eigen_floor: float | None = None
) -> HermitianMatrix:
    """Operator relative entropy
    ``D_op(x || y) = -x^{1/2} log(x^{-1/2} y x^{-1/2}) x^{1/2}``.

    Requires ``supp(x) <= supp(y)``; if any kernel eigenvector of ``y``
    carries more than ``SUPPORT_TOL`` of ``x``-weight, a
    :class:`SupportViolationError` is raised (divergence wrappers convert it
    to an infinite value).  The trace of the result against states is the
    Belavkin-Staszewski relative entropy.  ``eigen_floor`` overrides the
    default relative support threshold on both arguments; severely graded
    spectra (Fock-truncated kernels past cutoff 12 or so) have genuine
    eigenvalues under 1e-12 of the top one, and flooring those away biases
    the trace low.
    """
    if x.dim != y.dim:
        raise InvalidParameterError("operands must share a dimension")
    wy, vy = _eigh(y)
    floor_y = _floor_for(wy, eigen_floor)
    kernel = vy[:, wy <= floor_y]
    if kernel.shape[1]:
        overlap = np.real(np.einsum("ij,ik,kj->j", kernel.conj(), x.entries, kernel))
        if overlap.size and float(np.max(overlap)) > SUPPORT_TOL:
            raise SupportViolationError(
                f"supp(x) leaks {np.max(overlap):.3e} onto ker(y)"
            )
    scale, vk = _support_frame(x, eigen_floor)
    if scale.size == 0:
        return HermitianMatrix(np.zeros_like(x.entries))
    mid = _scaled_congruence(y, scale, vk)

    def log_on_support(w, kept):
        out = np.zeros_like(w)
        out[kept] = np.log(w[kept])
        return out

    log_mid = _apply_spectral(mid, log_on_support).entries
    core = -(scale[:, None] * log_mid * scale[None, :])
    return HermitianMatrix(_sym(vk @ core @ vk.conj().T))


def gauss_legendre(m: int) -> QuadratureRule:
    """m-point Gauss-Legendre rule shifted from [-1, 1] to [0, 1].

    Exact for polynomials up to degree 2m - 1; weights sum to one.
    """
    if m < 1:
        raise InvalidParameterError("m must be a positive integer")
    nodes, weights = np.polynomial.legendre.leggauss(m)
    return QuadratureRule(m, (nodes + 1.0) / 2.0, weights / 2.0)


def rational_log_approx(z: HermitianMatrix, m: int, k: int) -> HermitianMatrix:
    """Rational approximation ``2^k r_m(z^{1/2^k})`` of the matrix logarithm.

    ``r_m`` integrates ``f_t(z) = (z - 1) (t (z - 1) + 1)^{-1}`` with the
    m-point Gauss-Legendre rule on [0, 1]; the exact integral is ``log z``,
    and the rule's error decays like ``exp(-(m + k))``.  Input must be
    positive definite.
    """
    if m < 1 or k < 0:
        raise InvalidParameterError("need m >= 1 and k >= 0")
    w, v = _eigh(z)
    floor = _floor_for(w, None)
    if float(np.min(w)) <= floor:
        raise InvalidInputError("rational_log_approx requires a PD input")
    rule = gauss_legendre(m)
    roots = w ** (2.0 ** (-k))
    vals = np.zeros_like(w)
    for t, wt in zip(rule.nodes, rule.weights):
        vals += wt * (roots - 1.0) / (t * (roots - 1.0) + 1.0)
    vals *= 2.0**k
    return HermitianMatrix((v * vals) @ v.conj().T)
