"""Bosonic channel models and their truncated Choi matrices.

Three closed families are supported: wrapped-normal dephasing (variance
``gamma``), pure loss (transmissivity ``eta``) and their composition.  The
Choi operator of a channel acting on Fock indices 0..N is the bipartite
operator ``J = sum_{m,n} |m><n|_R (x) Channel(|m><n|)_B`` with both legs
truncated at the same cutoff.  Loss never raises photon number and dephasing
is number-diagonal, so the truncated Choi operators remain exactly trace
preserving: ``Tr_B[J] = I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import InvalidParameterError
from .hilbert import BipartiteIndex, HermitianMatrix

__all__ = [
    "ChannelModel",
    "ChoiMatrix",
    "wrapped_normal_pdf",
    "dephasing_choi",
    "loss_choi",
    "loss_dephasing_choi",
    "apply_dephasing",
    "classical_kl_wrapped_normal",
]

_KINDS = ("dephasing", "loss", "loss_dephasing")

# Wrapped-normal image terms are accumulated until they drop below this.
_SERIES_FLOOR = 1e-16


@dataclass(frozen=True)
class ChoiMatrix:
    """A channel's Choi operator with its bipartite index.

    Invariants checked at construction: positive semidefinite within 1e-9
    and exactly trace preserving within 1e-9.
    """

    matrix: HermitianMatrix
    idx: BipartiteIndex

    def __post_init__(self):
        if self.idx.dimR != self.idx.dimB:
            raise InvalidParameterError("Choi legs must share one cutoff")
        self.idx.check(self.matrix)
        if float(np.min(np.linalg.eigvalsh(self.matrix.entries))) < -1e-9:
            raise InvalidParameterError("Choi matrix is not PSD within 1e-9")
        from .hilbert import partial_trace_B

        marg = partial_trace_B(self.matrix, self.idx).entries
        if not np.allclose(marg, np.eye(self.idx.dimR), atol=1e-9):
            raise InvalidParameterError(
                "channel is not trace preserving: Tr_B[J] != I"
            )

    @property
    def cutoff(self) -> int:
        """Max Fock index N; the matrix is (N+1)^2 on a side."""
        return self.idx.dimR - 1


@dataclass(frozen=True)
class ChannelModel:
    """Parametric bosonic channel description.

    ``kind`` selects the family; ``gamma`` is the dephasing variance
    (ignored for pure loss), ``eta`` the transmissivity (ignored for pure
    dephasing).  ``cutoff`` is the largest Fock index kept, so matrices have
    dimension ``cutoff + 1``.
    """

    kind: str
    cutoff: int
    gamma: float = 0.0
    eta: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidParameterError(f"unknown channel kind {self.kind!r}")
        if self.gamma < 0:
            raise InvalidParameterError("gamma must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidParameterError("eta must lie in [0, 1]")
        if self.cutoff < 0:
            raise InvalidParameterError("cutoff must be non-negative")

    def choi(self) -> ChoiMatrix:
        if self.kind == "dephasing":
            return dephasing_choi(self.gamma, self.cutoff)
        if self.kind == "loss":
            return loss_choi(self.eta, self.cutoff)
        return loss_dephasing_choi(self.eta, self.gamma, self.cutoff)


def wrapped_normal_pdf(gamma: float, phi: float) -> float:
    """Density of a centred normal with variance ``gamma`` wrapped to the circle.

    ``p(phi) = (2 pi gamma)^{-1/2} sum_k exp(-(phi + 2 pi k)^2 / (2 gamma))``,
    with the image sum truncated once terms fall below 1e-16.
    """
    if gamma <= 0:
        raise InvalidParameterError("gamma must be positive")
    norm = 1.0 / math.sqrt(2.0 * math.pi * gamma)
    inv2g = 1.0 / (2.0 * gamma)
    total = math.exp(-phi * phi * inv2g)
    k = 1
    while True:
        up = math.exp(-((phi + 2.0 * math.pi * k) ** 2) * inv2g)
        down = math.exp(-((phi - 2.0 * math.pi * k) ** 2) * inv2g)
        total += up + down
        if up < _SERIES_FLOOR and down < _SERIES_FLOOR:
            break
        k += 1
    return norm * total


def _dephasing_damping(gamma: float, dim: int) -> np.ndarray:
    m = np.arange(dim)
    return np.exp(-gamma * (m[:, None] - m[None, :]) ** 2 / 2.0)


def dephasing_choi(gamma: float, cutoff: int) -> ChoiMatrix:
    """Choi operator of wrapped-normal dephasing with variance ``gamma``.

    The only nonzero entries are ``<m,m| J |n,n> = exp(-gamma (m-n)^2 / 2)``;
    ``gamma = 0`` yields the identity channel's Choi operator.
    """
    if gamma < 0:
        raise InvalidParameterError("gamma must be non-negative")
    if cutoff < 0:
        raise InvalidParameterError("cutoff must be non-negative")
    d = cutoff + 1
    idx = BipartiteIndex(d, d)
    damp = _dephasing_damping(gamma, d)
    j = np.zeros((d * d, d * d))
    for m in range(d):
        for n in range(d):
            j[idx.flat(m, m), idx.flat(n, n)] = damp[m, n]
    return ChoiMatrix(HermitianMatrix(j), idx)


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def loss_choi(eta: float, cutoff: int) -> ChoiMatrix:
    """Choi operator of the pure-loss channel with transmissivity ``eta``.

    Entry structure: ``sum_{m,n} sum_{k<=min(m,n)}
    sqrt(C(m,k) C(n,k)) eta^{(m+n)/2-k} (1-eta)^k |m><n|_R (x) |m-k><n-k|_B``.
    Binomials go through ``lgamma`` so large cutoffs do not overflow.
    """
    if not 0.0 <= eta <= 1.0:
        raise InvalidParameterError("eta must lie in [0, 1]")
    if cutoff < 0:
        raise InvalidParameterError("cutoff must be non-negative")
    d = cutoff + 1
    idx = BipartiteIndex(d, d)
    j = np.zeros((d * d, d * d))
    for m in range(d):
        for n in range(d):
            for k in range(min(m, n) + 1):
                power = (m + n) / 2.0 - k
                if eta == 0.0:
                    coeff = 1.0 if power == 0 else 0.0
                else:
                    coeff = math.exp(
                        0.5 * (_log_binom(m, k) + _log_binom(n, k))
                        + power * math.log(eta)
                    )
                coeff *= (1.0 - eta) ** k
                if coeff == 0.0:
                    continue
                j[idx.flat(m, m - k), idx.flat(n, n - k)] += coeff
    return ChoiMatrix(HermitianMatrix(j), idx)


def loss_dephasing_choi(eta: float, gamma: float, cutoff: int) -> ChoiMatrix:
    """Choi operator of loss followed by dephasing (the two maps commute).

    Equal to the pure-loss Choi with each (m, n) R-block damped by
    ``exp(-gamma (m-n)^2 / 2)``.
    """
    if gamma < 0:
        raise InvalidParameterError("gamma must be non-negative")
    base = loss_choi(eta, cutoff)
    d = cutoff + 1
    damp = _dephasing_damping(gamma, d)
    # Damping depends only on the R indices (m, n) of each entry.
    factor = np.repeat(np.repeat(damp, d, axis=0), d, axis=1)
    j = base.matrix.entries * factor
    return ChoiMatrix(HermitianMatrix(j), base.idx)


def apply_dephasing(gamma: float, rho: HermitianMatrix) -> HermitianMatrix:
    """Action of the dephasing channel: damp Fock off-diagonals entrywise."""
    if gamma < 0:
        raise InvalidParameterError("gamma must be non-negative")
    damp = _dephasing_damping(gamma, rho.dim)
    return HermitianMatrix(rho.entries * damp)


def classical_kl_wrapped_normal(gamma1: float, gamma2: float) -> float:
    """Relative entropy (nats) between two wrapped-normal phase densities.

    Integrates ``p1 log(p1/p2)`` over one period with adaptive quadrature at
    absolute error below 1e-8.
    """
    if gamma1 <= 0 or gamma2 <= 0:
        raise InvalidParameterError("both variances must be positive")

    def integrand(phi: float) -> float:
        p1 = wrapped_normal_pdf(gamma1, phi)
        p2 = wrapped_normal_pdf(gamma2, phi)
        return p1 * (math.log(p1) - math.log(p2))

    value, _ = quad(integrand, -math.pi, math.pi, epsabs=1e-10, epsrel=1e-10, limit=200)
    # Gibbs inequality guarantees non-negativity; shave quadrature round-off.
    return max(value, 0.0)
