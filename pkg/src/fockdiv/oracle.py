"""Brute-force reference implementations for validating the fast paths.

Everything here trades speed for transparency: exhaustive simplex grids,
sampled measurement bases, direct index-by-index Choi contractions.  Each
maximization oracle is one-sided (it can only fall short of the true
optimum), so an oracle value exceeding the corresponding fast-path value
beyond tolerance indicates a genuine defect, never sampling luck.  Meant
for small cutoffs and coarse grids; nothing in this module is tuned for
performance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError
from .hilbert import HermitianMatrix

__all__ = [
    "RandomInstance",
    "grid_probe_maximize",
    "measurement_bruteforce_mre",
    "choi_contraction_apply",
]


@dataclass(frozen=True)
class RandomInstance:
    """Seeded sampler for test instances.

    States come out Haar-like: a QR factorization of a complex Gaussian
    matrix (R-diagonal phases stripped so the factorization is unique)
    supplies the eigenbasis, exponential spacings the spectrum.  Every draw
    is a pure function of ``(seed, dim)``, so identical seeds reproduce
    identical instances bit for bit.
    """

    seed: int
    dim: int
    law: str = "qr-haar basis, exponential-spacing spectrum"

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise InvalidParameterError("seed must be an integer")
        if self.dim < 1:
            raise InvalidDimensionError("dim must be at least 1")

    def _rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def unitary(self) -> np.ndarray:
        g = self._draw_gaussian(self._rng())
        return self._qr_fixed(g)

    def spectrum(self) -> np.ndarray:
        rng = self._rng()
        self._draw_gaussian(rng)
        e = rng.exponential(size=self.dim)
        return e / e.sum()

    def state(self) -> HermitianMatrix:
        # One stream feeds basis then spectrum, in that order; unitary()
        # and spectrum() replay the same stream so the pieces agree.
        u = self.unitary()
        p = self.spectrum()
        return HermitianMatrix((u * p) @ u.conj().T)

    def _draw_gaussian(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(size=(self.dim, self.dim)) + 1j * rng.normal(
            size=(self.dim, self.dim)
        )

    @staticmethod
    def _qr_fixed(g: np.ndarray) -> np.ndarray:
        q, r = np.linalg.qr(g)
        d = np.diag(r)
        phases = d / np.abs(d)
        return q * phases.conj()


def grid_probe_maximize(objective, budget, cutoff: int, grid_resolution: int):
    """Exhaustive maximization of a spectrum objective over a simplex grid.

    Enumerates every spectrum with entries ``k / grid_resolution`` that sum
    to one and keep the mean occupation ``sum n p_n`` within the budget,
    then evaluates ``objective`` at each feasible point.  The best grid
    point lower-bounds any optimizer's value over the full simplex, which
    is the only property the cross-checks rely on.  Returns the pair
    ``(value, spectrum)``.
    """
    if cutoff < 1:
        raise InvalidDimensionError("cutoff must be at least 1")
    if grid_resolution < 1:
        raise InvalidParameterError("grid_resolution must be at least 1")
    energy = float(getattr(budget, "budget", budget))
    if energy < 0.0:
        raise InvalidParameterError("energy budget must be non-negative")
    levels = cutoff + 1
    res = int(grid_resolution)
    # Energy in count units; the epsilon forgives float rounding of E*res.
    cap = int(math.floor(energy * res + 1e-9))
    counts = np.zeros(levels, dtype=int)
    best_value = -math.inf
    best_counts = None

    def descend(level: int, remaining: int, used: int) -> None:
        nonlocal best_value, best_counts
        if level == 0:
            counts[0] = remaining
            value = float(objective(counts / res))
            if value > best_value:
                best_value = value
                best_counts = counts.copy()
            return
        top = min(remaining, (cap - used) // level)
        for k in range(top + 1):
            counts[level] = k
            descend(level - 1, remaining - k, used + level * k)
        counts[level] = 0

    descend(levels - 1, res, 0)
    if best_counts is None:
        raise InvalidParameterError("no feasible grid point under the budget")
    return best_value, best_counts / res


def measurement_bruteforce_mre(rho, sigma, basis_samples: int, *, seed: int = 0) -> float:
    """Best classical KL over sampled rank-one projective measurements.

    Measures both states in the eigenbases of each argument plus
    ``basis_samples`` Haar-random orthonormal bases and returns the largest
    relative entropy between the outcome distributions.  Every candidate is
    an achievable single-measurement strategy, so the result lower-bounds
    the measured relative entropy.  Intended for dims up to 4; the basis
    count needed for a tight answer grows quickly past that.
    """
    r = np.asarray(rho.entries if hasattr(rho, "entries") else rho, dtype=complex)
    s = np.asarray(sigma.entries if hasattr(sigma, "entries") else sigma, dtype=complex)
    if r.shape != s.shape or r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise InvalidDimensionError("states must be square matrices of equal dim")
    if basis_samples < 0:
        raise InvalidParameterError("basis_samples must be non-negative")
    dim = r.shape[0]
    bases = [np.linalg.eigh(r)[1], np.linalg.eigh(s)[1]]
    rng = np.random.default_rng(seed)
    for _ in range(basis_samples):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        bases.append(RandomInstance._qr_fixed(g))
    best = 0.0
    for u in bases:
        p = np.clip(np.real(np.einsum("ij,jk,ki->i", u.conj().T, r, u)), 0.0, None)
        q = np.clip(np.real(np.einsum("ij,jk,ki->i", u.conj().T, s, u)), 0.0, None)
        live = p > 1e-15
        if np.any(live & (q < 1e-15)):
            return math.inf
        kl = float(np.sum(p[live] * np.log(p[live] / q[live])))
        best = max(best, kl)
    return best


def choi_contraction_apply(choi, rho_bipartite) -> HermitianMatrix:
    """Channel action on the last subsystem, contracted from the Choi.

    For an input on R (x) A with A matching the Choi's input leg, returns
    the state on R (x) B with entries
    ``out[r y, s z] = sum_{a c} rho[r a, s c] J[y a, z c]``; a plain input
    state is the R-trivial case.  This is the textbook contraction written
    as an explicit index sum, kept independent of the channels module so it
    can cross-check ``apply_dephasing`` and the Choi constructions.
    """
    jm = choi.matrix.entries
    da = choi.idx.dimB
    dy = choi.idx.dimR
    r = np.asarray(
        rho_bipartite.entries if hasattr(rho_bipartite, "entries") else rho_bipartite,
        dtype=complex,
    )
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise InvalidDimensionError("input state must be a square matrix")
    if r.shape[0] % da != 0:
        raise InvalidDimensionError(
            f"input dim {r.shape[0]} is not a multiple of the Choi input leg {da}"
        )
    dr = r.shape[0] // da
    rho4 = r.reshape(dr, da, dr, da)
    j4 = jm.reshape(dy, da, dy, da)
    out = np.einsum("rasc,yazc->rysz", rho4, j4)
    return HermitianMatrix(out.reshape(dr * dy, dr * dy))
