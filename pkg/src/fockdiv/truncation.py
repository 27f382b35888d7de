"""Truncation-error certification for channel divergence computations.

Working on a truncated Fock space can only under-estimate an
energy-constrained supremum over probes, so values grow with the cutoff.
For dephasing pairs the residual above any finite cutoff is itself bounded
in closed form, which turns a truncated value into a two-sided certificate;
for loss-dephasing pairs no analytic bound is available and stabilization
can only be observed empirically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelModel, classical_kl_wrapped_normal
from .divergences import METHODS, evaluate_method
from .errors import InvalidParameterError
from .hilbert import EnergyBudget

__all__ = [
    "TruncationCertificate",
    "TruncationRow",
    "TruncationSweep",
    "bs_truncation_bound",
    "truncation_sweep",
]


@dataclass(frozen=True)
class TruncationCertificate:
    """Two-sided enclosure of an untruncated divergence value.

    The untruncated value lies in ``[truncated_value, truncated_value +
    bound]`` with ``bound = 2 E / (cutoff + 1) * kl_pq``, where ``kl_pq`` is
    the classical relative entropy of the two phase-noise distributions.
    """

    cutoff: int
    budget_E: float
    kl_pq: float
    bound: float = field(init=False)
    truncated_value: float = 0.0

    def __post_init__(self):
        if self.cutoff < 1:
            raise InvalidParameterError("cutoff must be at least 1")
        if self.budget_E < 0.0:
            raise InvalidParameterError("energy budget must be nonnegative")
        if self.kl_pq < 0.0:
            raise InvalidParameterError("classical divergence must be nonnegative")
        object.__setattr__(
            self, "bound", 2.0 * self.budget_E / (self.cutoff + 1) * self.kl_pq
        )

    @property
    def interval(self) -> tuple[float, float]:
        return (self.truncated_value, self.truncated_value + self.bound)


def bs_truncation_bound(
    gamma1: float,
    gamma2: float,
    budget_E: float,
    cutoff_N: int,
    *,
    fock_diagonal=None,
    backend=None,
) -> TruncationCertificate:
    """Certificate for the dephasing-pair divergence at a finite cutoff.

    Evaluates the truncated value at ``cutoff_N`` and attaches the residual
    bound ``2 E/(N+1)`` times the classical divergence of the wrapped
    phase-noise densities.  Only dephasing pairs admit this bound.
    """
    jn = ChannelModel("dephasing", cutoff_N, gamma1).choi()
    jm = ChannelModel("dephasing", cutoff_N, gamma2).choi()
    budget = EnergyBudget.for_cutoff(cutoff_N, budget_E)
    res = evaluate_method(
        "bs_closed_form", jn, jm, budget, fock_diagonal=fock_diagonal, backend=backend
    )
    kl = classical_kl_wrapped_normal(gamma1, gamma2)
    return TruncationCertificate(
        cutoff=cutoff_N,
        budget_E=float(budget_E),
        kl_pq=kl,
        truncated_value=float(res.value),
    )


@dataclass(frozen=True)
class TruncationRow:
    cutoff: int
    values: dict

    def __getitem__(self, method: str) -> float:
        return self.values[method]


@dataclass(frozen=True)
class TruncationSweep:
    """Per-cutoff divergence values plus stabilization diagnostics.

    ``non_monotone`` marks methods whose sequence dips by more than the
    tolerance somewhere along the sweep; growing the truncated space only
    enlarges the feasible probe set, so a real dip signals a numerical
    problem rather than physics.
    """

    rows: tuple
    non_monotone: dict
    certification: str

    def successive_differences(self, method: str) -> list:
        vals = [row.values[method] for row in self.rows]
        return [b - a for a, b in zip(vals[:-1], vals[1:])]


def truncation_sweep(
    model_n: ChannelModel,
    model_m: ChannelModel,
    budget_E: float,
    cutoffs,
    methods=METHODS,
    *,
    m: int = 3,
    k: int = 3,
    r: int = 13,
    ell: int = 8,
    dip_tol: float = 1e-6,
    fock_diagonal=None,
    backend=None,
) -> TruncationSweep:
    """Evaluate every method across ascending cutoffs for one channel pair.

    The two models fix kind and noise parameters; their own cutoffs are
    ignored in favor of the sweep values.
    """
    cutoffs = [int(c) for c in cutoffs]
    if any(b <= a for a, b in zip(cutoffs[:-1], cutoffs[1:])):
        raise InvalidParameterError("cutoffs must be strictly ascending")
    rows = []
    for c in cutoffs:
        jn = ChannelModel(model_n.kind, c, model_n.gamma, model_n.eta).choi()
        jm = ChannelModel(model_m.kind, c, model_m.gamma, model_m.eta).choi()
        budget = EnergyBudget.for_cutoff(c, budget_E)
        values = {}
        for method in methods:
            res = evaluate_method(
                method,
                jn,
                jm,
                budget,
                m=m,
                k=k,
                r=r,
                ell=ell,
                fock_diagonal=fock_diagonal,
                backend=backend,
            )
            values[method] = float(res.value)
        rows.append(TruncationRow(cutoff=c, values=values))
    non_monotone = {}
    for method in methods:
        vals = np.array([row.values[method] for row in rows])
        finite = vals[np.isfinite(vals)]
        non_monotone[method] = bool(np.any(np.diff(finite) < -dip_tol))
    both_dephasing = model_n.kind == "dephasing" and model_m.kind == "dephasing"
    return TruncationSweep(
        rows=tuple(rows),
        non_monotone=non_monotone,
        certification="analytic" if both_dephasing else "empirical-only",
    )
