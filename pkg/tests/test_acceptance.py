"""Acceptance suite: every release gate in one file, one verdict line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the verdict lines;
each test also asserts, so a plain pytest run enforces the same gates.
"""

import math
import time

import numpy as np

from fockdiv import (
    BipartiteIndex,
    ChannelModel,
    EnergyBudget,
    GrdSchedule,
    HermitianMatrix,
    METHODS,
    RandomInstance,
    bs_truncation_bound,
    choi_contraction_apply,
    ec_bs_channel,
    ec_grd_channel,
    evaluate_method,
    grd_sdp_unconstrained,
    grid_probe_maximize,
    measurement_bruteforce_mre,
    number_operator,
    operator_relative_entropy,
    partial_trace_B,
    state_bs,
    state_measured_re,
    truncation_sweep,
    weighted_geometric_mean,
)

GAMMA1, GAMMA2 = 0.1, 0.4
CUTOFF = 8


def verdict(name: str, ok: bool, detail: str) -> None:
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def figure_pair(cutoff=CUTOFF, g1=GAMMA1, g2=GAMMA2):
    return (
        ChannelModel("dephasing", cutoff, g1).choi(),
        ChannelModel("dephasing", cutoff, g2).choi(),
    )


class TestAcceptance:
    def test_01_hierarchy_ordering(self):
        # measured <= re_lower <= re_upper <= bs <= grd at four energies
        start = time.time()
        jn, jm = figure_pair()
        slack = 2e-5
        chain = ("measured_re", "re_lower", "re_upper", "bs_closed_form", "grd_direct")
        worst = -math.inf
        for energy in (0.25, 0.5, 1.0, 1.5):
            budget = EnergyBudget.for_cutoff(CUTOFF, energy)
            vals = [
                evaluate_method(meth, jn, jm, budget, m=3, k=3, r=13, ell=8).value
                for meth in chain
            ]
            worst = max(worst, float(np.max(-np.diff(vals))))
        elapsed = time.time() - start
        verdict(
            "criterion 1 hierarchy ordering",
            worst <= slack and elapsed < 300.0,
            f"worst inversion {worst:.2e} <= {slack:g}, {elapsed:.0f}s < 300s",
        )

    def test_02_probe_spectra(self):
        jn = ChannelModel("dephasing", CUTOFF, 0.1).choi()
        budget = EnergyBudget.for_cutoff(CUTOFF, 0.5)
        strong = evaluate_method(
            "measured_re", jn, ChannelModel("dephasing", CUTOFF, 0.5).choi(), budget, m=3, k=3
        ).optimal_probe_spectrum
        weak = evaluate_method(
            "measured_re", jn, ChannelModel("dephasing", CUTOFF, 0.15).choi(), budget, m=3, k=3
        ).optimal_probe_spectrum
        ok = (
            0.75 <= strong[0] <= 0.79
            and 0.20 <= strong[2] <= 0.24
            and strong[1] <= 0.02
            and abs(weak[0] - 0.83) <= 0.02
            and abs(weak[2] - 0.03) <= 0.02
            and abs(weak[3] - 0.11) <= 0.02
        )
        verdict(
            "criterion 2 probe spectra",
            ok,
            f"gamma2=0.5 p=({strong[0]:.3f},{strong[1]:.3f},{strong[2]:.3f}), "
            f"gamma2=0.15 p=({weak[0]:.3f},{weak[2]:.3f},{weak[3]:.3f})",
        )

    def test_03_truncation_stabilization(self):
        sweep = truncation_sweep(
            ChannelModel("dephasing", 3, GAMMA1),
            ChannelModel("dephasing", 3, GAMMA2),
            1.0,
            tuple(range(3, 10)),
            METHODS,
        )
        # differences into cutoffs 8 and 9 cover "stable from 7 upward"
        worst = max(
            abs(d) for meth in METHODS for d in sweep.successive_differences(meth)[-2:]
        )
        verdict(
            "criterion 3 truncation stabilization",
            worst < 1e-3,
            f"worst successive change beyond cutoff 7 is {worst:.2e} < 1e-3",
        )

    def test_04_truncation_certificate(self):
        worst = 0.0
        ok = True
        for n in (4, 6, 8):
            cert = bs_truncation_bound(GAMMA1, GAMMA2, 1.0, n)
            doubled = bs_truncation_bound(GAMMA1, GAMMA2, 1.0, 2 * n)
            lo, hi = cert.interval
            ok = ok and lo - 1e-5 <= doubled.truncated_value <= hi + 1e-5
            worst = max(worst, doubled.truncated_value - hi, lo - doubled.truncated_value)
        verdict(
            "criterion 4 truncation certificate",
            ok,
            f"worst interval overshoot {worst:.2e} <= 1e-5 for N in (4, 6, 8)",
        )

    def test_05_grd_bs_convergence(self):
        jn, jm = figure_pair()
        budget = EnergyBudget.for_cutoff(CUTOFF, 1.0)
        gap = abs(
            ec_grd_channel(jn, jm, budget, GrdSchedule(10)).value
            - ec_bs_channel(jn, jm, budget).value
        )
        verdict("criterion 5 renyi-to-bs gap", gap <= 1e-3, f"gap {gap:.2e} <= 1e-3")

    def test_06_sdp_matches_closed_form(self):
        ell = 3
        idx = BipartiteIndex(5, 5)
        gaps = {}
        pairs = {
            "dephasing": (
                ChannelModel("dephasing", 4, 0.1).choi(),
                ChannelModel("dephasing", 4, 0.4).choi(),
            ),
            "loss_dephasing": (
                ChannelModel("loss_dephasing", 4, 0.1, 0.9).choi(),
                ChannelModel("loss_dephasing", 4, 0.4, 0.8).choi(),
            ),
        }
        for kind, (jn, jm) in pairs.items():
            g = weighted_geometric_mean(jn.matrix, jm.matrix, -(2.0**-ell))
            closed = (2.0**ell) * math.log(
                float(partial_trace_B(g, idx).eigvalsh()[-1])
            )
            gaps[kind] = abs(grd_sdp_unconstrained(jn, jm, ell) - closed)
        verdict(
            "criterion 6 sdp vs closed form",
            all(v <= 1e-5 for v in gaps.values()),
            ", ".join(f"{k} gap {v:.1e}" for k, v in gaps.items()) + " <= 1e-5",
        )

    def test_07_chain_rule(self):
        cutoff = 3
        jn = ChannelModel("dephasing", cutoff, GAMMA1).choi()
        jm = ChannelModel("dephasing", cutoff, GAMMA2).choi()
        nop = np.kron(np.eye(cutoff + 1), number_operator(cutoff + 1).entries)
        violations = 0
        worst = -math.inf
        for seed in range(50):
            rho = RandomInstance(seed, 16).state()
            sig = RandomInstance(seed + 1000, 16).state()
            energy = float(np.real(np.trace(nop @ rho.entries)))
            lhs = state_bs(
                choi_contraction_apply(jn, rho), choi_contraction_apply(jm, sig)
            )
            rhs = state_bs(rho, sig) + ec_bs_channel(
                jn, jm, EnergyBudget.for_cutoff(cutoff, energy)
            ).value
            worst = max(worst, lhs - rhs)
            if lhs - rhs > 1e-6:
                violations += 1
        verdict(
            "criterion 7 chain rule",
            violations == 0,
            f"0 of 50 pairs violate; worst lhs-rhs margin {worst:.2e}",
        )

    def test_08_oracle_dominance(self):
        cutoff, ell = 4, 3
        idx = BipartiteIndex(cutoff + 1, cutoff + 1)
        worst = -math.inf
        for seed in range(50):
            rng = np.random.default_rng(seed)
            g1 = 0.05 + 0.25 * rng.uniform()
            g2 = g1 + 0.05 + 0.35 * rng.uniform()
            energy = 0.3 + 1.2 * rng.uniform()
            jn = ChannelModel("dephasing", cutoff, g1).choi()
            jm = ChannelModel("dephasing", cutoff, g2).choi()
            budget = EnergyBudget.for_cutoff(cutoff, energy)
            fast = ec_grd_channel(jn, jm, budget, GrdSchedule(ell)).value
            g = weighted_geometric_mean(jn.matrix, jm.matrix, -(2.0**-ell))
            q = np.real(np.diag(partial_trace_B(g, idx).entries))
            brute, _ = grid_probe_maximize(
                lambda p: (2.0**ell) * math.log(float(p @ q)), budget, cutoff, 40
            )
            worst = max(worst, brute - fast)
        for seed in range(50):
            dim = 2 + seed % 3
            rho = RandomInstance(2 * seed + 1, dim).state()
            sig = RandomInstance(2 * seed + 2, dim).state()
            brute = measurement_bruteforce_mre(rho, sig, 200, seed=seed)
            worst = max(worst, brute - state_measured_re(rho, sig))
        verdict(
            "criterion 8 oracle dominance",
            worst <= 1e-5,
            f"worst oracle excess over fast path {worst:.2e} <= 1e-5 on 100 instances",
        )

    def test_09_matrix_identities(self):
        worst = {"monotone": math.inf, "compose": 0.0, "derivative": 0.0, "transform": 0.0}
        for i in range(100):
            d = 2 + i % 5
            a = RandomInstance(3 * i + 1, d).state()
            b = RandomInstance(3 * i + 2, d).state()
            a2 = a + RandomInstance(3 * i + 3, d).state() * 0.5
            b2 = b + RandomInstance(3 * i + 7, d).state() * 0.5
            for t in (0.25, 0.5, 0.75):
                diff = weighted_geometric_mean(a2, b2, t) + weighted_geometric_mean(a, b, t) * -1.0
                worst["monotone"] = min(worst["monotone"], float(diff.eigvalsh()[0]))
            for s, t in ((0.5, 0.5), (-0.5, 0.25), (0.25, -0.5), (-0.25, -0.25)):
                lhs = weighted_geometric_mean(a, weighted_geometric_mean(a, b, t), s)
                rhs = weighted_geometric_mean(a, b, s * t)
                worst["compose"] = max(
                    worst["compose"], float(np.abs(lhs.entries - rhs.entries).max())
                )
            step = 1e-5
            fd = (weighted_geometric_mean(a, b, step).entries - a.entries) / step
            dop = operator_relative_entropy(a, b)
            worst["derivative"] = max(
                worst["derivative"], float(np.abs(fd + dop.entries).max())
            )
            m = RandomInstance(3 * i + 3, d).unitary() @ np.diag(np.linspace(0.5, 1.5, d))
            lhs = operator_relative_entropy(
                HermitianMatrix(m @ a.entries @ m.conj().T),
                HermitianMatrix(m @ b.entries @ m.conj().T),
            ).entries
            rhs = m @ dop.entries @ m.conj().T
            worst["transform"] = max(worst["transform"], float(np.abs(lhs - rhs).max()))
        ok = (
            worst["monotone"] >= -1e-9
            and worst["compose"] <= 1e-9
            and worst["derivative"] <= 1e-4
            and worst["transform"] <= 1e-9
        )
        verdict(
            "criterion 9 matrix identities",
            ok,
            f"monotone min-eig {worst['monotone']:.1e}, compose {worst['compose']:.1e}, "
            f"derivative {worst['derivative']:.1e}, transform {worst['transform']:.1e}",
        )

    def test_10_acceptance_surface_is_shape_not_values(self):
        # no tabulated curve values exist to compare against, so the gates
        # are shape (monotone in energy), ordering, probe spectra, and
        # stabilization; this check covers the shape leg
        jn, jm = figure_pair()
        vals = [
            ec_bs_channel(jn, jm, EnergyBudget.for_cutoff(CUTOFF, e)).value
            for e in (0.25, 0.5, 1.0, 1.5)
        ]
        ok = bool(np.all(np.diff(vals) >= -1e-9))
        verdict(
            "criterion 10 shape surface",
            ok,
            "curve monotone in energy; no curve-level value equality asserted",
        )
