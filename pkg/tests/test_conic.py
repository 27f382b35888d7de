import numpy as np
import pytest
from numpy.testing import assert_allclose

from fockdiv import (
    ConicProgram,
    CvxpyBackend,
    HermitianMatrix,
    const,
    dump_sdpa,
    sdpa_dump_scope,
    solve,
    trace_inner,
    weighted_geometric_mean,
)
from fockdiv.conic import lower_to_real
from fockdiv.errors import ModelConstructionError


def max_eig_program(c):
    prog = ConicProgram()
    rho = prog.add_var("rho", c.shape[0], "psd",
                       field="complex" if np.iscomplexobj(c) else "real")
    prog.add_scalar_eq(trace_inner(np.eye(c.shape[0]), rho) - 1.0)
    prog.maximize(trace_inner(c, rho))
    return prog


class TestSolve:
    def test_max_eigenvalue(self):
        sol = solve(max_eig_program(np.diag([1.0, 2.0])))
        assert sol.status == "optimal"
        assert abs(sol.objective_value - 2.0) < 1e-6
        assert_allclose(sol.value("rho").entries.real, np.diag([0.0, 1.0]),
                        atol=1e-5)

    def test_energy_constrained_maximum(self):
        h = np.diag([0.0, 1.0, 2.0])
        prog = ConicProgram()
        rho = prog.add_var("rho", 3, "psd")
        prog.add_scalar_eq(trace_inner(np.eye(3), rho) - 1.0)
        prog.add_scalar_ineq(0.5 - trace_inner(h, rho))
        prog.maximize(trace_inner(h, rho))
        sol = solve(prog)
        assert sol.status == "optimal"
        assert abs(sol.objective_value - 0.5) < 1e-6

    def test_resolve_deterministic(self):
        c = np.array([[1.0, 0.3], [0.3, 0.7]])
        first = solve(max_eig_program(c)).objective_value
        second = solve(max_eig_program(c)).objective_value
        assert abs(first - second) < 1e-9

    def test_feasible_block(self):
        prog = ConicProgram()
        rho = prog.add_var("rho", 2, "psd")
        prog.add_eq(rho - const(np.eye(2)))
        prog.add_psd_block_2x2(rho, 0.0 * rho, rho)
        prog.maximize(trace_inner(np.eye(2), rho))
        assert solve(prog).status == "optimal"

    def test_infeasible_block(self):
        # [[I, 2I], [2I, I]] fails its Schur complement
        prog = ConicProgram()
        rho = prog.add_var("rho", 2, "psd")
        prog.add_eq(rho - const(np.eye(2)))
        prog.add_psd_block_2x2(rho, 2.0 * rho, rho)
        prog.maximize(trace_inner(np.eye(2), rho))
        sol = solve(prog)
        assert sol.status == "infeasible"
        assert np.isnan(sol.objective_value)

    def test_unbounded(self):
        prog = ConicProgram()
        x = prog.add_var("x", 1, "scalar_free")
        prog.maximize(x)
        sol = solve(prog)
        assert sol.status == "unbounded"
        assert sol.objective_value == np.inf

    def test_audit_attached(self):
        sol = solve(max_eig_program(np.diag([1.0, 2.0])))
        assert sol.audit is not None
        assert sol.audit.max_eq_residual < 1e-6
        assert sol.audit.min_psd_eigenvalue > -1e-6
        assert sol.solver_gap < 1e-6

    def test_duplicate_variable_rejected(self):
        prog = ConicProgram()
        prog.add_var("rho", 2, "psd")
        with pytest.raises(ModelConstructionError):
            prog.add_var("rho", 3, "psd")

    def test_undeclared_variable_rejected(self):
        prog = ConicProgram()
        other = ConicProgram()
        foreign = other.add_var("x", 2, "psd")
        with pytest.raises(ModelConstructionError):
            prog.add_psd(foreign)


class TestGeometricMeanCascade:
    def test_schur_block_reproduces_mean(self):
        # max Tr T s.t. [[A, T], [T, B]] >= 0 attains T = G_{1/2}(A, B)
        a = np.array([[2.0, 0.5], [0.5, 1.0]])
        b = np.array([[1.0, -0.2], [-0.2, 3.0]])
        prog = ConicProgram()
        t = prog.add_var("T", 2, "sym")
        prog.add_psd_block_2x2(const(a), t, const(b))
        prog.maximize(trace_inner(np.eye(2), t))
        sol = solve(prog)
        expected = weighted_geometric_mean(
            HermitianMatrix(a), HermitianMatrix(b), 0.5
        ).entries
        assert sol.status == "optimal"
        assert_allclose(sol.value("T").entries.real, expected.real, atol=1e-6)
        assert abs(sol.objective_value - np.trace(expected).real) < 1e-6


class TestBackendSeam:
    def test_injected_backend_is_used(self):
        calls = []

        class Recording:
            inner = CvxpyBackend()

            def solve(self, problem, tol):
                calls.append(tol)
                self.inner.solve(problem, tol)

        sol = solve(max_eig_program(np.diag([1.0, 2.0])), tol=1e-7,
                    backend=Recording())
        assert calls == [1e-7]
        assert abs(sol.objective_value - 2.0) < 1e-6

    def test_backend_that_does_nothing_reports_failure(self):
        class Inert:
            def solve(self, problem, tol):
                pass

        sol = solve(max_eig_program(np.diag([1.0, 2.0])), backend=Inert())
        assert sol.status == "numerical_failure"
        assert np.isnan(sol.objective_value)


class TestComplexLowering:
    def test_roundtrip_matches_complex_solve(self):
        c = np.array([[1.0, 1.0j], [-1.0j, 2.0]])
        top = float(np.linalg.eigvalsh(c)[-1])
        prog = max_eig_program(c)
        direct = solve(prog)
        lowered = solve(lower_to_real(max_eig_program(c)))
        assert abs(direct.objective_value - top) < 1e-6
        assert abs(lowered.objective_value - top) < 1e-6
        assert abs(direct.objective_value - lowered.objective_value) < 1e-6

    def test_lowered_program_is_real(self):
        lowered = lower_to_real(max_eig_program(np.array([[1.0, 1.0j],
                                                          [-1.0j, 2.0]])))
        assert not lowered.is_complex()
        assert lowered.variables[0].dim == 4


class TestSdpaExport:
    def test_dump_structure(self, tmp_path):
        path = tmp_path / "prog.dat-s"
        dump_sdpa(max_eig_program(np.diag([1.0, 2.0])), str(path))
        lines = path.read_text().splitlines()
        comments = [l for l in lines if l.startswith('"')]
        body = [l for l in lines if not l.startswith('"')]
        assert comments
        m = int(body[0].split()[0])
        nblocks = int(body[1].split()[0])
        assert m >= 1 and nblocks >= 1
        blocks = [int(v) for v in body[2].split()]
        assert len(blocks) == nblocks
        assert len(body[3].split()) == m
        for line in body[4:]:
            k, blk, i, j, v = line.split()
            assert int(k) >= 0 and int(blk) >= 1
            float(v)

    def test_dump_scope_numbers_solves(self, tmp_path):
        with sdpa_dump_scope(str(tmp_path), prefix="case"):
            solve(max_eig_program(np.diag([1.0, 2.0])))
            solve(max_eig_program(np.diag([3.0, 1.0])))
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["case_0001.dat-s", "case_0002.dat-s"]
        solve(max_eig_program(np.diag([1.0, 2.0])))
        assert len(list(tmp_path.iterdir())) == 2
