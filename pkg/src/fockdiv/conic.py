"""Solver-agnostic SDP modeling and solution auditing.

A :class:`ConicProgram` is built from a small affine expression language over
named matrix and scalar variables.  Solving lowers the program to cvxpy and
calls an injected backend (CLARABEL by default); the returned
:class:`Solution` is always re-audited with plain numpy, independent of
whatever the solver reported.  Programs can also be exported in the sparse
SDPA text format for cross-validation with external solvers.

Complex Hermitian data is accepted; the standard ``[[Re, -Im], [Im, Re]]``
lowering to real symmetric blocks is available through
:func:`lower_to_real` and is applied automatically when dumping (the SDPA
format is real).  Production programs in this package are real symmetric;
the lowering intentionally supports only plain matrix algebra (no
kron-with-identity or partial-trace nodes).
"""

from __future__ import annotations

import math
import os
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError, ModelConstructionError
from .hilbert import BipartiteIndex, HermitianMatrix

__all__ = [
    "Var",
    "VecRef",
    "ConicProgram",
    "Solution",
    "AuditReport",
    "CvxpyBackend",
    "solve",
    "lower_to_real",
    "dump_sdpa",
    "sdpa_dump_scope",
    "const",
    "trace_inner",
]

_CONES = ("psd", "sym", "free", "vec_nonneg", "scalar_nonneg", "scalar_free")

# Solver target tolerance and the (looser) threshold used when auditing
# returned solutions; one order of slack is deliberate.
DEFAULT_SOLVE_TOL = 1e-8
AUDIT_TOL = 1e-6


@dataclass(frozen=True)
class Var:
    """A declared optimization variable.

    ``cone`` is one of ``psd`` (Hermitian PSD), ``sym`` (free Hermitian),
    ``free`` (general square, no symmetry), ``vec_nonneg`` (entrywise
    non-negative vector), ``scalar_nonneg`` or ``scalar_free``.  ``field``
    may be ``complex`` for the matrix cones.
    """

    name: str
    dim: int
    cone: str
    field: str = "real"

    def __post_init__(self):
        if self.cone not in _CONES:
            raise ModelConstructionError(f"unknown cone {self.cone!r}")
        if self.dim < 1:
            raise ModelConstructionError("variable dimension must be positive")
        if self.cone.startswith("scalar") and self.dim != 1:
            raise ModelConstructionError("scalar variables have dim 1")
        if self.field not in ("real", "complex"):
            raise ModelConstructionError(f"unknown field {self.field!r}")
        if self.cone == "vec_nonneg" and self.field != "real":
            raise ModelConstructionError("vector variables are real")

    @property
    def is_scalar(self) -> bool:
        return self.cone.startswith("scalar")

    @property
    def is_vector(self) -> bool:
        return self.cone == "vec_nonneg"


# ---------------------------------------------------------------------------
# Expression language
# ---------------------------------------------------------------------------


class MatExpr:
    """Affine matrix-valued expression; immutable."""

    dim: int

    def evaluate(self, env: dict) -> np.ndarray:
        raise NotImplementedError

    def to_cvxpy(self, cv: dict):
        raise NotImplementedError

    def variables(self) -> set:
        raise NotImplementedError

    def is_complex(self) -> bool:
        raise NotImplementedError

    # -- algebra -----------------------------------------------------------
    def __add__(self, other: "MatExpr") -> "MatExpr":
        return MSum((self, other))

    def __sub__(self, other: "MatExpr") -> "MatExpr":
        return MSum((self, MScale(-1.0, other)))

    def __mul__(self, c: float) -> "MatExpr":
        return MScale(float(c), self)

    __rmul__ = __mul__

    def __neg__(self) -> "MatExpr":
        return MScale(-1.0, self)

    @property
    def H(self) -> "MatExpr":
        return MAdj(self)


@dataclass(frozen=True)
class MConst(MatExpr):
    value: np.ndarray

    @property
    def dim(self) -> int:
        return self.value.shape[0]

    def evaluate(self, env):
        return self.value

    def to_cvxpy(self, cv):
        return self.value

    def variables(self):
        return set()

    def is_complex(self):
        return bool(np.iscomplexobj(self.value) and np.abs(self.value.imag).max() > 0)


@dataclass(frozen=True)
class MVar(MatExpr):
    var: Var

    @property
    def dim(self) -> int:
        return self.var.dim

    def evaluate(self, env):
        return np.asarray(env[self.var.name])

    def to_cvxpy(self, cv):
        return cv[self.var.name]

    def variables(self):
        return {self.var}

    def is_complex(self):
        return self.var.field == "complex"


@dataclass(frozen=True)
class MAdj(MatExpr):
    inner: MatExpr

    @property
    def dim(self) -> int:
        return self.inner.dim

    def evaluate(self, env):
        return self.inner.evaluate(env).conj().T

    def to_cvxpy(self, cv):
        return self.inner.to_cvxpy(cv).H

    def variables(self):
        return self.inner.variables()

    def is_complex(self):
        return self.inner.is_complex()


@dataclass(frozen=True)
class MScale(MatExpr):
    coeff: float
    inner: MatExpr

    @property
    def dim(self) -> int:
        return self.inner.dim

    def evaluate(self, env):
        return self.coeff * self.inner.evaluate(env)

    def to_cvxpy(self, cv):
        return self.coeff * self.inner.to_cvxpy(cv)

    def variables(self):
        return self.inner.variables()

    def is_complex(self):
        return self.inner.is_complex()


@dataclass(frozen=True)
class MScalarVarTimes(MatExpr):
    """A scalar variable multiplying a constant matrix, e.g. ``y * H``."""

    var: Var
    coeff: np.ndarray

    @property
    def dim(self) -> int:
        return self.coeff.shape[0]

    def evaluate(self, env):
        return float(env[self.var.name]) * self.coeff

    def to_cvxpy(self, cv):
        return cv[self.var.name] * self.coeff

    def variables(self):
        return {self.var}

    def is_complex(self):
        return bool(np.iscomplexobj(self.coeff) and np.abs(self.coeff.imag).max() > 0)


@dataclass(frozen=True)
class MDiagSel(MatExpr):
    """Diagonal matrix built from selected components of a vector variable."""

    var: Var
    indices: tuple

    def __post_init__(self):
        if not self.var.is_vector:
            raise ModelConstructionError("diagonal selection needs a vector variable")
        if any(i < 0 or i >= self.var.dim for i in self.indices):
            raise ModelConstructionError("selection index out of range")

    @property
    def dim(self) -> int:
        return len(self.indices)

    def evaluate(self, env):
        return np.diag(np.asarray(env[self.var.name])[list(self.indices)])

    def to_cvxpy(self, cv):
        import cvxpy as cp

        return cp.diag(cv[self.var.name][list(self.indices)])

    def variables(self):
        return {self.var}

    def is_complex(self):
        return False


@dataclass(frozen=True)
class MSum(MatExpr):
    terms: tuple

    def __post_init__(self):
        dims = {t.dim for t in self.terms}
        if len(dims) != 1:
            raise ModelConstructionError(f"summands disagree on dimension: {dims}")

    @property
    def dim(self) -> int:
        return self.terms[0].dim

    def evaluate(self, env):
        out = self.terms[0].evaluate(env).astype(complex) * 1.0
        for t in self.terms[1:]:
            out = out + t.evaluate(env)
        return out

    def to_cvxpy(self, cv):
        out = self.terms[0].to_cvxpy(cv)
        for t in self.terms[1:]:
            out = out + t.to_cvxpy(cv)
        return out

    def variables(self):
        out = set()
        for t in self.terms:
            out |= t.variables()
        return out

    def is_complex(self):
        return any(t.is_complex() for t in self.terms)


@dataclass(frozen=True)
class MKronI(MatExpr):
    """``inner (x) I_d`` with the package's flat index (inner on the left)."""

    inner: MatExpr
    d: int

    @property
    def dim(self) -> int:
        return self.inner.dim * self.d

    def evaluate(self, env):
        return np.kron(self.inner.evaluate(env), np.eye(self.d))

    def to_cvxpy(self, cv):
        import cvxpy as cp

        return cp.kron(self.inner.to_cvxpy(cv), np.eye(self.d))

    def variables(self):
        return self.inner.variables()

    def is_complex(self):
        return self.inner.is_complex()


@dataclass(frozen=True)
class MPTraceB(MatExpr):
    inner: MatExpr
    idx: BipartiteIndex

    def __post_init__(self):
        if self.inner.dim != self.idx.dim:
            raise ModelConstructionError("partial trace dims do not match")

    @property
    def dim(self) -> int:
        return self.idx.dimR

    def evaluate(self, env):
        t = self.inner.evaluate(env).reshape(
            self.idx.dimR, self.idx.dimB, self.idx.dimR, self.idx.dimB
        )
        return np.einsum("ibjb->ij", t)

    def to_cvxpy(self, cv):
        import cvxpy as cp

        return cp.partial_trace(
            self.inner.to_cvxpy(cv), dims=(self.idx.dimR, self.idx.dimB), axis=1
        )

    def variables(self):
        return self.inner.variables()

    def is_complex(self):
        return self.inner.is_complex()


@dataclass(frozen=True)
class MBlock2(MatExpr):
    """The 2x2 block arrangement ``[[a, b], [b^H, c]]``."""

    a: MatExpr
    b: MatExpr
    c: MatExpr

    def __post_init__(self):
        if not (self.a.dim == self.b.dim == self.c.dim):
            raise ModelConstructionError("2x2 block parts must share a dimension")

    @property
    def dim(self) -> int:
        return 2 * self.a.dim

    def evaluate(self, env):
        a = self.a.evaluate(env)
        b = self.b.evaluate(env)
        c = self.c.evaluate(env)
        return np.block([[a, b], [b.conj().T, c]])

    def to_cvxpy(self, cv):
        import cvxpy as cp

        a = self.a.to_cvxpy(cv)
        b = self.b.to_cvxpy(cv)
        c = self.c.to_cvxpy(cv)
        bh = b.H if hasattr(b, "H") else np.asarray(b).conj().T
        return cp.bmat([[a, b], [bh, c]])

    def variables(self):
        return self.a.variables() | self.b.variables() | self.c.variables()

    def is_complex(self):
        return self.a.is_complex() or self.b.is_complex() or self.c.is_complex()


class ScalExpr:
    """Affine scalar-valued expression."""

    def evaluate(self, env: dict) -> float:
        raise NotImplementedError

    def to_cvxpy(self, cv):
        raise NotImplementedError

    def variables(self) -> set:
        raise NotImplementedError

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = SConst(float(other))
        return SSum((self, other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = SConst(float(other))
        return SSum((self, SScale(-1.0, other)))

    def __rsub__(self, other):
        return SSum((SConst(float(other)), SScale(-1.0, self)))

    def __mul__(self, c: float):
        return SScale(float(c), self)

    __rmul__ = __mul__

    def __neg__(self):
        return SScale(-1.0, self)


@dataclass(frozen=True)
class SConst(ScalExpr):
    value: float

    def evaluate(self, env):
        return self.value

    def to_cvxpy(self, cv):
        return self.value

    def variables(self):
        return set()


@dataclass(frozen=True)
class SVar(ScalExpr):
    var: Var

    def evaluate(self, env):
        return float(env[self.var.name])

    def to_cvxpy(self, cv):
        return cv[self.var.name]

    def variables(self):
        return {self.var}


@dataclass(frozen=True)
class STrace(ScalExpr):
    """``Re Tr[coeff^H @ inner]`` for a constant ``coeff``."""

    coeff: np.ndarray
    inner: MatExpr

    def __post_init__(self):
        if self.coeff.shape[0] != self.inner.dim:
            raise ModelConstructionError("trace coefficient dim mismatch")

    def evaluate(self, env):
        return float(np.real(np.trace(self.coeff.conj().T @ self.inner.evaluate(env))))

    def to_cvxpy(self, cv):
        import cvxpy as cp

        tr = cp.trace(self.coeff.conj().T @ self.inner.to_cvxpy(cv))
        return cp.real(tr) if tr.is_complex() else tr

    def variables(self):
        return self.inner.variables()


@dataclass(frozen=True)
class SDotV(ScalExpr):
    """``coeff . v`` for a constant coefficient vector and vector variable."""

    coeff: np.ndarray
    var: Var

    def __post_init__(self):
        if not self.var.is_vector or self.coeff.shape != (self.var.dim,):
            raise ModelConstructionError("dot product shape mismatch")

    def evaluate(self, env):
        return float(np.dot(self.coeff, np.asarray(env[self.var.name])))

    def to_cvxpy(self, cv):
        return self.coeff @ cv[self.var.name]

    def variables(self):
        return {self.var}


@dataclass(frozen=True)
class SSum(ScalExpr):
    terms: tuple

    def evaluate(self, env):
        return float(sum(t.evaluate(env) for t in self.terms))

    def to_cvxpy(self, cv):
        out = self.terms[0].to_cvxpy(cv)
        for t in self.terms[1:]:
            out = out + t.to_cvxpy(cv)
        return out

    def variables(self):
        out = set()
        for t in self.terms:
            out |= t.variables()
        return out


@dataclass(frozen=True)
class SScale(ScalExpr):
    coeff: float
    inner: ScalExpr

    def evaluate(self, env):
        return self.coeff * self.inner.evaluate(env)

    def to_cvxpy(self, cv):
        return self.coeff * self.inner.to_cvxpy(cv)

    def variables(self):
        return self.inner.variables()


def const(m) -> MConst:
    """Wrap a constant matrix (HermitianMatrix or array) as an expression."""
    if isinstance(m, HermitianMatrix):
        m = m.entries
    a = np.asarray(m)
    if not np.iscomplexobj(a) or np.abs(a.imag).max() == 0:
        a = np.real(a).astype(float)
    return MConst(a)


def trace_inner(coeff, expr: MatExpr) -> STrace:
    """Scalar expression ``Re Tr[coeff^H expr]``."""
    if isinstance(coeff, HermitianMatrix):
        coeff = coeff.entries
    return STrace(np.asarray(coeff), expr)


@dataclass(frozen=True)
class VecRef:
    """Handle for a non-negative vector variable."""

    var: Var

    def diag(self, indices=None) -> MDiagSel:
        if indices is None:
            indices = range(self.var.dim)
        return MDiagSel(self.var, tuple(int(i) for i in indices))

    def dot(self, coeff) -> SDotV:
        return SDotV(np.asarray(coeff, dtype=float), self.var)

    def sum(self) -> SDotV:
        return self.dot(np.ones(self.var.dim))


# ---------------------------------------------------------------------------
# Program container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _PSDCon:
    expr: MatExpr
    name: str


@dataclass(frozen=True)
class _EqCon:
    expr: MatExpr
    name: str


@dataclass(frozen=True)
class _ScalEqCon:
    expr: ScalExpr
    name: str


@dataclass(frozen=True)
class _ScalIneqCon:
    expr: ScalExpr  # constrained >= 0
    name: str


class ConicProgram:
    """PSD-constrained matrix variables, affine constraints, linear objective."""

    def __init__(self):
        self._vars: dict[str, Var] = {}
        self.psd_cons: list[_PSDCon] = []
        self.eq_cons: list[_EqCon] = []
        self.scalar_eq_cons: list[_ScalEqCon] = []
        self.scalar_ineq_cons: list[_ScalIneqCon] = []
        self.sense: str | None = None
        self.objective: ScalExpr | None = None
        self._counter = 0

    # -- variables ---------------------------------------------------------
    def add_var(self, name: str, dim: int, cone: str, field: str = "real"):
        if name in self._vars:
            raise ModelConstructionError(f"variable {name!r} already declared")
        var = Var(name, dim, cone, field)
        self._vars[name] = var
        if var.is_scalar:
            return SVar(var)
        if var.is_vector:
            return VecRef(var)
        return MVar(var)

    @property
    def variables(self) -> tuple[Var, ...]:
        return tuple(self._vars.values())

    def _check_declared(self, expr) -> None:
        for v in expr.variables():
            if self._vars.get(v.name) is not v:
                raise ModelConstructionError(
                    f"expression references undeclared variable {v.name!r}"
                )

    def _label(self, name: str | None, prefix: str) -> str:
        if name is not None:
            return name
        self._counter += 1
        return f"{prefix}{self._counter}"

    # -- constraints -------------------------------------------------------
    def add_psd(self, expr: MatExpr, name: str | None = None) -> str:
        self._check_declared(expr)
        label = self._label(name, "psd")
        self.psd_cons.append(_PSDCon(expr, label))
        return label

    def add_psd_block_2x2(
        self, a: MatExpr, b: MatExpr, c: MatExpr, name: str | None = None
    ) -> str:
        """Register ``[[a, b], [b^H, c]] >= 0``."""
        return self.add_psd(MBlock2(a, b, c), name)

    def add_eq(self, expr: MatExpr, name: str | None = None) -> str:
        """Register ``expr == 0``."""
        self._check_declared(expr)
        label = self._label(name, "eq")
        self.eq_cons.append(_EqCon(expr, label))
        return label

    def add_scalar_eq(self, expr: ScalExpr, name: str | None = None) -> str:
        self._check_declared(expr)
        label = self._label(name, "seq")
        self.scalar_eq_cons.append(_ScalEqCon(expr, label))
        return label

    def add_scalar_ineq(self, expr: ScalExpr, name: str | None = None) -> str:
        """Register ``expr >= 0``."""
        self._check_declared(expr)
        label = self._label(name, "sineq")
        self.scalar_ineq_cons.append(_ScalIneqCon(expr, label))
        return label

    # -- objective ---------------------------------------------------------
    def maximize(self, expr: ScalExpr) -> None:
        self._check_declared(expr)
        self.sense, self.objective = "maximize", expr

    def minimize(self, expr: ScalExpr) -> None:
        self._check_declared(expr)
        self.sense, self.objective = "minimize", expr

    def is_complex(self) -> bool:
        if any(v.field == "complex" for v in self._vars.values()):
            return True
        exprs = [c.expr for c in self.psd_cons + self.eq_cons]
        return any(e.is_complex() for e in exprs)


# ---------------------------------------------------------------------------
# Solutions and auditing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    """Independent numpy re-check of a returned solution."""

    max_eq_residual: float
    min_psd_eigenvalue: float
    max_ineq_violation: float

    @property
    def worst(self) -> float:
        return max(
            self.max_eq_residual,
            self.max_ineq_violation,
            max(0.0, -self.min_psd_eigenvalue),
        )


@dataclass(frozen=True)
class Solution:
    """Solve outcome.

    ``variable_values`` maps names to :class:`HermitianMatrix` for ``psd`` /
    ``sym`` variables, plain arrays for ``free`` (generally non-Hermitian)
    variables and floats for scalars.  ``solver_gap`` is the worst residual
    found by the independent audit; when it exceeds the audit threshold the
    status is downgraded to ``near_optimal``, so ``status == "optimal"``
    certifies feasibility within 1e-6.
    """

    status: str
    objective_value: float
    variable_values: dict
    solver_gap: float
    audit: AuditReport | None = None

    def value(self, name: str):
        return self.variable_values[name]


def _audit(program: ConicProgram, env: dict) -> AuditReport:
    max_eq = 0.0
    for con in program.eq_cons:
        max_eq = max(max_eq, float(np.max(np.abs(con.expr.evaluate(env)))))
    for scon in program.scalar_eq_cons:
        max_eq = max(max_eq, abs(scon.expr.evaluate(env)))
    min_eig = math.inf
    for con in program.psd_cons:
        m = con.expr.evaluate(env)
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh((m + m.conj().T) / 2))))
    for var in program.variables:
        val = env[var.name]
        if var.cone == "psd":
            v = np.asarray(val)
            min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh((v + v.conj().T) / 2))))
        elif var.cone == "scalar_nonneg":
            min_eig = min(min_eig, float(val))
        elif var.cone == "vec_nonneg":
            min_eig = min(min_eig, float(np.min(np.asarray(val))))
    if min_eig is math.inf:
        min_eig = 0.0
    max_viol = 0.0
    for icon in program.scalar_ineq_cons:
        max_viol = max(max_viol, -min(0.0, icon.expr.evaluate(env)))
    return AuditReport(max_eq, min_eig, max_viol)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class CvxpyBackend:
    """Adapter that hands a cvxpy problem to one of its installed solvers."""

    def __init__(self, solver: str = "CLARABEL", **options):
        self.solver = solver
        self.options = dict(options)

    def solve(self, problem, tol: float) -> None:
        import cvxpy as cp

        opts = dict(self.options)
        if self.solver.upper() == "CLARABEL":
            opts.setdefault("tol_gap_abs", tol)
            opts.setdefault("tol_gap_rel", tol)
            opts.setdefault("tol_feas", tol)
        elif self.solver.upper() == "SCS":
            opts.setdefault("eps", tol)
            opts.setdefault("max_iters", 200_000)
        try:
            # cvxpy warns on inaccurate solutions; the independent audit in
            # :func:`solve` grades accuracy itself, so silence the noise.
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                problem.solve(solver=self.solver, **opts)
        except cp.error.SolverError as exc:
            if "not installed" in str(exc) or "Install" in str(exc):
                raise BackendError(f"solver {self.solver} unavailable: {exc}") from exc
            # Leave the failure in the problem status; callers map it.
            problem._solve_error = exc  # noqa: SLF001


_STATUS_MAP = {
    "optimal": "optimal",
    "optimal_inaccurate": "near_optimal",
    "infeasible": "infeasible",
    "infeasible_inaccurate": "infeasible",
    "unbounded": "unbounded",
    "unbounded_inaccurate": "unbounded",
}


def _to_cvxpy(program: ConicProgram):
    import cvxpy as cp

    cv: dict = {}
    side = []
    for var in program.variables:
        if var.cone == "psd":
            if var.field == "complex":
                v = cp.Variable((var.dim, var.dim), hermitian=True, name=var.name)
                side.append(v >> 0)
            else:
                v = cp.Variable((var.dim, var.dim), PSD=True, name=var.name)
        elif var.cone == "sym":
            kind = {"hermitian": True} if var.field == "complex" else {"symmetric": True}
            v = cp.Variable((var.dim, var.dim), name=var.name, **kind)
        elif var.cone == "free":
            kind = {"complex": True} if var.field == "complex" else {}
            v = cp.Variable((var.dim, var.dim), name=var.name, **kind)
        elif var.cone == "vec_nonneg":
            v = cp.Variable(var.dim, nonneg=True, name=var.name)
        elif var.cone == "scalar_nonneg":
            v = cp.Variable(nonneg=True, name=var.name)
        else:
            v = cp.Variable(name=var.name)
        cv[var.name] = v

    constraints = list(side)
    for con in program.psd_cons:
        e = con.expr.to_cvxpy(cv)
        if con.expr.is_complex():
            constraints.append(e >> 0)
        else:
            # Symmetrize: affine expressions built from sym parts are
            # symmetric already, but cvxpy cannot always tell.
            constraints.append((e + e.T) / 2 >> 0)
    for con in program.eq_cons:
        constraints.append(con.expr.to_cvxpy(cv) == 0)
    for scon in program.scalar_eq_cons:
        constraints.append(scon.expr.to_cvxpy(cv) == 0)
    for icon in program.scalar_ineq_cons:
        constraints.append(icon.expr.to_cvxpy(cv) >= 0)

    if program.objective is None or program.sense is None:
        objective = cp.Minimize(0)
    else:
        obj_expr = program.objective.to_cvxpy(cv)
        objective = cp.Maximize(obj_expr) if program.sense == "maximize" else cp.Minimize(obj_expr)
    return cp.Problem(objective, constraints), cv


def _extract(program: ConicProgram, cv: dict) -> dict | None:
    env: dict = {}
    for var in program.variables:
        raw = cv[var.name].value
        if raw is None:
            return None
        if var.is_scalar:
            env[var.name] = float(raw)
        elif var.is_vector:
            env[var.name] = np.asarray(raw, dtype=float).ravel()
        elif var.cone == "free":
            env[var.name] = np.asarray(raw)
        else:
            m = np.asarray(raw)
            m = (m + m.conj().T) / 2.0
            if var.field == "real" and np.iscomplexobj(m):
                m = m.real
            env[var.name] = m
    return env


# Active SDPA dump target; set only through sdpa_dump_scope.
_DUMP_SCOPE = {"dir": None, "prefix": "prog", "count": 0}


@contextmanager
def sdpa_dump_scope(directory: str, prefix: str = "prog"):
    """Dump every program solved inside the scope as numbered SDPA files.

    Purely a debugging affordance: filenames are ``<prefix>_<n>.dat-s`` in
    solve order, so the scope is only deterministic under serial solving.
    Scopes do not nest.
    """
    os.makedirs(directory, exist_ok=True)
    _DUMP_SCOPE["dir"] = directory
    _DUMP_SCOPE["prefix"] = prefix
    _DUMP_SCOPE["count"] = 0
    try:
        yield
    finally:
        _DUMP_SCOPE["dir"] = None
        _DUMP_SCOPE["count"] = 0


def solve(
    program: ConicProgram,
    tol: float = DEFAULT_SOLVE_TOL,
    backend=None,
    audit_tol: float = AUDIT_TOL,
) -> Solution:
    """Solve a program and independently audit the result.

    The backend is any object with ``solve(problem, tol)``; by default
    CLARABEL through cvxpy.  Infeasibility and unboundedness come back in
    ``Solution.status``, never as exceptions; a genuinely missing solver
    raises :class:`BackendError`.
    """
    if backend is None:
        backend = CvxpyBackend()
    if _DUMP_SCOPE["dir"] is not None:
        _DUMP_SCOPE["count"] += 1
        name = f"{_DUMP_SCOPE['prefix']}_{_DUMP_SCOPE['count']:04d}.dat-s"
        dump_sdpa(program, os.path.join(_DUMP_SCOPE["dir"], name))
    problem, cv = _to_cvxpy(program)
    backend.solve(problem, tol)
    raw_status = problem.status if problem.status is not None else "failure"
    status = _STATUS_MAP.get(raw_status, "numerical_failure")
    if getattr(problem, "_solve_error", None) is not None:
        status = "numerical_failure"

    if status in ("infeasible", "unbounded", "numerical_failure"):
        sign = 1.0 if program.sense == "maximize" else -1.0
        obj = math.inf * sign if status == "unbounded" else math.nan
        return Solution(status, obj, {}, math.inf, None)

    env = _extract(program, cv)
    if env is None:
        return Solution("numerical_failure", math.nan, {}, math.inf, None)

    report = _audit(program, env)
    if status == "optimal" and report.worst > audit_tol:
        status = "near_optimal"

    objective_value = (
        program.objective.evaluate(env) if program.objective is not None else 0.0
    )
    values: dict = {}
    for var in program.variables:
        val = env[var.name]
        if var.is_scalar or var.is_vector or var.cone == "free":
            values[var.name] = val
        else:
            values[var.name] = HermitianMatrix(val)
    return Solution(status, float(objective_value), values, report.worst, report)


# ---------------------------------------------------------------------------
# Complex -> real lowering
# ---------------------------------------------------------------------------


def _embed(m: np.ndarray) -> np.ndarray:
    re, im = np.real(m), np.imag(m)
    return np.block([[re, -im], [im, re]])


def _lower_expr(expr: MatExpr, varmap: dict) -> MatExpr:
    if isinstance(expr, MConst):
        return MConst(_embed(expr.value))
    if isinstance(expr, MVar):
        return MVar(varmap[expr.var.name])
    if isinstance(expr, MAdj):
        return MAdj(_lower_expr(expr.inner, varmap))
    if isinstance(expr, MScale):
        return MScale(expr.coeff, _lower_expr(expr.inner, varmap))
    if isinstance(expr, MScalarVarTimes):
        return MScalarVarTimes(varmap[expr.var.name], _embed(expr.coeff))
    if isinstance(expr, MDiagSel):
        return MDiagSel(varmap[expr.var.name], expr.indices)
    if isinstance(expr, MSum):
        return MSum(tuple(_lower_expr(t, varmap) for t in expr.terms))
    if isinstance(expr, MBlock2):
        return MBlock2(
            _lower_expr(expr.a, varmap),
            _lower_expr(expr.b, varmap),
            _lower_expr(expr.c, varmap),
        )
    raise ModelConstructionError(
        f"complex lowering does not support {type(expr).__name__} nodes"
    )


def _lower_scalar(expr: ScalExpr, varmap: dict) -> ScalExpr:
    if isinstance(expr, SConst):
        return expr
    if isinstance(expr, SVar):
        return SVar(varmap[expr.var.name])
    if isinstance(expr, SDotV):
        return SDotV(expr.coeff, varmap[expr.var.name])
    if isinstance(expr, SScale):
        return SScale(expr.coeff, _lower_scalar(expr.inner, varmap))
    if isinstance(expr, SSum):
        return SSum(tuple(_lower_scalar(t, varmap) for t in expr.terms))
    if isinstance(expr, STrace):
        # Tr[emb(C)^T emb(X)] double-counts the real inner product.
        return STrace(_embed(expr.coeff) / 2.0, _lower_expr(expr.inner, varmap))
    raise ModelConstructionError(
        f"complex lowering does not support {type(expr).__name__} nodes"
    )


def lower_to_real(program: ConicProgram) -> ConicProgram:
    """Rewrite a complex program over real variables of doubled dimension.

    Hermitian ``X = A + iB`` becomes the real block matrix
    ``[[A, -B], [B, A]]``, positive semidefinite exactly when ``X`` is; a
    linear structure constraint ties the two copies together.  Trace inner
    products pick up the compensating factor one half.
    """
    lowered = ConicProgram()
    varmap: dict[str, Var] = {}
    for var in program.variables:
        if var.is_scalar:
            ref = lowered.add_var(var.name, 1, var.cone)
            varmap[var.name] = ref.var
            continue
        dim = 2 * var.dim if var.field == "complex" else var.dim
        ref = lowered.add_var(var.name, dim, var.cone)
        varmap[var.name] = ref.var
        if var.field == "complex":
            d = var.dim
            j = np.block(
                [[np.zeros((d, d)), -np.eye(d)], [np.eye(d), np.zeros((d, d))]]
            )
            # J X J^T = X pins the [[A, -B], [B, A]] structure.
            structural = MSum(
                (
                    _congruence(j, MVar(ref.var)),
                    MScale(-1.0, MVar(ref.var)),
                )
            )
            lowered.add_eq(structural, name=f"emb_{var.name}")

    for con in program.psd_cons:
        lowered.add_psd(_lower_expr(con.expr, varmap), name=con.name)
    for con in program.eq_cons:
        lowered.add_eq(_lower_expr(con.expr, varmap), name=con.name)
    for scon in program.scalar_eq_cons:
        lowered.add_scalar_eq(_lower_scalar(scon.expr, varmap), name=scon.name)
    for icon in program.scalar_ineq_cons:
        lowered.add_scalar_ineq(_lower_scalar(icon.expr, varmap), name=icon.name)
    if program.objective is not None:
        obj = _lower_scalar(program.objective, varmap)
        if program.sense == "maximize":
            lowered.maximize(obj)
        else:
            lowered.minimize(obj)
    return lowered


@dataclass(frozen=True)
class _MCongr(MatExpr):
    """``M @ inner @ M^T`` for a constant real M (lowering helper)."""

    m: np.ndarray
    inner: MatExpr

    @property
    def dim(self) -> int:
        return self.m.shape[0]

    def evaluate(self, env):
        return self.m @ self.inner.evaluate(env) @ self.m.T

    def to_cvxpy(self, cv):
        return self.m @ self.inner.to_cvxpy(cv) @ self.m.T

    def variables(self):
        return self.inner.variables()

    def is_complex(self):
        return self.inner.is_complex()


def _congruence(m: np.ndarray, expr: MatExpr) -> MatExpr:
    return _MCongr(m, expr)


# ---------------------------------------------------------------------------
# SDPA sparse export
# ---------------------------------------------------------------------------


def _scalarize(program: ConicProgram):
    """Enumerate real scalar degrees of freedom for every variable.

    Returns (dofs, zero_env, set_dof) where ``dofs`` is a list of
    ``(var, i, j)`` descriptors, ``zero_env`` maps names to zero values and
    ``set_dof(env, t, value)`` writes one unit of dof ``t``.
    """
    dofs: list[tuple[Var, int, int]] = []
    for var in program.variables:
        if var.is_scalar:
            dofs.append((var, 0, 0))
        elif var.is_vector:
            dofs.extend((var, i, 0) for i in range(var.dim))
        elif var.cone == "free":
            dofs.extend((var, i, j) for i in range(var.dim) for j in range(var.dim))
        else:
            dofs.extend(
                (var, i, j) for i in range(var.dim) for j in range(i, var.dim)
            )

    def zero_env():
        env = {}
        for var in program.variables:
            if var.is_scalar:
                env[var.name] = 0.0
            elif var.is_vector:
                env[var.name] = np.zeros(var.dim)
            else:
                env[var.name] = np.zeros((var.dim, var.dim))
        return env

    def set_dof(env, t, value=1.0):
        var, i, j = dofs[t]
        if var.is_scalar:
            env[var.name] = value
        elif var.is_vector:
            env[var.name] = env[var.name].copy()
            env[var.name][i] += value
        elif var.cone == "free":
            env[var.name] = env[var.name].copy()
            env[var.name][i, j] += value
        else:
            env[var.name] = env[var.name].copy()
            env[var.name][i, j] += value
            if i != j:
                env[var.name][j, i] += value

    return dofs, zero_env, set_dof


def dump_sdpa(program: ConicProgram, path: str) -> None:
    """Write the program in sparse SDPA format (``.dat-s``).

    All matrix variables are scalarized (symmetric ones by upper-triangle
    basis elements, with the off-diagonal basis ``E_ij + E_ji``); each PSD
    constraint and each PSD variable becomes one block of the SDPA
    constraint ``sum_i x_i F_i - F_0 >= 0``, scalar inequalities and
    +/- pairs for equalities become diagonal blocks.  A maximize objective
    is negated (SDPA minimizes); constant offsets are recorded in the
    header comments.  Complex programs are lowered to real first.
    """
    if program.is_complex():
        program = lower_to_real(program)

    dofs, zero_env, set_dof = _scalarize(program)
    n = len(dofs)
    z = zero_env()

    # Block list: (size, [(constant matrix, per-dof coefficient fn)]).
    blocks = []

    def affine_parts(expr: MatExpr):
        c0 = np.real(expr.evaluate(z)).astype(float)
        cols = []
        for t in range(n):
            if not (expr.variables() & {dofs[t][0]}):
                cols.append(None)
                continue
            env = zero_env()
            set_dof(env, t)
            cols.append(np.real(expr.evaluate(env)).astype(float) - c0)
        return c0, cols

    for con in program.psd_cons:
        blocks.append(("psd", con.name, affine_parts(con.expr), con.expr.dim))
    for var in program.variables:
        if var.cone == "psd":
            blocks.append(("psd", f"cone_{var.name}", affine_parts(MVar(var)), var.dim))

    # Diagonal block: scalar inequalities then +/- equality components.
    diag_entries: list[tuple[float, list[tuple[int, float]]]] = []

    def scalar_affine(expr: ScalExpr):
        c0 = expr.evaluate(z)
        coeffs = []
        for t in range(n):
            if not (expr.variables() & {dofs[t][0]}):
                continue
            env = zero_env()
            set_dof(env, t)
            c = expr.evaluate(env) - c0
            if c != 0.0:
                coeffs.append((t, c))
        return c0, coeffs

    for icon in program.scalar_ineq_cons:
        diag_entries.append(scalar_affine(icon.expr))
    for var in program.variables:
        if var.cone == "scalar_nonneg":
            diag_entries.append(scalar_affine(SVar(var)))
        elif var.is_vector:
            for i in range(var.dim):
                unit = np.zeros(var.dim)
                unit[i] = 1.0
                diag_entries.append(scalar_affine(SDotV(unit, var)))

    eq_components: list[tuple[float, list[tuple[int, float]]]] = []
    for con in program.eq_cons:
        c0, cols = affine_parts(con.expr)
        d = con.expr.dim
        for i in range(d):
            for j in range(i, d):
                coeffs = [
                    (t, cols[t][i, j]) for t in range(n)
                    if cols[t] is not None and cols[t][i, j] != 0.0
                ]
                if coeffs or c0[i, j] != 0.0:
                    eq_components.append((c0[i, j], coeffs))
    for scon in program.scalar_eq_cons:
        eq_components.append(scalar_affine(scon.expr))
    for c0, coeffs in eq_components:
        diag_entries.append((c0, coeffs))
        diag_entries.append((-c0, [(t, -c) for t, c in coeffs]))

    obj_const = 0.0
    cvec = np.zeros(n)
    if program.objective is not None:
        obj_const, coeffs = scalar_affine(program.objective)
        for t, c in coeffs:
            cvec[t] = c
    negate = program.sense == "maximize"
    if negate:
        cvec = -cvec

    lines = []
    lines.append('"sparse SDPA export: min c^T x s.t. sum_i x_i F_i - F_0 >= 0"')
    if negate:
        lines.append('"objective was maximize; c has been negated"')
    lines.append(
        f'"objective constant offset (original sense): {float(obj_const)!r}"'
    )
    for t, (var, i, j) in enumerate(dofs):
        lines.append(f'"dof {t + 1}: {var.name}[{i},{j}] ({var.cone})"')
    block_sizes = [str(b[3]) for b in blocks]
    if diag_entries:
        block_sizes.append(str(-len(diag_entries)))
    lines.append(f"{n} = m")
    lines.append(f"{len(block_sizes)} = nblocks")
    lines.append(" ".join(block_sizes))
    lines.append(" ".join(repr(float(c)) for c in cvec))

    def emit(mat_no: int, blk: int, m: np.ndarray):
        out = []
        d = m.shape[0]
        for i in range(d):
            for j in range(i, d):
                if m[i, j] != 0.0:
                    out.append(f"{mat_no} {blk} {i + 1} {j + 1} {float(m[i, j])!r}")
        return out

    for bi, (_, _, (c0, cols), _) in enumerate(blocks, start=1):
        lines.extend(emit(0, bi, -c0))  # F_0 = -(constant term)
        for t in range(n):
            if cols[t] is not None:
                lines.extend(emit(t + 1, bi, cols[t]))
    if diag_entries:
        blk = len(blocks) + 1
        for pos, (c0, coeffs) in enumerate(diag_entries, start=1):
            if c0 != 0.0:
                lines.append(f"0 {blk} {pos} {pos} {float(-c0)!r}")
            for t, c in coeffs:
                lines.append(f"{t + 1} {blk} {pos} {pos} {float(c)!r}")

    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
