"""Linear programming interface used by every program in the package.

Problems are stated as::

    minimize    c @ z
    subject to  A_ub @ z <= b_ub
                A_eq @ z == b_eq
                lower <= z <= upper

and solved with the HiGHS dual simplex shipped with scipy.  Dual values are
reported as sensitivities of the optimal value to the right-hand sides, which
is what the envelope-theorem gradients consume.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse

FEAS_TOL = 1e-7
ZERO_THRESHOLD = 1e-6

_STATUS = {0: "optimal", 2: "infeasible", 3: "unbounded"}


class LpSolverError(RuntimeError):
    """Raised when the solver cannot certify any status (iteration or conditioning failure)."""


def _as_matrix(A, n):
    if A is None:
        return sparse.csr_matrix((0, n))
    return sparse.csr_matrix(A)


@dataclass(eq=False)
class LinearProgram:
    c: np.ndarray
    A_ub: object = None
    b_ub: np.ndarray | None = None
    A_eq: object = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A_ub = _as_matrix(self.A_ub, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float)
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.A_ub.shape != (self.b_ub.size, n) or self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError("constraint matrices do not match right-hand sides / objective")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.size

    def max_violation(self, z: np.ndarray) -> float:
        """Largest violation of any constraint or bound at ``z``."""
        viol = [0.0]
        if self.b_ub.size:
            viol.append(float(np.max(self.A_ub @ z - self.b_ub)))
        if self.b_eq.size:
            viol.append(float(np.max(np.abs(self.A_eq @ z - self.b_eq))))
        viol.append(float(np.max(self.lower - z, initial=0.0)))
        viol.append(float(np.max(z - self.upper, initial=0.0)))
        return max(viol)

    def dumps(self) -> str:
        """Plain-text rendering: one objective line, then one line per constraint.

        Lines look like ``min: 1.0 z0 -2.0 z3``, ``u0: 0.5 z1 1.0 z2 <= 3.0``,
        ``e0: 1.0 z2 = 1.0`` and ``bounds z4: 0.0 .. inf``.  Numbers use
        ``repr`` so they round-trip.
        """
        out = io.StringIO()

        def terms(row):
            row = sparse.csr_matrix(row)
            return " ".join(f"{float(v)!r} z{j}" for j, v in zip(row.indices, row.data)) or "0"

        out.write(f"min: {terms(self.c.reshape(1, -1))}\n")
        for k in range(self.b_ub.size):
            out.write(f"u{k}: {terms(self.A_ub[k])} <= {float(self.b_ub[k])!r}\n")
        for k in range(self.b_eq.size):
            out.write(f"e{k}: {terms(self.A_eq[k])} = {float(self.b_eq[k])!r}\n")
        for j in range(self.n_vars):
            out.write(f"bounds z{j}: {float(self.lower[j])!r} .. {float(self.upper[j])!r}\n")
        return out.getvalue()


@dataclass(eq=False)
class LpSolution:
    status: str
    primal: np.ndarray | None = None
    value: float = float("nan")
    duals_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals_ub: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals_lower: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals_upper: np.ndarray = field(default_factory=lambda: np.zeros(0))
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve(lp: LinearProgram, *, tol: float = FEAS_TOL) -> LpSolution:
    """Solve ``lp``; raise :class:`LpSolverError` rather than report a doubtful status."""
    bounds = np.column_stack([
        np.where(np.isfinite(lp.lower), lp.lower, -np.inf),
        np.where(np.isfinite(lp.upper), lp.upper, np.inf),
    ])
    kwargs = {}
    if lp.b_ub.size:
        kwargs.update(A_ub=lp.A_ub, b_ub=lp.b_ub)
    if lp.b_eq.size:
        kwargs.update(A_eq=lp.A_eq, b_eq=lp.b_eq)
    res = optimize.linprog(
        lp.c,
        bounds=bounds,
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
            "presolve": True,
        },
        **kwargs,
    )
    status = _STATUS.get(res.status)
    if status is None:
        raise LpSolverError(f"solver failure (status {res.status}): {res.message}")
    if status != "optimal":
        return LpSolution(status, message=res.message)
    z = np.asarray(res.x, dtype=float)
    if lp.max_violation(z) > tol:
        raise LpSolverError(f"returned primal violates constraints by {lp.max_violation(z):.3g}")

    def marg(part, size):
        if size == 0 or part is None:
            return np.zeros(size)
        return np.asarray(part.marginals, dtype=float)

    return LpSolution(
        "optimal",
        primal=z,
        value=float(res.fun),
        duals_eq=marg(res.get("eqlin"), lp.b_eq.size),
        duals_ub=marg(res.get("ineqlin"), lp.b_ub.size),
        duals_lower=marg(res.get("lower"), lp.n_vars),
        duals_upper=marg(res.get("upper"), lp.n_vars),
        message=res.message,
    )


def feasible(lp: LinearProgram) -> bool:
    """Whether the constraint set of ``lp`` is nonempty (objective is ignored)."""
    zero = LinearProgram(np.zeros(lp.n_vars), lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq, lp.lower, lp.upper)
    sol = solve(zero)
    if sol.status == "unbounded":  # cannot happen with a zero objective
        raise LpSolverError("zero-objective program reported unbounded")
    return sol.optimal


def dual_bound(lp: LinearProgram, sol: LpSolution) -> float:
    """Lagrangian dual objective at the reported multipliers (a lower bound for a min)."""
    val = float(lp.b_ub @ sol.duals_ub + lp.b_eq @ sol.duals_eq)
    fin_lo = np.isfinite(lp.lower)
    fin_up = np.isfinite(lp.upper)
    val += float(lp.lower[fin_lo] @ sol.duals_lower[fin_lo])
    val += float(lp.upper[fin_up] @ sol.duals_upper[fin_up])
    return val
