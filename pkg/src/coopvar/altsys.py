"""Two-component formulation: the coupled functional

    J(u, v) = <(A - lambda) u, u>/(2 alpha) + <(A - lambda) v, v>/(2 beta) - <u, v>
              + (1/alpha) sum F(x, u) h^d,

its direct minimization at fixed (alpha, beta), the lambda-interval predicted by
the coupled eigenvalue problem on Omega_0, and cross-validation against the
reduced non-local solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergedToZero,
    DivergenceDetected,
    InvalidParameter,
    JacobianSingular,
    MaxIterations,
    SolverOutcome,
)
from .grid import Grid, Nonlinearity, WeightField
from .linops import FULL, ZERO_ONLY, ShiftedOperator
from .nonlocal_solver import NonlocalProblem, SolveOptions, minimize_energy, positivity_margin
from .spectra import principal_L1, principal_selfadjoint, sigma_bound

EXISTENCE_DISAGREEMENT = "EXISTENCE_DISAGREEMENT"


def _check_pair(alpha: float, beta: float) -> None:
    if not (alpha > 0 and beta > 0):
        raise InvalidParameter("alpha and beta must be positive")


class CoupledProblem:
    """System (A - lam) u = alpha v - a f(u) u, (A - lam) v = beta u at fixed (lam, alpha, beta)."""

    def __init__(self, grid: Grid, weight: WeightField | np.ndarray, alpha: float, beta: float,
                 lam: float, nonlinearity: Nonlinearity | None = None,
                 op: ShiftedOperator | None = None):
        _check_pair(alpha, beta)
        self.grid = grid
        self.op = op if op is not None else ShiftedOperator(grid, FULL)
        self.a = np.asarray(weight.values if isinstance(weight, WeightField) else weight, dtype=float)
        self.nl = nonlinearity if nonlinearity is not None else Nonlinearity()
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.lam = float(lam)
        self.cell_volume = grid.cell_volume
        self._phi = None

    @property
    def phi1(self) -> np.ndarray:
        if self._phi is None:
            self._phi = principal_selfadjoint(self.op).function
        return self._phi

    def split(self, x):
        n = self.op.size
        return x[:n], x[n:]

    def energy(self, u: np.ndarray, v: np.ndarray) -> float:
        hd = self.cell_volume
        A = self.op.matrix
        return hd * (
            float(u @ (A @ u) - self.lam * (u @ u)) / (2 * self.alpha)
            + float(v @ (A @ v) - self.lam * (v @ v)) / (2 * self.beta)
            - float(u @ v)
            + float(np.sum(self.a * self.nl.primitive(u))) / self.alpha
        )

    def residuals(self, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r1 = self.op.apply(u, self.lam) - self.alpha * v + self.a * self.nl.reaction(u)
        r2 = self.op.apply(v, self.lam) - self.beta * u
        return r1, r2

    def gradient(self, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r1, r2 = self.residuals(u, v)
        hd = self.cell_volume
        return r1 * hd / self.alpha, r2 * hd / self.beta

    def residual_norms(self, u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
        """Max-norm residuals of both equations, each relative to its largest term."""
        Su, Sv = self.op.apply(u, self.lam), self.op.apply(v, self.lam)
        react = self.a * self.nl.reaction(u)
        r1, r2 = Su - self.alpha * v + react, Sv - self.beta * u
        s1 = max(np.max(np.abs(Su)), self.alpha * np.max(np.abs(v)), np.max(np.abs(react)))
        s2 = max(np.max(np.abs(Sv)), self.beta * np.max(np.abs(u)))
        n1, n2 = float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))
        return (n1 / s1 if s1 > 0 else n1), (n2 / s2 if s2 > 0 else n2)

    def jacobian(self, u: np.ndarray) -> sp.csc_matrix:
        n = self.op.size
        S = self.op.shifted(self.lam)
        eye = sp.identity(n, format="csc")
        D = sp.diags(self.a * self.nl.reaction_derivative(u))
        return sp.bmat([[S + D, -self.alpha * eye], [-self.beta * eye, S]], format="csc")

    def newton_step(self, u, v, r1, r2):
        try:
            lu = spla.splu(self.jacobian(u))
        except RuntimeError as exc:
            raise JacobianSingular(f"coupled Jacobian factorization failed: {exc}") from exc
        d = -lu.solve(np.concatenate([r1, r2]))
        if not np.all(np.isfinite(d)):
            raise JacobianSingular("coupled Newton step is not finite")
        return self.split(d)

    def metric_step(self, u, r1, r2):
        """Gradient direction in the metric blockdiag((A - mu + D)/alpha, (A - mu)/beta)."""
        mu = min(self.lam, 0.5 * self.op.sigma1)
        S = self.op.shifted(mu)
        D = sp.diags(self.a * self.nl.reaction_derivative(u))
        # the metric's 1/alpha and the gradient's 1/alpha cancel
        du = -spla.splu((S + D).tocsc()).solve(r1)
        dv = -self.op.solve(mu, r2)
        return du, dv

    def default_init(self) -> tuple[np.ndarray, np.ndarray]:
        phi = self.phi1
        u = phi.copy()
        return u, 1.1 * math.sqrt(self.beta / self.alpha) * u


def energy_coupled(problem: CoupledProblem, u: np.ndarray, v: np.ndarray) -> float:
    return problem.energy(u, v)


def coupled_gradient(problem: CoupledProblem, u: np.ndarray, v: np.ndarray):
    return problem.gradient(u, v)


@dataclass
class CoupledState:
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    lam: float
    alpha: float
    beta: float
    energy_J: float
    residuals: tuple
    iterations: dict
    status: str = "CONVERGED"

    @property
    def margins(self) -> tuple[float, float]:
        return positivity_margin(self.u), positivity_margin(self.v)

    @property
    def is_positive(self) -> bool:
        return self.status == "CONVERGED" and min(self.margins) > 0


def _state(problem, u, v, it, status="CONVERGED"):
    return CoupledState(u, v, problem.lam, problem.alpha, problem.beta, problem.energy(u, v),
                        problem.residual_norms(u, v), dict(it), status)


def minimize_coupled(problem: CoupledProblem, init: tuple | None = None,
                     opts: SolveOptions | None = None) -> CoupledState:
    """Descent on J with Armijo backtracking, then Newton on the coupled system.

    Same globalization as the reduced solver: once J < 0 the Newton direction
    is used when it is a descent direction for J, the metric gradient otherwise.
    """
    opts = opts or SolveOptions()
    u, v = problem.default_init() if init is None else (np.array(init[0], float), np.array(init[1], float))
    scale0 = max(np.max(np.abs(u)), np.max(np.abs(v)))
    if scale0 == 0:
        raise InvalidParameter("initial guess must be nonzero")
    hd = problem.cell_volume
    J = problem.energy(u, v)
    it = {"gradient": 0, "newton": 0}
    step = 1.0
    while it["gradient"] < opts.max_gd_iter:
        r1, r2 = problem.residuals(u, v)
        if max(problem.residual_norms(u, v)) <= opts.gd_tol:
            break
        g1, g2 = r1 * hd / problem.alpha, r2 * hd / problem.beta
        t = 1.0
        try:
            if not J < 0:
                raise JacobianSingular("Newton only once J < 0 = J(0, 0)")
            du, dv = problem.newton_step(u, v, r1, r2)
            slope = float(g1 @ du + g2 @ dv)
            if not slope < -1e-10 * math.hypot(np.linalg.norm(g1), np.linalg.norm(g2)) * math.hypot(
                    np.linalg.norm(du), np.linalg.norm(dv)):
                raise JacobianSingular("not a descent direction")
        except JacobianSingular:
            du, dv = problem.metric_step(u, r1, r2)
            slope = float(g1 @ du + g2 @ dv)
            t = step
        if not slope < 0:
            break
        while True:
            cu, cv = u + t * du, v + t * dv
            Jc = problem.energy(cu, cv)
            if Jc <= J + opts.armijo_c * t * slope and Jc < J:
                break
            t *= 0.5
            if t < 1e-14:
                break
        if t < 1e-14:
            break
        u, v, J = cu, cv, Jc
        it["gradient"] += 1
        step = min(2.0 * t, opts.max_step)
        top = max(np.max(np.abs(u)), np.max(np.abs(v)))
        if top > opts.blowup_cap:
            raise DivergenceDetected(
                f"coupled iterate exceeded the blow-up cap {opts.blowup_cap:g}",
                _state(problem, u, v, it, "DIVERGENCE_DETECTED"),
            )
        if top <= opts.zero_tol * scale0:
            raise ConvergedToZero("coupled descent collapsed to the trivial state",
                                  _state(problem, u, v, it, "CONVERGED_TO_ZERO"))

    # Newton polish with residual-decrease damping
    res = max(problem.residual_norms(u, v))
    polished = 0
    while res > opts.newton_tol or polished < opts.polish_steps:
        if max(np.max(np.abs(u)), np.max(np.abs(v))) <= opts.zero_tol * scale0:
            raise ConvergedToZero("coupled Newton collapsed to the trivial state",
                                  _state(problem, u, v, it, "CONVERGED_TO_ZERO"))
        if it["newton"] >= opts.max_newton_iter:
            if res <= opts.newton_tol:
                break
            raise MaxIterations(f"coupled Newton stalled at residual {res:.3e}",
                                _state(problem, u, v, it, "MAX_ITERS"))
        r1, r2 = problem.residuals(u, v)
        du, dv = problem.newton_step(u, v, r1, r2)
        it["newton"] += 1
        t = 1.0
        while True:
            cu, cv = u + t * du, v + t * dv
            res_c = max(problem.residual_norms(cu, cv))
            if res_c < res or t < 1e-4:
                break
            t *= 0.5
        if res <= opts.newton_tol:
            polished += 1
            if res_c >= res:
                break
        u, v, res = cu, cv, res_c
        if max(np.max(np.abs(u)), np.max(np.abs(v))) > opts.blowup_cap:
            raise DivergenceDetected("coupled Newton iterate exceeded the blow-up cap",
                                     _state(problem, u, v, it, "DIVERGENCE_DETECTED"))
    if np.all(u < 0) and np.all(v < 0):
        u, v = -u, -v
    state = _state(problem, u, v, it)
    if max(np.max(np.abs(u)), np.max(np.abs(v))) <= opts.zero_tol * scale0:
        state.status = "CONVERGED_TO_ZERO"
        raise ConvergedToZero("coupled solve reached the trivial state", state)
    return state


@dataclass
class LambdaInterval:
    lo: float
    hi: float
    sigma1: float
    sigma_L1_zero: float

    @property
    def empty(self) -> bool:
        return not self.lo < self.hi

    def contains(self, lam: float) -> bool:
        return self.lo < lam < self.hi


def lambda_interval(op_full: ShiftedOperator, op_zero: ShiftedOperator, alpha: float,
                    beta: float) -> LambdaInterval:
    """(sigma_1 - sqrt(alpha beta), principal eigenvalue of L1 on Omega_0)."""
    _check_pair(alpha, beta)
    s1 = principal_selfadjoint(op_full).value
    l1 = principal_L1(op_zero, alpha, beta).value
    return LambdaInterval(s1 - math.sqrt(alpha * beta), l1, s1, l1)


@dataclass
class CrossReport:
    lam: float
    alpha: float
    beta: float
    exists_nonlocal: bool
    exists_coupled: bool
    outcome_nonlocal: str
    outcome_coupled: str
    agreement: float
    in_pc: bool
    in_altpc: bool
    flags: list

    @property
    def agree_on_existence(self) -> bool:
        return self.exists_nonlocal == self.exists_coupled


def cross_validate(grid: Grid, weight, lam: float, alpha: float, beta: float,
                   nonlinearity: Nonlinearity | None = None, opts: SolveOptions | None = None,
                   op_full: ShiftedOperator | None = None,
                   op_zero: ShiftedOperator | None = None,
                   sigma_fn=None) -> CrossReport:
    """Solve at (lam, alpha, beta) with both formulations and compare.

    ``sigma_fn(lam)`` supplies the spectral bound for the interval check; the
    report flags EXISTENCE_DISAGREEMENT whenever the two interval predictions
    or the two solver outcomes differ.
    """
    _check_pair(alpha, beta)
    op_full = op_full or ShiftedOperator(grid, FULL)
    op_zero = op_zero or ShiftedOperator(grid, ZERO_ONLY)
    gamma = alpha * beta
    s1 = op_full.sigma1
    flags = []

    if lam < s1:
        nl_problem = NonlocalProblem(grid, weight, nonlinearity, lam, op=op_full, op_zero=op_zero)
        if sigma_fn is None:
            sig = sigma_bound(op_full, op_zero, lam).value
        else:
            sig = sigma_fn(lam)
        in_pc = (s1 - lam) ** 2 < gamma < sig
        try:
            res = minimize_energy(nl_problem, gamma, opts=opts)
            exists_nl = res.positivity_margin > 0
            out_nl = "POSITIVE" if exists_nl else "NOT_POSITIVE"
            u_nl = res.u
            v_nl = nl_problem.recover_v(u_nl, beta)
        except SolverOutcome as exc:
            exists_nl, out_nl, u_nl, v_nl = False, exc.code, None, None
    else:
        in_pc = False
        exists_nl, out_nl, u_nl, v_nl = False, "SHIFT_NOT_ADMISSIBLE", None, None

    interval = lambda_interval(op_full, op_zero, alpha, beta)
    in_altpc = interval.contains(lam)
    cp = CoupledProblem(grid, weight, alpha, beta, lam, nonlinearity, op=op_full)
    try:
        # independent start: the coupled solve never sees the reduced solution
        st = minimize_coupled(cp, opts=opts)
        exists_c = st.is_positive
        out_c = "POSITIVE" if exists_c else "NOT_POSITIVE"
    except SolverOutcome as exc:
        st, exists_c, out_c = None, False, exc.code

    agreement = math.nan
    if exists_nl and exists_c:
        agreement = max(
            float(np.max(np.abs(u_nl - st.u)) / np.max(np.abs(u_nl))),
            float(np.max(np.abs(v_nl - st.v)) / np.max(np.abs(v_nl))),
        )
    if in_pc != in_altpc or exists_nl != exists_c:
        flags.append(EXISTENCE_DISAGREEMENT)
    return CrossReport(lam, alpha, beta, exists_nl, exists_c, out_nl, out_c, agreement,
                       in_pc, in_altpc, flags)


def lambda_sweep(grid: Grid, weight, alpha: float, beta: float, lambdas,
                 nonlinearity: Nonlinearity | None = None,
                 opts: SolveOptions | None = None) -> list[CrossReport]:
    op_full = ShiftedOperator(grid, FULL)
    op_zero = ShiftedOperator(grid, ZERO_ONLY)
    return [cross_validate(grid, weight, float(lam), alpha, beta, nonlinearity, opts, op_full, op_zero)
            for lam in lambdas]
