"""Coexistence branch gamma -> u(gamma) over the existence interval: natural
parameter continuation, bifurcation from the trivial branch, the derivative
D_gamma u and blow-up diagnostics toward the right endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import (
    BracketFailed,
    ConvergedToZero,
    DivergenceDetected,
    InvalidParameter,
    JacobianSingular,
    MaxIterations,
    SolverOutcome,
)
from .nonlocal_solver import NonlocalProblem, SolveOptions, SolveResult, minimize_energy, newton_solve
from .spectra import sigma_bound

REACHED_HI = "REACHED_HI"
BLOWUP_CAP = "BLOWUP_CAP"
STEP_UNDERFLOW = "STEP_UNDERFLOW"

# relative substep below which continuation gives up
STEP_FLOOR = 1e-6
# how close to gamma_hi the last grid point sits, relative to gamma_hi
HI_GAP = 1e-3


def existence_interval(problem: NonlocalProblem) -> tuple[float, float]:
    """((sigma_1 - lambda)^2, Sigma(lambda)) for the problem's grid and shift."""
    sb = sigma_bound(problem.op, problem.op_zero, problem.lam)
    return problem.gamma_lo, sb.value


def gamma_grid(gamma_lo: float, gamma_hi: float, n_points: int) -> np.ndarray:
    """First point gamma_lo * 1.001; distances to gamma_hi then shrink geometrically
    so the last point is gamma_hi * (1 - 1e-3)."""
    if n_points < 2:
        raise InvalidParameter("n_points must be at least 2")
    if not gamma_hi > gamma_lo * 1.001:
        raise InvalidParameter("existence interval too narrow for a branch")
    first = gamma_lo * 1.001
    gap0 = gamma_hi - first
    gap_end = HI_GAP * gamma_hi
    if gap_end >= gap0:
        return np.linspace(first, gamma_hi - gap_end, n_points)
    gaps = np.geomspace(gap0, gap_end, n_points)
    return gamma_hi - gaps


@dataclass
class BranchPoint:
    result: SolveResult = field(repr=False)
    gamma: float
    sup_u: float
    sup_v: float
    energy: float
    min_u_on_core: float
    mass_frac_plus: float
    ordering_margin: float
    newton_residual: float


@dataclass
class Branch:
    lam: float
    gamma_lo: float
    gamma_hi: float
    beta: float
    points: list = field(default_factory=list)
    termination: str = REACHED_HI
    grid_gammas: np.ndarray = field(default=None, repr=False)
    substeps: int = 0

    @property
    def gammas(self) -> np.ndarray:
        return np.array([p.gamma for p in self.points])

    @property
    def sup_u(self) -> np.ndarray:
        return np.array([p.sup_u for p in self.points])

    def min_increments(self) -> np.ndarray:
        """min over nodes of u(gamma_{k+1}) - u(gamma_k) for consecutive points."""
        return np.array([np.min(b.result.u - a.result.u) for a, b in zip(self.points, self.points[1:])])

    def mid_index(self) -> int:
        mid = 0.5 * (self.gamma_lo + self.gamma_hi)
        return int(np.argmin(np.abs(self.gammas - mid)))


def mass_fraction_plus(problem: NonlocalProblem, u: np.ndarray) -> float:
    plus = problem.grid.plus_mask
    tot = float(u @ u)
    return float(u[plus] @ u[plus]) / tot if tot > 0 else 0.0


def core_min(problem: NonlocalProblem, u: np.ndarray) -> float:
    core = problem.grid.core_mask()
    return float(np.min(u[core])) if core.any() else float("nan")


def make_point(problem: NonlocalProblem, res: SolveResult, beta: float) -> BranchPoint:
    u = res.u
    alpha = res.gamma / beta
    v = problem.recover_v(u, beta)
    res.v = v
    return BranchPoint(
        result=res,
        gamma=res.gamma,
        sup_u=res.sup_u,
        sup_v=float(np.max(np.abs(v))),
        energy=res.energy,
        min_u_on_core=core_min(problem, u),
        mass_frac_plus=mass_fraction_plus(problem, u),
        ordering_margin=float(np.min(np.sqrt(alpha) * v - np.sqrt(beta) * u)),
        newton_residual=res.newton_residual,
    )


def tangent(problem: NonlocalProblem, u: np.ndarray, gamma: float) -> np.ndarray:
    """D_gamma u = J^{-1} (A - lambda)^{-1} u from the implicit function theorem."""
    return problem.jacobian_solve(u, gamma, problem.resolvent(u))


def trace_branch(problem: NonlocalProblem, n_points: int = 24, beta: float = 1.0,
                 opts: SolveOptions | None = None, interval: tuple[float, float] | None = None,
                 max_newton_iter: int = 15) -> Branch:
    """Continuation along the geometric gamma grid with a tangent predictor.

    Grid points that Newton cannot reach directly are approached through
    halved substeps; intermediate substeps are not recorded.
    """
    opts = opts or SolveOptions()
    cont_opts = SolveOptions(**{**opts.__dict__, "max_newton_iter": max_newton_iter})
    lo, hi = existence_interval(problem) if interval is None else interval
    grid = gamma_grid(lo, hi, n_points)
    branch = Branch(problem.lam, lo, hi, beta, grid_gammas=grid)

    try:
        first = minimize_energy(problem, grid[0], opts=opts)
    except SolverOutcome as exc:
        branch.termination = BLOWUP_CAP if isinstance(exc, DivergenceDetected) else STEP_UNDERFLOW
        return branch
    branch.points.append(make_point(problem, first, beta))
    u, g = first.u, float(grid[0])

    for target in grid[1:]:
        step = target - g
        while g < target:
            trial = min(g + step, target)
            try:
                du = tangent(problem, u, g)
                pred = u + (trial - g) * du
                if np.max(np.abs(pred)) > opts.blowup_cap:
                    raise DivergenceDetected("predictor exceeds the blow-up cap")
                res = newton_solve(problem, trial, pred, cont_opts, ref_scale=np.max(np.abs(u)))
                if res.sup_u <= opts.zero_tol * np.max(np.abs(u)) or res.positivity_margin <= 0:
                    raise ConvergedToZero("continuation left the positive branch", res)
            except DivergenceDetected:
                branch.termination = BLOWUP_CAP
                return branch
            except (MaxIterations, JacobianSingular, ConvergedToZero):
                step *= 0.5
                if step < STEP_FLOOR * g:
                    branch.termination = STEP_UNDERFLOW
                    return branch
                continue
            branch.substeps += 1
            u, g = res.u, trial
            step *= 2.0
        branch.points.append(make_point(problem, res, beta))
    branch.termination = REACHED_HI
    return branch


def smallest_linearized_eig(problem: NonlocalProblem, gamma: float) -> float:
    """Smallest eigenvalue of I - gamma (A - lambda)^{-2}."""
    n = problem.op.size

    def mv(x):
        return x - gamma * problem.resolvent(problem.resolvent(x))

    op = spla.LinearOperator((n, n), matvec=mv, dtype=float)
    if n <= 200:
        G = problem.op.dense_inverse(problem.lam)
        return float(np.linalg.eigvalsh(np.eye(n) - gamma * (G @ G))[0])
    val = spla.eigsh(op, k=1, which="SA", tol=1e-14, v0=np.ones(n),
                     return_eigenvectors=False, ncv=min(n, 20))
    return float(val[0])


@dataclass
class BifurcationReport:
    gamma_star: float
    expected: float
    rel_error: float
    slope: float
    slope_expected: float
    bisection_steps: int


def bifurcation_locate(problem: NonlocalProblem, rel_tol: float = 1e-12,
                       max_doublings: int = 80) -> BifurcationReport:
    """Bisection in gamma on the sign of the smallest eigenvalue of I - gamma G^2."""
    lo = 0.0
    hi = max(problem.op.sigma1 - problem.lam, 1.0)
    for _ in range(max_doublings):
        if smallest_linearized_eig(problem, hi) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketFailed("no sign change of the linearized spectrum found")
    steps = 0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if smallest_linearized_eig(problem, mid) > 0:
            lo = mid
        else:
            hi = mid
        steps += 1
    gstar = 0.5 * (lo + hi)
    expected = problem.gamma_lo
    dg = 1e-3 * gstar
    slope = (smallest_linearized_eig(problem, gstar + dg) - smallest_linearized_eig(problem, gstar - dg)) / (2 * dg)
    return BifurcationReport(
        gamma_star=gstar,
        expected=expected,
        rel_error=abs(gstar - expected) / expected,
        slope=slope,
        slope_expected=-1.0 / expected,
        bisection_steps=steps,
    )


@dataclass
class DgammaReport:
    gamma: float
    delta_gamma: float
    min_w: float
    sup_w: float
    fd_rel_error: float

    @property
    def positive(self) -> bool:
        return self.min_w > 0


def dgamma_check(problem: NonlocalProblem, point: SolveResult, delta_rel: float = 1e-4,
                 opts: SolveOptions | None = None) -> DgammaReport:
    """Implicit-function derivative versus a centered finite difference in gamma."""
    opts = opts or SolveOptions()
    g, u = point.gamma, point.u
    w = tangent(problem, u, g)
    dg = delta_rel * g
    up = newton_solve(problem, g + dg, u + dg * w, opts).u
    dn = newton_solve(problem, g - dg, u - dg * w, opts).u
    fd = (up - dn) / (2 * dg)
    sup_w = float(np.max(np.abs(w)))
    return DgammaReport(g, dg, float(np.min(w)), sup_w, float(np.max(np.abs(fd - w)) / sup_w))


@dataclass
class BlowupReport:
    gammas: list
    sup_u: list
    core_min: list
    mass_frac_plus: list
    cosine: list
    termination: str
    gamma_hi: float

    @property
    def mass_frac_monotone(self) -> bool:
        m = np.asarray(self.mass_frac_plus)
        return bool(np.all(np.diff(m) < 0))


def blowup_probe(problem: NonlocalProblem, ratio: float = 0.7, max_points: int = 30,
                 opts: SolveOptions | None = None,
                 interval: tuple[float, float] | None = None) -> BlowupReport:
    """Solve along gamma_k = hi - (hi - mid) ratio^k until the blow-up cap is hit.

    Records the minimum of u over the interior core of Omega_0, the Omega_+ mass
    fraction of u / |u|_2, and the cosine between u and the zero extension of
    the spectral-bound minimizer.
    """
    opts = opts or SolveOptions()
    sb = sigma_bound(problem.op, problem.op_zero, problem.lam)
    lo = problem.gamma_lo if interval is None else interval[0]
    hi = sb.value if interval is None else interval[1]
    ext = sb.zero_extension
    ext_norm = float(np.linalg.norm(ext))
    mid = 0.5 * (lo + hi)
    rep = BlowupReport([], [], [], [], [], BLOWUP_CAP, hi)
    init = None
    for k in range(max_points):
        gamma = hi - (hi - mid) * ratio**k
        if (hi - gamma) <= STEP_FLOOR * hi:
            rep.termination = STEP_UNDERFLOW
            break
        try:
            res = minimize_energy(problem, gamma, init, opts)
        except DivergenceDetected:
            rep.termination = BLOWUP_CAP
            break
        except SolverOutcome as exc:
            rep.termination = exc.code
            break
        u = res.u
        init = u
        rep.gammas.append(gamma)
        rep.sup_u.append(res.sup_u)
        rep.core_min.append(core_min(problem, u))
        rep.mass_frac_plus.append(mass_fraction_plus(problem, u))
        rep.cosine.append(float(u @ ext) / (float(np.linalg.norm(u)) * ext_norm))
    return rep


__all__ = [
    "BLOWUP_CAP",
    "REACHED_HI",
    "STEP_UNDERFLOW",
    "Branch",
    "BranchPoint",
    "bifurcation_locate",
    "blowup_probe",
    "dgamma_check",
    "existence_interval",
    "gamma_grid",
    "trace_branch",
]
