"""Energy, gradient and Newton solver for the reduced non-local problem

    (A - lambda) u - gamma (A - lambda)^{-1} u + a f(u) u = 0,

whose positive solutions are exactly the u-components of coexistence states;
the v-component is recovered as v = beta (A - lambda)^{-1} u.
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
)
from .grid import Grid, Nonlinearity, WeightField
from .linops import FULL, ZERO_ONLY, ShiftedOperator
from .spectra import principal_selfadjoint


@dataclass
class SolveOptions:
    gd_tol: float = 1e-6
    newton_tol: float = 1e-10
    max_gd_iter: int = 20_000
    max_newton_iter: int = 40
    blowup_cap: float = 1e8
    # an iterate whose sup-norm falls below zero_tol * (initial sup-norm) is trivial
    zero_tol: float = 1e-8
    armijo_c: float = 1e-4
    max_step: float = 1e6
    polish_steps: int = 2


@dataclass
class EnergyBreakdown:
    dirichlet: float
    mass: float
    nonlocal_: float
    potential: float

    @property
    def total(self) -> float:
        return self.dirichlet + self.mass + self.nonlocal_ + self.potential


@dataclass
class SolveResult:
    u: np.ndarray = field(repr=False)
    gamma: float
    lam: float
    energy: float
    grad_norm: float
    newton_residual: float
    positivity_margin: float
    iterations: dict
    v: np.ndarray | None = field(repr=False, default=None)
    status: str = "CONVERGED"
    energy_trace: list = field(repr=False, default_factory=list)

    @property
    def sup_u(self) -> float:
        return float(np.max(np.abs(self.u)))

    @property
    def is_positive(self) -> bool:
        return self.status == "CONVERGED" and self.positivity_margin > 0


class NonlocalProblem:
    """The reduced problem at a fixed shift lambda on a fixed grid and weight."""

    def __init__(self, grid: Grid, weight: WeightField | np.ndarray,
                 nonlinearity: Nonlinearity | None = None, lam: float = 0.0,
                 op: ShiftedOperator | None = None, op_zero: ShiftedOperator | None = None):
        self.grid = grid
        self.op = op if op is not None else ShiftedOperator(grid, FULL)
        self._op_zero = op_zero
        self.a = np.asarray(weight.values if isinstance(weight, WeightField) else weight, dtype=float)
        if self.a.shape != (self.op.size,):
            raise InvalidParameter("weight has the wrong length for this grid")
        if np.any(self.a < 0):
            raise InvalidParameter("weight must be nonnegative")
        self.nl = nonlinearity if nonlinearity is not None else Nonlinearity()
        self.lam = float(lam)
        self.op.check_shift(self.lam)
        self.cell_volume = grid.cell_volume
        self._principal = None

    @property
    def op_zero(self) -> ShiftedOperator:
        if self._op_zero is None:
            self._op_zero = ShiftedOperator(self.grid, ZERO_ONLY)
        return self._op_zero

    @property
    def principal(self):
        if self._principal is None:
            self._principal = principal_selfadjoint(self.op)
        return self._principal

    @property
    def sigma1(self) -> float:
        return self.principal.value

    @property
    def phi1(self) -> np.ndarray:
        return self.principal.function

    @property
    def gamma_lo(self) -> float:
        return (self.sigma1 - self.lam) ** 2

    def shifted_apply(self, u):
        return self.op.apply(u, self.lam)

    def resolvent(self, u):
        return self.op.solve(self.lam, u)

    def energy(self, u: np.ndarray, gamma: float) -> EnergyBreakdown:
        u = np.asarray(u, dtype=float)
        hd = self.cell_volume
        return EnergyBreakdown(
            dirichlet=0.5 * float(u @ (self.op.matrix @ u)) * hd,
            mass=-0.5 * self.lam * float(u @ u) * hd,
            nonlocal_=-0.5 * gamma * self.op.quadform(self.lam, u),
            potential=float(np.sum(self.a * self.nl.primitive(u))) * hd,
        )

    def residual(self, u: np.ndarray, gamma: float) -> np.ndarray:
        """Strong residual (A - lambda) u - gamma (A - lambda)^{-1} u + a f(u) u."""
        return self.shifted_apply(u) - gamma * self.resolvent(u) + self.a * self.nl.reaction(u)

    def gradient(self, u: np.ndarray, gamma: float) -> np.ndarray:
        """Gradient of the energy for the Euclidean pairing: residual times h^d."""
        return self.residual(u, gamma) * self.cell_volume

    def residual_norm(self, u: np.ndarray, gamma: float, r: np.ndarray | None = None) -> float:
        """Max-norm residual relative to the magnitude of the three terms."""
        if r is None:
            r = self.residual(u, gamma)
        num = float(np.max(np.abs(r)))
        if num == 0.0:
            return 0.0
        scale = (np.max(np.abs(self.shifted_apply(u))) + gamma * np.max(np.abs(self.resolvent(u)))
                 + np.max(np.abs(self.a * self.nl.reaction(u))))
        return num / scale if scale > 0 else num

    def jacobian_diag(self, u: np.ndarray) -> np.ndarray:
        return self.a * self.nl.reaction_derivative(u)

    def metric_solve(self, u: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve (A - lambda + D(u)) x = rhs, D the Hessian of the potential."""
        M = self.op.shifted(self.lam) + sp.diags(self.jacobian_diag(u))
        return spla.splu(M.tocsc()).solve(rhs)

    def jacobian_dense(self, u: np.ndarray, gamma: float) -> np.ndarray:
        n = self.op.size
        J = self.op.shifted(self.lam).toarray() - gamma * self.op.dense_inverse(self.lam)
        J[np.diag_indices(n)] += self.jacobian_diag(u)
        return J

    def jacobian_factor(self, u: np.ndarray, gamma: float):
        """Factor the block system [[A - lam + D, -gamma I], [-I, A - lam]].

        Its Schur complement is the Jacobian (A - lam) - gamma (A - lam)^{-1} + D,
        so one sparse LU solves Jacobian systems exactly without forming the
        dense resolvent.
        """
        n = self.op.size
        S = self.op.shifted(self.lam)
        eye = sp.identity(n, format="csc")
        K = sp.bmat([[S + sp.diags(self.jacobian_diag(u)), -gamma * eye], [-eye, S]], format="csc")
        try:
            lu = spla.splu(K)
        except RuntimeError as exc:
            raise JacobianSingular(f"Jacobian factorization failed: {exc}") from exc

        def solve(rhs):
            out = lu.solve(np.concatenate([rhs, np.zeros(n)]))[:n]
            if not np.all(np.isfinite(out)):
                raise JacobianSingular("Jacobian solve produced non-finite values")
            return out

        return solve

    def jacobian_solve(self, u: np.ndarray, gamma: float, rhs: np.ndarray) -> np.ndarray:
        return self.jacobian_factor(u, gamma)(rhs)

    def recover_v(self, u: np.ndarray, beta: float) -> np.ndarray:
        return recover_v(self.op, u, self.lam, beta)

    def default_init(self, gamma: float) -> np.ndarray:
        """Small multiple of phi_1 sized by the bifurcation balance.

        Balances the quadratic and the absorption terms of the energy along phi_1:
        t^p * sum(a phi^(p+2)) = (gamma/(s-lam) - (s-lam)) * sum(phi^2).
        """
        phi = self.phi1
        d = self.sigma1 - self.lam
        drive = gamma / d - d
        absorb = float(np.sum(self.a * np.abs(phi) ** (self.nl.exponent + 2)))
        if drive <= 0 or absorb <= 0:
            return phi.copy()
        t = (drive * float(phi @ phi) / absorb) ** (1.0 / self.nl.exponent)
        return t * phi


def energy(problem: NonlocalProblem, u: np.ndarray, gamma: float) -> EnergyBreakdown:
    return problem.energy(u, gamma)


def energy_gradient(problem: NonlocalProblem, u: np.ndarray, gamma: float) -> np.ndarray:
    return problem.gradient(u, gamma)


def recover_v(op: ShiftedOperator, u: np.ndarray, lam: float, beta: float) -> np.ndarray:
    """v = beta (A - lambda)^{-1} u."""
    if not beta > 0:
        raise InvalidParameter("beta must be positive")
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        return np.zeros_like(u)
    return beta * op.solve(lam, u)


def system_residual(problem: NonlocalProblem, u: np.ndarray, v: np.ndarray, alpha: float,
                    beta: float, relative: bool = True) -> tuple[float, float]:
    """Max-norm residuals of both equations of the coupled system.

    u-equation: (A - lambda) u - alpha v + a f(u) u;  v-equation: (A - lambda) v - beta u.
    With ``relative=True`` each is divided by the max-norm of its largest term.
    """
    Su = problem.shifted_apply(u)
    Sv = problem.shifted_apply(v)
    react = problem.a * problem.nl.reaction(u)
    r1 = Su - alpha * v + react
    r2 = Sv - beta * u
    n1 = float(np.max(np.abs(r1)))
    n2 = float(np.max(np.abs(r2)))
    if relative:
        s1 = max(np.max(np.abs(Su)), alpha * np.max(np.abs(v)), np.max(np.abs(react)))
        s2 = max(np.max(np.abs(Sv)), beta * np.max(np.abs(u)))
        n1 = n1 / s1 if s1 > 0 else n1
        n2 = n2 / s2 if s2 > 0 else n2
    return n1, n2


def positivity_margin(u: np.ndarray) -> float:
    top = float(np.max(np.abs(u)))
    return float(np.min(u)) / top if top > 0 else 0.0


def _finish(problem, u, gamma, gd_it, newton_it, res, status="CONVERGED", trace=None):
    g = problem.residual_norm(u, gamma)
    return SolveResult(
        u=u,
        gamma=float(gamma),
        lam=problem.lam,
        energy=problem.energy(u, gamma).total,
        grad_norm=g,
        newton_residual=res,
        positivity_margin=positivity_margin(u),
        iterations={"gradient": gd_it, "newton": newton_it},
        status=status,
        energy_trace=trace or [],
    )


def newton_solve(problem: NonlocalProblem, gamma: float, init: np.ndarray,
                 opts: SolveOptions | None = None, ref_scale: float | None = None) -> SolveResult:
    """Newton iteration on the strong residual with residual-decrease damping.

    Full steps are taken whenever they reduce the residual, so convergence is
    quadratic near a non-degenerate root. An iterate below ``zero_tol`` times
    ``ref_scale`` (default: sup-norm of ``init``) is taken as the trivial root.
    """
    opts = opts or SolveOptions()
    u = np.array(init, dtype=float)
    scale0 = float(np.max(np.abs(u))) if ref_scale is None else float(ref_scale)
    r = problem.residual(u, gamma)
    res = problem.residual_norm(u, gamma, r)
    it = 0
    polished = 0
    while True:
        if np.max(np.abs(u)) <= opts.zero_tol * scale0:
            # trivial root: the relative residual carries no information here
            res = float(np.max(np.abs(r)))
            break
        if res <= opts.newton_tol:
            if polished >= opts.polish_steps or res == 0.0:
                break
        if it >= opts.max_newton_iter:
            if res <= opts.newton_tol:
                break
            raise MaxIterations(
                f"Newton did not reach {opts.newton_tol:g} in {it} steps (residual {res:.3e})",
                _finish(problem, u, gamma, 0, it, res, "MAX_ITERS"),
            )
        delta = -problem.jacobian_solve(u, gamma, r)
        it += 1
        t = 1.0
        while True:
            cand = u + t * delta
            r_c = problem.residual(cand, gamma)
            res_c = problem.residual_norm(cand, gamma, r_c)
            if res_c < res or t < 1e-4:
                break
            t *= 0.5
        if res <= opts.newton_tol:
            # polishing: keep the step only if it improves the residual
            polished += 1
            if res_c >= res:
                break
        if not np.all(np.isfinite(cand)):
            raise JacobianSingular("Newton produced non-finite iterate",
                                   _finish(problem, u, gamma, 0, it, res, "JACOBIAN_SINGULAR"))
        u, r, res = cand, r_c, res_c
        if np.max(np.abs(u)) > opts.blowup_cap:
            raise DivergenceDetected(
                f"Newton iterate exceeded the blow-up cap {opts.blowup_cap:g}",
                _finish(problem, u, gamma, 0, it, res, "DIVERGENCE_DETECTED"),
            )
    return _finish(problem, u, gamma, 0, it, res)


def _newton_descent(problem, u, gamma, r):
    """Newton direction if it is a descent direction for the energy, else None."""
    try:
        d = -problem.jacobian_solve(u, gamma, r)
    except JacobianSingular:
        return None
    if float(r @ d) < -1e-10 * float(np.linalg.norm(r) * np.linalg.norm(d)):
        return d
    return None


def minimize_energy(problem: NonlocalProblem, gamma: float, init: np.ndarray | None = None,
                    opts: SolveOptions | None = None) -> SolveResult:
    """Globalized descent on the energy followed by Newton polishing.

    Once the energy is negative (so the iterate is separated from the trivial
    state) each step uses the Newton direction when it is a descent direction;
    otherwise it uses the gradient in the variable metric
    M(u) = A - lambda + a f'(u), which is positive definite and carries the
    stiff absorption term. An Armijo backtracking line search makes every
    accepted step strictly lower the energy.
    """
    opts = opts or SolveOptions()
    u = problem.default_init(gamma) if init is None else np.array(init, dtype=float)
    scale0 = float(np.max(np.abs(u)))
    if scale0 == 0.0:
        raise InvalidParameter("initial guess must be nonzero")
    E = problem.energy(u, gamma).total
    trace = [E]
    step = 1.0
    gd_it = 0
    trivial = False
    hd = problem.cell_volume
    while gd_it < opts.max_gd_iter:
        r = problem.residual(u, gamma)
        if problem.residual_norm(u, gamma, r) <= opts.gd_tol:
            break
        # Newton may head for the trivial saddle while E >= 0 = E(0)
        d, t = (_newton_descent(problem, u, gamma, r) if E < 0 else None), 1.0
        if d is None:
            d, t = -problem.metric_solve(u, r), step
        slope = float(r @ d) * hd
        if not slope < 0:
            break
        while True:
            cand = u + t * d
            E_c = problem.energy(cand, gamma).total
            if E_c <= E + opts.armijo_c * t * slope and E_c < E:
                break
            t *= 0.5
            if t < 1e-14:
                break
        if t < 1e-14:
            break
        u, E = cand, E_c
        trace.append(E)
        gd_it += 1
        step = min(2.0 * t, opts.max_step)
        top = float(np.max(np.abs(u)))
        if top > opts.blowup_cap:
            raise DivergenceDetected(
                f"iterate exceeded the blow-up cap {opts.blowup_cap:g} after {gd_it} descent steps",
                _finish(problem, u, gamma, gd_it, 0, math.nan, "DIVERGENCE_DETECTED", trace),
            )
        if top <= opts.zero_tol * scale0:
            trivial = True
            break

    if trivial:
        result = _finish(problem, u, gamma, gd_it, 0, float(np.max(np.abs(problem.residual(u, gamma)))),
                         "CONVERGED_TO_ZERO", trace)
        raise ConvergedToZero(
            f"descent collapsed to the trivial state (sup|u| = {result.sup_u:.3e})", result
        )
    try:
        result = newton_solve(problem, gamma, u, opts, ref_scale=scale0)
    except (MaxIterations, JacobianSingular) as exc:
        if exc.result is not None:
            exc.result.iterations["gradient"] = gd_it
            exc.result.energy_trace = trace
        raise
    result.iterations["gradient"] = gd_it
    result.energy_trace = trace
    top = result.sup_u
    if top <= opts.zero_tol * scale0:
        result.status = "CONVERGED_TO_ZERO"
        raise ConvergedToZero(
            f"descent collapsed to the trivial state (sup|u| = {top:.3e})", result
        )
    if np.all(result.u < 0):
        # the energy is even in u; report the positive representative
        result.u = -result.u
        result.positivity_margin = positivity_margin(result.u)
    return result


@dataclass
class ProbeReport:
    gamma: float
    n_starts: int
    outcomes: list
    distinct: list = field(repr=False)
    ordering_margins: list

    @property
    def n_distinct_positive(self) -> int:
        return len(self.distinct)


def _low_mode_basis(problem: NonlocalProblem, k: int = 6) -> np.ndarray:
    op = problem.op
    k = min(k, op.size - 1)
    if op.size <= 400:
        _, vecs = np.linalg.eigh(op.matrix.toarray())
        vecs = vecs[:, :k]
    else:
        _, vecs = spla.eigsh(op.matrix, k=k, sigma=0.0, which="LM", v0=np.ones(op.size))
    return vecs / np.abs(vecs).max(axis=0)


def random_positive_inits(problem: NonlocalProblem, n: int, rng: np.random.Generator):
    """Log-uniform amplitudes in [1e-2, 1e2] times positive mixtures of low modes."""
    modes = _low_mode_basis(problem)
    phi = problem.phi1
    for _ in range(n):
        c = rng.uniform(-1.0, 1.0, size=modes.shape[1])
        shape = np.abs(modes @ c) + 0.1 * phi
        shape /= shape.max()
        yield 10.0 ** rng.uniform(-2.0, 2.0) * shape


def uniqueness_probe(problem: NonlocalProblem, gamma: float, n_starts: int = 20,
                     seed: int | np.random.Generator = 0, beta: float = 1.0,
                     opts: SolveOptions | None = None, rel_tol: float = 1e-6) -> ProbeReport:
    """Multi-start solve; collects the distinct positive solutions found."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    outcomes, distinct, margins = [], [], []
    alpha = gamma / beta
    for init in random_positive_inits(problem, n_starts, rng):
        try:
            res = minimize_energy(problem, gamma, init, opts)
        except (ConvergedToZero, DivergenceDetected, MaxIterations, JacobianSingular) as exc:
            outcomes.append(exc.code)
            continue
        if res.positivity_margin <= 0:
            outcomes.append("NOT_POSITIVE")
            continue
        outcomes.append("POSITIVE")
        u = res.u
        for known in distinct:
            diff = np.max(np.abs(u - known)) / max(np.max(np.abs(u)), np.max(np.abs(known)))
            if diff <= rel_tol:
                break
        else:
            distinct.append(u)
            v = problem.recover_v(u, beta)
            margins.append(float(np.min(np.sqrt(alpha) * v - np.sqrt(beta) * u)))
    return ProbeReport(float(gamma), n_starts, outcomes, distinct, margins)


def ordering_margin(u: np.ndarray, v: np.ndarray, alpha: float, beta: float) -> float:
    """min over nodes of sqrt(alpha) v - sqrt(beta) u."""
    return float(np.min(np.sqrt(alpha) * v - np.sqrt(beta) * u))
