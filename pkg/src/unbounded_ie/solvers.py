"""Solvers: Nystrom for linear second-kind equations, invariant-ball radii, damped Picard.

Existence results of Schauder type give no algorithm, so the nonlinear side
is split in two: a radius whose ball is mapped into itself (computed from the
growth hypotheses alone) and a damped Picard iteration that may or may not
converge.  Non-convergence is reported, never raised.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .core import SampledFunction, sup_norm
from .kernels import KMEstimate, LinearKernel, UrysohnKernel, estimate_K_M
from .quadrature import QuadraturePlan, build_plan

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
SCAN_CELLS = 1024
ROOT_BISECTIONS = 60


class LinearSolveError(np.linalg.LinAlgError):
    def __init__(self, msg, condition=None):
        super().__init__(msg)
        self.condition = condition


class ContractionWarning(UserWarning):
    """lambda times the uniform L1 bound is at least 1."""


# --------------------------------------------------------------------------
# Nystrom


@dataclass(frozen=True, eq=False)
class NystromSolution:
    """Nystrom solution with its natural interpolant.

    ``nodes_values`` holds f at the plan nodes; calling the object evaluates
    ``g(x) + lambda sum_j w_j K(x, y_j) f(y_j)`` anywhere.
    """

    kernel: LinearKernel
    g: Callable
    lam: float
    plan: QuadraturePlan
    nodes_values: np.ndarray
    condition: float
    residual: float = float("nan")

    def __call__(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, self.kernel.domain.dimension)
        out = np.asarray(self.g(xs), dtype=float).reshape(xs.shape[0], -1).copy()
        if self.lam == 0:
            return out
        wf = self.plan.weights[:, None] * self.nodes_values
        for i, x in enumerate(xs):
            out[i] += self.lam * np.einsum("nij,nj->i", self.kernel.matrix(x, self.plan.nodes), wf)
        return out

    def sample(self, axes) -> SampledFunction:
        return SampledFunction.from_callable(self.kernel.domain, axes, self)


def nystrom_matrix(kernel: LinearKernel, plan: QuadraturePlan) -> np.ndarray:
    """Dense ``A[i, j] = w_j K(y_i, y_j)`` in (d N) x (d N) block layout."""
    N, d = plan.size, kernel.d
    A = np.empty((N, d, N, d))
    for i, x in enumerate(plan.nodes):
        A[i] = (kernel.matrix(x, plan.nodes) * plan.weights[:, None, None]).transpose(1, 0, 2)
    if not np.all(np.isfinite(A)):
        raise ArithmeticError("non-finite entries in the Nystrom matrix")
    return A.reshape(N * d, N * d)


def solve_fredholm_2nd_kind(kernel: LinearKernel, g, lam: float, plan: QuadraturePlan,
                            probe_plan: Optional[QuadraturePlan] = None) -> NystromSolution:
    """Solve ``f = g + lam * int K(., y) f(y) dy`` by Nystrom discretization.

    ``g`` is a vectorized callable or a sampled function.  The residual is
    the grid sup of the defect of the interpolant on ``probe_plan`` nodes,
    with the integral recomputed on a plan with twice the panels.
    """
    N, d = plan.size, kernel.d
    gvals = np.asarray(g(plan.nodes), dtype=float).reshape(N, -1)
    if gvals.shape[1] != d:
        raise ValueError(f"right-hand side has {gvals.shape[1]} components, kernel d = {d}")
    if lam == 0:
        return NystromSolution(kernel, g, 0.0, plan, gvals, 1.0, 0.0)
    A = nystrom_matrix(kernel, plan)
    car4 = float(np.max(np.abs(A).reshape(N, d, N, d).sum(axis=(2, 3)))) if d == 1 else None
    if car4 is not None and abs(lam) * car4 >= 1:
        warnings.warn(f"|lambda| * L1 bound = {abs(lam) * car4:.3g} >= 1: no contraction guarantee",
                      ContractionWarning, stacklevel=2)
    M = np.eye(N * d) - lam * A
    lu, piv = sla.lu_factor(M, check_finite=False)
    rcond, _ = sla.lapack.dgecon(lu, np.linalg.norm(M, 1), norm="1")
    condition = np.inf if rcond == 0 else 1.0 / rcond
    if condition > COND_LIMIT:
        raise LinearSolveError(f"I - lambda A is ill-conditioned (estimate {condition:.3g})", condition)
    f = sla.lu_solve((lu, piv), gvals.reshape(-1), check_finite=False).reshape(N, d)
    sol = NystromSolution(kernel, g, float(lam), plan, f, float(condition))
    return NystromSolution(kernel, g, float(lam), plan, f, float(condition),
                           nystrom_residual(sol, probe_plan))


def nystrom_residual(sol: NystromSolution, probe_plan: Optional[QuadraturePlan] = None) -> float:
    """Grid sup of ``f - g - lam int K f`` for the interpolant ``f``."""
    plan = sol.plan
    if probe_plan is None:
        if plan.edges is None:
            probe_plan = build_plan(plan.domain, plan.T, 2 * plan.panels)
        else:
            lo, hi = plan.edges[0], plan.edges[-1]
            probe_plan = build_plan(plan.domain, plan.T, 2 * plan.panels)
            probe_plan = probe_plan.clip(lo, hi)
    probes = plan.nodes[:: max(1, plan.size // 64)]
    fine_vals = sol(probe_plan.nodes)
    lhs = sol(probes)
    gv = np.asarray(sol.g(probes), dtype=float).reshape(lhs.shape)
    wf = probe_plan.weights[:, None] * fine_vals
    integ = np.stack([np.einsum("nij,nj->i", sol.kernel.matrix(x, probe_plan.nodes), wf) for x in probes])
    return float(np.max(np.linalg.norm(lhs - gv - sol.lam * integ, axis=1)))


# --------------------------------------------------------------------------
# invariant-ball radii


@dataclass
class RadiusReport:
    """Result of a radius search.

    ``radius`` is None when no admissible radius was found; ``roots`` lists
    every sign change located (Hammerstein), ``ratios`` the curve K_M / M
    (Urysohn).  ``invariant`` states that the ball of that radius is mapped
    into itself by the growth estimate.
    """

    radius: Optional[float]
    invariant: bool = False
    roots: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    note: str = ""

    def to_json(self) -> dict:
        return {"radius": self.radius, "invariant": self.invariant, "roots": self.roots,
                "ratios": self.ratios, "note": self.note}


def _bisect_root(h, a, b, steps=ROOT_BISECTIONS):
    fa = h(a)
    for _ in range(steps):
        m = 0.5 * (a + b)
        fm = h(m)
        if fm == 0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def hammerstein_radius(c: float, phi: Callable, search_max: float) -> RadiusReport:
    """Smallest ``t* in (0, search_max]`` with ``c * phi(t*) = t*``.

    Scans 1024 cells for sign changes of ``c phi(t) - t`` and bisects each
    60 times.  The inclusion ``c phi(t*) <= t*`` (what ball invariance
    needs) is reported separately, with 1e-12 relative slack.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    if not search_max > 0:
        raise ValueError("search_max must be positive")

    def h(t):
        v = c * float(phi(t)) - t
        if not np.isfinite(v):
            raise ArithmeticError(f"phi({t}) is not finite")
        return v

    ts = np.linspace(0.0, search_max, SCAN_CELLS + 1)
    hs = np.array([h(t) for t in ts])
    if c * float(phi(0.0)) == 0 and np.all(hs[1:] < 0):
        return RadiusReport(None, note="zero map at the origin: fixed point f = 0, no t* in (0, inf)")
    roots = []
    for i in range(SCAN_CELLS):
        a, b = ts[i], ts[i + 1]
        if hs[i + 1] == 0 and b > 0:
            roots.append(float(b))
        elif hs[i] != 0 and (hs[i] > 0) != (hs[i + 1] > 0):
            roots.append(float(_bisect_root(h, a, b)))
    roots = sorted(set(r for r in roots if r > 0))
    if not roots:
        return RadiusReport(None, note="c * phi(t) - t has no sign change on the search interval")
    t = roots[0]
    invariant = c * float(phi(t)) <= t * (1 + 1e-12) + 1e-12
    return RadiusReport(t, invariant, roots)


def urysohn_radius(k: UrysohnKernel, xs, plan: QuadraturePlan, M_grid,
                   bisections: int = 40, u_samples: int = 128) -> RadiusReport:
    """Smallest ``R`` with ``K_R <= R`` on ``M_grid``, refined by bisection.

    The ratio curve ``[(M, K_M / M), ...]`` over the grid is reported.
    """
    M_grid = [float(m) for m in M_grid]
    if not M_grid:
        raise ValueError("M_grid must be nonempty")
    if any(b <= a for a, b in zip(M_grid, M_grid[1:])):
        raise ValueError("M_grid must be increasing")
    est: dict[float, KMEstimate] = {}

    def K(M):
        if M not in est:
            est[M] = estimate_K_M(k, M, xs, plan, u_samples)
        return est[M].value

    ratios, hit = [], None
    for M in M_grid:
        ratios.append((M, K(M) / M if M > 0 else np.inf))
        if hit is None and K(M) <= M:
            hit = M
    prev = [M for M in M_grid if hit is not None and M < hit]
    if hit is None:
        return RadiusReport(None, ratios=ratios,
                            note="K_M > M on the whole grid; limsup K_M / M < 1 not observed")
    R = hit
    if prev:
        lo, hi = prev[-1], hit
        for _ in range(bisections):
            mid = 0.5 * (lo + hi)
            if K(mid) <= mid:
                hi = mid
            else:
                lo = mid
        R = hi
    return RadiusReport(R, K(R) <= R, ratios=ratios)


# --------------------------------------------------------------------------
# damped Picard


@dataclass
class FixedPointReport:
    radius: float
    iterations: int
    alpha: float
    residual: float
    converged: bool
    iterate_norms: list
    residuals: list
    ball_violations: list
    solution: Optional[SampledFunction] = None

    def to_json(self) -> dict:
        return {
            "radius": self.radius,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "residual": self.residual,
            "converged": self.converged,
            "iterate_norms": self.iterate_norms,
            "residuals": self.residuals,
            "ball_violations": self.ball_violations,
        }


def picard_solve(op: Callable[[SampledFunction], SampledFunction], f0: SampledFunction,
                 radius: float, alpha: float = 0.5, tol: float = 1e-8, max_iter: int = 200,
                 adapt: bool = True, ball_slack: float = 1e-6) -> FixedPointReport:
    """Damped iteration ``f <- (1 - alpha) f + alpha op(f)``.

    Stops once the grid sup of ``op(f) - f`` is at most ``tol``.  With
    ``adapt``, alpha is halved (down to 1/32) whenever the residual grew on
    5 consecutive iterations.  Iterates leaving the ball of ``radius`` are
    logged in ``ball_violations`` and the iteration continues.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if sup_norm(f0) > radius * (1 + 1e-12):
        raise ValueError("initial guess lies outside the ball")
    f = f0
    norms, residuals, violations = [sup_norm(f)], [], []
    increases = 0
    for it in range(max_iter + 1):
        Tf = op(f)
        if not Tf.same_grid(f):
            raise ValueError("operator output grid differs from the iterate grid")
        res = float(np.max(np.linalg.norm(Tf.values - f.values, axis=1)))
        if not np.isfinite(res):
            raise ArithmeticError(f"non-finite iterate at iteration {it}")
        residuals.append(res)
        if res <= tol:
            return FixedPointReport(radius, it, alpha, res, True, norms, residuals, violations, f)
        if it == max_iter:
            break
        if len(residuals) > 1 and res > residuals[-2]:
            increases += 1
        else:
            increases = 0
        if adapt and increases >= 5 and alpha > 1 / 32:
            alpha = max(alpha / 2, 1 / 32)
            increases = 0
            logger.info("picard: residual rose 5 times, alpha -> %g", alpha)
        f = f.with_values((1 - alpha) * f.values + alpha * Tf.values)
        nrm = sup_norm(f)
        norms.append(nrm)
        if nrm > radius + ball_slack:
            violations.append({"iteration": it + 1, "sup_norm": nrm})
            logger.warning("picard: iterate %d has sup norm %.6g > radius %.6g", it + 1, nrm, radius)
    return FixedPointReport(radius, max_iter, alpha, residuals[-1], False, norms, residuals,
                            violations, f)
