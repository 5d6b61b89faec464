"""Truncated composite Gauss-Legendre quadrature over unbounded domains.

An integral over the whole domain is split into the part over the ball of
radius ``T`` (composite 8-point Gauss-Legendre panels, tensorized) and a tail
beyond ``T`` that is never guessed here: callers supply a bound for it from
the integrand's dominating function and attach it with :func:`with_tail`.

In one dimension the panels live on ``[lo, T]`` and can be subdivided at
breakpoints so that kinks of the integrand fall on panel edges.  For n = 2, 3
the ball is parametrized in polar / spherical coordinates and the rule is a
tensor product in ``(r, angles)`` with the Jacobian folded into the weights.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import Domain

logger = logging.getLogger(__name__)

GAUSS_POINTS = 8
MAX_DOUBLING = 40
BISECTION_STEPS = 20

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GAUSS_POINTS)


class QuadratureError(ArithmeticError):
    """Integrand produced a non-finite value."""

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


class NoConvergenceError(RuntimeError):
    """A search or refinement loop hit its cap; ``best`` carries the last value."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


def gauss_panels(edges) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights for the given panel edges."""
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b) + half * _GL_X).ravel()
    weights = (half * _GL_W).ravel()
    return nodes, weights


def _tensor(rules):
    """Tensor product of 1-d (nodes, weights) rules."""
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=1), axis=1)
    return nodes, weights


@dataclass(frozen=True, eq=False)
class QuadraturePlan:
    """Node/weight set for the truncated region ``{x in domain : ||x|| <= T}``.

    ``edges`` (1-d plans only) holds the panel edges so the plan can be split
    or clipped; ``region_volume`` is the Lebesgue measure of the region the
    weights integrate over.
    """

    domain: Domain
    T: float
    nodes: np.ndarray
    weights: np.ndarray
    tail_bound: float = 0.0
    panels: int = 1
    edges: np.ndarray | None = None
    region_volume: float = 0.0

    @property
    def size(self) -> int:
        return self.weights.size

    def summary(self) -> dict:
        return {
            "T": float(self.T),
            "panels": int(self.panels),
            "nodes": int(self.size),
            "tail_bound": float(self.tail_bound),
        }

    def split(self, breakpoints) -> "QuadraturePlan":
        """1-d plan with panels subdivided at ``breakpoints`` inside the interval."""
        if self.edges is None:
            return self
        bp = np.asarray(breakpoints, dtype=float).ravel()
        lo, hi = self.edges[0], self.edges[-1]
        bp = bp[(bp > lo) & (bp < hi)]
        if bp.size == 0:
            return self
        edges = np.unique(np.concatenate([self.edges, bp]))
        nodes, weights = gauss_panels(edges)
        return replace(self, nodes=nodes[:, None], weights=weights, edges=edges)

    def clip(self, lower=None, upper=None) -> "QuadraturePlan":
        """1-d plan restricted to ``[lower, upper]``; panels straddling a cut are cut."""
        if self.edges is None:
            raise ValueError("clip is only defined for 1-d plans")
        lo = self.edges[0] if lower is None else max(lower, self.edges[0])
        hi = self.edges[-1] if upper is None else min(upper, self.edges[-1])
        if hi <= lo:
            empty = np.empty(0)
            return replace(self, nodes=empty[:, None], weights=empty,
                           edges=np.array([lo, lo]), region_volume=0.0)
        inner = self.edges[(self.edges > lo) & (self.edges < hi)]
        edges = np.concatenate([[lo], inner, [hi]])
        nodes, weights = gauss_panels(edges)
        return replace(self, nodes=nodes[:, None], weights=weights, edges=edges,
                       region_volume=float(hi - lo))


def _ball_volume(domain: Domain, T: float) -> float:
    n = domain.dimension
    if n == 1:
        return T if domain.kind == "half_line" else 2 * T
    if n == 2:
        return np.pi * T**2
    return 4.0 / 3.0 * np.pi * T**3


def build_plan(domain: Domain, T: float, panels_per_axis: int) -> QuadraturePlan:
    """Composite 8-point Gauss-Legendre plan on the ball of radius ``T``.

    Examples
    --------
    >>> p = build_plan(Domain.half_line(), 30.0, 30)
    >>> round(float(integrate(p, lambda y: np.exp(-y[:, 0]))), 12)
    1.0
    """
    if not T > 0:
        raise ValueError(f"truncation radius must be positive, got {T}")
    if int(panels_per_axis) < 1:
        raise ValueError("panels_per_axis must be >= 1")
    k = int(panels_per_axis)
    n = domain.dimension
    if n == 1:
        lo, hi = domain.axis_interval(T)
        edges = np.linspace(lo, hi, k + 1)
        nodes, weights = gauss_panels(edges)
        return QuadraturePlan(domain, float(T), nodes[:, None], weights, 0.0, k,
                              edges, _ball_volume(domain, T))
    r = gauss_panels(np.linspace(0.0, T, k + 1))
    theta = gauss_panels(np.linspace(0.0, 2 * np.pi, k + 1))
    if n == 2:
        polar, w = _tensor([r, theta])
        rr, th = polar[:, 0], polar[:, 1]
        nodes = np.stack([rr * np.cos(th), rr * np.sin(th)], axis=1)
        weights = w * rr
    else:
        phi = gauss_panels(np.linspace(0.0, np.pi, k + 1))
        sph, w = _tensor([r, phi, theta])
        rr, ph, th = sph.T
        nodes = np.stack(
            [rr * np.sin(ph) * np.cos(th), rr * np.sin(ph) * np.sin(th), rr * np.cos(ph)], axis=1
        )
        weights = w * rr**2 * np.sin(ph)
    return QuadraturePlan(domain, float(T), nodes, weights, 0.0, k, None, _ball_volume(domain, T))


def box_plan(domain: Domain, lower, upper, panels_per_axis: int) -> QuadraturePlan:
    """Tensor Gauss-Legendre plan on the box ``prod [lower_k, upper_k]``.

    Used for Volterra regions ``{y_k <= x_k}`` truncated at ``-T``.  The box
    must be nonempty along every axis.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    k = int(panels_per_axis)
    rules = [gauss_panels(np.linspace(a, b, k + 1)) for a, b in zip(lower, upper)]
    nodes, weights = _tensor(rules)
    edges = np.linspace(lower[0], upper[0], k + 1) if domain.dimension == 1 else None
    T = float(np.max(np.abs(np.concatenate([lower, upper]))))
    return QuadraturePlan(domain, T, nodes, weights, 0.0, k, edges,
                          float(np.prod(upper - lower)))


def empty_plan(domain: Domain) -> QuadraturePlan:
    """Plan with no nodes (integrals over an empty region are 0)."""
    n = domain.dimension
    return QuadraturePlan(domain, 0.0, np.empty((0, n)), np.empty(0), 0.0, 0,
                          np.array([0.0, 0.0]) if n == 1 else None, 0.0)


def with_tail(plan: QuadraturePlan, tail_bound: float) -> QuadraturePlan:
    """Copy of ``plan`` carrying a certified bound on the omitted tail integral."""
    if tail_bound < 0 or not np.isfinite(tail_bound):
        raise ValueError("tail bound must be finite and nonnegative")
    return replace(plan, tail_bound=float(tail_bound))


def integrate(plan: QuadraturePlan, integrand: Callable, values=None):
    """Weighted node sum of ``integrand`` over ``plan``.

    ``integrand`` maps an (N, n) node array to an array with leading axis N
    (scalars, vectors or matrices per node).  The tail bound is *not* added.
    Pass ``values`` to reuse integrand values already computed at the nodes.
    """
    vals = np.asarray(integrand(plan.nodes) if values is None else values, dtype=float)
    if vals.shape[:1] != (plan.size,):
        raise ValueError(f"integrand returned shape {vals.shape} for {plan.size} nodes")
    finite = np.isfinite(vals.reshape(plan.size, -1)).all(axis=1)
    if not finite.all():
        node = plan.nodes[np.argmin(finite)]
        raise QuadratureError(f"non-finite integrand at node {node.tolist()}", node=node)
    return np.tensordot(plan.weights, vals, axes=(0, 0))


def find_truncation_radius(tail: Callable[[float], float], eps: float) -> float:
    """Smallest-ish ``T`` with ``tail(T) <= eps`` for a nonincreasing tail.

    Doubles from 1 up to ``2**40`` and then bisects 20 times between the last
    failing and the first passing radius.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    T = 1.0
    prev = None
    for _ in range(MAX_DOUBLING + 1):
        if tail(T) <= eps:
            break
        prev, T = T, 2 * T
    else:
        raise NoConvergenceError(
            f"tail exceeds {eps:g} for all T <= 2^{MAX_DOUBLING}; "
            "the kernel likely violates the tail condition"
        )
    if prev is not None:
        lo, hi = prev, T
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            if tail(mid) <= eps:
                hi = mid
            else:
                lo = mid
        T = hi
    assert tail(T) <= eps
    return T


def refine_until(domain: Domain, T: float, integrand: Callable, tol: float,
                 max_panels: int = 2**12):
    """Double the panel count until successive integrals agree to ``tol``.

    Returns ``(value, error_estimate)`` where the estimate is the last
    difference in norm.  Each panel count costs ``(8 * panels) ** n`` nodes,
    so lower ``max_panels`` for n > 1.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    panels = 1
    prev = integrate(build_plan(domain, T, panels), integrand)
    while panels < max_panels:
        panels *= 2
        cur = integrate(build_plan(domain, T, panels), integrand)
        diff = float(np.linalg.norm(np.atleast_1d(cur - prev)))
        if diff < tol:
            return cur, diff
        prev = cur
    logger.warning("refine_until: %d panels reached, last difference %.3g", panels, diff)
    raise NoConvergenceError(f"no convergence to {tol:g} with {panels} panels per axis", best=cur)
