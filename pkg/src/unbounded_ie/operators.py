"""Fredholm, Nemytskii, Hammerstein, Urysohn and Volterra operators.

Inputs are sampled functions or plain vectorized callables ``ys -> (N, d)``;
outputs are :class:`~unbounded_ie.core.SampledFunction` objects on the
operator's output grid whose ``meta`` dict records the bounds that were
checked (uniform L1 constant, output grid sup, truncation tolerance).

Each output point is integrated independently: for 1-d kernels the
quadrature panels are split at the kernel's kinks for that point, and the
Volterra region ``{y <= x}`` is cut at ``y = x`` rather than weighted.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import Domain, SampledFunction, as_points, sup_norm
from .kernels import LinearKernel, Nonlinearity, UrysohnKernel, mollified_volterra
from .quadrature import QuadraturePlan, box_plan, build_plan, empty_plan, find_truncation_radius

logger = logging.getLogger(__name__)

KINDS = ("fredholm", "hammerstein", "urysohn", "volterra")
_workers = 1


def set_workers(n: int) -> None:
    """Thread count for per-point evaluation (results stay in grid order)."""
    global _workers
    _workers = max(1, int(n))


def _map(fn, items):
    if _workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(_workers) as ex:
        return list(ex.map(fn, items))


class TruncationError(ValueError):
    """The declared tail beyond the plan radius exceeds the tolerance."""

    def __init__(self, msg, required_T=None):
        super().__init__(msg)
        self.required_T = required_T


@dataclass(eq=False)
class OperatorSpec:
    """What to apply and where.

    ``plan=None`` means automatic truncation: the radius is the smallest
    (doubling + bisection) T whose declared tail is at most ``eps_tail``
    for output points on ``output_axes``, with panels of ``panel_width``.
    """

    kind: str
    kernel: Union[LinearKernel, UrysohnKernel]
    output_axes: tuple
    plan: Optional[QuadraturePlan] = None
    eps_tail: float = 1e-8
    nonlinearity: Optional[Nonlinearity] = None
    panel_width: float = 1.0
    radial_probes: bool = True
    _auto: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if (self.kind == "hammerstein") != (self.nonlinearity is not None):
            raise ValueError("a nonlinearity is required for, and only for, hammerstein")
        if self.kind == "urysohn" and not isinstance(self.kernel, UrysohnKernel):
            raise TypeError("urysohn needs a UrysohnKernel")
        if self.kind != "urysohn" and not isinstance(self.kernel, LinearKernel):
            raise TypeError(f"{self.kind} needs a LinearKernel")
        if self.plan is not None and self.plan.domain != self.domain:
            raise ValueError("plan domain differs from the kernel domain")
        if not self.eps_tail > 0:
            raise ValueError("eps_tail must be positive")
        axes = self.output_axes
        if self.domain.dimension == 1 and np.ndim(axes[0]) == 0:
            axes = (axes,)
        self.output_axes = tuple(np.asarray(a, dtype=float) for a in axes)

    @property
    def domain(self) -> Domain:
        return self.kernel.domain

    @property
    def output_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.output_axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def output_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.output_points, axis=1)))

    def linear_tail(self, T, R=None) -> float:
        return self.kernel.tail_bound(T, self.output_radius if R is None else R)

    def resolve_plan(self, R=None, scale=1.0) -> QuadraturePlan:
        """The plan to integrate with for output points within radius ``R``."""
        R = self.output_radius if R is None else R
        if self.plan is not None:
            return self.plan
        key = (R, scale)
        if key not in self._auto:
            tail = self._tail_fn(R, scale)
            T = find_truncation_radius(tail, self.eps_tail)
            lo, hi = self.domain.axis_interval(T)
            if self.domain.dimension == 1:
                panels = max(1, math.ceil((hi - lo) / self.panel_width))
            else:
                panels = max(1, math.ceil(T / self.panel_width))
            self._auto[key] = build_plan(self.domain, T, panels)
        return self._auto[key]

    def _tail_fn(self, R, scale):
        if self.kind == "urysohn":
            env_tail = self.kernel.envelope_tail
            if env_tail is None:
                raise TruncationError("automatic truncation needs a declared envelope tail")
            return lambda T: env_tail(T, scale)
        if self.kernel.tail is None:
            raise TruncationError("automatic truncation needs a declared kernel tail")
        return lambda T: self.kernel.tail_bound(T, R)

    def summary(self) -> dict:
        return {"kind": self.kind, "kernel": self.kernel.name, "eps_tail": self.eps_tail,
                "plan": self.resolve_plan().summary() if self.kind != "urysohn" else None}


def _as_callable(f, domain: Domain) -> Callable:
    if isinstance(f, SampledFunction):
        return f
    n = domain.dimension

    def wrapped(ys):
        vals = np.asarray(f(as_points(ys, n)), dtype=float)
        return vals.reshape(vals.shape[0], -1)

    return wrapped


def _grid_sup(f, nodes) -> float:
    if isinstance(f, SampledFunction):
        return sup_norm(f)
    return float(np.max(np.linalg.norm(f(nodes), axis=1))) if len(nodes) else 0.0


# --------------------------------------------------------------------------
# Fredholm


def _fredholm_point(kernel: LinearKernel, plan: QuadraturePlan, fs, x, volterra=False):
    """Integrals of ``K(x, .) f`` for each f, of ``||K(x, .)||``, and per-f node sups at one point."""
    p = _volterra_plan(kernel, plan, x) if volterra else plan
    p = p.split(kernel.breakpoints(x))
    if p.size == 0:
        return np.zeros((len(fs), kernel.d)), 0.0, np.zeros(len(fs))
    mats = kernel.matrix(x, p.nodes)
    w = p.weights
    vals = np.stack([f(p.nodes) for f in fs])  # (m, N, d)
    if not np.all(np.isfinite(mats)):
        bad = p.nodes[np.argmin(np.isfinite(mats).reshape(len(w), -1).all(axis=1))]
        raise ArithmeticError(f"non-finite kernel value at x={x.tolist()}, y={bad.tolist()}")
    out = np.einsum("n,nij,mnj->mi", w, mats, vals)
    l1 = float(w @ _opnorm(mats))
    return out, l1, np.max(np.linalg.norm(vals, axis=2), axis=1)


def _opnorm(mats):
    if mats.shape[1:] == (1, 1):
        return np.abs(mats[:, 0, 0])
    return np.linalg.norm(mats, ord=2, axis=(1, 2))


def _volterra_plan(kernel, plan, x):
    if kernel.domain.dimension == 1:
        return plan.clip(upper=float(x[0]))
    lower = np.full(x.size, -plan.T)
    upper = np.minimum(x, plan.T)
    if np.any(upper <= lower):
        return empty_plan(kernel.domain)
    width = plan.T / max(plan.panels, 1)
    panels = max(1, math.ceil(float(np.max(upper - lower)) / width))
    return box_plan(kernel.domain, lower, upper, panels)


def _apply_linear(spec: OperatorSpec, fs: Sequence, volterra=False):
    domain = spec.domain
    fs = [_as_callable(f, domain) for f in fs]
    plan = spec.resolve_plan()
    tail = spec.linear_tail(plan.T) if spec.kernel.tail is not None else plan.tail_bound
    if tail > spec.eps_tail:
        need = find_truncation_radius(lambda T: spec.linear_tail(T), spec.eps_tail)
        raise TruncationError(
            f"tail {tail:.3g} beyond T={plan.T:g} exceeds eps_tail={spec.eps_tail:g}; "
            f"need T >= {need:.6g}", required_T=need)
    xs = spec.output_points
    results = _map(lambda x: _fredholm_point(spec.kernel, plan, fs, x, volterra), xs)
    out = np.stack([r[0] for r in results], axis=1)  # (m, Nx, d)
    car4 = max(r[1] for r in results) + tail
    node_sups = np.max(np.stack([r[2] for r in results]), axis=0)
    probe = _radial_probe(spec, fs, volterra) if spec.radial_probes and spec.plan is None else None
    funcs = []
    for i, f in enumerate(fs):
        fsup = float(node_sups[i])
        g = SampledFunction(domain, spec.output_axes, out[i])
        sup_out = sup_norm(g)
        # boundedness: sup ||T f|| <= ||f|| * sup_x int ||K(x, y)|| dy
        assert sup_out <= fsup * car4 * (1 + 1e-12) + 1e-14, (sup_out, fsup, car4)
        sup_in = sup_norm(f) if isinstance(f, SampledFunction) else fsup
        g.meta.update(car4=car4, sup_out=sup_out, sup_in=sup_in, tail_eps=spec.eps_tail,
                      T=plan.T, plan=plan.summary())
        if probe is not None:
            g.meta["probe_sup"] = float(probe[i])
        funcs.append(g)
    return funcs


def _radial_probe(spec, fs, volterra):
    """Grid sup at radii 2R and 4R along the unit directions (R = output radius)."""
    from .kernels import unit_directions

    R = max(spec.output_radius, 1.0)
    dirs = unit_directions(spec.domain.dimension)
    dirs = dirs[spec.domain.contains(dirs)]
    pts = np.concatenate([2 * R * dirs, 4 * R * dirs])
    plan = spec.resolve_plan(R=4 * R)
    vals = np.stack([_fredholm_point(spec.kernel, plan, fs, x, volterra)[0] for x in pts], axis=1)
    return np.max(np.linalg.norm(vals, axis=2), axis=1)


def apply_fredholm(spec: OperatorSpec, f):
    """``(T f)(x) = int K(x, y) f(y) dy`` on the output grid.

    ``f`` may be one input or a list (evaluated in a single pass over the
    output points).  Raises :class:`TruncationError` when the declared tail
    beyond the plan radius exceeds ``spec.eps_tail``.
    """
    if spec.kind not in ("fredholm", "hammerstein"):
        raise ValueError(f"apply_fredholm called with a {spec.kind} spec")
    many = isinstance(f, (list, tuple))
    out = _apply_linear(spec, list(f) if many else [f])
    return out if many else out[0]


def apply_volterra(spec: OperatorSpec, f):
    """``(V f)(x) = int_{y <= x} K(x, y) f(y) dy`` (componentwise order), truncated below at -T."""
    if spec.kind != "volterra":
        raise ValueError(f"apply_volterra called with a {spec.kind} spec")
    many = isinstance(f, (list, tuple))
    out = _apply_linear(spec, list(f) if many else [f], volterra=True)
    return out if many else out[0]


# --------------------------------------------------------------------------
# Nemytskii / Hammerstein


def apply_nemytskii(F: Nonlinearity, f):
    """Pointwise substitution ``y -> F(y, f(y))``.

    Sampled inputs give a sampled output on the same grid, checked against
    the growth bound ``sup ||F(., f)|| <= phi(sup ||f||)``; callables give a
    composed callable.
    """
    if isinstance(f, SampledFunction):
        vals = F(f.grid, f.values)
        if not np.all(np.isfinite(vals)):
            raise ArithmeticError(f"non-finite value of {F.name}")
        g = f.with_values(vals)
        assert sup_norm(g) <= float(F.phi(sup_norm(f))) * (1 + 1e-12) + 1e-14
        return g

    def composed(ys):
        z = np.asarray(f(ys), dtype=float)
        z = z.reshape(z.shape[0], -1)
        return F(ys, z)

    return composed


def apply_hammerstein(spec: OperatorSpec, f):
    """``H = T o N``: Fredholm applied to the Nemytskii image."""
    if spec.kind != "hammerstein":
        raise ValueError(f"apply_hammerstein called with a {spec.kind} spec")
    F = spec.nonlinearity
    many = isinstance(f, (list, tuple))
    fs = list(f) if many else [f]
    outs = _apply_linear(spec, [apply_nemytskii(F, g) for g in fs])
    for g, h in zip(fs, outs):
        if isinstance(g, SampledFunction):
            bound = h.meta["car4"] * float(F.phi(sup_norm(g)))
            assert h.meta["sup_out"] <= bound * (1 + 1e-12) + 1e-14
            h.meta["phi_bound"] = bound
    return outs if many else outs[0]


# --------------------------------------------------------------------------
# Urysohn


def apply_urysohn(spec: OperatorSpec, f):
    """``(U f)(x) = int_0^inf K(x, y, f(y)) dy`` on the half line.

    Truncation uses the envelope tail at ``M = sup ||f||``.
    """
    if spec.kind != "urysohn":
        raise ValueError(f"apply_urysohn called with a {spec.kind} spec")
    k: UrysohnKernel = spec.kernel
    fc = _as_callable(f, k.domain)
    M = sup_norm(f) if isinstance(f, SampledFunction) else None
    if M is None:
        probe = build_plan(k.domain, 64.0, 64)
        M = _grid_sup(fc, probe.nodes)
    plan = spec.resolve_plan(scale=M) if spec.plan is None else spec.plan
    tail = k.envelope_tail(plan.T, M) if k.envelope_tail is not None else plan.tail_bound
    if tail > spec.eps_tail:
        need = find_truncation_radius(lambda T: k.envelope_tail(T, M), spec.eps_tail)
        raise TruncationError(
            f"envelope tail {tail:.3g} beyond T={plan.T:g} exceeds eps_tail={spec.eps_tail:g}; "
            f"need T >= {need:.6g}", required_T=need)
    ys = plan.nodes[:, 0]
    fy = fc(plan.nodes)

    def point(x):
        vals = k(x[0], ys, fy)
        if not np.all(np.isfinite(vals)):
            raise ArithmeticError(f"non-finite Urysohn kernel value at x={x[0]}")
        return plan.weights @ vals

    out = np.stack(_map(point, spec.output_points))
    g = SampledFunction(k.domain, spec.output_axes, out)
    g.meta.update(sup_in=M, sup_out=sup_norm(g), tail=tail, tail_eps=spec.eps_tail,
                  T=plan.T, plan=plan.summary())
    return g


# --------------------------------------------------------------------------
# Volterra approximation by mollified Fredholm kernels


@dataclass
class VolterraApprox:
    m: int
    error: float
    strip_bound: float
    weighted_bound: float

    def to_json(self) -> dict:
        return {"m": self.m, "error": self.error, "strip_bound": self.strip_bound,
                "weighted_bound": self.weighted_bound}


def strip_integrals(kernel: LinearKernel, x, m: int, panels: int = 4):
    """``int`` over the strip ``x_k < y_k < x_k + 1/m`` of ``||K(x, y)||``, with and without the ramp weight."""
    x = np.asarray(x, dtype=float).reshape(-1)
    plan = box_plan(kernel.domain, x, x + 1.0 / m, panels)
    plan = plan.split(kernel.breakpoints(x))
    norms = kernel.opnorm(x, plan.nodes)
    ramp = np.prod(np.clip(1.0 - m * (plan.nodes - x), 0.0, 1.0), axis=1)
    return float(plan.weights @ norms), float(plan.weights @ (norms * ramp))


def volterra_approx_error(spec: OperatorSpec, f, m: int) -> VolterraApprox:
    """Grid sup of ``F_m f - V f`` and the strip bound ``sup_x int_strip |K|``.

    ``spec`` is a volterra spec; ``F_m`` uses the mollified kernel on the same
    plan.  ``f`` (or each of a list) must lie in the unit ball.
    """
    if spec.kind != "volterra":
        raise ValueError("volterra_approx_error needs a volterra spec")
    fs = list(f) if isinstance(f, (list, tuple)) else [f]
    plan = spec.resolve_plan()
    fm_spec = OperatorSpec("fredholm", mollified_volterra(spec.kernel, m), spec.output_axes,
                           plan=plan if spec.plan is not None else None,
                           eps_tail=spec.eps_tail, panel_width=spec.panel_width,
                           radial_probes=False)
    if spec.plan is None:
        fm_spec._auto.update(spec._auto)
    vf = _apply_linear(OperatorSpec("volterra", spec.kernel, spec.output_axes, plan=plan,
                                    eps_tail=spec.eps_tail, radial_probes=False), fs, volterra=True)
    fmf = apply_fredholm(fm_spec, fs)
    for g in vf:
        if g.meta["sup_in"] > 1 + 1e-12:
            raise ValueError("volterra_approx_error needs inputs in the unit ball")
    err = max(float(np.max(np.linalg.norm(a.values - b.values, axis=1))) for a, b in zip(fmf, vf))
    strips = [strip_integrals(spec.kernel, x, m) for x in spec.output_points]
    return VolterraApprox(int(m), err, max(s[0] for s in strips), max(s[1] for s in strips))


def fredholm_modulus_hint(spec: OperatorSpec, input_bound: float = 1.0):
    """``(x, delta) -> input_bound * max_{x'} int ||K(x', y) - K(x, y)|| dy`` plus tails.

    ``x'`` ranges over output-grid points within ``delta`` of ``x``.  This
    bounds the oscillation of ``T f`` for every ``||f|| <= input_bound``.
    """
    from .kernels import l1_difference

    pts = spec.output_points
    plan = spec.resolve_plan()
    tail = 2 * spec.linear_tail(plan.T) if spec.kernel.tail is not None else 0.0

    def hint(x, delta):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        near = pts[np.linalg.norm(pts - x, axis=1) <= delta]
        worst = max((l1_difference(spec.kernel, plan, x, p) for p in near), default=0.0)
        return input_bound * (worst + tail)

    return hint
