"""Integral kernels with their integrability hypotheses as evaluable metadata.

Linear kernels ``K(x, y)`` take a single point ``x`` and an (N, n) array of
``y`` nodes and return one d x d matrix per node.  Nonlinear (Urysohn)
kernels live on the half line and take ``(x, y, u)`` with ``u`` in R^d.

Domination is declared locally in ``x``: ``tail(T, R)`` bounds

    sup_{||x|| <= R}  int_{||y|| > T} ||K(x, y)|| dy,

which is what truncation of the y-integral needs for output points within
radius ``R``.  Kernels with a globally integrable majorant simply ignore
``R``.

The checkers below turn the hypotheses into numbers on finite probe sets:
``check_car4`` (uniform L1 bound), ``check_k2`` (Cauchy decay along rays),
``check_k1_via_limit`` (decay towards a declared radial limit),
``estimate_K_M`` and ``check_condition_B`` for Urysohn kernels.  Every sup
they return is a sup over a finite set.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gamma, gammaincc

from .core import Domain, as_points
from .quadrature import (
    NoConvergenceError,
    QuadraturePlan,
    build_plan,
    find_truncation_radius,
    gauss_panels,
    integrate,
)

logger = logging.getLogger(__name__)

U_SAMPLES = 128
GAP_FLAG = 0.10


class UnsupportedOperationError(TypeError):
    """The kernel lacks the metadata an operation needs."""


class KernelFileError(ValueError):
    """Malformed tabulated-kernel file; ``lineno`` is 1-based."""

    def __init__(self, msg, lineno):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


# --------------------------------------------------------------------------
# kernel types


@dataclass(frozen=True, eq=False)
class LinearKernel:
    """Matrix-valued kernel ``K : X x Y -> R^{d x d}`` with X = Y = ``domain``.

    Parameters
    ----------
    func : callable
        ``func(x, ys)`` with ``x`` of shape (n,) and ``ys`` of shape (N, n),
        returning shape (N,) when d == 1 or (N, d, d).
    tail : callable, optional
        ``tail(T, R)``, see module docstring.
    domination : callable, optional
        ``domination(ys, R)`` pointwise majorant of ``||K(x, y)||`` for
        ``||x|| <= R``; only spot-checked.
    radial_limit : callable, optional
        ``radial_limit(v, ys)``, the limit of ``K(t v, y)`` as t grows.
    car4_bound : float, optional
        Declared value of ``sup_x int ||K(x, y)|| dy``.
    kinks : callable, optional
        ``kinks(x)`` returns y-locations (1-d only) where ``K(x, .)`` is not
        smooth; quadrature panels are split there.
    """

    func: Callable
    domain: Domain = field(default_factory=Domain)
    d: int = 1
    tail: Optional[Callable] = None
    domination: Optional[Callable] = None
    radial_limit: Optional[Callable] = None
    car4_bound: Optional[float] = None
    kinks: Optional[Callable] = None
    name: str = "kernel"

    def matrix(self, x, ys) -> np.ndarray:
        """Kernel values as an (N, d, d) array."""
        x = np.asarray(x, dtype=float).reshape(-1)
        ys = as_points(ys, self.domain.dimension)
        return _as_matrices(self.func(x, ys), ys.shape[0], self.d)

    def opnorm(self, x, ys) -> np.ndarray:
        return _opnorm(self.matrix(x, ys))

    def breakpoints(self, *xs) -> np.ndarray:
        if self.kinks is None or self.domain.dimension != 1:
            return np.empty(0)
        return np.concatenate([np.ravel(self.kinks(np.asarray(x, dtype=float).reshape(-1)))
                               for x in xs])

    def tail_bound(self, T: float, R: float) -> float:
        return 0.0 if self.tail is None else float(self.tail(T, R))


def _as_matrices(vals, N, d) -> np.ndarray:
    a = np.asarray(vals, dtype=float)
    if d == 1 and a.shape in ((N,), (N, 1)):
        return a.reshape(N, 1, 1)
    return a.reshape(N, d, d)


def _opnorm(mats: np.ndarray) -> np.ndarray:
    if mats.shape[1:] == (1, 1):
        return np.abs(mats[:, 0, 0])
    return np.linalg.norm(mats, ord=2, axis=(1, 2))


@dataclass(frozen=True, eq=False)
class UrysohnKernel:
    """Nonlinear kernel ``K : R+ x R+ x R^d -> R^d``.

    ``func(x, ys, us)`` takes a scalar ``x``, nodes ``ys`` of shape (N,) and
    arguments ``us`` of shape (N, d); returns shape (N, d).
    ``asymptote(x, ys)`` is the ``b`` of condition (B); ``envelope(ys, M)``
    bounds ``sup_{||u|| <= M} ||K(x, y, u)||`` uniformly in x and
    ``envelope_tail(T, M)`` bounds its integral over ``y > T``.
    ``uniform_modulus_x(eta)`` returns a delta such that moving x by less
    than delta changes K by less than eta.
    """

    func: Callable
    d: int = 1
    asymptote: Optional[Callable] = None
    envelope: Optional[Callable] = None
    envelope_tail: Optional[Callable] = None
    uniform_modulus_x: Optional[Callable] = None
    name: str = "urysohn"

    domain = Domain.half_line()

    def __call__(self, x, ys, us) -> np.ndarray:
        ys = np.asarray(ys, dtype=float).reshape(-1)
        us = np.asarray(us, dtype=float).reshape(ys.size, self.d)
        return np.asarray(self.func(float(x), ys, us), dtype=float).reshape(ys.size, self.d)

    def b(self, x, ys) -> np.ndarray:
        if self.asymptote is None:
            raise UnsupportedOperationError(f"{self.name}: no asymptote declared")
        ys = np.asarray(ys, dtype=float).reshape(-1)
        return np.asarray(self.asymptote(float(x), ys), dtype=float).reshape(ys.size, self.d)


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Substitution map ``F(y, z)`` with growth bound ``||F(y, z)|| <= phi(||z||)``.

    ``func(ys, zs)`` maps (N, n) nodes and (N, d) values to (N, d).
    ``phi`` must be nondecreasing and continuous on [0, inf).
    """

    func: Callable
    phi: Callable
    modulus: Optional[Callable] = None
    name: str = "F"

    def __call__(self, ys, zs) -> np.ndarray:
        zs = np.asarray(zs, dtype=float)
        return np.asarray(self.func(ys, zs), dtype=float).reshape(zs.shape)


# --------------------------------------------------------------------------
# built-in kernels


def _sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 points for n = 1)."""
    return 2 * np.pi ** (n / 2) / gamma(n / 2)


def exp_norm_tail(n: int, s: float, half_line: bool = False) -> float:
    """``int_{||z|| > s} exp(-||z||) dz`` over R^n (or the half line)."""
    s = max(float(s), 0.0)
    area = 1.0 if half_line else _sphere_area(n)
    return float(area * gamma(n) * gammaincc(n, s))


G_BUILTINS = {
    # name: (g, sup_{||x|| <= R} ||g(x)||, radial limit g_v)
    "identity": (lambda x: x, lambda R: R, None),
    "saturating": (
        lambda x: x / (1.0 + np.linalg.norm(x)),
        lambda R: 1.0 if np.isinf(R) else R / (1.0 + R),
        lambda v: np.asarray(v, dtype=float),
    ),
    "zero": (lambda x: np.zeros_like(x), lambda R: 0.0, lambda v: np.zeros_like(np.asarray(v, dtype=float))),
}


def exponential_family(g="saturating", n: int = 1, scale: float = 1.0,
                       g_sup: Optional[Callable] = None, g_limit: Optional[Callable] = None,
                       domain: Optional[Domain] = None) -> LinearKernel:
    """Scalar kernel ``scale * exp(-||g(x) - y||)`` on R^n.

    ``g`` is a callable on single points or one of the names in
    ``G_BUILTINS``.  For a custom callable pass ``g_sup(R)``, an upper bound
    of ``||g(x)||`` over ``||x|| <= R``; otherwise it is estimated on a
    sample of the ball and the tail is no longer certified.

    The tail is ``scale * |S^{n-1}| * Gamma(n, T - G)`` with ``G = g_sup(R)``,
    in 1-d ``2 scale exp(-(T - G))``.
    """
    name = g if isinstance(g, str) else getattr(g, "__name__", "custom")
    if isinstance(g, str):
        g, default_sup, default_limit = G_BUILTINS[g]
        g_sup = g_sup or default_sup
        g_limit = g_limit or default_limit
    if domain is None:
        domain = Domain.real_line() if n == 1 else Domain.rn(n)
    n = domain.dimension
    half = domain.kind == "half_line"
    if g_sup is None:
        g_sup = _sampled_sup(g, n)

    def func(x, ys):
        return scale * np.exp(-np.linalg.norm(ys - g(x), axis=1))

    def tail(T, R):
        return abs(scale) * exp_norm_tail(n, T - g_sup(R), half)

    def domination(ys, R):
        return abs(scale) * np.exp(-np.maximum(np.linalg.norm(ys, axis=1) - g_sup(R), 0.0))

    radial_limit = None
    if g_limit is not None:
        def radial_limit(v, ys):
            return scale * np.exp(-np.linalg.norm(ys - g_limit(v), axis=1))

    def kinks(x):
        return np.atleast_1d(g(x))

    car4 = abs(scale) * exp_norm_tail(n, 0.0, half) if not half else None
    return LinearKernel(func, domain, 1, tail, domination, radial_limit, car4, kinks,
                        name=f"exponential[{name}]")


def _sampled_sup(g, n):
    def sup(R):
        R = min(R, 1e6)
        pts = np.linspace(-R, R, 201)
        if n > 1:
            pts = np.stack(np.meshgrid(*[np.linspace(-R, R, 21)] * n, indexing="ij"), -1).reshape(-1, n)
        else:
            pts = pts[:, None]
        return float(max(np.linalg.norm(g(p)) for p in pts))
    return sup


def exp_separable(scale: float = 1.0) -> LinearKernel:
    """Rank-one kernel ``scale * exp(-x - y)`` on the half line."""

    def func(x, ys):
        return scale * np.exp(-x[0] - ys[:, 0])

    def radial_limit(v, ys):
        return np.zeros(ys.shape[0])

    return LinearKernel(
        func, Domain.half_line(), 1,
        tail=lambda T, R: abs(scale) * np.exp(-T),
        domination=lambda ys, R: abs(scale) * np.exp(-ys[:, 0]),
        radial_limit=radial_limit,
        car4_bound=abs(scale),
        name="exp_separable",
    )


def exp_y_sin_x() -> LinearKernel:
    """``exp(-|y|) sin(x)`` on R: dominated, but with no limit along rays."""
    return LinearKernel(
        lambda x, ys: np.exp(-np.abs(ys[:, 0])) * np.sin(x[0]),
        Domain.real_line(), 1,
        tail=lambda T, R: 2 * np.exp(-T),
        domination=lambda ys, R: np.exp(-np.abs(ys[:, 0])),
        kinks=lambda x: np.zeros(1),
        name="exp_y_sin_x",
    )


def mollifier_factor(x, ys, m: int) -> np.ndarray:
    """``prod_k`` of 1 below ``x_k``, the ramp ``1 - m (y_k - x_k)`` on ``(x_k, x_k + 1/m)``, 0 above."""
    return np.prod(np.clip(1.0 - m * (ys - x), 0.0, 1.0), axis=1)


def mollified_volterra(base: LinearKernel, m: int) -> LinearKernel:
    """Continuous-in-x approximation of ``K(x, y) 1{y <= x}`` (componentwise order).

    The sharp indicator cutoff is deliberately not offered as a kernel: it
    is discontinuous in x.
    """
    if int(m) < 1:
        raise ValueError("m must be a positive integer")
    m = int(m)

    def func(x, ys):
        mats = _as_matrices(base.func(x, ys), ys.shape[0], base.d)
        return mats * mollifier_factor(x, ys, m)[:, None, None]

    def kinks(x):
        return np.concatenate([base.breakpoints(x), x, x + 1.0 / m])

    return LinearKernel(func, base.domain, base.d, base.tail, base.domination, None,
                        None, kinks, name=f"mollified_volterra[{base.name},m={m}]")


def user_tabulated(path) -> LinearKernel:
    """Kernel from CSV ``x,y,k11,...,kdd`` on a full (x, y) tensor grid, 1-d.

    Bilinear between table points; constant in x beyond the table and zero
    in y outside the tabulated y-range.  The tail bound is computed from the
    per-y maxima of the table, so it is exact for the interpolant.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise KernelFileError("empty file", 1)
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["x", "y"] or len(header) < 3:
        raise KernelFileError("header must start with x,y followed by k11,...", 1)
    ncomp = len(header) - 2
    d = int(round(np.sqrt(ncomp)))
    if d * d != ncomp:
        raise KernelFileError(f"{ncomp} kernel columns is not a square count", 1)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise KernelFileError(f"expected {len(header)} fields, got {len(row)}", lineno)
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise KernelFileError(f"non-numeric field in {row!r}", lineno) from None
        if not np.all(np.isfinite(vals)):
            raise KernelFileError("non-finite value", lineno)
        data.append(vals)
    if not data:
        raise KernelFileError("no data rows", 1)
    data = np.array(data)
    xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
    if xs.size < 2 or ys.size < 2 or xs.size * ys.size != data.shape[0]:
        raise KernelFileError("rows do not form a full (x, y) grid with >= 2 points per axis",
                              len(rows))
    order = np.lexsort((data[:, 1], data[:, 0]))
    table = data[order, 2:].reshape(xs.size, ys.size, d, d)
    interp = RegularGridInterpolator((xs, ys), table, method="linear")
    domain = Domain.half_line() if ys[0] >= 0 and xs[0] >= 0 else Domain.real_line()
    per_y = _opnorm(table.reshape(-1, d, d)).reshape(xs.size, ys.size).max(axis=0)
    cell_max = np.maximum(per_y[:-1], per_y[1:])

    def func(x, yy):
        y = yy[:, 0]
        inside = (y >= ys[0]) & (y <= ys[-1])
        pts = np.stack([np.full_like(y, np.clip(x[0], xs[0], xs[-1])), np.clip(y, ys[0], ys[-1])], 1)
        out = interp(pts)
        out[~inside] = 0.0
        return out

    def tail(T, R):
        lo, hi = ys[:-1], ys[1:]
        right = np.clip(hi - np.maximum(lo, T), 0.0, None)
        left = np.clip(np.minimum(hi, -T) - lo, 0.0, None)
        return float(np.sum(cell_max * (right + left)))

    return LinearKernel(func, domain, d, tail, kinks=lambda x: ys, name=f"tabulated[{path}]")


# Urysohn kernels used throughout the examples and tests.


def rational_urysohn(decay_in_u: bool = False) -> UrysohnKernel:
    """``exp(-x-y) (1 + u/(1+u^2))``, or ``exp(-x-y) (1 + u exp(-y)/(1+u^2))``.

    Both have asymptote ``b = exp(-x-y)`` and envelope ``1.5 exp(-y)``.
    """

    if decay_in_u:
        def func(x, ys, us):
            u = us[:, 0]
            return (np.exp(-x - ys) * (1.0 + u * np.exp(-ys) / (1.0 + u * u)))[:, None]
    else:
        def func(x, ys, us):
            u = us[:, 0]
            return (np.exp(-x - ys) * (1.0 + u / (1.0 + u * u)))[:, None]

    def envelope(ys, M):
        peak = 0.5 if M >= 1 else M / (1.0 + M * M)
        return (1.0 + peak) * np.exp(-ys)

    def envelope_tail(T, M):
        peak = 0.5 if M >= 1 else M / (1.0 + M * M)
        return (1.0 + peak) * np.exp(-T)

    return UrysohnKernel(
        func, 1,
        asymptote=lambda x, ys: np.exp(-x - ys)[:, None],
        envelope=envelope,
        envelope_tail=envelope_tail,
        # |d/dx exp(-x-y)(...)| <= 1.5
        uniform_modulus_x=lambda eta: eta / 1.5,
        name="rational_decay" if decay_in_u else "rational",
    )


def separable_urysohn(scale: float = 1.0) -> UrysohnKernel:
    """``scale * exp(-x-y)``, independent of u."""
    return UrysohnKernel(
        lambda x, ys, us: (scale * np.exp(-x - ys))[:, None], 1,
        asymptote=lambda x, ys: (scale * np.exp(-x - ys))[:, None],
        envelope=lambda ys, M: abs(scale) * np.exp(-ys),
        envelope_tail=lambda T, M: abs(scale) * np.exp(-T),
        uniform_modulus_x=lambda eta: eta / max(abs(scale), 1e-300),
        name="separable",
    )


def linear_growth_urysohn(slope: float = 2.0) -> UrysohnKernel:
    """``slope * u * exp(-y)``: K_M = slope * M, so the ratio K_M / M never drops below 1 when slope >= 1."""
    return UrysohnKernel(
        lambda x, ys, us: slope * us * np.exp(-ys)[:, None], 1,
        asymptote=lambda x, ys: np.zeros((ys.size, 1)),
        envelope=lambda ys, M: abs(slope) * M * np.exp(-ys),
        envelope_tail=lambda T, M: abs(slope) * M * np.exp(-T),
        uniform_modulus_x=lambda eta: np.inf,
        name="linear_growth",
    )


def zero_urysohn(d: int = 1) -> UrysohnKernel:
    return UrysohnKernel(
        lambda x, ys, us: np.zeros((ys.size, d)), d,
        asymptote=lambda x, ys: np.zeros((ys.size, d)),
        envelope=lambda ys, M: np.zeros(ys.size),
        envelope_tail=lambda T, M: 0.0,
        uniform_modulus_x=lambda eta: np.inf,
        name="zero",
    )


def translation_urysohn() -> UrysohnKernel:
    """``u/(1+u^2) exp(-|x-y|)``: K_M finite, yet condition (B) fails (mass escapes with x)."""
    return UrysohnKernel(
        lambda x, ys, us: us / (1.0 + us**2) * np.exp(-np.abs(x - ys))[:, None], 1,
        asymptote=lambda x, ys: np.zeros((ys.size, 1)),
        name="translation",
    )


def identity_F() -> Nonlinearity:
    return Nonlinearity(lambda ys, zs: zs, lambda t: t, lambda z, eps: eps, name="identity")


def zero_F() -> Nonlinearity:
    return Nonlinearity(lambda ys, zs: np.zeros_like(zs), lambda t: 0.0 * np.asarray(t),
                        lambda z, eps: np.inf, name="zero")


def affine_F(offset: float = 1.0, slope: float = 0.5) -> Nonlinearity:
    """``F(y, z) = offset + slope * z`` componentwise (scalar offset)."""
    return Nonlinearity(
        lambda ys, zs: offset + slope * zs,
        lambda t: abs(offset) + abs(slope) * np.asarray(t, dtype=float),
        lambda z, eps: eps / abs(slope) if slope else np.inf,
        name=f"affine[{offset},{slope}]",
    )


def tanh_F() -> Nonlinearity:
    # ||tanh(z)|| <= min(||z||, sqrt(d)); scalar use gives min(t, 1)
    return Nonlinearity(lambda ys, zs: np.tanh(zs), lambda t: np.minimum(t, 1.0),
                        lambda z, eps: eps, name="tanh")


# --------------------------------------------------------------------------
# spot checks of declared metadata


def check_domination(k: LinearKernel, xs, ys) -> float:
    """Largest ``||K(x, y)|| - D(y)`` over the samples (<= 0 means consistent)."""
    if k.domination is None:
        raise UnsupportedOperationError(f"{k.name}: no domination declared")
    xs = as_points(xs, k.domain.dimension)
    ys = as_points(ys, k.domain.dimension)
    R = float(np.max(np.linalg.norm(xs, axis=1)))
    D = np.asarray(k.domination(ys, R), dtype=float)
    return float(max(np.max(k.opnorm(x, ys) - D) for x in xs))


def check_phi(F: Nonlinearity, ys, zs) -> float:
    """Largest ``||F(y, z)|| - phi(||z||)`` over the samples."""
    zs = np.asarray(zs, dtype=float)
    out = np.linalg.norm(F(ys, zs), axis=1)
    return float(np.max(out - np.asarray(F.phi(np.linalg.norm(zs, axis=1)), dtype=float)))


# --------------------------------------------------------------------------
# direction sets


def _icosphere(subdivisions: int) -> np.ndarray:
    t = (1 + 5**0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = verts[i] + verts[j]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts)


def unit_directions(n: int, count: Optional[int] = None) -> np.ndarray:
    """Deterministic unit vectors: +-1 in 1-d, ``count`` (64) angles in 2-d, a 162-point icosphere in 3-d."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        k = count or 64
        th = 2 * np.pi * np.arange(k) / k
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        return _icosphere(2)
    raise ValueError("n must be 1, 2 or 3")


def _domain_directions(domain: Domain, directions=None) -> np.ndarray:
    if directions is None:
        directions = unit_directions(domain.dimension)
    dirs = as_points(directions, domain.dimension)
    return dirs[domain.contains(dirs)]


# --------------------------------------------------------------------------
# linear-kernel checkers


def default_plan(k: LinearKernel, T: float = 40.0, width: float = 1.0) -> QuadraturePlan:
    """Plan on the ball of radius ``T`` with panels of about ``width``."""
    lo, hi = k.domain.axis_interval(T)
    return build_plan(k.domain, T, int(np.ceil((hi - lo) / width)) if k.domain.dimension == 1
                      else int(np.ceil(T / width)))


def _l1_norm_integral(k: LinearKernel, plan: QuadraturePlan, x) -> float:
    p = plan.split(k.breakpoints(x))
    return float(integrate(p, lambda ys: k.opnorm(x, ys)))


def _plan_tail(k: LinearKernel, plan: QuadraturePlan, R: float) -> float:
    if plan.tail_bound > 0:
        return plan.tail_bound
    return k.tail_bound(plan.T, R)


def check_car4(k: LinearKernel, xs, plan: QuadraturePlan) -> float:
    """Grid sup estimate of the (Car4) constant ``sup_x int ||K(x, y)|| dy``.

    Quadrature over ``plan`` plus its tail bound (or, if the plan carries
    none, the kernel's declared tail for the probe radius).
    """
    xs = as_points(xs, k.domain.dimension)
    if xs.shape[0] == 0:
        raise ValueError("xs must be nonempty")
    R = float(np.max(np.linalg.norm(xs, axis=1)))
    tail = _plan_tail(k, plan, R)
    return max(_l1_norm_integral(k, plan, x) for x in xs) + tail


def l1_difference(k: LinearKernel, plan: QuadraturePlan, x1, x2, other=None) -> float:
    """``int ||K(x1, y) - K(x2, y)|| dy`` over the plan (no tail).

    With ``other`` (a callable ``ys -> (N, d, d)``) the second term is
    ``other(ys)`` instead of ``K(x2, .)``.
    """
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    bps = [x1] if other is not None else [x1, np.asarray(x2, dtype=float).reshape(-1)]
    p = plan.split(k.breakpoints(*bps))

    def integrand(ys):
        a = k.matrix(x1, ys)
        b = _as_matrices(other(ys), ys.shape[0], k.d) if other is not None else k.matrix(x2, ys)
        return _opnorm(a - b)

    return float(integrate(p, integrand))


@dataclass
class ConditionReport:
    """Outcome of a (K1)/(K2)/(B) audit over a finite probe set."""

    condition: str
    eps: float
    directions: int
    T: dict
    certified: bool
    failures: list

    @property
    def T_sup(self):
        vals = [t for t in self.T.values() if t is not None]
        if not self.certified or not vals:
            return None
        return max(vals)

    def to_json(self) -> dict:
        return {
            "condition": self.condition,
            "eps": self.eps,
            "directions": self.directions,
            "T_sup": self.T_sup,
            "certified": self.certified,
            "failures": self.failures,
        }


PROBE_SCALES = (1.0, 2.0, 4.0, 8.0)


def k2_tail(k: LinearKernel, plan: QuadraturePlan, v) -> Callable[[float], float]:
    """``T -> max_{t, s in {T, 2T, 4T, 8T}} int ||K(t v, y) - K(s v, y)|| dy`` plus tails."""
    v = np.asarray(v, dtype=float).reshape(-1)

    def tail(T):
        scales = [c * T for c in PROBE_SCALES]
        worst = 0.0
        for i, t in enumerate(scales):
            for s in scales[i + 1:]:
                worst = max(worst, l1_difference(k, plan, t * v, s * v))
        return worst + 2 * k.tail_bound(plan.T, scales[-1])

    return tail


def check_k2(k: LinearKernel, eps: float, directions=None,
             plan: Optional[QuadraturePlan] = None) -> ConditionReport:
    """Certify the Cauchy condition along rays on a finite direction set.

    For every direction ``v`` a radius ``T_v`` is searched such that the
    kernel differences at the probe pairs ``(t, s)`` in ``{T, 2T, 4T, 8T}``
    have L1 norm at most ``eps``.  ``T_sup`` is the max over directions.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    plan = plan or default_plan(k)
    dirs = _domain_directions(k.domain, directions)
    if dirs.shape[0] == 0:
        raise ValueError("no directions inside the domain")
    Ts, failures = {}, []
    for v in dirs:
        key = _dir_key(v)
        try:
            Ts[key] = find_truncation_radius(k2_tail(k, plan, v), eps)
        except NoConvergenceError as exc:
            Ts[key] = None
            failures.append({"direction": v.tolist(), "reason": str(exc)})
    certified = not failures
    if not certified:
        logger.info("K2 not certified for %s: %d failing directions", k.name, len(failures))
    return ConditionReport("K2", eps, int(dirs.shape[0]), Ts, certified, failures)


def _dir_key(v) -> tuple:
    return tuple(round(float(c), 12) for c in np.ravel(v))


def check_k1_via_limit(k: LinearKernel, eps: float, directions=None,
                       plan: Optional[QuadraturePlan] = None, limit=None) -> ConditionReport:
    """Certify decay towards the declared radial limit ``L_v``.

    ``T_v`` is searched so that ``int ||K(t v, y) - L_v(y)|| dy <= eps`` at
    ``t in {T_v, 2 T_v, 4 T_v}``.  ``limit`` overrides ``k.radial_limit``.
    """
    limit = limit or k.radial_limit
    plan = plan or default_plan(k)
    if limit is None:
        raise UnsupportedOperationError(
            f"{k.name}: no radial limit declared; use check_k2 (Cauchy form) instead"
        )
    dirs = _domain_directions(k.domain, directions)
    Ts, failures = {}, []
    for v in dirs:
        def tail(T, v=v):
            worst = max(
                l1_difference(k, plan, c * T * v, None, other=lambda ys: limit(v, ys))
                for c in PROBE_SCALES[:3]
            )
            # ||L_v|| inherits the x-uniform majorant by dominated convergence
            return worst + k.tail_bound(plan.T, 4 * T) + k.tail_bound(plan.T, np.inf)

        key = _dir_key(v)
        try:
            Ts[key] = find_truncation_radius(tail, eps)
        except NoConvergenceError as exc:
            Ts[key] = None
            failures.append({"direction": v.tolist(), "reason": str(exc)})
    return ConditionReport("K1", eps, int(dirs.shape[0]), Ts, not failures, failures)


def constructed_limit(k: LinearKernel, v, t_far: float):
    """Radial limit stand-in: average of ``K(t v, .)`` over ``t in {t_far, 2 t_far, 4 t_far}``."""
    v = np.asarray(v, dtype=float).reshape(-1)

    def L(vv, ys):
        return sum(k.matrix(c * t_far * v, ys) for c in (1.0, 2.0, 4.0)) / 3.0

    return L


# --------------------------------------------------------------------------
# Urysohn kernel checkers


def u_ball_samples(M: float, d: int, count: int = U_SAMPLES) -> np.ndarray:
    """Deterministic, radially equidistributed points of the ball ``||u|| <= M`` in R^d.

    1-d: ``count`` equispaced points of [-M, M] (endpoints included) plus 0.
    Higher d: radii ``M ((i + 1/2)/count)^{1/d}`` paired with golden-angle
    (d = 2) or Fibonacci-sphere (d = 3) directions, plus 0.
    """
    if M == 0:
        return np.zeros((1, d))
    if d == 1:
        return np.concatenate([np.linspace(-M, M, count), [0.0]])[:, None]
    i = np.arange(count)
    r = M * ((i + 0.5) / count) ** (1.0 / d)
    golden = np.pi * (3.0 - 5**0.5)
    if d == 2:
        dirs = np.stack([np.cos(golden * i), np.sin(golden * i)], axis=1)
    else:
        z = 1 - 2 * (i + 0.5) / count
        rho = np.sqrt(1 - z * z)
        dirs = np.stack([rho * np.cos(golden * i), rho * np.sin(golden * i), z], axis=1)
        if d > 3:
            dirs = np.concatenate([dirs, np.zeros((count, d - 3))], axis=1)
    pts = r[:, None] * dirs
    pts = np.concatenate([pts, M * dirs[:: max(1, count // 16)], np.zeros((1, d))])
    return pts


def _project_ball(us, M):
    nrm = np.linalg.norm(us, axis=1, keepdims=True)
    return np.where(nrm > M, us * (M / np.maximum(nrm, 1e-300)), us)


def refine_max(fun, u0, M, step, iters=60):
    """Row-wise compass search maximizing ``fun`` on the ball ``||u|| <= M``.

    ``fun`` maps an (P, d) array to (P,) values, row i being a separate
    problem.  Returns the improved points and values.
    """
    u = np.array(u0, dtype=float)
    best = fun(u)
    P, d = u.shape
    h = np.full(P, float(step))
    for _ in range(iters):
        improved = np.zeros(P, dtype=bool)
        for axis in range(d):
            for sign in (1.0, -1.0):
                cand = u.copy()
                cand[:, axis] += sign * h
                cand = _project_ball(cand, M)
                val = fun(cand)
                better = val > best
                u[better], best[better] = cand[better], val[better]
                improved |= better
        h = np.where(improved, h, 0.5 * h)
    return u, best


@dataclass
class KMEstimate:
    """Sampled and envelope-based values of ``K_M``.

    ``value`` is the sampled estimate (a lower estimate of the sup over u,
    an upper estimate of the tail); ``envelope`` integrates the declared
    envelope.  ``gap_flag`` marks a relative gap above 10%.
    """

    M: float
    value: float
    envelope: Optional[float]
    tail: float
    argmax_x: float

    @property
    def gap(self) -> Optional[float]:
        if self.envelope is None or self.envelope == 0:
            return None
        return (self.envelope - self.value) / self.envelope

    @property
    def gap_flag(self) -> bool:
        return self.gap is not None and abs(self.gap) > GAP_FLAG

    def __float__(self):
        return float(self.value)

    def to_json(self) -> dict:
        return {"M": self.M, "K_M": self.value, "envelope": self.envelope,
                "tail": self.tail, "gap_flag": self.gap_flag}


def _sampled_sup_integrand(k: UrysohnKernel, x, ys, M, u_samples):
    """Per-node ``max_{||u|| <= M} ||K(x, y, u)||`` on sample points, then refined."""
    us = u_ball_samples(M, k.d, u_samples)
    N, S = ys.size, us.shape[0]
    vals = np.linalg.norm(
        k(x, np.repeat(ys, S), np.tile(us, (N, 1))), axis=1
    ).reshape(N, S)
    best = np.argmax(vals, axis=1)
    if M == 0:
        return vals[np.arange(N), best]
    step = 2.0 * M / max(u_samples - 1, 1)
    _, refined = refine_max(
        lambda u: np.linalg.norm(k(x, ys, u), axis=1), us[best], M, step, iters=50
    )
    return np.maximum(refined, vals[np.arange(N), best])


def estimate_K_M(k: UrysohnKernel, M: float, xs, plan: QuadraturePlan,
                 u_samples: int = U_SAMPLES) -> KMEstimate:
    """Estimate ``K_M = sup_x int sup_{||u|| <= M} ||K(x, y, u)|| dy``.

    The inner sup is sampled on :func:`u_ball_samples` and refined locally
    by compass search; the y-integral uses ``plan`` and the declared
    envelope tail beyond ``plan.T``.
    """
    if M < 0:
        raise ValueError("M must be nonnegative")
    xs = np.asarray(xs, dtype=float).reshape(-1)
    ys = plan.nodes[:, 0]
    tail = plan.tail_bound or (k.envelope_tail(plan.T, M) if k.envelope_tail else 0.0)
    best, arg = -np.inf, xs[0]
    for x in xs:
        sup_vals = _sampled_sup_integrand(k, x, ys, M, u_samples)
        val = float(integrate(plan, None, values=sup_vals))
        if val > best:
            best, arg = val, x
    if k.envelope is None:
        # no declared hypothesis: refine the u-sampling once and watch for growth
        finer = max(
            float(integrate(plan, None, values=_sampled_sup_integrand(k, x, ys, M, 4 * u_samples)))
            for x in xs
        )
        if finer > 1.1 * best + 1e-12:
            raise NoConvergenceError(
                f"sampled K_M grows under u-refinement ({best:.6g} -> {finer:.6g}) and no envelope",
                best=finer,
            )
        env = None
    else:
        env = float(integrate(plan, lambda y: k.envelope(y[:, 0], M))) + tail
    return KMEstimate(float(M), best + tail, env, float(tail), float(arg))


def _half_line_panels(a: float, b: float, fine: float = 0.5, fine_span: float = 16.0):
    """Panel edges on [a, b]: width ``fine`` up to ``a + fine_span``, then doubling."""
    edges = list(np.arange(a, min(b, a + fine_span), fine))
    w = fine
    x = edges[-1] + fine if edges else a
    while x < b:
        edges.append(x)
        w *= 2
        x += w
    edges.append(b)
    return np.unique(np.asarray(edges, dtype=float))


def b_difference_tail(k: UrysohnKernel, M: float, xs, u_samples: int = U_SAMPLES,
                      far: Optional[Callable[[float], float]] = None):
    """``T -> sup_{x, ||u|| <= M} int_T^inf ||K(x, y, u) - b(x, y)|| dy`` (numerical, plus declared far tail).

    The probe set is ``xs`` extended by ``{T, 2T}`` so that mass escaping
    with x is not missed.  Beyond ``T_far = max(2T, T + 40)`` the integrand
    is bounded through the envelope: ``2 env_tail(T_far, M) + env_tail(T_far, 0)``.
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    us = u_ball_samples(M, k.d, u_samples)

    def tail(T):
        T_far = far(T) if far else max(2 * T, T + 40.0)
        nodes, weights = gauss_panels(_half_line_panels(T, T_far))

        def integral(x, u_rows):
            out = np.empty(u_rows.shape[0])
            bx = k.b(x, nodes)
            for i, u in enumerate(u_rows):
                diff = k(x, nodes, np.tile(u, (nodes.size, 1))) - bx
                out[i] = weights @ np.linalg.norm(diff, axis=1)
            return out

        worst = 0.0
        for x in np.concatenate([xs, [T, 2 * T]]):
            vals = integral(x, us)
            i = int(np.argmax(vals))
            if M > 0:
                step = 2.0 * M / max(u_samples - 1, 1)
                _, v = refine_max(lambda u: integral(x, u), us[i:i + 1], M, step, iters=30)
                vals = np.append(vals, v)
            worst = max(worst, float(np.max(vals)))
        if k.envelope_tail is not None:
            worst += 2 * k.envelope_tail(T_far, M) + k.envelope_tail(T_far, 0.0)
        return worst

    return tail


def check_condition_B(k: UrysohnKernel, eps: float, M: float, xs,
                      u_samples: int = U_SAMPLES) -> ConditionReport:
    """Search the truncation radius of condition (B) at tolerance ``eps``.

    The report's ``T`` maps ``"T"`` to the certified radius (or None).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if k.asymptote is None:
        raise UnsupportedOperationError(f"{k.name}: condition (B) needs a declared asymptote")
    try:
        T = find_truncation_radius(b_difference_tail(k, M, xs, u_samples), eps)
        return ConditionReport("B", eps, 0, {"T": T}, True, [])
    except NoConvergenceError as exc:
        return ConditionReport("B", eps, 0, {"T": None}, False,
                               [{"M": M, "reason": f"condition (B) not certified: {exc}"}])


def ray_cauchy_tail(k: LinearKernel, plan: Optional[QuadraturePlan] = None, directions=None):
    """``T -> max_v`` of :func:`k2_tail`: the uniform-in-direction Cauchy tail.

    Used as the kernel-derived hint for extension witnesses of Fredholm
    images of the unit ball.
    """
    plan = plan or default_plan(k)
    tails = [k2_tail(k, plan, v) for v in _domain_directions(k.domain, directions)]
    return lambda T: max(t(T) for t in tails)


# --------------------------------------------------------------------------
# registries keyed by scenario names


def _f(params, key, default):
    return float(params.get(key, default))


LINEAR_KERNELS = {
    "exponential": lambda p: exponential_family(
        p.get("g", "saturating"), int(p.get("n", 1)), _f(p, "scale", 1.0)),
    "exp_separable": lambda p: exp_separable(_f(p, "scale", 1.0)),
    "exp_y_sin_x": lambda p: exp_y_sin_x(),
    "tabulated": lambda p: user_tabulated(p["file"]),
}

URYSOHN_KERNELS = {
    "rational": lambda p: rational_urysohn(False),
    "rational_decay": lambda p: rational_urysohn(True),
    "separable": lambda p: separable_urysohn(_f(p, "scale", 1.0)),
    "linear_growth": lambda p: linear_growth_urysohn(_f(p, "slope", 2.0)),
    "zero": lambda p: zero_urysohn(),
    "translation": lambda p: translation_urysohn(),
}

NONLINEARITIES = {
    "identity": lambda p: identity_F(),
    "zero": lambda p: zero_F(),
    "affine": lambda p: affine_F(_f(p, "offset", 1.0), _f(p, "slope", 0.5)),
    "tanh": lambda p: tanh_F(),
}


def linear_kernel_from_spec(name: str, params: dict) -> LinearKernel:
    """Build a registered linear kernel; ``mollified_volterra`` wraps ``base`` with ``m``."""
    if name == "mollified_volterra":
        base = dict(params)
        base_name = base.pop("base")
        return mollified_volterra(linear_kernel_from_spec(base_name, base), int(params["m"]))
    if name not in LINEAR_KERNELS:
        raise KeyError(f"unknown linear kernel {name!r}; known: {sorted(LINEAR_KERNELS)}")
    return LINEAR_KERNELS[name](params)
