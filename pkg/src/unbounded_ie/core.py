"""Domains with compact exhaustions and sampled functions with sup-metrics.

A :class:`Domain` is an unbounded region of R^n (the half line, the real line
or all of R^n for n <= 3) together with a strictly increasing list of radii
``T_1 < T_2 < ...``.  The closed balls ``D_k = {x : ||x|| <= T_k}`` form the
nested compact exhaustion of the domain.

A :class:`SampledFunction` stores values in R^d on a tensor grid and
interpolates multilinearly, extending by constants beyond the grid.  All
sup-norms computed from samples are *grid sups*: lower estimates of the true
supremum over the domain.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

__all__ = [
    "Domain",
    "DomainError",
    "SampledFunction",
    "GridSupWarning",
    "as_points",
    "sup_norm",
    "sup_distance",
    "read_csv",
    "write_csv",
]

DOMAIN_KINDS = ("half_line", "real_line", "box_rn")
DEFAULT_RADII = tuple(float(2**k) for k in range(0, 21))


class DomainError(ValueError):
    """A point lies outside the domain."""


class GridSupWarning(UserWarning):
    """A grid sup was taken over an empty set of grid points."""


@dataclass(frozen=True)
class Domain:
    """Unbounded domain with a norm-ball exhaustion.

    Parameters
    ----------
    kind : {'half_line', 'real_line', 'box_rn'}
        ``box_rn`` is all of R^n.
    dimension : int
        Forced to 1 for the two line kinds; at most 3.
    exhaustion_radii : sequence of float
        Strictly increasing positive radii of the exhaustion balls.
    """

    kind: str = "real_line"
    dimension: int = 1
    exhaustion_radii: tuple = DEFAULT_RADII

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind in ("half_line", "real_line") and self.dimension != 1:
            raise ValueError(f"{self.kind} has dimension 1, got {self.dimension}")
        if not 1 <= self.dimension <= 3:
            raise ValueError("dimension must be 1, 2 or 3")
        radii = tuple(float(r) for r in self.exhaustion_radii)
        if not radii:
            raise ValueError("exhaustion_radii must be nonempty")
        if radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("exhaustion_radii must be positive and strictly increasing")
        object.__setattr__(self, "exhaustion_radii", radii)

    @classmethod
    def half_line(cls, radii=DEFAULT_RADII):
        return cls("half_line", 1, tuple(radii))

    @classmethod
    def real_line(cls, radii=DEFAULT_RADII):
        return cls("real_line", 1, tuple(radii))

    @classmethod
    def rn(cls, n, radii=DEFAULT_RADII):
        return cls("box_rn", n, tuple(radii))

    @property
    def n(self):
        return self.dimension

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points lying in the domain."""
        pts = as_points(points, self.dimension)
        ok = np.all(np.isfinite(pts), axis=1)
        if self.kind == "half_line":
            ok &= pts[:, 0] >= 0.0
        return ok

    def check(self, points) -> np.ndarray:
        pts = as_points(points, self.dimension)
        bad = ~self.contains(pts)
        if np.any(bad):
            raise DomainError(f"point {pts[np.argmax(bad)].tolist()} outside {self.kind}")
        return pts

    def exhaustion_index(self, radius: float) -> int:
        """Index of the first exhaustion ball containing the ball of ``radius``.

        Raises ``ValueError`` if ``radius`` exceeds the last stored radius.
        """
        for k, r in enumerate(self.exhaustion_radii):
            if radius <= r:
                return k
        raise ValueError(f"radius {radius} exceeds the stored exhaustion")

    def axis_interval(self, T: float) -> tuple:
        """Per-axis bounds ``(lo, hi)`` of the smallest box containing the ball of radius T."""
        lo = 0.0 if self.kind == "half_line" else -T
        return lo, T


def as_points(x, n: int) -> np.ndarray:
    """Coerce scalars, 1-d arrays and (N, n) arrays to an (N, n) float array."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if n == 1 else a.reshape(1, -1)
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"expected points of dimension {n}, got shape {np.shape(x)}")
    return a


def _tensor_points(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Values of a function X -> R^d on a tensor grid.

    ``axes`` holds one sorted coordinate array per dimension; the grid is their
    tensor product in lexicographic order (first coordinate slowest).
    ``values`` has shape ``(len(grid), d)``.
    """

    domain: Domain
    axes: tuple
    values: np.ndarray
    _interp: object = field(default=None, repr=False, compare=False)
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float).ravel() for a in self.axes)
        if len(axes) != self.domain.dimension:
            raise ValueError("one axis per domain dimension required")
        for a in axes:
            if a.size == 0:
                raise ValueError("empty grid")
            if np.any(np.diff(a) <= 0):
                raise ValueError("grid axes must be strictly increasing")
        npts = int(np.prod([a.size for a in axes]))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if vals.shape[0] != npts:
            raise ValueError(f"{vals.shape[0]} values for {npts} grid points")
        self.domain.check(_tensor_points(axes))
        vals = vals.copy()
        vals.setflags(write=False)
        for a in axes:
            a.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, domain: Domain, axes, func: Callable) -> "SampledFunction":
        """Sample ``func`` (vectorized over an (N, n) point array) on the grid."""
        if domain.dimension == 1 and np.ndim(axes[0]) == 0:
            axes = (axes,)
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        pts = _tensor_points(axes)
        return cls(domain, axes, np.asarray(func(pts), dtype=float))

    @classmethod
    def constant(cls, domain: Domain, axes, value) -> "SampledFunction":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls.from_callable(domain, axes, lambda p: np.tile(value, (p.shape[0], 1)))

    @property
    def grid(self) -> np.ndarray:
        return _tensor_points(self.axes)

    @property
    def shape(self):
        return tuple(a.size for a in self.axes)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    def with_values(self, values) -> "SampledFunction":
        return SampledFunction(self.domain, self.axes, values)

    def same_grid(self, other: "SampledFunction") -> bool:
        return (
            self.domain == other.domain
            and len(self.axes) == len(other.axes)
            and all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.axes, other.axes))
        )

    def __call__(self, x) -> np.ndarray:
        """Evaluate at points; returns shape (N, d)."""
        pts = self.domain.check(x)
        lo = np.array([a[0] for a in self.axes])
        hi = np.array([a[-1] for a in self.axes])
        clipped = np.clip(pts, lo, hi)
        if self.domain.dimension == 1:
            ax = self.axes[0]
            if ax.size == 1:
                return np.repeat(self.values, clipped.shape[0], axis=0)
            return np.stack(
                [np.interp(clipped[:, 0], ax, self.values[:, j]) for j in range(self.d)], axis=1
            )
        interp = self._interp
        if interp is None:
            degenerate = [a.size == 1 for a in self.axes]
            if any(degenerate):
                raise ValueError("multilinear interpolation needs >= 2 points per axis")
            interp = RegularGridInterpolator(
                self.axes, self.values.reshape(self.shape + (self.d,)), method="linear"
            )
            object.__setattr__(self, "_interp", interp)
        return interp(clipped)

    def eval(self, x) -> np.ndarray:
        """Value at a single point, shape (d,)."""
        return self(as_points(x, self.domain.dimension))[0]


def sup_norm(f: SampledFunction) -> float:
    """Grid sup of the Euclidean norm of ``f``."""
    if len(f) == 0:
        raise ValueError("empty grid")
    return float(np.max(np.linalg.norm(f.values, axis=1)))


def sup_distance(f: SampledFunction, g: SampledFunction, radius="all") -> float:
    """Grid sup of ``||f(x) - g(x)||`` over grid points with ``||x|| <= radius``.

    Returns 0 with a :class:`GridSupWarning` when no grid point qualifies.
    """
    if not f.same_grid(g):
        raise ValueError("sup_distance needs functions on the same grid")
    diff = np.linalg.norm(f.values - g.values, axis=1)
    if radius != "all":
        if radius <= 0:
            raise ValueError("radius must be positive or 'all'")
        diff = diff[np.linalg.norm(f.grid, axis=1) <= radius]
        if diff.size == 0:
            warnings.warn(f"no grid point within radius {radius}", GridSupWarning, stacklevel=2)
            return 0.0
    return float(np.max(diff))


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(f: SampledFunction, path=None) -> str:
    """Serialize as CSV ``x1,...,xn,v1,...,vd``; returns the text and writes ``path`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n, d = f.domain.dimension, f.d
    w.writerow([f"x{i + 1}" for i in range(n)] + [f"v{j + 1}" for j in range(d)])
    for p, v in zip(f.grid, f.values):
        w.writerow([_fmt(c) for c in p] + [_fmt(c) for c in v])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_csv(path_or_text, domain: Domain) -> SampledFunction:
    """Inverse of :func:`write_csv`.  Rows must be a full tensor grid in lexicographic order."""
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        text = path_or_text
    else:
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    n = domain.dimension
    if [h for h in header[:n]] != [f"x{i + 1}" for i in range(n)]:
        raise ValueError(f"line 1: expected coordinate columns x1..x{n}")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"malformed CSV row: {exc}") from None
    pts, vals = data[:, :n], data[:, n:]
    axes = tuple(np.unique(pts[:, i]) for i in range(n))
    if not np.array_equal(_tensor_points(axes), pts):
        raise ValueError("CSV rows do not form a lexicographic tensor grid")
    return SampledFunction(domain, axes, vals)


def zero_like(f: SampledFunction) -> SampledFunction:
    return f.with_values(np.zeros_like(f.values))


def stack_values(fs: Sequence[SampledFunction]) -> np.ndarray:
    """Values of functions sharing one grid as an (m, N, d) array."""
    first = fs[0]
    for g in fs[1:]:
        if not first.same_grid(g):
            raise ValueError("functions do not share a grid")
    return np.stack([g.values for g in fs])
