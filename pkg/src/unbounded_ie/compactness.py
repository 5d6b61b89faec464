"""Empirical Arzela-Ascoli certificates for finite families of sampled functions.

Relative compactness in BC(X, R^d) over an unbounded X needs, besides a
uniform bound and equicontinuity, an *extension condition*: for every eps
there are a radius T and a delta such that two members that are delta-close
on the ball of radius T are eps-close everywhere.  A finite family can only
certify itself, so every certificate here is an empirical certificate
carrying its sample size; the kernel-derived route (pass a ``tail_hint``)
is preferred whenever the family comes from an integral operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DomainError, SampledFunction, stack_values
from .quadrature import NoConvergenceError, find_truncation_radius

DELTA_CANDIDATES = 64
SLACK = 0.05


@dataclass(frozen=True, eq=False)
class FunctionFamily:
    members: tuple
    provenance: str = ""

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 1:
            raise ValueError("a family needs at least one member")
        stack_values(members)  # validates the shared grid
        object.__setattr__(self, "members", members)

    def __len__(self):
        return len(self.members)

    @property
    def grid(self) -> np.ndarray:
        return self.members[0].grid

    @property
    def values(self) -> np.ndarray:
        return stack_values(self.members)

    def subset(self, idx) -> "FunctionFamily":
        return FunctionFamily([self.members[i] for i in idx], self.provenance + " (subset)")


@dataclass
class AACertificate:
    """Bound, modulus table and extension table of a family.

    ``modulus`` rows are ``(x, delta, omega)``, ``extension`` rows
    ``(eps, T, delta)``.
    """

    bound_M: float
    modulus: list
    extension: list
    sample_size: int
    label: str = "empirical certificate"

    def to_json(self) -> dict:
        return {
            "M": self.bound_M,
            "modulus": [[list(np.atleast_1d(x).tolist()) if np.ndim(x) else float(x), d, w]
                        for x, d, w in self.modulus],
            "extension": [list(r) for r in self.extension],
            "sample_size": self.sample_size,
        }

    @classmethod
    def from_json(cls, data: dict) -> "AACertificate":
        modulus = [(np.asarray(x, dtype=float), float(d), float(w)) for x, d, w in data["modulus"]]
        ext = [(float(e), float(T), float(d)) for e, T, d in data["extension"]]
        return cls(float(data["M"]), modulus, ext, int(data["sample_size"]))


def estimate_bound(fam: FunctionFamily) -> float:
    """Grid sup of ``||f(x)||`` over members and grid."""
    return float(np.max(np.linalg.norm(fam.values, axis=2)))


def estimate_modulus(fam: FunctionFamily, probe_points, delta_grid) -> list:
    """``omega(x, delta) = max_f max_{||x' - x|| <= delta} ||f(x') - f(x)||`` on the grid.

    ``f(x)`` at a probe point off the grid is the interpolated value.
    """
    delta_grid = np.asarray(delta_grid, dtype=float)
    if np.any(delta_grid <= 0) or np.any(np.diff(delta_grid) <= 0):
        raise ValueError("delta_grid must be positive and increasing")
    first = fam.members[0]
    n = first.domain.dimension
    probes = np.asarray(probe_points, dtype=float).reshape(-1, n)
    bad = ~first.domain.contains(probes)
    if np.any(bad):
        raise DomainError(f"probe point {probes[np.argmax(bad)].tolist()} outside the domain")
    grid, vals = fam.grid, fam.values
    table = []
    for x in probes:
        centre = np.stack([f(x[None, :])[0] for f in fam.members])  # (m, d)
        dist = np.linalg.norm(grid - x, axis=1)
        osc = np.linalg.norm(vals - centre[:, None, :], axis=2).max(axis=0)  # (N,)
        for delta in delta_grid:
            near = dist <= delta
            omega = float(osc[near].max()) if near.any() else 0.0
            table.append((x[0] if n == 1 else x, float(delta), omega))
    return table


def default_probes(fam: FunctionFamily) -> np.ndarray:
    """Grid points inside the first exhaustion ball plus 8 points on its boundary."""
    first = fam.members[0]
    dom = first.domain
    T1 = dom.exhaustion_radii[0]
    grid = fam.grid
    inner = grid[np.linalg.norm(grid, axis=1) <= T1]
    n = dom.dimension
    if n == 1:
        ring = np.array([[T1], [-T1]])
    else:
        th = 2 * np.pi * np.arange(8) / 8
        ring = np.zeros((8, n))
        ring[:, 0], ring[:, 1] = T1 * np.cos(th), T1 * np.sin(th)
    ring = ring[dom.contains(ring)]
    return np.unique(np.concatenate([inner, ring]), axis=0) if inner.size else ring


def _pair_distances(vals: np.ndarray, grid: np.ndarray, radii: Sequence[float]):
    """For all member pairs: sup of the distance over each ball and over the whole grid.

    Returns ``(inner, whole)`` with ``inner`` shaped (len(radii), P) and
    ``whole`` shaped (P,), P = m(m-1)/2.
    """
    m = vals.shape[0]
    iu, ju = np.triu_indices(m, k=1)
    norms = np.linalg.norm(grid, axis=1)
    whole = np.empty(iu.size)
    inner = np.zeros((len(radii), iu.size))
    chunk = max(1, 2_000_000 // max(vals.shape[1] * vals.shape[2], 1))
    masks = [norms <= r for r in radii]
    for s in range(0, iu.size, chunk):
        diff = np.linalg.norm(vals[iu[s:s + chunk]] - vals[ju[s:s + chunk]], axis=2)  # (p, N)
        whole[s:s + chunk] = diff.max(axis=1)
        for k, mask in enumerate(masks):
            if mask.any():
                inner[k, s:s + chunk] = diff[:, mask].max(axis=1)
    return inner, whole, iu, ju


def _violations(inner, whole, delta, eps):
    return np.nonzero((inner <= delta) & (whole > eps))[0]


@dataclass
class Witness:
    T: float
    delta: float
    source: str

    def __iter__(self):
        return iter((self.T, self.delta))


def find_extension_witness(fam: FunctionFamily, eps: float,
                           tail_hint: Optional[Callable[[float], float]] = None) -> Optional[Witness]:
    """A pair ``(T, delta)`` for which the extension implication holds on all member pairs.

    With ``tail_hint`` (the kernel's ray-Cauchy tail) ``T`` solves
    ``tail_hint(T) <= eps/4`` and ``delta = eps/4``; this choice is validated
    on all pairs.  Otherwise (or if validation fails) the exhaustion radii
    are searched in order for the largest of 64 log-spaced deltas in
    ``[eps/100, eps]`` admitting no violating pair.  Returns None when no
    radius admits one.
    """
    if len(fam) < 2:
        raise ValueError("the extension condition needs at least two members")
    if not eps > 0:
        raise ValueError("eps must be positive")
    vals, grid = fam.values, fam.grid
    if tail_hint is not None:
        try:
            T = find_truncation_radius(tail_hint, eps / 4)
        except NoConvergenceError:
            T = None
        if T is not None:
            inner, whole, _, _ = _pair_distances(vals, grid, [T])
            if _violations(inner[0], whole, eps / 4, eps).size == 0:
                return Witness(T, eps / 4, "kernel")
    radii = fam.members[0].domain.exhaustion_radii
    inner, whole, _, _ = _pair_distances(vals, grid, radii)
    deltas = np.geomspace(eps / 100, eps, DELTA_CANDIDATES)[::-1]
    for k, T in enumerate(radii):
        for delta in deltas:
            if _violations(inner[k], whole, delta, eps).size == 0:
                # soundness is the loop condition itself; re-asserted for clarity
                assert not np.any((inner[k] <= delta) & (whole > eps))
                return Witness(float(T), float(delta), "empirical")
    return None


def certify(fam: FunctionFamily, eps_list, probe_points=None, delta_grid=None,
            tail_hint=None, bound_hint: Optional[float] = None,
            modulus_hint: Optional[Callable] = None) -> AACertificate:
    """Build an :class:`AACertificate` for ``fam``.

    ``bound_hint`` and ``modulus_hint(x, delta)`` are operator-derived
    bounds valid for the whole image of the unit ball; when given they are
    folded in (max) so the certificate covers unseen members too.  Extension
    rows for which no witness exists are omitted.
    """
    M = estimate_bound(fam)
    if bound_hint is not None:
        M = max(M, float(bound_hint))
    if probe_points is None:
        probe_points = default_probes(fam)
    if delta_grid is None:
        h = np.min(np.diff(fam.members[0].axes[0])) if fam.members[0].axes[0].size > 1 else 1.0
        delta_grid = h * np.array([1.0, 2.0, 4.0, 8.0])
    table = estimate_modulus(fam, probe_points, delta_grid)
    if modulus_hint is not None:
        table = [(x, d, max(w, float(modulus_hint(x, d)))) for x, d, w in table]
    ext = []
    for eps in sorted(eps_list, reverse=True):
        w = find_extension_witness(fam, eps, tail_hint)
        if w is not None:
            ext.append((float(eps), float(w.T), float(w.delta)))
    return AACertificate(M, table, ext, len(fam))


@dataclass
class VerificationReport:
    passed: bool
    violations: list = field(default_factory=list)
    sample_size: int = 0

    def to_json(self) -> dict:
        return {"passed": self.passed, "violations": self.violations, "sample_size": self.sample_size}


def verify_certificate(holdout: FunctionFamily, cert: AACertificate, eps_list=None) -> VerificationReport:
    """Re-check a certificate against held-out members (same grid).

    The bound and the modulus table get 5% slack; every extension row with
    ``eps`` in ``eps_list`` (default: all rows) is checked on all holdout
    pairs.  Violations are listed, never raised.
    """
    violations = []
    bound = estimate_bound(holdout)
    if bound > cert.bound_M * (1 + SLACK):
        violations.append({"kind": "bound", "observed": bound, "certified": cert.bound_M})
    by_x = {}
    for x, d, w in cert.modulus:
        by_x.setdefault(tuple(np.atleast_1d(x).tolist()), []).append((d, w))
    for xkey, rows in by_x.items():
        deltas = [d for d, _ in rows]
        observed = estimate_modulus(holdout, np.array(xkey)[None, :], deltas)
        for (d, w), (_, _, wo) in zip(rows, observed):
            if wo > w * (1 + SLACK) + 1e-15:
                violations.append({"kind": "modulus", "x": list(xkey), "delta": d,
                                   "observed": wo, "certified": w})
    rows = cert.extension if eps_list is None else [r for r in cert.extension if r[0] in set(eps_list)]
    if rows and len(holdout) >= 2:
        vals, grid = holdout.values, holdout.grid
        inner, whole, iu, ju = _pair_distances(vals, grid, [r[1] for r in rows])
        for k, (eps, T, delta) in enumerate(rows):
            bad = _violations(inner[k], whole, delta, eps)
            for p in bad[:10]:
                violations.append({"kind": "extension", "eps": eps, "T": T, "delta": delta,
                                   "pair": [int(iu[p]), int(ju[p])],
                                   "inner": float(inner[k, p]), "whole": float(whole[p])})
    return VerificationReport(not violations, violations, len(holdout))


def translate_bump_family(domain, axes, centres, width: float = 1.0) -> FunctionFamily:
    """Hat functions of height 1 and half-width ``width`` centred at ``centres``.

    Equibounded and equicontinuous, yet no subsequence converges uniformly:
    the mass escapes to infinity.
    """
    fams = []
    for c in centres:
        fams.append(SampledFunction.from_callable(
            domain, axes,
            lambda p, c=c: np.clip(1.0 - np.abs(p[:, 0] - c) / width, 0.0, None)[:, None]))
    return FunctionFamily(fams, "translates of a fixed bump")
