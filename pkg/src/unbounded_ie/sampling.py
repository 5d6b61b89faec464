"""Seeded random inputs from the unit ball of bounded functions.

Profiles are ``f(y) = sum_{j=1..8} a_j cos(j s(y)) exp(-||y||/2)`` with
``s(y) = y_1 + ... + y_n``.  Coefficients are drawn from a PCG64 generator and
scaled so that ``sum |a_j| <= 1``, which bounds the sup-norm by 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GENERATOR = "numpy.random.PCG64"
N_MODES = 8


@dataclass(frozen=True, eq=False)
class TrigDecayProfile:
    coefficients: np.ndarray  # (N_MODES, d)
    radius: float = 1.0

    def __call__(self, ys) -> np.ndarray:
        ys = np.asarray(ys, dtype=float)
        if ys.ndim == 1:
            ys = ys[:, None]
        s = ys.sum(axis=1)
        j = np.arange(1, self.coefficients.shape[0] + 1)
        waves = np.cos(np.outer(s, j)) * np.exp(-0.5 * np.linalg.norm(ys, axis=1))[:, None]
        return waves @ self.coefficients

    @property
    def d(self) -> int:
        return self.coefficients.shape[1]


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def unit_ball_profiles(count: int, seed: int, d: int = 1, radius: float = 1.0):
    """``count`` profiles with sup-norm at most ``radius``, deterministic in ``seed``."""
    gen = rng(seed)
    out = []
    for _ in range(count):
        a = gen.uniform(-1.0, 1.0, size=(N_MODES, d))
        scale = gen.uniform(0.5, 1.0) * radius / np.abs(a).sum(axis=0).max()
        out.append(TrigDecayProfile(a * scale, radius))
    return out
