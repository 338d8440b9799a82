"""Prescribed gas and dispersed-phase states in velocity space."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError
from .quadrature import maxwellian_rule


@dataclass(frozen=True)
class HermitePerturbation:
    """Gas fluctuation ``g(w) = rho + u.w + theta (|w|^2 - 3)/2 + residual(w)``."""

    rho: float = 0.0
    u: tuple = (0.0, 0.0, 0.0)
    theta: float = 0.0
    residual: Callable | None = None

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(float(x) for x in self.u))
        if len(self.u) != 3:
            raise ContractError("u must have three components")

    @property
    def u_vec(self):
        return np.array(self.u)

    @property
    def hydrodynamic(self) -> bool:
        return self.residual is None

    def __call__(self, w):
        w = np.asarray(w, float)
        sq = np.sum(w * w, axis=-1)
        g = self.rho + w @ self.u_vec + 0.5 * self.theta * (sq - 3.0)
        if self.residual is not None:
            g = g + self.residual(w)
        return g


@dataclass(frozen=True)
class VelocityCloud:
    """Dispersed-phase profile ``F`` as weighted velocity nodes."""

    velocities: np.ndarray
    weights: np.ndarray
    name: str = "cloud"
    truncation: float = 10.0

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.velocities, float))
        w = np.asarray(self.weights, float).reshape(-1)
        if v.shape != (len(w), 3):
            raise ContractError("velocities must have shape (n, 3) matching weights")
        if np.any(w < 0) or not np.all(np.isfinite(v)):
            raise ContractError("cloud weights must be nonnegative and velocities finite")
        keep = np.linalg.norm(v, axis=1) <= self.truncation
        object.__setattr__(self, "velocities", v[keep])
        object.__setattr__(self, "weights", w[keep])

    @classmethod
    def point(cls, v0, weight=1.0):
        return cls(np.asarray(v0, float)[None, :], np.array([weight]), name="point")

    @classmethod
    def gaussian(cls, v0=(0.0, 0.0, 0.0), s=1.0, n_nodes=6, mass=1.0):
        """Gauss-Hermite nodes for ``mass * N(v0, s^2 I)``; exact for
        polynomial moments up to degree ``2 n_nodes - 1`` per axis."""
        x, w = maxwellian_rule(n_nodes)
        return cls(np.asarray(v0, float) + s * x, mass * w, name="gaussian")

    @property
    def mass(self):
        return float(self.weights.sum())

    def mean(self, f):
        """``int f(v) F(v) dv`` for ``f`` acting on ``(n, 3)`` arrays."""
        return np.tensordot(self.weights, f(self.velocities), axes=(0, 0))

    def momentum(self):
        return self.weights @ self.velocities


@dataclass(frozen=True)
class PrescribedState:
    F: VelocityCloud
    g: HermitePerturbation = field(default_factory=HermitePerturbation)
    phi: str = "v1"
