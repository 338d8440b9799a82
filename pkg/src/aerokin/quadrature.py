"""Quadrature rules shared across the package.

All velocity-space rules integrate against the standard Maxwellian
``M(w) = (2 pi)^{-3/2} exp(-|w|^2 / 2)`` unless stated otherwise.  Sphere
rules carry weights that sum to ``4 pi``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.integrate import lebedev_rule

# degrees available from scipy's Lebedev tables, keyed by node count
_LEBEDEV_DEGREE_BY_POINTS = {
    6: 3, 14: 5, 26: 7, 38: 9, 50: 11, 74: 13, 86: 15, 110: 17, 146: 19,
    170: 21, 194: 23, 230: 25, 266: 27, 302: 29, 350: 31, 434: 35, 590: 41,
    770: 47, 974: 53, 1202: 59, 1454: 65, 1730: 71, 2030: 77, 2354: 83,
    2702: 89, 3074: 95, 3470: 101, 3890: 107, 4334: 113, 4802: 119,
    5294: 125, 5810: 131,
}


@dataclass(frozen=True)
class SphereRule:
    """Nodes on the unit sphere with weights summing to 4 pi."""

    nodes: np.ndarray
    weights: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise ValueError("sphere nodes must have shape (m, 3)")
        if len(self.nodes) < 6:
            raise ValueError(f"degenerate sphere rule: {len(self.nodes)} nodes (need >= 6)")
        if self.weights.shape != (len(self.nodes),):
            raise ValueError("sphere weights do not match nodes")

    def __len__(self):
        return len(self.weights)

    @classmethod
    def lebedev(cls, n_points: int = 26) -> "SphereRule":
        try:
            degree = _LEBEDEV_DEGREE_BY_POINTS[n_points]
        except KeyError:
            raise ValueError(
                f"no Lebedev rule with {n_points} points; choose from "
                f"{sorted(_LEBEDEV_DEGREE_BY_POINTS)}"
            ) from None
        x, w = lebedev_rule(degree)
        return cls(np.ascontiguousarray(x.T), np.asarray(w), name=f"lebedev{n_points}")

    @classmethod
    def product(cls, n_mu: int, n_phi: int | None = None) -> "SphereRule":
        """Gauss-Legendre in cos(theta) times the trapezoid rule in phi.

        Exact for spherical polynomials of degree ``min(2 n_mu - 1, n_phi - 1)``.
        """
        n_phi = 2 * n_mu if n_phi is None else n_phi
        mu, wmu = leggauss(n_mu)
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        s = np.sqrt(1.0 - mu**2)
        nodes = np.stack(
            [
                np.outer(s, np.cos(phi)).ravel(),
                np.outer(s, np.sin(phi)).ravel(),
                np.repeat(mu, n_phi),
            ],
            axis=1,
        )
        weights = np.repeat(wmu, n_phi) * (2.0 * np.pi / n_phi)
        return cls(nodes, weights, name=f"product{n_mu}x{n_phi}")

    @classmethod
    def for_degree(cls, degree: int) -> "SphereRule":
        """Smallest product rule integrating spherical polynomials of ``degree`` exactly."""
        n_mu = degree // 2 + 1
        return cls.product(n_mu, degree + 1)


def positive_part_sphere_integral(a, b):
    """Closed form of ``int_{S^2} (n.a)_+ (n.b)_+ dn``.

    Equal to ``(2/3) |a| |b| (sin t + (pi - t) cos t)`` with ``t`` the angle
    between ``a`` and ``b``.  Broadcasts over leading axes.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(denom > 0, np.sum(a * b, axis=-1) / np.where(denom > 0, denom, 1.0), 1.0)
    c = np.clip(c, -1.0, 1.0)
    t = np.arccos(c)
    return (2.0 / 3.0) * denom * (np.sqrt(1.0 - c * c) + (np.pi - t) * c)


@lru_cache(maxsize=32)
def hermite_rule_1d(n: int):
    """Nodes/weights for ``int f(x) exp(-x^2/2) dx / sqrt(2 pi)``."""
    x, w = hermegauss(n)
    return x, w / np.sqrt(2.0 * np.pi)


@lru_cache(maxsize=16)
def maxwellian_rule(n: int):
    """Tensor Gauss-Hermite rule for ``int f(w) M(w) dw`` in three dimensions.

    Exact for polynomials of degree ``2n - 1`` in each coordinate.
    """
    x, w = hermite_rule_1d(n)
    gx, gy, gz = np.meshgrid(x, x, x, indexing="ij")
    wx, wy, wz = np.meshgrid(w, w, w, indexing="ij")
    nodes = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return nodes, (wx * wy * wz).ravel()


@lru_cache(maxsize=16)
def radial_rule(n: int = 64, r_max: float = 12.0):
    """Gauss-Legendre nodes on ``[0, r_max]`` for radial integrals.

    A truncated interval handles radial integrands that are not polynomial in
    ``r^2`` (e.g. ``Q(r) = r``) at spectral accuracy; at ``r_max = 12`` the
    Gaussian tail is below 1e-30.
    """
    x, w = leggauss(n)
    return 0.5 * r_max * (x + 1.0), 0.5 * r_max * w


def maxwellian(w):
    w = np.asarray(w, dtype=float)
    return np.exp(-0.5 * np.sum(w * w, axis=-1)) / (2.0 * np.pi) ** 1.5


def radial_maxwell_integral(f, n: int = 64, r_max: float = 12.0):
    """``int f(|w|) M(w) dw`` for a radial function ``f`` (vectorised in r)."""
    r, wr = radial_rule(n, r_max)
    dens = 4.0 * np.pi * r**2 * np.exp(-0.5 * r**2) / (2.0 * np.pi) ** 1.5
    return float(np.sum(wr * dens * f(r)))


def rotation_frame(z):
    """Orthonormal frames whose third axis is ``z/|z|`` (shape ``(..., 3, 3)``).

    Rows are the basis vectors ``(e1, e2, zhat)``.  Zero vectors get the
    identity frame.
    """
    z = np.asarray(z, dtype=float)
    nz = np.linalg.norm(z, axis=-1, keepdims=True)
    zhat = np.where(nz > 0, z / np.where(nz > 0, nz, 1.0), np.array([0.0, 0.0, 1.0]))
    helper = np.where(
        np.abs(zhat[..., :1]) < 0.9, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    )
    e1 = np.cross(zhat, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(zhat, e1)
    return np.stack([e1, e2, zhat], axis=-2)
