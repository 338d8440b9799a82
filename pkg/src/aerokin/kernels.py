"""Collision maps, kernel densities and scattering samplers.

Conventions: particle velocities ``v`` are in units of the particle thermal
speed, gas velocities ``w`` in units of the gas thermal speed, so the
particle-gas relative velocity is ``z = eps*V - W``.  For the particle-gas
measures ``Pi_pg(v, dV dW)`` and ``Pi_gp(w, dV dW)``, ``(V, W)`` is the
incoming pair and ``v`` (resp. ``w``) the outgoing particle (resp. gas)
velocity.

Every particle-gas kernel exposes the same vectorised moment interface::

    q, m1, m2 = kernel.gp_moments(V, W, p)

with ``q = int Pi_gp(w, .) dw`` (the collision rate), ``m1 = int (w - W) Pi_gp dw``
and ``m2 = int (w - W)(w - W)^T Pi_gp dw``; ``pg_moments`` is the same for the
particle increment ``v - V``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RegularGridInterpolator

from .errors import ContractError, SamplingError
from .quadrature import SphereRule, positive_part_sphere_integral

UNIT_TOL = 1e-12
SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class ScalingParams:
    """Dimensionless thermal-speed ratio, mass ratio and surface parameter.

    ``ScalingParams.limit(beta)`` builds the ``eps = eta = 0`` point used for
    the limiting kernels; regular instances require strictly positive values.
    """

    epsilon: float
    eta: float
    beta: float = 1.0
    is_limit: bool = False

    def __post_init__(self):
        if self.beta <= 0:
            raise ContractError(f"beta must be > 0, got {self.beta}")
        if self.is_limit:
            if self.epsilon != 0 or self.eta != 0:
                raise ContractError("limit parameters must have epsilon = eta = 0")
            return
        if not (0 < self.epsilon <= 1):
            raise ContractError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not (0 < self.eta <= 1):
            raise ContractError(f"eta must lie in (0, 1], got {self.eta}")

    @classmethod
    def limit(cls, beta: float = 1.0) -> "ScalingParams":
        return cls(0.0, 0.0, beta, is_limit=True)


def _vec(x, name="vector"):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (3,):
        raise ContractError(f"{name} must have trailing dimension 3, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractError(f"{name} has non-finite components")
    return x


def _unit(omega, name="omega"):
    omega = _vec(omega, name)
    if np.any(np.abs(np.linalg.norm(omega, axis=-1) - 1.0) > UNIT_TOL):
        raise ContractError(f"{name} is not a unit vector")
    return omega


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def _unit_or_pole(z):
    r = np.linalg.norm(z, axis=-1, keepdims=True)
    return np.where(r > 0, z / np.where(r > 0, r, 1.0), np.array([0.0, 0.0, 1.0])), r[..., 0]


# --------------------------------------------------------------------------
# collision maps


def molecular_post_collision(w, w_star, omega):
    """Post-collision velocities of two gas molecules for impact direction ``omega``."""
    w, w_star, omega = _vec(w, "w"), _vec(w_star, "w_star"), _unit(omega)
    d = _dot(w - w_star, omega) * omega
    return w - d, w_star + d


def elastic_post_collision(v, w, omega, p: ScalingParams):
    """Elastic particle-gas collision map; a linear involution for fixed ``omega``."""
    v, w, omega = _vec(v, "v"), _vec(w, "w"), _unit(omega)
    if p.is_limit:
        raise ContractError("the particle velocity map is undefined at epsilon = 0")
    eps, eta = p.epsilon, p.eta
    v2 = v - (2.0 * eta / (1.0 + eta)) * _dot(v - w / eps, omega) * omega
    w2 = w - (2.0 / (1.0 + eta)) * _dot(w - eps * v, omega) * omega
    return v2, w2


# --------------------------------------------------------------------------
# inelastic (diffuse reflection) kernel densities


def eval_P(lam, xi, n):
    """Half-space Maxwellian flux density ``(1/2pi) lam^4 exp(-lam^2 |xi|^2/2) (xi.n)_+``.

    A probability density in ``xi`` for each unit ``n``.
    """
    if np.any(np.asarray(lam) <= 0):
        raise ContractError("lambda must be > 0")
    xi = _vec(xi, "xi")
    n = _vec(n, "n")
    flux = np.maximum(np.sum(xi * n, axis=-1), 0.0)
    return lam**4 * np.exp(-0.5 * lam**2 * np.sum(xi * xi, axis=-1)) * flux / (2.0 * np.pi)


def _sphere_pp(a, b, sphere_rule):
    if isinstance(sphere_rule, str):
        if sphere_rule != "exact":
            raise ContractError(f"unknown sphere rule {sphere_rule!r}")
        return positive_part_sphere_integral(a, b)
    n, wts = sphere_rule.nodes, sphere_rule.weights
    pa = np.maximum(a @ n.T, 0.0)
    pb = np.maximum(b @ n.T, 0.0)
    return (pa * pb) @ wts


def _centre(V, W, p):
    return (p.epsilon * V + p.eta * W) / (1.0 + p.eta)


def eval_K_pg(v, V, W, p: ScalingParams, sphere_rule="exact"):
    """Density of the outgoing particle velocity ``v`` for incoming ``(V, W)``.

    ``sphere_rule`` is ``"exact"`` (closed-form sphere integral of the two
    positive parts) or a :class:`SphereRule`.
    """
    if p.is_limit:
        raise ContractError("K_pg is singular at eta = 0")
    v, V, W = _vec(v, "v"), _vec(V, "V"), _vec(W, "W")
    eps, eta, beta = p.epsilon, p.eta, p.beta
    U = _centre(V, W, p)
    lam = beta * (1.0 + eta) / eta
    a = U - eps * v
    gauss = np.exp(-0.5 * lam**2 * np.sum(a * a, axis=-1))
    pref = lam**4 * eps**3 / (2.0 * np.pi**2)
    return pref * gauss * _sphere_pp(eps * V - W, a, sphere_rule)


def eval_K_gp(w, V, W, p: ScalingParams, sphere_rule="exact"):
    """Density of the outgoing gas velocity ``w`` for incoming ``(V, W)``."""
    w, V, W = _vec(w, "w"), _vec(V, "V"), _vec(W, "W")
    eta, beta = p.eta, p.beta
    U = _centre(V, W, p)
    lam = beta * (1.0 + eta)
    a = w - U
    gauss = np.exp(-0.5 * lam**2 * np.sum(a * a, axis=-1))
    pref = lam**4 / (2.0 * np.pi**2)
    return pref * gauss * _sphere_pp(p.epsilon * V - W, a, sphere_rule)


def eval_K00(w, W, beta=1.0, sphere_rule="exact"):
    """The ``eps = eta = 0`` limit of ``K_gp``; independent of ``V``."""
    w, W = _vec(w, "w"), _vec(W, "W")
    pref = beta**4 / (2.0 * np.pi**2)
    return pref * np.exp(-0.5 * beta**2 * np.sum(w * w, axis=-1)) * _sphere_pp(-W, w, sphere_rule)


def _flux_moments(lam, zhat):
    """Mean and second moment of ``xi`` when ``n`` has density ``(n.zhat)_+/pi``
    and ``xi ~ P[lam](., n)``."""
    lam = np.asarray(lam, dtype=float)[..., None]
    mean = (SQRT_2PI / 3.0) * zhat / lam
    eye = np.eye(3)
    second = (1.25 * eye + 0.25 * zhat[..., :, None] * zhat[..., None, :]) / lam[..., None] ** 2
    return mean, second


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


# --------------------------------------------------------------------------
# kernel models


@dataclass(frozen=True)
class MolecularKernel:
    """Gas-gas collision kernel ``c(z, omega)`` with Grad cutoff constants."""

    evaluator: Callable
    c_star: float
    gamma: float
    name: str = "custom"
    maxwell: bool = False
    scale: float = 1.0

    def __call__(self, z, omega):
        return self.scale * self.evaluator(np.asarray(z, float), np.asarray(omega, float))

    def scaled(self, factor: float) -> "MolecularKernel":
        return MolecularKernel(
            self.evaluator, self.c_star * max(factor, 1.0), self.gamma,
            f"{self.name}*{factor:g}", self.maxwell, self.scale * factor,
        )

    @classmethod
    def maxwell_molecules(cls, C0: float = 1.0) -> "MolecularKernel":
        def c(z, omega):
            return np.full(np.broadcast_shapes(z.shape[:-1], omega.shape[:-1]), 1.0)

        return cls(c, c_star=max(1.01, 1.01 * C0, 1.01 / (4 * np.pi * C0)), gamma=0.0,
                   name="maxwell", maxwell=True, scale=C0)

    @classmethod
    def hard_sphere(cls, C0: float = 1.0) -> "MolecularKernel":
        def c(z, omega):
            return np.abs(np.sum(z * omega, axis=-1))

        return cls(c, c_star=max(1.01, 1.01 * C0, 1.01 / (2 * np.pi * C0)), gamma=1.0,
                   name="hard_sphere", scale=C0)


MOLECULAR_PRESETS = {
    "maxwell": MolecularKernel.maxwell_molecules,
    "hard_sphere": MolecularKernel.hard_sphere,
}


def molecular_kernel(name: str, C0: float = 1.0) -> MolecularKernel:
    try:
        return MOLECULAR_PRESETS[name](C0)
    except KeyError:
        raise ContractError(f"unknown molecular kernel {name!r}; choose from {sorted(MOLECULAR_PRESETS)}") from None


@dataclass(frozen=True)
class ElasticPGKernel:
    """Elastic particle-gas kernel ``b(z, omega) = |z| sigma_pg(|z|, |cos|)``."""

    sigma: Callable
    b_star: float
    beta_star: float
    name: str = "custom"
    sigma_max: Callable | None = None
    n_mu: int = 48
    _r_independent: bool = field(default=False, repr=False)

    kind = "elastic"

    def b(self, z, omega):
        z = np.asarray(z, float)
        omega = np.asarray(omega, float)
        r = np.linalg.norm(z, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            mu = np.abs(np.sum(z * omega, axis=-1)) / np.where(r > 0, r, 1.0)
        return r * self.sigma(r, np.clip(mu, 0.0, 1.0))

    def _angular(self, r):
        """``int_0^1 sigma(r, mu) mu^k dmu`` for ``k = 0, 2, 4``."""
        r = np.asarray(r, float)
        x, w = leggauss(self.n_mu)
        mu = 0.5 * (x + 1.0)
        w = 0.5 * w
        if self._r_independent:
            s = self.sigma(np.zeros(1), mu[None, :])[0]
            vals = [np.full(r.shape, np.sum(w * s * mu**k)) for k in (0, 2, 4)]
            return tuple(vals)
        s = self.sigma(r[..., None], mu)
        return tuple(np.sum(w * s * mu**k, axis=-1) for k in (0, 2, 4))

    def q(self, r):
        s0, _, _ = self._angular(r)
        return 4.0 * np.pi * np.asarray(r, float) * s0

    def Q(self, r):
        _, s2, _ = self._angular(r)
        return 8.0 * np.pi * np.asarray(r, float) * s2

    def dQ(self, r, h=1e-5):
        r = np.asarray(r, float)
        if self._r_independent:
            return self.Q(np.ones_like(r))
        return (self.Q(r + h) - self.Q(np.maximum(r - h, 0.0))) / (r + h - np.maximum(r - h, 0.0))

    def h3_constant(self, p=None):
        return 1.0

    def _moments(self, z, scale):
        zhat, r = _unit_or_pole(z)
        _, s2, s4 = self._angular(r)
        m1 = scale[..., None] * (4.0 * np.pi * r * s2)[..., None] * z
        a = 4.0 * np.pi * s4
        c = 2.0 * np.pi * (s2 - s4)
        P = _outer(zhat, zhat)
        m2 = (scale**2 * r**3)[..., None, None] * (a[..., None, None] * P + c[..., None, None] * (np.eye(3) - P))
        return self.q(r), m1, m2

    def gp_moments(self, V, W, p: ScalingParams):
        V, W = np.asarray(V, float), np.asarray(W, float)
        z = p.epsilon * V - W
        return self._moments(z, np.full(z.shape[:-1], 2.0 / (1.0 + p.eta)))

    def pg_moments(self, V, W, p: ScalingParams):
        if p.is_limit:
            raise ContractError("particle moments are singular at epsilon = 0")
        V, W = np.asarray(V, float), np.asarray(W, float)
        z = p.epsilon * V - W
        return self._moments(z, np.full(z.shape[:-1], -2.0 * p.eta / (p.epsilon * (1.0 + p.eta))))

    def omega_envelope(self, r):
        if self.sigma_max is not None:
            return r * self.sigma_max(r)
        mu = np.linspace(0.0, 1.0, 65)
        return 1.05 * r * np.max(self.sigma(np.asarray(r, float)[..., None], mu), axis=-1)

    def sample_omega(self, z, rng, max_rounds=10_000):
        """Draw ``omega`` from the density proportional to ``b(z, .)`` by rejection."""
        z = np.atleast_2d(z)
        r = np.linalg.norm(z, axis=-1)
        env = self.omega_envelope(r)
        out = np.empty_like(z)
        pending = np.arange(len(z))
        for _ in range(max_rounds):
            if pending.size == 0:
                return out
            om = rng.standard_normal((pending.size, 3))
            om /= np.linalg.norm(om, axis=-1, keepdims=True)
            bz = self.b(z[pending], om)
            ok = (rng.random(pending.size) * env[pending] <= bz) | (env[pending] <= 0)
            out[pending[ok]] = om[ok]
            pending = pending[~ok]
        raise SamplingError(f"omega rejection loop exceeded {max_rounds} rounds with {pending.size} pending")

    @classmethod
    def hard_sphere_pg(cls) -> "ElasticPGKernel":
        def sigma(r, mu):
            return np.full(np.broadcast_shapes(np.shape(r), np.shape(mu)), 1.0 / (4.0 * np.pi))

        return cls(sigma, b_star=1.01, beta_star=1.0, name="hard_sphere_pg",
                   sigma_max=lambda r: np.full(np.shape(r), 1.0 / (4.0 * np.pi)),
                   _r_independent=True)

    @classmethod
    def from_csv(cls, path, b_star=None, beta_star=1.0) -> "ElasticPGKernel":
        """Tabulated ``sigma_pg(r, mu)`` from a CSV with header ``r,mu,sigma``."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["r", "mu", "sigma"]:
                raise ContractError(f"{path}: expected header 'r,mu,sigma'")
            rows = [(float(d["r"]), float(d["mu"]), float(d["sigma"])) for d in reader]
        arr = np.array(rows)
        rs, mus = np.unique(arr[:, 0]), np.unique(arr[:, 1])
        if len(rs) * len(mus) != len(arr):
            raise ContractError(f"{path}: (r, mu) points do not form a full grid")
        table = np.full((len(rs), len(mus)), np.nan)
        table[np.searchsorted(rs, arr[:, 0]), np.searchsorted(mus, arr[:, 1])] = arr[:, 2]
        if np.any(table < 0):
            raise ContractError(f"{path}: negative cross-section values")
        interp = RegularGridInterpolator((rs, mus), table)

        def sigma(r, mu):
            r, mu = np.broadcast_arrays(np.clip(r, rs[0], rs[-1]), np.clip(mu, mus[0], mus[-1]))
            return interp(np.stack([r, mu], axis=-1))

        if b_star is None:
            # smallest admissible constant for the tabulated range
            rr = np.linspace(rs[0], rs[-1], 64)
            b_star = max(1.01, 1.01 * float(np.max(rr * table.max() / (1.0 + rr) ** beta_star)))
        return cls(sigma, b_star=b_star, beta_star=beta_star, name=f"csv:{path}")


@dataclass(frozen=True)
class InelasticPGKernel:
    """Diffuse-reflection particle-gas kernel with surface parameter ``beta``."""

    beta: float = 1.0
    name: str = "charles_inelastic"

    kind = "inelastic"

    def __post_init__(self):
        if self.beta <= 0:
            raise ContractError(f"beta must be > 0, got {self.beta}")

    def q(self, r):
        return np.asarray(r, float) * 1.0

    def Q(self, r):
        return SQRT_2PI / (3.0 * self.beta) + np.asarray(r, float)

    def dQ(self, r):
        return np.ones_like(np.asarray(r, float))

    def h3_constant(self, p=None):
        return 16.0 / self.beta**2

    def gp_moments(self, V, W, p: ScalingParams):
        V, W = np.asarray(V, float), np.asarray(W, float)
        z = p.epsilon * V - W
        zhat, r = _unit_or_pole(z)
        lam = np.full(r.shape, self.beta * (1.0 + p.eta))
        e1, e2 = _flux_moments(lam, zhat)
        c = z / (1.0 + p.eta)
        q = r
        m1 = q[..., None] * (c + e1)
        m2 = q[..., None, None] * (_outer(c, c) + _outer(c, e1) + _outer(e1, c) + e2)
        return q, m1, m2

    def pg_moments(self, V, W, p: ScalingParams):
        if p.is_limit:
            raise ContractError("particle moments are singular at eta = 0")
        V, W = np.asarray(V, float), np.asarray(W, float)
        eps, eta = p.epsilon, p.eta
        z = eps * V - W
        zhat, r = _unit_or_pole(z)
        # eps*v = U - xi_p with xi_p ~ P[beta (1+eta)/eta]
        lam = np.full(r.shape, self.beta * (1.0 + eta) / eta)
        e1, e2 = _flux_moments(lam, zhat)
        c = -(eta / (1.0 + eta)) * z / eps
        e1 = -e1 / eps
        e2 = e2 / eps**2
        q = r
        m1 = q[..., None] * (c + e1)
        m2 = q[..., None, None] * (_outer(c, c) + _outer(c, e1) + _outer(e1, c) + e2)
        return q, m1, m2


PG_PRESETS = {
    "hard_sphere_pg": lambda beta=1.0: ElasticPGKernel.hard_sphere_pg(),
    "charles_inelastic": lambda beta=1.0: InelasticPGKernel(beta),
}


def pg_kernel(name: str, beta: float = 1.0):
    if name.startswith("csv:"):
        return ElasticPGKernel.from_csv(name[4:])
    try:
        return PG_PRESETS[name](beta)
    except KeyError:
        raise ContractError(f"unknown particle-gas kernel {name!r}; choose from {sorted(PG_PRESETS)}") from None


# --------------------------------------------------------------------------
# sampling


def _cosine_hemisphere(zhat, rng):
    """Unit vectors with density ``(n.zhat)_+ / pi``."""
    from .quadrature import rotation_frame

    u1, u2 = rng.random(len(zhat)), rng.random(len(zhat))
    mu = np.sqrt(u1)
    s = np.sqrt(1.0 - mu**2)
    phi = 2.0 * np.pi * u2
    local = np.stack([s * np.cos(phi), s * np.sin(phi), mu], axis=-1)
    return np.einsum("ni,nij->nj", local, rotation_frame(zhat))


def sample_flux(n, lam, rng):
    """Draw ``xi ~ P[lam](., n)`` for each row of ``n``."""
    from .quadrature import rotation_frame

    m = len(n)
    tang = rng.standard_normal((m, 2)) / lam
    normal = np.sqrt(-2.0 * np.log1p(-rng.random(m))) / lam
    local = np.column_stack([tang, normal])
    return np.einsum("ni,nij->nj", local, rotation_frame(n))


def sample_pg_scattering(kernel, v, w, p: ScalingParams, rng):
    """Draw post-collision pairs ``(v'', w'')`` for incoming pairs ``(v, w)``.

    The incoming pairs collide at rate ``q(|eps v - w|)``; this returns the
    outgoing velocities conditional on a collision.  Elastic kernels draw
    ``omega`` with density proportional to ``b`` and apply the elastic map.
    The inelastic kernel draws a surface normal ``n`` with density
    proportional to ``(n.(eps v - w))_+``, re-emits the molecule from the
    half-space flux ``w'' = U + xi`` with ``xi ~ P[beta (1+eta)](., n)``, and
    gives the particle the recoil ``eps v'' = U - eta xi`` (``U`` the mixed
    centre of mass); this reproduces both marginal kernels and conserves
    ``eps v + eta w`` sample by sample.
    """
    v = np.atleast_2d(_vec(v, "v"))
    w = np.atleast_2d(_vec(w, "w"))
    v, w = np.broadcast_arrays(v, w)
    z = p.epsilon * v - w
    if kernel.kind == "elastic":
        omega = kernel.sample_omega(z, rng)
        return elastic_post_collision(v, w, omega, p)
    if kernel.kind != "inelastic":
        raise ContractError(f"unsupported kernel kind {kernel.kind!r}")
    if p.is_limit:
        raise ContractError("sampling needs epsilon, eta > 0")
    zhat, r = _unit_or_pole(z)
    n = _cosine_hemisphere(zhat, rng)
    xi = sample_flux(n, kernel.beta * (1.0 + p.eta), rng)
    U = _centre(v, w, p)
    w2 = U + xi
    v2 = (U - p.eta * xi) / p.epsilon
    idle = r == 0
    w2[idle] = w[idle]
    v2[idle] = v[idle]
    return v2, w2
