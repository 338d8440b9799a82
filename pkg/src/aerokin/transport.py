"""Linearized molecular collision operator and the transport coefficients.

The operator acts on functions of ``w`` in ``L^2(M dw)``::

    L phi(w) = int int M(w*) (phi + phi* - phi' - phi*') c(w - w*, omega) domega dw*

and is evaluated pointwise by tensor Gauss-Hermite quadrature in ``w*`` and a
product sphere rule in ``omega``.  For Maxwell molecules (constant ``c``) the
image of a polynomial of degree ``d`` is a polynomial of degree ``d``, so the
rules below are exact for polynomial test functions.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import cg
from scipy.special import eval_genlaguerre, gammaln, roots_genlaguerre

from .errors import ContractError, ConvergenceError, InconsistencyError
from .kernels import MolecularKernel, molecular_kernel
from .quadrature import SphereRule, maxwellian_rule, radial_rule
from .states import HermitePerturbation

SQRT_2PI = math.sqrt(2.0 * math.pi)


def tensor_A(w):
    """Traceless part ``w w^T - |w|^2 I / 3`` with shape ``(..., 3, 3)``."""
    w = np.asarray(w, float)
    sq = np.sum(w * w, axis=-1)
    return w[..., :, None] * w[..., None, :] - (sq / 3.0)[..., None, None] * np.eye(3)


def A_of_u(u):
    u = np.asarray(u, float)
    return np.outer(u, u) - (u @ u) / 3.0 * np.eye(3)


# --------------------------------------------------------------------------
# pointwise operator


def apply_L_pointwise(phi, w, kernel: MolecularKernel, n_star: int, sphere: SphereRule, chunk: int = 8):
    """``L phi`` at the points ``w`` (shape ``(n, 3)``).

    ``phi`` maps ``(..., 3)`` arrays to ``(..., k)`` arrays (or ``(...)``).
    Returns shape ``(n, k)`` (or ``(n,)``).
    """
    w = np.atleast_2d(np.asarray(w, float))
    ws, Ws = maxwellian_rule(n_star)
    om, Wo = sphere.nodes, sphere.weights
    phi_w = np.asarray(phi(w))
    scalar = phi_w.ndim == 1
    if scalar:
        f = phi

        def phi(x):
            return np.asarray(f(x))[..., None]

        phi_w = phi_w[:, None]
    phi_s = np.asarray(phi(ws))
    out = np.empty((len(w), phi_w.shape[1]))
    for i0 in range(0, len(w), chunk):
        wb = w[i0:i0 + chunk]
        z = wb[:, None, :] - ws[None, :, :]
        d = np.einsum("bsk,mk->bsm", z, om)
        dom = d[..., None] * om[None, None, :, :]
        wp = wb[:, None, None, :] - dom
        wsp = ws[None, :, None, :] + dom
        cval = kernel(z[:, :, None, :], om[None, None, :, :])
        wt = Ws[None, :, None] * Wo[None, None, :] * cval
        loss = wt.sum(axis=(1, 2))[:, None] * phi_w[i0:i0 + chunk] + np.einsum("bsm,sk->bk", wt, phi_s)
        gain = np.einsum("bsm,bsmk->bk", wt, phi(wp) + phi(wsp))
        out[i0:i0 + chunk] = loss - gain
    return out[:, 0] if scalar else out


# --------------------------------------------------------------------------
# Hermite basis


def hermite_indices(degree: int):
    """Multi-indices ``(a, b, c)`` with ``a + b + c <= degree``, graded order."""
    return np.array(
        [t for n in range(degree + 1) for t in itertools.product(range(n + 1), repeat=3) if sum(t) == n],
        dtype=int,
    )


def hermite_basis(w, indices):
    """Orthonormal tensor Hermite functions ``prod He_a(w_i)/sqrt(a!)`` at ``w``."""
    w = np.asarray(w, float)
    deg = int(indices.max()) if len(indices) else 0
    T = np.empty((deg + 1,) + w.shape)
    T[0] = 1.0
    if deg >= 1:
        T[1] = w
    for n in range(1, deg):
        T[n + 1] = w * T[n] - n * T[n - 1]
    norms = np.sqrt([math.factorial(n) for n in range(deg + 1)])
    T /= norms.reshape((-1,) + (1,) * w.ndim)
    prod = T[indices[:, 0], ..., 0] * T[indices[:, 1], ..., 1] * T[indices[:, 2], ..., 2]
    return np.moveaxis(prod, 0, -1)


@dataclass
class LinearizedOperator:
    """Quadrature representation of ``L`` with a tensor Hermite Galerkin basis.

    ``degree`` is the total degree of the basis.  The ``w*`` rule, sphere
    rule and ``w`` rule default to the smallest sizes that are exact for the
    Maxwell preset at that degree.
    """

    kernel: MolecularKernel = field(default_factory=lambda: molecular_kernel("maxwell"))
    degree: int = 6
    n_star: int | None = None
    sphere: SphereRule | None = None
    n_w: int | None = None

    def __post_init__(self):
        if self.degree < 2:
            raise ContractError("basis degree must be >= 2 to contain the collision invariants")
        self.n_star = self.n_star or self.degree // 2 + 1
        self.sphere = self.sphere or SphereRule.for_degree(2 * self.degree)
        self.n_w = self.n_w or self.degree + 1
        self.indices = hermite_indices(self.degree)

    def __call__(self, phi, w):
        return apply_L_pointwise(phi, w, self.kernel, self.n_star, self.sphere)

    @property
    def nodes(self):
        return maxwellian_rule(self.n_w)

    def norm(self, values):
        """``L^2(M)`` norm of values tabulated on :attr:`nodes` (columns summed)."""
        _, wt = self.nodes
        v = np.asarray(values).reshape(len(wt), -1)
        return float(np.sqrt(wt @ np.sum(v * v, axis=1)))

    @cached_property
    def galerkin(self):
        """Matrix ``G_ij = <psi_i, L psi_j>`` on the Hermite basis."""
        w, wt = self.nodes
        idx = self.indices
        Lpsi = apply_L_pointwise(lambda x: hermite_basis(x, idx), w, self.kernel, self.n_star, self.sphere)
        psi = hermite_basis(w, idx)
        return (psi * wt[:, None]).T @ Lpsi

    def project(self, phi):
        """Hermite coefficients of ``phi`` (callable) by quadrature."""
        w, wt = self.nodes
        return hermite_basis(w, self.indices).T @ (wt * phi(w))


def apply_L(op: LinearizedOperator, phi, w=None):
    """``L phi``: pointwise at ``w`` (default: the operator's nodes) for a
    callable, or the Galerkin image for a coefficient vector."""
    if callable(phi):
        return op(phi, op.nodes[0] if w is None else w)
    phi = np.asarray(phi, float)
    if phi.shape[0] != len(op.indices):
        raise ContractError(f"coefficient vector has length {phi.shape[0]}, basis has {len(op.indices)}")
    return op.galerkin @ phi


COLLISION_INVARIANTS = {
    "1": lambda w: np.ones(w.shape[:-1]),
    "w1": lambda w: w[..., 0],
    "w2": lambda w: w[..., 1],
    "w3": lambda w: w[..., 2],
    "|w|^2": lambda w: np.sum(w * w, axis=-1),
}


def null_space_norms(op: LinearizedOperator):
    """``||L phi||`` in ``L^2(M)`` for the five collision invariants."""
    return {k: op.norm(apply_L(op, f)) for k, f in COLLISION_INVARIANTS.items()}


def galerkin_diagnostics(op: LinearizedOperator):
    G = op.galerkin
    sym = 0.5 * (G + G.T)
    eig = np.linalg.eigvalsh(sym)
    scale = max(float(np.abs(eig).max()), 1.0)
    return {
        "size": G.shape[0],
        "asymmetry": float(np.abs(G - G.T).max()),
        "min_eigenvalue": float(eig[0]),
        "null_dimension": int(np.sum(np.abs(eig) <= 1e-8 * scale)),
        "max_eigenvalue": float(eig[-1]),
    }


# --------------------------------------------------------------------------
# A-tilde


def _sonine_norm(k):
    """``c_k`` making ``L_k^{(5/2)}(|w|^2/2) w1 w2 / c_k`` unit in ``L^2(M)``."""
    return math.sqrt(
        (4.0 * math.pi / 15.0) * 2.0**2.5 / (2.0 * math.pi) ** 1.5
        * math.exp(gammaln(k + 3.5) - gammaln(k + 1))
    )


@dataclass
class ATildeSolution:
    """``A~ = alpha(|w|) A`` on a Sonine basis in ``|w|^2/2``."""

    coeffs: np.ndarray
    R: np.ndarray
    b: np.ndarray
    galerkin_residual: float
    residual: float
    r_grid: np.ndarray
    alpha_profile: np.ndarray
    orthogonality: dict
    kernel_name: str
    iterations: int
    warning: str | None = None
    asymmetry: float = 0.0

    def alpha(self, r):
        r = np.asarray(r, float)
        x = 0.5 * r * r
        return sum(a * eval_genlaguerre(k, 2.5, x) / _sonine_norm(k) for k, a in enumerate(self.coeffs))

    def __call__(self, w):
        """``A~(w)`` with shape ``(..., 3, 3)``."""
        w = np.asarray(w, float)
        return self.alpha(np.linalg.norm(w, axis=-1))[..., None, None] * tensor_A(w)

    @property
    def effective_order(self):
        """Highest Sonine index with a non-negligible coefficient."""
        big = np.nonzero(np.abs(self.coeffs) > 1e-12 * np.abs(self.coeffs).max())[0]
        return int(big.max())

    @property
    def alpha_spread(self):
        a = self.alpha_profile
        return float((a.max() - a.min()) / abs(a.mean()))


def solve_A_tilde(op: LinearizedOperator, n_sonine: int = 6, n_radial: int = 24, tol: float = 1e-6,
                  maxiter: int = 500, r_max: float = 8.0):
    """Solve ``L A~ = A`` with ``A~`` orthogonal to the null space.

    By isotropy ``A~ = alpha(|w|) A`` and ``L`` maps ``f(|w|) w1 w2`` to
    ``s(|w|) w1 w2``, so the problem reduces to the single component
    ``A~_12`` on the basis ``L_k^{(5/2)}(|w|^2/2) w1 w2``.  ``L`` is applied
    pointwise along ``w = r (1, 1, 0)/sqrt 2``; the Galerkin system is solved
    by conjugate gradients.
    """
    kernel = op.kernel
    deg = 2 + 2 * (n_sonine - 1)
    n_star = deg // 2 + 1
    sphere = SphereRule.for_degree(2 * deg)
    x, wx = roots_genlaguerre(n_radial, 2.5)
    r = np.sqrt(2.0 * x)
    pts = r[:, None] * np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0)
    cks = np.array([_sonine_norm(k) for k in range(n_sonine)])

    def basis(w):
        xx = 0.5 * np.sum(w * w, axis=-1)
        S = np.stack([eval_genlaguerre(k, 2.5, xx) for k in range(n_sonine)], axis=-1) / cks
        return S * (w[..., 0] * w[..., 1])[..., None]

    Lb = apply_L_pointwise(basis, pts, kernel, n_star, sphere)
    s = Lb / (0.5 * r * r)[:, None]
    S = np.stack([eval_genlaguerre(k, 2.5, x) for k in range(n_sonine)], axis=-1) / cks
    K0 = (4.0 * math.pi / 15.0) * 2.0**2.5 / (2.0 * math.pi) ** 1.5
    R = K0 * (S * wx[:, None]).T @ s
    b = K0 * S.T @ wx
    Rs = 0.5 * (R + R.T)
    it = [0]

    def count(_):
        it[0] += 1

    a, info = cg(Rs, b, rtol=1e-14, atol=0.0, maxiter=maxiter, callback=count)
    gres = float(np.linalg.norm(Rs @ a - b))
    if info != 0 or gres > tol:
        raise ConvergenceError(f"A~ solve stalled: Galerkin residual {gres:.3e}", residual=gres)
    # ||L A~ - A|| over all nine components = sqrt(10) x the 12-component value
    res12 = math.sqrt(max(K0 * float(wx @ (s @ a - 1.0) ** 2), 0.0))
    sol_r = np.linspace(0.0, r_max, 81)
    sol = ATildeSolution(a, Rs, b, gres, math.sqrt(10.0) * res12, sol_r, np.zeros_like(sol_r), {},
                         kernel.name, it[0])
    sol.alpha_profile = sol.alpha(sol_r)
    sol.asymmetry = float(np.abs(R - R.T).max())
    wq, wt = maxwellian_rule(10)
    At = sol(wq)
    sol.orthogonality = {
        k: float(np.abs(np.tensordot(wt * f(wq), At, axes=(0, 0))).max()) for k, f in COLLISION_INVARIANTS.items()
    }
    if not kernel.maxwell:
        sol.warning = "alpha is bounded only for the Maxwell preset; tail reported, not asserted"
        warnings.warn(sol.warning, stacklevel=2)
    return sol


def compute_nu(sol: ATildeSolution, op: LinearizedOperator | None = None, rel_tol: float = 1e-5):
    """``nu = <A~ : L A~>/10`` and the cross-check ``<A~ : A>/10``.

    The factor 10 cancels against ``<A:A> = 10 <A_12^2>``.
    """
    a = sol.coeffs
    nu = float(a @ sol.R @ a)
    nu_check = float(a @ sol.b)
    if abs(nu - nu_check) > rel_tol * abs(nu):
        raise InconsistencyError(f"nu forms disagree: {nu} vs {nu_check}")
    return nu, nu_check


# --------------------------------------------------------------------------
# kappa


def q_preset(spec: str):
    """Radial ``Q`` from ``constant:c0``, ``linear``, ``hardsphere`` or ``charles:beta``."""
    name, _, arg = spec.partition(":")
    if name == "constant":
        c0 = float(arg or 1.0)
        return lambda r: np.full(np.shape(r), c0)
    if name == "hardsphere":
        return lambda r: (2.0 / 3.0) * np.asarray(r, float)
    if name == "linear":
        return lambda r: np.asarray(r, float) * 1.0
    if name == "charles":
        beta = float(arg or 1.0)
        if beta <= 0:
            raise ContractError("charles:beta needs beta > 0")
        return lambda r: SQRT_2PI / (3.0 * beta) + np.asarray(r, float)
    raise ContractError(f"unknown Q preset {spec!r}")


def compute_kappa(Q, n: int = 64, r_max: float = 12.0, tol: float = 1e-10):
    """``kappa = (1/3) int Q(|w|) |w|^2 M(w) dw`` by radial Gauss-Legendre.

    Raises ``ConvergenceError`` when ``n`` and ``2n`` nodes disagree.
    """
    if isinstance(Q, str):
        Q = q_preset(Q)

    def rule(m):
        r, wr = radial_rule(m, r_max)
        dens = 4.0 * np.pi * r**2 * np.exp(-0.5 * r * r) / (2.0 * np.pi) ** 1.5
        return float(np.sum(wr * dens * r * r * Q(r))) / 3.0

    k1, k2 = rule(n), rule(2 * n)
    if abs(k1 - k2) > tol * max(1.0, abs(k2)):
        raise ConvergenceError(f"kappa quadrature unresolved: {k1} vs {k2}", residual=abs(k1 - k2))
    return k2


# --------------------------------------------------------------------------
# tensor identities


def viscous_tensor(sol: ATildeSolution, n: int = 10):
    """All 81 components ``<A~_ij A_kl>`` by Gauss-Hermite quadrature."""
    w, wt = maxwellian_rule(n)
    return np.einsum("n,nij,nkl->ijkl", wt, sol(w), tensor_A(w))


def isotropic_viscous_tensor(nu):
    d = np.eye(3)
    return nu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)
                 - (2.0 / 3.0) * np.einsum("ij,kl->ijkl", d, d))


def viscous_tensor_identity_check(sol: ATildeSolution, nu: float | None = None, tol: float = 1e-6):
    nu = compute_nu(sol)[0] if nu is None else nu
    T = viscous_tensor(sol)
    err = float(np.abs(T - isotropic_viscous_tensor(nu)).max())
    return ("pass" if err <= tol else "fail"), err, T


def collision_average(phi, g, op: LinearizedOperator, n_w: int, sphere: SphereRule, n_star: int | None = None):
    """``<phi Q(g)>`` in the weak form ``int int int (phi(w') - phi(w)) g g* M M* c``.

    ``phi`` maps ``(..., 3)`` to ``(..., k)``.
    """
    w, wt = maxwellian_rule(n_w)
    ws, Ws = maxwellian_rule(n_star or n_w)
    om, Wo = sphere.nodes, sphere.weights
    gw, gs = g(w), g(ws)
    total = 0.0
    for i in range(len(w)):
        z = w[i] - ws
        d = z @ om.T
        wp = w[i] - d[..., None] * om
        cval = op.kernel(z[:, None, :], om[None, :, :])
        weight = (wt[i] * gw[i]) * (Ws * gs)[:, None] * Wo[None, :] * cval
        total = total + np.einsum("sm,smk->k", weight, phi(wp) - phi(w[i])[None, None, :])
    return total


def convection_identity_check(g: HermitePerturbation, sol: ATildeSolution, op: LinearizedOperator | None = None,
                              tol: float = 1e-5):
    """``<A~ Q(g)> = A(u)`` for a hydrodynamic ``g``, plus the Gaussian identity
    ``<A w w>:(u u) = 2 u u - (2/3)|u|^2 I``.

    Returns ``(verdict, max_error, matrix)``.
    """
    if not g.hydrodynamic:
        raise ContractError("convection identity needs a purely hydrodynamic perturbation")
    op = op or LinearizedOperator(degree=2)
    k = sol.effective_order
    deg_phi = 2 + 2 * k
    n_w = (deg_phi + 2) // 2 + 1
    sphere = SphereRule.for_degree(2 * deg_phi)
    trimmed = ATildeSolution(sol.coeffs[:k + 1], sol.R, sol.b, 0.0, 0.0, sol.r_grid, sol.alpha_profile, {},
                             sol.kernel_name, 0)

    def phi(x):
        return trimmed(x).reshape(x.shape[:-1] + (9,))

    mat = collision_average(phi, g, op, n_w, sphere).reshape(3, 3)
    target = A_of_u(g.u_vec)
    err = float(np.abs(mat - target).max())
    w, wt = maxwellian_rule(4)
    u = g.u_vec
    lhs = np.einsum("n,nij,n->ij", wt, tensor_A(w), (w @ u) ** 2)
    err_g = float(np.abs(lhs - (2.0 * np.outer(u, u) - (2.0 / 3.0) * (u @ u) * np.eye(3))).max())
    ok = err <= tol and err_g <= 1e-12
    return ("pass" if ok else "fail"), max(err, err_g), mat


def compute_coefficients(molecular="maxwell", Q_spec="charles:1.0", degree=6, C0=1.0):
    """Pipeline used by the ``coeffs`` command."""
    kern = molecular_kernel(molecular, C0)
    op = LinearizedOperator(kern, degree=degree)
    sol = solve_A_tilde(op)
    nu, nu_check = compute_nu(sol)
    kappa = compute_kappa(Q_spec)
    diag = galerkin_diagnostics(op)
    verdict, err, _ = viscous_tensor_identity_check(sol, nu)
    return {
        "nu": nu,
        "nu_check": nu_check,
        "kappa": kappa,
        "alpha_profile": {"r": sol.r_grid.tolist(), "alpha": sol.alpha_profile.tolist()},
        "residuals": {
            "galerkin": sol.galerkin_residual,
            "L2M": sol.residual,
            "null_space": null_space_norms(op),
            "orthogonality": sol.orthogonality,
            "viscous_tensor": err,
            "galerkin_asymmetry": diag["asymmetry"],
            "galerkin_min_eigenvalue": diag["min_eigenvalue"],
        },
        "verdicts": {"viscous_tensor": verdict},
        "warning": sol.warning,
        "molecular_kernel": molecular,
        "Q_preset": Q_spec,
        "degree": degree,
    }
