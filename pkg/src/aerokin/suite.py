"""Acceptance suite: one function per criterion, each returning a result dict.

Each result has ``criterion``, ``name``, ``passed``, ``runtime`` and a
``values`` dict holding the raw numbers the verdict was computed from, so
callers (the ``all`` command and the test suite) can re-check them.
"""
from __future__ import annotations

import math
import time

import numpy as np

from .kernels import ElasticPGKernel, InelasticPGKernel, ScalingParams, elastic_post_collision
from .limits import drag_limit_sweep, friction_flux_sweep, friction_limit_sweep, state_preset
from .mc import mc_mean
from .moments import check_H1_mass, check_H2_momentum, check_H3_bound
from .quadrature import maxwellian_rule
from .transport import (LinearizedOperator, compute_kappa, compute_nu, galerkin_diagnostics, null_space_norms,
                        q_preset, solve_A_tilde, tensor_A, viscous_tensor_identity_check)
from . import vns

SQRT_2PI = math.sqrt(2.0 * math.pi)


def _timed(fn):
    def wrapper(seed=0):
        t0 = time.perf_counter()
        out = fn(seed)
        out["runtime"] = time.perf_counter() - t0
        if "time_limit" in out:
            out["passed"] = bool(out["passed"] and out["runtime"] < out["time_limit"])
        return out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def criterion_1(seed=0):
    """Inelastic kernel mass at eps=0.1, eta=0.01, V=(10,0,0), W=0 with 10^6 samples."""
    k = InelasticPGKernel(1.0)
    p = ScalingParams(0.1, 0.01, 1.0)
    rep = check_H1_mass(k, [10.0, 0.0, 0.0], [0.0, 0.0, 0.0], p, 1_000_000, seed)
    est, se = rep.estimate, rep.standard_error
    err = np.abs(est - 1.0)
    ok = bool(np.all(err <= 3.0 * se) and np.all(err < 1e-2))
    return {"criterion": 1, "name": "H1 inelastic mass", "passed": ok, "time_limit": 30.0,
            "values": {"estimate": est.tolist(), "stderr": se.tolist(), "target": 1.0}}


def h2_configs(seed, n=20):
    """Random ``(eps, eta, beta, V, W)`` draws for the momentum check."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        eps = float(rng.uniform(0.05, 0.5))
        eta = float(10.0 ** rng.uniform(-4, -1))
        beta = float(rng.uniform(0.5, 2.0))
        out.append((eps, eta, beta, rng.normal(0.0, 3.0, 3), rng.normal(0.0, 1.0, 3)))
    return out


@_timed
def criterion_2(seed=0):
    """Momentum moment on 20 random configurations, both sides against the formula.

    Each configuration makes 9 three-sigma comparisons (two sides and their
    agreement, three components each), 180 in all, so an unbiased estimator
    trips at least one about 40% of the time.  A configuration that misses is
    re-run once with an independent seed and four times the samples; it fails
    only if the replicate misses too.  A genuine bias of three original
    standard errors sits at six in the replicate and still fails.
    """
    rows, ok = [], True
    for i, (eps, eta, beta, V, W) in enumerate(h2_configs(seed + 1000)):
        k = InelasticPGKernel(beta)
        z = eps * V - W
        target = -(eta / (1.0 + eta)) * z * (np.linalg.norm(z) + SQRT_2PI / (3.0 * beta))
        p = ScalingParams(eps, eta, beta)
        attempts = []
        for n, s in ((200_000, seed + 2 * i), (800_000, seed + 5000 + 2 * i)):
            rep = check_H2_momentum(k, V, W, p, n, s)
            dev = np.abs(rep.estimate - target[None, :])
            good = bool(np.all(dev <= 3.0 * rep.standard_error + 1e-12) and rep.details["sides_agree"])
            attempts.append({"n_samples": n, "seed": s, "max_sigma": float(np.max(dev / rep.standard_error)),
                             "sides_agree": rep.details["sides_agree"], "passed": good})
            if good:
                break
        good = attempts[-1]["passed"]
        ok &= good
        rows.append({"eps": eps, "eta": eta, "beta": beta, "attempts": attempts, "passed": good})
    return {"criterion": 2, "name": "H2 inelastic momentum", "passed": ok, "values": {"configs": rows}}


@_timed
def criterion_3(seed=0):
    """Elastic map: involution, mixed momentum, and the H3 equality."""
    rng = np.random.default_rng(seed + 3000)
    n = 100_000
    v = rng.normal(0.0, 3.0, (n, 3))
    w = rng.normal(0.0, 1.0, (n, 3))
    om = rng.standard_normal((n, 3))
    om /= np.linalg.norm(om, axis=1, keepdims=True)
    eps = rng.uniform(0.05, 1.0, (n, 1))
    eta = 10.0 ** rng.uniform(-4, 0, (n, 1))
    inv_err = mom_err = 0.0
    for i in range(0, n, 10_000):
        sl = slice(i, i + 10_000)
        e_, h_ = eps[sl], eta[sl]
        v1, w1 = _elastic_rows(v[sl], w[sl], om[sl], e_, h_)
        v2, w2 = _elastic_rows(v1, w1, om[sl], e_, h_)
        scale = 1.0 + np.abs(v[sl]).max() + np.abs(w[sl]).max()
        inv_err = max(inv_err, float(np.abs(np.concatenate([v2 - v[sl], w2 - w[sl]])).max()) / scale)
        mom = e_ * (v1 - v[sl]) + h_ * (w1 - w[sl])
        mom_err = max(mom_err, float(np.abs(mom).max()) / scale)
    # scalar-parameter path through the public map
    p = ScalingParams(0.2, 0.05, 1.0)
    a, b = elastic_post_collision(v[:1000], w[:1000], om[:1000], p)
    a2, b2 = elastic_post_collision(a, b, om[:1000], p)
    inv_err = max(inv_err, float(np.abs(a2 - v[:1000]).max()), float(np.abs(b2 - w[:1000]).max()))
    # H3 equality: int |eps v - U|^2 Pi_pg = (eta/(1+eta))^2 |z|^2 q(|z|)
    k = ElasticPGKernel.hard_sphere_pg()
    V, W = np.array([2.0, -1.0, 0.5]), np.array([0.3, 0.4, -0.2])
    h3 = []
    h3_ok = True
    for j, (e, h) in enumerate([(0.3, 0.05), (0.1, 0.001)]):
        pp = ScalingParams(e, h, 1.0)
        rep = check_H3_bound(k, V, W, pp, 400_000, seed + 3100 + j)
        z = e * V - W
        target = (h / (1.0 + h)) ** 2 * float(z @ z) * float(k.q(np.linalg.norm(z)))
        # the integrand is constant per sample, so sigma can be 0: allow roundoff
        good = bool(abs(rep.estimate - target) <= 3.0 * rep.standard_error + 1e-12 * abs(target))
        h3_ok &= good
        h3.append({"eps": e, "eta": h, "estimate": float(rep.estimate), "stderr": float(rep.standard_error),
                   "target": target})
    ok = inv_err <= 1e-12 and mom_err <= 1e-12 and h3_ok
    return {"criterion": 3, "name": "elastic structure", "passed": bool(ok),
            "values": {"involution_error": inv_err, "mixed_momentum_error": mom_err, "h3": h3}}


def _elastic_rows(v, w, om, eps, eta):
    """Row-wise elastic map with per-row ``eps, eta`` (same formulas as the kernel module)."""
    dv = np.sum((v - w / eps) * om, axis=1, keepdims=True)
    dw = np.sum((w - eps * v) * om, axis=1, keepdims=True)
    return v - (2.0 * eta / (1.0 + eta)) * dv * om, w - (2.0 / (1.0 + eta)) * dw * om


@_timed
def criterion_4(seed=0):
    """kappa for three presets and the Maxwell viscosity."""
    c0 = 2.5
    k_const = compute_kappa(q_preset(f"constant:{c0}"))
    k_lin = compute_kappa(q_preset("linear"))
    lin_exact = 8.0 * math.sqrt(2.0) / (3.0 * math.sqrt(math.pi))

    def draw(rng, m):
        x = rng.standard_normal((m, 3))
        return np.linalg.norm(x, axis=1) ** 3 / 3.0

    mc, mc_se = mc_mean(draw, 2_000_000, seed + 4000)
    k_ch = compute_kappa(q_preset("charles:1.0"))
    sol = solve_A_tilde(LinearizedOperator(degree=6))
    nu, nu_check = compute_nu(sol)
    alpha = float(sol.alpha(0.0))
    w, wt = maxwellian_rule(4)
    A = tensor_A(w)
    AA = float(wt @ np.einsum("nij,nij->n", A, A))
    ok = (abs(k_const - c0) <= 1e-10 and abs(k_lin - lin_exact) <= 1e-6 and abs(mc - lin_exact) <= 3.0 * mc_se
          and abs(k_ch - 2.96324) <= 1e-5 and abs(nu - alpha) <= 1e-5 and abs(AA - 10.0) <= 1e-12)
    return {"criterion": 4, "name": "transport coefficients", "passed": bool(ok), "time_limit": 60.0,
            "values": {"kappa_constant": k_const, "c0": c0, "kappa_linear": k_lin, "kappa_linear_exact": lin_exact,
                       "kappa_linear_mc": float(mc), "kappa_linear_mc_se": float(mc_se), "kappa_charles": k_ch,
                       "nu": nu, "nu_check": nu_check, "alpha": alpha, "A_dot_A": AA}}


@_timed
def criterion_5(seed=0):
    """Null space, symmetry and PSD of the Galerkin matrix, A~ residual, viscous tensor."""
    op = LinearizedOperator(degree=6)
    nulls = null_space_norms(op)
    diag = galerkin_diagnostics(op)
    sol = solve_A_tilde(op)
    _, tens_err, _ = viscous_tensor_identity_check(sol)
    scale = float(np.abs(op.galerkin).max())
    ok = (max(nulls.values()) <= 1e-8 and diag["asymmetry"] <= 1e-8
          and diag["min_eigenvalue"] >= -1e-8 * scale and sol.residual <= 1e-6 and tens_err <= 1e-6)
    return {"criterion": 5, "name": "linearized operator", "passed": bool(ok),
            "values": {"null_norms": nulls, "asymmetry": diag["asymmetry"],
                       "min_eigenvalue": diag["min_eigenvalue"], "galerkin_scale": scale,
                       "A_tilde_residual": sol.residual, "viscous_tensor_error": tens_err}}


def _kernels():
    return [InelasticPGKernel(1.0), ElasticPGKernel.hard_sphere_pg()]


@_timed
def criterion_6(seed=0):
    """Drag sweep (perturbed state, phi = |v|^2/2) for both particle-gas kernels."""
    rows, ok = [], True
    for k in _kernels():
        r = drag_limit_sweep(state_preset("perturbed"), k)
        jo = r.extras["J_bound_order"]
        good = r.monotone and r.fitted_order >= 0.8 and abs(jo - 1.0) <= 0.3
        ok &= good
        rows.append({"kernel": k.name, "errors": r.errors.tolist(), "monotone": r.monotone,
                     "fitted_order": r.fitted_order, "J_bound_order": jo, "passed": good})
    return {"criterion": 6, "name": "drag limit sweep", "passed": bool(ok), "time_limit": 300.0,
            "values": {"kernels": rows}}


@_timed
def criterion_7(seed=0):
    """Friction identity at every point and the limit at eps = 0.05."""
    rows, ok = [], True
    for k in _kernels():
        r = friction_limit_sweep(state_preset("point"), k)
        res = float(r.extras["identity_residual"].max())
        rel = float(r.extras["relative_error"][-1])
        good = res <= 1e-8 and rel <= 0.02 and abs(r.schedule[-1].epsilon - 0.05) < 1e-12
        ok &= good
        rows.append({"kernel": k.name, "identity_residual": res, "relative_error_last": rel, "passed": good})
    return {"criterion": 7, "name": "friction identities", "passed": bool(ok), "values": {"kernels": rows}}


@_timed
def criterion_8(seed=0):
    """Friction flux decay and the vanishing eps = eta = 0 matrix."""
    rows, ok = [], True
    for k in _kernels():
        r = friction_flux_sweep(state_preset("perturbed"), k)
        ratio, tr, fro = r.extras["ratio_last_first"], r.extras["limit_trace"], r.extras["limit_frobenius"]
        good = ratio < 0.25 and abs(tr) <= 1e-8 and fro <= 1e-6
        ok &= good
        rows.append({"kernel": k.name, "ratio": ratio, "limit_trace": tr, "limit_frobenius": fro, "passed": good})
    return {"criterion": 8, "name": "friction flux", "passed": bool(ok), "values": {"kernels": rows}}


def relaxation_errors(dts=(0.1, 0.05, 0.025), kappa=2.0, t_end=1.0):
    """Single particle in a frozen uniform flow; error against the exponential."""
    grid = vns.SpectralGrid(8, 2)
    U, v0 = np.array([0.5, 0.2]), np.array([2.0, -1.0])
    exact = U + (v0 - U) * math.exp(-kappa * t_end)
    errs = []
    for dt in dts:
        f = vns.FluidState.uniform(grid, 0.0, U)
        c = vns.ParticleCloud([[1.0, 1.0]], [v0], [1.0], kappa)
        for _ in range(int(round(t_end / dt))):
            f, c, _ = vns.step(f, c, dt, fluid_frozen=True, diagnostics=False)
        errs.append(float(np.abs(c.velocities[0] - exact).max()))
    return np.array(errs)


def taylor_green_error(n=32, nu=0.1, dt=0.01, steps=100):
    """Largest relative deviation of the modal energies from ``exp(-2 nu |k|^2 t)``."""
    grid = vns.SpectralGrid(n, 2)
    f = vns.FluidState.taylor_green(grid, nu)
    c = vns.ParticleCloud.empty(2)
    e0 = np.abs(f.u_hat) ** 2
    for _ in range(steps):
        f, c, _ = vns.step(f, c, dt, diagnostics=False)
    active = e0 > 1e-20 * e0.max()
    decay = np.exp(-2.0 * nu * np.broadcast_to(grid.k2, e0.shape) * f.t)
    return float(np.max(np.abs(np.abs(f.u_hat) ** 2 / np.where(active, e0, 1.0) - decay)[active]))


@_timed
def criterion_9(seed=0):
    """VNS invariants on a 64^2 grid with 10^4 particles over 10^3 steps."""
    cfg = {"grid_n": 64, "dim": 2, "nu": 0.05, "kappa": 1.0, "steps": 1000, "fluid_init": "random",
           "particles": {"count": 10_000, "init_preset": "uniform_random", "seed": seed + 9000}}
    diags, _, _, _ = vns.run_simulation(cfg)
    inv = vns.run_verdicts(diags)
    errs = relaxation_errors()
    orders = np.log2(errs[:-1] / errs[1:])
    tg = taylor_green_error()
    ok = (inv["divergence_ok"] and inv["momentum_ok"] and inv["energy_ok"]
          and bool(np.all(np.abs(orders - 4.0) <= 0.5)) and tg <= 1e-6)
    return {"criterion": 9, "name": "VNS solver", "passed": bool(ok), "time_limit": 300.0,
            "values": {**inv, "relaxation_errors": errs.tolist(), "relaxation_orders": orders.tolist(),
                       "taylor_green_error": tg, "steps": len(diags) - 1}}


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9]


def run_all(seed=0, only=None, echo=None):
    """Run the criteria in order; ``echo`` receives each result as it finishes."""
    results = []
    for fn in CRITERIA:
        num = int(fn.__name__.rsplit("_", 1)[1])
        if only and num not in only:
            continue
        res = fn(seed)
        results.append(res)
        if echo:
            echo(res)
    return results


def format_line(res):
    return f"criterion {res['criterion']:>2} [{res['name']}]: {'PASS' if res['passed'] else 'FAIL'} " \
           f"({res['runtime']:.1f} s)"
