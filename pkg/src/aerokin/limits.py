"""Operator-level hydrodynamic limits as (epsilon, eta) sweeps on prescribed states.

For a state ``(F, g)`` with ``f = M (1 + eps g)`` every collision integral
against a velocity test function reduces to a double integral over incoming
pairs ``(V, W)`` of the kernel moments.  ``F`` is a set of weighted nodes;
the ``W`` integral uses spherical coordinates centred on the cusp
``W = eps V`` of the kernel moments, which keeps it spectrally accurate.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .kernels import ScalingParams
from .moments import _maxwell_W_nodes, _params_for
from .quadrature import maxwellian_rule
from .states import HermitePerturbation, PrescribedState, VelocityCloud
from .transport import compute_kappa, tensor_A

DEFAULT_EPSILONS = (0.4, 0.283, 0.2, 0.141, 0.1, 0.0707, 0.05)


def default_schedule(epsilons=DEFAULT_EPSILONS, beta=1.0, eta_power=3.0):
    return check_schedule([ScalingParams(e, e**eta_power, beta) for e in epsilons])


def check_schedule(schedule):
    """Require decreasing ``eps`` and decreasing ``eta/eps^2`` (so it can tend to 0)."""
    if len(schedule) < 2:
        raise ContractError("a sweep needs at least two schedule points")
    eps = np.array([p.epsilon for p in schedule])
    ratio = np.array([p.eta / p.epsilon**2 for p in schedule])
    if np.any(np.diff(eps) >= 0) or np.any(np.diff(ratio) >= 0):
        raise ContractError("schedule must have eps and eta/eps^2 strictly decreasing")
    return list(schedule)


def parse_schedule(text, beta=1.0):
    """``"0.4,0.2,0.1"`` (eta = eps^3) or ``"0.4:0.01,0.2:0.001"``."""
    pts = []
    for item in text.split(","):
        e, _, h = item.strip().partition(":")
        e = float(e)
        pts.append(ScalingParams(e, float(h) if h else e**3, beta))
    return check_schedule(pts)


def fit_order(eps, err, last=4):
    """Least-squares slope of ``log err`` against ``log eps`` over the last points."""
    x = np.log(np.asarray(eps, float)[-last:])
    y = np.log(np.abs(np.asarray(err, float)[-last:]))
    return float(np.polyfit(x, y, 1)[0])


# test functions phi(v): gradient and (constant) Hessian
TEST_FUNCTIONS = {
    "v1": (lambda V: np.broadcast_to([1.0, 0.0, 0.0], V.shape), np.zeros((3, 3))),
    "v2": (lambda V: np.broadcast_to([0.0, 1.0, 0.0], V.shape), np.zeros((3, 3))),
    "v1_sq": (lambda V: 2.0 * V * np.array([1.0, 0.0, 0.0]), np.diag([2.0, 0.0, 0.0])),
    "energy": (lambda V: V, np.eye(3)),
}

STATE_PRESETS = {
    "shifted_maxwellian": lambda: PrescribedState(VelocityCloud.gaussian((1.0, 0.0, 0.0), 1.0)),
    "co_moving": lambda: PrescribedState(VelocityCloud.gaussian((1.0, 0.0, 0.0), 1.0),
                                         HermitePerturbation(u=(1.0, 0.0, 0.0))),
    "symmetric": lambda: PrescribedState(VelocityCloud.gaussian((0.0, 0.0, 0.0), 1.0)),
    "point": lambda: PrescribedState(VelocityCloud.point((2.0, 0.0, 0.0))),
    "perturbed": lambda: PrescribedState(VelocityCloud.gaussian((1.0, 0.0, 0.0), 0.8),
                                         HermitePerturbation(0.2, (0.5, -0.3, 0.2), 0.1), "energy"),
}


def state_preset(name):
    try:
        return STATE_PRESETS[name]()
    except KeyError:
        raise ContractError(f"unknown state preset {name!r}; choose from {sorted(STATE_PRESETS)}") from None


@dataclass
class SweepResult:
    prop: str
    schedule: list
    estimates: np.ndarray
    limit: np.ndarray
    errors: np.ndarray
    fitted_order: float
    extras: dict = field(default_factory=dict)

    @property
    def epsilons(self):
        return np.array([p.epsilon for p in self.schedule])

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.errors) < 0))

    def to_csv(self, path=None):
        """CSV with one row per schedule point and a ``fitted_order`` footer row."""
        k = self.estimates.shape[1]
        cols = ["epsilon", "eta"] + [f"estimate_{i}" for i in range(k)] + [f"limit_{i}" for i in range(k)] + ["error"]
        per_point = {name: v for name, v in self.extras.items()
                     if isinstance(v, np.ndarray) and v.shape == (len(self.schedule),)}
        cols += list(per_point)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for i, p in enumerate(self.schedule):
            row = [p.epsilon, p.eta, *self.estimates[i], *self.limit, self.errors[i]]
            row += [per_point[n][i] for n in per_point]
            wr.writerow([repr(float(x)) for x in row])
        wr.writerow(["fitted_order", repr(float(self.fitted_order))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# --------------------------------------------------------------------------
# inner integrals over W


def inner_integrals(kernel, V, g: HermitePerturbation, p: ScalingParams, n_r=40):
    """Per-``V`` integrals ``int M(W)(1 + eps g(W)) [.] dW`` of the kernel moments.

    Keys: ``m1_pg``, ``m2_pg`` (particle increments), ``m1_gp`` (gas
    increment), ``A_gp`` (``int (A(w) - A(W)) Pi_gp dw``) and ``mass`` (``q``).
    """
    V = np.asarray(V, float)
    W, wt = _maxwell_W_nodes(p.epsilon * V, n_r=n_r)
    fw = wt * (1.0 + p.epsilon * g(W))
    Vb = np.broadcast_to(V, W.shape)
    out = {}
    q, m1, m2 = kernel.gp_moments(Vb, W, p)
    out["mass"] = float(fw @ q)
    out["m1_gp"] = fw @ m1
    s2 = m2 + m1[:, :, None] * W[:, None, :] + W[:, :, None] * m1[:, None, :] \
        + q[:, None, None] * W[:, :, None] * W[:, None, :]
    tr = np.trace(s2, axis1=1, axis2=2)
    Aw = s2 - tr[:, None, None] * np.eye(3) / 3.0
    out["A_gp"] = np.tensordot(fw, Aw - q[:, None, None] * tensor_A(W), axes=(0, 0))
    if not p.is_limit:
        _, m1p, m2p = kernel.pg_moments(Vb, W, p)
        out["m1_pg"] = fw @ m1p
        out["m2_pg"] = np.tensordot(fw, m2p, axes=(0, 0))
    return out


def _collect(kernel, F: VelocityCloud, g, p, keys):
    acc = {k: 0.0 for k in keys}
    per_v = []
    for V, wV in zip(F.velocities, F.weights):
        res = inner_integrals(kernel, V, g, p)
        per_v.append(res)
        for k in keys:
            acc[k] = acc[k] + wV * res[k]
    return acc, per_v


def _kappa_of(kernel):
    return compute_kappa(kernel.Q)


# --------------------------------------------------------------------------
# sweeps


def drag_limit_sweep(state: PrescribedState, kernel, schedule=None):
    """``(1/eta) int D(F, f) phi dv`` against ``-kappa int F grad(phi).(v - u) dv``.

    The estimate is split as in the Taylor argument: ``I`` from the first
    moment of the particle increment and ``J`` from the second moment with
    the (constant) Hessian of ``phi``.  ``extras['J_bound']`` is the
    Hessian-free bound ``(1/2 eta) int int F f int |v - V|^2 Pi_pg``, whose
    fitted exponent in ``eps`` should be 1 when ``eta = eps^3``.
    """
    schedule = check_schedule(schedule or default_schedule(beta=getattr(kernel, "beta", 1.0)))
    grad, hess = TEST_FUNCTIONS[state.phi]
    F, g = state.F, state.g
    kappa = _kappa_of(kernel)
    u = g.u_vec
    limit = -kappa * float(np.sum(F.weights * np.sum(grad(F.velocities) * (F.velocities - u), axis=1)))
    est, I_t, J_t, Jb = [], [], [], []
    for p in schedule:
        p = _params_for(kernel, p)
        I = J = B = 0.0
        for V, wV in zip(F.velocities, F.weights):
            r = inner_integrals(kernel, V, g, p)
            I += wV * float(grad(V[None, :])[0] @ r["m1_pg"])
            J += wV * 0.5 * float(np.sum(hess * r["m2_pg"]))
            B += wV * 0.5 * float(np.trace(r["m2_pg"]))
        I, J, B = I / p.eta, J / p.eta, B / p.eta
        I_t.append(I)
        J_t.append(J)
        Jb.append(B)
        est.append(I + J)
    est = np.array(est)
    err = np.abs(est - limit)
    eps = [p.epsilon for p in schedule]
    return SweepResult(
        "drag", schedule, est[:, None], np.array([limit]), err, fit_order(eps, err),
        {"I": np.array(I_t), "J": np.array(J_t), "J_bound": np.array(Jb),
         "J_bound_order": fit_order(eps, Jb), "kappa": kappa, "phi": state.phi},
    )


def friction_limit_sweep(state: PrescribedState, kernel, schedule=None):
    """``(1/eps) int w R(f, F) dw`` against ``kappa int (v - u) F dv``.

    ``extras['identity_residual']`` is the largest componentwise gap to
    ``-(1/eta) int v D(F, f) dv`` at each point (computed from the particle
    moments, independently of the gas moments).
    """
    schedule = check_schedule(schedule or default_schedule(beta=getattr(kernel, "beta", 1.0)))
    F, g = state.F, state.g
    kappa = _kappa_of(kernel)
    limit = kappa * (F.momentum() - F.mass * g.u_vec)
    est, resid = [], []
    for p in schedule:
        p = _params_for(kernel, p)
        acc, _ = _collect(kernel, F, g, p, ("m1_gp", "m1_pg"))
        gas = acc["m1_gp"] / p.epsilon
        part = -acc["m1_pg"] / p.eta
        est.append(gas)
        resid.append(float(np.abs(gas - part).max()))
    est = np.array(est)
    err = np.linalg.norm(est - limit, axis=1)
    eps = [p.epsilon for p in schedule]
    rel = err / max(float(np.linalg.norm(limit)), 1e-300)
    return SweepResult("friction", schedule, est, limit, err, fit_order(eps, err),
                       {"identity_residual": np.array(resid), "relative_error": rel, "kappa": kappa})


def friction_flux_sweep(state: PrescribedState, kernel, schedule=None, alpha=None):
    """``int A~(w) R(f, F)(w) dw`` with ``A~ = alpha A`` (constant ``alpha``).

    Also evaluates the ``eps = eta = 0`` matrix; it must vanish (isotropic
    with zero trace).
    """
    if alpha is None:
        from .transport import LinearizedOperator, solve_A_tilde

        sol = solve_A_tilde(LinearizedOperator(degree=2))
        if sol.effective_order != 0:
            raise ContractError("flux sweep needs a constant alpha (Maxwell preset)")
        alpha = float(sol.alpha(0.0))
    schedule = check_schedule(schedule or default_schedule(beta=getattr(kernel, "beta", 1.0)))
    F, g = state.F, state.g
    mats = []
    for p in schedule:
        p = _params_for(kernel, p)
        acc, _ = _collect(kernel, F, g, p, ("A_gp",))
        mats.append(alpha * acc["A_gp"])
    mats = np.array(mats)
    norms = np.linalg.norm(mats, axis=(1, 2))
    p0 = ScalingParams.limit(getattr(kernel, "beta", 1.0))
    acc0, _ = _collect(kernel, F, g, p0, ("A_gp",))
    lim = alpha * acc0["A_gp"]
    eps = [p.epsilon for p in schedule]
    return SweepResult(
        "flux", schedule, mats.reshape(len(schedule), 9), np.zeros(9), norms, fit_order(eps, norms),
        {"limit_matrix": lim, "limit_trace": float(np.trace(lim)), "limit_frobenius": float(np.linalg.norm(lim)),
         "ratio_last_first": float(norms[-1] / norms[0]), "alpha": alpha},
    )


def incompressibility_identity(g: HermitePerturbation, tol=1e-10):
    """``<w g> = u`` by Gauss-Hermite quadrature."""
    w, wt = maxwellian_rule(4)
    m = (wt * g(w)) @ w
    err = float(np.abs(m - g.u_vec).max())
    return ("pass" if err <= tol else "fail"), m


SWEEPS = {"drag": drag_limit_sweep, "friction": friction_limit_sweep, "flux": friction_flux_sweep}
