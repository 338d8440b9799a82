"""Acceptance suite.

Runs ``aerokin all`` once in a subprocess (which also times the whole
suite), then re-checks every criterion from the raw numbers in the JSON
report against tolerances pinned here.  Closed-form targets are recomputed
locally rather than read back from the report.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria".
"""
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES

# pinned tolerances
SIGMA = 3.0
ROUNDOFF = 1e-12  # relative floor where the Monte Carlo variance is exactly zero
H1_ABS = 1e-2
H1_SECONDS = 30.0
ELASTIC_TOL = 1e-12
KAPPA_CONST_TOL = 1e-10
KAPPA_LINEAR_TOL = 1e-6
KAPPA_CHARLES, KAPPA_CHARLES_TOL = 2.96324, 1e-5
NU_TOL = 1e-5
COEFF_SECONDS = 60.0
NULL_TOL = 1e-8
SYM_TOL = 1e-8
A_TILDE_TOL = 1e-6
TENSOR_TOL = 1e-6
DRAG_ORDER_MIN = 0.8
J_ORDER, J_ORDER_TOL = 1.0, 0.3
DRAG_SECONDS = 300.0
FRICTION_IDENTITY_TOL = 1e-8
FRICTION_REL_TOL = 0.02
FLUX_RATIO = 0.25
FLUX_TRACE_TOL = 1e-8
FLUX_FRO_TOL = 1e-6
DIV_TOL = 1e-12
MOMENTUM_TOL = 1e-8
VNS_STEPS = 1000
RK4_ORDER, RK4_ORDER_TOL = 4.0, 0.5
TG_TOL = 1e-6
VNS_SECONDS = 300.0
SUITE_SECONDS = 900.0


@pytest.fixture(scope="session")
def suite_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance") / "report.json"
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "aerokin.cli", "all", "--out", str(out)],
                          capture_output=True, text=True)
    wall = time.perf_counter() - t0
    sys.stdout.write(proc.stdout)
    report = json.loads(out.read_text()) if out.exists() else {"results": []}
    return {"returncode": proc.returncode, "wall": wall, "stdout": proc.stdout, "stderr": proc.stderr,
            "results": {r["criterion"]: r for r in report["results"]}}


def record(num, name, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


def result(suite_run, num):
    res = suite_run["results"].get(num)
    if res is None:
        record(num, "missing", False, f"no result in report; stderr: {suite_run['stderr'][-500:]}")
    return res


def test_criterion_1_inelastic_mass(suite_run):
    r = result(suite_run, 1)
    v = r["values"]
    est, se = np.asarray(v["estimate"]), np.asarray(v["stderr"])
    err = np.abs(est - 1.0)
    ok = bool(np.all(err <= SIGMA * se) and np.all(err < H1_ABS) and r["runtime"] < H1_SECONDS)
    record(1, "H1 mass", ok, f"max |err| = {err.max():.2e}, {np.max(err / se):.2f} sigma, {r['runtime']:.1f} s")


def test_criterion_2_inelastic_momentum(suite_run):
    from aerokin.suite import h2_configs

    r = result(suite_run, 2)
    rows = r["values"]["configs"]
    assert len(rows) == 20
    # the configurations are a deterministic function of the seed; recheck that they are the ones reported
    for row, (eps, eta, beta, _, _) in zip(rows, h2_configs(1000)):
        assert (row["eps"], row["eta"], row["beta"]) == (eps, eta, beta)
    final = [row["attempts"][-1] for row in rows]
    ok = all(a["max_sigma"] <= SIGMA and a["sides_agree"] for a in final)
    worst = max(a["max_sigma"] for a in final)
    reruns = sum(len(row["attempts"]) > 1 for row in rows)
    record(2, "H2 momentum", ok, f"worst {worst:.2f} sigma over 20 configs, {reruns} replicated")


def test_criterion_3_elastic_structure(suite_run):
    r = result(suite_run, 3)
    v = r["values"]
    h3_ok = True
    for h in v["h3"]:
        # sigma = 1/(4 pi) gives q(r) = r; recompute the target here
        z = h["eps"] * np.array([2.0, -1.0, 0.5]) - np.array([0.3, 0.4, -0.2])
        nz = float(np.linalg.norm(z))
        target = (h["eta"] / (1 + h["eta"])) ** 2 * nz**2 * nz
        assert target == pytest.approx(h["target"], rel=1e-12)
        h3_ok &= abs(h["estimate"] - target) <= SIGMA * h["stderr"] + ROUNDOFF * target
    ok = v["involution_error"] <= ELASTIC_TOL and v["mixed_momentum_error"] <= ELASTIC_TOL and h3_ok
    record(3, "elastic structure", ok,
           f"involution {v['involution_error']:.1e}, momentum {v['mixed_momentum_error']:.1e}, H3 equality {h3_ok}")


def test_criterion_4_coefficients(suite_run):
    r = result(suite_run, 4)
    v = r["values"]
    exact_lin = 8 * math.sqrt(2) / (3 * math.sqrt(math.pi))
    ok = (abs(v["kappa_constant"] - v["c0"]) <= KAPPA_CONST_TOL
          and abs(v["kappa_linear"] - exact_lin) <= KAPPA_LINEAR_TOL
          and abs(v["kappa_linear_mc"] - exact_lin) <= SIGMA * v["kappa_linear_mc_se"]
          and abs(v["kappa_charles"] - KAPPA_CHARLES) <= KAPPA_CHARLES_TOL
          and abs(v["nu"] - v["alpha"]) <= NU_TOL
          and abs(v["A_dot_A"] - 10.0) <= 1e-12
          and r["runtime"] < COEFF_SECONDS)
    record(4, "coefficients", ok,
           f"kappa_lin {v['kappa_linear']:.8f}, kappa_charles {v['kappa_charles']:.6f}, "
           f"nu {v['nu']:.8f}, {r['runtime']:.1f} s")


def test_criterion_5_linearized_operator(suite_run):
    r = result(suite_run, 5)
    v = r["values"]
    ok = (max(v["null_norms"].values()) <= NULL_TOL and v["asymmetry"] <= SYM_TOL
          and v["min_eigenvalue"] >= -SYM_TOL * v["galerkin_scale"]
          and v["A_tilde_residual"] <= A_TILDE_TOL and v["viscous_tensor_error"] <= TENSOR_TOL)
    record(5, "linearized operator", ok,
           f"null {max(v['null_norms'].values()):.1e}, asym {v['asymmetry']:.1e}, "
           f"min eig {v['min_eigenvalue']:.1e}, tensor {v['viscous_tensor_error']:.1e}")


def _fit(eps, y, last=4):
    # slope of log error against log eps over the finest points
    return float(np.polyfit(np.log(eps[-last:]), np.log(y[-last:]), 1)[0])


def test_criterion_6_drag_sweep(suite_run):
    r = result(suite_run, 6)
    eps = np.array([0.4, 0.283, 0.2, 0.141, 0.1, 0.0707, 0.05])
    ok, parts = r["runtime"] < DRAG_SECONDS, []
    for k in r["values"]["kernels"]:
        errs = np.asarray(k["errors"])
        mono = bool(np.all(np.diff(errs) < 0))
        order = _fit(eps, errs)
        ok &= mono and order >= DRAG_ORDER_MIN and abs(k["J_bound_order"] - J_ORDER) <= J_ORDER_TOL
        parts.append(f"{k['kernel']} order {order:.3f} J {k['J_bound_order']:.3f}")
    record(6, "drag sweep", ok, "; ".join(parts) + f", {r['runtime']:.1f} s")


def test_criterion_7_friction(suite_run):
    r = result(suite_run, 7)
    rows = r["values"]["kernels"]
    ok = all(k["identity_residual"] <= FRICTION_IDENTITY_TOL and k["relative_error_last"] <= FRICTION_REL_TOL
             for k in rows)
    record(7, "friction identities", ok,
           "; ".join(f"{k['kernel']} residual {k['identity_residual']:.1e} rel {k['relative_error_last']:.1e}"
                     for k in rows))


def test_criterion_8_friction_flux(suite_run):
    r = result(suite_run, 8)
    rows = r["values"]["kernels"]
    ok = all(k["ratio"] < FLUX_RATIO and abs(k["limit_trace"]) <= FLUX_TRACE_TOL
             and k["limit_frobenius"] <= FLUX_FRO_TOL for k in rows)
    record(8, "friction flux", ok, "; ".join(f"{k['kernel']} ratio {k['ratio']:.4f}" for k in rows))


def test_criterion_9_vns(suite_run):
    r = result(suite_run, 9)
    v = r["values"]
    errs = np.asarray(v["relaxation_errors"])
    orders = np.log2(errs[:-1] / errs[1:])
    ok = (v["steps"] == VNS_STEPS and v["max_divergence"] <= DIV_TOL and v["momentum_drift"] <= MOMENTUM_TOL
          and v["energy_ok"] and bool(np.all(np.abs(orders - RK4_ORDER) <= RK4_ORDER_TOL))
          and v["taylor_green_error"] <= TG_TOL and r["runtime"] < VNS_SECONDS)
    record(9, "VNS solver", ok,
           f"div {v['max_divergence']:.1e}, drift {v['momentum_drift']:.1e}, orders "
           f"{', '.join(f'{o:.2f}' for o in orders)}, TG {v['taylor_green_error']:.1e}, {r['runtime']:.1f} s")


def test_criterion_10_full_suite(suite_run):
    ok = suite_run["returncode"] == 0 and suite_run["wall"] < SUITE_SECONDS and len(suite_run["results"]) == 9
    record(10, "full suite", ok, f"exit {suite_run['returncode']}, {suite_run['wall']:.1f} s wall")
