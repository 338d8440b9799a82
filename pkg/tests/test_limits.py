import numpy as np
import pytest

from aerokin.errors import ContractError
from aerokin.kernels import ElasticPGKernel, InelasticPGKernel, ScalingParams
from aerokin.limits import (check_schedule, default_schedule, drag_limit_sweep, fit_order, friction_flux_sweep,
                            friction_limit_sweep, incompressibility_identity, inner_integrals, parse_schedule,
                            state_preset)
from aerokin.states import HermitePerturbation, PrescribedState, VelocityCloud

KAPPA_CHARLES = np.sqrt(2 * np.pi) / 3 + 8 * np.sqrt(2) / (3 * np.sqrt(np.pi))
SHORT = "0.4,0.2,0.1"


class TestSchedules:
    def test_default_is_eta_eps_cubed(self):
        s = default_schedule()
        assert s[0].epsilon == 0.4 and s[-1].epsilon == 0.05
        assert all(p.eta == pytest.approx(p.epsilon**3) for p in s)

    def test_parse(self):
        s = parse_schedule("0.4:0.01,0.2:0.001")
        assert [(p.epsilon, p.eta) for p in s] == [(0.4, 0.01), (0.2, 0.001)]
        assert parse_schedule(SHORT)[1].eta == pytest.approx(0.008)

    @pytest.mark.parametrize("bad", ["0.1,0.2", "0.4:0.1,0.2:0.1", "0.4"])
    def test_rejects_bad_schedules(self, bad):
        with pytest.raises(ContractError):
            parse_schedule(bad)

    def test_fit_order_recovers_power(self):
        eps = np.array([0.4, 0.2, 0.1, 0.05])
        assert fit_order(eps, 3 * eps**1.5) == pytest.approx(1.5)

    def test_check_schedule_needs_two_points(self):
        with pytest.raises(ContractError):
            check_schedule([ScalingParams(0.1, 0.001)])


def test_unknown_state_preset():
    with pytest.raises(ContractError, match="unknown state preset"):
        state_preset("nope")


def test_incompressibility_identity():
    verdict, m = incompressibility_identity(HermitePerturbation(0.3, (0.1, -0.2, 0.4), 0.2))
    assert verdict == "pass"
    assert m == pytest.approx([0.1, -0.2, 0.4], abs=1e-12)


@pytest.mark.parametrize("kernel", [InelasticPGKernel(), ElasticPGKernel.hard_sphere_pg()], ids=["inel", "elas"])
def test_inner_mass_against_monte_carlo(kernel, rng):
    p = ScalingParams(0.3, 0.027)
    V = np.array([2.0, -0.5, 1.0])
    g = HermitePerturbation(0.2, (0.5, -0.3, 0.2), 0.1)
    res = inner_integrals(kernel, V, g, p)
    W = rng.standard_normal((1_000_000, 3))
    vals = (1 + p.epsilon * g(W)) * kernel.q(np.linalg.norm(p.epsilon * V - W, axis=1))
    assert abs(res["mass"] - vals.mean()) < 4 * vals.std() / 1e3


class TestDrag:
    def test_limit_value_and_split(self):
        st = state_preset("perturbed")
        r = drag_limit_sweep(st, InelasticPGKernel(), parse_schedule(SHORT))
        # F = N((1,0,0), 0.64 I): <V.V> = 1 + 3 * 0.64 and <V>.u = 0.5
        assert r.limit[0] == pytest.approx(-KAPPA_CHARLES * (1 + 3 * 0.64 - 0.5), rel=1e-10)
        assert np.allclose(r.estimates[:, 0], r.extras["I"] + r.extras["J"])
        assert r.monotone

    def test_linear_phi_has_no_second_order_term(self):
        st = state_preset("shifted_maxwellian")
        r = drag_limit_sweep(st, ElasticPGKernel.hard_sphere_pg(), parse_schedule(SHORT))
        assert np.all(r.extras["J"] == 0.0)
        assert np.all(r.extras["J_bound"] > 0)

    def test_csv(self, tmp_path):
        r = drag_limit_sweep(state_preset("perturbed"), InelasticPGKernel(), parse_schedule(SHORT))
        text = r.to_csv(tmp_path / "s.csv")
        lines = text.strip().splitlines()
        assert lines[0].startswith("epsilon,eta,estimate_0,limit_0,error")
        assert lines[-1].startswith("fitted_order,")
        assert float(lines[-1].split(",")[1]) == pytest.approx(r.fitted_order)
        assert len(lines) == 2 + 3
        assert (tmp_path / "s.csv").read_text() == text


@pytest.mark.parametrize("kernel", [InelasticPGKernel(), ElasticPGKernel.hard_sphere_pg()], ids=["inel", "elas"])
def test_friction_identity_and_limit(kernel):
    F = VelocityCloud.point((2.0, 0.0, 0.0), weight=1.5)
    g = HermitePerturbation(0.0, (0.3, 0.1, 0.0))
    r = friction_limit_sweep(PrescribedState(F, g), kernel, parse_schedule("0.4,0.1,0.05"))
    assert r.extras["identity_residual"].max() <= 1e-8
    kap = KAPPA_CHARLES if kernel.kind == "inelastic" else 2 / 3 * 8 * np.sqrt(2) / (3 * np.sqrt(np.pi))
    assert r.limit == pytest.approx(kap * 1.5 * (np.array([2.0, 0, 0]) - [0.3, 0.1, 0.0]), rel=1e-10)
    assert r.extras["relative_error"][-1] < 0.02


@pytest.mark.parametrize("kernel", [InelasticPGKernel(), ElasticPGKernel.hard_sphere_pg()], ids=["inel", "elas"])
def test_flux_vanishes_in_limit(kernel):
    r = friction_flux_sweep(state_preset("perturbed"), kernel, parse_schedule(SHORT), alpha=1.0)
    assert abs(r.extras["limit_trace"]) <= 1e-8
    assert r.extras["limit_frobenius"] <= 1e-6
    assert np.all(np.diff(r.errors) < 0)
    # traceless at every point: A_gp is built from traceless tensors
    tr = r.estimates.reshape(-1, 3, 3).trace(axis1=1, axis2=2)
    assert np.abs(tr).max() < 1e-12
