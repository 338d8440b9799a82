import numpy as np
import pytest

from aerokin.errors import ContractError, SamplingError
from aerokin.kernels import (ElasticPGKernel, InelasticPGKernel, MolecularKernel, ScalingParams, elastic_post_collision,
                             eval_K00, eval_K_gp, eval_K_pg, eval_P, molecular_kernel, molecular_post_collision,
                             pg_kernel, sample_flux, sample_pg_scattering)
from aerokin.quadrature import SphereRule, rotation_frame

SQ2PI = np.sqrt(2 * np.pi)


def unit(rng, n):
    x = rng.standard_normal((n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def grid3(half, n):
    x = np.linspace(-half, half, n)
    g = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    return g, (x[1] - x[0]) ** 3


class TestScalingParams:
    @pytest.mark.parametrize("eps,eta", [(0.0, 0.1), (1.5, 0.1), (0.1, 0.0), (0.1, -1.0)])
    def test_rejects_out_of_range(self, eps, eta):
        with pytest.raises(ContractError):
            ScalingParams(eps, eta)

    def test_limit_point(self):
        p = ScalingParams.limit(2.0)
        assert p.is_limit and p.epsilon == 0 and p.beta == 2.0
        with pytest.raises(ContractError):
            ScalingParams(0.1, 0.0, 1.0, is_limit=True)


class TestCollisionMaps:
    def test_molecular_map_conserves_momentum_and_energy(self, rng):
        w, ws = rng.standard_normal((2, 1000, 3))
        om = unit(rng, 1000)
        a, b = molecular_post_collision(w, ws, om)
        assert np.allclose(a + b, w + ws, atol=1e-13)
        assert np.allclose((a * a).sum(1) + (b * b).sum(1), (w * w).sum(1) + (ws * ws).sum(1), atol=1e-12)

    def test_elastic_map_involution_momentum_energy(self, rng):
        p = ScalingParams(0.3, 0.02)
        v = 3 * rng.standard_normal((1000, 3))
        w = rng.standard_normal((1000, 3))
        om = unit(rng, 1000)
        v2, w2 = elastic_post_collision(v, w, om, p)
        v3, w3 = elastic_post_collision(v2, w2, om, p)
        assert np.abs(v3 - v).max() < 1e-12 and np.abs(w3 - w).max() < 1e-12
        # particle mass 1 at velocity eps v, gas mass eta at velocity w
        assert np.allclose(p.epsilon * v2 + p.eta * w2, p.epsilon * v + p.eta * w, atol=1e-14)
        e0 = p.epsilon**2 * (v * v).sum(1) + p.eta * (w * w).sum(1)
        e1 = p.epsilon**2 * (v2 * v2).sum(1) + p.eta * (w2 * w2).sum(1)
        assert np.allclose(e1, e0, rtol=1e-12)

    def test_elastic_map_undefined_at_limit(self):
        with pytest.raises(ContractError):
            elastic_post_collision([1, 0, 0], [0, 0, 0], [0, 0, 1], ScalingParams.limit())

    def test_non_unit_omega_rejected(self):
        with pytest.raises(ContractError, match="unit"):
            elastic_post_collision([1, 0, 0], [0, 0, 0], [0, 0, 2], ScalingParams(0.1, 0.1))


class TestInelasticDensities:
    def test_P_is_a_density_with_known_mean(self):
        lam, n = 1.7, np.array([0.0, 0.6, 0.8])
        # rule aligned with the kink of (xi.n)_+: Hermite across n, Legendre along it
        t, wt = np.polynomial.hermite_e.hermegauss(30)
        s, ws = np.polynomial.legendre.leggauss(40)
        s, ws = 4.0 * (s + 1) / lam, 4.0 * ws / lam
        a, b, c = np.meshgrid(t / lam, t / lam, s, indexing="ij")
        wts = (np.multiply.outer(np.outer(wt, wt), ws) * np.exp(0.5 * (lam * a) ** 2 + 0.5 * (lam * b) ** 2)
               / lam**2).ravel()
        frame = rotation_frame(n)
        pts = np.stack([a.ravel(), b.ravel(), c.ravel()], 1) @ frame
        f = eval_P(lam, pts, n) * wts
        assert f.sum() == pytest.approx(1.0, abs=1e-12)
        assert f @ pts == pytest.approx(SQ2PI / (2 * lam) * n, abs=1e-12)

    def test_sample_flux_matches_P_moments(self, rng):
        lam = 1.3
        n = np.tile([0.0, 0.0, 1.0], (400_000, 1))
        xi = sample_flux(n, lam, rng)
        se = xi.std(0) / np.sqrt(len(xi))
        assert np.all(np.abs(xi.mean(0) - [0, 0, SQ2PI / (2 * lam)]) < 4 * se)
        assert np.mean(xi[:, 2] ** 2) == pytest.approx(2 / lam**2, rel=1e-2)

    @pytest.mark.parametrize("side", ["gp", "pg"])
    def test_kernel_mass_equals_relative_speed(self, side):
        p = ScalingParams(0.5, 0.4, 1.0)
        V, W = np.array([1.0, -0.5, 0.3]), np.array([0.2, 0.1, -0.4])
        z = p.epsilon * V - W
        U = (p.epsilon * V + p.eta * W) / (1 + p.eta)
        if side == "gp":
            g, dv = grid3(5.0, 61)
            f = eval_K_gp(g + U, V, W, p)
        else:
            g, dv = grid3(5.0 * p.eta / p.epsilon, 61)
            f = eval_K_pg(g + U / p.epsilon, V, W, p)
        assert f.sum() * dv == pytest.approx(np.linalg.norm(z), rel=1e-4)

    def test_sphere_rule_option_agrees_with_exact(self):
        p = ScalingParams(0.5, 0.3)
        w = np.array([[0.3, 0.2, 0.1], [1.0, -1.0, 0.5]])
        V, W = np.array([1.0, 0.0, 0.0]), np.zeros(3)
        exact = eval_K_gp(w, V, W, p)
        approx = eval_K_gp(w, V, W, p, sphere_rule=SphereRule.product(80))
        assert np.allclose(exact, approx, rtol=1e-3)

    def test_K00_is_limit_of_K_gp(self):
        w = np.array([[0.5, -0.2, 0.7]])
        W = np.array([0.1, 0.3, -0.2])
        lim = eval_K00(w, W)
        near = eval_K_gp(w, np.array([1.0, 0.0, 0.0]), W, ScalingParams(1e-7, 1e-7))
        assert near == pytest.approx(lim, rel=1e-5)

    def test_K_pg_singular_at_limit(self):
        with pytest.raises(ContractError):
            eval_K_pg([0, 0, 0], [1, 0, 0], [0, 0, 0], ScalingParams.limit())


def _mc_moments(kernel, V, W, p, rng, n=400_000):
    """Moments from the joint scattering sampler, with rate q."""
    v2, w2 = sample_pg_scattering(kernel, np.tile(V, (n, 1)), np.tile(W, (n, 1)), p, rng)
    q = float(kernel.q(np.linalg.norm(p.epsilon * V - W)))
    return q, q * (w2 - W), q * (v2 - V)


class TestMoments:
    @pytest.mark.parametrize("kernel", [InelasticPGKernel(1.3), ElasticPGKernel.hard_sphere_pg()],
                             ids=["inelastic", "elastic"])
    def test_first_moments_match_sampler(self, kernel, rng):
        p = ScalingParams(0.4, 0.05, getattr(kernel, "beta", 1.0))
        V, W = np.array([1.5, -0.5, 0.8]), np.array([0.3, 0.2, -0.6])
        q, dw, dv = _mc_moments(kernel, V, W, p, rng)
        qg, m1g, m2g = kernel.gp_moments(V, W, p)
        qp, m1p, m2p = kernel.pg_moments(V, W, p)
        assert qg == pytest.approx(q) and qp == pytest.approx(q)
        for est, cf in ((dw, m1g), (dv, m1p)):
            se = est.std(0) / np.sqrt(len(est))
            assert np.all(np.abs(est.mean(0) - cf) <= 4 * se + 1e-14)
        for est, cf in ((dw, m2g), (dv, m2p)):
            outer = np.einsum("ni,nj->nij", est, est) / q
            se = outer.std(0) / np.sqrt(len(est))
            assert np.all(np.abs(outer.mean(0) - cf) <= 4 * se + 1e-14)

    def test_inelastic_momentum_closed_form(self):
        k = InelasticPGKernel(0.8)
        p = ScalingParams(0.2, 0.01, 0.8)
        V, W = np.array([3.0, 1.0, 0.0]), np.array([0.0, 0.5, 0.5])
        z = p.epsilon * V - W
        _, m1p, _ = k.pg_moments(V, W, p)
        target = -(p.eta / (1 + p.eta)) * z * (np.linalg.norm(z) + SQ2PI / (3 * 0.8))
        assert p.epsilon * m1p == pytest.approx(target, rel=1e-13)

    def test_elastic_moments_against_sphere_quadrature(self):
        def sigma(r, mu):
            return (1 + mu**2) * np.ones_like(r) / (4 * np.pi)

        k = ElasticPGKernel(sigma, b_star=2.0, beta_star=1.0, name="aniso")
        p = ScalingParams(0.3, 0.1)
        V, W = np.array([1.0, 2.0, -1.0]), np.array([0.4, -0.3, 0.2])
        rule = SphereRule.product(40)
        om = rule.nodes
        Vb, Wb = np.broadcast_to(V, om.shape), np.broadcast_to(W, om.shape)
        b = k.b(Vb * p.epsilon - Wb, om) * rule.weights
        v2, w2 = elastic_post_collision(Vb, Wb, om, p)
        q, m1, m2 = k.gp_moments(V, W, p)
        assert q == pytest.approx(b.sum(), rel=1e-12)
        assert m1 == pytest.approx(b @ (w2 - W), rel=1e-10, abs=1e-13)
        assert m2 == pytest.approx(np.einsum("n,ni,nj->ij", b, w2 - W, w2 - W), rel=1e-10, abs=1e-13)
        _, m1p, _ = k.pg_moments(V, W, p)
        assert m1p == pytest.approx(b @ (v2 - V), rel=1e-10, abs=1e-13)

    def test_mixed_momentum_conserved_per_sample(self, rng):
        k = InelasticPGKernel()
        p = ScalingParams(0.2, 0.03)
        v, w = 2 * rng.standard_normal((5000, 3)), rng.standard_normal((5000, 3))
        v2, w2 = sample_pg_scattering(k, v, w, p, rng)
        assert np.abs(p.epsilon * (v2 - v) + p.eta * (w2 - w)).max() < 1e-13


class TestPresets:
    def test_molecular_presets(self):
        m = molecular_kernel("maxwell", 2.0)
        assert m.maxwell and m(np.ones(3), np.array([0, 0, 1.0])) == 2.0
        hs = MolecularKernel.hard_sphere()
        assert hs(np.array([0.0, 3.0, 4.0]), np.array([0.0, 0.0, 1.0])) == pytest.approx(4.0)
        with pytest.raises(ContractError, match="unknown molecular"):
            molecular_kernel("bogus")

    def test_pg_presets(self):
        assert isinstance(pg_kernel("charles_inelastic", 2.0), InelasticPGKernel)
        assert pg_kernel("charles_inelastic", 2.0).beta == 2.0
        with pytest.raises(ContractError, match="unknown particle-gas"):
            pg_kernel("nope")
        with pytest.raises(ContractError):
            InelasticPGKernel(0.0)

    def test_hard_sphere_pg_rates(self):
        k = ElasticPGKernel.hard_sphere_pg()
        r = np.array([0.5, 2.0])
        assert k.q(r) == pytest.approx(r)
        assert k.Q(r) == pytest.approx(2 * r / 3)

    def test_csv_table(self, tmp_path):
        path = tmp_path / "sigma.csv"
        rows = ["r,mu,sigma"] + [f"{r},{mu},{0.1 * (1 + mu)}" for r in (0.0, 5.0, 10.0) for mu in (0.0, 0.5, 1.0)]
        path.write_text("\n".join(rows) + "\n")
        k = pg_kernel(f"csv:{path}")
        # int_0^1 0.1 (1 + mu) dmu = 0.15
        assert k.q(np.array([2.0])) == pytest.approx(4 * np.pi * 2.0 * 0.15, rel=1e-10)
        bad = tmp_path / "bad.csv"
        bad.write_text("r,sigma\n1,2\n")
        with pytest.raises(ContractError, match="header"):
            ElasticPGKernel.from_csv(bad)

    def test_rejection_cap(self, rng):
        k = ElasticPGKernel(lambda r, mu: np.zeros(np.broadcast_shapes(np.shape(r), np.shape(mu))),
                            b_star=1.0, beta_star=1.0, sigma_max=lambda r: np.ones(np.shape(r)))
        with pytest.raises(SamplingError):
            k.sample_omega(np.array([[1.0, 0.0, 0.0]]), rng, max_rounds=5)

    def test_sample_omega_distribution(self, rng):
        def sigma(r, mu):
            return mu**2 * np.ones_like(r)

        k = ElasticPGKernel(sigma, b_star=1.0, beta_star=1.0)
        om = k.sample_omega(np.tile([0.0, 0.0, 2.0], (200_000, 1)), rng)
        # density proportional to mu^2 on [0, 1] in |cos|: E[mu^2] = 3/5
        assert np.mean(om[:, 2] ** 2) == pytest.approx(0.6, abs=5e-3)
