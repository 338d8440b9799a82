import numpy as np
import pytest

from aerokin.quadrature import (SphereRule, maxwellian_rule, positive_part_sphere_integral, radial_maxwell_integral,
                                rotation_frame)


@pytest.mark.parametrize("rule", [SphereRule.lebedev(26), SphereRule.product(6), SphereRule.for_degree(8)])
def test_sphere_rules_integrate_low_moments(rule):
    n, w = rule.nodes, rule.weights
    assert w.sum() == pytest.approx(4 * np.pi, rel=1e-12)
    assert (w * n[:, 0] ** 2).sum() == pytest.approx(4 * np.pi / 3, rel=1e-12)
    assert (w * n[:, 2] ** 4).sum() == pytest.approx(4 * np.pi / 5, rel=1e-12)


def test_unknown_lebedev_size():
    with pytest.raises(ValueError, match="Lebedev"):
        SphereRule.lebedev(27)


def test_positive_part_integral_matches_dense_quadrature(rng):
    a, b = rng.standard_normal((2, 5, 3))
    fine = SphereRule.product(200, 400)
    num = (np.maximum(a @ fine.nodes.T, 0) * np.maximum(b @ fine.nodes.T, 0)) @ fine.weights
    assert np.allclose(positive_part_sphere_integral(a, b), num, rtol=1e-4)
    # parallel vectors: int (n.a)_+^2 = (2/3) pi |a|^2
    assert positive_part_sphere_integral(a[0], a[0]) == pytest.approx(2 * np.pi / 3 * (a[0] @ a[0]))


def test_maxwellian_rule_gaussian_moments():
    w, wt = maxwellian_rule(4)
    sq = np.sum(w * w, axis=1)
    assert wt.sum() == pytest.approx(1.0)
    assert wt @ sq == pytest.approx(3.0)
    assert wt @ sq**2 == pytest.approx(15.0)


def test_radial_integral_of_speed():
    # <|w|> = 2 sqrt(2/pi) for the standard Maxwellian
    assert radial_maxwell_integral(lambda r: r) == pytest.approx(2 * np.sqrt(2 / np.pi), rel=1e-13)


def test_rotation_frame_is_orthonormal(rng):
    z = rng.standard_normal((50, 3))
    z[0] = 0.0
    F = rotation_frame(z)
    assert np.allclose(F @ np.swapaxes(F, 1, 2), np.eye(3), atol=1e-14)
    assert np.allclose(F[1:, 2], z[1:] / np.linalg.norm(z[1:], axis=1, keepdims=True))
