import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warpflow import space as S
from warpflow.errors import ConfigurationError, DomainError

from conftest import dens, rel

PRESET_SPACES = {
    "euclidean": S.euclidean,
    "hyperbolic": S.hyperbolic,
    "power_half": lambda: S.power(0.5),
    "power_two": lambda: S.power(2.0, C=0.7),
}
DENSITIES = {
    "none": lambda: dens(),
    "gaussian": lambda: dens(S.gaussian(1.3)),
    "log_power": lambda: dens(S.log_power(-0.5, -1.0, 0.2)),
}


class TestEvalB:
    def test_gaussian_root(self, flat, gauss1):
        assert S.eval_B(flat, gauss1, 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_gaussian_at_two(self, flat, gauss1):
        assert S.eval_B(flat, gauss1, 2.0) == pytest.approx(-1.5, abs=1e-15)

    def test_log_density_matches_minus_one_over_r(self, flat):
        d = dens(S.log_power(a=-2.0))
        assert S.eval_B(flat, d, 3.0) == pytest.approx(-1.0 / 3.0, rel=1e-14)

    def test_floor_is_reported(self, flat, gauss1):
        with pytest.raises(DomainError, match="floor"):
            S.eval_B(flat, gauss1, 0.0)

    def test_tabulated_floor(self):
        r = np.linspace(0.5, 5.0, 40)
        sp = S.tabulated(r, r)
        assert sp.domain_floor == 0.5
        with pytest.raises(DomainError):
            S.eval_B(sp, dens(), 0.4)


class TestSphereArea:
    def test_unit_sphere(self, flat):
        assert S.sphere_area(flat, 1.0) == pytest.approx(4 * math.pi, rel=1e-15)

    def test_sqrt_tail(self):
        assert S.sphere_area(S.power(0.5), 4.0) == pytest.approx(16 * math.pi, rel=1e-14)

    def test_hyperbolic(self):
        # 4 pi sinh(1)^2 = 17.3554; the often quoted 17.365 is a rounding slip
        assert S.sphere_area(S.hyperbolic(), 1.0) == pytest.approx(17.355387, rel=1e-6)

    def test_area_vs_circle_length(self):
        for sp in (S.euclidean(), S.hyperbolic(), S.power(0.5)):
            for r in (0.3, 1.7, 6.0):
                L = S.weighted_circle_length(sp, dens(), r)
                assert S.sphere_area(sp, r) == pytest.approx(L * L / math.pi, rel=1e-12)


class TestWeightedCircleLength:
    def test_plain_circle(self, flat):
        assert S.weighted_circle_length(flat, dens(), 1.0) == pytest.approx(2 * math.pi)

    def test_gaussian(self, flat, gauss1):
        assert S.weighted_circle_length(flat, gauss1, 1.0) == pytest.approx(3.810945, rel=1e-6)

    def test_log_density(self, flat):
        d = dens(S.log_power(a=-2.0))
        assert S.weighted_circle_length(flat, d, 2.0) == pytest.approx(math.pi, rel=1e-14)

    @pytest.mark.parametrize("sname", sorted(PRESET_SPACES))
    @pytest.mark.parametrize("dname", sorted(DENSITIES))
    def test_log_derivative_is_B(self, sname, dname):
        sp, d = PRESET_SPACES[sname](), DENSITIES[dname]()
        rng = np.random.default_rng(7)
        h = 1e-5
        for r in rng.uniform(0.2, 8.0, 100):
            fd = (math.log(S.weighted_circle_length(sp, d, r + h))
                  - math.log(S.weighted_circle_length(sp, d, r - h))) / (2 * h)
            B = S.eval_B(sp, d, r)
            assert abs(fd - B) <= 1e-6 * max(abs(B), 1.0)


class TestFindRoots:
    def test_gaussian_mu2(self, flat):
        roots = S.find_B_roots(flat, dens(S.gaussian(2.0)), 0.1, 5.0, tol=1e-12)
        assert len(roots) == 1 and roots[0] == pytest.approx(0.5, abs=1e-12)

    def test_no_density(self, flat):
        assert S.find_B_roots(flat, dens(), 0.1, 5.0) == []

    def test_log_density(self, flat):
        assert S.find_B_roots(flat, dens(S.log_power(a=-2.0)), 0.1, 5.0) == []

    @settings(max_examples=30, deadline=None)
    @given(mu=st.floats(0.3, 3.0))
    def test_sign_change_at_root(self, mu):
        sp, d = S.euclidean(), dens(S.gaussian(mu))
        tol = 1e-12
        roots = S.find_B_roots(sp, d, 0.05, 10.0, tol=tol)
        assert len(roots) == 1
        r = roots[0]
        assert abs(S.eval_B(sp, d, r)) <= tol
        delta = 10 * tol * max(1.0, r) * 1e3
        assert np.sign(S.eval_B(sp, d, r - delta)) != np.sign(S.eval_B(sp, d, r + delta))


class TestPresets:
    @pytest.mark.parametrize("sname", ["euclidean", "hyperbolic", "power_half", "power_two"])
    def test_extends_to_pole(self, sname):
        sp = PRESET_SPACES[sname]()
        assert sp.extends_to_pole
        assert sp.w(1e-6) / 1e-6 == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("sname", sorted(PRESET_SPACES))
    def test_w_prime_matches_difference(self, sname):
        sp = PRESET_SPACES[sname]()
        for r in np.linspace(0.15, 7.0, 25):
            fd = (sp.w(r + 1e-6) - sp.w(r - 1e-6)) / 2e-6
            assert sp.w_prime(r) == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_power_tail_is_exact(self):
        sp = S.power(0.5, C=1.0)
        assert sp.w(4.0) == pytest.approx(2.0, rel=1e-15)

    @pytest.mark.parametrize("dname", sorted(DENSITIES))
    def test_phi_prime_matches_difference(self, dname):
        d = DENSITIES[dname]()
        rng = np.random.default_rng(3)
        for r in rng.uniform(0.1, 10.0, 10):
            h = 1e-6 * r
            fd = (d.phi(r + h) - d.phi(r - h)) / (2 * h)
            assert d.phi_prime(r) == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_extension_flags(self):
        assert dens(S.gaussian(1.0)).phi_extends_C1_to_zero
        assert dens().phi_extends_C1_to_zero
        assert not dens(S.log_power(a=-2.0)).phi_extends_C1_to_zero

    def test_tabulated_matches_analytic(self):
        r = np.linspace(0.2, 10.0, 400)
        sp = S.tabulated(r, np.sinh(r), tail="sinh")
        for x in (0.7, 3.3, 8.1):
            assert sp.w(x) == pytest.approx(math.sinh(x), rel=1e-6)
            assert sp.w_prime(x) == pytest.approx(math.cosh(x), rel=1e-4)
        # beyond the last knot the declared tail takes over
        assert sp.w(20.0) == pytest.approx(math.sinh(20.0), rel=1e-3)


class TestAngularDensity:
    @pytest.mark.parametrize("psi", [S.zero_psi(), S.constant_psi(0.4), S.z_squared(1.7)])
    def test_gradient_is_tangent(self, psi):
        rng = np.random.default_rng(11)
        p = rng.normal(size=(200, 3))
        p /= np.linalg.norm(p, axis=1, keepdims=True)
        g = psi.psi_grad(p)
        radial = np.abs(np.sum(g * p, axis=1))
        assert np.all(radial <= 1e-12 * np.linalg.norm(g, axis=1) + 1e-15)

    def test_z_squared_gradient_against_difference(self):
        psi = S.z_squared(1.0)
        p = np.array([[0.6, 0.0, 0.8]])
        g = psi.psi_grad(p)[0]
        # move along the meridian towards the pole
        t = np.array([-0.8, 0.0, 0.6])
        h = 1e-6
        q = np.array([np.cos(h) * p[0] + np.sin(h) * t, np.cos(h) * p[0] - np.sin(h) * t])
        fd = (psi.psi(q[:1])[0] - psi.psi(q[1:])[0]) / (2 * h)
        assert float(g @ t) == pytest.approx(fd, rel=1e-7)

    def test_table_reproduces_z_squared(self):
        theta = np.linspace(0, math.pi, 181)
        lon = np.linspace(0, 2 * math.pi, 73)
        values = np.cos(theta)[:, None] ** 2 * np.ones_like(lon)[None, :]
        psi = S.psi_table(theta, lon, values)
        p = np.array([[0.6, 0.0, 0.8], [0.0, 1.0, 0.0]])
        assert psi.psi(p) == pytest.approx([0.64, 0.0], abs=1e-3)
        g = psi.psi_grad(p)
        assert np.all(np.abs(np.sum(g * p, axis=1)) <= 1e-12 * np.linalg.norm(g, axis=1) + 1e-15)


class TestConformalType:
    @pytest.mark.parametrize("mode", ["numeric-tail", "declared-asymptotics"])
    def test_sqrt_tail_parabolic(self, mode):
        assert S.classify_conformal_type(S.power(0.5), 1.0, mode) == S.ConformalType.PARABOLIC

    @pytest.mark.parametrize("mode", ["numeric-tail", "declared-asymptotics"])
    def test_hyperbolic_space(self, mode):
        assert S.classify_conformal_type(S.hyperbolic(), 1.0, mode) == S.ConformalType.HYPERBOLIC

    def test_euclidean(self):
        assert S.classify_conformal_type(S.euclidean(), 1.0) == S.ConformalType.HYPERBOLIC
        assert (S.classify_conformal_type(S.euclidean(), 1.0, "declared-asymptotics")
                == S.ConformalType.HYPERBOLIC)

    def test_undeclared_table_needs_numeric_mode(self):
        r = np.linspace(0.5, 5.0, 20)
        with pytest.raises(ConfigurationError):
            S.classify_conformal_type(S.tabulated(r, r), 1.0, "declared-asymptotics")
