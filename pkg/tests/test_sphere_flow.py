import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warpflow import space as S
from warpflow.errors import ConstructionError, DiscretizationError, GeometryError, StepError
from warpflow.sphere_flow import (
    CurveDiagnostics,
    FlowOptions,
    PsiMinimalConvergence,
    RoundPointCollapse,
    SingularityOptions,
    SphereFlow,
    SphericalCurve,
    check_embedded,
    curvature_density_vector,
    curve_diagnostics,
    detect_singularity,
    enclosed_area,
    flow_step,
    fourier_nodes,
    make_fourier_curve,
    make_latitude_circle,
    reparametrize_arclength,
    theta_for_fraction,
    weighted_length,
)

from conftest import dens, random_rotation, z_rotation

HALF_PI = math.pi / 2
Z2 = dens(angular=S.z_squared(1.0))


def polar_angles(curve):
    return np.arccos(np.clip(curve.nodes[:, 2], -1, 1))


class TestCurve:
    def test_latitude_nodes(self):
        c = make_latitude_circle(math.pi / 3, 64, rho=2.0)
        assert np.allclose(np.linalg.norm(c.nodes, axis=1), 1.0, atol=1e-15)
        assert np.allclose(c.nodes[:, 2], 0.5)
        assert c.sphere_radius == 2.0
        assert c.orientation == 1

    def test_validation(self):
        with pytest.raises(ConstructionError, match="N >= 16"):
            make_latitude_circle(1.0, 8)
        p = make_latitude_circle(1.0, 32).nodes.copy()
        p[3] *= 1.001
        with pytest.raises(ConstructionError, match="unit"):
            SphericalCurve(p)
        p = make_latitude_circle(1.0, 32).nodes.copy()
        p[4] = p[3]
        with pytest.raises(ConstructionError):
            SphericalCurve(p)

    def test_fraction_roundtrip(self):
        for f in (0.01, 0.2, 0.5):
            theta = theta_for_fraction(f)
            assert (1 - math.cos(theta)) / 2 == pytest.approx(f, rel=1e-14)

    def test_snapshot_roundtrip(self, tmp_path):
        c = make_fourier_curve(1.0, {2: (0.05, 0.0), 3: (0.0, 0.02)}, 40, rho=1.5)
        c.save(tmp_path / "c.txt")
        lines = (tmp_path / "c.txt").read_text().splitlines()
        assert lines[0] == "40 1.5"
        assert len(lines) == 41
        back = SphericalCurve.load(tmp_path / "c.txt")
        assert np.array_equal(back.nodes, c.nodes)
        assert back.sphere_radius == c.sphere_radius

    def test_zero_coefficients_give_latitude(self):
        a = make_fourier_curve(1.1, {}, 50)
        b = make_latitude_circle(1.1, 50)
        assert np.array_equal(a.nodes, b.nodes)


class TestEmbedded:
    def test_latitude(self):
        assert check_embedded(make_latitude_circle(math.pi / 3, 128))

    def test_figure_eight(self):
        assert not check_embedded(fourier_nodes(math.pi / 3, {2: (2.0, 0.0)}, 128))
        with pytest.raises(ConstructionError):
            make_fourier_curve(math.pi / 3, {2: (2.0, 0.0)}, 128)

    def test_small_perturbation(self):
        assert check_embedded(make_fourier_curve(math.pi / 3, {2: (0.05, 0.0)}, 128))

    def test_two_node_perturbation(self):
        p = make_latitude_circle(math.pi / 3, 64).nodes.copy()
        for i, dz in ((10, 0.02), (40, -0.03)):
            p[i, 2] += dz
        p /= np.linalg.norm(p, axis=1, keepdims=True)
        assert check_embedded(p)

    def test_crossing_polygon(self):
        # swap two distant nodes: edges now cross the rest of the curve
        p = make_latitude_circle(math.pi / 3, 64).nodes.copy()
        p[[5, 30]] = p[[30, 5]]
        assert not check_embedded(p)

    def test_area_requires_embedding(self):
        p = fourier_nodes(math.pi / 3, {2: (2.0, 0.0)}, 128)
        curve = SphericalCurve(p, 1.0, 1)
        with pytest.raises(GeometryError):
            enclosed_area(curve)


class TestCurvature:
    def test_great_circle(self):
        c = make_latitude_circle(HALF_PI, 256)
        v = curvature_density_vector(c)
        assert np.abs(v).max() <= 10 * 256 ** -2

    def test_latitude_magnitude(self):
        c = make_latitude_circle(math.pi / 3, 512)
        k = np.linalg.norm(curvature_density_vector(c), axis=1)
        assert np.allclose(k, 1 / math.tan(math.pi / 3), atol=1e-3)

    def test_points_into_cap(self):
        c = make_latitude_circle(math.pi / 3, 64)
        v = curvature_density_vector(c)
        assert np.all(v[:, 2] > 0)

    def test_scales_with_radius(self):
        c = make_latitude_circle(math.pi / 3, 64)
        v1 = curvature_density_vector(c)
        v3 = curvature_density_vector(c.with_radius(3.0))
        assert np.allclose(v3, v1 / 3.0, rtol=1e-14, atol=1e-16)

    def test_equator_z_squared(self):
        c = make_latitude_circle(HALF_PI, 128)
        assert np.abs(curvature_density_vector(c, Z2)).max() <= 1e-10

    def test_degenerate_spacing(self):
        p = make_latitude_circle(1.0, 32).nodes.copy()
        q = p[3] + 5e-11 * (p[4] - p[3]) / np.linalg.norm(p[4] - p[3])
        p[4] = q / np.linalg.norm(q)
        with pytest.raises((DiscretizationError, ConstructionError)):
            curvature_density_vector(SphericalCurve(p))

    @settings(max_examples=25, deadline=None)
    @given(theta=st.floats(0.3, 1.5), a2=st.floats(-0.05, 0.05), b3=st.floats(-0.03, 0.03),
           rho=st.floats(0.2, 5.0))
    def test_tangent(self, theta, a2, b3, rho):
        c = make_fourier_curve(theta, {2: (a2, 0.0), 3: (0.0, b3)}, 64, rho)
        for d in (None, Z2):
            v = curvature_density_vector(c, d)
            assert np.abs(np.sum(v * c.nodes, axis=1)).max() <= 1e-10


class TestFlowStep:
    def test_great_circle_fixed(self):
        c = make_latitude_circle(HALF_PI, 128)
        out = flow_step(c, None, 1e-4)
        assert np.abs(out.nodes - c.nodes).max() <= 1e-14

    def test_latitude_shrinks_at_cot_rate(self):
        c = make_latitude_circle(math.pi / 3, 128)
        out = flow_step(c, None, 1e-5)
        dtheta = polar_angles(c) - polar_angles(out)
        # exact shrinking latitude: theta' = -cot theta
        assert np.allclose(dtheta, 1e-5 / math.tan(math.pi / 3), rtol=2e-3)
        assert np.ptp(dtheta) <= 1e-14

    def test_equator_z_squared_fixed(self):
        c = make_latitude_circle(HALF_PI, 128)
        out = flow_step(c, Z2, 1e-4)
        assert np.abs(out.nodes - c.nodes).max() <= 1e-12

    def test_cfl_violation(self):
        c = make_latitude_circle(math.pi / 3, 128)
        with pytest.raises(StepError) as info:
            flow_step(c, None, 1.0)
        assert info.value.bound == pytest.approx(0.25 * (2 * math.sin(math.pi / 128) * math.sin(math.pi / 3) * 1) ** 2, rel=1e-2)

    def test_preserves_count_and_orientation(self):
        c = make_fourier_curve(1.0, {2: (0.05, 0.0)}, 64)
        out = flow_step(c, Z2, 1e-5)
        assert out.N == c.N and out.orientation == c.orientation

    @settings(max_examples=15, deadline=None)
    @given(angle=st.floats(0, 2 * math.pi), theta=st.floats(0.5, 1.4), a2=st.floats(-0.05, 0.05))
    def test_z_rotation_commutes(self, angle, theta, a2):
        c = make_fourier_curve(theta, {2: (a2, 0.0), 3: (0.0, 0.02)}, 64)
        R = z_rotation(angle)
        a = flow_step(c, Z2, 1e-5).rotated(R)
        b = flow_step(c.rotated(R), Z2, 1e-5)
        assert np.abs(a.nodes - b.nodes).max() <= 1e-12


class TestReparametrize:
    def test_uniform_fixed_point(self):
        c = make_latitude_circle(math.pi / 3, 128)
        out = reparametrize_arclength(c)
        assert np.abs(out.nodes - c.nodes).max() <= 1e-12

    def test_clustered_nodes_equalized(self):
        alpha = np.linspace(0, 2 * math.pi, 96, endpoint=False)
        alpha = alpha + 0.35 * np.sin(alpha)
        theta = math.pi / 3
        p = np.stack([math.sin(theta) * np.cos(alpha), math.sin(theta) * np.sin(alpha),
                      np.full_like(alpha, math.cos(theta))], axis=1)
        out = reparametrize_arclength(SphericalCurve(p))
        d = out.nodes - np.roll(out.nodes, -1, axis=0)
        gaps = 2 * np.arcsin(np.linalg.norm(d, axis=1) / 2)
        assert gaps.max() / gaps.min() - 1 <= 1e-8

    def test_length_preserved(self):
        c = make_fourier_curve(math.pi / 3, {2: (0.05, 0.0), 3: (0.0, 0.03)}, 128)
        out = reparametrize_arclength(c)
        assert abs(weighted_length(out) / weighted_length(c) - 1) <= 1e-6

    def test_first_node_kept(self):
        c = make_fourier_curve(1.0, {2: (0.05, 0.0)}, 64)
        assert np.array_equal(reparametrize_arclength(c).nodes[0], c.nodes[0])


class TestArea:
    def test_hemisphere(self):
        c = make_latitude_circle(HALF_PI, 256, rho=1.7)
        assert enclosed_area(c) == pytest.approx(2 * math.pi * 1.7 ** 2, rel=1e-12)

    def test_cap(self):
        c = make_latitude_circle(math.pi / 3, 512)
        assert enclosed_area(c) == pytest.approx(math.pi, abs=2e-3)

    def test_tiny_cap(self):
        c = make_latitude_circle(0.05, 512)
        assert enclosed_area(c) == pytest.approx(math.pi * 0.05 ** 2, rel=0.05)

    def test_side_choice_independent_of_traversal(self):
        c = make_latitude_circle(math.pi / 4, 128)
        rev = SphericalCurve(c.nodes[::-1].copy())
        assert rev.orientation == -c.orientation
        assert enclosed_area(rev) == pytest.approx(enclosed_area(c), rel=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2 ** 16))
    def test_rotation_invariant(self, seed):
        c = make_fourier_curve(0.9, {2: (0.04, 0.0), 3: (0.0, 0.02)}, 96)
        R = random_rotation(np.random.default_rng(seed))
        assert enclosed_area(c.rotated(R)) == pytest.approx(enclosed_area(c), rel=1e-10)


class TestWeightedLength:
    def test_great_circle(self):
        c = make_latitude_circle(HALF_PI, 512)
        assert weighted_length(c) == pytest.approx(2 * math.pi, rel=1e-4)

    def test_constant_density(self):
        c = make_latitude_circle(HALF_PI, 512)
        d = dens(angular=S.constant_psi(0.3))
        assert weighted_length(c, d) == pytest.approx(weighted_length(c) * math.exp(0.3), rel=1e-14)

    def test_equator_z_squared(self):
        c = make_latitude_circle(HALF_PI, 512)
        assert weighted_length(c, Z2) == pytest.approx(weighted_length(c), rel=1e-14)


def _diag(length, ratio=1.0, k=1.0, kpsi=1.0, rho=1.0):
    return CurveDiagnostics(length=length, weighted_length=length, max_abs_k=k,
                            max_abs_k_psi=kpsi, enclosed_area=0.1, area_fraction=0.1,
                            isoperimetric_ratio=ratio, sphere_radius=rho)


class TestDetectSingularity:
    def test_round_point(self):
        hist = [_diag(1.0 / (i + 1)) for i in range(49)] + [_diag(1e-4, ratio=1.001, k=1e4)]
        found = detect_singularity(hist)
        assert isinstance(found, RoundPointCollapse)

    def test_fresh_great_circle(self):
        c = make_latitude_circle(HALF_PI, 128)
        assert detect_singularity([curve_diagnostics(c)]) is None

    def test_psi_minimal_needs_full_window(self):
        c = make_latitude_circle(HALF_PI, 128)
        d = curve_diagnostics(c, Z2)
        assert detect_singularity([d] * 49) is None
        assert isinstance(detect_singularity([d] * 50), PsiMinimalConvergence)

    def test_simulated_collapse(self):
        c = make_latitude_circle(0.4, 64)
        fl = SphereFlow(c, None, FlowOptions(singularity=SingularityOptions(len_eps=0.02)))
        fl.advance_to(1.0)
        assert fl.status == "round_point"
        assert isinstance(fl.singularity, RoundPointCollapse)
        assert np.allclose(fl.singularity.location, [0, 0, 1], atol=1e-6)
        # cap of polar angle theta: A(tt) = 2 pi - (2 pi - A0) e^tt hits zero at -ln cos theta
        assert fl.singular_at == pytest.approx(-math.log(math.cos(0.4)), rel=1e-2)


class TestSphereFlow:
    def test_equator_psi_minimal_freezes(self):
        c = make_latitude_circle(HALF_PI, 64)
        fl = SphereFlow(c, Z2)
        fl.advance_to(5.0)
        assert fl.status == "psi_minimal"
        assert fl.ttilde == 5.0
        assert np.abs(fl.curve.nodes - c.nodes).max() <= 1e-12

    def test_monotone_weighted_length(self):
        c = make_fourier_curve(1.0, {2: (0.05, 0.0), 3: (0.0, 0.03)}, 96)
        for d in (None, Z2):
            fl = SphereFlow(c, d)
            fl.advance_to(0.05)
            assert fl.monotone_violations == 0
            assert fl.embedding_failures == []
            lengths = [x.weighted_length for x in fl.series]
            assert all(b <= a * (1 + 1e-10) for a, b in zip(lengths, lengths[1:]))

    def test_region_flip_logged(self):
        # psi = c z pushes a cap just above the equator southwards across it,
        # after which the other side is the smaller one
        c0 = 2.0

        def psi(p):
            return c0 * np.asarray(p)[..., 2]

        def grad(p):
            p = np.asarray(p)
            g = np.zeros_like(p)
            g[..., 2] = c0
            return g - np.sum(g * p, axis=-1, keepdims=True) * p

        d = dens(angular=S.AngularDensity("linear_z", psi, grad))
        fl = SphereFlow(make_latitude_circle(1.5, 64), d)
        fl.advance_to(0.3)
        assert [e[0] for e in fl.events] == ["region_side_flip"]
        assert all(0 < x.area_fraction <= 0.5 + 1e-9 for x in fl.series)
        assert fl.monotone_violations == 0

    def test_budget_status(self):
        c = make_latitude_circle(1.0, 64)
        fl = SphereFlow(c, None, FlowOptions(max_steps=5))
        assert fl.advance_to(1.0) == "budget"
        assert fl.steps == 5
