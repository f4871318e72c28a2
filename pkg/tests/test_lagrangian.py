"""Lagrangian graphs, the angle identities, the mean curvature form, the
potential flow, and the pinching diagnostic."""

import numpy as np
import pytest

from codimflow import catalog
from codimflow.errors import UsageError
from codimflow.flow import FlowConfig, FlowState, run, step_explicit
from codimflow.geometry import Immersion, build_bundle
from codimflow.grid import ChartSpec, Domain, GridField, make_chart
from codimflow.lagrangian import (
    Potential, PotentialFlowConfig, angle_evolution_residual, lag_immersion,
    lagrangian_angle, lagrangian_angle_of_hessian, lagrangian_residual,
    ma_run, mean_curvature_form, pinching_gap,
)


def torus(n, m=2, order=2):
    return make_chart(ChartSpec(Domain.TORUS, (n,) * m, fd_order=order))


def potential(S, phi_fn=None, n=64, m=2, order=2):
    ch = torus(n, m, order)
    mesh = ch.mesh()
    phi = np.zeros(ch.shape) if phi_fn is None else phi_fn(*mesh)
    return Potential(np.asarray(S, dtype=float), GridField(ch, phi[..., None]))


class TestPotentialAndGraph:
    def test_zero_potential_flat(self):
        p = potential(np.zeros((2, 2)), n=16)
        b = build_bundle(lag_immersion(p))
        assert np.abs(b.g - np.eye(2)).max() == 0.0
        assert np.abs(b.A).max() == 0.0

    def test_identity_quadratic(self):
        p = potential(np.eye(2), n=16)
        b = build_bundle(lag_immersion(p))
        assert np.abs(b.g - 2 * np.eye(2)).max() < 1e-14

    def test_curve_metric_oracle(self):
        # m = 1, phi = eps sin x: F = (x, eps cos x), g = 1 + eps^2 sin^2 x
        eps = 0.1
        ch = torus(128, m=1, order=4)
        phi = eps * np.sin(ch.coords[0])
        p = Potential(np.zeros((1, 1)), GridField(ch, phi[:, None]))
        imm = lag_immersion(p)
        b = build_bundle(imm)
        x = ch.coords[0]
        assert np.abs(imm.values[:, 1] - eps * np.cos(x)).max() < 1e-6
        assert np.abs(b.g[:, 0, 0] - (1 + eps**2 * np.sin(x) ** 2)).max() < 1e-3

    def test_mean_zero_gauge(self):
        p = potential(np.zeros((2, 2)), lambda x, y: 1.7 + 0.1 * np.sin(x), n=16)
        assert abs(p.phi.values.mean()) < 1e-14

    def test_nonsymmetric_S_rejected(self):
        with pytest.raises(UsageError):
            potential(np.array([[0.0, 1.0], [0.0, 0.0]]), n=16)


class TestLagrangianResidual:
    def test_graph_residual_rounding_level(self):
        p = potential(np.diag([0.5, 0.8]),
                      lambda x, y: 0.1 * (np.sin(x) + np.cos(y)), n=128)
        assert lagrangian_residual(lag_immersion(p)) < 1e-10

    def test_whitney_discretization_level(self):
        imm = catalog.whitney_sphere(radius=1.0, m=2)
        assert lagrangian_residual(imm) < 1e-2

    def test_non_lagrangian_detected(self):
        imm = catalog.sphere(radius=1.0, J=24, K=48)
        padded = Immersion(imm.chart,
                           np.concatenate([imm.values,
                                           np.zeros(imm.chart.shape + (1,))], axis=-1))
        assert lagrangian_residual(padded) > 0.5

    def test_odd_ambient_rejected(self):
        with pytest.raises(UsageError):
            lagrangian_residual(catalog.sphere(J=24, K=48))


class TestLagrangianAngle:
    def test_flat_zero(self):
        alpha, defect = lagrangian_angle(potential(np.zeros((2, 2)), n=16))
        assert np.all(alpha == 0.0) and defect < 1e-14

    def test_identity_hessian(self):
        alpha, defect = lagrangian_angle(potential(np.eye(2), n=16))
        assert np.abs(alpha - np.pi / 2).max() < 1e-14
        assert defect < 1e-12

    def test_special_lagrangian_saddle(self):
        alpha, defect = lagrangian_angle(potential(np.diag([1.0, -1.0]), n=16))
        assert np.abs(alpha).max() < 1e-14

    def test_algebraic_identity_generic(self):
        p = potential(np.diag([0.3, -0.2]),
                      lambda x, y: 0.2 * np.sin(x) * np.cos(2 * y), n=64)
        _, defect = lagrangian_angle(p)
        assert defect < 1e-8

    def test_angle_range(self):
        p = potential(np.diag([5.0, 5.0]), n=16)
        alpha, _ = lagrangian_angle(p)
        assert np.all(np.abs(alpha) < np.pi)  # m pi / 2 with m = 2


class TestMeanCurvatureForm:
    @pytest.fixture(scope="class")
    def generic(self):
        p = potential(np.zeros((2, 2)),
                      lambda x, y: 0.1 * (np.sin(x) + np.cos(y)), n=128)
        imm = lag_immersion(p)
        bundle = build_bundle(imm)
        alpha, _ = lagrangian_angle(p)
        return p, imm, bundle, alpha

    def test_flat_everything_zero(self):
        p = potential(np.zeros((2, 2)), n=16)
        rep = mean_curvature_form(lag_immersion(p))
        assert rep.h_symmetry_defect == 0.0
        assert rep.dH_residual.linf == 0.0
        assert rep.pinching_gap_min == 0.0

    def test_dalpha_equals_H(self, generic):
        p, imm, bundle, alpha = generic
        rep = mean_curvature_form(imm, bundle, alpha=alpha)
        assert rep.dalpha_minus_H_residual.linf < 1e-3

    def test_dH_closed(self, generic):
        p, imm, bundle, alpha = generic
        rep = mean_curvature_form(imm, bundle)
        assert rep.dH_residual.linf < 1e-3

    def test_h_fully_symmetric(self, generic):
        p, imm, bundle, _ = generic
        rep = mean_curvature_form(imm, bundle)
        assert rep.h_symmetry_defect < 1e-3

    def test_form_matches_omega_contraction(self, generic):
        p, imm, bundle, _ = generic
        rep = mean_curvature_form(imm, bundle)
        assert rep.form_vs_vector_defect < 1e-12

    def test_residual_convergence(self):
        # d alpha = H and dH = 0 residuals drop at order >= 1.8
        outs = []
        for n in (64, 128):
            p = potential(np.zeros((2, 2)),
                          lambda x, y: 0.1 * (np.sin(x) + np.cos(y)), n=n)
            alpha, _ = lagrangian_angle(p)
            rep = mean_curvature_form(lag_immersion(p), alpha=alpha)
            outs.append(rep)
        assert np.log2(outs[0].dalpha_minus_H_residual.linf
                       / outs[1].dalpha_minus_H_residual.linf) >= 1.8
        c, f = outs[0].dH_residual.linf, outs[1].dH_residual.linf
        if c > 1e-11:
            assert np.log2(c / f) >= 1.8


class TestPinching:
    def test_flat_gap_zero(self):
        gap, defect = pinching_gap(lag_immersion(potential(np.zeros((2, 2)), n=16)))
        assert np.abs(gap).max() == 0.0 and defect < 1e-14

    def test_whitney_equality_case(self):
        imm = catalog.whitney_sphere(radius=1.0, m=2)
        b = build_bundle(imm)
        gap, defect = pinching_gap(imm, b)
        assert np.abs(gap).max() < 1e-2  # zero up to discretization
        assert defect < 1e-8             # algebraic identity at rounding

    def test_generic_graph_strictly_positive(self):
        p = potential(np.zeros((2, 2)),
                      lambda x, y: 0.1 * np.sin(x) * np.sin(y), n=64)
        imm = lag_immersion(p)
        gap, defect = pinching_gap(imm)
        b = build_bundle(imm)
        active = b.normH2 > 1e-8
        assert gap[active].min() > 0.0
        assert defect < 1e-8

    def test_gap_floor(self):
        for imm in (catalog.whitney_sphere(J=24, K=48),
                    lag_immersion(potential(np.diag([0.5, 0.8]),
                                            lambda x, y: 0.1 * np.cos(x), n=32))):
            gap, _ = pinching_gap(imm)
            assert gap.min() > -1e-2


class TestPotentialFlow:
    def test_quadratic_stationary(self):
        p0 = potential(np.diag([0.4, 0.9]), n=32)
        tr = ma_run(p0, PotentialFlowConfig(stop_t_max=0.2, record_every=10))
        assert np.array_equal(tr.final.S, p0.S)
        assert tr.records[-1].hess_phi_inf < 1e-12
        assert tr.records[-1].H_inf < 1e-10

    def test_linear_mode_heat_decay(self):
        # S = 0, phi = eps sin x1: the linearized flow is the heat equation,
        # so the amplitude decays by e^{-t} over t in [0, 1] within 5 percent
        eps = 0.01
        p0 = potential(np.zeros((2, 2)), lambda x, y: eps * np.sin(x), n=128)
        tr = ma_run(p0, PotentialFlowConfig(stop_t_max=1.0, record_every=200))
        ratio = tr.records[-1].hess_phi_inf / tr.records[0].hess_phi_inf
        assert ratio == pytest.approx(np.exp(-1.0), rel=0.05)

    def test_cohomology_class_constant(self):
        p0 = potential(np.diag([0.5, 0.8]),
                       lambda x, y: 0.1 * (np.sin(x) + np.cos(y)), n=32)
        tr = ma_run(p0, PotentialFlowConfig(stop_t_max=0.5, record_every=50,
                                            snapshot_every=1))
        for rec in tr.records:
            if rec.potential is not None:
                assert np.array_equal(rec.potential.S, p0.S)
                assert abs(rec.potential.phi.values.mean()) < 1e-13

    def test_maximum_principle(self):
        p0 = potential(np.diag([0.5, 0.8]),
                       lambda x, y: 0.1 * (np.sin(x) + np.cos(y)), n=64)
        tr = ma_run(p0, PotentialFlowConfig(stop_t_max=1.0, record_every=20))
        amax = np.array([r.alpha_max for r in tr.records])
        amin = np.array([r.alpha_min for r in tr.records])
        assert np.all(np.diff(amax) <= 1e-13)
        assert np.all(np.diff(amin) >= -1e-13)

    def test_calibration_preserved(self):
        # min cos alpha > 0 initially stays positive along the run
        p0 = potential(np.diag([0.5, 0.8]),
                       lambda x, y: 0.1 * (np.sin(x) + np.cos(y)), n=64)
        tr = ma_run(p0, PotentialFlowConfig(stop_t_max=1.0, record_every=20))
        for rec in tr.records:
            assert np.cos(rec.alpha_max) > 0 and np.cos(rec.alpha_min) > 0

    def test_angle_evolution_residual(self):
        # epsilon sin x1 mode with a manual fixed-dt triple
        eps = 0.01
        ch = torus(128)
        mesh = ch.mesh()
        p = Potential(np.zeros((2, 2)),
                      GridField(ch, (eps * np.sin(mesh[0]))[..., None]))
        dt = 1e-5
        ps = [p]
        for _ in range(2):
            alpha = lagrangian_angle_of_hessian(ps[-1].hessian())
            newphi = ps[-1].phi.values[..., 0] + dt * (alpha - alpha.mean())
            ps.append(Potential(ps[-1].S, GridField(ch, newphi[..., None])))
        rn = angle_evolution_residual(ps[0], ps[1], ps[2], 0.0, dt, 2 * dt)
        assert rn.linf < 1e-3

    def test_flat_angle_residual_zero(self):
        p = potential(np.diag([0.5, 0.8]), n=16)
        rn = angle_evolution_residual(p, p, p, 0.0, 1e-4, 2e-4)
        assert rn.linf < 1e-10

    def test_image_flow_agreement(self):
        # the potential route and the direct immersion flow produce the same
        # image: compare the diffeomorphism-invariant scalar max|H| at equal
        # times within O(h^2) + O(dt)
        p0 = potential(np.zeros((2, 2)),
                       lambda x, y: 0.05 * (np.sin(x) + np.cos(y)), n=48)
        t_target = 0.05
        tr = ma_run(p0, PotentialFlowConfig(stop_t_max=t_target, record_every=1000))
        imm_pot = lag_immersion(tr.final)
        b_pot = build_bundle(imm_pot)

        st = FlowState.initial(lag_immersion(p0))
        dt = 2e-4
        while st.t < t_target - 1e-12:
            st = step_explicit(st, min(dt, t_target - st.t))
        b_mcf = st.bundle
        a = float(np.sqrt(b_pot.normH2.max()))
        c = float(np.sqrt(b_mcf.normH2.max()))
        assert a == pytest.approx(c, rel=2e-2)


class TestConvexPotentialConvergence:
    def test_monotone_decay_to_flat(self):
        # desk-scale convex-potential convergence: the Hessian contracts
        # monotonically toward the flat torus at the linearized rate
        # 1/(1 + max(S)^2) per unit time
        p0 = potential(np.diag([0.5, 0.8]),
                       lambda x, y: 0.1 * (np.sin(x) + np.cos(y)), n=32)
        tr = ma_run(p0, PotentialFlowConfig(stop_t_max=5.0, record_every=100))
        h = np.array([r.hess_phi_inf for r in tr.records])
        assert np.all(np.diff(h) < 0)
        rate = 1.0 / 1.64
        expect = h[0] * np.exp(-rate * 5.0)
        assert h[-1] == pytest.approx(expect, rel=0.08)
