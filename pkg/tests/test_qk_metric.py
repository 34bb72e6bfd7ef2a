"""Metric-assembly tests.

The seven-block assembly is checked against two independently coded closed
forms (the constant-correction form and the uncorrected form), against the
exact sigma-sector coefficient, and against its weak-coupling and
index-scaling degenerations.  Positivity is checked on the one-modulus
example family where it is guaranteed on the domain wall side.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmap.cask import kahler_data
from qmap.instanton import point_context
from qmap.kernels import DomainError
from qmap.model import IIAPoint, spec_from_dict
from qmap.qk_metric import (
    SymTensor,
    definiteness_scan,
    one_loop_metric,
    qk_metric,
    tree_metric,
)


def cubic_flux_spec(chi: int, c_loop="chi/192pi"):
    return spec_from_dict(
        {"n": 1, "kabc": [[0, 0, 0, 1.0]], "chi": chi, "gv": [], "c_loop": c_loop}
    )


def gv_spec(chi=-4, gv=None, c_loop=0.02):
    if gv is None:
        gv = [{"q": [1, 0], "n": 3}, {"q": [0, 1], "n": -2}, {"q": [1, 1], "n": 5}]
    return spec_from_dict(
        {
            "n": 2,
            "kabc": [[0, 0, 0, 9.0], [0, 0, 1, 3.0], [0, 1, 1, 1.0]],
            "chi": chi,
            "gv": gv,
            "c_loop": c_loop,
        }
    )


def gv_point(rho=0.8):
    return IIAPoint(
        rho=rho,
        z=np.array([0.1 + 1.2j, -0.2 + 0.9j]),
        zeta=np.array([0.3, -0.2, 0.45]),
        zeta_tilde=np.array([0.1, 0.2, -0.3]),
        sigma=0.4,
    )


def point_at_tau2(spec, tau2, z, zeta, zetatilde, sigma=0.0):
    K = kahler_data(spec, np.asarray(z, dtype=complex))[0]
    rho = tau2 * tau2 * math.exp(-K) / 16.0 - spec.c_loop
    return IIAPoint(rho=rho, z=z, zeta=zeta, zeta_tilde=zetatilde, sigma=sigma)


class TestClosedFormReductions:
    def test_one_loop_reduction_componentwise(self):
        spec = spec_from_dict(
            {"n": 1, "kabc": [[0, 0, 0, 1.0]], "chi": 0, "gv": [], "c_loop": 0.03}
        )
        pt = IIAPoint(
            rho=0.9,
            z=np.array([0.2 + 1.1j]),
            zeta=np.array([0.37, -0.21]),
            zeta_tilde=np.array([0.11, 0.43]),
            sigma=0.25,
        )
        g = qk_metric(spec, pt).coeffs
        g_ref = one_loop_metric(spec, pt).coeffs
        assert np.max(np.abs(g - g_ref)) <= 1e-12 * (1.0 + np.max(np.abs(g_ref)))

    def test_one_loop_reduction_two_moduli(self):
        spec = gv_spec(chi=0, gv=[], c_loop=0.05)
        pt = gv_point()
        g = qk_metric(spec, pt).coeffs
        g_ref = one_loop_metric(spec, pt).coeffs
        assert np.max(np.abs(g - g_ref)) <= 1e-12 * (1.0 + np.max(np.abs(g_ref)))

    def test_tree_reduction(self):
        spec = spec_from_dict(
            {"n": 1, "kabc": [[0, 0, 0, 1.0]], "chi": 0, "gv": [], "c_loop": 0.0}
        )
        pt = IIAPoint(
            rho=0.7,
            z=np.array([-0.3 + 0.9j]),
            zeta=np.array([0.2, 0.5]),
            zeta_tilde=np.array([-0.4, 0.1]),
            sigma=-0.6,
        )
        g = qk_metric(spec, pt).coeffs
        g_ref = tree_metric(spec, pt).coeffs
        assert np.max(np.abs(g - g_ref)) <= 1e-12 * (1.0 + np.max(np.abs(g_ref)))
        # with the constant also on, tree and one-loop differ
        spec_c = spec_from_dict(
            {"n": 1, "kabc": [[0, 0, 0, 1.0]], "chi": 0, "gv": [], "c_loop": 0.03}
        )
        assert (
            np.max(np.abs(qk_metric(spec_c, pt).coeffs - g_ref)) > 1e-6
        )

    def test_weak_coupling_degeneration(self):
        # at large tau2 every Bessel tower is < 1e-12, so the full assembly
        # collapses onto the constant-correction closed form
        spec = gv_spec()
        pt = point_at_tau2(
            spec,
            40.0,
            np.array([0.1 + 1.2j, -0.2 + 0.9j]),
            np.array([0.3, -0.2, 0.45]),
            np.array([0.1, 0.2, -0.3]),
            sigma=0.4,
        )
        g = qk_metric(spec, pt).coeffs
        g_ref = one_loop_metric(spec, pt).coeffs
        assert np.max(np.abs(g - g_ref)) <= 1e-12 * (1.0 + np.max(np.abs(g_ref)))


class TestIndexScaling:
    def test_monotone_collapse_to_classical(self):
        # scaling all indices toward zero shrinks the deviation from the
        # constant-correction form monotonically
        ladders = [
            (-4, [{"q": [1, 0], "n": 3}, {"q": [0, 1], "n": -2}, {"q": [1, 1], "n": 5}]),
            (-2, [{"q": [1, 0], "n": 2}, {"q": [0, 1], "n": -1}, {"q": [1, 1], "n": 3}]),
            (-1, [{"q": [1, 0], "n": 1}, {"q": [0, 1], "n": 0}, {"q": [1, 1], "n": 1}]),
            (0, []),
        ]
        pt = gv_point()
        devs = []
        for chi, gv in ladders:
            spec = gv_spec(chi=chi, gv=gv)
            g = qk_metric(spec, pt).coeffs
            g_ref = one_loop_metric(spec, pt).coeffs
            devs.append(np.max(np.abs(g - g_ref)))
        assert devs[0] > devs[1] > devs[2] > devs[3]
        assert devs[3] <= 1e-12
        assert devs[0] > 1e-8


class TestExampleFamily:
    def test_positive_definite_at_example_point(self):
        spec = cubic_flux_spec(chi=40)
        pt = point_at_tau2(
            spec,
            1.4,
            np.array([0.15 + 1.2j]),
            np.array([0.3, -0.4]),
            np.array([0.21, 0.05]),
            sigma=0.7,
        )
        eig = qk_metric(spec, pt).eigenvalues()
        assert eig.shape == (8,)
        assert np.all(eig > 0)

    def test_positive_definite_with_gv_charges(self):
        spec = gv_spec()
        g = qk_metric(spec, gv_point())
        eig = g.eigenvalues()
        assert np.all(np.isfinite(eig))
        assert np.all(eig > 0)

    def test_scan_box_with_domain_wall_floor(self):
        # t-floor tracks the wall of the example domain: R = t^3/3 - 9s/2 > 0
        from qmap.kernels import eisenstein_sum

        chi = 40
        spec = cubic_flux_spec(chi=chi)

        def t_floor(tau2, b):
            e3 = eisenstein_sum(complex(0.0, tau2), 3.0).value.real
            s = chi / (4.0 * (2.0 * math.pi) ** 3) * e3
            tmin = (27.0 * s / 2.0) ** (1.0 / 3.0)
            return (tmin + 0.05, tmin + 2.0)

        report = definiteness_scan(
            spec, {"tau2": (0.8, 3.0), "b": (-0.4, 0.4), "t": t_floor}, grid=4
        )
        assert report.n_points == 64
        assert report.n_inside == 64
        assert report.all_positive

    def test_scan_reports_outside_points(self):
        spec = cubic_flux_spec(chi=40)
        report = definiteness_scan(
            spec, {"tau2": (0.9, 2.0), "b": (-0.3, 0.3), "t": (1.0, 2.0)}, grid=3
        )
        assert report.n_points == 27
        assert 0 < report.n_inside < 27
        for p in report.outside_points:
            assert p.note == "outside N'"
            assert p.f is not None and p.f3 is not None
        # every wall-side sign pattern actually violates f > 0 > f3
        for p in report.outside_points:
            assert not (p.f > 0 and p.f3 < 0)


class TestInvariants:
    def test_sigma_sector_coefficient_exact(self):
        spec = gv_spec(c_loop="chi/192pi")
        pt = gv_point()
        ctx = point_context(spec, pt)
        g = qk_metric(spec, pt)
        i = ctx.frame.i_sigma
        pred = (ctx.rho + ctx.c_loop + ctx.rho_minus) / (
            64.0
            * (ctx.rho + ctx.rho_inst) ** 2
            * (ctx.rho + 2.0 * ctx.c_loop - ctx.rho3_inst)
        )
        assert g.coeffs[i, i] == pytest.approx(pred, rel=1e-14, abs=0.0)

    def test_symmetric_and_finite(self):
        g = qk_metric(gv_spec(), gv_point())
        assert np.allclose(g.coeffs, g.coeffs.T, atol=0.0)
        assert np.all(np.isfinite(g.coeffs))

    @settings(max_examples=6, deadline=None)
    @given(
        tau2=st.floats(1.0, 2.0),
        b=st.floats(-0.5, 0.5),
        t=st.floats(1.0, 2.0),
        z0=st.floats(-0.4, 0.4),
    )
    def test_sigma_coefficient_property(self, tau2, b, t, z0):
        spec = cubic_flux_spec(chi=2)
        pt = point_at_tau2(
            spec,
            tau2,
            np.array([b + 1j * t]),
            np.array([z0, 0.1]),
            np.array([0.0, -0.2]),
        )
        ctx = point_context(spec, pt)
        g = qk_metric(spec, pt)
        i = ctx.frame.i_sigma
        pred = (ctx.rho + ctx.c_loop + ctx.rho_minus) / (
            64.0
            * (ctx.rho + ctx.rho_inst) ** 2
            * (ctx.rho + 2.0 * ctx.c_loop - ctx.rho3_inst)
        )
        assert g.coeffs[i, i] == pytest.approx(pred, rel=1e-13, abs=0.0)


class TestWalls:
    def test_f_wall_reported(self):
        spec = spec_from_dict(
            {"n": 1, "kabc": [[0, 0, 0, 1.0]], "chi": 0, "gv": [], "c_loop": 0.3}
        )
        pt = IIAPoint(
            rho=0.0,
            z=np.array([0.1 + 1.0j]),
            zeta=np.zeros(2),
            zeta_tilde=np.zeros(2),
        )
        with pytest.raises(DomainError, match="f vanishes"):
            qk_metric(spec, pt)

    def test_f3_wall_reported(self):
        spec = spec_from_dict(
            {"n": 1, "kabc": [[0, 0, 0, 1.0]], "chi": 0, "gv": [], "c_loop": -0.2}
        )
        pt = IIAPoint(
            rho=0.4,
            z=np.array([0.1 + 1.0j]),
            zeta=np.zeros(2),
            zeta_tilde=np.zeros(2),
        )
        with pytest.raises(DomainError, match="f3 vanishes"):
            qk_metric(spec, pt)

    def test_closed_form_domain_checks(self):
        spec = spec_from_dict(
            {"n": 1, "kabc": [[0, 0, 0, 1.0]], "chi": 0, "gv": [], "c_loop": 0.1}
        )
        bad = IIAPoint(
            rho=-0.05,
            z=np.array([0.0 + 1.0j]),
            zeta=np.zeros(2),
            zeta_tilde=np.zeros(2),
        )
        with pytest.raises(DomainError):
            one_loop_metric(spec, bad)
        with pytest.raises(DomainError):
            tree_metric(spec, bad)


class TestSymTensor:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            SymTensor(dim=3, coeffs=np.zeros((2, 2)))

    def test_symmetry_validation(self):
        m = np.array([[1.0, 2.0], [0.5, 1.0]])
        with pytest.raises(ValueError):
            SymTensor(dim=2, coeffs=m)

    def test_eigenvalues_sorted(self):
        m = np.diag([3.0, 1.0, 2.0])
        eig = SymTensor(dim=3, coeffs=m).eigenvalues()
        assert np.allclose(eig, [1.0, 2.0, 3.0])
