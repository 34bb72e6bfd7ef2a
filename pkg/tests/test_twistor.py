"""Twistor-layer tests.

Oracles:
  * K-Bessel tower series vs Gauss-Legendre ray quadrature: two independent
    evaluations of the same ray integrals;
  * the two contact-frame routes (charge towers vs modular lattice sums),
    which share no summation machinery;
  * a coprime-ray dilogarithm resummation of the xi_tilde correction, built
    from scratch inside the test;
  * Eisenstein closed forms for the extrapolated power-law sums;
  * finite differences for the contact identity itself.
"""

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmap.cask import kahler_data
from qmap.frames import Frame
from qmap.instanton import _frame_dk
from qmap.kernels import DomainError, eisenstein_sum
from qmap.mirror import mirror_forward
from qmap.model import IIBPoint, spec_from_dict
from qmap.twistor import (
    TwistorPoint,
    bessel_ray_quadrature,
    bessel_ray_series,
    contact_frame,
    darboux_iia,
    darboux_iib,
    fiber_poles,
    resummed_contact_frame,
    verify_darboux,
    _pole_ratios,
    _slow_lattice_sum,
)

ZETA3 = 1.2020569031595942854


def conifold_spec():
    return spec_from_dict({
        "n": 1,
        "kabc": [[0, 0, 0, 1.0]],
        "chi": 2,
        "gv": [{"q": [1], "n": 1}],
        "c_loop": "chi/192pi",
    })


def lorentzian_spec():
    return spec_from_dict({
        "n": 2,
        "kabc": [[0, 0, 0, 2.0], [0, 0, 1, 1.0], [0, 1, 1, 3.0], [1, 1, 1, 4.0]],
        "chi": -6,
        "gv": [{"q": [1, 0], "n": 3}, {"q": [0, 1], "n": -2}],
        "c_loop": "chi/192pi",
    })


def plain_spec(c_loop=0.02, gv=()):
    return spec_from_dict({
        "n": 1,
        "kabc": [[0, 0, 0, 6.0]],
        "chi": 0,
        "gv": list(gv),
        "c_loop": c_loop,
    })


def conifold_point():
    return IIBPoint(
        tau=0.3 + 1.7j,
        z=np.array([0.2 + 1.4j]),
        c_upper=np.array([0.15]),
        c_lower=np.array([-0.3]),
        c0=0.2,
        psi=0.1,
    )


def lorentzian_point():
    return IIBPoint(
        tau=-0.4 + 1.3j,
        z=np.array([0.1 + 1.2j, -0.25 + 1.6j]),
        c_upper=np.array([0.2, -0.05]),
        c_lower=np.array([0.3, 0.1]),
        c0=-0.12,
        psi=0.4,
    )


def plain_point():
    return IIBPoint(
        tau=0.15 + 2.3j,
        z=np.array([-0.3 + 0.95j]),
        c_upper=np.array([-0.2]),
        c_lower=np.array([0.05]),
        c0=0.33,
        psi=-0.6,
    )


# ---------------------------------------------------------------------------
# ray quadrature vs tower series
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("q", [-2, -1, 0, 1, 2])
def test_geometric_ray_integral_matches_tower(q):
    quad = bessel_ray_quadrature(q, "geometric", 0.7 - 0.4j, 0.23, 2.1)
    ser = bessel_ray_series(q, "geometric", 0.7 - 0.4j, 0.23, 2.1)
    assert abs(quad - ser) < 1e-13 * max(1.0, abs(ser))


@pytest.mark.parametrize("q", [-1, 0, 1])
def test_log_ray_integral_matches_tower(q):
    quad = bessel_ray_quadrature(q, "log", 0.7 - 0.4j, 0.23, 2.1)
    ser = bessel_ray_series(q, "log", 0.7 - 0.4j, 0.23, 2.1)
    assert abs(quad - ser) < 1e-13 * max(1.0, abs(ser))


@settings(max_examples=25, deadline=None)
@given(
    re=st.floats(-1.5, 1.5),
    im=st.floats(-1.5, 1.5),
    zg=st.floats(-0.49, 0.49),
    tau2=st.floats(0.9, 3.0),
    q=st.integers(-2, 2),
)
def test_ray_identity_property(re, im, zg, tau2, q):
    zt = complex(re, im)
    if abs(zt) < 0.3:
        zt += 0.5
    kind = "geometric" if abs(q) == 2 else "log"
    quad = bessel_ray_quadrature(q, kind, zt, zg, tau2)
    ser = bessel_ray_series(q, kind, zt, zg, tau2)
    assert abs(quad - ser) < 1e-10 * max(1.0, abs(ser))


def test_ray_kernel_domain_errors():
    with pytest.raises(DomainError):
        bessel_ray_series(3, "geometric", 1.0, 0.1, 2.0)
    with pytest.raises(DomainError):
        bessel_ray_series(2, "log", 1.0, 0.1, 2.0)
    with pytest.raises(DomainError):
        bessel_ray_quadrature(0, "nope", 1.0, 0.1, 2.0)
    with pytest.raises(DomainError):
        bessel_ray_quadrature(0, "log", 0.0, 0.1, 2.0)


# ---------------------------------------------------------------------------
# contact frames: tower route vs lattice route
# ---------------------------------------------------------------------------


def assert_frames_match(spec, p, tol):
    a = contact_frame(spec, mirror_forward(spec, p))
    b = resummed_contact_frame(spec, p)
    scale = max(1.0, abs(a.f))
    assert abs(a.f - b.f) < tol * scale
    assert np.max(np.abs(a.theta_3 - b.theta_3)) < tol * max(1.0, np.max(np.abs(a.theta_3)))
    assert np.max(np.abs(a.theta_plus - b.theta_plus)) < tol * max(
        1.0, np.max(np.abs(a.theta_plus))
    )
    assert np.max(np.abs(a.theta_plus_iia - b.theta_plus_iia)) < tol * max(
        1.0, np.max(np.abs(a.theta_plus_iia))
    )


def test_contact_frames_agree_conifold():
    assert_frames_match(conifold_spec(), conifold_point(), 1e-11)


def test_contact_frames_agree_lorentzian():
    assert_frames_match(lorentzian_spec(), lorentzian_point(), 1e-11)


def test_contact_frames_agree_without_euler_term():
    spec = plain_spec(c_loop=0.02, gv=[{"q": [2], "n": 5}])
    assert_frames_match(spec, plain_point(), 1e-11)


def test_contact_frame_base_type_equivalence():
    spec = conifold_spec()
    p = conifold_point()
    via_iib = contact_frame(spec, p)
    via_iia = contact_frame(spec, mirror_forward(spec, p))
    assert via_iib.f == via_iia.f
    assert np.array_equal(via_iib.theta_plus, via_iia.theta_plus)
    assert np.array_equal(via_iib.theta_3, via_iia.theta_3)


def test_contact_potential_frozen_value():
    # dual-route agreement at 7e-15 froze this number
    b = resummed_contact_frame(conifold_spec(), conifold_point())
    assert abs(b.f - 32.875191017764784) < 1e-9


def test_contact_potential_positive_tail_bound():
    b = resummed_contact_frame(conifold_spec(), conifold_point())
    assert b.tail >= 0.0
    assert b.tail < 1e-8


def test_classical_block_recombination():
    # 4 pi (rho+c) d^cK carries exactly the Im(tau_ij) pairing of the
    # coordinate-differential block when no corrections are present
    spec = lorentzian_spec()
    z = lorentzian_point().z
    b, tmod = z.real, z.imag
    tau2 = 1.3
    fr = Frame(spec.n)
    K, Ka, _, _, tau_cl, _ = kahler_data(spec, z, part="classical")
    _, dck = _frame_dk(fr, Ka)
    lhs = 4.0 * math.pi * (tau2 * tau2 * math.exp(-K) / 16.0) * dck
    im = tau_cl.imag
    rhs = np.zeros(fr.dim)
    rhs[fr.s_t] = math.pi * tau2 * tau2 * (im[0, 1:] + b @ im[1:, 1:])
    rhs[fr.s_b] = -math.pi * tau2 * tau2 * (tmod @ im[1:, 1:])
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(lhs))


def test_convergence_cone_guard():
    spec = plain_spec(gv=[{"q": [1], "n": 1}])
    p = plain_point()
    bad = IIBPoint(tau=p.tau, z=np.array([-0.3 - 0.95j]), c_upper=p.c_upper,
                   c_lower=p.c_lower, c0=p.c0, psi=p.psi)
    with pytest.raises(DomainError):
        resummed_contact_frame(spec, bad)


# ---------------------------------------------------------------------------
# extrapolated power-law sums vs Eisenstein closed forms
# ---------------------------------------------------------------------------


def test_slow_sums_match_eisenstein_derivatives():
    tau = 0.3 + 1.7j
    tau1, tau2 = tau.real, tau.imag
    g1 = _slow_lattice_sum(
        lambda ms, ns, A: (ms != 0.0) * (A * A - 3.0 * (ms * tau1 + ns) ** 2) / A**5, tau
    ).value
    g2 = _slow_lattice_sum(lambda ms, ns, A: ms * (ms * tau1 + ns) / A**5, tau).value
    h = 1e-4
    e3 = lambda tt: eisenstein_sum(tt, 3.0).real  # noqa: E731
    de3_dt2 = (e3(tau + 1j * h) - e3(tau - 1j * h)) / (2.0 * h)
    de3_dt1 = (e3(tau + h) - e3(tau - h)) / (2.0 * h)
    assert abs(g1 - (4.0 * ZETA3 - 2.0 * e3(tau) - tau2 * de3_dt2)) < 1e-6
    assert abs(g2 + de3_dt1 / 3.0) < 1e-8
    assert abs(g1.imag) < 1e-15 and abs(g2.imag) < 1e-15


# ---------------------------------------------------------------------------
# fiber pole structure
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("mn", [(1, 0), (2, -3), (-1, 4), (3, 2)])
def test_fiber_pole_algebra(mn):
    m, n = mn
    tau = 0.3 + 1.7j
    tp, tm = fiber_poles(tau, m, n)
    A = abs(m * tau + n)
    assert abs(tp * tm + 1.0) < 1e-12
    assert abs((tp - tm) - 2.0 * A / (m * tau.imag)) < 1e-12


def test_fiber_poles_reject_m_zero():
    with pytest.raises(DomainError):
        fiber_poles(0.3 + 1.7j, 0, 1)


def test_pole_ratio_ray_limits():
    # the m = 0 conventions are the n -> +-inf limits of the m != 0 kernels
    tau = 0.3 + 1.7j
    t = 0.4 + 0.25j
    for nn in (-10**7, 10**7):
        ms = np.array([1.0])
        ns = np.array([float(nn)])
        A = np.abs(ms * tau + ns)
        r1, r2 = _pole_ratios(t, tau.real, tau.imag, ms, ns, A)
        m0r1, m0r2 = _pole_ratios(
            t, tau.real, tau.imag, np.array([0.0]), np.array([float(np.sign(nn))]), np.array([1.0])
        )
        assert abs(r1[0] - m0r1[0]) < 1e-6
        assert abs(r2[0] - m0r2[0]) < 1e-6


def test_fiber_on_pole_rejected():
    spec = conifold_spec()
    p = conifold_point()
    tplus, _ = fiber_poles(complex(p.tau), 1, 0)
    with pytest.raises(DomainError):
        darboux_iib(spec, TwistorPoint(p, tplus))


def test_fiber_on_charge_ray_rejected():
    spec = conifold_spec()
    iia = mirror_forward(spec, conifold_point())
    with pytest.raises(DomainError):
        darboux_iia(spec, TwistorPoint(iia, -0.5))


# ---------------------------------------------------------------------------
# Darboux coordinates
# ---------------------------------------------------------------------------


def test_twistor_point_validation():
    p = conifold_point()
    with pytest.raises(DomainError):
        TwistorPoint(p, 0.0)
    with pytest.raises(DomainError):
        TwistorPoint(p, 1.0 + 0.5j, eps=1.5)
    assert TwistorPoint(p, 1j).convention == "iib"
    assert TwistorPoint(mirror_forward(conifold_spec(), p), 1j).convention == "iia"


def test_convention_mixing_rejected():
    spec = conifold_spec()
    p = conifold_point()
    iia = mirror_forward(spec, p)
    with pytest.raises(TypeError):
        darboux_iia(spec, TwistorPoint(p, 0.4 + 0.25j))
    with pytest.raises(TypeError):
        darboux_iib(spec, TwistorPoint(iia, 0.4 + 0.25j))


def test_antipodal_reality():
    spec = conifold_spec()
    p = conifold_point()
    iia = mirror_forward(spec, p)
    t = 0.4 + 0.25j
    ta = -1.0 / np.conj(t)
    for build, tpt in ((darboux_iia, iia), (darboux_iib, p)):
        c1 = build(spec, TwistorPoint(tpt, t))
        c2 = build(spec, TwistorPoint(tpt, ta))
        assert np.max(np.abs(c1.xi - np.conj(c2.xi))) < 1e-12
        assert np.max(np.abs(c1.xi_tilde - np.conj(c2.xi_tilde))) < 1e-12
        # alpha closes up to the multivalued fiber-logarithm branch
        gap = c1.alpha - np.conj(c2.alpha)
        branch = 8.0 * math.pi * spec.c_loop
        assert min(abs(gap - s * branch) for s in (-1.0, 0.0, 1.0)) < 1e-12


def test_plain_model_has_no_corrections():
    spec = plain_spec(c_loop=0.02, gv=())
    p = plain_point()
    c = darboux_iib(spec, TwistorPoint(p, 0.55 + 0.3j))
    assert np.max(np.abs(c.xi_tilde_inst)) == 0.0
    assert c.alpha_inst == 0.0
    assert np.max(np.abs(c.xi_tilde - c.xi_tilde_cl)) == 0.0
    expected = -0.5 * (c.alpha_cl - complex(c.xi @ c.xi_tilde_cl)) + 4j * 0.02 * cmath.log(
        0.55 + 0.3j
    )
    assert abs(c.alpha - expected) < 1e-14 * max(1.0, abs(expected))


def test_xi_tilde_correction_matches_ray_dilogarithm():
    # independent resummation: collapse each coprime ray of the lattice to a
    # dilogarithm, using that the action and the pole kernel are scale
    # invariant along rays
    spec = conifold_spec()
    p = conifold_point()
    t = 0.4 + 0.25j
    tau = complex(p.tau)
    tau1, tau2 = tau.real, tau.imag
    qv = np.array([1.0])
    y = float(qv @ p.z.imag)
    xs = float(qv @ p.z.real)
    cs = float(qv @ p.c_upper)

    def li2(w, kmax=80):
        ks = np.arange(1, kmax + 1)
        return complex(np.sum(w**ks / ks**2))

    acc = 0.0 + 0.0j
    M = 14
    for mh in range(-M, M + 1):
        for nn in range(-M, M + 1):
            if (mh, nn) == (0, 0) or math.gcd(abs(mh), abs(nn)) != 1:
                continue
            A = abs(mh * tau + nn)
            u = mh * tau1 + nn
            act = 2.0 * math.pi * (A * y + 1j * (mh * cs + nn * xs))
            if mh != 0:
                tpl = (u + A) / (mh * tau2)
                r1 = (1.0 + tpl * t) / (t - tpl)
            else:
                r1 = 1.0 / t if nn < 0 else -t
            acc += r1 * li2(cmath.exp(-act)) / A**2
    oracle = (tau2 / (8.0 * math.pi**2)) * acc * qv
    c = darboux_iib(spec, TwistorPoint(p, t))
    assert np.max(np.abs(c.xi_tilde_inst[1:] - oracle)) < 1e-12 * max(
        1.0, float(np.max(np.abs(oracle)))
    )


def test_zero_charge_sums_need_fiber_off_real_locus():
    spec = conifold_spec()
    p = conifold_point()
    # real fiber values make Im xi^0 vanish, where the zero-charge resonance
    # kernel degenerates; the guard must reject rather than degrade
    with pytest.raises(DomainError):
        darboux_iib(spec, TwistorPoint(p, 0.377))


# ---------------------------------------------------------------------------
# contact identity by finite differences
# ---------------------------------------------------------------------------


def test_contact_identity_iia_conifold():
    spec = conifold_spec()
    iia = mirror_forward(spec, conifold_point())
    rep = verify_darboux(spec, TwistorPoint(iia, 0.4 + 0.25j))
    assert rep.convention == "iia"
    assert rep.max_residual < 1e-8
    assert rep.antiholo_residual < 1e-8
    assert not rep.step_warning


def test_contact_identity_iib_conifold():
    spec = conifold_spec()
    rep = verify_darboux(spec, TwistorPoint(conifold_point(), 0.55 + 0.3j))
    assert rep.convention == "iib"
    assert rep.max_residual < 1e-8
    assert not rep.step_warning


def test_contact_identity_plain_model_both_conventions():
    spec = plain_spec(c_loop=0.0, gv=[{"q": [1], "n": 2}])
    p = plain_point()
    rep_b = verify_darboux(spec, TwistorPoint(p, -0.22 + 0.48j))
    assert rep_b.max_residual < 1e-8
    rep_a = verify_darboux(spec, TwistorPoint(mirror_forward(spec, p), -0.3 + 0.6j))
    assert rep_a.max_residual < 1e-8


def test_contact_identity_off_reference_loop_constant():
    # the fiber-logarithm shift in alpha must track c_loop away from the
    # reference locus for the identity to close
    spec = plain_spec(c_loop=0.02, gv=[{"q": [2], "n": 5}])
    rep = verify_darboux(spec, TwistorPoint(plain_point(), 0.55 + 0.3j))
    assert rep.max_residual < 1e-8
