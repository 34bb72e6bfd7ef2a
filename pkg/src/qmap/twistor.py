"""Twistor-fiber layer: contact one-forms and Darboux coordinate systems.

Two coordinate conventions coexist and are kept strictly apart by the type of
the base point.  The axial convention (IIA base) builds coordinates from
K-Bessel towers plus ray integrals over the charge support, and satisfies

    -2 pi i (d alpha + xitilde_i d xi^i - xi^i d xitilde_i)
        = f dt/t + t^{-1} theta_+ - 2i theta_3 + t theta_-.

The modular convention (IIB base) carries the fiber through the real pole
family t_+^{m,n} of the axion lattice and satisfies

    4 pi i (d alpha - xitilde_i d xi^i)
        = f dt/t + i t^{-1} theta_+ - 2i theta_3 - i t theta_-.

The shared right-hand side (f, theta_+, theta_3) is produced by two
independent routes: contact_frame sums K-Bessel towers over the charge
support, while resummed_contact_frame evaluates the equivalent modular
lattice sums.  Agreement of the two routes is a nontrivial resummation
identity and is exercised by the test suite, not assumed here.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _special

from .cask import kahler_data
from .frames import Frame
from .instanton import _cutoff, _frame_dk, _support, _tau2_of, point_context
from .kernels import (
    DEFAULT_POLICY,
    TWO_PI,
    ConvergenceError,
    DomainError,
    LatticeSumParams,
    SumResult,
    TruncationPolicy,
    _qform_min_eig,
    eisenstein_sum,
    lattice_kernel_sum,
    polylog,
    shell_points,
)
from .mirror import (
    mirror_corrections,
    mirror_forward,
    mirror_jacobian,
    pack_iia,
    pack_iib,
    unpack_iia,
    unpack_iib,
)
from .model import IIAPoint, IIBPoint, ModelSpec

__all__ = [
    "ContactFrame",
    "DarbouxCoords",
    "DarbouxReport",
    "TwistorPoint",
    "bessel_ray_quadrature",
    "bessel_ray_series",
    "contact_frame",
    "darboux_iia",
    "darboux_iib",
    "fiber_poles",
    "resummed_contact_frame",
    "verify_darboux",
]

_TOWER_CAP = 200000


# ---------------------------------------------------------------------------
# points and result containers


@dataclass(frozen=True)
class TwistorPoint:
    """Fiber point over a quaternionic base; the base type fixes the convention.

    eps is the admissible relative distance of t to the singular fiber set
    (charge rays for an IIA base, the real pole family for an IIB base);
    evaluations closer than eps raise DomainError instead of degrading.
    """

    base: IIAPoint | IIBPoint
    t: complex
    eps: float = 1e-3

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", complex(self.t))
        if self.t == 0 or not (math.isfinite(self.t.real) and math.isfinite(self.t.imag)):
            raise DomainError("fiber coordinate must be finite and nonzero")
        if not 0 < self.eps < 1:
            raise DomainError("eps must lie in (0, 1)")

    @property
    def convention(self) -> str:
        return "iib" if isinstance(self.base, IIBPoint) else "iia"


@dataclass(frozen=True)
class ContactFrame:
    """Contact potential f and one-form components over the mixed frame.

    Component vectors follow the coordinate order (tau2, b^a, t^a, zeta^0 ..
    zeta^n, zetatilde_0 .. zetatilde_n, sigma); zeta^0 = tau1 and the radial
    slot holds the dtau2 coefficient.  theta_plus_iia re-expands that dtau2
    coefficient over (rho, b, t) for use against IIA coordinate differentials;
    theta_3 has no radial component, so one vector serves both frames.
    """

    f: float
    theta_plus: np.ndarray
    theta_3: np.ndarray
    theta_plus_iia: np.ndarray
    frame: Frame
    tail: float

    @property
    def theta_minus(self) -> np.ndarray:
        return np.conj(self.theta_plus)

    @property
    def theta_minus_iia(self) -> np.ndarray:
        return np.conj(self.theta_plus_iia)


@dataclass(frozen=True)
class DarbouxCoords:
    """Darboux coordinate values at one twistor point.

    For the modular convention the classical and correction constituents are
    kept: xi_tilde = xi_tilde_cl + xi_tilde_inst, and alpha already contains
    the fiber-logarithm shift adapting it to the model's one-loop constant.
    alpha_inst is the bare lattice correction entering
    alpha = -(alpha_cl - xi . xi_tilde_cl)/2 + alpha_inst + shift.
    """

    convention: str
    xi: np.ndarray
    xi_tilde: np.ndarray
    alpha: complex
    xi_tilde_cl: np.ndarray | None = None
    alpha_cl: complex | None = None
    xi_tilde_inst: np.ndarray | None = None
    alpha_inst: complex | None = None

    def packed(self) -> np.ndarray:
        return np.concatenate([self.xi, self.xi_tilde, [self.alpha]])


@dataclass(frozen=True)
class DarbouxReport:
    """Finite-difference check of the contact identity at one twistor point."""

    convention: str
    max_residual: float
    base_residual: float
    fiber_residual: float
    antiholo_residual: float
    scale: float
    f: float
    step_warning: bool


# ---------------------------------------------------------------------------
# K-Bessel towers with descending phases


def _phase_towers(zeta_g: float, absz: float, tau2: float, policy: TruncationPolicy, nu_max: int = 1):
    """Towers sum_{k>=1} e^{-2 pi i k zeta_g} K_nu(2 pi tau2 absz k), nu <= nu_max.

    Returns (plain, weighted, tail): plain[nu] is the bare tower, weighted[nu]
    the 1/k-weighted one, and tail a coarse bound on the dropped remainder.
    """
    x = TWO_PI * tau2 * absz
    if x <= 0.0:
        raise DomainError("tower requires a charge with nonzero reduced central charge")
    n_max = max(1, int(math.ceil(_cutoff(policy) / x)))
    if n_max > _TOWER_CAP:
        raise ConvergenceError("Bessel tower too long; point too close to a cone wall")
    ks = np.arange(1, n_max + 1, dtype=float)
    arg = x * ks
    ph = np.exp(-2j * math.pi * ks * zeta_g)
    plain = []
    weighted = []
    for nu in range(nu_max + 1):
        kvals = _special.kv(nu, arg)
        plain.append(complex(np.sum(ph * kvals)))
        weighted.append(complex(np.sum(ph * kvals / ks)))
    xt = x * (n_max + 1)
    env = math.sqrt(math.pi / (2.0 * xt)) * math.exp(-xt + nu_max * nu_max / (2.0 * xt))
    tail = env / max(1.0 - math.exp(-x), 1e-300)
    return plain, weighted, tail


# ---------------------------------------------------------------------------
# ray integrals over the charge support


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _u_halfwidth(x: float, qmax: float, policy: TruncationPolicy) -> float:
    # decay target relative to the e^{-x} peak of the integrand
    target = x - math.log(policy.series_tail_tol) + 3.0
    u = math.acosh(max(target / x, 1.0) + 1.0)
    for _ in range(4):
        u = math.acosh(max((target + qmax * u) / x, 1.0) + 1.0)
    return u


def _panel_edges(umax: float, pole_re: float | None, pole_delta: float | None) -> np.ndarray:
    base = np.linspace(-umax, umax, 2 * max(int(math.ceil(umax)), 1) + 1)
    if pole_re is None or pole_delta is None or pole_delta >= 0.5:
        return base
    if abs(pole_re) > umax + 1.5:
        return base
    # graded refinement towards the projection of the fiber pole on the ray
    offs = [0.0]
    step = 0.5 * pole_delta
    while step < 1.6:
        offs.extend([-step, step])
        step *= 2.0
    extra = pole_re + np.asarray(offs)
    edges = np.concatenate([base, extra])
    edges = edges[(edges >= -umax) & (edges <= umax)]
    edges = np.unique(edges)
    keep = np.concatenate([[True], np.diff(edges) > 0.125 * pole_delta])
    return edges[keep]


def _gl_nodes(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    nodes = (mid + half * _GL_X[None, :]).ravel()
    wts = (half * _GL_W[None, :]).ravel()
    return nodes, wts


def _ray_integrals(
    t: complex | None,
    ztilde: complex,
    zeta_g: float,
    tau2: float,
    policy: TruncationPolicy,
    kinds: tuple[str, ...],
    eps_ray: float = 1e-3,
    qpow: int = 0,
) -> dict[str, complex]:
    """Gauss-Legendre evaluation of the ray integrals of one charge.

    The ray is parametrized as zeta(u) = -(ztilde/|ztilde|) e^u, u real, so
    that d zeta / zeta = du and the exponential weight is e^{-x cosh u} with
    x = 2 pi tau2 |ztilde|.  Supported kinds:
      "tker_log":    (t + zeta)/(t - zeta) * log(1 - w)
      "tker_rogers": (t + zeta)/(t - zeta) * [Li_2(w) + i pi xi log(1 - w)]
      "pow_geom":    zeta^qpow * w / (1 - w)
      "pow_log":     zeta^qpow * log(1 - w)
    where w = e^{-2 pi i zeta_g} e^{-x cosh u} and xi is the exponent of w.
    """
    absz = abs(ztilde)
    if absz == 0.0:
        raise DomainError("ray integral requires a nonzero reduced central charge")
    phdir = ztilde / absz
    x = TWO_PI * tau2 * absz
    cph = cmath.exp(-2j * math.pi * zeta_g)

    need_t = any(k.startswith("tker") for k in kinds)
    pole_re = pole_delta = None
    if need_t:
        if t is None:
            raise DomainError("fiber-kernel ray integrals need a fiber value")
        w0 = -t * phdir.conjugate()
        pole_re = math.log(abs(w0))
        pole_delta = abs(math.atan2(w0.imag, w0.real))
        if pole_delta < eps_ray:
            raise DomainError(
                f"fiber within {eps_ray:g} of a charge ray (angular gap {pole_delta:.2e})"
            )

    umax = _u_halfwidth(x, max(abs(qpow), 0.0), policy)
    nodes, wts = _gl_nodes(_panel_edges(umax, pole_re, pole_delta))
    ch = np.cosh(nodes)
    w = cph * np.exp(-x * ch)
    log1mw = np.log1p(-w)
    out: dict[str, complex] = {}
    if need_t:
        zeta_nodes = -phdir * np.exp(nodes)
        tker = (t + zeta_nodes) / (t - zeta_nodes)
        if "tker_log" in kinds:
            out["tker_log"] = complex(np.sum(wts * tker * log1mw))
        if "tker_rogers" in kinds:
            xi = -zeta_g + 1j * x * ch / TWO_PI
            li2 = np.array([polylog(2, wi) for wi in w])
            rogers = li2 + 1j * math.pi * xi * log1mw
            out["tker_rogers"] = complex(np.sum(wts * tker * rogers))
    if "pow_geom" in kinds or "pow_log" in kinds:
        zq = (-phdir) ** qpow * np.exp(qpow * nodes)
        if "pow_geom" in kinds:
            out["pow_geom"] = complex(np.sum(wts * zq * w / (1.0 - w)))
        if "pow_log" in kinds:
            out["pow_log"] = complex(np.sum(wts * zq * log1mw))
    return out


def bessel_ray_quadrature(
    q: int,
    kind: str,
    ztilde: complex,
    zeta_g: float,
    tau2: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> complex:
    """Ray integral of the power-weighted geometric or log kernel.

    kind "geometric" integrates zeta^q w/(1-w) d zeta/zeta over the ray of
    ztilde; kind "log" integrates zeta^q log(1-w) d zeta/zeta.
    """
    tag = {"geometric": "pow_geom", "log": "pow_log"}.get(kind)
    if tag is None:
        raise DomainError(f"unknown ray kernel kind {kind!r}")
    return _ray_integrals(None, ztilde, zeta_g, tau2, policy, (tag,), qpow=int(q))[tag]


def bessel_ray_series(
    q: int,
    kind: str,
    ztilde: complex,
    zeta_g: float,
    tau2: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> complex:
    """Closed K-Bessel tower equal to the corresponding ray integral.

    geometric, |q| <= 2:  2 (-1)^q (ztilde/|ztilde|)^q sum_k e^{-2 pi i k zeta_g} K_|q|(x k)
    log, |q| <= 1:        2 (-1)^{q+1} (ztilde/|ztilde|)^q sum_k e^{...}/k K_|q|(x k)
    with x = 2 pi tau2 |ztilde|.
    """
    q = int(q)
    absz = abs(ztilde)
    if absz == 0.0:
        raise DomainError("series requires a nonzero reduced central charge")
    phdir = ztilde / absz
    if kind == "geometric":
        if abs(q) > 2:
            raise DomainError("geometric tower implemented for |q| <= 2")
        plain, _, _ = _phase_towers(zeta_g, absz, tau2, policy, nu_max=abs(q))
        return 2.0 * (-1.0) ** q * phdir**q * plain[abs(q)]
    if kind == "log":
        if abs(q) > 1:
            raise DomainError("log tower implemented for |q| <= 1")
        _, weighted, _ = _phase_towers(zeta_g, absz, tau2, policy, nu_max=abs(q))
        return 2.0 * (-1.0) ** (q + 1) * phdir**q * weighted[abs(q)]
    raise DomainError(f"unknown ray kernel kind {kind!r}")


# ---------------------------------------------------------------------------
# contact frame, tower route


def _require_real(vec: np.ndarray, what: str, tol: float = 1e-9) -> np.ndarray:
    scale = float(np.max(np.abs(vec))) if vec.size else 0.0
    worst = float(np.max(np.abs(vec.imag))) if vec.size else 0.0
    if worst > tol * max(1.0, scale):
        raise ConvergenceError(f"{what} has imaginary residue {worst:.3e} at scale {scale:.3e}")
    return vec.real.copy()


def contact_frame(
    spec: ModelSpec,
    base: IIAPoint | IIBPoint,
    policy: TruncationPolicy | None = None,
) -> ContactFrame:
    """Contact potential and one-forms from K-Bessel towers over the support."""
    policy = policy or spec.policy
    p = mirror_forward(spec, base, policy) if isinstance(base, IIBPoint) else base
    ctx = point_context(spec, p, policy)
    fr = ctx.frame
    tau2 = ctx.tau2
    R = 0.5 * tau2
    _, _, _, _, _, F = kahler_data(spec, p.z)
    zfull = ctx.zfull
    dz = fr.d_z()
    dzeta = fr.d_zeta()
    dzt = fr.d_zetatilde()

    # classical pieces; <Zt, dzeta> = F_i dzeta^i - z^i dzetatilde_i and
    # <zeta, dzeta> = -zetatilde_i dzeta^i + zeta^i dzetatilde_i
    thp = -4.0 * math.pi * R * (F @ dzeta - zfull @ dzt)
    th3 = (
        math.pi * fr.d_sigma()
        + math.pi * (ctx.zetatilde @ dzeta - ctx.zeta @ dzt)
        - 4.0 * math.pi * (ctx.rho + ctx.c_loop) * ctx.dcK.astype(complex)
    )

    e_tau2 = fr.basis(fr.i_rho)  # radial slot carries dtau2 in the mixed frame
    charges, dropped = _support(spec, p.z, tau2, policy)
    tail = ctx.tail + dropped
    for qv, om in charges:
        zt = complex(qv[0] + qv[1:] @ p.z)
        absz = abs(zt)
        zg = float(-(qv @ ctx.zeta))
        plain, weighted, tw_tail = _phase_towers(zg, absz, tau2, policy, nu_max=1)
        tail += abs(om) * (1.0 + absz) * tw_tail
        dzg = -(qv @ dzeta)
        dZ = qv[1:] @ dz
        thp += 2j * R * om * zt * plain[0] * dzg
        bracket = dZ / zt + np.conj(dZ) / np.conj(zt) + (2.0 / tau2) * e_tau2
        thp += 2.0 * R * R * om * zt * absz * plain[1] * bracket
        th3 += (
            -(1j * R / TWO_PI)
            * om
            * absz
            * weighted[1]
            * (dZ / zt - np.conj(dZ) / np.conj(zt))
        )

    thp_iia = thp.copy()
    thp_iia[fr.i_rho] = 0.0
    thp_iia += thp[fr.i_rho] * tau2 * ctx.D0.astype(complex)
    return ContactFrame(
        f=ctx.f,
        theta_plus=thp,
        theta_3=_require_real(th3, "theta_3"),
        theta_plus_iia=thp_iia,
        frame=fr,
        tail=tail,
    )


# ---------------------------------------------------------------------------
# slowly decaying lattice sums (zero reduced charge)


_SLOW_CHECKPOINTS = (16, 24, 32, 48, 64, 96, 128, 192)


def _slow_lattice_sum(
    kernel_fn,
    tau: complex,
    checkpoints: tuple[int, ...] = _SLOW_CHECKPOINTS,
    rel_target: float = 1e-8,
) -> SumResult:
    """Power-law lattice sum by shell accumulation and 1/K extrapolation.

    kernel_fn(ms, ns, A) must decay like A^{-3} with smooth angular behaviour
    away from the lattice origin; square-shell partial sums then admit an
    asymptotic expansion in 1/K, extrapolated here by a Neville table over
    geometric checkpoints.  The returned tail bound is the spread of the two
    deepest extrapolants.
    """
    cps = sorted(set(checkpoints))
    if len(cps) < 4:
        raise DomainError("extrapolated lattice sum needs at least four checkpoints")
    acc = 0.0 + 0.0j
    xs: list[float] = []
    ys: list[complex] = []
    mark = set(cps)
    for k in range(1, cps[-1] + 1):
        ms, ns = shell_points(k)
        A = np.abs(ms * tau + ns)
        acc += complex(np.sum(kernel_fn(ms.astype(float), ns.astype(float), A)))
        if k in mark:
            xs.append(1.0 / k)
            ys.append(acc)
    tbl = list(ys)
    m = len(tbl)
    prev_top = tbl[0]
    for lev in range(1, m):
        for i in range(m - lev):
            x_lo, x_hi = xs[i], xs[i + lev]
            tbl[i] = (x_hi * tbl[i] - x_lo * tbl[i + 1]) / (x_hi - x_lo)
        if lev == m - 2:
            prev_top = tbl[0]
    est = tbl[0]
    err = abs(est - prev_top)
    if err > rel_target * max(1.0, abs(est)):
        raise ConvergenceError(
            f"lattice extrapolation spread {err:.3e} above target at scale {abs(est):.3e}"
        )
    return SumResult(est, err)


# ---------------------------------------------------------------------------
# contact frame, modular lattice route


def _charge_displays(
    params: LatticeSumParams, y: float, xs: float, policy: TruncationPolicy
) -> dict[str, SumResult]:
    """Lattice sums entering the charged corrections of the resummed forms.

    Every kernel is rational in (m, u = m tau1 + n) over powers of
    A = |m tau + n|, weighted by e^{-S} and restricted to m != 0; only the
    contact-potential kernel keeps the m = 0 rows.  Envelope bounds use
    |u| <= A and |m| tau2 <= A.
    """
    tau = params.tau
    t1, t2 = tau.real, tau.imag
    sq = math.sqrt(_qform_min_eig(tau))
    pi = math.pi

    def run(kern, env, keep_m_zero: bool = False) -> SumResult:
        def kernel(ms, ns, A):
            m = np.where(ms == 0.0, 1.0, ms)
            return kern(m, ms * t1 + ns, A)

        return lattice_kernel_sum(params, kernel, env, include_m_zero=keep_m_zero, policy=policy)

    return {
        "potential": run(
            lambda m, u, A: (1.0 / A + TWO_PI * y) / A**2,
            lambda js: (1.0 / (sq * js) + TWO_PI * y) / (sq * js) ** 2,
            keep_m_zero=True,
        ),
        "three_b": run(lambda m, u, A: 1.0 / m**2, lambda js: np.ones_like(js)),
        "three_t": run(lambda m, u, A: u / (m * m * A), lambda js: np.ones_like(js)),
        "plus_zeta0": run(
            lambda m, u, A: (
                -((A * A - 3.0 * u * u) / A**5 - TWO_PI * 1j * xs * u / A**3) / (8.0 * pi * pi)
                - (y / (4.0 * pi)) * ((m * t2) ** 2 - A * u - 2.0 * u * u) / A**4
                + (y / 2.0) * ((u + A) / A**2) * (1j * xs + u * y / A)
            ),
            lambda js: (
                (2.0 / (sq * js) ** 3 + TWO_PI * abs(xs) / (sq * js) ** 2) / (8.0 * pi * pi)
                + (y / pi) / (sq * js) ** 2
                + y * (abs(xs) + y) / (sq * js)
            ),
        ),
        "plus_zeta": run(
            lambda m, u, A: (TWO_PI * y * (u + A) + u / A) / (4.0 * pi * A**2),
            lambda js: (4.0 * pi * y / (sq * js) + 1.0 / (sq * js) ** 2) / (4.0 * pi),
        ),
        "plus_hol": run(
            lambda m, u, A: (m / A**2) * (1.0 / A + TWO_PI * y) / (8.0 * pi),
            lambda js: (1.0 / (sq * js) + TWO_PI * y) / (8.0 * pi * t2 * sq * js),
        ),
        "plus_anti": run(
            lambda m, u, A: ((u + A) / (m * A**2))
            * ((A - u) / A - TWO_PI * y * (u + A))
            / (8.0 * pi),
            lambda js: (4.0 / (sq * js) + 8.0 * pi * y) / (8.0 * pi),
        ),
        "plus_tau2": run(
            lambda m, u, A: (
                (TWO_PI * y / A**2 + 1.0 / A**3) * (u + A) * m * y / (4.0 * pi * A)
                + m * (4.0 * pi * y / A**4 + 3.0 / A**5) * (u + A) / (8.0 * pi * pi)
                - m * (4.0 * pi * y / A**3 + 3.0 / A**4) / (8.0 * pi * pi)
            ),
            lambda js: (
                (y / (TWO_PI * t2)) * (TWO_PI * y + 1.0 / (sq * js))
                + (3.0 / (8.0 * pi * pi * t2))
                * (4.0 * pi * y / (sq * js) ** 2 + 3.0 / (sq * js) ** 3)
            ),
        ),
    }


def resummed_contact_frame(
    spec: ModelSpec,
    p: IIBPoint,
    policy: TruncationPolicy | None = None,
) -> ContactFrame:
    """Contact potential and one-forms from the modular lattice route.

    The block built from coordinate differentials carries the full Kahler
    data; what remains of each charge correction is a handful of (m, n)
    lattice sums weighted by e^{-S} and restricted to m != 0.  The
    zero-charge tower contributes an Eisenstein series to the potential and
    two extrapolated power-law sums to theta_plus.  Components match
    contact_frame at the mirror image of p.
    """
    policy = policy or spec.policy
    tau = complex(p.tau)
    tau1, tau2 = tau.real, tau.imag
    z = np.asarray(p.z, dtype=complex)
    b, tmod = z.real, z.imag
    n = spec.n
    fr = Frame(n)
    iia = mirror_forward(spec, p, policy)
    zfull = np.concatenate([[1.0 + 0.0j], z])
    _, Ka, _, _, _, F = kahler_data(spec, z)

    dzeta = fr.d_zeta()
    dzt = fr.d_zetatilde()
    _, dck = _frame_dk(fr, Ka)

    thp = -2.0 * math.pi * tau2 * (F @ dzeta - zfull @ dzt)
    th3 = (
        math.pi * fr.d_sigma().astype(complex)
        + math.pi * (iia.zeta_tilde @ dzeta - iia.zeta @ dzt)
        - 4.0 * math.pi * (iia.rho + spec.c_loop) * dck.astype(complex)
    )

    h_cubic = float(np.einsum("abc,a,b,c->", spec.kabc, tmod, tmod, tmod)) / 6.0
    f = 8.0 * math.pi * tau2 * tau2 * h_cubic + 16.0 * math.pi * (
        spec.chi / (192.0 * math.pi) - spec.c_loop
    )
    tail = 0.0

    q3 = fr.zero()
    qp = fr.zero()
    for qhat, nh in spec.active_gv():
        qv = np.asarray(qhat, dtype=float)
        y = float(qv @ tmod)
        if y <= 0:
            raise DomainError("gv charge leaves the convergence cone: q_a t^a <= 0")
        xs = float(qv @ b)
        params = LatticeSumParams(
            tau=tau, weight=3.0, shift_x=xs, shift_theta=-float(qv @ p.c_upper), scale_y=y
        )
        disp = _charge_displays(params, y, xs, policy)
        tail += sum(v.tail_bound for v in disp.values()) * abs(nh)

        f += (tau2 * tau2 / TWO_PI**2) * nh * float(np.real(disp["potential"].value))

        q3[fr.s_b] += -(nh / (4.0 * math.pi)) * disp["three_b"].value * qv
        q3[fr.s_t] += (1j * nh / (4.0 * math.pi)) * disp["three_t"].value * qv

        qp[2 * n + 1] += 1j * tau2 * nh * disp["plus_zeta0"].value
        qp[fr.s_zeta][1:] += tau2 * nh * disp["plus_zeta"].value * qv
        hol = tau2**3 * nh * disp["plus_hol"].value * qv
        anti = tau2 * nh * disp["plus_anti"].value * qv
        qp[fr.s_b] += hol + anti
        qp[fr.s_t] += 1j * (hol - anti)
        qp[fr.i_rho] += 1j * tau2 * tau2 * nh * disp["plus_tau2"].value

    if spec.chi != 0:
        n0 = -0.5 * spec.chi
        e3 = eisenstein_sum(tau, 3.0, policy)
        f += (tau2 * tau2 / TWO_PI**2) * n0 * e3.real
        tail += abs(n0) * e3.tail_bound
        # zero-charge rows survive only in theta_plus; both kernels drop m = 0
        g_zeta0 = _slow_lattice_sum(
            lambda ms, ns, A: (ms != 0.0)
            * (A * A - 3.0 * (ms * tau1 + ns) ** 2)
            / A**5,
            tau,
        )
        g_tau2 = _slow_lattice_sum(lambda ms, ns, A: ms * (ms * tau1 + ns) / A**5, tau)
        qp[2 * n + 1] += (1j * tau2 / (16.0 * math.pi**2)) * spec.chi * g_zeta0.value
        qp[fr.i_rho] += (
            -(3j * tau2 * tau2 / (16.0 * math.pi**2)) * spec.chi * g_tau2.value
        )
        tail += abs(spec.chi) * (g_zeta0.tail_bound + g_tau2.tail_bound)

    th3 += q3
    thp += qp

    # dtau2 re-expansion for the axial frame: 2 dtau2/tau2 = drho/(rho+c) + dK
    d0 = fr.zero()
    d0[fr.i_rho] = 1.0 / (2.0 * (iia.rho + spec.c_loop))
    d0[fr.s_b] = Ka.real
    d0[fr.s_t] = -Ka.imag
    thp_iia = thp.copy()
    thp_iia[fr.i_rho] = 0.0
    thp_iia += thp[fr.i_rho] * tau2 * d0
    return ContactFrame(
        f=float(f),
        theta_plus=thp,
        theta_3=_require_real(th3, "resummed theta_3"),
        theta_plus_iia=thp_iia,
        frame=fr,
        tail=tail,
    )


# ---------------------------------------------------------------------------
# Darboux coordinates, axial convention


def darboux_iia(
    spec: ModelSpec,
    tp: TwistorPoint,
    policy: TruncationPolicy | None = None,
) -> DarbouxCoords:
    """Darboux coordinates from towers and ray integrals at an IIA base point."""
    if not isinstance(tp.base, IIAPoint):
        raise TypeError("axial Darboux coordinates require an IIA base point")
    policy = policy or spec.policy
    p = tp.base
    t = tp.t
    z = np.asarray(p.z, dtype=complex)
    K, _, _, _, _, F = kahler_data(spec, z)
    tau2 = _tau2_of(spec, p.rho, K)
    R = 0.5 * tau2
    zfull = np.concatenate([[1.0 + 0.0j], z])

    xi = p.zeta - 1j * R * (zfull / t + t * np.conj(zfull))

    charges, _ = _support(spec, z, tau2, policy)
    corr = np.zeros(spec.n + 1, dtype=complex)
    wsum = 0.0 + 0.0j
    rog = 0.0 + 0.0j
    for qv, om in charges:
        zt = complex(qv[0] + qv[1:] @ z)
        zg = float(-(qv @ p.zeta))
        _, weighted, _ = _phase_towers(zg, abs(zt), tau2, policy, nu_max=0)
        wsum += om * zt * weighted[0]
        vals = _ray_integrals(
            t, zt, zg, tau2, policy, ("tker_log", "tker_rogers"), eps_ray=tp.eps
        )
        corr += om * qv * vals["tker_log"]
        rog += om * vals["tker_rogers"]

    wcal = R * wsum
    xi_tilde = p.zeta_tilde - 1j * R * (F / t + t * np.conj(F)) - corr / (8.0 * math.pi**2)
    pair = complex(F @ p.zeta - zfull @ p.zeta_tilde)
    alpha = (
        p.sigma
        - 1j * R * (pair / t + t * np.conjugate(pair))
        - 8j * spec.c_loop * cmath.log(t)
        + (1.0 / (4j * math.pi**2)) * (wcal / t + t * np.conjugate(wcal) - rog / TWO_PI)
    )
    return DarbouxCoords("iia", xi, xi_tilde, complex(alpha))


# ---------------------------------------------------------------------------
# Darboux coordinates, modular convention


def fiber_poles(tau: complex, m: int, n: int) -> tuple[float, float]:
    """Real fiber poles t_+/- = (m tau1 + n +/- |m tau + n|) / (m tau2), m != 0."""
    if m == 0:
        raise DomainError("the m = 0 ray has poles only at t = 0 and infinity")
    u = m * tau.real + n
    A = abs(m * tau + n)
    return (u + A) / (m * tau.imag), (u - A) / (m * tau.imag)


def _pole_ratios(t: complex, tau1: float, tau2: float, ms, ns, A):
    """The two pole kernels (1 + t_+ t)/(t - t_+) and (1 - t_+ t)/(t - t_+).

    t_+ = (m tau1 + n + A)/(m tau2) for m != 0; the m = 0 values demanded by
    the lattice displays (1/t for n < 0, -t resp. t for n > 0) are the ray
    limits of the m != 0 kernels, so the full-lattice sums stay continuous
    across the m = 0 column.
    """
    u = ms * tau1 + ns
    mz = ms != 0
    msafe = np.where(mz, ms, 1.0)
    tp = (u + A) / (msafe * tau2)
    diff = np.where(mz, t - tp, 1.0)
    r1 = np.where(mz, (1.0 + tp * t) / diff, np.where(ns < 0, 1.0 / t, -t))
    r2 = np.where(mz, (1.0 - tp * t) / diff, np.where(ns < 0, 1.0 / t, t))
    return r1, r2


def _ratio_envelope(t: complex, tau: complex, eps: float):
    """Shellwise bound on the pole kernels, compatible with the t_+ guard.

    |t_+| <= 2 A / (|m| tau2) grows linearly on shell js while the guard
    keeps |t - t_+| >= eps min(1, 2/(|m| tau2)); off the real fiber axis the
    distance |Im t| is a second, js-independent floor.
    """
    tau2 = tau.imag
    nu = abs(t.imag)
    m0 = max(abs(t), 1.0 / abs(t))
    grow = 2.0 * (abs(tau) + 1.0) / tau2 * abs(t)

    def env(js):
        inv_d = np.maximum(1.0, js * tau2 / 2.0) / eps
        if nu > 0:
            inv_d = np.minimum(inv_d, 1.0 / nu)
        return (1.0 + grow * js) * inv_d + m0

    return env


def _resonance_envelope(t: complex, xi0: complex, tau: complex, eps: float):
    """Shellwise bound on |m xi0 + n|^{-1} under the fiber pole guard.

    Off the real fiber axis the quadratic form of xi0 gives a 1/js bound;
    on it, |m xi0 + n| factors through the distances to t_+ of (m, n) and of
    (-m, -n), both kept at bay by the guard.
    """
    tau2 = tau.imag
    tr = abs(xi0) ** 2 + 1.0
    det = xi0.imag**2
    lam = 0.5 * (tr - math.sqrt(max(tr * tr - 4.0 * det, 0.0)))
    c_env = math.sqrt(max(lam, 0.0))
    cap = 2.0 * abs(t) / (tau2 * eps * eps)

    def env(js):
        guarded = cap * np.maximum(1.0, js * tau2 / 2.0) ** 2
        if c_env > 0:
            return np.minimum(1.0 / (c_env * js), guarded)
        return guarded

    return env


def _pole_guard(t: complex, tau: complex, eps: float, ms: np.ndarray, ns: np.ndarray, A: np.ndarray) -> None:
    """Reject fibers within eps of the local pole spacing along any active ray."""
    sel = ms != 0
    if not np.any(sel):
        return
    m = ms[sel]
    u = m * tau.real + ns[sel]
    tplus = (u + A[sel]) / (m * tau.imag)
    spacing = np.minimum(1.0, 2.0 / (np.abs(m) * tau.imag))
    dist = np.abs(t - tplus)
    bad = dist < eps * spacing
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DomainError(
            f"fiber within {eps:g} of pole t_+({int(m[i])},{int(ns[sel][i])}) = {tplus[i]:.6g}"
        )


def darboux_iib(
    spec: ModelSpec,
    tp: TwistorPoint,
    policy: TruncationPolicy | None = None,
) -> DarbouxCoords:
    """Darboux coordinates from modular lattice sums at an IIB base point.

    alpha is returned with the fiber-logarithm shift matching the model's
    one-loop constant, so the contact identity holds with the plain contact
    potential f of the same model.
    """
    if not isinstance(tp.base, IIBPoint):
        raise TypeError("modular Darboux coordinates require an IIB base point")
    policy = policy or spec.policy
    p = tp.base
    t = tp.t
    tau = complex(p.tau)
    tau1, tau2 = tau.real, tau.imag
    R = 0.5 * tau2
    z = np.asarray(p.z, dtype=complex)
    b, tmod = z.real, z.imag
    n = spec.n

    iia = mirror_forward(spec, p, policy)
    mc = mirror_corrections(spec, tau, z, p.c_upper, policy)
    zt_inst = np.concatenate([[mc.ztilde_0], mc.ztilde_a])
    ztld_cl = iia.zeta_tilde - zt_inst
    sigma_cl = iia.sigma - mc.sigma_inst(tau1, b, p.c_upper)
    _, _, _, _, _, F_cl = kahler_data(spec, z, part="classical")
    zfull = np.concatenate([[1.0 + 0.0j], z])

    xi = iia.zeta + R * (zfull / t - t * np.conj(zfull))
    xit_cl = ztld_cl + R * (F_cl / t - t * np.conj(F_cl))
    pair_cl = complex(F_cl @ iia.zeta - zfull @ ztld_cl)
    alpha_cl = sigma_cl + R * (pair_cl / t - t * np.conjugate(pair_cl))
    xi0 = complex(xi[0])

    xit_inst = np.zeros(n + 1, dtype=complex)
    alpha_inst = 0.0 + 0.0j

    eps = tp.eps
    env_r = _ratio_envelope(t, tau, eps)
    env_res = _resonance_envelope(t, xi0, tau, eps)

    def ratio_kernels(kern):
        def kernel(ms, ns, A):
            _pole_guard(t, tau, eps, ms, ns, A)
            r1, r2 = _pole_ratios(t, tau1, tau2, ms, ns, A)
            return kern(ms, ms * tau1 + ns, A, r1, r2)

        return kernel

    sq = math.sqrt(_qform_min_eig(tau))
    for qhat, nh in spec.active_gv():
        qv = np.asarray(qhat, dtype=float)
        y = float(qv @ tmod)
        if y <= 0:
            raise DomainError("gv charge leaves the convergence cone: q_a t^a <= 0")
        xs = float(qv @ b)
        params = LatticeSumParams(
            tau=tau, weight=3.0, shift_x=xs, shift_theta=-float(qv @ p.c_upper), scale_y=y
        )
        b1 = lattice_kernel_sum(
            params,
            ratio_kernels(lambda m, u, A, r1, r2: r1 / A**2),
            lambda js: env_r(js) / (sq * js) ** 2,
            include_m_zero=True,
            policy=policy,
        )
        b2 = lattice_kernel_sum(
            params,
            ratio_kernels(
                lambda m, u, A, r1, r2: (1.0 / (m * (xi0 - tau1) + u) + u / A**2) * r1 / A**2
            ),
            lambda js: (env_res(js) + 1.0 / (sq * js)) * env_r(js) / (sq * js) ** 2,
            include_m_zero=True,
            policy=policy,
        )
        b3 = lattice_kernel_sum(
            params,
            ratio_kernels(lambda m, u, A, r1, r2: (xs * r1 + 1j * y * r2) / A**2),
            lambda js: (abs(xs) + y) * env_r(js) / (sq * js) ** 2,
            include_m_zero=True,
            policy=policy,
        )
        b4 = lattice_kernel_sum(
            params,
            ratio_kernels(
                lambda m, u, A, r1, r2: (u * (1.0 / t - t) - 2.0 * m * tau2) * r1 / A**4
            ),
            lambda js: (abs(1.0 / t - t) + 2.0) * env_r(js) / (sq * js) ** 3,
            include_m_zero=True,
            policy=policy,
        )
        xit_inst[1:] += (tau2 / (8.0 * math.pi**2)) * nh * b1.value * qv
        xit_inst[0] += (1j * tau2 / (16.0 * math.pi**3)) * nh * b2.value - (
            tau2 / (8.0 * math.pi**2)
        ) * nh * b3.value
        alpha_inst += (1j * tau2**2 / (32.0 * math.pi**3)) * nh * b4.value

    if spec.chi != 0:
        if abs(xi0.imag) < 1e-8 * (1.0 + abs(xi0)):
            raise DomainError(
                "zero-charge fiber sums need the fiber off the real locus (Im xi^0 ~ 0)"
            )
        n0 = -0.5 * spec.chi

        def g0_b2(ms, ns, A):
            _pole_guard(t, tau, eps, ms, ns, A)
            r1, _ = _pole_ratios(t, tau1, tau2, ms, ns, A)
            u = ms * tau1 + ns
            return (1.0 / (ms * xi0 + ns) + u / A**2) * r1 / A**2

        def g0_b4(ms, ns, A):
            _pole_guard(t, tau, eps, ms, ns, A)
            r1, _ = _pole_ratios(t, tau1, tau2, ms, ns, A)
            u = ms * tau1 + ns
            return (u * (1.0 / t - t) - 2.0 * ms * tau2) * r1 / A**4

        b2_0 = _slow_lattice_sum(g0_b2, tau)
        b4_0 = _slow_lattice_sum(g0_b4, tau)
        xit_inst[0] += (1j * tau2 / (16.0 * math.pi**3)) * n0 * b2_0.value
        alpha_inst += (1j * tau2**2 / (32.0 * math.pi**3)) * n0 * b4_0.value

    xit = xit_cl + xit_inst
    alpha_thm = -0.5 * (alpha_cl - complex(xi @ xit_cl)) + alpha_inst
    shift = 4j * (spec.c_loop - spec.chi / (192.0 * math.pi)) * cmath.log(t)
    return DarbouxCoords(
        "iib",
        xi,
        xit,
        complex(alpha_thm + shift),
        xi_tilde_cl=xit_cl,
        alpha_cl=complex(alpha_cl),
        xi_tilde_inst=xit_inst,
        alpha_inst=complex(alpha_inst),
    )


# ---------------------------------------------------------------------------
# finite-difference verification of the contact identity


def _fd_richardson(fun, v0: np.ndarray, k: int, h: float):
    step = h * max(1.0, abs(float(v0[k])))
    ek = np.zeros_like(v0)
    ek[k] = 1.0
    coarse = (fun(v0 + step * ek) - fun(v0 - step * ek)) / (2.0 * step)
    fine = (fun(v0 + 0.5 * step * ek) - fun(v0 - 0.5 * step * ek)) / step
    return (4.0 * fine - coarse) / 3.0, coarse


def _contact_lhs(convention: str, coords: DarbouxCoords, dvec: np.ndarray) -> complex:
    n1 = coords.xi.size
    dxi = dvec[:n1]
    dxit = dvec[n1 : 2 * n1]
    dalpha = dvec[2 * n1]
    if convention == "iia":
        return -TWO_PI * 1j * (dalpha + coords.xi_tilde @ dxi - coords.xi @ dxit)
    return 2.0 * TWO_PI * 1j * (dalpha - coords.xi_tilde @ dxi)


def verify_darboux(
    spec: ModelSpec,
    tp: TwistorPoint,
    h: float = 1e-5,
    policy: TruncationPolicy | None = None,
) -> DarbouxReport:
    """Check the contact identity at one twistor point by finite differences.

    Differentiates the Darboux coordinates over every base coordinate and the
    fiber with Richardson-extrapolated central differences and compares the
    resulting contact combination against the independently assembled frame
    (f, theta_+, theta_3).  Residuals are relative to the largest right-hand
    component.  step_warning flags directions where extrapolation failed to
    improve on the coarse step, the signature of a too-small h.
    """
    policy = policy or spec.policy
    conv = tp.convention
    t = tp.t
    n = spec.n

    if conv == "iia":
        p = tp.base
        cf = contact_frame(spec, p, policy)
        v0 = pack_iia(p)

        def coords_at(v: np.ndarray) -> DarbouxCoords:
            return darboux_iia(spec, TwistorPoint(unpack_iia(n, v), t, tp.eps), policy)

        rhs_base = cf.theta_plus_iia / t - 2j * cf.theta_3 + t * cf.theta_minus_iia
    else:
        p = tp.base
        cf = contact_frame(spec, p, policy)
        v0 = pack_iib(p)
        jac = mirror_jacobian(spec, p, policy=policy)
        jmix = jac.copy()
        jmix[0, :] = 0.0
        jmix[0, 1] = 1.0  # the radial mixed slot is tau2, an IIB coordinate
        theta_p = cf.theta_plus @ jmix
        theta_3 = cf.theta_3 @ jmix
        theta_m = cf.theta_minus @ jmix

        def coords_at(v: np.ndarray) -> DarbouxCoords:
            return darboux_iib(spec, TwistorPoint(unpack_iib(n, v), t, tp.eps), policy)

        rhs_base = 1j * theta_p / t - 2j * theta_3 - 1j * t * theta_m

    center = coords_at(v0)
    fun = lambda v: coords_at(v).packed()  # noqa: E731

    resid = np.zeros(v0.size)
    resid_coarse = np.zeros(v0.size)
    for k in range(v0.size):
        d_rich, d_coarse = _fd_richardson(fun, v0, k, h)
        lhs = _contact_lhs(conv, center, d_rich)
        lhs_c = _contact_lhs(conv, center, d_coarse)
        resid[k] = abs(lhs - rhs_base[k])
        resid_coarse[k] = abs(lhs_c - rhs_base[k])

    # fiber derivative: holomorphic part against f/t, antiholomorphic ~ 0
    def fun_t(tv: np.ndarray) -> np.ndarray:
        tc = complex(tv[0], tv[1])
        pt = TwistorPoint(tp.base, tc, tp.eps)
        c = darboux_iia(spec, pt, policy) if conv == "iia" else darboux_iib(spec, pt, policy)
        return c.packed()

    tv0 = np.array([t.real, t.imag])
    dx, _ = _fd_richardson(fun_t, tv0, 0, h)
    dy, _ = _fd_richardson(fun_t, tv0, 1, h)
    d_hol = 0.5 * (dx - 1j * dy)
    d_anti = 0.5 * (dx + 1j * dy)
    lhs_t = _contact_lhs(conv, center, d_hol)
    lhs_anti = _contact_lhs(conv, center, d_anti)
    rhs_t = cf.f / t

    scale = max(float(np.max(np.abs(rhs_base))), abs(rhs_t), 1.0)
    base_res = float(np.max(resid)) / scale
    fiber_res = abs(lhs_t - rhs_t) / scale
    anti_res = abs(lhs_anti) / scale
    warn = bool(np.any(resid > np.maximum(0.75 * resid_coarse, 1e-10 * scale)))
    return DarbouxReport(
        convention=conv,
        max_residual=max(base_res, fiber_res, anti_res),
        base_residual=base_res,
        fiber_residual=fiber_res,
        antiholo_residual=anti_res,
        scale=scale,
        f=cf.f,
        step_warning=warn,
    )
