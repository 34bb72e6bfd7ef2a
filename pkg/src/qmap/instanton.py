"""BPS instanton towers and the corrected hyperkahler data they generate.

The spectrum of a model is mutually local: a pure-flux tower carrying index
-chi, and for every positive support charge qhat (index n_qhat) the two
families (q0, +-qhat) with q0 ranging over the integers.  Every charge gamma
with axionic pairing zeta_gamma and central charge Z_gamma contributes
K-Bessel towers

    V_gamma = (1/2 pi) sum_{k>=1} e^{2 pi i k zeta_gamma} K_0(2 pi k |Z_gamma|),

together with the matching K_1 towers weighted by |Z_gamma| and |Z_gamma|/k
that build the connection 1-form, the moment map, and the corrections to the
metric scalars f, f_3 and to rho.

Geometry conventions:
  * points are given in the (rho, z, zeta, zetatilde, sigma) coordinates; the
    dilaton-like radius is tau2 = 4 sqrt((rho + c_loop) e^K), and central
    charges are normalized as Z_gamma = tau2 (q0 + q_a z^a);
  * all 1-forms are coefficient vectors over the frames.Frame order
    (rho, b^a, t^a, zeta^I, zetatilde_I, sigma);
  * charges are accumulated in exact +-gamma pairs, so every index-weighted
    total is real up to roundoff; a guard raises ConvergenceError otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _special

from .cask import central_charge, kahler_data, zeta_pairing
from .frames import Frame
from .kernels import (
    TWO_PI,
    ConvergenceError,
    DomainError,
    TruncationPolicy,
)
from .model import Charge, IIAPoint, ModelSpec

__all__ = [
    "CompatReport",
    "InstContext",
    "InstEval",
    "compat_tensor",
    "hk_scalars",
    "point_context",
    "v_a_inst",
    "w_forms",
]

_X_MARGIN = 3.0
_REAL_TOL = 1e-9
_N_CAP = 2_000_000


def _cutoff(policy: TruncationPolicy) -> float:
    return -math.log(policy.series_tail_tol) + _X_MARGIN


def _envelope(x: float) -> float:
    """Upper bound for K_0 and K_1 at argument x > 0."""
    return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x + 0.5 / x)


def _real(value: complex, what: str) -> float:
    v = complex(value)
    if abs(v.imag) > _REAL_TOL * (1.0 + abs(v.real)):
        raise ConvergenceError(f"{what} acquired an imaginary part {v.imag:.3e}")
    return v.real


def _real_array(arr: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(arr)
    scale = 1.0 + float(np.max(np.abs(a.real))) if a.size else 1.0
    if a.size and float(np.max(np.abs(a.imag))) > _REAL_TOL * scale:
        raise ConvergenceError(f"{what} acquired an imaginary part")
    return np.ascontiguousarray(a.real)


def _tower_sums(zeta_g: float, absz: float, policy: TruncationPolicy):
    """K-Bessel towers of one charge.

    Returns (s0, s1, s1n, tail) with
        s0  = sum_k e^{2 pi i k zeta_g} K_0(2 pi k absz)
        s1  = absz * sum_k e^{...} K_1(2 pi k absz)
        s1n = absz * sum_k e^{...} K_1(2 pi k absz) / k
    and a coarse envelope bound on the dropped k > k_max remainder.
    """
    x = TWO_PI * absz
    if x <= 0.0:
        raise DomainError("central charge must be nonzero inside a tower")
    xcut = _cutoff(policy)
    n_max = max(1, int(math.ceil(xcut / x)))
    if n_max > _N_CAP:
        raise ConvergenceError("instanton tower too long; point too close to the cone wall")
    ks = np.arange(1, n_max + 1, dtype=float)
    arg = x * ks
    k0 = _special.kv(0, arg)
    k1 = _special.kv(1, arg)
    ph = np.exp(2j * math.pi * ks * zeta_g)
    s0 = complex(np.sum(ph * k0))
    s1 = absz * complex(np.sum(ph * k1))
    s1n = absz * complex(np.sum(ph * k1 / ks))
    tail = (1.0 + absz) * _envelope(x * (n_max + 1)) / max(1.0 - math.exp(-x), 1e-300)
    return s0, s1, s1n, tail


def _support(spec: ModelSpec, z: np.ndarray, tau2: float, policy: TruncationPolicy):
    """Charges whose leading Bessel term exceeds the series tolerance.

    Yields (qvec, index) in exact +-gamma pairs; charges beyond the cutoff
    radius r_cut = xcut / (2 pi tau2) are dropped into the returned tail
    estimate.  The q0 range of a qhat family is the integer interval where
    |q0 + qhat.z| <= r_cut.
    """
    n = spec.n
    xcut = _cutoff(policy)
    r_cut = xcut / (TWO_PI * tau2)
    geom = max(1.0 - math.exp(-TWO_PI * tau2), 1e-300)
    charges: list[tuple[np.ndarray, float]] = []
    dropped = 0.0

    if spec.chi != 0:
        q_max = int(math.floor(r_cut))
        for q0 in range(1, q_max + 1):
            qv = np.zeros(n + 1)
            qv[0] = q0
            charges.append((qv, float(-spec.chi)))
            charges.append((-qv, float(-spec.chi)))
        d_next = float(q_max + 1)
        dropped += (
            2.0
            * abs(spec.chi)
            * (1.0 + tau2 * d_next)
            * _envelope(TWO_PI * tau2 * d_next)
            / geom
        )

    for qhat, n_q in spec.active_gv():
        qh = np.asarray(qhat, dtype=float)
        w = complex(np.dot(qh, z))
        h = w.imag
        if h <= 0.0:
            raise DomainError("support charge leaves the convergence cone q_a t^a > 0")
        if h > r_cut:
            dropped += 2.0 * abs(n_q) * (1.0 + tau2 * h) * _envelope(TWO_PI * tau2 * h) / geom
            continue
        half = math.sqrt(max(r_cut * r_cut - h * h, 0.0))
        lo = int(math.ceil(-w.real - half))
        hi = int(math.floor(-w.real + half))
        for q0 in range(lo, hi + 1):
            qv = np.concatenate([[float(q0)], qh])
            charges.append((qv, float(n_q)))
            charges.append((-qv, float(n_q)))
        for q_edge in (lo - 1, hi + 1):
            d = abs(q_edge + w)
            dropped += 2.0 * abs(n_q) * (1.0 + tau2 * d) * _envelope(TWO_PI * tau2 * d) / geom

    return charges, dropped


@dataclass
class _Towers:
    """Index-weighted accumulators of one charge loop."""

    sum_p: complex
    t_corr: np.ndarray
    wv: np.ndarray
    w_inst: np.ndarray
    vsq: np.ndarray
    a_v: np.ndarray
    eta_sum: np.ndarray
    drho_inst: np.ndarray
    tail: float


def _charge_loop(
    spec: ModelSpec,
    zfull: np.ndarray,
    zeta: np.ndarray,
    tau2: float,
    d0: np.ndarray,
    frame: Frame,
    policy: TruncationPolicy,
) -> _Towers:
    n, dim = spec.n, frame.dim
    dz_rows = frame.d_z()
    dzeta_rows = frame.d_zeta()
    acc = _Towers(
        sum_p=0.0 + 0.0j,
        t_corr=np.zeros((n + 1, n + 1), dtype=complex),
        wv=np.zeros(n + 1, dtype=complex),
        w_inst=np.zeros((n + 1, dim), dtype=complex),
        vsq=np.zeros((dim, dim), dtype=complex),
        a_v=np.zeros(dim, dtype=complex),
        eta_sum=np.zeros(dim, dtype=complex),
        drho_inst=np.zeros(dim, dtype=complex),
        tail=0.0,
    )
    charges, dropped = _support(spec, zfull[1:], tau2, policy)
    acc.tail += dropped
    for qvec, om in charges:
        zt = complex(qvec @ zfull)
        abszt = abs(zt)
        zg = float(-(qvec @ zeta))
        s0, s1, s1n, tail = _tower_sums(zg, tau2 * abszt, policy)
        acc.tail += abs(om) * tail
        v_g = s0 / TWO_PI
        dzt = qvec[1:] @ dz_rows
        dzg = -(qvec @ dzeta_rows)
        ratio = dzt / zt - np.conj(dzt / zt)
        omega_g = dzt + zt * d0
        a_form = -(s1 / (2.0 * TWO_PI)) * ratio
        acc.sum_p += om * s1n
        acc.t_corr += om * v_g * np.outer(qvec, qvec)
        acc.wv += om * s1 * qvec
        acc.w_inst -= om * np.outer(qvec, a_form - 1j * v_g * dzg)
        acc.vsq += om * v_g * np.outer(omega_g, np.conj(omega_g))
        acc.a_v += om * s1 * omega_g
        acc.eta_sum += om * (1j / (2.0 * TWO_PI**2)) * s1n * ratio
        re_dlog = np.real(dzt / zt) + d0
        absz = tau2 * abszt
        acc.drho_inst += om * (2j * math.pi * s1 * dzg - TWO_PI * absz * absz * s0 * re_dlog)
    return acc


@dataclass
class InstContext:
    """Everything the corrected quaternionic metric needs at one point.

    Scalars and the compatibility tensor follow the moment-map normalization
    f = 16 pi (rho + rho_inst); forms are frame coefficient vectors.  vsq and
    a_v are the index-weighted sums of V_gamma |dZt + Zt D0|^2 and of
    s1_gamma (dZt + Zt D0) that enter the base and mixed metric blocks.
    """

    spec: ModelSpec
    frame: Frame
    rho: float
    c_loop: float
    tau2: float
    K: float
    z: np.ndarray
    zfull: np.ndarray
    zeta: np.ndarray
    zetatilde: np.ndarray
    # scalars
    f: float
    f3: float
    f_inst: float
    rho_inst: float
    rho3_inst: float
    gnvv: float
    # tensors over charge indices
    T: np.ndarray
    T_inv: np.ndarray
    N_inst: np.ndarray
    Wv: np.ndarray
    W_cl: np.ndarray
    W_inst: np.ndarray
    W: np.ndarray
    # frame forms
    dK: np.ndarray
    dcK: np.ndarray
    D0: np.ndarray
    drho_inst: np.ndarray
    eta_plus: np.ndarray
    eta_minus: np.ndarray
    ivg: np.ndarray
    # metric-block accumulators
    vsq: np.ndarray
    a_v: np.ndarray
    tail: float

    @property
    def rho_plus(self) -> float:
        return 0.5 * (self.rho_inst + self.rho3_inst)

    @property
    def rho_minus(self) -> float:
        return 0.5 * (self.rho_inst - self.rho3_inst)


@dataclass(frozen=True)
class InstEval:
    """Corrected scalars and 1-forms at a point (interface of hk_scalars)."""

    f: float
    f3: float
    f_inst: float
    rho_inst: float
    rho3_inst: float
    gNVV: float
    T_matrix: np.ndarray
    W: np.ndarray
    N_inst: np.ndarray
    eta_plus: np.ndarray
    eta_minus: np.ndarray


@dataclass(frozen=True)
class CompatReport:
    """Compatibility tensor T at a point with its degeneracy diagnostics."""

    t_matrix: np.ndarray
    det: float
    signature: tuple[int, int]
    degenerate: bool
    t00_resummed: float | None


def _tau2_of(spec: ModelSpec, rho: float, K: float) -> float:
    shifted = rho + spec.c_loop
    if shifted <= 0.0:
        raise DomainError("rho + c_loop must be positive")
    return 4.0 * math.sqrt(shifted * math.exp(K))


def _frame_dk(frame: Frame, Ka: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(dK, d^cK) from the holomorphic gradient K_a."""
    dk = np.zeros(frame.dim)
    dck = np.zeros(frame.dim)
    dk[frame.s_b] = 2.0 * Ka.real
    dk[frame.s_t] = -2.0 * Ka.imag
    dck[frame.s_b] = 2.0 * Ka.imag
    dck[frame.s_t] = 2.0 * Ka.real
    return dk, dck


def point_context(
    spec: ModelSpec, point: IIAPoint, policy: TruncationPolicy | None = None
) -> InstContext:
    """Assemble the full instanton-corrected data at one point."""
    policy = policy or spec.policy
    n = spec.n
    frame = Frame(n)
    z = np.asarray(point.z, dtype=complex)
    K, Ka, _, _, tau_mat, _ = kahler_data(spec, z)
    tau2 = _tau2_of(spec, point.rho, K)
    zfull = np.concatenate([[1.0 + 0.0j], z])
    zeta = np.asarray(point.zeta, dtype=float)
    zetatilde = np.asarray(point.zeta_tilde, dtype=float)

    dk, dck = _frame_dk(frame, Ka)
    d0 = frame.basis(frame.i_rho).real / (2.0 * (point.rho + spec.c_loop)) + 0.5 * dk

    acc = _charge_loop(spec, zfull, zeta, tau2, d0, frame, policy)

    f_inst = _real(acc.sum_p, "f_inst") / math.pi
    rho_inst = f_inst / (16.0 * math.pi)
    t_corr = _real_array(acc.t_corr, "compatibility correction")
    t_corr = 0.5 * (t_corr + t_corr.T)
    T = -tau_mat.imag - t_corr
    N_inst = -2.0 * t_corr

    eigs = np.linalg.eigvalsh(T)
    scale = float(np.max(np.abs(eigs)))
    if scale == 0.0 or float(np.min(np.abs(eigs))) <= 1e-12 * scale:
        raise DomainError("compatibility tensor is degenerate at this point")
    T_inv = np.linalg.inv(T)

    wv = _real_array(1j * acc.wv / math.pi, "W(V)")
    dzeta_rows = frame.d_zeta()
    dzetatilde_rows = frame.d_zetatilde()
    w_cl = dzetatilde_rows - tau_mat @ dzeta_rows
    w_tot = w_cl + acc.w_inst

    # classical parts of g_N(V,V) and iota_V g_N cancel exactly against the
    # moment-map terms (z^T (-Im tau) zbar = e^-K / 2 and the gradient identity
    # (N zbar)_a = -e^-K K_a); keep only the exponentially small remainders
    # so that rho3_inst and eta_+- decay cleanly at weak coupling.
    shifted = point.rho + spec.c_loop
    gnvv_corr = -8.0 * math.pi * tau2 * tau2 * float(
        np.real(zfull @ t_corr @ np.conj(zfull))
    ) + TWO_PI * float(wv @ T_inv @ wv)
    gnvv = 64.0 * math.pi * shifted + gnvv_corr

    f = 16.0 * math.pi * point.rho + f_inst
    f3 = f - 0.5 * gnvv
    rho3_inst = (f_inst / TWO_PI - gnvv_corr / (2.0 * TWO_PI)) / 8.0

    tz_c = -t_corr @ zfull
    piece = np.zeros(frame.dim)
    piece[frame.s_b] = -2.0 * tz_c[1:].imag
    piece[frame.s_t] = 2.0 * tz_c[1:].real
    ivg_corr = TWO_PI * (tau2 * tau2 * piece + (T_inv @ wv) @ w_tot.real)
    ivg = -16.0 * math.pi * shifted * dck + ivg_corr

    eta_sum = _real_array(acc.eta_sum, "eta restriction")
    eta_plus = -ivg_corr / (2.0 * TWO_PI) + 2.0 * (rho_inst + rho3_inst) * dck
    eta_minus = (
        -2.0 * eta_sum
        - ivg_corr / (2.0 * TWO_PI)
        + 2.0 * (rho3_inst - rho_inst) * dck
    )

    drho_inst = _real_array(acc.drho_inst / (4.0 * TWO_PI**2), "drho_inst")

    return InstContext(
        spec=spec,
        frame=frame,
        rho=point.rho,
        c_loop=spec.c_loop,
        tau2=tau2,
        K=K,
        z=z,
        zfull=zfull,
        zeta=zeta,
        zetatilde=zetatilde,
        f=f,
        f3=f3,
        f_inst=f_inst,
        rho_inst=rho_inst,
        rho3_inst=rho3_inst,
        gnvv=gnvv,
        T=T,
        T_inv=T_inv,
        N_inst=N_inst,
        Wv=wv,
        W_cl=w_cl,
        W_inst=acc.w_inst,
        W=w_tot,
        dK=dk,
        dcK=dck,
        D0=d0,
        drho_inst=drho_inst,
        eta_plus=eta_plus,
        eta_minus=eta_minus,
        ivg=ivg,
        vsq=acc.vsq,
        a_v=acc.a_v,
        tail=acc.tail,
    )


def hk_scalars(
    spec: ModelSpec, point: IIAPoint, policy: TruncationPolicy | None = None
) -> InstEval:
    """Corrected scalars f, f3, the compatibility tensor and the fiber forms."""
    ctx = point_context(spec, point, policy)
    return InstEval(
        f=ctx.f,
        f3=ctx.f3,
        f_inst=ctx.f_inst,
        rho_inst=ctx.rho_inst,
        rho3_inst=ctx.rho3_inst,
        gNVV=ctx.gnvv,
        T_matrix=ctx.T,
        W=ctx.W,
        N_inst=ctx.N_inst,
        eta_plus=ctx.eta_plus,
        eta_minus=ctx.eta_minus,
    )


def w_forms(
    spec: ModelSpec, point: IIAPoint, policy: TruncationPolicy | None = None
) -> np.ndarray:
    """Corrected fiber 1-forms W_I, stacked as rows over the frame."""
    return point_context(spec, point, policy).W


def v_a_inst(
    spec: ModelSpec,
    point: IIAPoint,
    gamma: Charge,
    which: str = "V",
    policy: TruncationPolicy | None = None,
):
    """Single-charge towers.

    which = "V" returns the scalar V_gamma; "A" and "eta" return the
    coefficient pair [c, cbar] of the 1-form c dZ_gamma + cbar dZbar_gamma
    with Z_gamma = tau2 (q0 + q_a z^a).
    """
    policy = policy or spec.policy
    if gamma.is_zero:
        raise DomainError("towers are defined for nonzero charges")
    z = np.asarray(point.z, dtype=complex)
    K, _, _, _, _, _ = kahler_data(spec, z)
    tau2 = _tau2_of(spec, point.rho, K)
    zt = central_charge(spec, z, gamma)
    if zt == 0:
        raise DomainError("central charge vanishes for this charge")
    zg = zeta_pairing(gamma, np.asarray(point.zeta, dtype=float))
    s0, s1, s1n, _ = _tower_sums(zg, tau2 * abs(zt), policy)
    if which == "V":
        return s0 / TWO_PI
    z_g = tau2 * zt
    if which == "A":
        c = -s1 / (2.0 * TWO_PI)
        return np.array([c / z_g, -c / np.conj(z_g)])
    if which == "eta":
        c = 1j * s1n / (2.0 * TWO_PI**2)
        return np.array([c / z_g, -c / np.conj(z_g)])
    raise DomainError(f"unknown tower selector {which!r}")


def compat_tensor(
    spec: ModelSpec, point: IIAPoint, policy: TruncationPolicy | None = None
) -> CompatReport:
    """Compatibility tensor with degeneracy diagnostics.

    For a pure-flux spectrum the (0,0) entry is also evaluated through the
    modular lattice route (exact power parts plus a K-Bessel part), giving an
    independent cross-check of the tower truncation.
    """
    policy = policy or spec.policy
    n = spec.n
    frame = Frame(n)
    z = np.asarray(point.z, dtype=complex)
    K, Ka, _, _, tau_mat, _ = kahler_data(spec, z)
    tau2 = _tau2_of(spec, point.rho, K)
    zfull = np.concatenate([[1.0 + 0.0j], z])
    zeta = np.asarray(point.zeta, dtype=float)
    dk, _ = _frame_dk(frame, Ka)
    d0 = frame.basis(frame.i_rho).real / (2.0 * (point.rho + spec.c_loop)) + 0.5 * dk

    acc = _charge_loop(spec, zfull, zeta, tau2, d0, frame, policy)
    t_corr = _real_array(acc.t_corr, "compatibility correction")
    t_corr = 0.5 * (t_corr + t_corr.T)
    T = -tau_mat.imag - t_corr

    eigs = np.linalg.eigvalsh(T)
    scale = float(np.max(np.abs(eigs)))
    degenerate = scale == 0.0 or float(np.min(np.abs(eigs))) <= 1e-10 * scale
    signature = (int(np.sum(eigs > 0)), int(np.sum(eigs < 0)))

    t00 = None
    if not spec.active_gv() and spec.chi != 0:
        from .kernels import LatticeSumParams, bps_sum_derivatives

        params = LatticeSumParams(tau=complex(zeta[0], tau2))
        deriv = bps_sum_derivatives(params, nu=2, which="t1t1", policy=policy, gamma_zero=True)
        t00 = float(-tau_mat[0, 0].imag - spec.chi / (4.0 * TWO_PI**3) * deriv.real)
    elif not spec.active_gv():
        t00 = float(-tau_mat[0, 0].imag)

    return CompatReport(
        t_matrix=T,
        det=float(np.linalg.det(T)),
        signature=signature,
        degenerate=degenerate,
        t00_resummed=t00,
    )
