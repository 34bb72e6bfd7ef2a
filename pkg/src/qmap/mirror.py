"""Coordinate change between the two axio-dilaton charts.

mirror_forward maps (tau, z, c^a, c_a, c_0, psi) to (rho, z, zeta,
zeta_tilde, sigma).  The axionic coordinates pick up lattice-sum corrections
supported on the gv charges; those sums are evaluated with the shell
machinery from kernels (exact exponential action, rigorous tail bounds) and
are real-valued up to roundoff.  mirror_inverse exploits the triangular
structure of the map: the corrections depend only on (tau, z, c^a), all of
which are recovered before any correction has to be evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cask import kahler_data
from .instanton import _real
from .kernels import (
    TWO_PI,
    ConvergenceError,
    DomainError,
    LatticeSumParams,
    SumResult,
    TruncationPolicy,
    _qform_min_eig,
    lattice_kernel_sum,
    polylog,
)
from .model import IIAPoint, IIBPoint, ModelSpec

__all__ = [
    "MirrorCorrections",
    "mirror_corrections",
    "mirror_forward",
    "mirror_inverse",
    "mirror_jacobian",
    "pack_iia",
    "pack_iib",
    "unpack_iia",
    "unpack_iib",
]


@dataclass(frozen=True)
class MirrorCorrections:
    """Lattice-sum corrections to the axionic coordinates.

    sigma_m0 and sigma_mn are the two sigma constituents that are not a
    recombination of the zeta_tilde corrections: the m = 0 dilogarithm line
    and the m != 0 double sum. They are kept separate because their lattice
    structures differ.
    """

    ztilde_a: np.ndarray
    ztilde_0: float
    sigma_m0: float
    sigma_mn: float
    tail: float

    def sigma_inst(self, tau1: float, b: np.ndarray, c_upper: np.ndarray) -> float:
        cc = c_upper - tau1 * b
        return float(
            tau1 * self.ztilde_0 - cc @ self.ztilde_a + self.sigma_m0 + self.sigma_mn
        )


def _charge_sums(
    params: LatticeSumParams, xs: float, policy: TruncationPolicy
) -> tuple[SumResult, SumResult, SumResult]:
    """The three m != 0 lattice sums of one gv charge.

    xs = q_a b^a enters the middle kernel; the exponential action is carried
    by params. Kernels are bounded on shell j through A >= sqrt(lam) j.
    """
    tau = params.tau
    t1 = tau.real
    y = params.scale_y
    sq = math.sqrt(_qform_min_eig(tau))

    def nz(ms):
        # m = 0 rows are masked out by the caller; keep the division finite
        return np.where(ms == 0, 1.0, ms)

    def k_a(ms, ns, A):
        return (ms * t1 + ns) / (nz(ms) * A * A)

    def env_a(js):
        return 1.0 / (sq * js)

    def k_0(ms, ns, A):
        u = ms * t1 + ns
        return (u * u / A**3 + TWO_PI * (y + 1j * xs * u / A)) / (nz(ms) * A)

    def env_0(js):
        return (1.0 / (sq * js) + TWO_PI * (y + abs(xs))) / (sq * js)

    def k_s(ms, ns, A):
        u = ms * t1 + ns
        return (2.0 - u * u / (A * A)) * u / (nz(ms) ** 2 * A * A)

    def env_s(js):
        return 3.0 / (sq * js)

    s_a = lattice_kernel_sum(params, k_a, env_a, include_m_zero=False, policy=policy)
    s_0 = lattice_kernel_sum(params, k_0, env_0, include_m_zero=False, policy=policy)
    s_s = lattice_kernel_sum(params, k_s, env_s, include_m_zero=False, policy=policy)
    return s_a, s_0, s_s


def mirror_corrections(
    spec: ModelSpec,
    tau: complex,
    z: np.ndarray,
    c_upper: np.ndarray,
    policy: TruncationPolicy | None = None,
) -> MirrorCorrections:
    """Evaluate the axionic corrections at (tau, z^a, c^a)."""
    policy = policy or spec.policy
    if tau.imag <= 0:
        raise DomainError("tau must lie in the upper half plane")
    z = np.asarray(z, dtype=complex)
    c_upper = np.asarray(c_upper, dtype=float)
    b, t = z.real, z.imag
    tau2 = tau.imag

    zt_a = np.zeros(spec.n)
    zt_0 = 0.0 + 0.0j
    sig_m0 = 0.0 + 0.0j
    sig_mn = 0.0 + 0.0j
    tail = 0.0
    for q, n_hat in spec.active_gv():
        qv = np.asarray(q, dtype=float)
        y = float(qv @ t)
        if y <= 0:
            raise DomainError("gv charge leaves the convergence cone: q_a t^a <= 0")
        xs = float(qv @ b)
        theta = -float(qv @ c_upper)
        params = LatticeSumParams(
            tau=tau, weight=3.0, shift_x=xs, shift_theta=theta, scale_y=y
        )
        s_a, s_0, s_s = _charge_sums(params, xs, policy)
        zt_a += (n_hat / (8.0 * math.pi**2)) * qv * _real(s_a.value, "ztilde_a sum")
        zt_0 += (1j * n_hat / (16.0 * math.pi**3)) * s_0.value
        # m = 0 line: sum_{n != 0} e^{-S}/(n|n|) = Li2(w) - Li2(conj w)
        w = np.exp(-TWO_PI * (y + 1j * xs))
        sig_m0 += (-1j * tau2 * tau2 / (8.0 * math.pi**2)) * n_hat * y * (
            polylog(2, w) - polylog(2, np.conj(w))
        )
        sig_mn += (1j * n_hat / (8.0 * math.pi**3)) * s_s.value
        tail += (abs(n_hat) / (8.0 * math.pi**2)) * float(np.max(np.abs(qv))) * s_a.tail_bound
        tail += (abs(n_hat) / (16.0 * math.pi**3)) * s_0.tail_bound
        tail += (abs(n_hat) / (8.0 * math.pi**3)) * s_s.tail_bound
    return MirrorCorrections(
        ztilde_a=zt_a,
        ztilde_0=_real(zt_0, "ztilde_0 sum"),
        sigma_m0=_real(sig_m0, "sigma m=0 sum"),
        sigma_mn=_real(sig_mn, "sigma lattice sum"),
        tail=tail,
    )


def mirror_forward(
    spec: ModelSpec, p: IIBPoint, policy: TruncationPolicy | None = None
) -> IIAPoint:
    """Map a IIB point to IIA coordinates."""
    tau = complex(p.tau)
    z = np.asarray(p.z, dtype=complex)
    b, t = z.real, z.imag
    tau1, tau2 = tau.real, tau.imag
    c_up = np.asarray(p.c_upper, dtype=float)
    c_lo = np.asarray(p.c_lower, dtype=float)
    K = kahler_data(spec, z)[0]
    rho = tau2 * tau2 * math.exp(-K) / 16.0 - spec.c_loop

    cor = mirror_corrections(spec, tau, z, c_up, policy)
    cc = c_up - tau1 * b
    k = spec.kabc
    zeta = np.concatenate([[tau1], -cc])
    zt_a = c_lo + 0.5 * np.einsum("abc,b,c->a", k, b, cc) + cor.ztilde_a
    zt_0 = float(p.c0) - np.einsum("abc,a,b,c->", k, b, b, cc) / 6.0 + cor.ztilde_0
    sigma = (
        -2.0 * (float(p.psi) + 0.5 * tau1 * float(p.c0))
        + c_lo @ cc
        - np.einsum("abc,a,b,c->", k, b, c_up, cc) / 6.0
        + cor.sigma_inst(tau1, b, c_up)
    )
    return IIAPoint(
        rho=rho,
        z=z,
        zeta=zeta,
        zeta_tilde=np.concatenate([[zt_0], zt_a]),
        sigma=sigma,
    )


def _solve_tau2(rho: float, K: float, c_loop: float) -> float:
    """Root of tau2^2 e^{-K}/16 - c_loop = rho, bracketed then polished.

    The left side is strictly increasing in tau2, so bisection on
    [1e-6, 1e6] cannot stall; one Newton step restores full precision.
    """
    target = rho + c_loop
    if target <= 0:
        raise DomainError("rho + c_loop must be positive on the image")
    emk = math.exp(-K)

    def g(x: float) -> float:
        return x * x * emk / 16.0 - target

    lo, hi = 1e-6, 1e6
    if g(lo) > 0 or g(hi) < 0:
        raise ConvergenceError("tau2 root escapes the bracket [1e-6, 1e6]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, lo):
            break
    x = 0.5 * (lo + hi)
    x -= g(x) / (x * emk / 8.0)
    return x


def mirror_inverse(
    spec: ModelSpec, p: IIAPoint, policy: TruncationPolicy | None = None
) -> IIBPoint:
    """Map a IIA point back to IIB coordinates.

    Triangular: (tau, z, c^a) are recovered without touching any lattice
    sum, after which the corrections are plain subtractions.
    """
    z = np.asarray(p.z, dtype=complex)
    b = z.real
    K = kahler_data(spec, z)[0]
    tau2 = _solve_tau2(p.rho, K, spec.c_loop)
    tau1 = float(p.zeta[0])
    tau = complex(tau1, tau2)
    cc = -np.asarray(p.zeta[1:], dtype=float)
    c_up = cc + tau1 * b

    cor = mirror_corrections(spec, tau, z, c_up, policy)
    k = spec.kabc
    c_lo = np.asarray(p.zeta_tilde[1:], dtype=float) - 0.5 * np.einsum(
        "abc,b,c->a", k, b, cc
    ) - cor.ztilde_a
    c0 = (
        float(p.zeta_tilde[0])
        + np.einsum("abc,a,b,c->", k, b, b, cc) / 6.0
        - cor.ztilde_0
    )
    sigma_inst = cor.sigma_inst(tau1, b, c_up)
    psi = -0.5 * (
        float(p.sigma)
        + tau1 * c0
        - c_lo @ cc
        + np.einsum("abc,a,b,c->", k, b, c_up, cc) / 6.0
        - sigma_inst
    )
    return IIBPoint(tau=tau, z=z, c_upper=c_up, c_lower=c_lo, c0=c0, psi=psi)


def pack_iib(p: IIBPoint) -> np.ndarray:
    """Real coordinate vector (tau1, tau2, b^a, t^a, c^a, c_a, c0, psi)."""
    z = np.asarray(p.z, dtype=complex)
    return np.concatenate(
        [
            [p.tau.real, p.tau.imag],
            z.real,
            z.imag,
            np.asarray(p.c_upper, float),
            np.asarray(p.c_lower, float),
            [float(p.c0), float(p.psi)],
        ]
    )


def unpack_iib(n: int, v: np.ndarray) -> IIBPoint:
    v = np.asarray(v, dtype=float)
    b = v[2 : 2 + n]
    t = v[2 + n : 2 + 2 * n]
    return IIBPoint(
        tau=complex(v[0], v[1]),
        z=b + 1j * t,
        c_upper=v[2 + 2 * n : 2 + 3 * n],
        c_lower=v[2 + 3 * n : 2 + 4 * n],
        c0=v[2 + 4 * n],
        psi=v[3 + 4 * n],
    )


def pack_iia(p: IIAPoint) -> np.ndarray:
    """Real coordinate vector (rho, b^a, t^a, zeta^i, zetatilde_i, sigma)."""
    z = np.asarray(p.z, dtype=complex)
    return np.concatenate(
        [
            [p.rho],
            z.real,
            z.imag,
            np.asarray(p.zeta, float),
            np.asarray(p.zeta_tilde, float),
            [float(p.sigma)],
        ]
    )


def unpack_iia(n: int, v: np.ndarray) -> IIAPoint:
    v = np.asarray(v, dtype=float)
    return IIAPoint(
        rho=v[0],
        z=v[1 : 1 + n] + 1j * v[1 + n : 1 + 2 * n],
        zeta=v[1 + 2 * n : 2 + 3 * n],
        zeta_tilde=v[2 + 3 * n : 3 + 4 * n],
        sigma=v[3 + 4 * n],
    )


def mirror_jacobian(
    spec: ModelSpec,
    p: IIBPoint,
    h: float = 1e-6,
    policy: TruncationPolicy | None = None,
) -> np.ndarray:
    """Central finite-difference Jacobian of the forward map."""
    v0 = pack_iib(p)
    dim = v0.size
    n = spec.n
    cols = []
    for j in range(dim):
        step = h * max(1.0, abs(v0[j]))
        vp, vm = v0.copy(), v0.copy()
        vp[j] += step
        vm[j] -= step
        fp = pack_iia(mirror_forward(spec, unpack_iib(n, vp), policy))
        fm = pack_iia(mirror_forward(spec, unpack_iib(n, vm), policy))
        cols.append((fp - fm) / (2.0 * step))
    return np.stack(cols, axis=-1)
