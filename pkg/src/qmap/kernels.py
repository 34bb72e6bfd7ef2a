"""Special functions and the Bessel/lattice sums every higher layer consumes.

Every truncated sum returns a SumResult carrying the accumulated value and a
bound on the magnitude of the discarded tail; downstream code propagates the
bounds additively. Exponentially damped lattice sums use square shells
max(|m|,|n|) = k, which makes the tau -> tau+1 relabeling exact and the tail
monotone. Sums with only power-law decay (Eisenstein sums and the zero-charge
derivative sums) are evaluated through their Fourier-Bessel expansion instead:
shell truncation of those converges like 1/k and cannot reach the accuracy
the verification targets require, while the Fourier-Bessel form is
exponentially convergent with a rigorous envelope bound.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _special

TWO_PI = 2.0 * math.pi
ZETA2 = math.pi**2 / 6.0
ZETA3 = float(_special.zeta(3.0))


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConvergenceError(RuntimeError):
    """A truncated sum hit its cap before reaching the requested tail bound."""


@dataclass(frozen=True)
class TruncationPolicy:
    """Cutoff controls shared by all truncated sums.

    series_tail_tol: absolute term-size cutoff for exponentially decaying series.
    lattice_shell_max: hard cap on the square-shell index for lattice sums.
    lattice_tail_tol: target bound on the lattice tail.
    quad_rel_tol: relative tolerance handed to quadrature routines.
    """

    series_tail_tol: float = 1e-13
    lattice_shell_max: int = 64
    lattice_tail_tol: float = 1e-13
    quad_rel_tol: float = 1e-11

    def __post_init__(self) -> None:
        if not (self.series_tail_tol > 0 and self.lattice_tail_tol > 0 and self.quad_rel_tol > 0):
            raise DomainError("tolerances must be strictly positive")
        if self.lattice_shell_max < 8:
            raise DomainError("lattice_shell_max must be >= 8")


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True)
class SumResult:
    """Value of a truncated sum plus a bound on what was discarded."""

    value: complex
    tail_bound: float

    @property
    def real(self) -> float:
        return complex(self.value).real

    def __complex__(self) -> complex:
        return complex(self.value)

    def __add__(self, other: "SumResult") -> "SumResult":
        return SumResult(self.value + other.value, self.tail_bound + other.tail_bound)

    def scaled(self, factor: complex) -> "SumResult":
        return SumResult(factor * self.value, abs(factor) * self.tail_bound)


@dataclass(frozen=True)
class LatticeSumParams:
    """Data entering the exponent 2*pi*q_a(|m*tau+n| t^a + i m c^a + i n b^a).

    shift_x = q_a b^a, shift_theta = -q_a c^a, scale_y = q_a t^a; weight is the
    power for pure |m*tau+n|^(-s) sums built on the same lattice.
    """

    tau: complex
    weight: float = 3.0
    shift_x: float = 0.0
    shift_theta: float = 0.0
    scale_y: float = 0.0

    def __post_init__(self) -> None:
        if self.tau.imag <= 0:
            raise DomainError("tau must lie in the upper half plane")
        if self.weight <= 2:
            raise DomainError("weight must exceed 2 for absolute convergence")
        if self.scale_y < 0:
            raise DomainError("scale_y must be nonnegative")


@dataclass(frozen=True)
class BesselSumPoint:
    """Reduced data for the Bessel-tower form of the BPS sums.

    R > 0 is half of tau2; zeta0 the zeroth axion; ztilde = q_a z^a the
    reduced central charge of the base charge; zeta_hat = -q_a zeta^a its
    axionic pairing.
    """

    R: float
    zeta0: float
    ztilde: complex
    zeta_hat: float

    def __post_init__(self) -> None:
        if self.R <= 0:
            raise DomainError("R must be positive")


def lattice_params_for(point: BesselSumPoint) -> LatticeSumParams:
    """Lattice-sum parameters describing the same object as a Bessel point."""
    x = point.ztilde.real
    theta = -point.zeta_hat - point.zeta0 * x
    return LatticeSumParams(
        tau=complex(point.zeta0, 2.0 * point.R),
        shift_x=x,
        shift_theta=theta,
        scale_y=point.ztilde.imag,
    )


def bessel_point_for(params: LatticeSumParams) -> BesselSumPoint:
    """Inverse of lattice_params_for."""
    return BesselSumPoint(
        R=params.tau.imag / 2.0,
        zeta0=params.tau.real,
        ztilde=complex(params.shift_x, params.scale_y),
        zeta_hat=-params.shift_theta - params.tau.real * params.shift_x,
    )


# ---------------------------------------------------------------------------
# Bessel functions


def bessel_k(nu: int, x: float) -> float:
    """Modified Bessel function K_nu(x) for nu in {0, 1, 2} and x > 0."""
    if nu not in (0, 1, 2):
        raise DomainError(f"order must be 0, 1 or 2, got {nu}")
    if not x > 0:
        raise DomainError(f"argument must be positive, got {x}")
    return float(_special.kv(nu, x))


def _k_envelope(order: float, x) -> np.ndarray | float:
    """Upper bound sqrt(pi/2x) e^(-x + order^2/(2x)), valid for all x > 0.

    Follows from cosh t >= 1 + t^2/2 inside the integral representation.
    """
    x = np.asarray(x, dtype=float)
    return np.sqrt(math.pi / (2.0 * x)) * np.exp(-x + order * order / (2.0 * x))


# ---------------------------------------------------------------------------
# Polylogarithms


_POLYLOG_CHUNK = 200_000
_POLYLOG_CAP = 6_000_000


def polylog(order: int, z: complex) -> complex:
    """Li_order(z) by direct series for |z| <= 1 (order 2 or 3).

    z = 1 is only allowed at order 3 (zeta(3)); z = -1 is summed in closed
    form. Raises DomainError for |z| > 1. On the open disk the tail bound is
    geometric; on the unit circle the integral-comparison bound is used, which
    for order 2 cannot reach the target and raises ConvergenceError.
    """
    if order not in (2, 3):
        raise DomainError(f"order must be 2 or 3, got {order}")
    z = complex(z)
    az = abs(z)
    if az > 1.0 + 1e-15:
        raise DomainError(f"polylog argument must satisfy |z| <= 1, got |z| = {az}")
    if z == 0:
        return 0.0 + 0.0j
    if z == 1:
        if order == 2:
            raise DomainError("Li_2 is not evaluated at z = 1")
        return complex(ZETA3)
    if z == -1:
        # -eta(s) with eta(s) = (1 - 2^(1-s)) zeta(s)
        zeta_s = ZETA2 if order == 2 else ZETA3
        return complex(-(1.0 - 2.0 ** (1 - order)) * zeta_s)

    # size the first chunk from the geometric decay so that arguments deep
    # inside the disk cost only a handful of terms
    if az < 0.99:
        chunk = min(_POLYLOG_CHUNK, max(64, int(-30.0 / math.log(az)) + 1))
    else:
        chunk = _POLYLOG_CHUNK
    acc = 0.0 + 0.0j
    k0 = 1
    while k0 <= _POLYLOG_CAP:
        ks = np.arange(k0, min(k0 + chunk, _POLYLOG_CAP + 1))
        chunk = min(2 * chunk, _POLYLOG_CHUNK)
        terms = z**ks / ks.astype(float) ** order
        acc += complex(terms.sum())
        k_last = int(ks[-1])
        if az < 1.0:
            tail = az ** (k_last + 1) / ((k_last + 1) ** order * (1.0 - az))
            target = 1e-13 * max(1.0, abs(acc))
        else:
            tail = k_last ** (1 - order) / (order - 1)
            target = 1e-12 * max(1e-2, abs(acc))
        if tail <= target:
            return acc
        k0 = k_last + 1
    raise ConvergenceError(f"polylog series did not reach tolerance for |z| = {az}, order {order}")


def rogers_L(xi: complex) -> complex:
    """Li_2(e^{2 pi i xi}) + pi i xi log(1 - e^{2 pi i xi}) for Im(xi) > 0.

    The exponential then lies strictly inside the unit disk and the principal
    branch of the logarithm is unambiguous.
    """
    xi = complex(xi)
    w = cmath.exp(2j * math.pi * xi)
    if abs(w) >= 1.0:
        raise DomainError("rogers_L requires Im(xi) > 0")
    return polylog(2, w) + 1j * math.pi * xi * cmath.log(1.0 - w)


# ---------------------------------------------------------------------------
# Square-shell machinery for exponentially damped lattice sums


def shell_points(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer pairs with max(|m|,|n|) = k (8k points for k >= 1)."""
    if k == 0:
        return np.array([0]), np.array([0])
    side = np.arange(-k, k + 1)
    inner = np.arange(-k + 1, k)
    ms = np.concatenate([np.full(side.size, k), np.full(side.size, -k), inner, inner])
    ns = np.concatenate([side, side, np.full(inner.size, k), np.full(inner.size, -k)])
    return ms, ns


def _qform_min_eig(tau: complex) -> float:
    """Least eigenvalue of the form |m tau + n|^2 = m^2|tau|^2 + 2mn tau1 + n^2."""
    t1, t2 = tau.real, tau.imag
    tr = t1 * t1 + t2 * t2 + 1.0
    det = t2 * t2
    lam = 0.5 * (tr - math.sqrt(tr * tr - 4.0 * det))
    # guard against cancellation for very elongated tau
    return max(lam, det / tr)


def lattice_sum(term_fn, tail_fn, policy: TruncationPolicy, min_shells: int = 2) -> SumResult:
    """Generic square-shell accumulator.

    term_fn(ms, ns) returns the complex terms for the shell points (the caller
    zeroes excluded indices); tail_fn(k) bounds the total magnitude of all
    shells beyond k. Stops when the bound drops below lattice_tail_tol.
    """
    acc = 0.0 + 0.0j
    for k in range(1, policy.lattice_shell_max + 1):
        ms, ns = shell_points(k)
        acc += complex(np.sum(term_fn(ms, ns)))
        if k >= min_shells:
            bound = tail_fn(k)
            if bound <= policy.lattice_tail_tol:
                return SumResult(acc, float(bound))
    raise ConvergenceError(
        f"lattice sum tail bound {tail_fn(policy.lattice_shell_max):.3e} "
        f"above target {policy.lattice_tail_tol:.3e} at shell cap {policy.lattice_shell_max}"
    )


def _exp_action(params: LatticeSumParams, ms: np.ndarray, ns: np.ndarray, A: np.ndarray) -> np.ndarray:
    """exp(-S) with S = 2 pi (y A - i m theta + i n x)."""
    y, x, theta = params.scale_y, params.shift_x, params.shift_theta
    return np.exp(-TWO_PI * (y * A - 1j * ms * theta + 1j * ns * x))


def _exp_shell_tail(k: int, a: float, prefactor_fn, horizon: int = 400) -> float:
    """Bound sum_{j>k} 8 j prefactor(j) e^(-a j) by an explicit envelope sum.

    The horizon sum is closed with a geometric remainder of ratio e^(-a),
    valid once prefactor(j)*j stops growing faster than the decay.
    """
    if a <= 0:
        return math.inf
    js = np.arange(k + 1, k + 1 + horizon, dtype=float)
    pieces = 8.0 * js * prefactor_fn(js) * np.exp(-a * js)
    total = float(pieces.sum())
    r = math.exp(-a)
    total += float(pieces[-1]) * r / max(1.0 - r, 1e-300)
    return total


def _poly_exp_tail(j0: int, p: float, c: float, scale: float, horizon: int = 4000) -> float:
    """Bound scale * sum_{j >= j0} j^p e^(-c j) via horizon sum + geometric closure."""
    if scale == 0.0:
        return 0.0
    if c <= 0:
        return math.inf
    js = np.arange(j0, j0 + horizon, dtype=float)
    vals = scale * js**p * np.exp(-c * js)
    r = math.exp(-c) * ((j0 + horizon) / (j0 + horizon - 1.0)) ** max(p, 0.0)
    if r >= 1.0:
        return math.inf
    return float(vals.sum()) + float(vals[-1]) * r / (1.0 - r)


# ---------------------------------------------------------------------------
# Fourier-Bessel evaluation of power-law lattice sums
#
# Row sums over n at fixed m > 0 of ((m tau1 + n)^2 + (m tau2)^2)^(-s/2) have
# the exact expansion
#   c1(s) (m tau2)^(1-s)
#     + c2(s) (m tau2)^((1-s)/2) sum_{k>=1} k^((s-1)/2) cos(2 pi k m tau1)
#                                           K_((s-1)/2)(2 pi k m tau2)
# with c1 = sqrt(pi) Gamma((s-1)/2)/Gamma(s/2), c2 = 4 pi^(s/2)/Gamma(s/2);
# the m-sum of the power part is an exact zeta value, so only the doubly
# indexed Bessel part is truncated (exponential decay in m*k).


@dataclass(frozen=True)
class _BesselComponent:
    prefactor: float
    m_pow: float
    k_pow: float
    order: float
    trig: str  # "cos" or "sin"


def _c1(s: float) -> float:
    return math.sqrt(math.pi) * math.gamma((s - 1.0) / 2.0) / math.gamma(s / 2.0)


def _c2(s: float) -> float:
    return 4.0 * math.pi ** (s / 2.0) / math.gamma(s / 2.0)


_M_CAP = 2_000_000
_K_CAP = 2_000_000


def _bessel_double_sum(
    tau: complex, components: list[_BesselComponent], policy: TruncationPolicy
) -> SumResult:
    """sum_{m,k>=1} prefactor * m^m_pow k^k_pow trig(2 pi km tau1) K_order(2 pi km tau2)."""
    t1, t2 = tau.real, tau.imag
    if t2 <= 0:
        raise DomainError("tau must lie in the upper half plane")
    base = TWO_PI * t2
    eps = policy.lattice_tail_tol / 8.0
    max_kpow = max(c.k_pow for c in components)
    ks_guard = np.arange(1, 200, dtype=float)
    # bounds sum_k (k^k_pow/1) e^{-x(k-1)} for any x >= 2, any component
    guard = float(np.sum(ks_guard ** max(max_kpow, 0.0) * np.exp(-2.0 * (ks_guard - 1.0))))
    x_safe = 2.0 * (max_kpow + 2.0)

    value = 0.0
    tail = 0.0
    m = 0
    while True:
        m += 1
        if m > _M_CAP:
            raise ConvergenceError("Fourier-Bessel m tower failed to terminate")
        x_m = base * m
        k = 0
        while True:
            k += 1
            if k > _K_CAP:
                raise ConvergenceError("Fourier-Bessel k tower failed to terminate")
            x = x_m * k
            ang = TWO_PI * t1 * m * k
            env_k = 0.0
            for c in components:
                weight = c.prefactor * m**c.m_pow * k**c.k_pow
                trig = math.cos(ang) if c.trig == "cos" else math.sin(ang)
                value += weight * trig * float(_special.kv(c.order, x))
                env_k += abs(weight) * float(_k_envelope(c.order, x))
            if env_k < eps and x >= x_safe:
                for c in components:
                    scale = abs(c.prefactor) * m**c.m_pow * math.sqrt(math.pi / (2.0 * x_m))
                    scale *= math.exp(c.order**2 / (2.0 * x_m))
                    tail += _poly_exp_tail(k + 1, c.k_pow - 0.5, x_m, scale)
                break
        x_next = base * (m + 1)
        env_m_next = 0.0
        for c in components:
            env_m_next += abs(c.prefactor) * (m + 1) ** c.m_pow * float(_k_envelope(c.order, x_next))
        if env_m_next < eps and x_next >= 2.0:
            for c in components:
                scale = abs(c.prefactor) * math.sqrt(math.pi / (2.0 * base))
                scale *= math.exp(c.order**2 / (2.0 * x_next))
                tail += guard * _poly_exp_tail(m + 1, c.m_pow - 0.5, base, scale)
            break
    return SumResult(value, tail)


def eisenstein_sum(tau: complex, s: float, policy: TruncationPolicy = DEFAULT_POLICY) -> SumResult:
    """E_s(tau) = sum over (m,n) != (0,0) of |m tau + n|^(-s), s > 2.

    The m = 0 row and the power part of every m != 0 row sum are exact zeta
    values; the remainder is the exponentially convergent Fourier-Bessel part.
    """
    tau = complex(tau)
    if tau.imag <= 0:
        raise DomainError("tau must lie in the upper half plane")
    if s <= 2:
        raise DomainError("weight must exceed 2")
    t2 = tau.imag
    const = 2.0 * float(_special.zeta(s)) + 2.0 * _c1(s) * float(_special.zeta(s - 1.0)) * t2 ** (1.0 - s)
    comp = _BesselComponent(
        prefactor=2.0 * _c2(s) * t2 ** ((1.0 - s) / 2.0),
        m_pow=(1.0 - s) / 2.0,
        k_pow=(s - 1.0) / 2.0,
        order=(s - 1.0) / 2.0,
        trig="cos",
    )
    res = _bessel_double_sum(tau, [comp], policy)
    return SumResult(const + complex(res.value).real, res.tail_bound)


# ---------------------------------------------------------------------------
# BPS sums: Bessel tower, lattice form, and term-differentiated lattice forms


def bps_sum_bessel(
    nu: int,
    point: BesselSumPoint,
    policy: TruncationPolicy = DEFAULT_POLICY,
    variant: str = "full",
) -> SumResult:
    """Bessel-tower form of the BPS sums.

    variant "full":
        2 sum_{q0 in Z} sum_{s=+-1} sum_{n>=1}
            e^{-2 pi i n s zeta(q0)} / (s n)^nu * K_0(4 pi R n |q0 + ztilde|)
    with zeta(q0) = -q0 zeta0 + zeta_hat; variant "q0_only" omits q0 = 0 (the
    tower of a vanishing reduced charge, where the q0 = 0 term is singular).
    """
    if nu < 1:
        raise DomainError("nu must be >= 1")
    if variant not in ("full", "q0_only"):
        raise DomainError(f"unknown variant {variant!r}")
    if variant == "q0_only" and point.ztilde != 0:
        raise DomainError("the q0-only variant is defined for vanishing reduced charge")

    R = point.R
    tol = policy.series_tail_tol
    log_tol = -math.log(tol)

    def n_series(q0: int) -> complex:
        zq = q0 + point.ztilde
        absz = abs(zq)
        if absz == 0:
            raise DomainError("vanishing central charge inside the Bessel tower")
        x1 = 2.0 * TWO_PI * R * absz
        n_max = max(2, int(math.ceil(log_tol / x1)) + 2)
        ns = np.arange(1, n_max + 1, dtype=float)
        k0 = _special.kv(0, x1 * ns)
        zeta_q = -q0 * point.zeta0 + point.zeta_hat
        phases = np.exp(-2j * math.pi * ns * zeta_q)
        inv = ns ** (-float(nu))
        total = np.sum(phases * inv * k0) + np.sum(np.conj(phases) * ((-1.0) ** nu) * inv * k0)
        return 2.0 * complex(total)

    def n_tail(q0: int) -> float:
        zq = abs(q0 + point.ztilde)
        x1 = 2.0 * TWO_PI * R * zq
        n_max = max(2, int(math.ceil(log_tol / x1)) + 2)
        env = float(_k_envelope(0.0, x1 * (n_max + 1)))
        r = math.exp(-x1)
        return 4.0 * env / max(1.0 - r, 1e-300)

    acc = 0.0 + 0.0j
    tail = 0.0
    q_hi = 0
    while True:
        if not (variant == "q0_only" and q_hi == 0):
            acc += n_series(q_hi)
            tail += n_tail(q_hi)
        if 2.0 * TWO_PI * R * abs(q_hi + point.ztilde) > log_tol and q_hi > abs(point.ztilde):
            break
        q_hi += 1
        if q_hi > 10_000:
            raise ConvergenceError("q0 tower failed to terminate (upper side)")
    q_lo = -1
    while True:
        acc += n_series(q_lo)
        tail += n_tail(q_lo)
        if 2.0 * TWO_PI * R * abs(q_lo + point.ztilde) > log_tol and -q_lo > abs(point.ztilde):
            break
        q_lo -= 1
        if q_lo < -10_000:
            raise ConvergenceError("q0 tower failed to terminate (lower side)")
    # remaining q0 on both sides: |q0 + ztilde| grows by at least 1 per step
    for q_next in (q_hi + 1, q_lo - 1):
        d = abs(q_next + point.ztilde)
        x1 = 2.0 * TWO_PI * R * d
        r = math.exp(-2.0 * TWO_PI * R)
        tail += 4.0 * float(_k_envelope(0.0, x1)) / max((1.0 - math.exp(-x1)) * (1.0 - r), 1e-300)
    return SumResult(acc, tail)


def bps_sum_lattice(params: LatticeSumParams, nu: int, policy: TruncationPolicy = DEFAULT_POLICY) -> SumResult:
    """Lattice form: sum over m != 0, n of e^(-S_{m,n}) / (m^nu |m tau + n|)."""
    if params.scale_y <= 0:
        raise DomainError("scale_y must be positive for the exponentially damped lattice form")
    tau = params.tau
    lam = _qform_min_eig(tau)
    sq = math.sqrt(lam)
    a = TWO_PI * params.scale_y * sq

    def terms(ms: np.ndarray, ns: np.ndarray) -> np.ndarray:
        A = np.abs(ms * tau + ns)
        vals = np.zeros(ms.shape, dtype=complex)
        sel = ms != 0
        vals[sel] = _exp_action(params, ms[sel], ns[sel], A[sel]) / (
            ms[sel].astype(float) ** nu * A[sel]
        )
        return vals

    def tail(k: int) -> float:
        return _exp_shell_tail(k, a, lambda js: 1.0 / (sq * js))

    return lattice_sum(terms, tail, policy)


def lattice_kernel_sum(
    params: LatticeSumParams,
    kernel_fn,
    env_fn,
    include_m_zero: bool = True,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> SumResult:
    """Shell sum of kernel(m, n, |m tau + n|) * e^(-S) over (m,n) != (0,0).

    kernel_fn(ms, ns, A) returns the per-point weights; env_fn(js) must bound
    |kernel| for every point on shell js. Requires scale_y > 0.
    """
    if params.scale_y <= 0:
        raise DomainError("scale_y must be positive for exponentially damped kernel sums")
    tau = params.tau
    lam = _qform_min_eig(tau)
    a = TWO_PI * params.scale_y * math.sqrt(lam)

    def terms(ms: np.ndarray, ns: np.ndarray) -> np.ndarray:
        A = np.abs(ms * tau + ns)
        keep = (ms != 0) | (ns != 0)
        if not include_m_zero:
            keep &= ms != 0
        A_safe = np.where(A == 0, 1.0, A)
        vals = kernel_fn(ms.astype(float), ns.astype(float), A_safe) * _exp_action(params, ms, ns, A_safe)
        return np.where(keep, vals, 0.0)

    def tail(k: int) -> float:
        return _exp_shell_tail(k, a, env_fn)

    return lattice_sum(terms, tail, policy)


_DERIV_KEYS = ("t1", "t2", "t1t1", "t1t2", "t2t2")
_GAMMA_ZERO_KEYS = ("t2", "t1t2", "t1t1")


def gamma_zero_t2_correction(tau2: float, nu: int) -> float:
    """(2/tau2) sum_{s=+-1} sum_{n>0} (sn)^(-nu); vanishes for odd nu."""
    if tau2 <= 0:
        raise DomainError("tau2 must be positive")
    if nu < 2:
        raise DomainError("correction defined for nu >= 2")
    if nu % 2:
        return 0.0
    return (2.0 / tau2) * 2.0 * float(_special.zeta(float(nu)))


def bps_sum_derivatives(
    params: LatticeSumParams,
    nu: int,
    which: str,
    policy: TruncationPolicy = DEFAULT_POLICY,
    gamma_zero: bool = False,
) -> SumResult:
    """Term-differentiated lattice sums: d/dtau1, d/dtau2 and second derivatives.

    For gamma_zero the shifts and scale must vanish; only the tau2, mixed and
    double-tau1 derivatives are defined, and the returned tau2 derivative
    already includes the extra (2/tau2) sum_{s,n} (sn)^(-nu) that distinguishes
    the zero-charge tower from the formal charge -> 0 limit of the lattice sum.
    """
    if nu < 2:
        raise DomainError("derivative sums require nu >= 2")
    if which not in _DERIV_KEYS:
        raise DomainError(f"which must be one of {_DERIV_KEYS}")
    if gamma_zero:
        if params.scale_y != 0 or params.shift_x != 0 or params.shift_theta != 0:
            raise DomainError("gamma_zero derivatives require vanishing shifts and scale")
        if which not in _GAMMA_ZERO_KEYS:
            raise DomainError(f"gamma_zero supports only {_GAMMA_ZERO_KEYS}")
        return _gamma_zero_derivative(params.tau, nu, which, policy)
    if params.scale_y <= 0:
        raise DomainError("scale_y must be positive unless gamma_zero")

    tau = params.tau
    t1, t2 = tau.real, tau.imag
    c = TWO_PI * params.scale_y
    lam = _qform_min_eig(tau)
    sq = math.sqrt(lam)

    def terms(ms_i: np.ndarray, ns_i: np.ndarray) -> np.ndarray:
        sel = ms_i != 0
        ms = ms_i[sel].astype(float)
        ns = ns_i[sel].astype(float)
        B = ms * t1 + ns
        A = np.hypot(B, ms * t2)
        dA1 = ms * B / A
        dA2 = ms * ms * t2 / A
        d11 = ms**4 * t2 * t2 / A**3
        d22 = ms * ms * B * B / A**3
        d12 = -(ms**3) * t2 * B / A**3
        # e^{-cA}/A differentiated in A, with the exponential factored out
        gp = -(c + 1.0 / A) / A
        gpp = c * c / A + 2.0 * c / A**2 + 2.0 / A**3
        if which == "t1":
            core = gp * dA1
        elif which == "t2":
            core = gp * dA2
        elif which == "t1t1":
            core = gpp * dA1 * dA1 + gp * d11
        elif which == "t2t2":
            core = gpp * dA2 * dA2 + gp * d22
        else:
            core = gpp * dA1 * dA2 + gp * d12
        vals = np.zeros(ms_i.shape, dtype=complex)
        vals[sel] = _exp_action(params, ms, ns, A) * core / ms**nu
        return vals

    a = c * sq
    first = which in ("t1", "t2")

    def tail(k: int) -> float:
        if first:
            pref = lambda js: (c + 1.0 / (sq * js)) / sq
        else:
            pref = lambda js: ((c + 1.0 / (sq * js)) ** 2 + 3.0 / (sq * js) ** 2 + c / (sq * js)) * js / sq
        return _exp_shell_tail(k, a, pref)

    return lattice_sum(terms, tail, policy)


def _gamma_zero_derivative(tau: complex, nu: int, which: str, policy: TruncationPolicy) -> SumResult:
    """Closed Fourier-Bessel form of the zero-charge derivative sums.

    Pairing (m,n) -> (-m,-n) kills every odd-nu sum. For even nu the power
    parts of the row sums cancel the (2/tau2) correction (t2 case) or each
    other (t1t1 case), leaving pure Bessel parts:
        d/dtau2:         -16 pi   sum m^(1-nu) k   cos(2 pi mk tau1) K1(2 pi mk tau2)
        d2/dtau1 dtau2:   32 pi^2 sum m^(2-nu) k^2 sin(...) K1(...)
        d2/dtau1^2:       sum of (32 pi/tau2) m^(1-nu) k cos K1
                                 - 32 pi^2 m^(2-nu) k^2 cos K2
    """
    if nu % 2:
        return SumResult(0.0, 0.0)
    t2 = tau.imag
    if which == "t2":
        comps = [_BesselComponent(-16.0 * math.pi, 1.0 - nu, 1.0, 1.0, "cos")]
    elif which == "t1t2":
        comps = [_BesselComponent(32.0 * math.pi**2, 2.0 - nu, 2.0, 1.0, "sin")]
    else:  # t1t1
        comps = [
            _BesselComponent(32.0 * math.pi / t2, 1.0 - nu, 1.0, 1.0, "cos"),
            _BesselComponent(-32.0 * math.pi**2, 2.0 - nu, 2.0, 2.0, "cos"),
        ]
    return _bessel_double_sum(tau, comps, policy)
