"""Prepotential, special-Kahler data, and central charges.

All evaluations fix the scaling gauge Z = (1, z^a). The 0-components of the
first and second derivative tensors are filled in through the degree-2
homogeneity identities F_0 = 2F - F_a z^a and tau_0j = F_j - tau_aj z^a, which
hold exactly for every term of the prepotential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import ZETA3, DomainError, polylog
from .model import IIBPoint, ModelSpec, Charge, in_domain_Mq

_C3 = 1j / (8.0 * math.pi**3)  # 1/(2 pi i)^3


def _require_domain(spec: ModelSpec, z: np.ndarray) -> None:
    if not in_domain_Mq(spec, z):
        raise DomainError("point violates q_a t^a > 0 for an active charge")


def _ws_terms(spec: ModelSpec, z: np.ndarray):
    """Per-charge data (q, n_hat, u = e^{2 pi i q.z}) for active gv charges."""
    out = []
    for qvec, n_hat in spec.active_gv():
        q = np.asarray(qvec, dtype=float)
        u = complex(np.exp(2j * math.pi * np.dot(q, z)))
        out.append((q, n_hat, u))
    return out


def prepotential(spec: ModelSpec, Z: np.ndarray, part: str = "full") -> complex:
    """Degree-2 homogeneous prepotential at Z = (Z^0, Z^a), Z^0 != 0.

    part selects "full" or "classical" (cubic term only).
    """
    if part not in ("full", "classical"):
        raise DomainError(f"unknown part {part!r}")
    Z = np.asarray(Z, dtype=complex)
    z0 = Z[0]
    if z0 == 0:
        raise DomainError("Z^0 must not vanish")
    z = Z[1:] / z0
    _require_domain(spec, z)
    cubic = -np.einsum("abc,a,b,c->", spec.kabc, z, z, z) / 6.0
    value = complex(cubic)
    if part == "full":
        ws = -spec.chi / 2.0 * ZETA3
        for q, n_hat, u in _ws_terms(spec, z):
            ws += n_hat * polylog(3, u)
        value += -_C3 * ws
    return z0 * z0 * value


def first_derivs(spec: ModelSpec, z: np.ndarray, part: str = "full") -> np.ndarray:
    """F_i = (d/dZ^i) of the prepotential at Z = (1, z), i = 0..n."""
    z = np.asarray(z, dtype=complex)
    _require_domain(spec, z)
    Fa = -0.5 * np.einsum("abc,b,c->a", spec.kabc, z, z)
    if part == "full":
        for q, n_hat, u in _ws_terms(spec, z):
            Fa = Fa + (n_hat / (4.0 * math.pi**2)) * q * polylog(2, u)
    F = prepotential(spec, np.concatenate([[1.0 + 0j], z]), part)
    F0 = 2.0 * F - np.dot(Fa, z)
    return np.concatenate([[F0], Fa])


def tau_matrix(spec: ModelSpec, z: np.ndarray, part: str = "full") -> np.ndarray:
    """Second derivative matrix tau_ij at Z = (1, z), with Euler-filled 0-row."""
    z = np.asarray(z, dtype=complex)
    _require_domain(spec, z)
    n = spec.n
    tau_ab = -np.einsum("abc,c->ab", spec.kabc, z).astype(complex)
    if part == "full":
        for q, n_hat, u in _ws_terms(spec, z):
            tau_ab = tau_ab + (n_hat / (2j * math.pi)) * np.log(1.0 - u) * np.outer(q, q)
    F = first_derivs(spec, z, part)
    tau = np.zeros((n + 1, n + 1), dtype=complex)
    tau[1:, 1:] = tau_ab
    tau[0, 1:] = F[1:] - tau_ab @ z
    tau[1:, 0] = tau[0, 1:]
    tau[0, 0] = F[0] - np.dot(tau[0, 1:], z)
    return tau


@dataclass
class CaskEval:
    """Second derivatives, Kahler potential, and scaling radius at one point."""

    tau_ij: np.ndarray
    K: float
    N_ij: np.ndarray
    F_i: np.ndarray
    R: float


def kahler_data(spec: ModelSpec, z: np.ndarray, part: str = "full"):
    """(K, K_a, K_abar, N, tau, F) at Z = (1, z).

    K = -log(N_ij z^i zbar^j) with N = -2 Im tau; the gradient and Hessian
    use d_a(N_ij z^i zbar^j) = (N zbar)_a and d_a d_bbar = N_ab, both exact
    because F_ijk Z^k = 0.
    """
    z = np.asarray(z, dtype=complex)
    tau = tau_matrix(spec, z, part)
    N = -2.0 * tau.imag
    zfull = np.concatenate([[1.0 + 0j], z])
    k = float(np.real(zfull.conj() @ N @ zfull))
    if k <= 0:
        raise DomainError("N_ij z^i zbar^j must be positive")
    K = -math.log(k)
    Nzbar = (N @ zfull.conj())[1:]
    Nz = (N @ zfull)[1:]
    eK = 1.0 / k
    Ka = -eK * Nzbar
    Kab = -eK * N[1:, 1:] + eK * eK * np.outer(Nzbar, Nz)
    F = first_derivs(spec, z, part)
    return K, Ka, Kab, N, tau, F


def cask_eval(spec: ModelSpec, point: IIBPoint, part: str = "full") -> CaskEval:
    K, _, _, N, tau, F = kahler_data(spec, point.z, part)
    return CaskEval(tau_ij=tau, K=K, N_ij=N, F_i=F, R=point.tau.imag / 2.0)


def central_charge(spec: ModelSpec, z: np.ndarray, gamma: Charge) -> complex:
    """Normalized central charge Z_gamma / Z^0 = q0 + q_a z^a."""
    z = np.asarray(z, dtype=complex)
    return complex(gamma.q0 + np.dot(gamma.q, z))


def zeta_pairing(gamma: Charge, zeta: np.ndarray) -> float:
    """Axionic pairing zeta_gamma = -q_i zeta^i (i = 0..n)."""
    zeta = np.asarray(zeta, dtype=float)
    return float(-(gamma.q0 * zeta[0] + np.dot(gamma.q, zeta[1:])))


def psk_metric(spec: ModelSpec, z: np.ndarray, part: str = "full") -> np.ndarray:
    """Projective special Kahler metric as a real symmetric matrix.

    Basis order (db^1..db^n, dt^1..dt^n); the Hermitian coefficients
    K_abar_b produce [[Re H, Im H], [Im H^T, Re H]].
    """
    _, _, Kab, _, _, _ = kahler_data(spec, z, part)
    re, im = Kab.real, Kab.imag
    top = np.hstack([re, im])
    bot = np.hstack([im.T, re])
    return np.vstack([top, bot])
