"""Model specification, charge lattice, BPS indices, and domain predicates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import DEFAULT_POLICY, DomainError, TruncationPolicy


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=a.dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Charge:
    """Lattice charge q0 * gamma^0 + q_a * gamma^a."""

    q0: int
    q: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        object.__setattr__(self, "q0", int(self.q0))

    @property
    def is_zero(self) -> bool:
        return self.q0 == 0 and all(v == 0 for v in self.q)

    def __neg__(self) -> "Charge":
        return Charge(-self.q0, tuple(-v for v in self.q))


class ModelSpec:
    """Defining data of one model: cubic coefficients, chi, GV-type indices.

    kabc is stored fully symmetric; gv maps each nonzero charge vector with
    nonnegative entries to its integer index n_hat. The zero reduced charge
    always carries the coefficient -chi/2 and is never listed in gv.
    """

    def __init__(
        self,
        n: int,
        kabc: np.ndarray,
        chi: int,
        gv: list[tuple[tuple[int, ...], int]] | dict[tuple[int, ...], int],
        c_loop: float | str = 0.0,
        policy: TruncationPolicy = DEFAULT_POLICY,
    ) -> None:
        if n < 1:
            raise DomainError("n must be a positive integer")
        self.n = int(n)
        kabc = np.asarray(kabc, dtype=float)
        if kabc.shape != (n, n, n):
            raise DomainError(f"kabc must have shape {(n, n, n)}, got {kabc.shape}")
        if not np.allclose(kabc, np.transpose(kabc, (0, 2, 1)), atol=1e-14) or not np.allclose(
            kabc, np.transpose(kabc, (1, 0, 2)), atol=1e-14
        ):
            raise DomainError("kabc must be fully symmetric")
        self.kabc = _readonly(kabc)
        self.chi = int(chi)
        items = gv.items() if isinstance(gv, dict) else gv
        table: dict[tuple[int, ...], int] = {}
        for qvec, n_hat in items:
            key = tuple(int(v) for v in qvec)
            if len(key) != n:
                raise DomainError(f"gv charge {key} has wrong length")
            if any(v < 0 for v in key) or all(v == 0 for v in key):
                raise DomainError(f"gv charge {key} must be nonzero with nonnegative entries")
            if key in table:
                raise DomainError(f"duplicate gv charge {key}")
            table[key] = int(n_hat)
        self.gv: dict[tuple[int, ...], int] = table
        self.c_loop_raw = c_loop
        if isinstance(c_loop, str):
            if c_loop.replace(" ", "") != "chi/192pi":
                raise DomainError(f"unknown symbolic c_loop {c_loop!r}")
            self.c_loop = self.chi / (192.0 * math.pi)
            self.c_loop_is_chi_over_192pi = True
        else:
            self.c_loop = float(c_loop)
            self.c_loop_is_chi_over_192pi = False
        self.policy = policy

    def active_gv(self) -> list[tuple[tuple[int, ...], int]]:
        """Charges with nonzero index, in deterministic order."""
        return sorted(((q, nh) for q, nh in self.gv.items() if nh != 0), key=lambda p: p[0])

    def __repr__(self) -> str:
        return f"ModelSpec(n={self.n}, chi={self.chi}, gv={len(self.gv)} charges, c_loop={self.c_loop:.6g})"


@dataclass
class IIBPoint:
    """Coordinates (tau, z^a=b^a+it^a, c^a, c_a, c_0, psi)."""

    tau: complex
    z: np.ndarray
    c_upper: np.ndarray
    c_lower: np.ndarray
    c0: float = 0.0
    psi: float = 0.0

    def __post_init__(self) -> None:
        self.tau = complex(self.tau)
        if self.tau.imag <= 0:
            raise DomainError("tau must lie in the upper half plane")
        self.z = _readonly(np.asarray(self.z, dtype=complex))
        self.c_upper = _readonly(np.asarray(self.c_upper, dtype=float))
        self.c_lower = _readonly(np.asarray(self.c_lower, dtype=float))
        self.c0 = float(self.c0)
        self.psi = float(self.psi)
        if not (self.z.shape == self.c_upper.shape == self.c_lower.shape):
            raise DomainError("z, c_upper, c_lower must share one length")

    @property
    def b(self) -> np.ndarray:
        return self.z.real

    @property
    def t(self) -> np.ndarray:
        return self.z.imag


@dataclass
class IIAPoint:
    """Coordinates (rho, z^a, zeta^i, zeta_tilde_i, sigma) with i = 0..n."""

    rho: float
    z: np.ndarray
    zeta: np.ndarray
    zeta_tilde: np.ndarray
    sigma: float = 0.0

    def __post_init__(self) -> None:
        self.rho = float(self.rho)
        self.z = _readonly(np.asarray(self.z, dtype=complex))
        self.zeta = _readonly(np.asarray(self.zeta, dtype=float))
        self.zeta_tilde = _readonly(np.asarray(self.zeta_tilde, dtype=float))
        self.sigma = float(self.sigma)
        n = self.z.size
        if self.zeta.size != n + 1 or self.zeta_tilde.size != n + 1:
            raise DomainError("zeta and zeta_tilde must have length n+1")


def omega(spec: ModelSpec, gamma: Charge) -> int:
    """BPS index of a charge: -chi on the pure q0 tower, the stored index on
    +-(gv support) for any q0, zero elsewhere."""
    if gamma.is_zero:
        raise DomainError("the zero charge carries no BPS index")
    q = gamma.q
    if all(v == 0 for v in q):
        return -spec.chi
    if q in spec.gv:
        return spec.gv[q]
    neg = tuple(-v for v in q)
    if neg in spec.gv:
        return spec.gv[neg]
    return 0


def in_domain_Mq(spec: ModelSpec, z: np.ndarray) -> bool:
    """True iff q_a t^a > 0 for every gv charge with nonzero index."""
    t = np.asarray(z, dtype=complex).imag
    for qvec, _ in spec.active_gv():
        if float(np.dot(qvec, t)) <= 0:
            return False
    return True


def in_domain_M(spec: ModelSpec, z: np.ndarray, tau2: float = 1.0) -> bool:
    """True iff Im(tau_ij) at Z = (1, z) has eigenvalue signature (n, 1) and
    Im(tau_ij) z^i zbar^j < 0. Eigenvalues below 1e-12 * norm count as zero
    and fail the signature test."""
    from .cask import cask_eval

    z = np.asarray(z, dtype=complex)
    if not in_domain_Mq(spec, z):
        return False
    point = IIBPoint(
        tau=complex(0.0, float(tau2)),
        z=z,
        c_upper=np.zeros(spec.n),
        c_lower=np.zeros(spec.n),
    )
    try:
        imtau = cask_eval(spec, point).tau_ij.imag
    except DomainError:
        return False
    scale = np.linalg.norm(imtau)
    if scale == 0:
        return False
    eig = np.linalg.eigvalsh(imtau)
    thr = 1e-12 * scale
    n_pos = int(np.sum(eig > thr))
    n_neg = int(np.sum(eig < -thr))
    if not (n_pos == spec.n and n_neg == 1):
        return False
    zfull = np.concatenate([[1.0 + 0.0j], z])
    quad = float(np.real(zfull.conj() @ imtau @ zfull))
    return quad < 0


# ---------------------------------------------------------------------------
# JSON ingestion


def spec_from_dict(doc: dict) -> ModelSpec:
    """Build a ModelSpec from the documented JSON layout.

    {"n":..., "kabc":[[i,j,k,value],...] (symmetric completion applied),
     "chi":..., "gv":[{"q":[...],"n":...}], "c_loop":"chi/192pi"|number,
     "truncation":{...}}  -- kabc indices are 0-based.
    """
    n = int(doc["n"])
    if n < 1:
        raise DomainError("n must be at least 1")
    kabc = np.zeros((n, n, n))
    seen = {}
    for entry in doc.get("kabc", []):
        i, j, k, value = int(entry[0]), int(entry[1]), int(entry[2]), float(entry[3])
        if not (0 <= i < n and 0 <= j < n and 0 <= k < n):
            raise DomainError(f"kabc index out of range: {(i, j, k)}")
        key = tuple(sorted((i, j, k)))
        if key in seen and seen[key] != value:
            raise DomainError(f"conflicting kabc entries for indices {key}")
        seen[key] = value
        for a, b, c in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
            kabc[a, b, c] = value
    gv = [(tuple(item["q"]), int(item["n"])) for item in doc.get("gv", [])]
    trunc = doc.get("truncation", {})
    policy = TruncationPolicy(
        series_tail_tol=float(trunc.get("series_tail_tol", DEFAULT_POLICY.series_tail_tol)),
        lattice_shell_max=int(trunc.get("lattice_shell_max", DEFAULT_POLICY.lattice_shell_max)),
        lattice_tail_tol=float(trunc.get("lattice_tail_tol", DEFAULT_POLICY.lattice_tail_tol)),
        quad_rel_tol=float(trunc.get("quad_rel_tol", DEFAULT_POLICY.quad_rel_tol)),
    )
    return ModelSpec(
        n=n,
        kabc=kabc,
        chi=int(doc.get("chi", 0)),
        gv=gv,
        c_loop=doc.get("c_loop", 0.0),
        policy=policy,
    )


def spec_from_json(text: str) -> ModelSpec:
    return spec_from_dict(json.loads(text))


def load_spec(path: str) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))
