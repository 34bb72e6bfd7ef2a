"""Quaternionic metric assembly on the corrected hypermultiplet base.

qk_metric builds the full instanton-corrected metric from seven blocks: the
rescaled base metric with its Bessel-tower completion, the rho sector, the
sigma (contact) sector, the fiber sector contracted with the inverse
compatibility tensor, a mixed fiber/base square, and the pair of d^cK squares
that carry the eta corrections.  one_loop_metric and tree_metric are the
independent closed forms the assembly must reduce to when the BPS indices,
and additionally chi and the constant c_loop, are switched off.

All tensors are real symmetric matrices over the fixed coordinate frame
(rho, b^a, t^a, zeta^I, zetatilde_I, sigma); products of 1-forms are
half-symmetrized (see frames).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cask import kahler_data, psk_metric
from .frames import Frame, herm_contract, herm_square, sym
from .instanton import InstContext, _frame_dk, point_context
from .kernels import TWO_PI, DomainError, TruncationPolicy
from .model import IIAPoint, ModelSpec

__all__ = [
    "ScanPoint",
    "ScanReport",
    "SymTensor",
    "definiteness_scan",
    "one_loop_metric",
    "qk_metric",
    "tree_metric",
]


@dataclass(frozen=True)
class SymTensor:
    """Real symmetric 2-tensor over the fixed coordinate frame."""

    dim: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.dim, self.dim):
            raise ValueError("coefficient matrix must be dim x dim")
        if not np.allclose(c, c.T, atol=1e-12 * (1.0 + float(np.max(np.abs(c))))):
            raise ValueError("coefficient matrix must be symmetric")

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.coeffs)


def _axion_pairing(frame: Frame, zeta: np.ndarray, zetatilde: np.ndarray) -> np.ndarray:
    """<zeta, dzeta> = -zetatilde_I dzeta^I + zeta^I dzetatilde_I."""
    form = np.zeros(frame.dim)
    form[frame.s_zeta] = -zetatilde
    form[frame.s_zetatilde] = zeta
    return form


def _embed_base(frame: Frame, psk: np.ndarray) -> np.ndarray:
    g = np.zeros((frame.dim, frame.dim))
    n = frame.n
    g[1 : 2 * n + 1, 1 : 2 * n + 1] = psk
    return g


def _wall_guard(ctx: InstContext) -> None:
    scale = 1e-13 * (1.0 + abs(ctx.rho))
    walls = [
        (ctx.rho + ctx.rho_inst, "f"),
        (ctx.rho + 2.0 * ctx.c_loop - ctx.rho3_inst, "f3"),
        (ctx.rho + ctx.c_loop + ctx.rho_minus, "g_N(V,V)"),
    ]
    for value, name in walls:
        if abs(value) <= scale:
            raise DomainError(f"outside N': {name} vanishes at this point")


def qk_metric(
    spec: ModelSpec, point: IIAPoint, policy: TruncationPolicy | None = None
) -> SymTensor:
    """Instanton-corrected quaternionic metric at a point."""
    return _metric_from_context(point_context(spec, point, policy))


def _metric_from_context(ctx: InstContext) -> SymTensor:
    _wall_guard(ctx)
    fr = ctx.frame
    spec = ctx.spec
    rho, cl = ctx.rho, ctx.c_loop
    rho_p = rho + ctx.rho_inst
    den1 = rho + cl
    den3 = rho + 2.0 * cl - ctx.rho3_inst
    deng = den1 + ctx.rho_minus
    ek = math.exp(ctx.K)

    base = _embed_base(fr, psk_metric(spec, ctx.z))
    vsq = 0.5 * (ctx.vsq + np.conj(ctx.vsq).T)
    b1 = (den1 / rho_p) * (base + 2.0 * ek * 0.5 * (vsq.real + vsq.real.T))

    drho = np.zeros(fr.dim)
    drho[fr.i_rho] = 1.0
    b2 = (1.0 / (2.0 * rho_p**2)) * (
        ((rho + 2.0 * cl - ctx.rho_inst) / (2.0 * den1)) * sym(drho, drho)
        + 2.0 * sym(drho, ctx.drho_inst)
        + sym(ctx.drho_inst, ctx.drho_inst)
    )

    dsigma = np.zeros(fr.dim)
    dsigma[fr.i_sigma] = 1.0
    pairing = _axion_pairing(fr, ctx.zeta, ctx.zetatilde)
    theta = (
        dsigma
        - pairing
        - 4.0 * cl * ctx.dcK
        + ctx.eta_plus
        + ((ctx.rho_plus - cl) / deng) * ctx.eta_minus
    )
    b3 = (deng / (64.0 * rho_p**2 * den3)) * sym(theta, theta)

    b4 = -(1.0 / (8.0 * rho_p)) * herm_contract(ctx.T_inv, ctx.W)

    vec5 = ctx.zfull @ ctx.W - ctx.a_v / TWO_PI
    b5 = (den1 * ek / (2.0 * rho_p**2)) * herm_square(vec5)

    u6 = 0.5 * ctx.dcK + ctx.eta_minus / (8.0 * deng)
    b6 = (deng / rho_p) * sym(u6, u6)
    b7 = -(den1 / rho_p) * sym(0.5 * ctx.dcK, 0.5 * ctx.dcK)

    g = b1 + b2 + b3 + b4 + b5 + b6 + b7
    return SymTensor(dim=fr.dim, coeffs=0.5 * (g + g.T))


def one_loop_metric(spec: ModelSpec, point: IIAPoint) -> SymTensor:
    """Closed-form metric with only the constant c_loop correction.

    Independent reference: equals qk_metric exactly when every BPS index
    vanishes (gv empty or all-zero and chi = 0).
    """
    rho, cl = point.rho, spec.c_loop
    if rho <= 0.0 or rho + cl <= 0.0 or rho + 2.0 * cl == 0.0:
        raise DomainError("closed form needs rho > 0 with rho + c_loop > 0")
    n = spec.n
    fr = Frame(n)
    z = np.asarray(point.z, dtype=complex)
    K, Ka, _, N, tau_mat, _ = kahler_data(spec, z)
    zfull = np.concatenate([[1.0 + 0.0j], z])
    _, dck = _frame_dk(fr, Ka)

    base = _embed_base(fr, psk_metric(spec, z))
    drho = np.zeros(fr.dim)
    drho[fr.i_rho] = 1.0
    dsigma = np.zeros(fr.dim)
    dsigma[fr.i_sigma] = 1.0
    pairing = _axion_pairing(fr, np.asarray(point.zeta, float), np.asarray(point.zeta_tilde, float))
    u = dsigma - pairing - 4.0 * cl * dck
    w_cl = fr.d_zetatilde() - tau_mat @ fr.d_zeta()

    n_inv = np.linalg.inv(N)
    m = n_inv - (2.0 * (rho + cl) * math.exp(K) / rho) * np.outer(zfull, np.conj(zfull))

    g = (
        ((rho + cl) / rho) * base
        + ((rho + 2.0 * cl) / (4.0 * rho**2 * (rho + cl))) * sym(drho, drho)
        + ((rho + cl) / (64.0 * rho**2 * (rho + 2.0 * cl))) * sym(u, u)
        - (1.0 / (4.0 * rho)) * herm_contract(m, w_cl)
    )
    return SymTensor(dim=fr.dim, coeffs=0.5 * (g + g.T))


def tree_metric(spec: ModelSpec, point: IIAPoint) -> SymTensor:
    """Uncorrected q-map metric (chi = c_loop = 0, indices off)."""
    rho = point.rho
    if rho <= 0.0:
        raise DomainError("tree-level metric needs rho > 0")
    n = spec.n
    fr = Frame(n)
    z = np.asarray(point.z, dtype=complex)
    K, _, _, N, tau_mat, _ = kahler_data(spec, z)
    zfull = np.concatenate([[1.0 + 0.0j], z])

    base = _embed_base(fr, psk_metric(spec, z))
    drho = np.zeros(fr.dim)
    drho[fr.i_rho] = 1.0
    dsigma = np.zeros(fr.dim)
    dsigma[fr.i_sigma] = 1.0
    pairing = _axion_pairing(fr, np.asarray(point.zeta, float), np.asarray(point.zeta_tilde, float))
    u = dsigma - pairing
    w_cl = fr.d_zetatilde() - tau_mat @ fr.d_zeta()
    m = np.linalg.inv(N) - 2.0 * math.exp(K) * np.outer(zfull, np.conj(zfull))

    g = (
        base
        + (1.0 / (4.0 * rho**2)) * sym(drho, drho)
        + (1.0 / (64.0 * rho**2)) * sym(u, u)
        - (1.0 / (4.0 * rho)) * herm_contract(m, w_cl)
    )
    return SymTensor(dim=fr.dim, coeffs=0.5 * (g + g.T))


@dataclass(frozen=True)
class ScanPoint:
    """One grid point of a definiteness scan."""

    tau2: float
    z: tuple
    rho: float
    in_cone: bool
    f: float | None = None
    f3: float | None = None
    gnvv: float | None = None
    min_eig: float | None = None
    positive: bool = False
    inside: bool = False
    note: str = ""


@dataclass
class ScanReport:
    points: list[ScanPoint] = field(default_factory=list)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_inside(self) -> int:
        return sum(1 for p in self.points if p.inside)

    @property
    def n_positive(self) -> int:
        return sum(1 for p in self.points if p.inside and p.positive)

    @property
    def all_positive(self) -> bool:
        return self.n_inside > 0 and self.n_positive == self.n_inside

    @property
    def outside_points(self) -> list[ScanPoint]:
        return [p for p in self.points if p.in_cone and not p.inside]


def _axis(bounds, count: int) -> np.ndarray:
    lo, hi = float(bounds[0]), float(bounds[1])
    if count < 1 or hi < lo:
        raise DomainError("scan axis needs count >= 1 and hi >= lo")
    if count == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, count)


def definiteness_scan(
    spec: ModelSpec,
    region: dict,
    grid: int = 5,
    zeta: np.ndarray | None = None,
    zetatilde: np.ndarray | None = None,
    sigma: float = 0.0,
    policy: TruncationPolicy | None = None,
) -> ScanReport:
    """Grid scan of the metric over a coordinate box.

    region maps "tau2" to a (lo, hi) pair and "b"/"t" to per-modulus pairs
    (a single pair is broadcast over all moduli).  The "t" entry may instead
    be a callable (tau2, b) -> bounds, letting the box track a tau-dependent
    domain wall.  At each grid point rho is solved from tau2 through the
    radius relation, the metric is assembled, and the report records domain
    membership, the signs of (f, f3), and the smallest eigenvalue.
    """
    n = spec.n
    zeta = np.zeros(n + 1) if zeta is None else np.asarray(zeta, dtype=float)
    zetatilde = np.zeros(n + 1) if zetatilde is None else np.asarray(zetatilde, dtype=float)

    def axes_of(val):
        pairs = [val] * n if np.ndim(val) == 1 else list(val)
        if len(pairs) != n:
            raise DomainError("region bounds need one pair or n pairs")
        return [_axis(p, grid) for p in pairs]

    tau2_axis = _axis(region.get("tau2", (1.0, 1.0)), grid)
    b_axes = axes_of(region.get("b", (0.0, 0.0)))
    t_spec = region.get("t", (1.0, 1.0))

    cells = []
    b_mesh = np.meshgrid(*b_axes, indexing="ij")
    b_rows = np.stack([m.ravel() for m in b_mesh], axis=-1)
    for tau2 in tau2_axis:
        for b in b_rows:
            t_axes = axes_of(t_spec(float(tau2), b) if callable(t_spec) else t_spec)
            t_mesh = np.meshgrid(*t_axes, indexing="ij")
            for t in np.stack([m.ravel() for m in t_mesh], axis=-1):
                cells.append((float(tau2), b, t))

    report = ScanReport()
    for tau2, b, t in cells:
        z = b + 1j * t
        try:
            K = kahler_data(spec, z)[0]
        except DomainError as err:
            report.points.append(
                ScanPoint(tau2=tau2, z=tuple(z), rho=math.nan, in_cone=False, note=str(err))
            )
            continue
        rho = tau2 * tau2 * math.exp(-K) / 16.0 - spec.c_loop
        pt = IIAPoint(rho=rho, z=z, zeta=zeta, zeta_tilde=zetatilde, sigma=sigma)
        try:
            ctx = point_context(spec, pt, policy)
            g = _metric_from_context(ctx)
        except DomainError as err:
            report.points.append(
                ScanPoint(tau2=tau2, z=tuple(z), rho=rho, in_cone=True, note=str(err))
            )
            continue
        eigs = g.eigenvalues()
        min_eig = float(eigs[0])
        inside = ctx.f > 0 and ctx.f3 < 0 and ctx.gnvv > 0
        report.points.append(
            ScanPoint(
                tau2=tau2,
                z=tuple(z),
                rho=rho,
                in_cone=True,
                f=ctx.f,
                f3=ctx.f3,
                gnvv=ctx.gnvv,
                min_eig=min_eig,
                positive=min_eig > 0.0,
                inside=inside,
                note="" if inside else "outside N'",
            )
        )
    return report
