"""Instanton-corrected q-map quaternionic-Kahler metrics.

Numerical construction of the corrected hypermultiplet-type metrics from a
cubic model specification, together with verification tools for the exact
identities the construction rests on: Poisson resummation of Bessel towers,
contour-integral Bessel identities, Darboux/contact identities on the twistor
space, discrete isometry groups, and the one-modulus example family.
"""

from .kernels import (
    TruncationPolicy,
    LatticeSumParams,
    SumResult,
    DomainError,
    ConvergenceError,
    bessel_k,
    polylog,
    rogers_L,
    eisenstein_sum,
    bps_sum_bessel,
    bps_sum_lattice,
    bps_sum_derivatives,
)
from .model import (
    ModelSpec,
    Charge,
    IIAPoint,
    IIBPoint,
    omega,
    in_domain_Mq,
    in_domain_M,
    spec_from_dict,
    spec_from_json,
    load_spec,
)
from .frames import Frame
from .instanton import (
    CompatReport,
    InstEval,
    compat_tensor,
    hk_scalars,
    point_context,
    v_a_inst,
    w_forms,
)
from .qk_metric import (
    ScanPoint,
    ScanReport,
    SymTensor,
    definiteness_scan,
    one_loop_metric,
    qk_metric,
    tree_metric,
)

__all__ = [
    "TruncationPolicy",
    "LatticeSumParams",
    "SumResult",
    "DomainError",
    "ConvergenceError",
    "bessel_k",
    "polylog",
    "rogers_L",
    "eisenstein_sum",
    "bps_sum_bessel",
    "bps_sum_lattice",
    "bps_sum_derivatives",
    "ModelSpec",
    "Charge",
    "IIAPoint",
    "IIBPoint",
    "omega",
    "in_domain_Mq",
    "in_domain_M",
    "spec_from_dict",
    "spec_from_json",
    "load_spec",
    "Frame",
    "CompatReport",
    "InstEval",
    "compat_tensor",
    "hk_scalars",
    "point_context",
    "v_a_inst",
    "w_forms",
    "ScanPoint",
    "ScanReport",
    "SymTensor",
    "definiteness_scan",
    "one_loop_metric",
    "qk_metric",
    "tree_metric",
]

__version__ = "0.1.0"
