"""Model specification tests: charges, BPS indices, domains, JSON loading."""

import json
import math

import numpy as np
import pytest

from qmap import Charge, DomainError, ModelSpec, omega
from qmap.model import (
    IIAPoint,
    IIBPoint,
    in_domain_M,
    in_domain_Mq,
    load_spec,
    spec_from_dict,
    spec_from_json,
)


def two_modulus_spec(chi=-4):
    return spec_from_dict({
        "n": 2,
        "kabc": [[0, 0, 0, 6.0], [0, 0, 1, 2.0], [0, 1, 1, 1.0], [1, 1, 1, 3.0]],
        "chi": chi,
        "gv": [{"q": [1, 0], "n": 3}, {"q": [0, 1], "n": -2},
               {"q": [1, 1], "n": 5}],
        "c_loop": "chi/192pi",
    })


def one_modulus_example(chi=2):
    return spec_from_dict({
        "n": 1,
        "kabc": [[0, 0, 0, 1.0]],
        "chi": chi,
        "gv": [],
        "c_loop": "chi/192pi",
    })


class TestCharge:
    def test_negation(self):
        g = Charge(2, (1, -3))
        h = -g
        assert h.q0 == -2 and h.q == (-1, 3)

    def test_zero_flag(self):
        assert Charge(0, (0, 0)).is_zero
        assert not Charge(0, (1, 0)).is_zero


class TestOmega:
    def test_evenness_exhaustive(self):
        """Omega(gamma) = Omega(-gamma) for all |q0| <= 5 and gv-support q."""
        spec = two_modulus_spec()
        qs = [(0, 0), (1, 0), (0, 1), (1, 1), (-1, 0), (0, -1), (-1, -1),
              (2, 1), (-2, -1)]
        for q0 in range(-5, 6):
            for q in qs:
                g = Charge(q0, q)
                if g.is_zero:
                    continue
                assert omega(spec, g) == omega(spec, -g)

    def test_pure_flux_charge(self):
        spec = two_modulus_spec(chi=-4)
        assert omega(spec, Charge(3, (0, 0))) == 4
        assert omega(spec, Charge(-1, (0, 0))) == 4

    def test_gv_lookup_both_signs(self):
        spec = two_modulus_spec()
        assert omega(spec, Charge(0, (1, 0))) == 3
        assert omega(spec, Charge(2, (-1, 0))) == 3
        assert omega(spec, Charge(0, (0, -1))) == -2
        assert omega(spec, Charge(1, (2, 2))) == 0

    def test_zero_charge_rejected(self):
        with pytest.raises(DomainError):
            omega(two_modulus_spec(), Charge(0, (0, 0)))


class TestDomains:
    def test_quantum_cone_condition(self):
        spec = two_modulus_spec()
        assert in_domain_Mq(spec, np.array([0.1 + 1.0j, -0.2 + 2.0j]))
        assert not in_domain_Mq(spec, np.array([0.1 - 1.0j, -0.2 + 2.0j]))
        # q = (1,1) needs t1 + t2 > 0
        assert not in_domain_Mq(spec, np.array([0.0 + 1.0j, 0.0 - 2.0j]))

    def test_no_gv_charges_trivial_cone(self):
        spec = one_modulus_example()
        assert in_domain_Mq(spec, np.array([0.3 - 5.0j]))

    def test_ray_scan_enters_domain(self):
        """Along z = b + i lam t the signature condition holds for large lam."""
        spec = one_modulus_example(chi=2)
        b, t = 0.3, 1.0
        lams = [0.05, 0.2, 1.0, 3.0]
        flags = [in_domain_M(spec, np.array([complex(b, lam * t)])) for lam in lams]
        assert flags[-1]
        assert flags == sorted(flags)  # once inside, stays inside on this ray

    def test_signature_condition_excludes_small_t(self):
        spec = one_modulus_example(chi=2)
        # chi > 0 pushes Det Im tau negative-definite structure away from t -> 0
        assert not in_domain_M(spec, np.array([0.0 + 0.05j]))
        assert in_domain_M(spec, np.array([0.0 + 1.0j]))


class TestPoints:
    def test_iib_point_accessors(self):
        p = IIBPoint(tau=0.3 + 1.2j, z=np.array([0.25 + 1.5j]),
                     c_upper=np.array([0.1]), c_lower=np.array([0.2]),
                     c0=0.05, psi=0.3)
        assert p.b[0] == pytest.approx(0.25)
        assert p.t[0] == pytest.approx(1.5)

    def test_iib_point_validation(self):
        with pytest.raises(DomainError):
            IIBPoint(tau=0.3 - 0.2j, z=np.array([1j]), c_upper=np.array([0.0]),
                     c_lower=np.array([0.0]), c0=0.0, psi=0.0)

    def test_iia_point_lengths(self):
        p = IIAPoint(rho=2.0, z=np.array([1j]), zeta=np.array([0.1, 0.2]),
                     zeta_tilde=np.array([0.3, 0.4]), sigma=0.5)
        assert len(p.zeta) == 2
        with pytest.raises(DomainError):
            IIAPoint(rho=2.0, z=np.array([1j]), zeta=np.array([0.1]),
                     zeta_tilde=np.array([0.3, 0.4]), sigma=0.5)


class TestSpecLoading:
    DOC = {
        "n": 2,
        "kabc": [[0, 0, 0, 6.0], [0, 0, 1, 2.0], [0, 1, 1, 1.0], [1, 1, 1, 3.0]],
        "chi": -4,
        "gv": [{"q": [1, 0], "n": 3}, {"q": [0, 1], "n": -2}],
        "c_loop": "chi/192pi",
        "truncation": {"series_tail_tol": 1e-12, "lattice_shell_max": 32},
    }

    def test_round_trip_fields(self):
        spec = spec_from_json(json.dumps(self.DOC))
        assert spec.n == 2
        assert spec.chi == -4
        assert spec.kabc[0, 0, 1] == 2.0
        assert spec.kabc[1, 0, 0] == 2.0  # symmetric completion
        assert spec.gv[(1, 0)] == 3
        assert spec.c_loop == pytest.approx(-4 / (192 * math.pi))
        assert spec.c_loop_is_chi_over_192pi
        assert spec.policy.series_tail_tol == 1e-12
        assert spec.policy.lattice_shell_max == 32

    def test_numeric_c_loop(self):
        doc = dict(self.DOC, c_loop=0.25)
        spec = spec_from_json(json.dumps(doc))
        assert spec.c_loop == 0.25
        assert not spec.c_loop_is_chi_over_192pi

    def test_file_loading(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps(self.DOC))
        spec = load_spec(path)
        assert spec.n == 2

    def test_validation_errors(self):
        with pytest.raises(DomainError):
            spec_from_dict(dict(self.DOC, n=0))
        with pytest.raises(DomainError):
            spec_from_dict(dict(self.DOC, gv=[{"q": [0, 0], "n": 1}]))
        with pytest.raises(DomainError):
            spec_from_dict(dict(self.DOC, gv=[{"q": [1, 0], "n": 1},
                                              {"q": [1, 0], "n": 2}]))
        bad = dict(self.DOC,
                   kabc=[[0, 0, 0, 6.0], [0, 0, 1, 2.0], [0, 1, 0, 3.0]])
        with pytest.raises(DomainError):
            spec_from_dict(bad)

    def test_active_gv_drops_zero_entries(self):
        doc = dict(self.DOC, gv=[{"q": [1, 0], "n": 3}, {"q": [0, 1], "n": 0}])
        spec = spec_from_dict(doc)
        assert spec.active_gv() == [((1, 0), 3)]

    def test_kabc_readonly(self):
        spec = spec_from_dict(self.DOC)
        with pytest.raises(ValueError):
            spec.kabc[0, 0, 0] = 5.0
