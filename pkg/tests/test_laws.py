import json

import numpy as np
import pytest

from freediff import NCPoly, TensorPoly, evaluate, parse_poly
from freediff import laws
from freediff import matmodel as mm
from freediff.ncpoly import DomainError, DimensionError, adjoint, cyclic_grad, tensor

from helpers import random_hermitian_tuple, random_poly

QUAD2 = parse_poly("0.5*X1^2 + 0.5*X2^2", 2)


def P(text, m=2):
    return parse_poly(text, m)


@pytest.fixture(scope="module")
def gue_law():
    """Finite-N stationary law of the quadratic potential is exactly GUE."""
    reps = []
    for r in range(8):
        rng = mm.RngStream(5, r)
        reps.append(np.stack([mm.gue_tuple(2, 32, rng) for _ in range(40)]))
    return laws.EmpiricalLaw(reps, {"source": "gue"})


@pytest.fixture
def small_law(rng):
    reps = [np.stack([random_hermitian_tuple(rng, 2, 5) for _ in range(3)]) for _ in range(4)]
    return laws.EmpiricalLaw(reps)


class TestConstruction:
    def test_empty(self):
        with pytest.raises(laws.LawError):
            laws.EmpiricalLaw([])
        with pytest.raises(laws.LawError):
            laws.EmpiricalLaw([np.zeros((0, 1, 2, 2))])

    def test_mismatched_replicas(self):
        with pytest.raises(laws.LawError):
            laws.EmpiricalLaw([np.zeros((2, 1, 2, 2)), np.zeros((3, 1, 2, 2))])

    def test_shape_properties(self, small_law):
        assert (small_law.m, small_law.N, small_law.n_replicas, small_law.n_samples) == (2, 5, 4, 12)

    def test_arity(self, small_law):
        with pytest.raises(DimensionError):
            laws.moment(small_law, parse_poly("X1", 3))


class TestMoment:
    def test_unit_exact(self, small_law):
        e = laws.moment(small_law, NCPoly.const(1, 2))
        assert e.value == 1 and e.stderr == 0

    def test_matches_direct_average(self, small_law):
        p = P("X1*X2^2 - 2i*X2 + 0.5")
        samples = small_law._data.reshape(-1, 2, 5, 5)
        direct = np.mean([mm.ntrace(evaluate(p, x)) for x in samples])
        assert laws.moment(small_law, p).value == pytest.approx(direct, abs=1e-13)

    def test_linearity(self, small_law, rng):
        for _ in range(50):
            p = random_poly(rng, 2, 4, 4, starred=True, integer=False)
            q = random_poly(rng, 2, 4, 4, starred=True, integer=False)
            z = complex(rng.normal(), rng.normal())
            lhs = laws.moment(small_law, p + z * q).value
            rhs = laws.moment(small_law, p).value + z * laws.moment(small_law, q).value
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_traciality(self, small_law, rng):
        for _ in range(50):
            p = random_poly(rng, 2, 3, 3, starred=True)
            q = random_poly(rng, 2, 3, 3, starred=True)
            assert abs(laws.moment(small_law, p * q).value - laws.moment(small_law, q * p).value) < 1e-10

    def test_positivity(self, small_law, rng):
        for _ in range(50):
            p = random_poly(rng, 2, 3, 4, starred=True, integer=False)
            assert laws.moment(small_law, adjoint(p) * p).value.real >= -1e-10

    def test_reality(self, small_law):
        for text in ["X1*X2 + X2*X1", "i*X1*X2 - i*X2*X1", "X1*X2*X1"]:
            assert abs(laws.moment(small_law, P(text)).value.imag) < 1e-12

    def test_gue_catalan(self, gue_law):
        # finite-N GUE: tr X^4 = 2 + 1/N^2, tr X^6 = 5 + 10/N^2
        for k, target in [(2, 1.0), (4, 2.0), (6, 5.0)]:
            e = laws.moment(gue_law, P(f"X1^{k}"))
            assert abs(e.value - target) < 3 * e.stderr + 0.05
            assert e.stderr > 0

    def test_gue_mixed_moment(self, gue_law):
        e = laws.moment(gue_law, P("X1*X2*X1*X2"))
        assert abs(e.value) < 3 * e.stderr + 0.05


class TestTensorMoment:
    def test_unit(self, small_law):
        one = NCPoly.const(1, 2)
        assert laws.tensor_moment(small_law, tensor(one, one)).value == 1

    def test_unit_pairing(self, small_law):
        p = P("X1*X2 + 3*X2^2")
        one = NCPoly.const(1, 2)
        assert laws.tensor_moment(small_law, tensor(p, one)).value == pytest.approx(laws.moment(small_law, p).value, abs=1e-14)

    def test_representation_independent(self, small_law):
        x1, x2 = P("X1"), P("X2")
        a = TensorPoly([(x1 + x2, x1 * x2 - x2)])
        b = TensorPoly([(x1, x1 * x2), (x2, x1 * x2), (x1, -x2), (x2, -x2)])
        assert abs(laws.tensor_moment(small_law, a).value - laws.tensor_moment(small_law, b).value) < 1e-12

    def test_product_of_averages(self, small_law):
        a, b = P("X1^2"), P("X2^2")
        want = laws.moment(small_law, a).value * laws.moment(small_law, b).value
        assert laws.tensor_moment(small_law, tensor(a, b)).value == pytest.approx(want, abs=1e-14)


class TestResidual:
    def test_zero_sample(self):
        law = laws.EmpiricalLaw.from_samples([np.zeros((2, 4, 4))])
        r = laws.sd_residual_index(law, QUAD2, P("X1"), 1)
        assert r.value == 1
        assert laws.sd_residual(law, QUAD2, P("X1")).value == 1

    def test_p_x1_is_one_minus_m2(self, small_law):
        r = laws.sd_residual_index(small_law, QUAD2, P("X1"), 1)
        m2 = laws.moment(small_law, P("X1^2")).value
        assert r.value == pytest.approx(1 - m2, abs=1e-14)

    def test_p_x1_cubed_encodes_m4(self, small_law):
        # d_1 X1^3 = 1(x)X1^2 + X1(x)X1 + X1^2(x)1
        mo = lambda t: laws.moment(small_law, P(t)).value
        want = 2 * mo("X1^2") + mo("X1") ** 2 - mo("X1^4")
        r = laws.sd_residual_index(small_law, QUAD2, P("X1^3"), 1)
        assert r.value == pytest.approx(want, abs=1e-12)

    def test_thm2_equals_summed_index_form(self, small_law, rng):
        v = P("0.5*X1^2 + 0.5*X2^2 + 0.1*X1^4")
        for _ in range(20):
            p = random_poly(rng, 2, 4, 3)
            direct = laws.sd_residual_thm2(small_law, v, p)
            parts = [laws.sd_residual_index(small_law, v, cyclic_grad(p, i), i) for i in (1, 2)]
            assert direct.value == parts[0].value + parts[1].value

    def test_rejects_starred(self, small_law):
        with pytest.raises(DomainError):
            laws.sd_residual(small_law, QUAD2, P("X1*"))

    def test_gue_residuals_small(self, gue_law):
        for text in ["X1", "X1^3", "X1*X2*X1", "X2^2*X1"]:
            r = laws.sd_residual(gue_law, QUAD2, P(text))
            assert abs(r.value) < 3 * r.stderr + 0.05

    def test_stderr_from_replicas(self):
        # identical replicas: no scatter, zero stderr
        x = np.stack([np.eye(3)[None] * v for v in (0.5, 1.5)])
        law = laws.EmpiricalLaw([x, x, x])
        e = laws.moment(law, parse_poly("X1^2", 1))
        assert e.value == pytest.approx(1.25) and e.stderr == 0


class TestSuite:
    def test_deg_zero_empty(self, small_law):
        rep = laws.sd_residual_suite(small_law, QUAD2, 0)
        assert rep.entries == [] and rep.passed

    def test_monomial_count(self, small_law):
        rep = laws.sd_residual_suite(small_law, QUAD2, 3)
        assert len(rep.entries) == 2 + 4 + 8

    def test_gue_passes(self, gue_law):
        rep = laws.sd_residual_suite(gue_law, QUAD2, 4)
        assert rep.passed, [e.label for e in rep.failures]

    def test_initial_law_fails(self):
        z = np.stack([0.3 * np.eye(4), -0.2 * np.eye(4)])
        law = laws.EmpiricalLaw([z[None]] * 8)
        rep = laws.sd_residual_suite(law, QUAD2, 2)
        assert not rep.passed
        assert "X1" in [e.label for e in rep.failures]

    def test_exports(self, small_law, tmp_path):
        rep = laws.sd_residual_suite(small_law, QUAD2, 2)
        doc = json.loads(rep.to_json(tmp_path / "r.json"))
        assert doc["entries"][0]["polynomial"] == "X1"
        assert set(doc["entries"][0]) == {"polynomial", "estimate_re", "estimate_im", "stderr", "target", "tolerance", "pass"}
        csv = rep.to_csv(tmp_path / "r.csv")
        assert csv.splitlines()[0].startswith("polynomial,estimate_re")
        assert len(csv.splitlines()) == 1 + len(rep.entries)


class TestMomentBounds:
    def test_gue_pass(self, gue_law):
        assert laws.moment_bound_check(gue_law, 2.2, 6).passed

    def test_small_b0_fails_at_two(self, gue_law):
        rep = laws.moment_bound_check(gue_law, 0.5, 6)
        assert "X1^2" in [e.label for e in rep.failures]

    def test_zeros_pass(self):
        law = laws.EmpiricalLaw.from_samples([np.zeros((2, 3, 3))] * 4)
        assert laws.moment_bound_check(law, 1e-3, 6).passed

    def test_bad_b0(self, gue_law):
        with pytest.raises(ValueError):
            laws.moment_bound_check(gue_law, 0.0, 4)


def test_monomials():
    ms = laws.monomials(2, 2)
    assert [str(p) for p in ms] == ["X1^2", "X1*X2", "X2*X1", "X2^2"]
    assert laws.monomials(3, 0) == [NCPoly.const(1, 3)]
