import math

import numpy as np
import pytest
from scipy.integrate import quad

from prandtl_blowup.models import WeightSpec
from prandtl_blowup.weight import (
    b_condition_1,
    b_condition_2,
    build_weight,
    certify,
    eta,
    eta_prime,
)


@pytest.fixture(scope="module")
def certificate(weight):
    return certify(weight, samples=100_000)


def test_default_spec_fills_cutoff_and_beta():
    spec = WeightSpec()
    assert spec.M == pytest.approx(0.9)
    assert spec.beta == pytest.approx(5.0 / 6.0)


def test_b_lower_bounds():
    assert b_condition_2(2.0) == pytest.approx(47.73, abs=0.01)
    assert b_condition_1(2.0) < b_condition_2(2.0) < 50.0


@pytest.mark.parametrize(
    "spec, message",
    [
        (WeightSpec(B=10.0), "lower bound"),
        (WeightSpec(r=1.0), "r must be > 1"),
        (WeightSpec(epsilon=0.5), "epsilon"),
        (WeightSpec(Q=2.0), "Q = 1"),
    ],
)
def test_invalid_specs_rejected(spec, message):
    with pytest.raises(ValueError, match=message):
        build_weight(spec)


def test_pieces_glue_at_q(weight):
    assert weight.f(1.0) == pytest.approx(0.02, abs=1e-15)
    assert weight.g(1.0) == pytest.approx(0.02, abs=1e-15)
    assert weight.f1(1.0) == pytest.approx(-8e-4, abs=1e-15)
    assert weight.g1(1.0) == pytest.approx(-8e-4, abs=1e-15)


def test_shifted_weight_vanishes_at_origin(weight):
    assert abs(weight.eval_w(0.0)) < 1e-15
    assert weight.y_eps > 0
    with pytest.raises(ValueError):
        weight.eval_w(-0.1)


def test_shifted_weight_is_continuous_at_junctions(weight):
    for y in weight.junctions:
        left, right = weight.eval_w(y - 1e-10), weight.eval_w(y + 1e-10)
        assert abs(left - right) < 1e-11
        slope_left, slope_right = weight.eval_w1(y - 1e-10), weight.eval_w1(y + 1e-10)
        assert abs(slope_left - slope_right) < 1e-8


def test_second_derivative_by_piece(weight):
    eps_s, _, q_s = weight.junctions
    assert weight.eval_w2(0.5 * eps_s) == 0.0
    assert weight.eval_w2(0.5 * (eps_s + q_s)) == pytest.approx(-2.0 * weight.quad)
    y = np.array([2.0, 10.0, 100.0])
    r, B = weight.spec.r, weight.spec.B
    expected = r * (r + 1) * B / (y - weight.y_eps + B - 1) ** (r + 2)
    np.testing.assert_allclose(weight.eval_w2(y), expected, rtol=1e-14)


def test_cutoff(weight):
    spec = weight.spec
    assert eta(spec.M, spec) == 0.0
    assert eta(spec.Q, spec) == 1.0
    assert eta(0.3, spec) == 0.0
    assert eta(5.0, spec) == 1.0
    y = np.linspace(spec.M, spec.Q, 100_000)
    assert np.all(np.diff(eta(y, spec)) >= 0)
    assert np.max(eta_prime(y, spec)) <= 20.0 + 1e-12


def test_structural_constants(weight):
    assert 100.0 < weight.c_f < 105.0
    assert weight.bar_c_f == 1.0
    assert weight.beta == pytest.approx(5.0 / 6.0)
    assert weight.beta_measured < 1.0
    assert weight.c_1 == pytest.approx(weight.l1_closed_form(), abs=1e-6)


def test_l1_norm_against_quadrature_oracle(weight):
    eps_s, _, q_s = weight.junctions
    pieces = [(0.0, eps_s), (eps_s, q_s)]
    bounded = sum(quad(weight.eval_w, lo, hi, epsabs=1e-14)[0] for lo, hi in pieces)
    tail = quad(weight.eval_w, q_s, np.inf, epsabs=1e-13, limit=200)[0]
    assert weight.c_1 == pytest.approx(bounded + tail, abs=1e-3)
    assert weight.l1_closed_form() == pytest.approx(bounded + tail, abs=1e-6)


def test_finer_build_agrees_on_c1(weight):
    finer = build_weight(WeightSpec(), samples=1_000_000)
    assert abs(finer.c_1 - weight.c_1) < 1e-3


def test_tail_mass_matches_quadrature(weight):
    q_s = weight.junctions[2]
    for y in (0.5, 2.0, 40.0):
        expected = quad(weight.eval_w, max(y, q_s), np.inf, epsabs=1e-14, limit=200)[0]
        if y < q_s:
            expected += quad(weight.eval_w, y, q_s, epsabs=1e-14)[0]
        assert weight.tail_mass(y) == pytest.approx(expected, rel=1e-8)
    assert weight.tail_mass(40.0) == pytest.approx(50.0 / (40.0 - weight.y_eps + 49.0), rel=1e-12)


def test_certificate_passes_with_positive_margins(certificate):
    failed = [c.condition for c in certificate.conditions if not c.passed]
    assert failed == []
    non_positive = [c.condition for c in certificate.conditions if not c.margin > 0]
    assert non_positive == []


def test_certificate_tail_ratio(certificate):
    assert certificate.tail_ratio == pytest.approx(2.0 / 3.0)
    assert certificate.tail_ratio_deviation <= 1e-12


def test_certificate_records_constants(certificate, weight):
    assert certificate.constants["c_1"] == weight.c_1
    assert certificate.constants["b_condition_2"] == pytest.approx(b_condition_2(2.0))
    data = certificate.to_dict()
    assert data["passed"] is True
    assert {c["condition"] for c in data["conditions"]} >= {"f_origin", "g_decay", "glue_slope_q", "cutoff_derivative"}


def test_certify_needs_enough_samples(weight):
    with pytest.raises(ValueError, match="samples"):
        certify(weight, samples=1000)


def test_other_admissible_exponent():
    r = 3.0
    weight = build_weight(WeightSpec(r=r, B=math.ceil(b_condition_2(r)) + 1.0))
    cert = certify(weight, samples=20_000)
    assert cert.tail_ratio == pytest.approx(0.75)
    assert cert.get("tail_ratio").passed
