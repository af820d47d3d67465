"""Piecewise weight w(y) and the dense-sampling certificate of its conditions.

The unshifted weight w_eps glues three pieces in the variable x:

    h(x) = f(eps) + f'(eps)(x - eps)      on [-y_eps, eps]
    f(x) = a x - c x^2                    on [eps, Q]
    g(x) = B / (x + B - 1)^r              on [Q, inf)

with a = (2B + r)/B^r and c = (B + r)/B^r. The weight used downstream is
w(y) = w_eps(y - y_eps), so w(0) = h(-y_eps) = 0 and every junction moves
right by y_eps.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .models import Certificate, ConditionRecord, WeightSpec

logger = logging.getLogger(__name__)

C_F_HEADROOM = 1.001
MIN_SAMPLES = 10_000
CERT_TOLERANCE = 1e-12
TAIL_SPAN = 1e6  # tail conditions are sampled on [Q, Q + TAIL_SPAN * B]


def b_condition_1(r: float) -> float:
    """Lower bound on B that makes the cutoff ratio condition close."""
    return 1.0 / ((4.0 * r + 2.0) * (1.0 - (4.0 * r / (4.0 * r + 1.0)) ** (1.0 / r)))


def b_condition_2(r: float) -> float:
    """Lower bound on B that makes the cutoff derivative condition close."""
    return 2.0 * r * (4.0 * r + 2.0) * ((4.0 * r + 1.0) / (4.0 * r)) ** ((r + 1.0) / r)


def psi(z):
    """Smoothstep cutoff 3z^2 - 2z^3 clamped to [0, 1]."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    return 3.0 * z * z - 2.0 * z ** 3


def psi_prime(z):
    z = np.asarray(z, dtype=float)
    inside = (z > 0) & (z < 1)
    return np.where(inside, 6.0 * z * (1.0 - z), 0.0)


def eta(y, spec: WeightSpec):
    """Cutoff: 0 on [0, M], 1 on [Q, inf), monotone in between."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("eta needs y >= 0")
    values = psi((y - spec.M) / (spec.Q - spec.M))
    return float(values) if values.ndim == 0 else values


def eta_prime(y, spec: WeightSpec):
    y = np.asarray(y, dtype=float)
    values = psi_prime((y - spec.M) / (spec.Q - spec.M)) / (spec.Q - spec.M)
    return float(values) if values.ndim == 0 else values


def _scalar(values: np.ndarray):
    return float(values) if values.ndim == 0 else values


@dataclass(frozen=True, eq=False)
class Weight:
    """Built weight with its structural constants.

    c_f bounds |w''|/w on the concave piece, bar_c_f bounds y w'/w there,
    c_1 is the L1 norm of w and beta the structural ratio bound.
    """
    spec: WeightSpec
    y_eps: float
    c_f: float
    bar_c_f: float
    c_1: float
    beta: float
    beta_measured: float

    # -- coefficients and the unshifted pieces ---------------------------------

    @property
    def lin(self) -> float:
        s = self.spec
        return (2.0 * s.B + s.r) / s.B ** s.r

    @property
    def quad(self) -> float:
        s = self.spec
        return (s.B + s.r) / s.B ** s.r

    def f(self, x):
        return self.lin * x - self.quad * x * x

    def f1(self, x):
        return self.lin - 2.0 * self.quad * x

    def f2(self, x):
        return np.full_like(np.asarray(x, dtype=float), -2.0 * self.quad)

    def g(self, x):
        s = self.spec
        return s.B / (x + s.B - 1.0) ** s.r

    def g1(self, x):
        s = self.spec
        return -s.r * s.B / (x + s.B - 1.0) ** (s.r + 1.0)

    def g2(self, x):
        s = self.spec
        return s.r * (s.r + 1.0) * s.B / (x + s.B - 1.0) ** (s.r + 2.0)

    def h(self, x):
        eps = self.spec.epsilon
        return self.f(eps) + self.f1(eps) * (x - eps)

    def w_eps(self, x):
        x = np.asarray(x, dtype=float)
        eps, q = self.spec.epsilon, self.spec.Q
        return _scalar(np.where(x <= eps, self.h(x), np.where(x <= q, self.f(x), self.g(np.maximum(x, q)))))

    def w_eps1(self, x):
        x = np.asarray(x, dtype=float)
        eps, q = self.spec.epsilon, self.spec.Q
        return _scalar(np.where(x <= eps, self.f1(eps), np.where(x <= q, self.f1(x), self.g1(np.maximum(x, q)))))

    def w_eps2(self, x):
        x = np.asarray(x, dtype=float)
        eps, q = self.spec.epsilon, self.spec.Q
        return _scalar(np.where(x <= eps, 0.0, np.where(x <= q, -2.0 * self.quad, self.g2(np.maximum(x, q)))))

    # -- shifted weight --------------------------------------------------------

    @property
    def junctions(self) -> tuple[float, float, float]:
        """(eps, M, Q) moved into the shifted frame."""
        s = self.spec
        return s.epsilon + self.y_eps, s.M + self.y_eps, s.Q + self.y_eps

    def _shift(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("weight is defined for y >= 0 only")
        return y - self.y_eps

    def eval_w(self, y):
        return self.w_eps(self._shift(y))

    def eval_w1(self, y):
        return self.w_eps1(self._shift(y))

    def eval_w2(self, y):
        return self.w_eps2(self._shift(y))

    def tail_mass(self, y: float) -> float:
        """Integral of w over [y, inf) in closed form."""
        s = self.spec
        x = y - self.y_eps
        tail_from = lambda u: s.B / ((s.r - 1.0) * (u + s.B - 1.0) ** (s.r - 1.0))
        if x >= s.Q:
            return tail_from(x)
        total = tail_from(s.Q)
        eps = s.epsilon
        big_f = lambda u: 0.5 * self.lin * u * u - self.quad * u ** 3 / 3.0
        if x >= eps:
            return total + big_f(s.Q) - big_f(x)
        total += big_f(s.Q) - big_f(eps)
        lo = max(x, -self.y_eps)
        # linear piece: trapezoid is exact
        return total + 0.5 * (self.h(lo) + self.h(eps)) * (eps - lo)

    def l1_closed_form(self) -> float:
        return self.tail_mass(0.0)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "y_eps": self.y_eps,
            "c_f": self.c_f,
            "bar_c_f": self.bar_c_f,
            "c_1": self.c_1,
            "beta": self.beta,
            "beta_measured": self.beta_measured,
        }


def _validate(spec: WeightSpec) -> None:
    if not (math.isfinite(spec.r) and spec.r > 1):
        raise ValueError(f"r must be > 1 for an integrable tail, got {spec.r}")
    if not (math.isfinite(spec.B) and spec.B > 1):
        raise ValueError(f"B must be > 1, got {spec.B}")
    if spec.Q != 1.0:
        raise ValueError(f"the quadratic and tail pieces glue at Q = 1 only, got Q={spec.Q}")
    if not 0.5 < spec.M < 1.0:
        raise ValueError(f"M must lie in (1/2, 1), got {spec.M}")
    if not 0.0 < spec.beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {spec.beta}")
    if not (0.0 < spec.epsilon < 0.5 and spec.epsilon <= spec.M / 4.0):
        raise ValueError(f"epsilon must lie in (0, 1/2) with epsilon <= M/4, got {spec.epsilon}")
    b1, b2 = b_condition_1(spec.r), b_condition_2(spec.r)
    if spec.B < b1:
        raise ValueError(f"B={spec.B} violates the first lower bound B >= {b1:.6g}")
    if spec.B < b2:
        raise ValueError(f"B={spec.B} violates the second lower bound B >= {b2:.6g}")


def _tail_points(spec: WeightSpec, n: int) -> np.ndarray:
    return spec.Q - 1.0 + np.geomspace(1.0, 1.0 + TAIL_SPAN * spec.B, n)


def _beta_ratios(weight: Weight, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tail ratio g'^2/(g g'') on [Q, inf) and the cutoff ratio on (M, Q)."""
    s = weight.spec
    xt = _tail_points(s, n)
    tail = weight.g1(xt) ** 2 / (weight.g(xt) * weight.g2(xt))
    xm = np.linspace(s.M, s.Q, n + 2)[1:-1]
    cutoff = eta(xm, s) * weight.g1(xm) ** 2 / (weight.f(xm) * weight.g2(xm))
    return tail, cutoff


def build_weight(spec: WeightSpec | None = None, samples: int = 100_000) -> Weight:
    spec = spec or WeightSpec()
    _validate(spec)
    r, B, Q, eps = spec.r, spec.B, spec.Q, spec.epsilon

    lin = (2.0 * B + r) / B ** r
    quad = (B + r) / B ** r
    f_eps = lin * eps - quad * eps * eps
    f1_eps = lin - 2.0 * quad * eps
    if f1_eps <= 0:
        raise ValueError(f"epsilon={eps} lies past the peak of the quadratic piece")
    y_eps = f_eps / f1_eps - eps

    x = np.linspace(eps, Q, samples)
    c_f = max(1.0, float(np.max(2.0 * quad / (lin * x - quad * x * x))) * C_F_HEADROOM)

    provisional = Weight(spec, y_eps, c_f, 1.0, math.nan, spec.beta, math.nan)
    tail, cutoff = _beta_ratios(provisional, samples)
    beta_measured = float(max(np.max(tail), np.max(cutoff)))
    if beta_measured >= 1.0:
        raise ValueError(f"measured structural ratio {beta_measured:.6g} is not below 1")

    # trapezoid on the bounded pieces, closed form for the tail
    xl = np.linspace(-y_eps, eps, 3)
    xq = np.linspace(eps, Q, samples)
    c_1 = (
        float(trapezoid(provisional.h(xl), xl))
        + float(trapezoid(provisional.f(xq), xq))
        + B / ((r - 1.0) * (Q + B - 1.0) ** (r - 1.0))
    )

    weight = Weight(
        spec=spec,
        y_eps=y_eps,
        c_f=c_f,
        bar_c_f=1.0,
        c_1=c_1,
        beta=max(spec.beta, beta_measured),
        beta_measured=beta_measured,
    )
    logger.info(
        "built weight r=%g B=%g eps=%g: y_eps=%.4e c_f=%.4f c_1=%.6f beta=%.4f (measured %.4f)",
        r, B, eps, y_eps, c_f, c_1, weight.beta, beta_measured,
    )
    return weight


def _min_record(name: str, margins: np.ndarray, where: np.ndarray, scale: float) -> ConditionRecord:
    i = int(np.argmin(margins))
    margin = float(margins[i])
    return ConditionRecord(name, margin, float(where[i]), margin >= -CERT_TOLERANCE * scale)


def _equality_record(name: str, deviation: float, where: float, scale: float) -> ConditionRecord:
    margin = CERT_TOLERANCE * scale - abs(deviation)
    return ConditionRecord(name, margin, where, margin >= 0)


def certify(weight: Weight, samples: int = 100_000) -> Certificate:
    """Sample every structural condition densely and record signed margins."""
    if samples < MIN_SAMPLES:
        raise ValueError(f"certify needs at least {MIN_SAMPLES} samples, got {samples}")
    s = weight.spec
    eps, M, Q, r = s.epsilon, s.M, s.Q, s.r
    w = weight

    x_closed = np.linspace(0.0, Q, samples)
    x_open = x_closed[1:]
    x_quad = np.linspace(eps, Q, samples)
    x_mq = np.linspace(M, Q, samples + 2)[1:-1]
    x_tail = _tail_points(s, samples)
    x_g = np.concatenate([np.linspace(M, Q, samples // 10), x_tail])

    f_scale = float(np.max(w.f(x_closed)))
    g_scale = float(w.g(M))
    records: list[ConditionRecord] = []

    # quadratic piece and its linear extension on [0, Q]
    records.append(_equality_record("f_origin", float(w.f(0.0)), 0.0, f_scale))
    records.append(_min_record("f_nonnegative", w.f(x_open), x_open, f_scale))
    records.append(_min_record("f_concave", -w.f2(x_quad), x_quad, f_scale))
    records.append(_min_record(
        "f_second_derivative_lower",
        np.asarray(w.w_eps2(x_closed)) + w.c_f * np.asarray(w.w_eps(x_closed)),
        x_closed,
        f_scale,
    ))
    records.append(_min_record(
        "f_first_derivative_upper",
        w.bar_c_f * np.asarray(w.w_eps(x_closed)) - x_closed * np.asarray(w.w_eps1(x_closed)),
        x_closed,
        f_scale,
    ))

    # power-law tail on [M, inf)
    far = x_tail[-1]
    decay = max(float(w.g(far)), abs(float(w.g1(far))))
    records.append(ConditionRecord("g_decay", 1e-6 * float(w.g(Q)) - decay, float(far), decay < 1e-6 * float(w.g(Q))))
    records.append(_min_record("g_positive", w.g(x_g), x_g, g_scale))
    records.append(_min_record("g_decreasing", -w.g1(x_g), x_g, g_scale))
    records.append(_min_record("g_convex", w.g2(x_g), x_g, g_scale))

    ratio = w.g1(x_tail) ** 2 / (w.g(x_tail) * w.g2(x_tail))
    records.append(_min_record("tail_ratio", w.beta - ratio, x_tail, 1.0))
    tail_ratio = r / (r + 1.0)
    tail_dev = float(np.max(np.abs(ratio - tail_ratio)))

    eta_mq = eta(x_mq, s)
    cutoff_ratio = eta_mq * w.g1(x_mq) ** 2 / (w.f(x_mq) * w.g2(x_mq))
    records.append(_min_record("cutoff_ratio", w.beta - cutoff_ratio, x_mq, 1.0))
    records.append(_min_record(
        "cutoff_derivative",
        eta_mq * w.g2(x_mq) - w.f2(x_mq) - 2.0 * eta_prime(x_mq, s) * np.abs(w.g1(x_mq)),
        x_mq,
        f_scale,
    ))

    # the shifted weight itself
    y_eps = w.y_eps
    eps_s, _, q_s = w.junctions
    slope_scale = float(w.f1(0.0))
    records.append(_equality_record("w_origin", float(w.eval_w(0.0)), 0.0, f_scale))
    y_all = np.concatenate([np.linspace(0.0, q_s, samples)[1:], x_tail[1:] + y_eps])
    records.append(_min_record("w_nonnegative", w.eval_w(y_all), y_all, f_scale))
    records.append(_equality_record("glue_value_eps", float(w.h(eps) - w.f(eps)), eps_s, f_scale))
    chord = (w.h(eps) - w.h(-y_eps)) / (eps + y_eps)
    records.append(_equality_record("glue_slope_eps", float(chord - w.f1(eps)), eps_s, slope_scale))
    records.append(_equality_record("glue_value_q", float(w.f(Q) - w.g(Q)), q_s, f_scale))
    records.append(_equality_record("glue_slope_q", float(w.f1(Q) - w.g1(Q)), q_s, slope_scale))
    records.append(ConditionRecord("measured_beta", 1.0 - w.beta_measured, None, w.beta_measured < 1.0))
    b1, b2 = b_condition_1(r), b_condition_2(r)
    records.append(ConditionRecord("parameter_B_lower_1", s.B - b1, None, s.B >= b1))
    records.append(ConditionRecord("parameter_B_lower_2", s.B - b2, None, s.B >= b2))

    cert = Certificate(
        conditions=records,
        samples=samples,
        tail_ratio=tail_ratio,
        tail_ratio_deviation=tail_dev,
        constants={
            "c_f": w.c_f,
            "bar_c_f": w.bar_c_f,
            "c_1": w.c_1,
            "c_1_closed_form": w.l1_closed_form(),
            "beta": w.beta,
            "beta_measured": w.beta_measured,
            "y_eps": y_eps,
            "b_condition_1": b1,
            "b_condition_2": b2,
        },
    )
    failed = [c.condition for c in records if not c.passed]
    if failed:
        logger.warning("weight certificate failed: %s", ", ".join(failed))
    else:
        logger.info("weight certificate passed (%d conditions, %d samples)", len(records), samples)
    return cert
