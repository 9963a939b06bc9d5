"""Gaussian noise calibration for (epsilon, delta) differential privacy.

The central object is the decreasing function

    g(u) = Phi(1/(2u) - eps*u) - exp(eps) * Phi(-1/(2u) - eps*u),   u > 0,

whose value at u = sigma/Delta decides whether isotropic Gaussian noise of
scale sigma makes a query of L2 sensitivity Delta (eps, delta)-DP: the
mechanism is private iff g(sigma/Delta) <= delta. The minimal admissible
scale is sigma = u_star * Delta with u_star the smallest root of
g(u) <= delta; it exists and is unique for every eps >= 0 and
delta in (0, 1) because g decreases strictly from 1 to 0.

For large eps*u both terms of g are tiny and nearly equal, so g is always
evaluated in log space (log of the Gaussian CDF via the scaled complementary
error function) and combined with expm1; this keeps full relative accuracy
up to eps = 40 and beyond.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

_SQRT2 = math.sqrt(2.0)

# bisection safety limits; unreachable in practice because g is monotone
_MAX_BRACKET_STEPS = 2000
_MAX_BISECT_STEPS = 500


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy level (epsilon >= 0, delta in (0, 1)) plus solver tolerance."""

    epsilon: float
    delta: float
    tol: float = 1e-12

    def __post_init__(self) -> None:
        if not (self.epsilon >= 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class CalibrationResult:
    """Minimal noise multiplier and the per-component scales it induces."""

    u_star: float
    sigma_per_component: np.ndarray  # sigma_i = u_star * Delta_i
    params: PrivacyParams


def phi(t: float) -> float:
    """Standard Gaussian CDF via the complementary error function."""
    return 0.5 * math.erfc(-t / _SQRT2)


def g(u: float, epsilon: float) -> float:
    """The DP condition function; strictly decreasing in u with
    g(0+) = 1 and g(inf) = 0.

    Evaluated as exp(a) * (1 - exp(b - a)) with a, b the log terms, which
    survives the catastrophic cancellation of the direct difference when the
    two terms converge in the tail.
    """
    if not u > 0.0:
        raise ValueError(f"u must be > 0, got {u}")
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    half = 1.0 / (2.0 * u)
    a = float(log_ndtr(half - epsilon * u))
    b = epsilon + float(log_ndtr(-half - epsilon * u))
    if b >= a:
        return 0.0
    return math.exp(a) * -math.expm1(b - a)


def g_prime(u: float, epsilon: float) -> float:
    """Closed-form derivative of g; negative for all u > 0."""
    if not u > 0.0:
        raise ValueError(f"u must be > 0, got {u}")
    t = 1.0 / (2.0 * u) - epsilon * u
    return -math.exp(-0.5 * t * t) / (u * u * math.sqrt(2.0 * math.pi))


def solve_u_star(params: PrivacyParams) -> float:
    """Smallest u > 0 with g(u) <= delta, by bracketed bisection.

    The bracket is grown geometrically from u = 1 and then bisected to a
    relative width of `tol`; monotonicity of g makes this unconditionally
    convergent. The returned value always satisfies g(u) <= delta.
    """
    eps, delta, tol = params.epsilon, params.delta, params.tol
    lo = hi = 1.0
    steps = 0
    if g(1.0, eps) <= delta:
        while g(lo, eps) <= delta:
            hi = lo
            lo *= 0.5
            steps += 1
            if steps > _MAX_BRACKET_STEPS:
                raise ArithmeticError("failed to bracket u_star from below")
    else:
        while g(hi, eps) > delta:
            lo = hi
            hi *= 2.0
            steps += 1
            if steps > _MAX_BRACKET_STEPS:
                raise ArithmeticError("failed to bracket u_star from above")
    # invariant: g(lo) > delta >= g(hi)
    steps = 0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if g(mid, eps) <= delta:
            hi = mid
        else:
            lo = mid
        steps += 1
        if steps > _MAX_BISECT_STEPS:
            raise ArithmeticError("bisection for u_star did not converge")
    return hi


def classic_gaussian_sigma(epsilon: float, delta: float, Delta: float) -> float:
    """Closed-form scale Delta * sqrt(2*log(1.25/delta)) / epsilon.

    The closed form guarantees (epsilon, delta)-DP only for
    epsilon in (0, 1); values outside that interval are rejected here (use
    the analytic route, which covers all epsilon >= 0, or the explicit
    unchecked formula in the mechanisms module for protocol sweeps).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(
            "closed-form Gaussian calibration is only valid for "
            f"0 < epsilon < 1, got {epsilon}"
        )
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if Delta < 0.0:
        raise ValueError(f"sensitivity must be >= 0, got {Delta}")
    return Delta * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def check_dp_condition(Delta: float, sigma: float, params: PrivacyParams) -> bool:
    """True iff Gaussian noise of scale sigma makes sensitivity Delta
    (epsilon, delta)-DP, i.e. g(sigma/Delta) <= delta."""
    if not Delta > 0.0:
        raise ValueError(f"Delta must be > 0, got {Delta}")
    if not sigma > 0.0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return g(sigma / Delta, params.epsilon) <= params.delta


def calibrate_components(
    local_sensitivities: np.ndarray, params: PrivacyParams
) -> CalibrationResult:
    """Per-component noise scales sigma_i = u_star * Delta_i."""
    u_star = solve_u_star(params)
    deltas = np.asarray(local_sensitivities, dtype=np.float64)
    if np.any(deltas < 0.0):
        raise ValueError("local sensitivities must be >= 0")
    return CalibrationResult(
        u_star=u_star, sigma_per_component=u_star * deltas, params=params
    )
