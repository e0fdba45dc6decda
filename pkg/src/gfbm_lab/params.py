"""Process parameters and derived exponents.

The driving noise kernel ((t-u)_+^alpha - (-u)_+^alpha)|u|^{-gamma/2} is only
square integrable, and the downstream asymptotics only meaningful, on a
restricted parameter region.  Every other module takes a ``ProcessParams``
produced by :func:`validate`, so admissibility is checked exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ProcessParams",
    "DerivedExponents",
    "OutOfRangeError",
    "validate",
    "derive",
]


class OutOfRangeError(ValueError):
    """One or more parameters fall outside the admissible region.

    Collects *all* violations instead of stopping at the first, so a bad
    config round-trips into a complete error message.
    """

    def __init__(self, violations: list[tuple[str, str, float]]):
        self.violations = violations
        msg = "; ".join(
            f"{field}={value!r} outside {interval}" for field, interval, value in violations
        )
        super().__init__(msg)


@dataclass(frozen=True)
class ProcessParams:
    """Admissible parameter triple (gamma, alpha, theta).

    gamma in [0, 1) controls the nonstationarity factor |u|^{-gamma/2},
    alpha in (-1/2 + gamma/2, 1/2) the kernel exponent, theta > 0 the order
    of the fractional integral.  Construct through :func:`validate`; the
    instance is immutable and safe to share across workers.
    """

    gamma: float
    alpha: float
    theta: float


@dataclass(frozen=True)
class DerivedExponents:
    """Self-similarity index ``hurst`` and small-ball exponent ``beta``."""

    hurst: float
    beta: float


def validate(gamma: float, alpha: float, theta: float) -> ProcessParams:
    """Check admissibility of (gamma, alpha, theta) and freeze the triple.

    Accepted region: gamma in [0, 1), alpha in (-1/2 + gamma/2, 1/2),
    theta > 0, all finite.  The alpha interval is the one under which the
    scaling and iterated-logarithm results hold; the wider kernel-integrability
    range alpha < 1/2 + gamma/2 is deliberately rejected (fail fast rather
    than silently leave the supported regime).

    Raises :class:`OutOfRangeError` listing every violated constraint.
    """
    violations: list[tuple[str, str, float]] = []
    for name, value in (("gamma", gamma), ("alpha", alpha), ("theta", theta)):
        if not (isinstance(value, (int, float)) and math.isfinite(value)):
            violations.append((name, "finite real", float("nan")))
    if violations:
        raise OutOfRangeError(violations)

    gamma = float(gamma)
    alpha = float(alpha)
    theta = float(theta)
    if not (0.0 <= gamma < 1.0):
        violations.append(("gamma", "[0, 1)", gamma))
    lo = -0.5 + 0.5 * gamma if math.isfinite(gamma) else -0.5
    if not (lo < alpha < 0.5):
        violations.append(("alpha", f"({lo}, 0.5)", alpha))
    if not (theta > 0.0):
        violations.append(("theta", "(0, inf)", theta))
    if violations:
        raise OutOfRangeError(violations)
    return ProcessParams(gamma=gamma, alpha=alpha, theta=theta)


def derive(params: ProcessParams) -> DerivedExponents:
    """Derived exponents: hurst = alpha - gamma/2 + 1/2, beta = alpha + theta + 1/2.

    The admissible region guarantees hurst in (0, 1) and beta > 1/2.
    """
    hurst = params.alpha - 0.5 * params.gamma + 0.5
    beta = params.alpha + params.theta + 0.5
    return DerivedExponents(hurst=hurst, beta=beta)
