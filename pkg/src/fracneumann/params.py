"""Fractional parameters and the special-function constants used everywhere."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy import special


class ParameterError(ValueError):
    """Raised for out-of-range orders, dimensions or coefficients."""


def _check_order(s: float) -> float:
    s = float(s)
    if not (0.0 < s < 1.0) or math.isnan(s):
        raise ParameterError(f"fractional order must lie in (0, 1), got {s!r}")
    return s


def _check_dim(d: int) -> int:
    if d not in (1, 2):
        raise ParameterError(f"dimension must be 1 or 2, got {d!r}")
    return int(d)


def normalization_constant(d: int, s: float) -> float:
    r"""Kernel constant :math:`C_{d,s}` of the integral fractional Laplacian.

    .. math::

        C_{d,s} = \frac{2^{2s} s \Gamma(s + d/2)}{\pi^{d/2} \Gamma(1 - s)}
    """
    d = _check_dim(d)
    s = _check_order(s)
    # log-gamma keeps the ratio accurate when 1 - s is tiny
    logc = (
        2.0 * s * math.log(2.0)
        + math.log(s)
        + math.lgamma(s + 0.5 * d)
        - 0.5 * d * math.log(math.pi)
        - math.lgamma(1.0 - s)
    )
    return math.exp(logc)


def dirichlet_constant(s: float) -> float:
    r"""Constant :math:`c_s` making :math:`c_s (1 - x^2)_+^s` solve the unit-load
    Dirichlet problem on :math:`(-1, 1)`."""
    s = _check_order(s)
    logc = (
        0.5 * math.log(math.pi)
        - 2.0 * s * math.log(2.0)
        - math.lgamma(0.5 + s)
        - math.lgamma(1.0 + s)
    )
    return math.exp(logc)


@dataclass(frozen=True)
class SpecialFunctionTolerances:
    gamma_rel_tol: float = 1e-13
    incomplete_beta_rel_tol: float = 1e-12

    def __post_init__(self) -> None:
        for name in ("gamma_rel_tol", "incomplete_beta_rel_tol"):
            value = getattr(self, name)
            if not (0.0 < value <= 1e-8):
                raise ParameterError(f"{name} must lie in (0, 1e-8], got {value!r}")


def beta(a: float, b: float) -> float:
    """Complete beta function."""
    return float(special.beta(a, b))


def incomplete_beta(x: float, a: float, b: float, regularized: bool = True) -> float:
    """Incomplete beta function :math:`B(x; a, b)`, regularized by default."""
    value = float(special.betainc(a, b, x))
    return value if regularized else value * beta(a, b)


@dataclass(frozen=True)
class FractionalParams:
    """Dimension, order and reaction coefficient of the problem.

    ``c_norm`` is derived from ``d`` and ``s`` and cannot be set directly.
    """

    d: int
    s: float
    alpha: float = 1.0
    c_norm: float = field(init=False)

    def __post_init__(self) -> None:
        _check_dim(self.d)
        _check_order(self.s)
        if not (self.alpha >= 0.0) or math.isinf(self.alpha):
            raise ParameterError(f"reaction coefficient must be finite and >= 0, got {self.alpha!r}")
        object.__setattr__(self, "c_norm", normalization_constant(self.d, self.s))

    @property
    def dirichlet_constant(self) -> float:
        return dirichlet_constant(self.s)

    def with_alpha(self, alpha: float) -> FractionalParams:
        return FractionalParams(self.d, self.s, alpha)
