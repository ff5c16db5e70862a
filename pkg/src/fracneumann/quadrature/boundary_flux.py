"""Singular flux integrals next to the boundary of the 1D manufactured example.

The flux g(x) = -C_{1,s} c_s int_{-1}^{1} (1 - y^2)^s |x - y|^{-1-2s} dy blows
up like (x - 1)^{-s}.  Its moments against the two hat functions of the
element [1, 1 + h] are reduced to one-dimensional integrals over an auxiliary
variable eta of four parametrized integrals I_1 ... I_4 in xi, all of which
become smooth after xi = z^{1/(1-s)}.
"""

from __future__ import annotations

import numpy as np

from ..params import ParameterError, _check_order, dirichlet_constant, normalization_constant
from .rules import graded_rule_01


def _z_rule():
    # graded at both ends: (1 - eta z^p)^s is singular at z = 1 when eta -> 1
    return graded_rule_01(12, 45, 0.5, "both")


def appendix_integrals(eta, s: float):
    """Return ``(I1, I2, I3, I4)`` at ``eta`` (scalar or array in [0, 1]).

    I1 = int_0^1 xi^{-s} (1 - xi eta)^s (1 - xi) dxi
    I2 = int_0^1 xi^{-s} (1 - xi)^s (1 - eta xi) dxi
    I3 = int_0^1 (1 - xi eta)^s xi^{1-s} dxi
    I4 = eta int_0^1 (1 - xi)^s xi^{1-s} dxi
    """
    s = _check_order(s)
    eta_arr = np.asarray(eta, dtype=np.float64)
    if np.any((eta_arr < 0.0) | (eta_arr > 1.0)):
        raise ParameterError("eta must lie in [0, 1]")
    z, w = _z_rule()
    p = 1.0 / (1.0 - s)
    zp = z**p
    e = eta_arr.reshape(-1, 1)
    one_eta = np.maximum(1.0 - e * zp, 0.0) ** s
    one_z = np.maximum(1.0 - zp, 0.0) ** s
    scale = 1.0 / (1.0 - s)
    i1 = scale * (one_eta * (1.0 - zp)) @ w
    i2 = scale * (one_z * (1.0 - e * zp)) @ w
    i3 = scale * (one_eta * zp) @ w
    i4 = scale * eta_arr.reshape(-1) * np.dot(one_z * zp, w)
    shape = eta_arr.shape
    return tuple(v.reshape(shape) if shape else float(v[0]) for v in (i1, i2, i3, i4))


def boundary_flux_moments_1d(h: float, s: float) -> tuple[float, float]:
    """Moments of the manufactured flux against the hats of [1, 1 + h].

    Returns ``(m_hat, m_far)``: the integral of g against the hat equal to one
    at x = 1 and against the hat equal to one at x = 1 + h.
    """
    s = _check_order(s)
    if not (h > 0.0):
        raise ParameterError(f"element length must be positive, got {h!r}")
    eta, w = graded_rule_01(12, 50, 0.5, "both")
    i1, i2, i3, i4 = appendix_integrals(eta, s)
    near = eta**s / (h + 2.0 * eta) ** (1.0 + 2.0 * s)
    far = 1.0 / (h * eta + 2.0) ** (1.0 + 2.0 * s)
    factor = -normalization_constant(1, s) * dirichlet_constant(s) * 2.0 ** (2.0 * s + 1.0) * h
    m_hat = factor * float(np.dot(w, near * i1 + far * i2))
    m_far = factor * float(np.dot(w, near * i3 + far * i4))
    return m_hat, m_far
