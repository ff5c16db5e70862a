"""Gauss-type rules on intervals and on the reference triangle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from ..params import ParameterError


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __post_init__(self) -> None:
        for arr in (self.points, self.weights):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self.weights.size)

    def integrate(self, func) -> float:
        return float(np.dot(self.weights, func(self.points)))


def _check_n(n: int) -> int:
    if not (1 <= int(n) <= 64) or int(n) != n:
        raise ParameterError(f"number of Gauss points must be in 1..64, got {n!r}")
    return int(n)


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1]."""
    n = _check_n(n)
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(x, w, 2 * n - 1)


@lru_cache(maxsize=None)
def gauss_jacobi(n: int, alpha: float, beta: float) -> QuadratureRule:
    """Rule on [-1, 1] for the weight (1 - x)^alpha (1 + x)^beta."""
    n = _check_n(n)
    if alpha <= -1.0 or beta <= -1.0:
        raise ParameterError("Jacobi exponents must exceed -1")
    x, w = special.roots_jacobi(n, alpha, beta)
    return QuadratureRule(x, w, 2 * n - 1)


def gauss_jacobi_symmetric(n: int, s: float) -> QuadratureRule:
    """Rule on [-1, 1] for the weight (1 - y^2)^s."""
    if not (0.0 <= s < 1.0):
        raise ParameterError(f"weight exponent must lie in [0, 1), got {s!r}")
    return gauss_jacobi(n, float(s), float(s))


@lru_cache(maxsize=None)
def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    rule = gauss_legendre(n)
    return 0.5 * (rule.points + 1.0), 0.5 * rule.weights


@lru_cache(maxsize=None)
def gauss_jacobi_01(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Rule on [0, 1] for the weight t^a (1 - t)^b."""
    rule = gauss_jacobi(n, b, a)
    scale = 0.5 ** (a + b + 1.0)
    return 0.5 * (rule.points + 1.0), scale * rule.weights


@lru_cache(maxsize=None)
def graded_rule_01(n: int = 12, levels: int = 50, ratio: float = 0.5, ends: str = "both"):
    """Composite Gauss rule on [0, 1], geometrically refined towards the endpoints.

    Every panel has a size comparable to its distance from the refined
    endpoint, which resolves algebraic endpoint singularities and
    near-singularities at any scale down to ``ratio ** levels``.
    """
    if ends not in ("left", "right", "both"):
        raise ParameterError(f"unknown grading target {ends!r}")
    half = 0.5 if ends == "both" else 1.0
    breaks = [0.0] + [half * ratio**k for k in range(levels, -1, -1)]
    t, w = gauss_legendre_01(n)
    pts, wts = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        pts.append(lo + (hi - lo) * t)
        wts.append((hi - lo) * w)
    x = np.concatenate(pts)
    wx = np.concatenate(wts)
    if ends == "right":
        x = 1.0 - x[::-1]
        wx = wx[::-1].copy()
    elif ends == "both":
        x = np.concatenate([x, 1.0 - x[::-1]])
        wx = np.concatenate([wx, wx[::-1]])
    return x, wx


@lru_cache(maxsize=None)
def triangle_rule(n: int) -> QuadratureRule:
    """Collapsed (Stroud) n^2-point rule on the triangle (0,0), (1,0), (0,1).

    Exact for polynomials of total degree 2n - 1; weights sum to 1/2.
    """
    n = _check_n(n)
    u, wu = gauss_jacobi_01(n, 0.0, 1.0)
    v, wv = gauss_legendre_01(n)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([uu.ravel(), ((1.0 - uu) * vv).ravel()])
    wts = np.outer(wu, wv).ravel()
    return QuadratureRule(pts, wts, 2 * n - 1)


@lru_cache(maxsize=None)
def graded_triangle_rule(n: int, levels: int) -> QuadratureRule:
    """Rule on the reference triangle refined geometrically towards the vertex (0, 0).

    In coordinates (x, y) = rho (1 - theta, theta) the radial direction is
    split at 2^-1, ..., 2^-levels with n Gauss points per panel; the angular
    direction uses n Gauss points.  ``levels = 0`` returns :func:`triangle_rule`.
    """
    if levels == 0:
        return triangle_rule(n)
    n = _check_n(n)
    t, w = gauss_legendre_01(n)
    breaks = [0.0] + [0.5**k for k in range(levels, -1, -1)]
    rho = np.concatenate([lo + (hi - lo) * t for lo, hi in zip(breaks[:-1], breaks[1:])])
    wr = np.concatenate([(hi - lo) * w for lo, hi in zip(breaks[:-1], breaks[1:])])
    rr, th = np.meshgrid(rho, t, indexing="ij")
    pts = np.column_stack([(rr * (1.0 - th)).ravel(), (rr * th).ravel()])
    wts = np.outer(wr * rho, w).ravel()
    return QuadratureRule(pts, wts, 2 * n - 1)


@lru_cache(maxsize=None)
def subdivided_triangle_rule(n: int, level: int) -> QuadratureRule:
    """Composite version of :func:`triangle_rule` on ``4 ** level`` congruent sub-triangles."""
    base = triangle_rule(n)
    tris = [np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])]
    for _ in range(level):
        nxt = []
        for v in tris:
            m01, m12, m20 = (v[0] + v[1]) / 2, (v[1] + v[2]) / 2, (v[2] + v[0]) / 2
            nxt += [
                np.array([v[0], m01, m20]),
                np.array([m01, v[1], m12]),
                np.array([m20, m12, v[2]]),
                np.array([m12, m20, m01]),
            ]
        tris = nxt
    pts, wts = [], []
    for v in tris:
        jac = np.column_stack([v[1] - v[0], v[2] - v[0]])
        det = abs(np.linalg.det(jac))
        pts.append(v[0] + base.points @ jac.T)
        wts.append(det * base.weights)
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts), base.exactness_degree)


def far_field_order(ratio, digits: float = 12.0, nmin: int = 2, nmax: int = 16):
    """Gauss points per direction for a kernel singular at relative distance ``ratio``.

    ``ratio`` is the separation divided by the element size.  The estimate uses
    the Bernstein ellipse through the singularity, error ~ rho^(-2n).
    """
    ratio = np.maximum(np.asarray(ratio, dtype=np.float64), 1e-3)
    a = 1.0 + 2.0 * ratio
    rho = a + np.sqrt(a * a - 1.0)
    n = np.ceil(digits * math.log(10.0) / (2.0 * np.log(rho)))
    return np.clip(n, nmin, nmax).astype(np.int64)
