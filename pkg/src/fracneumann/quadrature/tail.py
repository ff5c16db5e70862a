"""Integrals over the unbounded complement of the computational domain."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from ..mesh import MeshError
from ..params import ParameterError, _check_dim, _check_order
from .rules import gauss_legendre_01, triangle_rule

TAIL_KINDS = ("zero", "power", "callable")


@dataclass(frozen=True)
class TailSpec:
    """Far-field behaviour of a flux, g(x) = -amplitude |x|^{-d-p} for the power law.

    A ``callable`` tail evaluates ``func`` and needs ``decay_exponent`` p > 0
    declaring g = O(|x|^{-d-p}) so the unbounded integral can be mapped onto a
    bounded interval.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    decay_exponent: float = math.inf
    adaptive_tol: float = 1e-10
    func: Optional[Callable] = None

    def __post_init__(self) -> None:
        if self.kind not in TAIL_KINDS:
            raise ParameterError(f"unknown tail kind {self.kind!r}")
        if self.kind in ("power", "callable") and not (self.decay_exponent > 0.0):
            raise ParameterError("tail decay exponent must be positive for an integrable tail")
        if self.kind == "power" and math.isinf(self.decay_exponent):
            raise ParameterError("power-law tail needs a finite decay exponent")
        if self.kind == "callable" and self.func is None:
            raise ParameterError("callable tail needs a function")
        if not (0.0 < self.adaptive_tol < 1.0):
            raise ParameterError("adaptive tolerance must lie in (0, 1)")

    @classmethod
    def zero(cls) -> TailSpec:
        return cls("zero")

    @classmethod
    def power_law(cls, amplitude: float, p: float) -> TailSpec:
        return cls("power", float(amplitude), float(p))

    def evaluate(self, x, d: int) -> np.ndarray:
        """Values at points ``x`` (shape (n,) in 1D, (n, 2) in 2D)."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "zero":
            return np.zeros(x.shape[0] if d == 2 else x.shape)
        if self.kind == "power":
            r = np.abs(x) if d == 1 else np.linalg.norm(x, axis=-1)
            return -self.amplitude * r ** (-d - self.decay_exponent)
        return np.asarray(self.func(x), dtype=np.float64)


# ------------------------------------------------------------ kernel weight


def kernel_weight_1d(x, s: float, bounds) -> np.ndarray:
    """omega(x) = int_{R \\ [l, r]} |x - y|^{-1-2s} dy for l < x < r."""
    lo, hi = bounds
    x = np.asarray(x, dtype=np.float64)
    if np.any((x <= lo) | (x >= hi)):
        raise MeshError("points must lie strictly inside the computational interval")
    return ((x - lo) ** (-2.0 * s) + (hi - x) ** (-2.0 * s)) / (2.0 * s)


def _cos_power_primitive(phi, s):
    """int_0^phi cos(t)^{2s} dt for |phi| < pi/2."""
    sn = np.sin(phi)
    val = 0.5 * special.beta(0.5, s + 0.5) * special.betainc(0.5, s + 0.5, sn * sn)
    return np.sign(phi) * val


def kernel_weight_polygon(x, s: float, polygon) -> np.ndarray:
    """omega(x) = int over the complement of a convex polygon of |x - y|^{-2-2s} dy.

    In polar coordinates about x the radial integral is rho^{-2s}/(2s); along
    an edge at distance delta, rho = delta / cos(phi) and the angular integral
    of cos(phi)^{2s} is an incomplete beta function.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    poly = np.asarray(polygon, dtype=np.float64)
    total = np.zeros(x.shape[0])
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        t = b - a
        length = np.linalg.norm(t)
        t = t / length
        n = np.array([t[1], -t[0]])  # outward for counter-clockwise polygons
        delta = (a - x) @ n
        if np.any(delta <= 0.0):
            raise MeshError("point outside the polygon or polygon not counter-clockwise")
        ua = (a - x) @ t
        ub = (b - x) @ t
        phi_a = np.arctan2(ua, delta)
        phi_b = np.arctan2(ub, delta)
        total += delta ** (-2.0 * s) * (_cos_power_primitive(phi_b, s) - _cos_power_primitive(phi_a, s))
    return total / (2.0 * s)


def kernel_weight_disk(x, s: float, radius: float, n: int = 64) -> np.ndarray:
    """omega(x) for the complement of the disk of given radius (periodic trapezoid in angle)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    theta = 2.0 * np.pi * np.arange(n) / n
    e = np.column_stack([np.cos(theta), np.sin(theta)])
    xe = x @ e.T
    rho = -xe + np.sqrt(radius**2 - np.sum(x * x, axis=1)[:, None] + xe**2)
    return (2.0 * np.pi / n) * np.sum(rho ** (-2.0 * s), axis=1) / (2.0 * s)


def tail_kernel_moments(elem, s: float, ext_radius=None, *, polygon=None, bounds=None, order: int = 10):
    """Moments int_elem psi_i(x) omega(x) dx for each local hat and for psi = 1.

    ``elem`` is an interval (1D) or a (3, 2) triangle.  The complement is
    {|y| > ext_radius}, or the outside of ``bounds`` (1D) / of ``polygon`` (2D).
    Returns an array of length 3 (1D) or 4 (2D); the last entry is the
    constant moment.
    """
    s = _check_order(s)
    elem = np.asarray(elem, dtype=np.float64)
    if elem.ndim == 1:
        lo, hi = (-ext_radius, ext_radius) if bounds is None else bounds
        a, b = float(elem[0]), float(elem[1])
        if a < lo or b > hi:
            raise MeshError("element intersects the exterior of the computational domain")
        t, w = gauss_legendre_01(order)
        x = a + (b - a) * t
        om = kernel_weight_1d(x, s, (lo, hi)) * w * (b - a)
        return np.array([np.dot(om, 1.0 - t), np.dot(om, t), om.sum()])
    rule = triangle_rule(order)
    pts = rule.points
    e1, e2 = elem[1] - elem[0], elem[2] - elem[0]
    det = abs(e1[0] * e2[1] - e1[1] * e2[0])
    x = elem[0] + pts[:, :1] * e1 + pts[:, 1:] * e2
    if polygon is not None:
        om = kernel_weight_polygon(x, s, polygon)
    else:
        if np.any(np.linalg.norm(elem, axis=1) >= ext_radius):
            raise MeshError("element intersects the exterior of the computational domain")
        om = kernel_weight_disk(x, s, ext_radius, 256)
    om = om * rule.weights * det
    basis = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1], np.ones(len(pts))])
    return om @ basis


# ------------------------------------------------------------ flux tail


def tail_flux_integral(g: TailSpec, ext_radius: float, d: int, *, bounds=None) -> float:
    """int over the complement of the computational domain of the tail flux.

    In 1D the complement is R \\ [-ext_radius, ext_radius] (or of ``bounds``);
    in 2D it is {|x| > ext_radius}.
    """
    d = _check_dim(d)
    if g.kind == "zero":
        return 0.0
    p = g.decay_exponent
    if d == 1:
        lo, hi = (-ext_radius, ext_radius) if bounds is None else bounds
        if not (lo < 0.0 < hi):
            raise ParameterError("computational interval must contain the origin")
        if g.kind == "power":
            return -g.amplitude * ((-lo) ** (-p) + hi ** (-p)) / p

        def piece(start, sign):
            # x = start u^{-1/p}: g dx becomes bounded for g ~ |x|^{-1-p}
            def f(u):
                xv = sign * start * u ** (-1.0 / p)
                jac = start / p * u ** (-1.0 / p - 1.0)
                return float(g.evaluate(np.array([xv]), 1)[0]) * jac

            return integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=g.adaptive_tol, limit=200)[0]

        return piece(hi, 1.0) + piece(-lo, -1.0)
    if not ext_radius > 0.0:
        raise ParameterError("exterior radius must be positive")
    if g.kind == "power":
        return -2.0 * math.pi * g.amplitude * ext_radius ** (-p) / p

    def radial(theta):
        e = np.array([math.cos(theta), math.sin(theta)])

        def f(u):
            r = ext_radius * u ** (-1.0 / p)
            jac = ext_radius / p * u ** (-1.0 / p - 1.0)
            return float(g.evaluate((r * e)[None, :], 2)[0]) * r * jac

        return integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=g.adaptive_tol, limit=200)[0]

    return integrate.quad(radial, 0.0, 2.0 * math.pi, epsabs=0.0, epsrel=g.adaptive_tol, limit=200)[0]


def segment_flux_integral(g: TailSpec, polygon, radius: float, order: int = 24) -> float:
    """int of g over the part of the disk of given radius outside a convex polygon.

    The polygon vertices lie on the circle, so the region is a union of
    circular segments, one per edge.
    """
    poly = np.asarray(polygon, dtype=np.float64)
    t, w = gauss_legendre_01(order)
    total = 0.0
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        ta = math.atan2(a[1], a[0])
        tb = math.atan2(b[1], b[0])
        span = (tb - ta) % (2.0 * math.pi)
        theta = ta + span * t
        mid = ta + 0.5 * span
        # chord at distance c from the origin along the mid direction
        c = radius * math.cos(0.5 * span)
        r0 = c / np.cos(theta - mid)
        e = np.column_stack([np.cos(theta), np.sin(theta)])
        for lo, wl in zip(t, w):
            r = r0 + (radius - r0) * lo
            vals = g.evaluate(r[:, None] * e, 2)
            total += float(np.sum(w * span * wl * (radius - r0) * r * vals))
    return total
