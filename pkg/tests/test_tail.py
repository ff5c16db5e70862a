import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracneumann.mesh import MeshError
from fracneumann.params import ParameterError
from fracneumann.quadrature.tail import (
    TailSpec,
    kernel_weight_1d,
    kernel_weight_disk,
    kernel_weight_polygon,
    segment_flux_integral,
    tail_flux_integral,
    tail_kernel_moments,
)
from oracles import ray_distance


def regular_polygon(n, radius=1.0, phase=0.0):
    th = phase + 2 * np.pi * np.arange(n) / n
    return radius * np.column_stack([np.cos(th), np.sin(th)])


def polar_weight_oracle(x, s, polygon):
    corners = sorted(math.atan2(*(v - x)[::-1]) % (2 * math.pi) for v in polygon)
    f = lambda th: ray_distance(x, th, polygon) ** (-2 * s) / (2 * s)
    return integrate.quad(f, 0, 2 * math.pi, points=corners, epsabs=0, epsrel=1e-12, limit=200)[0]


def test_power_law_tail_2d():
    for R in (8.0, 64.0, 216.0):
        assert tail_flux_integral(TailSpec.power_law(1.0, 1.0), R, 2) == pytest.approx(-2 * math.pi / R, rel=1e-14)


def test_power_law_tail_1d():
    for L in (1.5, 2.0, 5.0):
        assert tail_flux_integral(TailSpec.power_law(1.0, 1.0), L, 1) == pytest.approx(-2 / L, rel=1e-14)
    # asymmetric interval: -(1/2 + 1/3)
    assert tail_flux_integral(TailSpec.power_law(1.0, 1.0), None, 1, bounds=(-2.0, 3.0)) == pytest.approx(-5 / 6)


def test_zero_tail():
    assert tail_flux_integral(TailSpec.zero(), 3.0, 1) == 0.0
    assert tail_flux_integral(TailSpec.zero(), 3.0, 2) == 0.0


@pytest.mark.parametrize("d,p", [(1, 0.4), (1, 2.0), (2, 1.0), (2, 0.3)])
def test_callable_tail_matches_closed_form(d, p):
    amp = 1.7
    ref = tail_flux_integral(TailSpec.power_law(amp, p), 2.5, d)
    func = lambda x: -amp * (np.abs(x) if d == 1 else np.linalg.norm(x, axis=-1)) ** (-d - p)
    spec = TailSpec("callable", decay_exponent=p, func=func)
    assert tail_flux_integral(spec, 2.5, d) == pytest.approx(ref, rel=1e-9)


def test_tail_spec_validation():
    with pytest.raises(ParameterError):
        TailSpec.power_law(1.0, 0.0)
    with pytest.raises(ParameterError):
        TailSpec.power_law(1.0, -1.0)
    with pytest.raises(ParameterError):
        TailSpec("bogus")
    with pytest.raises(ParameterError):
        TailSpec("callable", decay_exponent=1.0)


@given(st.floats(-0.99, 0.99), st.floats(0.05, 0.95))
@settings(max_examples=40, deadline=None)
def test_kernel_weight_1d_closed_form(x, s):
    # int_{|y|>1} |x - y|^{-1-2s} dy = [(1 - x)^{-2s} + (1 + x)^{-2s}] / (2s)
    ref = ((1 - x) ** (-2 * s) + (1 + x) ** (-2 * s)) / (2 * s)
    assert kernel_weight_1d(x, s, (-1.0, 1.0)) == pytest.approx(ref, rel=1e-14)
    tail = integrate.quad(lambda y: (y - x) ** (-1 - 2 * s) + (y + x) ** (-1 - 2 * s), 1, np.inf, epsrel=1e-12)[0]
    assert kernel_weight_1d(x, s, (-1.0, 1.0)) == pytest.approx(tail, rel=1e-9)


def test_kernel_weight_1d_rejects_outside_points():
    with pytest.raises(MeshError):
        kernel_weight_1d(np.array([0.0, 1.0]), 0.3, (-1.0, 1.0))


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_kernel_weight_polygon_matches_ray_casting(s):
    poly = regular_polygon(7, 2.0, 0.3)
    for x in ([0.0, 0.0], [0.5, -0.7], [1.6, 0.2]):
        x = np.array(x)
        assert kernel_weight_polygon(x, s, poly)[0] == pytest.approx(polar_weight_oracle(x, s, poly), rel=1e-10)


def test_kernel_weight_polygon_tends_to_disk():
    x = np.array([[0.3, 0.1], [0.0, 0.0]])
    disk = kernel_weight_disk(x, 0.4, 1.0, 256)
    assert disk[1] == pytest.approx(2 * math.pi / 0.8, rel=1e-13)
    poly = kernel_weight_polygon(x, 0.4, regular_polygon(2000))
    assert np.allclose(poly, disk, rtol=1e-5)


def test_kernel_weight_polygon_rejects_clockwise():
    with pytest.raises(MeshError):
        kernel_weight_polygon(np.array([0.0, 0.0]), 0.3, regular_polygon(5)[::-1])


@pytest.mark.parametrize("s", [0.2, 0.75])
def test_tail_kernel_moments_1d(s):
    elem, L = (0.2, 0.5), 1.5
    got = tail_kernel_moments(elem, s, L)
    om = lambda x: ((L - x) ** (-2 * s) + (L + x) ** (-2 * s)) / (2 * s)
    hats = [lambda x: (0.5 - x) / 0.3, lambda x: (x - 0.2) / 0.3, lambda x: 1.0]
    for k, phi in enumerate(hats):
        ref = integrate.quad(lambda x: phi(x) * om(x), *elem, epsrel=1e-13)[0]
        assert got[k] == pytest.approx(ref, rel=1e-10)


def test_tail_kernel_moments_2d_against_adaptive_oracle():
    s, R = 0.5, 3.0
    tri = np.array([[0.2, 0.1], [1.4, 0.3], [0.5, 1.2]])
    got = tail_kernel_moments(tri, s, R)

    def omega(x, y):
        p = np.array([x, y])

        def f(th):
            pe = p @ [math.cos(th), math.sin(th)]
            return (-pe + math.sqrt(R * R - p @ p + pe * pe)) ** (-2 * s)

        return integrate.quad(f, 0, 2 * math.pi, epsrel=1e-11)[0] / (2 * s)

    mat = np.column_stack([tri, np.ones(3)])
    coef = np.linalg.solve(mat, np.eye(3))
    # integrate over the triangle as x in [xmin, xmax] split at the middle vertex
    order = np.argsort(tri[:, 0])
    v0, v1, v2 = tri[order]

    def y_bounds(x):
        def on(a, b):
            return a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])

        ys = [on(v0, v2), on(v0, v1) if x <= v1[0] else on(v1, v2)]
        return min(ys), max(ys)

    for k in range(4):
        phi = (lambda x, y: 1.0) if k == 3 else (lambda x, y, c=coef[:, k]: c[0] * x + c[1] * y + c[2])
        ref = 0.0
        for lo, hi in ((v0[0], v1[0]), (v1[0], v2[0])):
            ref += integrate.dblquad(
                lambda y, x: phi(x, y) * omega(x, y), lo, hi, lambda x: y_bounds(x)[0], lambda x: y_bounds(x)[1],
                epsabs=0, epsrel=1e-9,
            )[0]
        assert got[k] == pytest.approx(ref, rel=1e-6)


def test_tail_kernel_moments_vanish_far_away():
    tri = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]])
    vals = [tail_kernel_moments(tri, 0.3, R)[3] for R in (2.0, 20.0, 200.0, 2000.0)]
    assert all(a > b > 0 for a, b in zip(vals, vals[1:]))
    # omega ~ 2 pi R^{-2s} / (2s) on a fixed element as R grows
    limit = 0.125 * 2 * math.pi / 0.6
    assert vals[-1] * 2000.0**0.6 == pytest.approx(limit, rel=1e-3)
    vals_1d = [tail_kernel_moments((0.0, 0.5), 0.3, L)[2] for L in (1.0, 10.0, 100.0, 1000.0)]
    assert all(a > b > 0 for a, b in zip(vals_1d, vals_1d[1:]))


def test_tail_kernel_moments_reject_exterior_elements():
    with pytest.raises(MeshError):
        tail_kernel_moments((0.5, 2.5), 0.3, 2.0)
    with pytest.raises(MeshError):
        tail_kernel_moments(np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 1.0]]), 0.3, 2.0)


def test_segment_flux_integral_against_polar_oracle():
    R = 2.0
    poly = regular_polygon(6, R, 0.1)
    g = TailSpec.power_law(1.0, 1.0)
    # int of -|x|^{-3} over {polygon boundary < r < R} = -int (1/rho - 1/R) dtheta
    corners = sorted(math.atan2(v[1], v[0]) % (2 * math.pi) for v in poly)
    ref = -integrate.quad(
        lambda th: 1 / ray_distance(np.zeros(2), th, poly) - 1 / R, 0, 2 * math.pi, points=corners, epsrel=1e-12
    )[0]
    assert segment_flux_integral(g, poly, R) == pytest.approx(ref, rel=1e-10)
