"""Error norms, rate fits, mean and far-field diagnostics, quasi-interpolation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import FluxSpec, SourceSpec, assemble_system
from .mesh import BOUNDARY, Mesh1D, build_mesh_1d
from .params import FractionalParams, ParameterError, _check_order
from .quadrature.rules import far_field_order, gauss_jacobi_01, gauss_legendre_01, triangle_rule
from .quadrature import pairs
from .solve import DiscreteSolution, evaluate, solve_stationary

# geometric subdivision of the Omega elements touching the boundary, where the
# error inherits the (1 - x^2)^s behaviour of typical solutions
_BOUNDARY_LEVELS = 24


# ------------------------------------------------------------------ sampling cells


def _omega_cells_1d(mesh: Mesh1D, levels: int = _BOUNDARY_LEVELS) -> np.ndarray:
    """Omega elements as (lo, hi) rows, with boundary elements split geometrically."""
    cells = mesh.nodes[mesh.cells[mesh.cell_in_omega]]
    a, b = mesh.omega
    out = []
    for lo, hi in cells:
        at_a, at_b = lo == a, hi == b
        if not (at_a or at_b) or levels == 0:
            out.append((lo, hi))
            continue
        if at_a and at_b:
            mid = 0.5 * (lo + hi)
            out.extend(_graded_pieces(mid, lo, levels)[::-1])
            out.extend(_graded_pieces(mid, hi, levels))
        elif at_a:
            out.extend(_graded_pieces(hi, lo, levels)[::-1])
        else:
            out.extend(_graded_pieces(lo, hi, levels))
    out = np.array(out, dtype=np.float64)
    return out[np.argsort(out[:, 0])]


def _graded_pieces(start: float, end: float, levels: int) -> list:
    """Sub-intervals from ``start`` to ``end`` halving in size towards ``end``."""
    breaks = [start] + [end + (start - end) * 0.5**k for k in range(1, levels + 1)] + [end]
    pieces = [(min(p, q), max(p, q)) for p, q in zip(breaks[:-1], breaks[1:])]
    return pieces


def _error_function(u: DiscreteSolution, exact: Callable):
    def err(x):
        return np.asarray(exact(x), dtype=np.float64) - evaluate(u, x)

    return err


# ------------------------------------------------------------------ L2 error


def l2_error_omega(u: DiscreteSolution, exact: Callable, order: int = 8) -> float:
    """||u_h - exact||_{L2(Omega)} by per-element Gauss rules of the given order.

    In 1D the elements touching the boundary of Omega are split geometrically
    towards it so that endpoint singularities of ``exact`` are resolved.
    """
    if order < 8:
        raise ParameterError("the error quadrature needs at least 8 points per direction")
    mesh = u.mesh
    err = _error_function(u, exact)
    if mesh.dim == 1:
        cells = _omega_cells_1d(mesh)
        t, w = gauss_legendre_01(order)
        h = (cells[:, 1] - cells[:, 0])[:, None]
        x = cells[:, :1] + h * t
        vals = err(x.ravel()).reshape(x.shape)
        return math.sqrt(float(np.sum(vals**2 * w * h)))
    rule = triangle_rule(order)
    tri = mesh.points[mesh.triangles[mesh.cell_in_omega]]
    x, wts = pairs.map_triangles(tri, rule.points, rule.weights)
    vals = err(x.reshape(-1, 2)).reshape(wts.shape)
    return math.sqrt(float(np.sum(vals**2 * wts)))


def l2_difference_omega(u: DiscreteSolution, v: DiscreteSolution, order: int = 4) -> float:
    """||u_h - v_h||_{L2(Omega)}, integrating over the Omega elements of ``u``.

    Exact when both solutions share the Omega part of their meshes.
    """
    return l2_error_omega_rule(u, lambda x: evaluate(v, x), order)


def l2_error_omega_rule(u: DiscreteSolution, exact: Callable, order: int) -> float:
    """L2(Omega) error with plain Gauss rules on the unrefined elements."""
    mesh = u.mesh
    if mesh.dim == 1:
        cells = mesh.nodes[mesh.cells[mesh.cell_in_omega]]
        t, w = gauss_legendre_01(order)
        h = (cells[:, 1] - cells[:, 0])[:, None]
        x = cells[:, :1] + h * t
        vals = np.asarray(exact(x.ravel())).reshape(x.shape) - evaluate(u, x.ravel()).reshape(x.shape)
        return math.sqrt(float(np.sum(vals**2 * w * h)))
    rule = triangle_rule(order)
    tri = mesh.points[mesh.triangles[mesh.cell_in_omega]]
    x, wts = pairs.map_triangles(tri, rule.points, rule.weights)
    pts = x.reshape(-1, 2)
    vals = (np.asarray(exact(pts)) - evaluate(u, pts)).reshape(wts.shape)
    return math.sqrt(float(np.sum(vals**2 * wts)))


# ------------------------------------------------------------------ H^s error (1D)


def _seminorm_identical(cells, err, s, n):
    """int_T int_T (e(x) - e(y))^2 |x - y|^{-1-2s} for every cell T.

    With y = x + z, z = h zeta and x = lo + (h - z) t the integrand becomes
    smooth times zeta^{1-2s} (1 - zeta), integrated by Gauss-Jacobi.
    """
    zeta, wz = gauss_jacobi_01(n, 1.0 - 2.0 * s, 1.0)
    t, wt = gauss_legendre_01(n)
    h = cells[:, 1] - cells[:, 0]
    z = h[:, None, None] * zeta[None, :, None]
    x = cells[:, 0, None, None] + (h[:, None, None] - z) * t[None, None, :]
    ex = err(x.ravel()).reshape(x.shape)
    ez = err((x + z).ravel()).reshape(x.shape)
    quot = ((ez - ex) / z) ** 2
    inner = quot @ wt
    return 2.0 * h ** (3.0 - 2.0 * s) * (inner @ wz)


def _seminorm_adjacent(cells, err, s, n):
    """Both orderings of consecutive cells [m - h1, m], [m, m + h2].

    Gauge polar coordinates about the shared point: the squared difference
    quotient is smooth and the radial weight is t^{2-2s}.
    """
    left, right = cells[:-1], cells[1:]
    m = left[:, 1]
    h1 = m - left[:, 0]
    h2 = right[:, 1] - m
    t, wt = gauss_jacobi_01(n, 2.0 - 2.0 * s, 0.0)
    sig, ws = gauss_legendre_01(n)
    total = np.zeros(m.size)
    for a_coef, b_coef in ((1.0, sig), (sig, 1.0)):
        a_coef = np.broadcast_to(a_coef, sig.shape)
        b_coef = np.broadcast_to(b_coef, sig.shape)
        # x = m - t a h1, y = m + t b h2
        tx = t[None, :, None] * a_coef[None, None, :]
        ty = t[None, :, None] * b_coef[None, None, :]
        x = m[:, None, None] - tx * h1[:, None, None]
        y = m[:, None, None] + ty * h2[:, None, None]
        ex = err(x.ravel()).reshape(x.shape)
        ey = err(y.ravel()).reshape(y.shape)
        quot = ((ex - ey) / t[None, :, None]) ** 2
        dist = (a_coef[None, :] * h1[:, None] + b_coef[None, :] * h2[:, None]) ** (-1.0 - 2.0 * s)
        total += np.einsum("ctq,t,q,cq->c", quot, wt, ws, dist)
    return 2.0 * h1 * h2 * total


def _seminorm_far(cells, err, s, digits, nmax=16, batch=64):
    """Sum over ordered pairs of non-touching cells, tensor Gauss per pair."""
    nc = cells.shape[0]
    lo, hi = cells[:, 0], cells[:, 1]
    h = hi - lo
    cache = {}

    def samples(n):
        if n not in cache:
            t, w = gauss_legendre_01(n)
            x = lo[:, None] + h[:, None] * t
            cache[n] = (x, w[None, :] * h[:, None], err(x.ravel()).reshape(x.shape))
        return cache[n]

    total = 0.0
    for start in range(0, nc, batch):
        rows = np.arange(start, min(start + batch, nc))
        ii, jj = np.meshgrid(rows, np.arange(nc), indexing="ij")
        keep = jj > ii + 1
        ii, jj = ii[keep], jj[keep]
        if ii.size == 0:
            continue
        dist = lo[jj] - hi[ii]
        ratio = dist / np.maximum(h[ii], h[jj])
        order = far_field_order(ratio, digits, 2, nmax)
        for n in np.unique(order):
            sel = order == n
            x, w, e = samples(int(n))
            a, b = ii[sel], jj[sel]
            diff = e[a][:, :, None] - e[b][:, None, :]
            kern = np.abs(x[a][:, :, None] - x[b][:, None, :]) ** (-1.0 - 2.0 * s)
            total += float(np.einsum("pij,pi,pj->", diff * diff * kern, w[a], w[b]))
    # each unordered pair counts twice in the double integral
    return 2.0 * total


def hs_seminorm_omega_1d(
    u: DiscreteSolution, exact: Callable, s: Optional[float] = None, *, order: int = 16, digits: float = 10.0
) -> float:
    """Gagliardo seminorm |exact - u_h|_{H^s(Omega)} (no normalisation constant)."""
    mesh = u.mesh
    if mesh.dim != 1:
        raise NotImplementedError("the H^s(Omega) error is only available for 1D meshes")
    s = _check_order(u.params.s if s is None else s)
    err = _error_function(u, exact)
    cells = _omega_cells_1d(mesh)
    total = float(np.sum(_seminorm_identical(cells, err, s, order)))
    total += float(np.sum(_seminorm_adjacent(cells, err, s, order)))
    total += _seminorm_far(cells, err, s, digits)
    return math.sqrt(max(total, 0.0))


def hs_error_omega_1d(u: DiscreteSolution, exact: Callable, s: Optional[float] = None, **kwargs) -> float:
    """Full norm (||e||^2_{L2(Omega)} + |e|^2_{H^s(Omega)})^{1/2} of e = exact - u_h."""
    semi = hs_seminorm_omega_1d(u, exact, s, **kwargs)
    l2 = l2_error_omega(u, exact)
    return math.hypot(l2, semi)


# ------------------------------------------------------------------ means


def omega_hat_integrals(mesh) -> np.ndarray:
    """int_Omega phi_i for every node (row sums of the Omega mass matrix)."""
    om = mesh.cell_in_omega
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.cells[om], (mesh.cell_measures[om] / (mesh.dim + 1))[:, None])
    return out


def omega_mean(u: DiscreteSolution) -> float:
    """(1/|Omega|) int_Omega u_h."""
    mesh = u.mesh
    return float(omega_hat_integrals(mesh) @ u.coefficients[:-1]) / mesh.omega_measure


def predicted_mean(f_integral: float, g_integral: float, alpha: float, omega_measure: float) -> float:
    """Omega-average forced by testing the equation with the constant function."""
    return (f_integral + g_integral) / (alpha * omega_measure)


# ------------------------------------------------------------------ rates


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log scale, log error)."""

    abscissae: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    residual: float
    r_squared: float

    @property
    def exponent(self) -> float:
        """Decay exponent c of error ~ scale^{-c}."""
        return -self.slope


def fit_rate(points: Sequence[tuple[float, float]]) -> RateFit:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ParameterError("a rate fit needs at least two (scale, error) pairs")
    if not np.all(np.isfinite(pts)) or np.any(pts <= 0.0):
        raise ParameterError("scales and errors must be positive")
    if np.unique(pts[:, 0]).size != pts.shape[0]:
        raise ParameterError("scales must be distinct")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + intercept)
    ss_res = float(res @ res)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    a, e = pts[:, 0].copy(), pts[:, 1].copy()
    a.setflags(write=False)
    e.setflags(write=False)
    return RateFit(a, e, float(slope), float(intercept), ss_res, r2)


def write_rate_csv(path, fit: RateFit, config: str = "", columns=("scale", "error")) -> None:
    """CSV with a config comment line, a header, the data and a fitted_slope footer row."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# config: {config}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for x, e in zip(fit.abscissae, fit.errors):
            w.writerow([repr(float(x)), repr(float(e))])
        w.writerow(["fitted_slope", repr(fit.slope)])


# ------------------------------------------------------------------ truncation


@dataclass(frozen=True)
class TruncationProblem:
    """1D problem solved on growing computational intervals."""

    s: float
    f: SourceSpec
    g: FluxSpec
    alpha: float = 1.0
    omega: tuple[float, float] = (-1.0, 1.0)


@dataclass(frozen=True)
class TruncationResult:
    H: np.ndarray
    differences: np.ndarray
    tail_values: np.ndarray
    fit: Optional[RateFit]


def truncation_study(
    problem: TruncationProblem,
    H_list: Sequence[float],
    h: float,
    *,
    fit_from: float = 0.0,
    threads: int = 1,
) -> TruncationResult:
    """Successive differences ||u^{H_n} - u^{H_{n+1}}||_{L2(Omega)} and their decay in H.

    The fit is taken against H_{n+1}, using only the differences with
    H_{n+1} >= ``fit_from`` (the pre-asymptotic range can be excluded).
    Differences that vanish to rounding (for example a constant exact
    solution) leave the fit undefined.
    """
    H = np.asarray(H_list, dtype=np.float64)
    if H.size < 3:
        raise ParameterError("a truncation study needs at least three H values")
    if np.any(np.diff(H) <= 0.0) or H[0] <= 0.0:
        raise ParameterError("H values must be positive and increasing")
    params = FractionalParams(1, problem.s, problem.alpha)
    sols = []
    for Hn in H:
        mesh = build_mesh_1d(problem.omega, float(Hn), h)
        system = assemble_system(mesh, params, problem.f, problem.g, threads=threads)
        sols.append(solve_stationary(system))
    diffs = np.array([l2_difference_omega(a, b) for a, b in zip(sols[:-1], sols[1:])])
    tails = np.array([u.tail_value for u in sols])
    fit = None
    scale = max(l2_error_omega_rule(sols[-1], lambda x: np.zeros(np.shape(x)), 4), 1.0)
    window = H[1:] >= fit_from
    if np.count_nonzero(window) < 2:
        raise ParameterError("fewer than two differences inside the fit window")
    if np.all(diffs[window] > 1e-12 * scale):
        fit = fit_rate(list(zip(H[1:][window], diffs[window])))
    return TruncationResult(H, diffs, tails, fit)


# ------------------------------------------------------------------ far field


@dataclass(frozen=True)
class DecayDiagnostics:
    tail_value: float
    predicted_limit: float
    kappa: float
    mean: float
    divergent: bool


def flux_kappa(g: FluxSpec, s: float, d: int) -> tuple[float, bool]:
    """Limit kappa of g(x)|x|^{d+2s} from the declared tail, and a divergence flag."""
    tail = g.tail
    if tail.kind == "zero":
        return 0.0, False
    p = tail.decay_exponent
    if p > 2.0 * s:
        return 0.0, False
    if p == 2.0 * s:
        return -tail.amplitude, False
    return -math.copysign(math.inf, tail.amplitude) if tail.amplitude else 0.0, tail.amplitude != 0.0


def decay_diagnostics(
    u: DiscreteSolution,
    g: FluxSpec,
    f_integral: Optional[float] = None,
    g_integral: Optional[float] = None,
) -> DecayDiagnostics:
    """Computed value at infinity against kappa/(C_{d,s}|Omega|) + mean.

    The mean is the Omega-average of u_h, or the data-driven value
    (int f + int g)/(alpha |Omega|) when both integrals are given.
    """
    params = u.params
    mesh = u.mesh
    kappa, divergent = flux_kappa(g, params.s, params.d)
    if f_integral is not None and g_integral is not None:
        mean = predicted_mean(f_integral, g_integral, params.alpha, mesh.omega_measure)
    else:
        mean = omega_mean(u)
    if divergent:
        limit = kappa
    else:
        limit = kappa / (params.c_norm * mesh.omega_measure) + mean
    return DecayDiagnostics(u.tail_value, float(limit), float(kappa), float(mean), divergent)


# ------------------------------------------------------------------ quasi-interpolation


@dataclass(frozen=True)
class InterpRegions:
    """Averaging regions: balls about each node, clipped to Omega on its boundary.

    ``radii`` are the ball radii; ``clip`` holds 0 (full ball), 1 (ball
    intersected with Omega) or 2 (ball intersected with the computational
    domain, for nodes on its outer boundary); ``measures`` are |R_i|.
    """

    radii: np.ndarray
    clip: np.ndarray
    measures: np.ndarray = field(repr=False)


_SHRINK = 0.99


def _node_stars(mesh):
    star = [[] for _ in range(mesh.n_nodes)]
    for c, nodes in enumerate(mesh.cells):
        for k in nodes:
            star[k].append(c)
    return star


def interp_regions(mesh) -> InterpRegions:
    N = mesh.n_nodes
    region = mesh.node_region
    clip = np.where(region == BOUNDARY, 1, 0)
    radii = np.empty(N)
    measures = np.empty(N)
    if mesh.dim == 1:
        x = mesh.nodes
        left = np.concatenate([[np.inf], np.diff(x)])
        right = np.concatenate([np.diff(x), [np.inf]])
        clip[0] = clip[-1] = 2
        radii[:] = _SHRINK * np.minimum(left, right)
        measures[:] = np.where(clip == 0, 2.0 * radii, radii)
        return InterpRegions(radii, clip, measures)
    pts = mesh.points
    outer = np.zeros(N, dtype=bool)
    outer[mesh.outer_boundary] = True
    clip[outer] = 2
    in_omega = mesh.cell_in_omega
    for i, cells in enumerate(_node_stars(mesh)):
        dmin = np.inf
        area = 0.0
        for c in cells:
            others = [k for k in mesh.cells[c] if k != i]
            a, b = pts[others[0]], pts[others[1]]
            dmin = min(dmin, _point_segment_distance(pts[i], a, b))
        radii[i] = _SHRINK * dmin
        for c in cells:
            if clip[i] == 1 and not in_omega[c]:
                continue
            area += 0.5 * _vertex_angle(pts, mesh.cells[c], i) * radii[i] ** 2
        measures[i] = area
    return InterpRegions(radii, clip, measures)


def _point_segment_distance(p, a, b) -> float:
    t = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * (b - a))))


def _vertex_angle(pts, tri, i) -> float:
    others = [k for k in tri if k != i]
    u, v = pts[others[0]] - pts[i], pts[others[1]] - pts[i]
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), float(np.dot(u, v)))


def quasi_interpolate(
    v: Callable, mesh, params: Optional[FractionalParams] = None, *, order: int = 8
) -> DiscreteSolution:
    """Nodal coefficients are averages of v over the regions of ``interp_regions``; tail zero."""
    regions = interp_regions(mesh)
    params = FractionalParams(mesh.dim, 0.5) if params is None else params
    N = mesh.n_nodes
    coef = np.zeros(N + 1)
    t, w = gauss_legendre_01(order)
    if mesh.dim == 1:
        x = mesh.nodes
        rho = regions.radii
        # [x - rho, x + rho], or its half inside Omega / inside the computational interval
        lo = x - rho
        hi = x + rho
        a, b = mesh.omega
        first, last = mesh.nodes[0], mesh.nodes[-1]
        bnd = regions.clip == 1
        lo = np.where(bnd & (x == b), x - rho, np.where(bnd & (x == a), x, lo))
        hi = np.where(bnd & (x == a), x + rho, np.where(bnd & (x == b), x, hi))
        lo = np.where(x == first, x, lo)
        hi = np.where(x == last, x, hi)
        # split at the node so that kinks of v at nodes are integrated accurately
        vals = np.zeros(N)
        for p, q in ((lo, x), (x, hi)):
            pts = p[:, None] + (q - p)[:, None] * t
            vals += (np.asarray(v(pts.ravel()), dtype=np.float64).reshape(pts.shape) @ w) * (q - p)
        coef[:N] = vals / regions.measures
        return DiscreteSolution(coef, mesh, params)
    pts = mesh.points
    in_omega = mesh.cell_in_omega
    tr, wr = gauss_jacobi_01(order, 1.0, 0.0)  # radial weight r
    for i, cells in enumerate(_node_stars(mesh)):
        rho = regions.radii[i]
        total = 0.0
        for c in cells:
            if regions.clip[i] == 1 and not in_omega[c]:
                continue
            others = [k for k in mesh.cells[c] if k != i]
            ua, ub = pts[others[0]] - pts[i], pts[others[1]] - pts[i]
            th_a = math.atan2(ua[1], ua[0])
            span = _vertex_angle(pts, mesh.cells[c], i)
            cross = ua[0] * ub[1] - ua[1] * ub[0]
            th = th_a + np.sign(cross) * span * t
            r = rho * tr
            xy = pts[i] + (r[:, None, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)[None])
            fv = np.asarray(v(xy.reshape(-1, 2)), dtype=np.float64).reshape(r.size, th.size)
            total += float(wr @ fv @ w) * rho**2 * span
        coef[i] = total / regions.measures[i]
    return DiscreteSolution(coef, mesh, params)


__all__ = [
    "DecayDiagnostics",
    "InterpRegions",
    "RateFit",
    "TruncationProblem",
    "TruncationResult",
    "decay_diagnostics",
    "fit_rate",
    "flux_kappa",
    "hs_error_omega_1d",
    "hs_seminorm_omega_1d",
    "interp_regions",
    "l2_difference_omega",
    "l2_error_omega",
    "omega_hat_integrals",
    "omega_mean",
    "predicted_mean",
    "quasi_interpolate",
    "truncation_study",
    "write_rate_csv",
]
