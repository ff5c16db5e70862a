"""Element-pair integrals of the hypersingular kernel |x - y|^{-d-2s}.

For a pair of elements (T, T') and P1 basis functions the basic quantity is

    B_ij = int_T int_T' (phi_i(x) - phi_i(y)) (phi_j(x) - phi_j(y)) |x - y|^{-d-2s} dy dx.

Touching pairs use the difference form directly after a homogeneous polar
reduction in the relative variables: the integrand is homogeneous of degree
-2s in those variables, so the radial integral is done in closed form and
only a bounded integrand over the faces of a polytope remains.

Separated pairs are split as B = S_T + S_T' - X - X^T with

    S_T[a, b] = int_T psi_a psi_b (x) int_T' k dy dx,   X[a, b] = int_T int_T' psi_a(x) psi_b(y) k,

evaluated with one tensor rule, so that row sums of the assembled matrix
cancel to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..mesh import MeshError
from ..params import ParameterError, _check_order
from .rules import far_field_order, gauss_legendre_01, graded_triangle_rule, subdivided_triangle_rule, triangle_rule

SINGULAR_ORDER = 16


@dataclass(frozen=True)
class PairBlock:
    """Interaction block over the union of the vertices of two elements."""

    nodes: np.ndarray
    values: np.ndarray

    def entry(self, i, j) -> float:
        if i == "const" or j == "const":
            return 0.0
        return float(self.values[i, j])


# ---------------------------------------------------------------- 1D kernels


def identical_block_1d(h, s: float) -> np.ndarray:
    """Blocks on T x T for elements of length ``h``; local order (left, right)."""
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    c = 2.0 * h ** (1.0 - 2.0 * s) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s))
    pattern = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return c[:, None, None] * pattern


def _log_face_rule(a, b, n: int):
    """Nodes t in [0, 1] and weights for int_0^1 F(t) (a + b t)^{-1-2s} dt.

    With a + b t = a q^tau, q = (a + b)/a, the near-singularity at t = -a/b
    is mapped away and the integrand becomes analytic in tau for any ratio b/a.
    """
    tau, w = gauss_legendre_01(n)
    lq = np.log1p(b / a)
    grow = np.expm1(lq * tau)
    t = (a / b) * grow
    jac = (a / b) * lq * (grow + 1.0) * w
    return t, jac


def adjacent_block_1d(h1, h2, s: float, n: int = SINGULAR_ORDER) -> np.ndarray:
    """Blocks for [m - h1, m] x [m, m + h2]; local order (m - h1, m, m + h2).

    Gauge polar coordinates about m reduce the integral to the two faces
    xi = 1 and eta = 1 of the unit square, with radial integral in closed form.
    """
    h1 = np.asarray(h1, dtype=np.float64).reshape(-1, 1)
    h2 = np.asarray(h2, dtype=np.float64).reshape(-1, 1)
    out = np.zeros((h1.shape[0], 9))
    for first in (True, False):
        # face xi = 1: distance h1 + eta h2; face eta = 1: distance h2 + xi h1
        a, b = (h1, h2) if first else (h2, h1)
        t, w = _log_face_rule(a, b, n)
        xi, eta = (np.ones_like(t), t) if first else (t, np.ones_like(t))
        k = (a + b * t) ** (-1.0 - 2.0 * s) * w
        diff = np.stack([xi, eta - xi, -eta], axis=2)
        out += np.einsum("pq,pqi,pqj->pij", k, diff, diff).reshape(-1, 9)
    return (out * (h1 * h2 / (3.0 - 2.0 * s))).reshape(-1, 3, 3)


def far_terms(xa, wa, basis_a, xb, wb, basis_b, s: float, d: int):
    """Self and cross terms for batches of separated pairs.

    ``xa`` has shape (npairs, P, d) (or (npairs, P) in 1D), ``wa`` (npairs, P)
    and ``basis_a`` (P, na).  Returns ``(self_a, self_b, cross)`` with shapes
    (npairs, na, na), (npairs, nb, nb) and (npairs, na, nb).
    """
    if d == 1:
        r2 = (xa[:, :, None] - xb[:, None, :]) ** 2
    else:
        r2 = np.zeros((xa.shape[0], xa.shape[1], xb.shape[1]))
        for c in range(d):
            r2 += (xa[:, :, None, c] - xb[:, None, :, c]) ** 2
    k = r2 ** (-0.5 * d - s)
    kwb = k * wb[:, None, :]
    inner_a = kwb.sum(axis=2) * wa
    kw = kwb * wa[:, :, None]
    inner_b = kw.sum(axis=1)
    na, nb = basis_a.shape[1], basis_b.shape[1]
    bba = (basis_a[:, :, None] * basis_a[:, None, :]).reshape(-1, na * na)
    bbb = (basis_b[:, :, None] * basis_b[:, None, :]).reshape(-1, nb * nb)
    self_a = (inner_a @ bba).reshape(-1, na, na)
    self_b = (inner_b @ bbb).reshape(-1, nb, nb)
    cross = np.matmul(np.matmul(basis_a.T, kw), basis_b)
    return self_a, self_b, cross


def far_pairs_1d(a0, ha, b0, hb, s: float, n: int):
    """Far terms for interval pairs [a0, a0 + ha] x [b0, b0 + hb] with n-point Gauss."""
    t, w = gauss_legendre_01(int(n))
    basis = np.column_stack([1.0 - t, t])
    a0, ha, b0, hb = (np.asarray(v, dtype=np.float64).reshape(-1, 1) for v in (a0, ha, b0, hb))
    return far_terms(a0 + ha * t, ha * w, basis, b0 + hb * t, hb * w, basis, s, 1)


def _far_block(self_a, self_b, cross, na):
    m = na + cross.shape[-1]
    out = np.zeros((self_a.shape[0], m, m))
    out[:, :na, :na] += self_a
    out[:, na:, na:] += self_b
    out[:, :na, na:] -= cross
    out[:, na:, :na] -= np.swapaxes(cross, 1, 2)
    return out


def _interval(elem):
    lo, hi = (float(v) for v in elem)
    if not hi > lo:
        raise MeshError(f"degenerate interval {elem!r}")
    return lo, hi


def pair_integral_1d(elem_a, elem_b, s: float, selector=None, *, tol: float = 1e-11):
    """Interaction block of two intervals (without the kernel constant).

    Returns a :class:`PairBlock` over the union of the endpoints, or a single
    entry when ``selector = (i, j)`` is given; indices refer to the union node
    list and ``"const"`` selects the constant function.
    """
    s = _check_order(s)
    a, b = _interval(elem_a), _interval(elem_b)
    if a == b:
        block = PairBlock(np.array(a), identical_block_1d(a[1] - a[0], s)[0])
    elif a[1] == b[0] or b[1] == a[0]:
        left, right = (a, b) if a[1] == b[0] else (b, a)
        vals = adjacent_block_1d(left[1] - left[0], right[1] - right[0], s)[0]
        nodes = np.array([left[0], left[1], right[1]])
        block = PairBlock(nodes, vals)
        if left is b:
            perm = [1, 2, 0]
            block = PairBlock(nodes[perm], vals[np.ix_(perm, perm)])
    elif a[1] <= b[0] or b[1] <= a[0]:
        gap = max(b[0] - a[1], a[0] - b[1])
        n = int(far_field_order(gap / max(a[1] - a[0], b[1] - b[0]), 12.0, 2, 16))
        vals = _adaptive_far_1d(a, b, s, n, tol)
        block = PairBlock(np.array([a[0], a[1], b[0], b[1]]), vals)
    else:
        raise MeshError("overlapping intervals that are not identical")
    if selector is None:
        return block
    return block.entry(*selector)


def _graded_interval_rule(lo, hi, near, gap, n):
    """Gauss panels on [lo, hi] growing geometrically from the end ``near`` at the scale ``gap``."""
    length = hi - lo
    cuts = [0.0]
    while cuts[-1] < length:
        cuts.append(min(length, max(gap, 2.0 * cuts[-1])))
    t, w = gauss_legendre_01(n)
    cuts = np.array(cuts)
    dist = (cuts[:-1, None] + np.diff(cuts)[:, None] * t).ravel()
    wts = (np.diff(cuts)[:, None] * w).ravel()
    x = lo + dist if near == lo else hi - dist
    u = (x - lo) / length
    return x, wts, np.column_stack([1.0 - u, u])


def _adaptive_far_1d(a, b, s, n, tol):
    gap = max(b[0] - a[1], a[0] - b[1])
    if gap < max(a[1] - a[0], b[1] - b[0]):
        # nearly touching: grade both intervals towards the facing endpoints
        near_a, near_b = (a[1], b[0]) if a[1] <= b[0] else (a[0], b[1])

        def block(order):
            xa, wa, ba = _graded_interval_rule(*a, near_a, gap, order)
            xb, wb, bb = _graded_interval_rule(*b, near_b, gap, order)
            terms = far_terms(xa[None], wa[None], ba, xb[None], wb[None], bb, s, 1)
            return _far_block(*terms, 2)[0]

        n = max(n, 8)
    else:

        def block(order):
            terms = far_pairs_1d(a[0], a[1] - a[0], b[0], b[1] - b[0], s, order)
            return _far_block(*terms, 2)[0]

    cur = block(n)
    while n + 4 <= 64:
        nxt = block(n + 4)
        if np.max(np.abs(nxt - cur)) <= tol * np.max(np.abs(nxt)):
            return nxt
        cur, n = nxt, n + 4
    return cur


# ---------------------------------------------------------------- 2D kernels

_HEXAGON = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, -1.0]])
_REF_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def _outer(diff):
    m = diff.shape[1]
    return (diff[:, :, None] * diff[:, None, :]).reshape(-1, m * m)


@lru_cache(maxsize=None)
def _identical_faces_2d(n: int):
    t, w = gauss_legendre_01(n)
    pts, wts = [], []
    for k in range(6):
        p, q = _HEXAGON[k], _HEXAGON[(k + 1) % 6]
        jac = abs(p[0] * (q - p)[1] - p[1] * (q - p)[0])
        pts.append(p + np.outer(t, q - p))
        wts.append(jac * w)
    z = np.concatenate(pts)
    return z, np.concatenate(wts), _outer(z @ _REF_GRADS.T)


def identical_block_2d(tri, s: float, n: int = SINGULAR_ORDER) -> np.ndarray:
    """Blocks on T x T for triangles ``tri`` of shape (ntri, 3, 2)."""
    tri = np.asarray(tri, dtype=np.float64).reshape(-1, 3, 2)
    z, w, dd = _identical_faces_2d(n)
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    phys = z[None, :, 0:1] * e1[:, None, :] + z[None, :, 1:2] * e2[:, None, :]
    k = np.sum(phys**2, axis=2) ** (-1.0 - s)
    c = det**2 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s) * (4.0 - 2.0 * s))
    return ((k * w) @ dd * c[:, None]).reshape(-1, 3, 3)


@lru_cache(maxsize=None)
def _edge_faces_2d(n: int):
    t, w = gauss_legendre_01(n)
    sq_p, sq_q = (a.ravel() for a in np.meshgrid(t, t, indexing="ij"))
    sq_w = np.outer(w, w).ravel()
    tr = triangle_rule(n)
    tp, tq, tw = tr.points[:, 0], tr.points[:, 1], tr.weights
    faces = [
        np.column_stack([sq_p, 1.0 - sq_p, sq_q]),
        np.column_stack([tp, tq, np.ones_like(tp)]),
        np.column_stack([-tp, np.ones_like(tp), tq]),
        np.column_stack([-sq_p, sq_q, 1.0 - sq_p]),
    ]
    pts = np.concatenate(faces)
    wts = np.concatenate([sq_w, tw, tw, sq_w])
    z, beta, delta = pts.T
    diff = np.column_stack([-z - beta + delta, z, beta, -delta])
    return pts, wts, _outer(diff)


def edge_block_2d(p, q, r_a, r_b, s: float, n: int = SINGULAR_ORDER) -> np.ndarray:
    """Blocks for triangles (p, q, r_a) and (p, q, r_b) sharing the edge pq.

    Arguments have shape (npairs, 2); local order is (p, q, r_a, r_b).
    """
    p, q, r_a, r_b = (np.asarray(v, dtype=np.float64).reshape(-1, 2) for v in (p, q, r_a, r_b))
    e, a, b = q - p, r_a - p, r_b - p
    pts, w, dd = _edge_faces_2d(n)
    phys = (
        pts[None, :, 0:1] * e[:, None, :]
        + pts[None, :, 1:2] * a[:, None, :]
        - pts[None, :, 2:3] * b[:, None, :]
    )
    k = np.sum(phys**2, axis=2) ** (-1.0 - s)
    det_a = np.abs(e[:, 0] * a[:, 1] - e[:, 1] * a[:, 0])
    det_b = np.abs(e[:, 0] * b[:, 1] - e[:, 1] * b[:, 0])
    c = det_a * det_b / ((3.0 - 2.0 * s) * (4.0 - 2.0 * s))
    return ((k * w) @ dd * c[:, None]).reshape(-1, 4, 4)


@lru_cache(maxsize=None)
def _vertex_faces_2d(n: int, level_a: int = 0, level_b: int = 0):
    t, w = gauss_legendre_01(n)
    faces, wts = [], []
    # face alpha + beta = 1 with (gamma, delta) graded towards p when T_a is the
    # smaller triangle, and symmetrically for the second face
    for level, first in ((level_b, True), (level_a, False)):
        tr = graded_triangle_rule(n, level)
        seg = np.repeat(t, tr.size)
        q1 = np.tile(tr.points[:, 0], n)
        q2 = np.tile(tr.points[:, 1], n)
        faces.append(np.column_stack([1.0 - seg, seg, q1, q2] if first else [q1, q2, 1.0 - seg, seg]))
        wts.append(np.outer(w, tr.weights).ravel())
    pts = np.concatenate(faces)
    al, be, ga, de = pts.T
    diff = np.column_stack([ga + de - al - be, al, be, -ga, -de])
    return pts, np.concatenate(wts), _outer(diff)


def _size_levels(small, large):
    """Grading levels for a face whose near-singularity sits at relative distance small/large."""
    ratio = np.maximum(small / large, 1e-6)
    return np.clip(np.ceil(np.log2(1.0 / ratio)) - 1.0, 0, 16).astype(np.int64)


def vertex_block_2d(p, a1, a2, b1, b2, s: float, n: int = SINGULAR_ORDER) -> np.ndarray:
    """Blocks for triangles (p, a1, a2) and (p, b1, b2) sharing only p.

    Local order is (p, a1, a2, b1, b2).  When the triangles differ in size
    the face integrals over the larger one are graded towards p.
    """
    p, a1, a2, b1, b2 = (np.asarray(v, dtype=np.float64).reshape(-1, 2) for v in (p, a1, a2, b1, b2))
    va1, va2, vb1, vb2 = a1 - p, a2 - p, b1 - p, b2 - p
    size_a = np.maximum.reduce([np.linalg.norm(v, axis=1) for v in (va1, va2, a2 - a1)])
    size_b = np.maximum.reduce([np.linalg.norm(v, axis=1) for v in (vb1, vb2, b2 - b1)])
    lev_a = _size_levels(size_b, size_a)
    lev_b = _size_levels(size_a, size_b)
    det_a = np.abs(va1[:, 0] * va2[:, 1] - va1[:, 1] * va2[:, 0])
    det_b = np.abs(vb1[:, 0] * vb2[:, 1] - vb1[:, 1] * vb2[:, 0])
    c = det_a * det_b / (4.0 - 2.0 * s)
    out = np.empty((p.shape[0], 25))
    keys = lev_a * 32 + lev_b
    for key in np.unique(keys):
        sel = keys == key
        pts, w, dd = _vertex_faces_2d(n, int(key // 32), int(key % 32))
        phys = (
            pts[None, :, 0:1] * va1[sel, None, :]
            + pts[None, :, 1:2] * va2[sel, None, :]
            - pts[None, :, 2:3] * vb1[sel, None, :]
            - pts[None, :, 3:4] * vb2[sel, None, :]
        )
        k = np.sum(phys**2, axis=2) ** (-1.0 - s)
        out[sel] = (k * w) @ dd * c[sel, None]
    return out.reshape(-1, 5, 5)


@lru_cache(maxsize=None)
def far_rule_2d(n: int, level: int = 0):
    rule = subdivided_triangle_rule(n, level) if level else triangle_rule(n)
    pts = rule.points
    basis = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    return pts, rule.weights, basis


def map_triangles(tri, ref_pts, ref_w):
    """Physical points (ntri, P, 2) and weights (ntri, P) of a reference rule."""
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    x = tri[:, None, 0, :] + ref_pts[None, :, 0:1] * e1[:, None, :] + ref_pts[None, :, 1:2] * e2[:, None, :]
    return x, det[:, None] * ref_w[None, :]


def far_pairs_2d(tri_a, tri_b, s: float, n: int, level: int = 0):
    pts, w, basis = far_rule_2d(int(n), level)
    xa, wa = map_triangles(tri_a, pts, w)
    xb, wb = map_triangles(tri_b, pts, w)
    return far_terms(xa, wa, basis, xb, wb, basis, s, 2)


def separation_ratio_2d(tri_a, tri_b):
    """Lower bound on dist(T, T') divided by the larger diameter."""
    ca, cb = tri_a.mean(axis=1), tri_b.mean(axis=1)
    ra = np.max(np.linalg.norm(tri_a - ca[:, None], axis=2), axis=1)
    rb = np.max(np.linalg.norm(tri_b - cb[:, None], axis=2), axis=1)
    diam = np.maximum(_diameters(tri_a), _diameters(tri_b))
    return (np.linalg.norm(ca - cb, axis=1) - ra - rb) / diam


def _diameters(tri):
    return np.max(
        np.stack([np.linalg.norm(tri[:, i] - tri[:, (i + 1) % 3], axis=1) for i in range(3)]), axis=0
    )


def far_order_2d(ratio, digits: float = 9.0):
    """Triangle-rule order and subdivision level for separated triangle pairs."""
    ratio = np.asarray(ratio, dtype=np.float64)
    level = np.where(ratio < 0.5, 1, 0)
    eff = np.where(level == 1, 2.0 * ratio + 0.5, ratio)
    return far_field_order(np.maximum(eff, 0.25), digits, 2, 12), level


def _check_triangle(tri):
    tri = np.asarray(tri, dtype=np.float64).reshape(3, 2)
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    scale = max(np.linalg.norm(e1), np.linalg.norm(e2), np.linalg.norm(tri[2] - tri[1]))
    if not area > 1e-12 * scale**2:
        raise MeshError("degenerate triangle")
    return tri


def pair_integral_2d(tri_a, tri_b, s: float, *, n: int = SINGULAR_ORDER, tol: float = 1e-9) -> PairBlock:
    """Interaction block of two triangles over the union of their vertices."""
    s = _check_order(s)
    ta, tb = _check_triangle(tri_a), _check_triangle(tri_b)
    shared = [(i, j) for i in range(3) for j in range(3) if np.array_equal(ta[i], tb[j])]
    if len(shared) == 3:
        perm = [j for _, j in sorted(shared)]
        if not np.array_equal(tb[perm], ta):
            raise MeshError("identical vertex sets in different order")
        return PairBlock(ta.copy(), identical_block_2d(ta, s, n)[0])
    if len(shared) == 2:
        (i0, j0), (i1, j1) = shared
        ia = 3 - i0 - i1
        jb = 3 - j0 - j1
        vals = edge_block_2d(ta[i0], ta[i1], ta[ia], tb[jb], s, n)[0]
        return PairBlock(np.array([ta[i0], ta[i1], ta[ia], tb[jb]]), vals)
    if len(shared) == 1:
        (i0, j0), = shared
        ra = [i for i in range(3) if i != i0]
        rb = [j for j in range(3) if j != j0]
        vals = vertex_block_2d(ta[i0], ta[ra[0]], ta[ra[1]], tb[rb[0]], tb[rb[1]], s, n)[0]
        return PairBlock(np.array([ta[i0], ta[ra[0]], ta[ra[1]], tb[rb[0]], tb[rb[1]]]), vals)
    ratio = separation_ratio_2d(ta[None], tb[None])
    order, level = far_order_2d(ratio)
    order, level = int(order[0]), int(level[0])

    def block(m):
        return _far_block(*far_pairs_2d(ta[None], tb[None], s, m, level), 3)[0]

    cur = block(order)
    while order + 4 <= 24:
        nxt = block(order + 4)
        if np.max(np.abs(nxt - cur)) <= tol * np.max(np.abs(nxt)):
            cur = nxt
            break
        cur, order = nxt, order + 4
    return PairBlock(np.concatenate([ta, tb]), cur)


def check_singular_order(n: int) -> int:
    if not 2 <= n <= 64:
        raise ParameterError(f"singular quadrature order must lie in 2..64, got {n!r}")
    return int(n)
