"""Dense assembly of the nonlocal Neumann system.

Unknowns are the nodal values of a continuous P1 function on the mesh of the
computational domain Lambda plus one extra coefficient for the function that
is constant on the complement of Lambda (the tail).  With k(x, y) = |x - y|^{-d-2s},

    a(u, v) = C/2 iint_{R^d x R^d minus (Omega^c x Omega^c)} (u(x) - u(y)) (v(x) - v(y)) k dy dx.

Pairs of elements with at least one in Omega are integrated with the pair
rules of :mod:`fracneumann.quadrature.pairs`; the interaction of Omega with the
complement of Lambda reduces to the weight omega(x) = int_{Lambda^c} k(x, y) dy.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .mesh import Mesh1D, MeshError, TriMesh2D
from .params import FractionalParams, ParameterError, _check_order, dirichlet_constant, normalization_constant
from .quadrature import pairs
from .quadrature.boundary_flux import boundary_flux_moments_1d
from .quadrature.rules import far_field_order, gauss_jacobi_01, gauss_legendre_01, graded_rule_01, triangle_rule
from .quadrature.tail import (
    TailSpec,
    kernel_weight_1d,
    kernel_weight_polygon,
    segment_flux_integral,
    tail_flux_integral,
)

DUMP_MAGIC = b"FNLSYS01"


class AdmissibilityError(ParameterError):
    """Raised when problem data is not admissible for the requested order."""


# ------------------------------------------------------------------ data specs


@dataclass(frozen=True)
class SourceSpec:
    """Right-hand side f on Omega.

    ``callable`` functions receive points of shape (n,) in 1D and (n, 2) in
    2D; ``grid`` holds nodal values interpolated piecewise linearly.
    """

    kind: str = "constant"
    value: float = 0.0
    func: Optional[Callable] = None
    grid: Optional[np.ndarray] = None
    order: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "callable", "grid"):
            raise ParameterError(f"unknown source kind {self.kind!r}")
        if self.kind == "callable" and self.func is None:
            raise ParameterError("callable source needs a function")
        if self.kind == "grid" and self.grid is None:
            raise ParameterError("grid source needs nodal values")

    @classmethod
    def constant(cls, value: float) -> SourceSpec:
        return cls("constant", float(value))

    @classmethod
    def from_callable(cls, func: Callable, order: Optional[int] = None) -> SourceSpec:
        return cls("callable", func=func, order=order)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        if self.kind == "constant":
            return np.full(n, self.value)
        return np.asarray(self.func(x), dtype=np.float64).reshape(n)


FLUX_KINDS = ("zero", "manufactured_1d", "power_law", "callable")


@dataclass(frozen=True)
class FluxSpec:
    """Neumann datum g on the complement of Omega.

    The near-field description is used on the exterior elements of the mesh,
    ``tail`` on the complement of the computational domain.
    """

    kind: str = "zero"
    tail: TailSpec = field(default_factory=TailSpec.zero)
    func: Optional[Callable] = None
    s: Optional[float] = None
    order: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in FLUX_KINDS:
            raise ParameterError(f"unknown flux kind {self.kind!r}")
        if self.kind == "callable" and self.func is None:
            raise ParameterError("callable flux needs a function")
        if self.kind == "manufactured_1d":
            _check_order(self.s)

    @classmethod
    def zero(cls) -> FluxSpec:
        return cls()

    @classmethod
    def power_law(cls, amplitude: float, p: float) -> FluxSpec:
        """g(x) = -amplitude |x|^{-d-p} everywhere outside Omega."""
        return cls("power_law", TailSpec.power_law(amplitude, p))

    @classmethod
    def manufactured(cls, s: float) -> FluxSpec:
        """Flux of c_s (1 - x^2)_+^s on Omega = (-1, 1)."""
        s = _check_order(s)
        amp = normalization_constant(1, s) * dirichlet_constant(s) * math.sqrt(math.pi) * math.gamma(s + 1.0) / math.gamma(s + 1.5)
        tail = TailSpec("callable", amp, 2.0 * s, 1e-12, lambda x: manufactured_flux_1d(x, s))
        return cls("manufactured_1d", tail, s=s)

    @classmethod
    def from_callable(cls, func: Callable, tail: TailSpec) -> FluxSpec:
        return cls("callable", tail, func=func)

    def evaluate(self, x: np.ndarray, d: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(x.shape[0])
        if self.kind == "power_law":
            return self.tail.evaluate(x, d)
        if self.kind == "manufactured_1d":
            return manufactured_flux_1d(x, self.s)
        return np.asarray(self.func(x), dtype=np.float64).reshape(x.shape[0])


def manufactured_flux_1d(x, s: float) -> np.ndarray:
    """g(x) = -C_{1,s} c_s int_{-1}^{1} (1 - y^2)^s |x - y|^{-1-2s} dy for |x| > 1."""
    s = _check_order(s)
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.abs(np.atleast_1d(x))
    if np.any(x <= 1.0):
        raise ParameterError("the manufactured flux is defined for |x| > 1 only")
    out = np.empty_like(x)
    far = x >= 2.0
    if np.any(far):
        t, w = gauss_jacobi_01(40, s, s)
        y = 2.0 * t - 1.0
        out[far] = ((x[far, None] - y) ** (-1.0 - 2.0 * s)) @ (w * 2.0 ** (2.0 * s + 1.0))
    near = ~far
    if np.any(near):
        y, w = _near_flux_rule(s)
        xn = x[near]
        chunk = 4096
        vals = np.empty(xn.size)
        for i in range(0, xn.size, chunk):
            vals[i : i + chunk] = ((xn[i : i + chunk, None] - y) ** (-1.0 - 2.0 * s)) @ w
        out[near] = vals
    out *= -normalization_constant(1, s) * dirichlet_constant(s)
    return float(out[0]) if scalar else out


_NEAR_RULES: dict = {}


def _near_flux_rule(s: float):
    """Nodes and weights (weight (1 - y^2)^s included) on [-1, 1], graded towards y = 1.

    Panel sizes are comparable to their distance from y = 1, so the rule
    resolves the near-singularity of |x - y|^{-1-2s} for any x > 1.
    """
    if s in _NEAR_RULES:
        return _NEAR_RULES[s]
    t, w = gauss_jacobi_01(24, s, 0.0)
    # [-1, 0]: y = -1 + t, weight (1 + y)^s (1 - y)^s
    y_left = -1.0 + t
    w_left = w * (1.0 - y_left) ** s
    tg, wg = graded_rule_01(16, 52, 0.5, "left")
    # [0, 1] graded towards y = 1 through u = 1 - y; last panel carries the weight exactly
    cut = 0.5**52
    keep = tg >= cut
    u = tg[keep]
    y_mid = 1.0 - u
    w_mid = wg[keep] * u**s * (1.0 + y_mid) ** s
    tj, wj = gauss_jacobi_01(16, s, 0.0)
    u_end = cut * tj
    y_end = 1.0 - u_end
    w_end = cut ** (1.0 + s) * wj * (1.0 + y_end) ** s
    rule = (np.concatenate([y_left, y_mid, y_end]), np.concatenate([w_left, w_mid, w_end]))
    _NEAR_RULES[s] = rule
    return rule


def manufactured_solution_1d(x, s: float) -> np.ndarray:
    """u(x) = c_s (1 - x^2)_+^s."""
    x = np.asarray(x, dtype=np.float64)
    return dirichlet_constant(s) * np.maximum(1.0 - x * x, 0.0) ** s


def manufactured_source_1d(s: float, alpha: float) -> SourceSpec:
    """f = 1 + alpha u for the manufactured solution."""
    return SourceSpec.from_callable(lambda x: 1.0 + alpha * manufactured_solution_1d(x, s))


# ------------------------------------------------------------------ system type


@dataclass(frozen=True, eq=False)
class LinearSystem:
    stiffness: np.ndarray
    mass: np.ndarray
    load: np.ndarray
    params: FractionalParams
    mesh: object
    f_integral: float = 0.0
    g_integral: float = 0.0

    @property
    def size(self) -> int:
        return int(self.load.size)

    def dump(self, path) -> None:
        """Write K, M and the load as row-major little-endian doubles after a 16-byte header."""
        with open(path, "wb") as fh:
            fh.write(DUMP_MAGIC + struct.pack("<q", self.size))
            for arr in (self.stiffness, self.mass, self.load):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_dump(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != DUMP_MAGIC:
        raise ValueError("not a system dump")
    (n,) = struct.unpack("<q", data[8:16])
    body = np.frombuffer(data, dtype="<f8", offset=16)
    if body.size != 2 * n * n + n:
        raise ValueError("truncated system dump")
    return body[: n * n].reshape(n, n).copy(), body[n * n : 2 * n * n].reshape(n, n).copy(), body[2 * n * n :].copy()


# ------------------------------------------------------------------ geometry


def _element_coords(mesh) -> np.ndarray:
    if mesh.dim == 1:
        return mesh.nodes[mesh.cells]
    return mesh.points[mesh.cells]


def _check_mesh(mesh, params: FractionalParams) -> None:
    if not isinstance(mesh, (Mesh1D, TriMesh2D)):
        raise MeshError("unsupported mesh type")
    if mesh.dim != params.d:
        raise ParameterError(f"mesh dimension {mesh.dim} does not match d = {params.d}")


def _touching(mesh) -> list[np.ndarray]:
    """For every element, the sorted indices of elements sharing a vertex with it."""
    cells = mesh.cells
    nel = cells.shape[0]
    if mesh.dim == 1:
        return [np.arange(max(i - 1, 0), min(i + 2, nel)) for i in range(nel)]
    node_el = [[] for _ in range(mesh.n_nodes)]
    for e, tri in enumerate(cells):
        for v in tri:
            node_el[v].append(e)
    return [np.unique(np.concatenate([node_el[v] for v in tri])) for tri in cells]


# ------------------------------------------------------------------ stiffness


@dataclass
class _FarContext:
    mesh: object
    s: float
    coords: np.ndarray
    cells: np.ndarray
    in_omega: np.ndarray
    touching: list
    ext_index: np.ndarray
    n_ext: int
    bnd_rows: np.ndarray
    bnd_index: np.ndarray
    digits: float


def _far_chunk(ctx: _FarContext, rows: np.ndarray):
    """Separated-pair contributions of a block of Omega elements.

    Returns the touched row nodes and their rows of the matrix, the exterior
    self terms per exterior element and the rows of boundary nodes fed by the
    transposed cross terms.
    """
    n_nodes = ctx.mesh.n_nodes
    cells = ctx.cells
    nel, nloc = cells.shape
    row_nodes = np.unique(cells[rows])
    local = np.full(n_nodes, -1, dtype=np.int64)
    local[row_nodes] = np.arange(row_nodes.size)

    ti_list, tj_list = [], []
    for t in rows:
        mask = np.ones(nel, dtype=bool)
        mask[ctx.touching[t]] = False
        # exterior-exterior pairs never occur since t is in omega
        cols = np.flatnonzero(mask)
        ti_list.append(np.full(cols.size, t))
        tj_list.append(cols)
    ti = np.concatenate(ti_list)
    tj = np.concatenate(tj_list)

    if ctx.mesh.dim == 1:
        a0 = ctx.coords[:, 0]
        h = ctx.coords[:, 1] - ctx.coords[:, 0]
        gap = np.maximum(a0[tj] - (a0[ti] + h[ti]), a0[ti] - (a0[tj] + h[tj]))
        order = far_field_order(gap / np.maximum(h[ti], h[tj]), ctx.digits, 2, 16)
        level = np.zeros_like(order)
    else:
        ratio = pairs.separation_ratio_2d(ctx.coords[ti], ctx.coords[tj])
        order, level = pairs.far_order_2d(ratio, ctx.digits)

    acc_idx, acc_val = [], []
    ext_idx, ext_val = [], []
    bnd_idx, bnd_val = [], []
    keys = order * 4 + level
    for key in np.unique(keys):
        sel = np.flatnonzero(keys == key)
        n, lev = int(key // 4), int(key % 4)
        npts = n if ctx.mesh.dim == 1 else n * n * 4**lev
        batch = max(1, 2_000_000 // (npts * npts))
        for start in range(0, sel.size, batch):
            part = sel[start : start + batch]
            pi, pj = ti[part], tj[part]
            if ctx.mesh.dim == 1:
                self_a, self_b, cross = pairs.far_pairs_1d(
                    ctx.coords[pi, 0], h[pi], ctx.coords[pj, 0], h[pj], ctx.s, n
                )
            else:
                self_a, self_b, cross = pairs.far_pairs_2d(ctx.coords[pi], ctx.coords[pj], ctx.s, n, lev)
            na = cells[pi]
            nb = cells[pj]
            lr = local[na]
            acc_idx.append((lr[:, :, None] * n_nodes + na[:, None, :]).ravel())
            acc_val.append(self_a.ravel())
            acc_idx.append((lr[:, :, None] * n_nodes + nb[:, None, :]).ravel())
            acc_val.append(-cross.ravel())
            ext = ~ctx.in_omega[pj]
            if np.any(ext):
                e = ctx.ext_index[pj[ext]]
                ext_idx.append((e[:, None] + ctx.n_ext * np.arange(nloc * nloc)[None, :]).ravel())
                ext_val.append(self_b[ext].reshape(-1, nloc * nloc).ravel())
                bi = ctx.bnd_index[nb[ext]]
                hit = bi >= 0
                if np.any(hit):
                    # transposed cross terms landing in rows of boundary nodes
                    cx = np.swapaxes(cross[ext], 1, 2)
                    rows_b = np.broadcast_to(bi[:, :, None], cx.shape)
                    cols_a = np.broadcast_to(na[ext][:, None, :], cx.shape)
                    m = np.broadcast_to(hit[:, :, None], cx.shape)
                    bnd_idx.append(rows_b[m] * n_nodes + cols_a[m])
                    bnd_val.append(-cx[m])
    block = np.bincount(
        np.concatenate(acc_idx), np.concatenate(acc_val), minlength=row_nodes.size * n_nodes
    ).reshape(row_nodes.size, n_nodes)
    ext_acc = (
        np.bincount(np.concatenate(ext_idx), np.concatenate(ext_val), minlength=ctx.n_ext * nloc * nloc)
        if ext_idx
        else np.zeros(ctx.n_ext * nloc * nloc)
    )
    bnd_acc = (
        np.bincount(np.concatenate(bnd_idx), np.concatenate(bnd_val), minlength=ctx.bnd_rows.size * n_nodes)
        if bnd_idx
        else np.zeros(ctx.bnd_rows.size * n_nodes)
    )
    return row_nodes, block, ext_acc, bnd_acc


def _near_blocks(mesh, s: float, coords, cells, in_omega, touching, order: int):
    """Global index arrays and values of all touching-pair blocks (weights included)."""
    out_idx, out_val = [], []
    om = np.flatnonzero(in_omega)
    if mesh.dim == 1:
        h = coords[:, 1] - coords[:, 0]
        blk = 0.5 * pairs.identical_block_1d(h[om], s)
        out_idx.append(cells[om])
        out_val.append(blk)
        nel = cells.shape[0]
        left = np.arange(nel - 1)
        keep = in_omega[left] | in_omega[left + 1]
        left = left[keep]
        blk = pairs.adjacent_block_1d(h[left], h[left + 1], s, order)
        out_idx.append(np.column_stack([cells[left, 0], cells[left, 1], cells[left + 1, 1]]))
        out_val.append(blk)
        return out_idx, out_val

    tri = coords
    out_idx.append(cells[om])
    out_val.append(0.5 * pairs.identical_block_2d(tri[om], s, order))
    edge_rows, vert_rows = [], []
    for t in om:
        for u in touching[t]:
            if u == t or (in_omega[u] and u < t):
                continue
            shared = np.intersect1d(cells[t], cells[u])
            if shared.size == 2:
                ra = np.setdiff1d(cells[t], shared)[0]
                rb = np.setdiff1d(cells[u], shared)[0]
                edge_rows.append([shared[0], shared[1], ra, rb])
            else:
                p = shared[0]
                oa = [v for v in cells[t] if v != p]
                ob = [v for v in cells[u] if v != p]
                vert_rows.append([p, oa[0], oa[1], ob[0], ob[1]])
    pts = mesh.points
    if edge_rows:
        e = np.array(edge_rows)
        out_idx.append(e)
        out_val.append(pairs.edge_block_2d(pts[e[:, 0]], pts[e[:, 1]], pts[e[:, 2]], pts[e[:, 3]], s, order))
    if vert_rows:
        v = np.array(vert_rows)
        out_idx.append(v)
        out_val.append(
            pairs.vertex_block_2d(pts[v[:, 0]], pts[v[:, 1]], pts[v[:, 2]], pts[v[:, 3]], pts[v[:, 4]], s, order)
        )
    return out_idx, out_val


def _tail_moments(mesh, s: float, coords, om: np.ndarray, order: int = 10):
    """Per Omega element: int psi_a psi_b omega, int psi_a omega (local hats)."""
    if mesh.dim == 1:
        t, w = gauss_legendre_01(order)
        basis = np.column_stack([1.0 - t, t])
        a = coords[om, 0][:, None]
        h = (coords[om, 1] - coords[om, 0])[:, None]
        x = a + h * t
        wq = kernel_weight_1d(x, s, mesh.lambda_bounds) * w * h
    else:
        rule = triangle_rule(min(order, 8))
        basis = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
        x, wts = pairs.map_triangles(coords[om], rule.points, rule.weights)
        polygon = mesh.points[mesh.outer_boundary]
        om_vals = kernel_weight_polygon(x.reshape(-1, 2), s, polygon).reshape(x.shape[:2])
        wq = om_vals * wts
    nloc = basis.shape[1]
    bb = (basis[:, :, None] * basis[:, None, :]).reshape(-1, nloc * nloc)
    return (wq @ bb).reshape(-1, nloc, nloc), wq @ basis


def assemble_stiffness(
    mesh,
    params: FractionalParams,
    *,
    threads: int = 1,
    singular_order: int = pairs.SINGULAR_ORDER,
    far_digits: Optional[float] = None,
    chunk: int = 64,
) -> np.ndarray:
    """Dense (N+1) x (N+1) stiffness matrix including the tail coefficient.

    The separated-pair sum is split into row blocks of ``chunk`` Omega
    elements; blocks may run on ``threads`` worker threads and are merged in
    block order, so the result does not depend on the thread count.
    """
    _check_mesh(mesh, params)
    s = params.s
    singular_order = pairs.check_singular_order(singular_order)
    digits = far_digits if far_digits is not None else (12.0 if mesh.dim == 1 else 9.0)
    coords = _element_coords(mesh)
    cells = mesh.cells
    nloc = cells.shape[1]
    in_omega = np.asarray(mesh.cell_in_omega)
    n_nodes = mesh.n_nodes
    N = n_nodes
    K = np.zeros((N + 1, N + 1))

    om = np.flatnonzero(in_omega)
    ext = np.flatnonzero(~in_omega)
    ext_index = np.full(cells.shape[0], -1, dtype=np.int64)
    ext_index[ext] = np.arange(ext.size)
    r_nodes = np.unique(cells[om])
    is_r = np.zeros(n_nodes, dtype=bool)
    is_r[r_nodes] = True
    e_nodes = np.flatnonzero(~is_r)
    # rows of Omega nodes that also belong to exterior elements
    bnd_rows = np.intersect1d(r_nodes, np.unique(cells[ext])) if ext.size else np.zeros(0, dtype=np.int64)
    bnd_index = np.full(n_nodes, -1, dtype=np.int64)
    bnd_index[bnd_rows] = np.arange(bnd_rows.size)
    touching = _touching(mesh)

    ctx = _FarContext(mesh, s, coords, cells, in_omega, touching, ext_index, ext.size, bnd_rows, bnd_index, digits)
    blocks = [om[i : i + chunk] for i in range(0, om.size, chunk)]
    ext_acc = np.zeros(ext.size * nloc * nloc)
    bnd_acc = np.zeros(bnd_rows.size * n_nodes)

    def merge(result):
        nonlocal ext_acc, bnd_acc
        row_nodes, block, e_part, b_part = result
        K[row_nodes, :N] += block
        ext_acc += e_part
        bnd_acc += b_part

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(lambda rows: _far_chunk(ctx, rows), blocks):
                merge(result)
    else:
        for rows in blocks:
            merge(_far_chunk(ctx, rows))

    K[bnd_rows, :N] += bnd_acc.reshape(bnd_rows.size, n_nodes)
    if ext.size:
        ext_blocks = ext_acc.reshape(nloc * nloc, ext.size).T.reshape(-1, nloc, nloc)
        idx = cells[ext]
        np.add.at(K, (idx[:, :, None], idx[:, None, :]), ext_blocks)

    for idx, val in zip(*_near_blocks(mesh, s, coords, cells, in_omega, touching, singular_order)):
        np.add.at(K, (idx[:, :, None], idx[:, None, :]), val)

    if e_nodes.size:
        K[np.ix_(e_nodes, r_nodes)] = K[np.ix_(r_nodes, e_nodes)].T

    mm, m1 = _tail_moments(mesh, s, coords, om)
    idx = cells[om]
    np.add.at(K, (idx[:, :, None], idx[:, None, :]), mm)
    tail_col = np.zeros(N)
    np.add.at(tail_col, idx, m1)
    K[:N, N] = -tail_col
    K[N, :N] = -tail_col
    K[N, N] = tail_col.sum()
    K *= params.c_norm
    return K


# ------------------------------------------------------------------ mass and load


def assemble_mass(mesh) -> np.ndarray:
    """P1 mass matrix over Omega, padded with a zero tail row and column."""
    N = mesh.n_nodes
    M = np.zeros((N + 1, N + 1))
    om = np.flatnonzero(mesh.cell_in_omega)
    idx = mesh.cells[om]
    meas = np.abs(mesh.cell_measures[om])
    if mesh.dim == 1:
        local = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    else:
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    np.add.at(M, (idx[:, :, None], idx[:, None, :]), meas[:, None, None] * local)
    return M


def _element_rule(mesh, elems, order):
    """Physical points, weights and local hat values for a set of elements."""
    coords = _element_coords(mesh)[elems]
    if mesh.dim == 1:
        t, w = gauss_legendre_01(order)
        h = (coords[:, 1] - coords[:, 0])[:, None]
        x = coords[:, 0][:, None] + h * t
        return x, h * w, np.column_stack([1.0 - t, t])
    rule = triangle_rule(order)
    x, wts = pairs.map_triangles(coords, rule.points, rule.weights)
    return x, wts, np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])


def _scatter(N, elems_nodes, local_vals):
    out = np.zeros(N + 1)
    np.add.at(out, elems_nodes, local_vals)
    return out


def _check_flux(mesh, g: FluxSpec, params: FractionalParams) -> None:
    if g.kind != "manufactured_1d":
        return
    if mesh.dim != 1 or tuple(mesh.omega) != (-1.0, 1.0):
        raise AdmissibilityError("the manufactured flux is defined for omega = (-1, 1) in 1D")
    if g.s != params.s:
        raise AdmissibilityError("manufactured flux built for a different order s")
    if params.s > 0.5:
        raise AdmissibilityError(
            f"manufactured flux is not square integrable near the boundary for s = {params.s} > 1/2"
        )


def assemble_load(mesh, f: SourceSpec, g: FluxSpec, params: FractionalParams) -> np.ndarray:
    """Load vector F + G of length N + 1; the last entry is the tail flux."""
    return _assemble_load(mesh, f, g, params)[0]


def _assemble_load(mesh, f: SourceSpec, g: FluxSpec, params: FractionalParams):
    _check_mesh(mesh, params)
    _check_flux(mesh, g, params)
    N = mesh.n_nodes
    cells = mesh.cells
    in_omega = np.asarray(mesh.cell_in_omega)
    om = np.flatnonzero(in_omega)
    ext = np.flatnonzero(~in_omega)

    if f.kind == "grid":
        vals = np.asarray(f.grid, dtype=np.float64)
        if vals.shape != (N,):
            raise ParameterError("grid source needs one value per mesh node")
        F = assemble_mass(mesh)[:, :N] @ vals
    else:
        order = f.order or (8 if mesh.dim == 1 else 6)
        x, w, basis = _element_rule(mesh, om, order)
        fx = f.evaluate(x.reshape(-1) if mesh.dim == 1 else x.reshape(-1, 2)).reshape(w.shape)
        F = _scatter(N, cells[om], (fx * w) @ basis)
    F[N] = 0.0

    G = np.zeros(N + 1)
    if g.kind != "zero" and ext.size:
        if g.kind == "manufactured_1d":
            order = g.order or 16
            a, b = mesh.omega
            nodes = mesh.nodes
            adj = np.array([e for e in ext if nodes[cells[e, 0]] == b or nodes[cells[e, 1]] == a], dtype=np.int64)
            rest = np.setdiff1d(ext, adj)
        else:
            order = g.order or (8 if mesh.dim == 1 else 6)
            adj = np.zeros(0, dtype=np.int64)
            rest = ext
        if rest.size:
            x, w, basis = _element_rule(mesh, rest, order)
            gx = g.evaluate(x.reshape(-1) if mesh.dim == 1 else x.reshape(-1, 2), mesh.dim).reshape(w.shape)
            G += _scatter(N, cells[rest], (gx * w) @ basis)
        for e in adj:
            lo, hi = mesh.nodes[cells[e]]
            m_hat, m_far = boundary_flux_moments_1d(hi - lo, params.s)
            if lo == mesh.omega[1]:
                G[cells[e, 0]] += m_hat
                G[cells[e, 1]] += m_far
            else:
                G[cells[e, 1]] += m_hat
                G[cells[e, 0]] += m_far
    if g.kind != "zero":
        G[N] = _tail_flux(mesh, g)
    return F + G, float(F.sum()), float(G.sum())


def _tail_flux(mesh, g: FluxSpec) -> float:
    if mesh.dim == 1:
        return tail_flux_integral(g.tail, mesh.ext_radius, 1, bounds=mesh.lambda_bounds)
    value = tail_flux_integral(g.tail, mesh.ext_radius, 2)
    polygon = mesh.points[mesh.outer_boundary]
    return value + segment_flux_integral(g.tail, polygon, mesh.ext_radius)


def assemble_system(
    mesh,
    params: FractionalParams,
    f: SourceSpec,
    g: FluxSpec,
    *,
    threads: int = 1,
    singular_order: int = pairs.SINGULAR_ORDER,
    far_digits: Optional[float] = None,
) -> LinearSystem:
    load, f_int, g_int = _assemble_load(mesh, f, g, params)
    K = assemble_stiffness(mesh, params, threads=threads, singular_order=singular_order, far_digits=far_digits)
    M = assemble_mass(mesh)
    return LinearSystem(K, M, load, params, mesh, f_int, g_int)
