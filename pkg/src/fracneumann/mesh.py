"""Conforming meshes of the computational domain.

The computational domain Lambda contains the closure of Omega, which is meshed
exactly by whole elements; every element is labelled as lying in Omega or in
its exterior.  In 1D, Omega = (a, b) and Lambda = [a - H, b + H].  In 2D,
Omega is (the inscribed polygon of) a disk centred at the origin and Lambda is
the polygon inscribed in the circle of radius ``ext_radius``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .params import ParameterError


class MeshError(ValueError):
    """Raised when mesh data is inconsistent or a refinement request is invalid."""


INTERIOR, BOUNDARY, EXTERIOR = 0, 1, 2


# {{{ 1D


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Partition of ``[a - H, b + H]`` with ``a`` and ``b`` among the nodes."""

    nodes: np.ndarray
    omega: tuple[float, float]

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=np.float64)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        a, b = self.omega
        if nodes.ndim != 1 or nodes.size < 2:
            raise MeshError("a 1D mesh needs at least two nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise MeshError("nodes must be strictly increasing")
        if not (np.any(nodes == a) and np.any(nodes == b)):
            raise MeshError("the endpoints of omega must be mesh nodes")
        if not (nodes[0] < a and nodes[-1] > b):
            raise MeshError("the mesh must extend beyond omega on both sides")

    dim = 1

    @property
    def points(self) -> np.ndarray:
        return self.nodes[:, None]

    @cached_property
    def cells(self) -> np.ndarray:
        n = self.nodes.size
        return np.column_stack([np.arange(n - 1), np.arange(1, n)])

    @cached_property
    def cell_in_omega(self) -> np.ndarray:
        a, b = self.omega
        mid = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        return (mid > a) & (mid < b)

    @cached_property
    def cell_measures(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def lambda_bounds(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def H(self) -> float:
        """Distance from the boundary of Omega to the boundary of Lambda."""
        a, b = self.omega
        return float(min(a - self.nodes[0], self.nodes[-1] - b))

    @property
    def ext_radius(self) -> float:
        return float(max(-self.nodes[0], self.nodes[-1]))

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.size)

    @cached_property
    def node_region(self) -> np.ndarray:
        a, b = self.omega
        x = self.nodes
        region = np.full(x.size, EXTERIOR, dtype=np.int8)
        region[(x > a) & (x < b)] = INTERIOR
        region[(x == a) | (x == b)] = BOUNDARY
        return region

    @property
    def omega_measure(self) -> float:
        return float(self.cell_measures[self.cell_in_omega].sum())


def build_mesh_1d(omega: tuple[float, float], H: float, h: float) -> Mesh1D:
    """Uniform mesh of Omega with spacing <= h, extended uniformly by H on each side."""
    a, b = map(float, omega)
    if not b > a:
        raise ParameterError(f"omega must be a non-empty interval, got {omega!r}")
    if not H > 0.0:
        raise ParameterError(f"exterior extent H must be positive, got {H!r}")
    if not (0.0 < h < b - a):
        raise MeshError(f"mesh size h must lie in (0, |omega|), got {h!r}")

    def _count(length: float) -> int:
        # tolerate round-off in length / h for commensurate inputs
        return max(1, math.ceil(length / h - 1e-9))

    n_in, n_out = _count(b - a), _count(H)
    inner = np.linspace(a, b, n_in + 1)
    left = np.linspace(a - H, a, n_out + 1)[:-1]
    right = np.linspace(b, b + H, n_out + 1)[1:]
    return Mesh1D(np.concatenate([left, inner, right]), (a, b))


# }}}


# {{{ 2D


def _triangle_areas(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (points[triangles[:, k]] for k in range(3))
    e1, e2 = p1 - p0, p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass(frozen=True, eq=False)
class TriMesh2D:
    """Triangulation of the disk of radius ``ext_radius`` (inscribed polygon).

    Triangles are stored counter-clockwise; ``in_omega`` labels the triangles
    meshing the inscribed polygon of the disk of radius ``r_omega``.
    """

    points: np.ndarray
    triangles: np.ndarray
    in_omega: np.ndarray
    ext_radius: float
    r_omega: float
    sigma_max: float = 10.0
    check: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        points = np.ascontiguousarray(self.points, dtype=np.float64)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        labels = np.asarray(self.in_omega, dtype=bool)
        for arr in (points, tris, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "in_omega", labels)
        if points.ndim != 2 or points.shape[1] != 2:
            raise MeshError("points must be an (N, 2) array")
        if tris.ndim != 2 or tris.shape[1] != 3 or labels.shape != (tris.shape[0],):
            raise MeshError("triangles must be (M, 3) with one label per triangle")
        if not (0.0 < self.r_omega < self.ext_radius):
            raise MeshError("need 0 < r_omega < ext_radius")
        if self.check:
            self.validate()

    dim = 2

    @property
    def cells(self) -> np.ndarray:
        return self.triangles

    @property
    def cell_in_omega(self) -> np.ndarray:
        return self.in_omega

    @cached_property
    def cell_measures(self) -> np.ndarray:
        return _triangle_areas(self.points, self.triangles)

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        p = self.points[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @cached_property
    def cell_inner_diameters(self) -> np.ndarray:
        p = self.points[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        perimeter = np.linalg.norm(e, axis=2).sum(axis=1)
        return 4.0 * self.cell_measures / perimeter

    @property
    def n_nodes(self) -> int:
        return int(self.points.shape[0])

    @property
    def omega_area(self) -> float:
        return float(self.cell_measures[self.in_omega].sum())

    omega_measure = omega_area

    @property
    def H(self) -> float:
        return float(self.ext_radius - self.r_omega)

    @cached_property
    def node_region(self) -> np.ndarray:
        touches_in = np.zeros(self.n_nodes, dtype=bool)
        touches_out = np.zeros(self.n_nodes, dtype=bool)
        touches_in[self.triangles[self.in_omega].ravel()] = True
        touches_out[self.triangles[~self.in_omega].ravel()] = True
        region = np.full(self.n_nodes, EXTERIOR, dtype=np.int8)
        region[touches_in & ~touches_out] = INTERIOR
        region[touches_in & touches_out] = BOUNDARY
        return region

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and the number of triangles sharing each."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    @cached_property
    def outer_boundary(self) -> np.ndarray:
        """Outer boundary vertices, counter-clockwise by angle."""
        uniq, counts = self.edges
        bnodes = np.unique(uniq[counts == 1])
        ang = np.arctan2(self.points[bnodes, 1], self.points[bnodes, 0])
        return bnodes[np.argsort(ang)]

    def validate(self) -> None:
        area = self.cell_measures
        diam = self.cell_diameters
        if np.any(area <= 1e-14 * diam**2):
            raise MeshError("degenerate or clockwise triangles present")
        uniq, counts = self.edges
        if np.any(counts > 2):
            raise MeshError("non-conforming triangulation: edge shared by more than two triangles")
        bnodes = uniq[counts == 1].ravel()
        radii = np.hypot(*self.points[bnodes].T)
        if not np.allclose(radii, self.ext_radius, rtol=1e-10):
            raise MeshError("free edges found away from the outer boundary")
        # no triangle may straddle the omega boundary
        centroid_r = np.hypot(*self.points[self.triangles].mean(axis=1).T)
        if np.any(self.in_omega != (centroid_r < self.r_omega)):
            raise MeshError("omega labels disagree with triangle positions")
        vr = np.hypot(*self.points[self.triangles].T).T
        tol = 1e-12 * self.ext_radius
        if np.any(self.in_omega & (vr.max(axis=1) > self.r_omega + tol)):
            raise MeshError("omega triangle extends outside the omega disk")
        if np.any(~self.in_omega & (vr.min(axis=1) < self.r_omega - tol)):
            raise MeshError("exterior triangle reaches inside the omega disk")
        ratio = float((diam / self.cell_inner_diameters).max())
        if ratio > self.sigma_max:
            raise MeshError(f"shape-regularity ratio {ratio:.3g} exceeds {self.sigma_max}")


def _zip_rings(ia: np.ndarray, a_pts: np.ndarray, ib: np.ndarray, b_pts: np.ndarray) -> list:
    """Triangulate the band between two closed rings by shortest-diagonal zipping."""
    na, nb = ia.size, ib.size
    # start ring B at the node closest in angle to A's first node
    ang_a = np.arctan2(a_pts[0, 1], a_pts[0, 0])
    ang_b = np.arctan2(b_pts[:, 1], b_pts[:, 0])
    j0 = int(np.argmin(np.abs(np.angle(np.exp(1j * (ang_b - ang_a))))))
    ib = np.roll(ib, -j0)
    b_pts = np.roll(b_pts, -j0, axis=0)
    tris = []
    i = j = 0
    while i < na or j < nb:
        a0, a1 = i % na, (i + 1) % na
        b0, b1 = j % nb, (j + 1) % nb
        if i == na:
            advance_a = False
        elif j == nb:
            advance_a = True
        else:
            da = np.linalg.norm(a_pts[a1] - b_pts[b0])
            db = np.linalg.norm(a_pts[a0] - b_pts[b1])
            advance_a = da < db
        if advance_a:
            tris.append((ia[a0], ia[a1], ib[b0]))
            i += 1
        else:
            tris.append((ia[a0], ib[b1], ib[b0]))
            j += 1
    return tris


def _exterior_radii(r_omega: float, r_ext: float, h: float, grading: float) -> list[float]:
    """Ring radii from r_omega to r_ext.

    Ring widths follow ``max(h, h * (dist / r_omega) ** grading)`` capped so that
    consecutive widths grow by at most 1.5 and a width never exceeds half the
    ring radius (keeps the ring triangulation shape regular).
    """
    total = r_ext - r_omega
    dists = [0.0]
    width = h
    while True:
        delta = dists[-1]
        target = h * max(1.0, (delta / r_omega) ** grading) if grading > 0 else h
        width = min(target, 1.5 * width, 0.5 * (r_omega + delta))
        width = max(width, h) if grading > 0 else h
        nxt = delta + width
        if nxt >= total - 0.5 * width:
            break
        dists.append(nxt)
    dists.append(total)
    return [r_omega + d for d in dists]


def build_disk_mesh_2d(
    r_omega: float,
    r_ext: float,
    h_omega: float,
    grading_exponent: float = 0.0,
    *,
    min_ring_nodes: int = 12,
) -> TriMesh2D:
    """Concentric-ring triangulation of B(0, r_ext) meshing B(0, r_omega) exactly.

    Inside the omega disk the rings are equispaced with ``6k`` nodes on ring
    ``k``; outside, ring widths are ``h_omega`` for ``grading_exponent = 0``
    and grow like ``dist ** grading_exponent`` otherwise.
    """
    if not (0.0 < r_omega < r_ext):
        raise ParameterError(f"need 0 < r_omega < r_ext, got {r_omega!r}, {r_ext!r}")
    if not (0.0 < h_omega < r_omega):
        raise ParameterError(f"need 0 < h_omega < r_omega, got {h_omega!r}")
    if grading_exponent < 0.0:
        raise ParameterError("grading exponent must be non-negative")

    m = max(1, math.ceil(r_omega / h_omega - 1e-9))
    radii = [k * r_omega / m for k in range(m + 1)]
    counts = [1] + [6 * k for k in range(1, m + 1)]
    h_in = r_omega / m

    ext = _exterior_radii(r_omega, r_ext, h_in, grading_exponent)
    prev_count = counts[-1]
    for k in range(1, len(ext)):
        width = ext[k] - ext[k - 1]
        n = max(min_ring_nodes, round(2.0 * math.pi * ext[k] / width))
        n = int(min(max(n, prev_count // 2), 2 * prev_count))
        radii.append(ext[k])
        counts.append(n)
        prev_count = n

    pts = [np.zeros((1, 2))]
    ring_index = [np.array([0])]
    start = 1
    for k in range(1, len(radii)):
        n = counts[k]
        theta = 2.0 * math.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        pts.append(radii[k] * np.column_stack([np.cos(theta), np.sin(theta)]))
        ring_index.append(np.arange(start, start + n))
        start += n
    points = np.concatenate(pts)

    tris, labels = [], []
    for k in range(len(radii) - 1):
        ia, ib = ring_index[k], ring_index[k + 1]
        if ia.size == 1:
            band = [(ia[0], ib[j], ib[(j + 1) % ib.size]) for j in range(ib.size)]
        else:
            band = _zip_rings(ia, points[ia], ib, points[ib])
        tris.extend(band)
        labels.extend([k < m] * len(band))
    tris = np.array(tris, dtype=np.int64)
    # orient counter-clockwise
    neg = _triangle_areas(points, tris) < 0.0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return TriMesh2D(points, tris, np.array(labels), float(r_ext), float(r_omega))


# }}}


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    n_nodes: int
    omega_measure: float
    shape_ratio: float


def mesh_stats(mesh: Mesh1D | TriMesh2D) -> MeshStats:
    """Largest element diameter, node count (tail DOF excluded), |Omega|, worst h_T / rho_T."""
    if mesh.dim == 1:
        return MeshStats(float(mesh.cell_measures.max()), mesh.n_nodes, mesh.omega_measure, 1.0)
    ratio = mesh.cell_diameters / mesh.cell_inner_diameters
    return MeshStats(
        float(mesh.cell_diameters.max()), mesh.n_nodes, mesh.omega_area, float(ratio.max())
    )


def radius_to_H(ext_radius: float, r_omega: float) -> float:
    return float(ext_radius - r_omega)


def H_to_radius(H: float, r_omega: float) -> float:
    return float(r_omega + H)


# {{{ text format


def write_mesh(mesh: Mesh1D | TriMesh2D, path: str | Path) -> None:
    """Write the POINTS / CELLS / LABELS text format (metadata in ``#`` lines)."""
    lines = []
    if mesh.dim == 1:
        a, b = mesh.omega
        lines.append(f"# dim 1 omega_a {a!r} omega_b {b!r}")
    else:
        lines.append(f"# dim 2 r_omega {mesh.r_omega!r} ext_radius {mesh.ext_radius!r}")
    pts = mesh.points
    lines.append(f"POINTS {pts.shape[0]}")
    lines.extend(" ".join(repr(float(c)) for c in row) for row in pts)
    lines.append(f"CELLS {mesh.cells.shape[0]}")
    lines.extend(" ".join(str(int(i)) for i in row) for row in mesh.cells)
    lines.append("LABELS")
    lines.extend("omega" if flag else "exterior" for flag in mesh.cell_in_omega)
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> Mesh1D | TriMesh2D:
    meta: dict[str, str] = {}
    body = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            tok = line[1:].split()
            meta.update(zip(tok[::2], tok[1::2]))
            continue
        body.append(line)
    try:
        head, n_pts = body[0].split()
        n_pts = int(n_pts)
        if head != "POINTS":
            raise MeshError("expected POINTS section")
        pts = np.array([[float(c) for c in ln.split()] for ln in body[1 : 1 + n_pts]])
        head, n_cells = body[1 + n_pts].split()
        n_cells = int(n_cells)
        if head != "CELLS":
            raise MeshError("expected CELLS section")
        off = 2 + n_pts
        cells = np.array([[int(c) for c in ln.split()] for ln in body[off : off + n_cells]])
        if body[off + n_cells] != "LABELS":
            raise MeshError("expected LABELS section")
        labels = np.array([tok == "omega" for tok in body[off + n_cells + 1 :]])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if labels.size != n_cells:
        raise MeshError("LABELS count does not match CELLS count")
    if int(meta.get("dim", pts.shape[1])) == 1:
        return Mesh1D(pts[:, 0], (float(meta["omega_a"]), float(meta["omega_b"])))
    return TriMesh2D(pts, cells, labels, float(meta["ext_radius"]), float(meta["r_omega"]))


# }}}
