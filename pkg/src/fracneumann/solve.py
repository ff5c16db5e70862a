"""Stationary and backward-Euler solves, and pointwise evaluation of discrete solutions."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg
from scipy.spatial import cKDTree

from .assembly import LinearSystem, SourceSpec, _element_rule, _scatter, assemble_mass, assemble_stiffness
from .params import FractionalParams, ParameterError


class SolverError(RuntimeError):
    """Raised when the discrete system cannot be solved reliably."""


class ConditioningError(SolverError):
    def __init__(self, message: str, pivot: Optional[int] = None):
        super().__init__(message)
        self.pivot = pivot


@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    """Nodal coefficients on the mesh followed by the constant value outside it."""

    coefficients: np.ndarray
    mesh: object
    params: FractionalParams
    time: Optional[float] = None

    def __post_init__(self) -> None:
        c = np.array(self.coefficients, dtype=np.float64)
        if c.shape != (self.mesh.n_nodes + 1,):
            raise ParameterError("coefficient vector must have one entry per node plus the tail")
        if not np.all(np.isfinite(c)):
            raise SolverError("non-finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def tail_value(self) -> float:
        return float(self.coefficients[-1])

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)


@dataclass(frozen=True)
class HeatConfig:
    dt: float
    t_final: float
    u0: SourceSpec
    stride: int = 1

    def __post_init__(self) -> None:
        if not (self.dt > 0.0):
            raise ParameterError(f"time step must be positive, got {self.dt!r}")
        if not (self.t_final > 0.0):
            raise ParameterError(f"final time must be positive, got {self.t_final!r}")
        if self.dt > self.t_final:
            raise ParameterError("time step exceeds the final time")
        if self.stride < 1:
            raise ParameterError("stride must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


def _factor(A: np.ndarray):
    try:
        return linalg.cho_factor(A, lower=True, overwrite_a=True, check_finite=False)
    except linalg.LinAlgError as exc:
        # LAPACK reports the order of the leading minor that is not positive definite
        match = re.match(r"\s*(\d+)", str(exc))
        pivot = int(match.group(1)) - 1 if match else None
        raise ConditioningError(f"Cholesky factorization failed at pivot {pivot}", pivot) from exc


def _conjugate_gradient(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    diag = np.diag(A).copy()
    precond = LinearOperator(A.shape, matvec=lambda v: v / diag)
    x, info = cg(A, b, rtol=1e-10, atol=0.0, M=precond, maxiter=20 * A.shape[0])
    if info != 0:
        raise SolverError(f"conjugate gradient did not converge (info={info})")
    return x


def solve_stationary(system: LinearSystem, *, method: str = "auto") -> DiscreteSolution:
    """Solve (K + alpha M) U = F + G."""
    alpha = system.params.alpha
    if not alpha > 0.0:
        raise ParameterError("alpha must be positive; the alpha = 0 problem is only defined up to constants")
    rhs = system.load
    if method == "auto":
        method = "cg" if system.size > 20_000 else "cholesky"
    if method not in ("cholesky", "cg"):
        raise ParameterError(f"unknown solver {method!r}")
    A = system.stiffness + alpha * system.mass
    if method == "cholesky":
        U = linalg.cho_solve(_factor(A), rhs, check_finite=False)
    else:
        U = _conjugate_gradient(A, rhs)
    del A
    res = np.linalg.norm(system.stiffness @ U + alpha * (system.mass @ U) - rhs)
    scale = np.linalg.norm(rhs)
    if scale > 0.0 and res > 1e-10 * scale:
        raise ConditioningError(f"residual {res / scale:.3e} exceeds the relative tolerance 1e-10")
    return DiscreteSolution(U, system.mesh, system.params)


def project_omega(mesh, u0: SourceSpec, mass: Optional[np.ndarray] = None) -> np.ndarray:
    """L2(Omega) projection onto the span of the Omega-supported hats; other entries zero."""
    N = mesh.n_nodes
    M = assemble_mass(mesh) if mass is None else mass
    om = np.flatnonzero(mesh.cell_in_omega)
    if u0.kind == "grid":
        rhs = M[:, :N] @ np.asarray(u0.grid, dtype=np.float64)
    else:
        order = u0.order or (8 if mesh.dim == 1 else 6)
        x, w, basis = _element_rule(mesh, om, order)
        vals = u0.evaluate(x.reshape(-1) if mesh.dim == 1 else x.reshape(-1, 2)).reshape(w.shape)
        rhs = _scatter(N, mesh.cells[om], (vals * w) @ basis)
    active = np.unique(mesh.cells[om])
    U = np.zeros(N + 1)
    U[active] = linalg.solve(M[np.ix_(active, active)], rhs[active], assume_a="pos")
    return U


def _omega_integral(M: np.ndarray, U: np.ndarray) -> float:
    return float(np.sum(M @ U))


def solve_heat(
    mesh, params: FractionalParams, cfg: HeatConfig, *, stiffness: Optional[np.ndarray] = None, threads: int = 1
) -> list[DiscreteSolution]:
    """Backward Euler for u_t + (-Delta)^s u = 0 with homogeneous Neumann data.

    Returns the initial state and every ``stride``-th step.
    """
    K = assemble_stiffness(mesh, params, threads=threads) if stiffness is None else stiffness
    M = assemble_mass(mesh)
    U = project_omega(mesh, cfg.u0, M)
    step_params = params.with_alpha(1.0 / cfg.dt)
    factor = _factor(M / cfg.dt + K)
    out = [DiscreteSolution(U, mesh, step_params, 0.0)]
    mass0 = _omega_integral(M, U)
    for n in range(1, cfg.n_steps + 1):
        U = linalg.cho_solve(factor, M @ U / cfg.dt, check_finite=False)
        mass = _omega_integral(M, U)
        if abs(mass - mass0) > 1e-10 * max(abs(mass0), 1e-300):
            raise SolverError(f"mass drift {abs(mass - mass0):.3e} at step {n}")
        if n % cfg.stride == 0 or n == cfg.n_steps:
            out.append(DiscreteSolution(U, mesh, step_params, n * cfg.dt))
    return out


# ------------------------------------------------------------------ evaluation


def _locate_2d(mesh, pts: np.ndarray):
    """Containing triangle and barycentric coordinates for each point (-1 if outside)."""
    tri = mesh.points[mesh.triangles]
    cache = getattr(mesh, "_locator", None)
    if cache is None:
        tree = cKDTree(tri.mean(axis=1))
        e1 = tri[:, 1] - tri[:, 0]
        e2 = tri[:, 2] - tri[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        cache = (tree, det)
        object.__setattr__(mesh, "_locator", cache)
    tree, det = cache
    found = np.full(pts.shape[0], -1, dtype=np.int64)
    bary = np.zeros((pts.shape[0], 3))
    k = min(16, tri.shape[0])
    _, cand = tree.query(pts, k=k)
    cand = cand.reshape(pts.shape[0], k)
    for j in range(k):
        todo = found < 0
        if not np.any(todo):
            break
        c = cand[todo, j]
        d = pts[todo] - tri[c, 0]
        e1 = tri[c, 1] - tri[c, 0]
        e2 = tri[c, 2] - tri[c, 0]
        l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det[c]
        l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det[c]
        l0 = 1.0 - l1 - l2
        tol = -1e-12
        ok = (l0 >= tol) & (l1 >= tol) & (l2 >= tol)
        idx = np.flatnonzero(todo)[ok]
        found[idx] = c[ok]
        bary[idx] = np.column_stack([l0, l1, l2])[ok]
    # fall back to a full scan for points near large exterior triangles
    for i in np.flatnonzero(found < 0):
        d = pts[i] - tri[:, 0]
        e1 = tri[:, 1] - tri[:, 0]
        e2 = tri[:, 2] - tri[:, 0]
        l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
        l0 = 1.0 - l1 - l2
        ok = np.flatnonzero((l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12))
        if ok.size:
            found[i] = ok[0]
            bary[i] = [l0[ok[0]], l1[ok[0]], l2[ok[0]]]
    return found, bary


def evaluate(u: DiscreteSolution, x) -> np.ndarray:
    """Value of the discrete solution at points x (scalar, (n,) in 1D or (n, 2) in 2D)."""
    mesh = u.mesh
    c = u.coefficients
    if mesh.dim == 1:
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 0
        xs = np.atleast_1d(x)
        vals = np.interp(xs, mesh.nodes, c[:-1])
        lo, hi = mesh.lambda_bounds
        vals = np.where((xs < lo) | (xs > hi), c[-1], vals)
        return float(vals[0]) if scalar else vals
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    found, bary = _locate_2d(mesh, pts)
    vals = np.full(pts.shape[0], c[-1])
    inside = found >= 0
    vals[inside] = np.sum(c[mesh.triangles[found[inside]]] * bary[inside], axis=1)
    return float(vals[0]) if single else vals
