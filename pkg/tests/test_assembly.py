import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracneumann import (
    AdmissibilityError,
    FluxSpec,
    FractionalParams,
    ParameterError,
    SourceSpec,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    assemble_system,
    build_disk_mesh_2d,
    build_mesh_1d,
)
from fracneumann.assembly import manufactured_flux_1d, read_dump
from fracneumann.mesh import Mesh1D
from fracneumann.params import beta, dirichlet_constant, normalization_constant
from oracles import (
    boundary_moments_nested_oracle,
    energy_oracle_1d,
    manufactured_flux_oracle,
    ray_distance,
    stiffness_oracle_1d,
)

OMEGA = (-1.0, 1.0)
SMALL_NODES = np.array([-1.6, -1.0, -0.55, -0.1, 0.3, 1.0, 1.25, 1.8])


@pytest.fixture(scope="module")
def small_mesh():
    return Mesh1D(SMALL_NODES, OMEGA)


@pytest.fixture(scope="module")
def disk_mesh():
    return build_disk_mesh_2d(1.0, 2.0, 0.35, 1.0)


def check_matrix_invariants(K):
    scale = np.abs(K).max()
    assert np.max(np.abs(K - K.T)) <= 1e-12 * scale
    assert np.max(np.abs(K @ np.ones(K.shape[0]))) <= 1e-8 * scale
    eig = np.linalg.eigvalsh(K)
    assert eig[0] >= -1e-8 * eig[-1]


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_stiffness_invariants_1d(s):
    mesh = build_mesh_1d(OMEGA, 0.5, 0.02)
    assert mesh.n_nodes <= 200
    check_matrix_invariants(assemble_stiffness(mesh, FractionalParams(1, s)))


@pytest.mark.parametrize("s", [0.25, 0.75])
def test_stiffness_invariants_2d(disk_mesh, s):
    assert disk_mesh.n_nodes <= 200
    check_matrix_invariants(assemble_stiffness(disk_mesh, FractionalParams(2, s)))


@pytest.mark.parametrize("s", [0.25, 0.5, 0.8])
def test_stiffness_matches_pairwise_oracle(small_mesh, s):
    K = assemble_stiffness(small_mesh, FractionalParams(1, s))
    ref = stiffness_oracle_1d(small_mesh.nodes, OMEGA, s)
    nz = np.abs(ref) > 1e-14 * np.abs(ref).max()
    assert np.max(np.abs(K[nz] - ref[nz]) / np.abs(ref[nz])) <= 1e-6
    assert np.max(np.abs(K[~nz])) <= 1e-12 * np.abs(ref).max()


@pytest.mark.parametrize("s", [0.25, 0.8])
def test_galerkin_consistency(small_mesh, s):
    K = assemble_stiffness(small_mesh, FractionalParams(1, s))
    rng = np.random.default_rng(int(100 * s))
    for _ in range(2):
        V = rng.normal(size=small_mesh.n_nodes + 1)
        assert V @ K @ V == pytest.approx(energy_oracle_1d(small_mesh.nodes, OMEGA, V, s), rel=1e-6)


def test_tail_column_vanishes_for_exterior_basis():
    mesh = build_mesh_1d(OMEGA, 1.0, 0.25)
    K = assemble_stiffness(mesh, FractionalParams(1, 0.4))
    region = mesh.node_region
    # nodes in the open exterior that do not touch the closed Omega
    away = np.flatnonzero(region == 2)
    assert away.size > 0
    assert np.all(K[away, -1] == 0.0)
    inside = np.flatnonzero(region != 2)
    col = K[inside, -1]
    assert np.all(col != 0.0) and (np.all(col > 0.0) or np.all(col < 0.0))


def test_stiffness_independent_of_thread_count():
    mesh = build_mesh_1d(OMEGA, 0.6, 0.01)
    params = FractionalParams(1, 0.35)
    K1 = assemble_stiffness(mesh, params, threads=1, chunk=16)
    K3 = assemble_stiffness(mesh, params, threads=3, chunk=16)
    assert np.array_equal(K1, K3)


def test_stiffness_rejects_dimension_mismatch(disk_mesh):
    with pytest.raises(ParameterError):
        assemble_stiffness(disk_mesh, FractionalParams(1, 0.5))


def test_mass_matrix_1d():
    mesh = build_mesh_1d(OMEGA, 0.5, 0.25)
    M = assemble_mass(mesh)
    i = int(np.flatnonzero(np.isclose(mesh.nodes, 0.0))[0])
    assert M[i, i + 1] == pytest.approx(0.25 / 6, rel=1e-15)
    assert M[i, i] == pytest.approx(2 * 0.25 / 3, rel=1e-15)
    assert M.sum() == pytest.approx(2.0, rel=1e-14)
    ext = np.flatnonzero(mesh.node_region == 2)
    assert np.all(M[ext] == 0.0) and np.all(M[:, ext] == 0.0)
    assert np.all(M[-1] == 0.0)
    assert np.array_equal(M, M.T)


def test_mass_matrix_2d(disk_mesh):
    M = assemble_mass(disk_mesh)
    assert M.sum() == pytest.approx(disk_mesh.omega_area, rel=1e-13)
    ext = np.flatnonzero(disk_mesh.node_region == 2)
    assert np.all(M[ext] == 0.0)
    t = int(np.flatnonzero(disk_mesh.cell_in_omega)[0])
    area = abs(disk_mesh.cell_measures[t])
    local = M[np.ix_(disk_mesh.cells[t], disk_mesh.cells[t])]
    assert np.all(np.diag(local) >= area / 6 - 1e-15)


@pytest.mark.parametrize("dim", [1, 2])
def test_constant_source_load(dim, disk_mesh):
    mesh = build_mesh_1d(OMEGA, 0.5, 0.1) if dim == 1 else disk_mesh
    params = FractionalParams(dim, 0.4, alpha=2.5)
    load = assemble_load(mesh, SourceSpec.constant(2.5), FluxSpec.zero(), params)
    M = assemble_mass(mesh)
    assert np.allclose(load, 2.5 * M @ np.ones(mesh.n_nodes + 1), rtol=0, atol=1e-14)


def test_load_matches_oracle_on_small_mesh(small_mesh):
    s = 0.3
    params = FractionalParams(1, s)
    f = lambda x: np.cos(x) + x**2
    load = assemble_load(small_mesh, SourceSpec.from_callable(f), FluxSpec.power_law(1.0, 1.0), params)
    nodes = small_mesh.nodes
    N = nodes.size
    ref = np.zeros(N + 1)
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        inside = OMEGA[0] <= lo and hi <= OMEGA[1]
        func = f if inside else (lambda x: -abs(x) ** -2.0)
        ia, ib = int(np.flatnonzero(nodes == lo)[0]), int(np.flatnonzero(nodes == hi)[0])
        ref[ia] += integrate.quad(lambda x: func(x) * (hi - x) / (hi - lo), lo, hi, epsrel=1e-13)[0]
        ref[ib] += integrate.quad(lambda x: func(x) * (x - lo) / (hi - lo), lo, hi, epsrel=1e-13)[0]
    ref[N] = -(1 / 1.6 + 1 / 1.8)
    assert np.allclose(load, ref, rtol=1e-6, atol=0)


def manufactured_entry_oracle(nodes, i, s):
    """G_i from the flux oracle; elements touching Omega use the nested boundary-moment route."""
    total = 0.0
    for lo, hi, own in ((nodes[i - 1], nodes[i], 1), (nodes[i], nodes[i + 1], 0)):
        if -1.0 <= lo and hi <= 1.0:
            continue
        if lo == 1.0 or hi == -1.0:
            m_hat, m_far = boundary_moments_nested_oracle(hi - lo, s)
            at_omega = (lo == 1.0) == (own == 0)
            total += m_hat if at_omega else m_far
            continue
        phi = (lambda x: (x - lo) / (hi - lo)) if own else (lambda x: (hi - x) / (hi - lo))
        total += integrate.quad(lambda x: manufactured_flux_oracle(x, s) * phi(x), lo, hi, epsrel=1e-11)[0]
    return total


def test_manufactured_boundary_entries_match_oracle():
    s, h = 0.3, 0.01
    mesh = build_mesh_1d(OMEGA, 0.05, h)
    params = FractionalParams(1, s)
    load = assemble_load(mesh, SourceSpec.constant(0.0), FluxSpec.manufactured(s), params)
    for node in (1.0, 1.01, 1.02, -1.0, -1.01, 1.04):
        i = int(np.argmin(np.abs(mesh.nodes - node)))
        assert load[i] == pytest.approx(manufactured_entry_oracle(mesh.nodes, i, s), rel=1e-6)


def test_manufactured_flux_requires_admissible_order():
    mesh = build_mesh_1d(OMEGA, 0.5, 0.1)
    with pytest.raises(AdmissibilityError):
        assemble_load(mesh, SourceSpec.constant(1.0), FluxSpec.manufactured(0.7), FractionalParams(1, 0.7))
    with pytest.raises(AdmissibilityError):
        assemble_load(mesh, SourceSpec.constant(1.0), FluxSpec.manufactured(0.3), FractionalParams(1, 0.4))
    other = build_mesh_1d((0.0, 2.0), 0.5, 0.1)
    with pytest.raises(AdmissibilityError):
        assemble_load(other, SourceSpec.constant(1.0), FluxSpec.manufactured(0.3), FractionalParams(1, 0.3))


def test_tail_entry_2d():
    R = 8.0
    mesh = build_disk_mesh_2d(1.0, R, 0.25, 1.0)
    params = FractionalParams(2, 0.5)
    load = assemble_load(mesh, SourceSpec.constant(2.0), FluxSpec.power_law(1.0, 1.0), params)
    polygon = mesh.points[mesh.outer_boundary]
    corners = sorted(math.atan2(v[1], v[0]) % (2 * math.pi) for v in polygon)
    # int of -|x|^{-3} outside the polygon = -int 1 / rho(theta) dtheta
    exact = -integrate.quad(
        lambda th: 1 / ray_distance(np.zeros(2), th, polygon), 0, 2 * math.pi, points=corners, limit=400, epsrel=1e-12
    )[0]
    assert load[-1] == pytest.approx(exact, rel=1e-9)
    assert load[-1] == pytest.approx(-2 * math.pi / R, rel=2e-3)
    assert load[-1] < -2 * math.pi / R


def test_dump_round_trip(tmp_path):
    mesh = build_mesh_1d(OMEGA, 0.5, 0.25)
    system = assemble_system(mesh, FractionalParams(1, 0.3), SourceSpec.constant(1.0), FluxSpec.power_law(1.0, 1.0))
    path = tmp_path / "system.bin"
    system.dump(path)
    raw = path.read_bytes()
    n = system.size
    assert len(raw) == 16 + 8 * (2 * n * n + n)
    K, M, load = read_dump(path)
    assert np.array_equal(K, system.stiffness)
    assert np.array_equal(M, system.mass)
    assert np.array_equal(load, system.load)
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_dump(path)


@given(st.floats(1.0 + 1e-3, 50.0), st.floats(0.05, 0.95))
@settings(max_examples=30, deadline=None)
def test_manufactured_flux_negative_and_accurate(x, s):
    g = manufactured_flux_1d(x, s)
    assert g < 0
    assert g == pytest.approx(manufactured_flux_oracle(x, s), rel=1e-9)
    assert manufactured_flux_1d(-x, s) == g


def test_manufactured_flux_far_field_limit():
    for s in (0.2, 0.7):
        limit = -normalization_constant(1, s) * dirichlet_constant(s) * math.sqrt(math.pi) * math.gamma(s + 1) / math.gamma(s + 1.5)
        assert manufactured_flux_1d(1e5, s) * 1e5 ** (1 + 2 * s) == pytest.approx(limit, rel=1e-4)


def test_manufactured_flux_boundary_growth():
    # g(1 + delta) delta^s -> -C c_s 2^s B(1 + s, s) with an O(delta^s) remainder
    for s in (0.3, 0.6):
        limit = -normalization_constant(1, s) * dirichlet_constant(s) * 2**s * beta(1 + s, s)
        for delta in (1e-6, 1e-8):
            ratio = manufactured_flux_1d(1.0 + delta, s) * delta**s / limit
            assert abs(ratio - 1.0) <= 2 * delta**s


def test_manufactured_flux_domain():
    with pytest.raises(ParameterError):
        manufactured_flux_1d(1.0, 0.3)
    with pytest.raises(ParameterError):
        manufactured_flux_1d(np.array([2.0, 0.5]), 0.3)
