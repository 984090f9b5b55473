import math

import numpy as np
import pytest

from llg import assemble, check_mesh, generate_structured, load_mesh, write_mesh
from llg.mesh import Mesh, MeshError

from conftest import jittered_delaunay_mesh


def edge_stiffness(p, q, r):
    """Off-diagonal stiffness contribution of triangle (p, q, r) to the pair (p, q).

    Integrates grad(phi_p) . grad(phi_q) directly: each hat gradient is the
    inward normal of the opposite edge divided by the altitude.
    """
    p, q, r = map(np.asarray, (p, q, r))
    area = 0.5 * abs((q - p)[0] * (r - p)[1] - (q - p)[1] * (r - p)[0])

    def hat_grad(a, b, c):
        e = c - b
        n = np.array([-e[1], e[0]])
        n = n if np.dot(n, a - b) > 0 else -n
        return n / np.dot(n, a - b)

    return area * np.dot(hat_grad(p, q, r), hat_grad(q, r, p))


def test_structured_counts():
    mesh = generate_structured(2, "NE")
    assert mesh.n_cells == 8
    assert len(mesh.vertices) == 9
    assert mesh.n_nodes == 4


def test_structured_h_and_area():
    mesh = generate_structured(4)
    assert mesh.h == pytest.approx(math.sqrt(2) / 4, abs=1e-15)
    assert abs(mesh.volumes.sum() - 1.0) < 1e-14
    assert np.all(mesh.volumes > 0)


@pytest.mark.parametrize("n", [1, 0, -3])
def test_structured_rejects_small_n(n):
    with pytest.raises(ValueError):
        generate_structured(n)


def test_structured_rejects_bad_diagonal():
    with pytest.raises(ValueError):
        generate_structured(4, "SW")


def test_periodic_map_identifies_boundary_copies():
    n = 5
    mesh = generate_structured(n)
    X = mesh.vertices
    for v, x in enumerate(X):
        # wrapping the coordinate into [0, 1) gives the representative node coordinate
        rep = mesh.node_coords[mesh.periodic_map[v]]
        assert np.allclose(np.mod(x, 1.0), rep)
    corners = [v for v, x in enumerate(X) if x[0] in (0.0, 1.0) and x[1] in (0.0, 1.0)]
    assert len({int(mesh.periodic_map[c]) for c in corners}) == 1
    assert mesh.n_nodes == n * n


def test_periodic_identification_idempotent():
    mesh = generate_structured(6, "NW")
    once = mesh.periodic_map
    twice = mesh.periodic_map[mesh.node_vertex[once]]
    assert np.array_equal(once, twice)


@pytest.mark.parametrize("diagonal", ["NE", "NW"])
@pytest.mark.parametrize("n", [4, 7, 32])
def test_structured_nonobtuse(n, diagonal):
    mesh = generate_structured(n, diagonal)
    report = check_mesh(mesh, assemble(mesh))
    assert report.stiffness_offdiag_violations == 0
    assert report.max_angle == pytest.approx(math.pi / 2, abs=1e-12)


def test_structured_edge_oracle_agrees_with_assembly():
    """Per-edge sums of the direct integral reproduce every assembled A_ij."""
    mesh = generate_structured(8, "NE")
    A = assemble(mesh).A.toarray()
    oracle = np.zeros_like(A)
    nodes = mesh.cell_nodes
    for cell, ln in zip(mesh.cells, nodes):
        P = mesh.vertices[cell]
        for a in range(3):
            for b in range(3):
                if a != b:
                    oracle[ln[a], ln[b]] += edge_stiffness(P[a], P[b], P[3 - a - b])
    off = ~np.eye(len(A), dtype=bool)
    assert np.allclose(A[off], oracle[off], atol=1e-13)
    assert np.all(oracle[off] <= 1e-12)


def obtuse_mesh():
    """Three triangles filling [0, 3] x [0, 1]; the bottom one is obtuse at (1.5, 1)."""
    verts = [(0.0, 0.0), (3.0, 0.0), (3.0, 1.0), (0.0, 1.0), (1.5, 1.0)]
    cells = [(0, 1, 4), (1, 2, 4), (0, 4, 3)]
    return Mesh.from_arrays(verts, cells)


def test_obtuse_mesh_flags_violation():
    mesh = obtuse_mesh()
    ops = assemble(mesh)
    report = check_mesh(mesh, ops)
    assert report.stiffness_offdiag_violations >= 1
    assert report.max_angle > math.pi / 2
    # the violating pair is the bottom edge, opposite the obtuse angle
    direct = edge_stiffness(np.array([0.0, 0.0]), np.array([3.0, 0.0]), np.array([1.5, 1.0]))
    assert direct > 0
    assert ops.A[0, 1] == pytest.approx(direct, abs=1e-14)


def test_level_independent_constants():
    reports = [check_mesh(m, assemble(m)) for m in (generate_structured(n) for n in (8, 16, 32))]
    for attr in ("c1_obs", "c2_obs", "c4_obs"):
        vals = np.array([getattr(r, attr) for r in reports])
        assert np.all(np.isfinite(vals)) and np.all(vals > 0)
        assert (vals.max() - vals.min()) / vals.min() < 0.01
    # frozen from hand computation: b_i = 1/n^2, h = sqrt(2)/n, max |d phi/dx| = n
    assert reports[0].c1_obs == pytest.approx(0.5, rel=1e-14)
    assert reports[0].c4_obs == pytest.approx(math.sqrt(2), rel=1e-14)


def test_check_mesh_dimension_mismatch():
    with pytest.raises(ValueError):
        check_mesh(generate_structured(4), assemble(generate_structured(5)))


def test_round_trip_structured(tmp_path):
    mesh = generate_structured(2, "NE")
    path = tmp_path / "n2.msh"
    write_mesh(mesh, path)
    loaded = load_mesh(path)
    assert loaded.n_nodes == mesh.n_nodes
    assert np.array_equal(loaded.vertices, mesh.vertices)
    assert np.array_equal(loaded.cells, mesh.cells)
    assert np.array_equal(loaded.periodic_map, mesh.periodic_map)
    assert loaded.h == mesh.h


def test_load_comments_and_whitespace(tmp_path):
    text = """
    # unit square, two triangles, no periodicity
    2 4 2 0
    0 0
    1 0   # lower right
    1 1
    0 1
    0 1 2
    0 2 3
    """
    path = tmp_path / "patch.msh"
    path.write_text(text)
    mesh = load_mesh(path)
    assert mesh.n_nodes == 4 and mesh.n_cells == 2


def test_load_inverted_element(tmp_path):
    path = tmp_path / "bad.msh"
    path.write_text("2 4 2 0\n0 0\n1 0\n1 1\n0 1\n0 2 1\n0 2 3\n")
    with pytest.raises(MeshError, match="inverted"):
        load_mesh(path)


def test_load_dangling_pair(tmp_path):
    path = tmp_path / "bad.msh"
    path.write_text("2 4 2 1\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n1 7\n")
    with pytest.raises(MeshError, match="dangling"):
        load_mesh(path)


@pytest.mark.parametrize(
    "text",
    ["", "2 4 2\n", "2 1 0 0\n0 0 0\n", "2 4 2 0\n0 0\n1 x\n1 1\n0 1\n0 1 2\n0 2 3\n"],
)
def test_load_parse_errors(tmp_path, text):
    path = tmp_path / "bad.msh"
    path.write_text(text)
    with pytest.raises(MeshError):
        load_mesh(path)


def test_uncovered_domain_rejected():
    # the second triangle is missing, so only half the bounding box is covered
    with pytest.raises(MeshError, match="cover"):
        Mesh.from_arrays([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1, 2)])


def test_jittered_family_passes_check():
    for n in (8, 16):
        mesh = jittered_delaunay_mesh(n, seed=n)
        report = check_mesh(mesh, assemble(mesh))
        assert report.ok
        assert report.max_angle > math.pi / 2 - 0.5  # irregular, not all right angles
        assert abs(mesh.volumes.sum() - 1.0) < 1e-12


def test_tetrahedral_mesh_assembles():
    # unit cube split into six tetrahedra around the main diagonal
    V = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float)
    paths = [(1, 3), (1, 5), (2, 3), (2, 6), (4, 5), (4, 6)]
    cells = []
    for a, b in paths:
        c = [0, a, a | b, 7]
        vol = np.linalg.det(V[c[1:]] - V[c[0]])
        cells.append(c if vol > 0 else [c[1], c[0], c[2], c[3]])
    mesh = Mesh.from_arrays(V, cells)
    ops = assemble(mesh)
    assert ops.b.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(ops.A @ np.ones(8), 0.0, atol=1e-14)
    report = check_mesh(mesh, ops)
    assert np.isfinite(report.max_angle)
    assert report.max_angle == pytest.approx(math.pi / 2, abs=1e-12)
