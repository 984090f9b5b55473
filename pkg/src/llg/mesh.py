"""Periodic simplicial meshes on the unit square (or cube).

A :class:`Mesh` stores the *grid* vertices and cells exactly as they were
built or read, together with ``periodic_map`` which sends every grid vertex
to one of ``N`` logical nodes. Identified boundary copies share a logical
node, so the finite-element space lives on the logical nodes while element
geometry is always computed from the unwrapped grid coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from llg.assembly import P1Operators

VOLUME_TOL = 1e-12
SIGN_TOL = 1e-12


class MeshError(ValueError):
    """Raised for malformed, inverted or inconsistent meshes."""


def _resolve_periodic(n_vertices, pairs):
    """Follow ``slave -> master`` chains down to a root vertex per grid vertex."""
    parent = np.arange(n_vertices)
    for slave, master in pairs:
        if not (0 <= slave < n_vertices and 0 <= master < n_vertices):
            raise MeshError(f"dangling periodic pair ({slave}, {master}): vertex index out of range [0, {n_vertices})")
        if slave == master:
            raise MeshError(f"periodic pair identifies vertex {slave} with itself")
        parent[slave] = master
    root = parent.copy()
    for _ in range(n_vertices):
        nxt = parent[root]
        if np.array_equal(nxt, root):
            break
        root = nxt
    else:
        raise MeshError("periodic pairs contain a cycle")
    # compact root ids into 0..N-1 in order of first appearance of each root
    roots, periodic_map = np.unique(root, return_inverse=True)
    return periodic_map.astype(np.int64), roots.astype(np.int64)


def simplex_geometry(coords):
    """Signed volumes and barycentric gradients of a batch of simplices.

    Parameters
    ----------
    coords : ndarray, shape (n_cells, d+1, d)
        Vertex coordinates of each simplex.

    Returns
    -------
    volume : ndarray, shape (n_cells,)
        Signed volume; positive for counter-clockwise (2D) or
        right-handed (3D) vertex order.
    grads : ndarray, shape (n_cells, d+1, d)
        ``grads[c, a]`` is the constant gradient of the local hat function
        attached to vertex ``a`` of cell ``c``.
    """
    coords = np.asarray(coords, dtype=float)
    d = coords.shape[-1]
    edges = coords[:, 1:, :] - coords[:, :1, :]
    det = np.linalg.det(edges)
    volume = det / math.factorial(d)
    grads = np.empty_like(coords)
    ok = np.abs(det) > 0
    inv = np.zeros_like(edges)
    inv[ok] = np.linalg.inv(edges[ok])
    grads[:, 1:, :] = np.swapaxes(inv, 1, 2)
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return volume, grads


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh with periodic node identification.

    Attributes
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    vertices : ndarray, shape (n_grid, dim)
        Grid vertex coordinates, boundary copies included.
    cells : ndarray, shape (n_cells, dim+1)
        Grid vertex indices per simplex, positively oriented.
    periodic_map : ndarray, shape (n_grid,)
        Logical node index of every grid vertex.
    node_vertex : ndarray, shape (N,)
        Representative grid vertex of each logical node.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    periodic_map: np.ndarray
    node_vertex: np.ndarray
    volumes: np.ndarray = field(repr=False)
    grads: np.ndarray = field(repr=False)
    h: float = 0.0

    @classmethod
    def from_arrays(cls, vertices, cells, periodic_pairs=(), validate=True):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise MeshError(f"vertices must have shape (n, 2) or (n, 3), got {vertices.shape}")
        dim = vertices.shape[1]
        if cells.ndim != 2 or cells.shape[1] != dim + 1:
            raise MeshError(f"cells must have shape (n, {dim + 1}), got {cells.shape}")
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise MeshError("cell references a vertex index out of range")
        pairs = np.asarray(periodic_pairs, dtype=np.int64).reshape(-1, 2)
        periodic_map, roots = _resolve_periodic(len(vertices), pairs)
        volumes, grads = simplex_geometry(vertices[cells])
        diam = 0.0
        for a in range(dim + 1):
            for b in range(a + 1, dim + 1):
                e = vertices[cells[:, a]] - vertices[cells[:, b]]
                diam = max(diam, float(np.sqrt((e * e).sum(axis=1)).max(initial=0.0)))
        mesh = cls(dim, vertices, cells, periodic_map, roots, volumes, grads, diam)
        if validate:
            mesh.validate()
        return mesh

    @property
    def n_nodes(self) -> int:
        return len(self.node_vertex)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def node_coords(self) -> np.ndarray:
        """Representative coordinate of every logical node, shape (N, dim)."""
        return self.vertices[self.node_vertex]

    @property
    def cell_nodes(self) -> np.ndarray:
        """Cells expressed in logical node indices."""
        return self.periodic_map[self.cells]

    @property
    def domain_volume(self) -> float:
        """Volume of the axis-aligned bounding box, taken as |Omega|."""
        extent = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.prod(extent))

    def identify(self, index):
        """Map grid vertex indices to logical node indices."""
        return self.periodic_map[np.asarray(index)]

    def validate(self):
        bad = np.flatnonzero(self.volumes <= 0)
        if bad.size:
            c = int(bad[0])
            kind = "degenerate" if self.volumes[c] == 0 else "inverted"
            raise MeshError(
                f"{kind} element {c} (signed volume {self.volumes[c]:.3e}); {bad.size} cell(s) not positively oriented"
            )
        total = float(self.volumes.sum())
        if abs(total - self.domain_volume) > VOLUME_TOL:
            raise MeshError(f"cells cover volume {total!r}, expected {self.domain_volume!r}")
        nodes = self.cell_nodes
        for a in range(self.dim + 1):
            for b in range(a + 1, self.dim + 1):
                if np.any(nodes[:, a] == nodes[:, b]):
                    raise MeshError("a cell has two vertices identified with the same periodic node")


def generate_structured(n, diagonal="NE"):
    """Periodic right-triangle mesh of the unit square.

    The square is cut into ``n x n`` cells and every cell is split along the
    same diagonal: ``"NE"`` joins the lower-left and upper-right corners,
    ``"NW"`` the lower-right and upper-left ones.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    diagonal = diagonal.upper()
    if diagonal not in ("NE", "NW"):
        raise ValueError(f"diagonal must be 'NE' or 'NW', got {diagonal!r}")
    n = int(n)
    ticks = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(ticks, ticks, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    sw, se, ne, nw = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    if diagonal == "NE":
        lower = np.column_stack([sw, se, ne])
        upper = np.column_stack([sw, ne, nw])
    else:
        lower = np.column_stack([sw, se, nw])
        upper = np.column_stack([se, ne, nw])
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper

    pairs = []
    for t in range(n + 1):
        # right edge onto left edge, top edge onto bottom edge
        pairs.append((vid(n, t), vid(0, t)))
        if t < n:
            pairs.append((vid(t, n), vid(t, 0)))
    return Mesh.from_arrays(vertices, cells, pairs)


def _data_lines(text):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def load_mesh(path):
    """Read a mesh from the plain-text format written by :func:`write_mesh`.

    Layout: a header ``dim n_vertices n_cells n_periodic_pairs``, then one
    line per vertex coordinate, one line per cell (0-based vertex indices)
    and one ``slave master`` line per periodic pair. ``#`` starts a comment.
    """
    path = Path(path)
    lines = list(_data_lines(path.read_text()))
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    try:
        dim, nv, nc, npairs = (int(tok) for tok in lines[0].split())
    except ValueError as exc:
        raise MeshError(f"{path}: bad header {lines[0]!r}; expected 'dim n_vertices n_cells n_periodic_pairs'") from exc
    if dim not in (2, 3):
        raise MeshError(f"{path}: dim must be 2 or 3, got {dim}")
    expected = 1 + nv + nc + npairs
    if len(lines) != expected:
        raise MeshError(f"{path}: expected {expected} data lines, found {len(lines)}")

    def block(start, count, width, dtype, what):
        rows = []
        for offset, line in enumerate(lines[start : start + count]):
            toks = line.split()
            if len(toks) != width:
                raise MeshError(f"{path}: {what} {offset} has {len(toks)} entries, expected {width}")
            try:
                rows.append([dtype(tok) for tok in toks])
            except ValueError as exc:
                raise MeshError(f"{path}: cannot parse {what} {offset}: {line!r}") from exc
        return np.array(rows, dtype=dtype).reshape(count, width)

    vertices = block(1, nv, dim, float, "vertex")
    cells = block(1 + nv, nc, dim + 1, int, "cell")
    pairs = block(1 + nv + nc, npairs, 2, int, "periodic pair")
    try:
        return Mesh.from_arrays(vertices, cells, pairs)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc


def write_mesh(mesh, path):
    """Write ``mesh`` in the format read by :func:`load_mesh`."""
    pairs = [(v, int(mesh.node_vertex[mesh.periodic_map[v]])) for v in range(len(mesh.vertices))]
    pairs = [(s, m) for s, m in pairs if s != m]
    out = [f"{mesh.dim} {len(mesh.vertices)} {mesh.n_cells} {len(pairs)}"]
    out += [" ".join(repr(float(x)) for x in row) for row in mesh.vertices]
    out += [" ".join(str(int(x)) for x in row) for row in mesh.cells]
    out += [f"{s} {m}" for s, m in pairs]
    Path(path).write_text("\n".join(out) + "\n")


@dataclass(frozen=True)
class MeshQualityReport:
    """Observed constants of the admissibility conditions.

    ``c1_obs``/``c2_obs`` bound ``b_i / h^d`` from below/above, ``c3_obs``
    bounds ``|M_ij| / h^d``, ``c4_obs`` bounds ``h |grad phi_i|``.
    """

    c1_obs: float
    c2_obs: float
    c3_obs: float
    c4_obs: float
    stiffness_offdiag_violations: int
    max_angle: float
    h: float

    @property
    def ok(self) -> bool:
        return self.stiffness_offdiag_violations == 0

    def format(self) -> str:
        return "\n".join(
            [
                f"h                            = {self.h:.6e}",
                f"c1_obs  min b_i/h^d          = {self.c1_obs:.6e}",
                f"c2_obs  max b_i/h^d          = {self.c2_obs:.6e}",
                f"c3_obs  max |M_ij|/h^d       = {self.c3_obs:.6e}",
                f"c4_obs  h max|grad phi_i|    = {self.c4_obs:.6e}",
                f"max angle (deg)              = {math.degrees(self.max_angle):.4f}",
                f"off-diagonal stiffness > 0   = {self.stiffness_offdiag_violations}",
            ]
        )


def max_simplex_angle(mesh):
    """Largest interior angle (2D) or dihedral angle (3D), in radians.

    For any simplex the angle between the facets opposite vertices ``a`` and
    ``b`` satisfies ``cos = -grad_a . grad_b / (|grad_a| |grad_b|)``.
    """
    g = mesh.grads
    norms = np.linalg.norm(g, axis=2)
    worst = 0.0
    for a in range(mesh.dim + 1):
        for b in range(a + 1, mesh.dim + 1):
            cos = -(g[:, a] * g[:, b]).sum(axis=1) / (norms[:, a] * norms[:, b])
            worst = max(worst, float(np.arccos(np.clip(cos, -1.0, 1.0)).max()))
    return worst


def check_mesh(mesh, ops: P1Operators):
    """Measure the mesh admissibility constants on assembled operators."""
    if ops.N != mesh.n_nodes or ops.A.shape != (mesh.n_nodes, mesh.n_nodes):
        raise ValueError(f"operators have {ops.N} nodes but the mesh has {mesh.n_nodes}")
    hd = mesh.h**mesh.dim
    M = ops.M.tocoo()
    A = ops.A.tocoo()
    upper = A.row < A.col
    violations = int(np.count_nonzero(A.data[upper] > SIGN_TOL))
    grad_max = float(np.abs(mesh.grads).max())
    return MeshQualityReport(
        c1_obs=float(ops.b.min() / hd),
        c2_obs=float(ops.b.max() / hd),
        c3_obs=float(np.abs(M.data).max() / hd),
        c4_obs=mesh.h * grad_max,
        stiffness_offdiag_violations=violations,
        max_angle=max_simplex_angle(mesh),
        h=mesh.h,
    )
