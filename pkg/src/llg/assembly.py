"""P1 mass, stiffness and lumped-mass operators on the logical node set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from llg.mesh import Mesh


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class P1Operators:
    """Assembled operators. ``M`` and ``A`` act componentwise on (N, 3) fields."""

    M: sp.csr_matrix
    A: sp.csr_matrix
    b: np.ndarray
    h: float

    @property
    def N(self) -> int:
        return len(self.b)


def local_matrices(mesh: Mesh):
    """Element mass and stiffness matrices, each of shape (n_cells, d+1, d+1).

    Mass uses the exact barycentric moment ``vol (1 + delta_ab) / ((d+1)(d+2))``.
    """
    d = mesh.dim
    vol = mesh.volumes
    nloc = d + 1
    ref = (np.ones((nloc, nloc)) + np.eye(nloc)) / ((d + 1) * (d + 2))
    mass = vol[:, None, None] * ref[None]
    stiff = vol[:, None, None] * np.einsum("cak,cbk->cab", mesh.grads, mesh.grads)
    return mass, stiff


def assemble(mesh: Mesh) -> P1Operators:
    """Assemble ``M``, ``A`` and ``b = integral of phi_i`` for ``mesh``.

    Contributions of grid vertices that share a periodic node are summed.
    """
    tiny = 1e-14 * mesh.h**mesh.dim
    degenerate = np.flatnonzero(np.abs(mesh.volumes) <= tiny)
    if degenerate.size:
        raise AssemblyError(f"degenerate element {int(degenerate[0])} with volume {mesh.volumes[degenerate[0]]:.3e}")
    N = mesh.n_nodes
    nodes = mesh.cell_nodes
    nloc = mesh.dim + 1
    mass, stiff = local_matrices(mesh)
    rows = np.repeat(nodes, nloc, axis=1).ravel()
    cols = np.tile(nodes, (1, nloc)).ravel()
    # COO -> CSR sums duplicates in a fixed order, so assembly is deterministic.
    M = sp.coo_matrix((mass.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    A = sp.coo_matrix((stiff.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    M.sum_duplicates()
    A.sum_duplicates()
    b = np.bincount(nodes.ravel(), weights=np.repeat(mesh.volumes / nloc, nloc), minlength=N)
    if np.any(b <= 0):
        raise AssemblyError("lumped mass has a nonpositive entry")
    return P1Operators(M=M, A=A, b=b, h=mesh.h)


def interpolate(f, mesh: Mesh) -> np.ndarray:
    """Nodal interpolant: row ``i`` is ``f(x_i)`` for the node's representative point.

    ``f`` receives an (N, dim) array of points and returns (N, 3) values.
    """
    values = np.asarray(f(mesh.node_coords), dtype=float)
    if values.ndim == 1:
        values = np.broadcast_to(values, (mesh.n_nodes, values.shape[0]))
    return np.array(values, dtype=float)


def apply(op, field: np.ndarray) -> np.ndarray:
    """Apply an N x N operator to each Cartesian component of an (N, 3) field."""
    field = np.asarray(field, dtype=float)
    if field.ndim != 2 or field.shape[0] != op.shape[1]:
        raise ValueError(f"field of shape {field.shape} does not match operator of shape {op.shape}")
    return np.asarray(op @ field)


def l2_norm_sq(field, ops: P1Operators) -> float:
    """Squared L2 norm of the P1 interpolant of ``field`` (consistent mass)."""
    return float(np.einsum("ic,ic->", field, apply(ops.M, field)))


def dirichlet_sq(field, ops: P1Operators) -> float:
    """``integral |grad w|^2`` for the P1 interpolant of ``field``."""
    return float(np.einsum("ic,ic->", field, apply(ops.A, field)))


def elementwise_dirichlet_sq(field, mesh: Mesh) -> float:
    """``integral |grad w|^2`` summed cell by cell from constant gradients."""
    w = np.asarray(field)[mesh.cell_nodes]  # (cells, d+1, 3)
    grad = np.einsum("cak,cai->cki", mesh.grads, w)  # (cells, d, 3)
    return float((mesh.volumes * (grad**2).sum(axis=(1, 2))).sum())


def _duffy_triangle_rule(order):
    """Collapsed Gauss rule on the reference triangle, exact to ``2*order - 2``."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    s = u.ravel()
    t = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel()
    bary = np.column_stack([1.0 - s - t, s, t])
    return bary, weights * 2.0  # weights sum to 1 (fraction of cell area)


def lp_norm_p(field, mesh: Mesh, p: float, ops: P1Operators | None = None, order: int = 12) -> float:
    """``integral |w|^p`` of the P1 interpolant.

    Exact for ``p = 2``; otherwise a 2D collapsed Gauss rule is used.
    """
    field = np.asarray(field, dtype=float)
    if p == 2 and ops is not None:
        return l2_norm_sq(field, ops)
    if mesh.dim != 2:
        raise NotImplementedError("L^p norms for p != 2 are only available in 2D")
    bary, weights = _duffy_triangle_rule(order)
    w = field[mesh.cell_nodes]  # (cells, 3, 3comp)
    at_q = np.einsum("qa,cai->cqi", bary, w)
    mag = np.linalg.norm(at_q, axis=2) ** p
    return float((mesh.volumes * (mag @ weights)).sum())


def diagnostics_norm_equivalence(field, p, ops: P1Operators, mesh: Mesh):
    """Empirical norm-equivalence and inverse-inequality ratios.

    Returns
    -------
    nodal_ratio : float
        ``h^d sum_i |w_i|^p / ||w||_{L^p}^p``.
    inverse_ratio : float
        ``h^2 ||grad w||^2 / ||w||^2``.
    """
    field = np.asarray(field, dtype=float)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if field.shape != (ops.N, 3):
        raise ValueError(f"field shape {field.shape} does not match {ops.N} nodes")
    if not np.any(field):
        raise ValueError("norm ratios are undefined for the zero field")
    hd = mesh.h**mesh.dim
    nodal = hd * float((np.linalg.norm(field, axis=1) ** p).sum())
    ratio_p = nodal / lp_norm_p(field, mesh, p, ops)
    ratio_inv = mesh.h**2 * dirichlet_sq(field, ops) / l2_norm_sq(field, ops)
    return ratio_p, ratio_inv

