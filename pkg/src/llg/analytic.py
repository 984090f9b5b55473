"""Exact precessing solution on the periodic unit square and error norms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from llg.assembly import P1Operators, apply
from llg.mesh import Mesh


@dataclass(frozen=True)
class ExactParams:
    """Tilt ``beta``, wavenumber ``kappa`` and damping ``alpha`` of the exact solution."""

    beta: float = math.pi / 24
    kappa: float = 2 * math.pi
    alpha: float = 1.0

    def __post_init__(self):
        if not 0 < self.beta < math.pi / 2:
            raise ValueError(f"beta must lie in (0, pi/2), got {self.beta}")
        if self.alpha == 0:
            raise ValueError("alpha must be nonzero: the phase g(t) divides by alpha")

    @property
    def periodic(self) -> bool:
        ratio = self.kappa / (2 * math.pi)
        return abs(ratio - round(ratio)) < 1e-12


def envelope(t, p: ExactParams):
    """Return ``(d(t), g(t))``."""
    t = np.asarray(t, dtype=float)
    a = 2 * p.kappa**2 * p.alpha
    growth = np.exp(a * t)
    cb, sb = math.cos(p.beta), math.sin(p.beta)
    d = np.sqrt(sb**2 + growth**2 * cb**2)
    g = np.log((d + growth * cb) / (1 + cb)) / p.alpha
    return d, g


def exact(x, t, p: ExactParams = ExactParams()):
    """Exact magnetization at points ``x`` (shape (..., 2)) and time ``t``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    x = np.asarray(x, dtype=float)
    d, g = envelope(t, p)
    phase = p.kappa * (x[..., 0] + x[..., 1]) + g
    sb = math.sin(p.beta)
    out = np.empty(x.shape[:-1] + (3,))
    out[..., 0] = sb * np.cos(phase) / d
    out[..., 1] = sb * np.sin(phase) / d
    out[..., 2] = np.exp(2 * p.kappa**2 * p.alpha * np.asarray(t, dtype=float)) * math.cos(p.beta) / d
    return out


@dataclass(frozen=True)
class ErrorReport:
    linf_nodal: float
    l2_quadrature: float
    l2_nodal_weighted: float
    l2_nodal_unweighted: float


def error_norms(m_h, t, mesh: Mesh, ops: P1Operators, p: ExactParams = ExactParams()) -> ErrorReport:
    """Error of nodal values ``m_h`` against the exact solution at time ``t``.

    ``l2_quadrature`` integrates the P1 difference exactly through ``M``.
    """
    m_h = np.asarray(m_h, dtype=float)
    if m_h.shape != (ops.N, 3) or ops.N != mesh.n_nodes:
        raise ValueError(f"nodal field of shape {m_h.shape} does not fit a mesh with {mesh.n_nodes} nodes")
    e = exact(mesh.node_coords, t, p) - m_h
    mag2 = np.einsum("ic,ic->i", e, e)
    l2_q = float(np.einsum("ic,ic->", e, apply(ops.M, e)))
    return ErrorReport(
        linf_nodal=float(np.sqrt(mag2.max(initial=0.0))),
        l2_quadrature=math.sqrt(max(l2_q, 0.0)),
        l2_nodal_weighted=float(np.sqrt(ops.b @ mag2)),
        l2_nodal_unweighted=float(np.sqrt(mag2.sum())),
    )


def rate(e_coarse, e_fine):
    """Observed order ``log2(e_coarse / e_fine)`` for a halved mesh size."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ValueError(f"errors must be positive, got {e_coarse!r} and {e_fine!r}")
    return math.log2(e_coarse / e_fine)
