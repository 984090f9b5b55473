"""Time stepping: the mass-lumped theta scheme and its midpoint variant.

Nodal fields are (N, 3) arrays. A step of the theta scheme computes a
tangent velocity ``v`` from

    b_i v_i = m_i x s_i + alpha m_i x (m_i x s_i),
    s = eta A (m + theta k v) - M hbar(m) - theta k M hbar(v),

and then renormalizes ``m + k v`` nodewise. The midpoint variant uses
``m + k v`` as a predictor and replaces the renormalization by a per-node
3x3 linear solve that preserves nodal lengths exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from llg.assembly import P1Operators, apply
from llg.model import ModelParams, energy, lower_order_field

log = logging.getLogger(__name__)

ALG1 = "alg1"
ALG2 = "alg2"


class SolverError(RuntimeError):
    """The implicit velocity system did not reach the requested tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    max_iter: int = 500
    method: str = "gmres"  # or "fixed-point"
    restart: int = 60

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.method not in ("gmres", "fixed-point"):
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass
class StepDiagnostics:
    energy_before: float
    energy_after: float
    max_norm_drift: float
    tangency_residual: float
    solver_iters: int
    dt_m_l2: float
    residual: float = 0.0
    velocity_l2_sq: float = 0.0


def cross(a, b):
    """Row-wise cross product of (N, 3) arrays; leaner than ``np.cross``."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def b_norm(field, b) -> float:
    """Lumped (b-weighted) nodal norm ``sqrt(sum_i b_i |w_i|^2)``."""
    return float(np.sqrt(np.einsum("i,ic,ic->", b, field, field)))


def gyro_damping_bracket(m, exchange, lower=None, params: ModelParams | None = None):
    """Nodewise ``m x s + alpha m x (m x s)`` with ``s = eta * exchange - lower``.

    ``exchange`` is the stiffness action (``A u``) and ``lower`` the mass
    action of the lower-order field (``M hbar(u)``); both are (N, 3). The
    result is orthogonal to ``m`` row by row.
    """
    m = np.asarray(m, dtype=float)
    exchange = np.asarray(exchange, dtype=float)
    if exchange.shape != m.shape or (lower is not None and np.shape(lower) != m.shape):
        raise ValueError("m, exchange and lower must all have shape (N, 3)")
    s = params.eta * exchange
    if lower is not None:
        s = s - lower
    mxs = cross(m, s)
    return mxs + params.alpha * cross(m, mxs)


def _lower_mass(u, ops, params, include_constant):
    if not params.has_lower_order:
        return None
    return apply(ops.M, lower_order_field(u, params, include_constant))


def explicit_velocity(m, ops: P1Operators, params: ModelParams):
    """Closed-form velocity of the explicit scheme (theta = 0)."""
    bracket = gyro_damping_bracket(m, apply(ops.A, m), _lower_mass(m, ops, params, True), params)
    return bracket / ops.b[:, None]


def tangent_basis(m):
    """Orthonormal tangent frames ``(t1, t2)`` with ``t2 = m x t1``, each (N, 3)."""
    m = np.asarray(m, dtype=float)
    axis = np.argmin(np.abs(m), axis=1)
    e = np.zeros_like(m)
    e[np.arange(len(m)), axis] = 1.0
    t1 = e - np.einsum("ic,ic->i", e, m)[:, None] * m
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = cross(m, t1)
    t2 /= np.linalg.norm(t2, axis=1)[:, None]
    return t1, t2


class _ImplicitSystem:
    """The theta-scheme velocity equation as ``v - theta k L v = rhs``.

    The unknown is parametrized in per-node tangent coordinates scaled by
    ``sqrt(b)``, so the Euclidean residual of the reduced system equals the
    b-weighted residual of the velocity equation.
    """

    def __init__(self, m, ops, params):
        self.m = m
        self.ops = ops
        self.params = params
        self.N = len(m)
        self.tk = params.theta * params.k
        self.sqrt_b = np.sqrt(ops.b)
        self.t1, self.t2 = tangent_basis(m)
        const = None
        if any(params.h_e):
            # hbar(v) carries the constant external field as well
            const = gyro_damping_bracket(m, np.zeros_like(m), apply(ops.M, np.broadcast_to(params.h_e_array, m.shape)), params)
        v0 = explicit_velocity(m, ops, params)
        self.v0 = v0
        self.rhs = v0 if const is None else v0 + self.tk * const / ops.b[:, None]

    def L(self, v):
        ops, params = self.ops, self.params
        lower = None
        if params.Q:
            lower = apply(ops.M, lower_order_field(v, params, include_constant=False))
        return gyro_damping_bracket(self.m, apply(ops.A, v), lower, params) / ops.b[:, None]

    def residual(self, v):
        return v - self.tk * self.L(v) - self.rhs

    def to_field(self, y):
        c = y.reshape(self.N, 2) / self.sqrt_b[:, None]
        return c[:, :1] * self.t1 + c[:, 1:] * self.t2

    def from_field(self, v):
        c1 = np.einsum("ic,ic->i", v, self.t1)
        c2 = np.einsum("ic,ic->i", v, self.t2)
        return (np.column_stack([c1, c2]) * self.sqrt_b[:, None]).ravel()

    def matvec(self, y):
        v = self.to_field(y)
        return self.from_field(v - self.tk * self.L(v))

    def relative_residual(self, v):
        denom = b_norm(self.rhs, self.ops.b)
        num = b_norm(self.residual(v), self.ops.b)
        if denom == 0.0:
            return num
        return num / denom


def _solve_gmres(system, cfg):
    n = 2 * system.N
    op = spla.LinearOperator((n, n), matvec=system.matvec, dtype=float)
    rhs = system.from_field(system.rhs)
    y = system.from_field(system.v0)
    iters = 0
    tol = cfg.rel_tol
    rel = np.inf
    for _ in range(4):
        count = [0]

        def cb(_pr_norm):
            count[0] += 1

        y, info = spla.gmres(
            op, rhs, x0=y, rtol=tol, atol=0.0, restart=cfg.restart,
            maxiter=max(1, cfg.max_iter // cfg.restart + 1), callback=cb, callback_type="pr_norm",
        )
        iters += count[0]
        v = system.to_field(y)
        rel = system.relative_residual(v)
        if rel <= cfg.rel_tol:
            return v, iters, rel
        if info > 0 or iters >= cfg.max_iter:
            break
        tol = tol * 0.1
    raise SolverError(
        f"GMRES stopped after {iters} iterations with relative residual {rel:.3e} > {cfg.rel_tol:.1e}",
        residual=rel,
        iterations=iters,
    )


def _solve_fixed_point(system, cfg):
    v = system.v0.copy()
    rel = system.relative_residual(v)
    for it in range(1, cfg.max_iter + 1):
        if rel <= cfg.rel_tol:
            return v, it - 1, rel
        v = system.rhs + system.tk * system.L(v)
        rel = system.relative_residual(v)
        if not np.isfinite(rel):
            break
    if rel <= cfg.rel_tol:
        return v, cfg.max_iter, rel
    raise SolverError(f"fixed-point iteration did not converge (relative residual {rel:.3e})", residual=rel, iterations=cfg.max_iter)


def solve_velocity(m, ops: P1Operators, params: ModelParams, cfg: SolverConfig | None = None):
    """Tangent velocity of the theta scheme at state ``m``.

    Returns
    -------
    v : ndarray, shape (N, 3)
    iters : int
        Solver iterations (0 for the explicit scheme).
    residual : float
        Relative b-weighted residual of the defining relation.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (ops.N, 3):
        raise ValueError(f"magnetization shape {m.shape} does not match {ops.N} nodes")
    if params.theta == 0.0:
        return explicit_velocity(m, ops, params), 0, 0.0
    cfg = cfg or SolverConfig()
    system = _ImplicitSystem(m, ops, params)
    if not np.any(system.rhs):
        return np.zeros_like(m), 0, 0.0
    if cfg.method == "gmres":
        return _solve_gmres(system, cfg)
    return _solve_fixed_point(system, cfg)


def velocity_residual(v, m, ops: P1Operators, params: ModelParams) -> float:
    """Relative b-weighted residual of ``v`` in the theta-scheme velocity equation."""
    return _ImplicitSystem(np.asarray(m, dtype=float), ops, params).relative_residual(np.asarray(v, dtype=float))


def project_renormalize(m, v, k):
    """``(m_i + k v_i) / |m_i + k v_i|`` for every node."""
    w = np.asarray(m, dtype=float) + k * np.asarray(v, dtype=float)
    norm = np.sqrt(np.einsum("ic,ic->i", w, w))
    if np.any(norm == 0.0):
        raise SolverError("renormalization hit a zero vector")
    return w / norm[:, None]


def _tangency(m, v):
    return float(np.abs(np.einsum("ic,ic->i", m, v)).max(initial=0.0))


def _norm_drift(m):
    return float(np.abs(np.sqrt(np.einsum("ic,ic->i", m, m)) - 1.0).max(initial=0.0))


def step_algorithm1(m, ops: P1Operators, params: ModelParams, cfg: SolverConfig | None = None, energy_before=None, track_energy=True):
    """One step of the theta scheme with nodal renormalization."""
    if energy_before is None:
        energy_before = energy(m, ops, params) if track_energy else float("nan")
    v, iters, res = solve_velocity(m, ops, params, cfg)
    m_new = project_renormalize(m, v, params.k)
    diag = StepDiagnostics(
        energy_before=energy_before,
        energy_after=energy(m_new, ops, params) if track_energy else float("nan"),
        max_norm_drift=_norm_drift(m_new),
        tangency_residual=_tangency(m, v),
        solver_iters=iters,
        dt_m_l2=b_norm((m_new - m) / params.k, ops.b),
        residual=res,
        velocity_l2_sq=b_norm(v, ops.b) ** 2,
    )
    return m_new, diag


def midpoint_field(m_half, ops: P1Operators, params: ModelParams):
    """Frozen per-node field of the corrector, evaluated at ``m_half``."""
    s = params.eta * apply(ops.A, m_half)
    if params.has_lower_order:
        s = s - apply(ops.M, lower_order_field(m_half, params, include_constant=True))
    return (s + params.alpha * cross(m_half, s)) / ops.b[:, None]


def cross_matrix(F):
    """Batch of skew matrices with ``cross_matrix(F) @ x == np.cross(F, x)``."""
    Z = np.zeros(F.shape[:-1] + (3, 3))
    Z[..., 0, 1], Z[..., 0, 2] = -F[..., 2], F[..., 1]
    Z[..., 1, 0], Z[..., 1, 2] = F[..., 2], -F[..., 0]
    Z[..., 2, 0], Z[..., 2, 1] = -F[..., 1], F[..., 0]
    return Z


def cayley_update(m, F, k):
    """Solve ``(x - m) / k = ((x + m) / 2) x F`` for ``x`` node by node."""
    half = 0.5 * k * cross_matrix(F)
    eye = np.eye(3)
    rhs = np.einsum("nab,nb->na", eye - half, m)
    return np.linalg.solve(eye + half, rhs[..., None])[..., 0]


def corrector_3x3(m, m_star, ops: P1Operators, params: ModelParams):
    """Length-preserving midpoint corrector around ``(m + m_star) / 2``."""
    m = np.asarray(m, dtype=float)
    m_half = 0.5 * (m + np.asarray(m_star, dtype=float))
    return cayley_update(m, midpoint_field(m_half, ops, params), params.k)


def step_algorithm2(m, ops: P1Operators, params: ModelParams, cfg: SolverConfig | None = None, energy_before=None, track_energy=True):
    """Predictor ``m + k v`` followed by the 3x3 midpoint corrector."""
    if energy_before is None:
        energy_before = energy(m, ops, params) if track_energy else float("nan")
    v, iters, res = solve_velocity(m, ops, params, cfg)
    m_new = corrector_3x3(m, m + params.k * v, ops, params)
    diag = StepDiagnostics(
        energy_before=energy_before,
        energy_after=energy(m_new, ops, params) if track_energy else float("nan"),
        max_norm_drift=_norm_drift(m_new),
        tangency_residual=_tangency(m, v),
        solver_iters=iters,
        dt_m_l2=b_norm((m_new - m) / params.k, ops.b),
        residual=res,
        velocity_l2_sq=b_norm(v, ops.b) ** 2,
    )
    return m_new, diag


STEPPERS = {ALG1: step_algorithm1, ALG2: step_algorithm2}


@dataclass
class RunResult:
    m: np.ndarray
    diagnostics: list = field(default_factory=list)
    energy_initial: float = 0.0
    energy_final: float = 0.0
    dissipation: float = 0.0  # sum_j k |v^j|_b^2

    @property
    def steps(self) -> int:
        return len(self.diagnostics)

    @property
    def inequality_constant(self) -> float:
        """Largest ``C`` with ``C sum_j k |v^j|^2 + E(m^J) <= E(m^0)``; nan if undefined."""
        if self.dissipation <= 0.0:
            return float("nan")
        return (self.energy_initial - self.energy_final) / self.dissipation

    @property
    def energy_monotone(self) -> bool:
        return all(not (d.energy_after > d.energy_before + 1e-12) for d in self.diagnostics)


def run(
    m0,
    ops: P1Operators,
    params: ModelParams,
    cfg: SolverConfig | None = None,
    algorithm: str = ALG1,
    observers: Sequence[Callable] = (),
    steps: int | None = None,
    track_energy: bool = True,
):
    """Advance ``m0`` by ``floor(T_bar / k)`` steps (or ``steps`` if given).

    Each observer is called as ``observer(j, m, diagnostics)`` after step ``j``.
    With ``track_energy=False`` only the initial and final energies are
    evaluated and per-step energies are reported as nan.
    """
    try:
        stepper = STEPPERS[algorithm.lower()]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {sorted(STEPPERS)}") from None
    J = params.steps if steps is None else steps
    m = np.array(m0, dtype=float)
    e = energy(m, ops, params)
    result = RunResult(m=m, energy_initial=e, energy_final=e)
    for j in range(J):
        m, diag = stepper(m, ops, params, cfg, energy_before=e, track_energy=track_energy)
        e = diag.energy_after
        result.diagnostics.append(diag)
        result.dissipation += params.k * diag.velocity_l2_sq
        for observer in observers:
            observer(j, m, diag)
    result.m = m
    result.energy_final = e if track_energy else energy(m, ops, params)
    log.debug("ran %d steps, energy %.6e -> %.6e", J, result.energy_initial, e)
    return result
