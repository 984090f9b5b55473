"""Physical parameters, the lower-order field and the discrete energy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from llg.assembly import P1Operators, apply

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the Landau-Lifshitz model and its time discretization.

    ``h_e`` is a constant external field; the anisotropy easy axis is ``e_1``.
    """

    eta: float = 1.0
    alpha: float = 1.0
    Q: float = 0.0
    h_e: tuple = (0.0, 0.0, 0.0)
    theta: float = 0.0
    k: float = 1e-4
    T_bar: float = 1e-3
    h_e_array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        for name in ("eta", "alpha", "k", "T_bar"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.Q < 0:
            raise ValueError(f"Q must be nonnegative, got {self.Q}")
        h_e = np.asarray(self.h_e, dtype=float)
        if h_e.shape != (3,):
            raise ValueError(f"h_e must be a 3-vector, got {self.h_e!r}")
        object.__setattr__(self, "h_e", tuple(float(x) for x in h_e))
        object.__setattr__(self, "h_e_array", h_e)

    @property
    def has_lower_order(self) -> bool:
        return self.Q != 0 or any(self.h_e)

    @property
    def steps(self) -> int:
        """Number of time steps, ``floor(T_bar / k)``."""
        return int(np.floor(self.T_bar / self.k * (1 + 1e-12)))


def check_unit(m, tol=UNIT_TOL):
    """Raise ``ValueError`` unless every row of ``m`` is a unit 3-vector."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[1] != 3:
        raise ValueError(f"magnetization must have shape (N, 3), got {m.shape}")
    drift = np.abs(np.linalg.norm(m, axis=1) - 1.0).max(initial=0.0)
    if drift > tol:
        raise ValueError(f"magnetization is not unit length (max drift {drift:.3e})")
    return m


def lower_order_field(w, params: ModelParams, include_constant=True):
    """Anisotropy plus external field, ``-Q (w_2 e_2 + w_3 e_3) + h_e``, per node."""
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(w)
    out[:, 1:] = -params.Q * w[:, 1:]
    if include_constant:
        out += params.h_e_array
    return out


def energy(m, ops: P1Operators, params: ModelParams) -> float:
    """Discrete Landau-Lifshitz energy without the stray-field term.

    Exchange and anisotropy use the consistent ``A`` and ``M``; the external
    field term uses the lumped mass, which is exact for constant ``h_e``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (ops.N, 3):
        raise ValueError(f"magnetization shape {m.shape} does not match {ops.N} nodes")
    exchange = 0.5 * params.eta * np.einsum("ic,ic->", m, apply(ops.A, m))
    e = float(exchange)
    if params.Q:
        hard = m[:, 1:]
        e += 0.5 * params.Q * float(np.einsum("ic,ic->", hard, apply(ops.M, hard)))
    if any(params.h_e):
        e -= float(params.h_e_array @ (ops.b @ m))
    return e
