"""Configuration, single runs, convergence sweeps and CSV output.

Config files are flat ``key = value`` text::

    # explicit second-order sweep
    levels = 32, 64
    algorithm = alg1
    theta = 0
    k_rule = 8e-5, 2       # k = c * (1/n)^p
    T_bar = 1e-3
    output = explicit.csv

``mesh_file`` may be given instead of a structured mesh; a ``{n}``
placeholder is replaced by each level.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from llg.analytic import ExactParams, error_norms, exact, rate
from llg.assembly import assemble, interpolate
from llg.mesh import check_mesh, generate_structured, load_mesh
from llg.model import ModelParams
from llg.stepper import ALG1, ALG2, SolverConfig, run

log = logging.getLogger(__name__)

CSV_HEADER = (
    "inv_h", "k", "steps", "linf", "l2_quadrature", "l2_nodal_weighted", "l2_nodal_unweighted",
    "rate_linf", "rate_l2", "energy_initial", "energy_final", "wall_seconds",
)


@dataclass
class RunConfig:
    levels: tuple = (32,)
    diagonal: str = "NE"
    mesh_file: str | None = None
    eta: float = 1.0
    alpha: float = 1.0
    Q: float = 0.0
    h_e: tuple = (0.0, 0.0, 0.0)
    theta: float = 0.0
    T_bar: float = 1e-3
    beta: float = math.pi / 24
    kappa: float = 2 * math.pi
    algorithm: str = ALG1
    k_rule: tuple = (8e-5, 2.0)
    rel_tol: float = 1e-10
    max_iter: int = 500
    solver: str = "gmres"
    restart: int = 60
    output: str | None = None
    wall_clock: bool = False
    base_dir: Path = field(default=Path("."), repr=False)

    def __post_init__(self):
        self.levels = tuple(int(n) for n in self.levels)
        if not self.levels:
            raise ValueError("at least one level is required")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError(f"levels must be strictly increasing, got {self.levels}")
        if len(self.k_rule) != 2 or not self.k_rule[0] > 0:
            raise ValueError(f"k_rule must be 'c, p' with c > 0, got {self.k_rule}")
        if self.algorithm.lower() not in (ALG1, ALG2):
            raise ValueError(f"algorithm must be alg1 or alg2, got {self.algorithm!r}")
        self.algorithm = self.algorithm.lower()

    def time_step(self, n) -> float:
        c, p = self.k_rule
        return c * (1.0 / n) ** p

    def model_params(self, n) -> ModelParams:
        return ModelParams(
            eta=self.eta, alpha=self.alpha, Q=self.Q, h_e=tuple(self.h_e),
            theta=self.theta, k=self.time_step(n), T_bar=self.T_bar,
        )

    def exact_params(self) -> ExactParams:
        return ExactParams(beta=self.beta, kappa=self.kappa, alpha=self.alpha)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(rel_tol=self.rel_tol, max_iter=self.max_iter, method=self.solver, restart=self.restart)

    def mesh(self, n):
        if self.mesh_file is None:
            return generate_structured(n, self.diagonal)
        path = Path(self.mesh_file.replace("{n}", str(n)))
        if not path.is_absolute():
            path = self.base_dir / path
        return load_mesh(path)


def _floats(text):
    return tuple(float(x) for x in text.split(","))


_PARSERS = {
    "levels": lambda s: tuple(int(x) for x in s.split(",")),
    "n": lambda s: (int(s),),
    "diagonal": str.strip,
    "mesh_file": str.strip,
    "h_e": _floats,
    "k_rule": _floats,
    "algorithm": str.strip,
    "solver": str.strip,
    "output": str.strip,
    "max_iter": int,
    "restart": int,
}
for _name in ("eta", "alpha", "Q", "theta", "T_bar", "beta", "kappa", "rel_tol"):
    _PARSERS[_name] = float


def _parse_bool(text):
    low = text.strip().lower()
    if low not in ("true", "false"):
        raise ValueError(f"expected true or false, got {text!r}")
    return low == "true"


_PARSERS["wall_clock"] = _parse_bool


def parse_config(text, base_dir=".") -> RunConfig:
    """Build a RunConfig from flat ``key = value`` text."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # keep Q and T_bar as written
    parser.read_string("[llg]\n" + text)
    values = {}
    for key, raw in parser["llg"].items():
        if key not in _PARSERS:
            raise ValueError(f"unknown config key {key!r}")
        try:
            values["levels" if key == "n" else key] = _PARSERS[key](raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key!r}: {raw!r} ({exc})") from None
    return RunConfig(base_dir=Path(base_dir), **values)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


@dataclass
class ConvergenceRow:
    inv_h: int
    k: float
    steps: int
    linf: float
    l2_quadrature: float
    l2_nodal_weighted: float
    l2_nodal_unweighted: float
    rate_linf: float | None
    rate_l2: float | None
    energy_initial: float
    energy_final: float
    wall_seconds: float

    def csv_fields(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                out.append("")
            elif isinstance(v, int):
                out.append(str(v))
            else:
                out.append(f"{v:.5e}")
        return out

    @classmethod
    def from_csv_fields(cls, values):
        kw = {}
        for f, v in zip(fields(cls), values):
            if f.name in ("inv_h", "steps"):
                kw[f.name] = int(v)
            else:
                kw[f.name] = float(v) if v != "" else None
        return cls(**kw)


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(row.csv_fields())


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [ConvergenceRow.from_csv_fields(r) for r in reader]


def simulate(cfg: RunConfig, n: int, observers=()) -> ConvergenceRow:
    """One level: build the mesh, start from the interpolated exact solution, run, measure.

    ``observers`` are forwarded to :func:`llg.stepper.run`.
    """
    start = time.perf_counter()
    mesh = cfg.mesh(n)
    ops = assemble(mesh)
    params = cfg.model_params(n)
    xp = cfg.exact_params()
    m0 = interpolate(lambda x: exact(x, 0.0, xp), mesh)
    result = run(m0, ops, params, cfg.solver_config(), algorithm=cfg.algorithm, observers=observers, track_energy=False)
    t_final = params.steps * params.k
    err = error_norms(result.m, t_final, mesh, ops, xp)
    wall = time.perf_counter() - start
    log.info("n=%d k=%.3e steps=%d linf=%.4e (%.1fs)", n, params.k, params.steps, err.linf_nodal, wall)
    return ConvergenceRow(
        inv_h=n, k=params.k, steps=params.steps,
        linf=err.linf_nodal, l2_quadrature=err.l2_quadrature,
        l2_nodal_weighted=err.l2_nodal_weighted, l2_nodal_unweighted=err.l2_nodal_unweighted,
        rate_linf=None, rate_l2=None,
        energy_initial=result.energy_initial, energy_final=result.energy_final,
        wall_seconds=wall if cfg.wall_clock else 0.0,
    )


def _level_rate(e_c, e_f, n_c, n_f):
    if e_c <= 0 or e_f <= 0:
        return None
    return rate(e_c, e_f) / math.log2(n_f / n_c)


def fill_rates(rows):
    """Rates between consecutive levels, stored on the coarser row."""
    for coarse, fine in zip(rows, rows[1:]):
        coarse.rate_linf = _level_rate(coarse.linf, fine.linf, coarse.inv_h, fine.inv_h)
        coarse.rate_l2 = _level_rate(coarse.l2_quadrature, fine.l2_quadrature, coarse.inv_h, fine.inv_h)
    return rows


def cmd_run(cfg: RunConfig, output=None) -> ConvergenceRow:
    row = simulate(cfg, cfg.levels[0])
    path = output or cfg.output
    if path:
        write_csv([row], path)
    return row


def cmd_convergence(cfg: RunConfig, output=None):
    if len(cfg.levels) < 2:
        raise ValueError("a convergence sweep needs at least two levels")
    rows = fill_rates([simulate(cfg, n) for n in cfg.levels])
    path = output or cfg.output
    if path:
        write_csv(rows, path)
    return rows


def cmd_check_mesh(cfg: RunConfig):
    """Quality report for the first configured level; ``ok`` iff no stiffness violations."""
    mesh = cfg.mesh(cfg.levels[0])
    return check_mesh(mesh, assemble(mesh))


def format_rows(rows) -> str:
    lines = [",".join(CSV_HEADER)]
    lines += [",".join(r.csv_fields()) for r in rows]
    return "\n".join(lines)


__all__ = [
    "CSV_HEADER", "ConvergenceRow", "RunConfig", "cmd_check_mesh", "cmd_convergence", "cmd_run",
    "fill_rates", "format_rows", "load_config", "parse_config", "read_csv", "simulate", "write_csv",
]
