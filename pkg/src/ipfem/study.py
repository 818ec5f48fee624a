"""Convergence-study driver: solve at a list of resolutions, report errors
and observed orders in the paper-table layout (csv or markdown)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .assemble import (
    assemble,
    broken_error_norms,
    energy_error_norm,
    expand_solution,
    penalty_plan,
    reduce_system,
)
from .element import ElementCache
from .linalg import SolveReport, cg_solve
from .mesh import build_box_mesh, build_lshape_mesh, normal_frames
from .solutions import get_solution
from .space import DiscreteFunction, build_space, interpolate_global

__all__ = ["ConfigError", "SolverFailure", "StudyConfig", "StudyRow",
           "emit_table", "run_study"]


class ConfigError(ValueError):
    """Invalid study configuration."""


class SolverFailure(RuntimeError):
    """The linear solver did not converge; carries the SolveReport."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


_NORM_CHOICES = ("L2", "H1", "H2", "H3", "H4", "H5", "energy")


@dataclass(frozen=True)
class StudyConfig:
    m: int
    n: int
    domain: str = "box"                 # "box" | "lshape"
    solution: str = "harmonic_exp_sin"
    resolutions: tuple = (8, 16, 32, 64)
    eta: float = 1.0
    quad_exactness: int | None = None   # default 2m + 4
    solver_tol: float = 1e-12
    solver_maxit: int | None = None     # default 20 * n_dofs
    norms: tuple | None = None          # default ("L2", "H1", ..., f"H{m}")
    out: str | None = None
    fmt: str = "csv"

    def validated(self) -> "StudyConfig":
        if not (0 <= self.m <= 5 and 1 <= self.n <= 3):
            raise ConfigError(f"(m, n) = ({self.m}, {self.n}) outside the "
                              "supported envelope m <= 5, n <= 3")
        if self.domain not in ("box", "lshape"):
            raise ConfigError(f"unknown domain '{self.domain}'")
        if self.domain == "lshape" and self.n != 2:
            raise ConfigError("the L-shaped domain requires n = 2")
        res = tuple(int(r) for r in self.resolutions)
        if not res or any(b <= a for a, b in zip(res, res[1:])):
            raise ConfigError("resolutions must be non-empty and strictly increasing")
        if self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if not 0 < self.solver_tol < 1:
            raise ConfigError(f"solver_tol must lie in (0, 1), got {self.solver_tol}")
        if self.fmt not in ("csv", "markdown"):
            raise ConfigError(f"unknown format '{self.fmt}'")
        norms = self.norms
        if norms is None:
            norms = ("L2",) + tuple(f"H{k}" for k in range(1, self.m + 1))
        norms = tuple(norms)
        for nm in norms:
            if nm not in _NORM_CHOICES:
                raise ConfigError(f"unknown norm '{nm}' (choose from {_NORM_CHOICES})")
            if nm.startswith("H") and int(nm[1:]) > self.m:
                raise ConfigError(f"norm {nm} exceeds the element order m = {self.m}")
        return replace(self, resolutions=res, norms=norms)


@dataclass
class StudyRow:
    inv_h: int
    n_dofs: int
    errors: dict
    orders: dict = field(default_factory=dict)  # norm -> float | None
    solve: SolveReport | None = None


def _solve_one(config: StudyConfig, inv_h: int) -> StudyRow:
    m, n = config.m, config.n
    if config.domain == "box":
        mesh = build_box_mesh(n, inv_h)
    else:
        mesh = build_lshape_mesh(inv_h)
    frames = normal_frames(mesh)
    dof_map = build_space(mesh, m)
    cache = ElementCache(mesh, frames, m)
    sol = get_solution(config.solution, m, n)
    qx = config.quad_exactness or (2 * m + 4)
    g = interpolate_global(mesh, frames, dof_map, sol.partials, exactness=qx)
    system = assemble(mesh, frames, dof_map, config.eta, f=sol.f, dirichlet=g,
                      cache=cache, quad_exactness=qx)
    reduced = reduce_system(system, dof_map)
    x_f, report = cg_solve(reduced.matrix, reduced.rhs, tol=config.solver_tol,
                           maxit=config.solver_maxit)
    if not report.converged:
        raise SolverFailure(
            f"CG did not converge at 1/h = {inv_h}: {report.iterations} iterations, "
            f"relative residual {report.residual:.3e}", report)
    u_h = DiscreteFunction(expand_solution(reduced, x_f), dof_map, mesh, frames)

    corner = (0.0, 0.0) if (config.domain == "lshape"
                            and sol.smoothness == "singular") else None
    ks = sorted({0 if nm == "L2" else int(nm[1:])
                 for nm in config.norms if nm != "energy"})
    broken = broken_error_norms(mesh, cache, u_h, sol.partials, ks,
                                exactness=qx, corner=corner)
    errors = {}
    for nm in config.norms:
        if nm == "energy":
            errors[nm] = energy_error_norm(mesh, cache, u_h, sol.partials,
                                           exactness=qx, corner=corner)
        elif nm == "L2":
            errors[nm] = broken[0]
        else:
            errors[nm] = broken[int(nm[1:])]
    return StudyRow(inv_h, dof_map.n_dofs, errors, {}, report)


def run_study(config: StudyConfig) -> list:
    """Run the configured resolutions and attach observed orders.

    Orders are log2 ratios against the previous row and are only computed when
    consecutive resolutions differ by exactly a factor of 2.
    """
    config = config.validated()
    rows: list[StudyRow] = []
    for inv_h in config.resolutions:
        row = _solve_one(config, inv_h)
        row.orders = {nm: None for nm in config.norms}
        if rows and row.inv_h == 2 * rows[-1].inv_h:
            for nm in config.norms:
                prev, cur = rows[-1].errors[nm], row.errors[nm]
                if prev > 0 and cur > 0:
                    row.orders[nm] = math.log2(prev / cur)
        rows.append(row)
    return rows


def emit_table(rows: list, fmt: str = "csv") -> str:
    """Render study rows; errors to 6 significant digits, orders to 2 decimals."""
    if not rows:
        raise ValueError("no rows to emit")
    norms = list(rows[0].errors)

    def fmt_err(v: float) -> str:
        return f"{v:.5e}"

    def fmt_order(v) -> str:
        return "--" if v is None else f"{v:.2f}"

    header = ["inv_h", "n_dofs"]
    for nm in norms:
        header += [nm, f"{nm}_order"]
    table = []
    for row in rows:
        line = [str(row.inv_h), str(row.n_dofs)]
        for nm in norms:
            line += [fmt_err(row.errors[nm]), fmt_order(row.orders.get(nm))]
        table.append(line)
    if fmt == "csv":
        return "\n".join([",".join(header)] + [",".join(line) for line in table]) + "\n"
    if fmt == "markdown":
        widths = [max(len(header[i]), *(len(line[i]) for line in table))
                  for i in range(len(header))]
        def mdline(cells):
            return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
        sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
        return "\n".join([mdline(header), sep] + [mdline(line) for line in table]) + "\n"
    raise ValueError(f"unknown format '{fmt}'")


def summarize_plan(m: int, n: int) -> str:
    plan = penalty_plan(m, n)
    if not plan.levels:
        return f"penalty plan for (m={m}, n={n}): empty (L = 0, plain nonconforming form)"
    lines = [f"penalty plan for (m={m}, n={n}):"]
    for lv in plan.levels:
        lines.append(f"  level {lv.level}: derivative order {lv.order}, "
                     f"face weight h_F^{lv.exponent}, {len(lv.betas)} jump terms")
    return "\n".join(lines)
