"""Global nonconforming spaces: DOF sharing, boundary masks, interpolation.

A global DOF is identified by (sub-simplex key, level, normal orders); this
sharing is sign-free because the frame attached to each sub-simplex is global.
Cell-average DOFs (level -1) are homed on their cell and never shared or
constrained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .element import (
    ElementCache,
    enumerate_dofs,
    mixed_derivative_weights,
)
from .mesh import Mesh, cell_vertices, local_subsimplices
from .poly import quadrature

__all__ = [
    "DiscreteFunction",
    "GlobalDofMap",
    "build_space",
    "dirichlet_partition",
    "interpolate_global",
]


@dataclass
class GlobalDofMap:
    m: int
    n_dofs: int
    cell_dofs: list            # per cell: np.ndarray of global ids, local DOF order
    dof_home: list             # per id: ("cell", cid, -1, ()) or ("sub", key, level, orders)
    boundary_mask: np.ndarray  # per id: home sub-simplex lies on the boundary
    specs: tuple = field(repr=False, default=())


def build_space(mesh: Mesh, m: int) -> GlobalDofMap:
    """Number the global DOFs; shared sub-simplex functionals get one id."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    n = mesh.dim
    specs = enumerate_dofs(m, n)
    ids: dict = {}
    dof_home: list = []
    boundary: list = []
    cell_dofs = []
    for cid, cell in enumerate(mesh.cells):
        local = np.empty(len(specs), dtype=np.int64)
        for j, spec in enumerate(specs):
            if spec.level == -1:
                gkey = ("cell", cid, -1, ())
                home = gkey
                is_boundary = False
            else:
                sub = local_subsimplices(n, spec.codim)[spec.local_subsimplex]
                key = tuple(cell[i] for i in sub)
                gkey = ("sub", key, spec.level, spec.normal_orders)
                home = gkey
                is_boundary = mesh.tables[spec.codim][key].boundary
            gid = ids.get(gkey)
            if gid is None:
                gid = len(dof_home)
                ids[gkey] = gid
                dof_home.append(home)
                boundary.append(is_boundary)
            local[j] = gid
        cell_dofs.append(local)
    return GlobalDofMap(m, len(dof_home), cell_dofs, dof_home,
                        np.array(boundary, dtype=bool), specs)


def dirichlet_partition(dof_map: GlobalDofMap):
    """(free ids, constrained ids): constrained = all boundary-homed DOFs."""
    all_ids = np.arange(dof_map.n_dofs)
    constrained = all_ids[dof_map.boundary_mask]
    free = all_ids[~dof_map.boundary_mask]
    return free, constrained


@dataclass
class DiscreteFunction:
    """A member of the global space, stored as its global DOF vector."""

    values: np.ndarray
    dof_map: GlobalDofMap
    mesh: Mesh
    frames: dict

    def cell_values(self, cell_id: int) -> np.ndarray:
        return self.values[self.dof_map.cell_dofs[cell_id]]

    def local_poly(self, cell_id: int, cache: ElementCache):
        return cache.get(cell_id).local_poly(self.cell_values(cell_id))

    def to_csv(self) -> str:
        lines = ["id,home,value"]
        for gid, home in enumerate(self.dof_map.dof_home):
            if home[0] == "cell":
                desc = f"cell {home[1]} mean"
            else:
                _, key, level, orders = home
                desc = f"subsimplex {key} level {level} orders {orders}"
            lines.append(f'{gid},"{desc}",{self.values[gid]:.17g}')
        return "\n".join(lines) + "\n"

    def evaluate(self, points, cache: ElementCache | None = None) -> np.ndarray:
        """Point evaluation by brute-force cell location (debug/plotting aid)."""
        if cache is None:
            cache = ElementCache(self.mesh, self.frames, self.dof_map.m)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(pts.shape[0], np.nan)
        for cid in range(self.mesh.n_cells):
            V = cell_vertices(self.mesh, cid)
            A = (V[1:] - V[0]).T
            mu = np.linalg.solve(A, (pts - V[0]).T).T
            lam0 = 1.0 - mu.sum(axis=1)
            inside = (mu >= -1e-12).all(axis=1) & (lam0 >= -1e-12) & np.isnan(out)
            if inside.any():
                p = self.local_poly(cid, cache)
                out[inside] = p(pts[inside])
        single = np.asarray(points).ndim == 1
        return float(out[0]) if single else out


def _home_dof_value(mesh: Mesh, frames: dict, home, partials, exactness: int) -> float:
    """Evaluate one global DOF of a function on its home sub-simplex."""
    kind = home[0]
    if kind == "cell":
        cid = home[1]
        V = cell_vertices(mesh, cid)
        rule = quadrature(mesh.dim, exactness)
        pts = rule.physical_points(V)
        return float(rule.weights @ partials(pts, (0,) * mesh.dim))
    _, key, _level, orders = home
    V = mesh.vertices[list(key)]
    frame = frames[key]
    rule = quadrature(len(key) - 1, exactness)
    pts = rule.physical_points(V)
    acc = 0.0
    for beta, w in mixed_derivative_weights(frame, orders).items():
        acc += w * float(rule.weights @ partials(pts, beta))
    return acc


def interpolate_global(mesh: Mesh, frames: dict, dof_map: GlobalDofMap,
                       partials, exactness: int | None = None) -> DiscreteFunction:
    """Canonical interpolant: every shared DOF evaluated once on its home.

    The functional is cell-independent (global frames), so the value does not
    depend on which incident cell one might have used.
    """
    if exactness is None:
        exactness = 2 * dof_map.m + 4
    values = np.empty(dof_map.n_dofs)
    for gid, home in enumerate(dof_map.dof_home):
        values[gid] = _home_dof_value(mesh, frames, home, partials, exactness)
    return DiscreteFunction(values, dof_map, mesh, frames)
