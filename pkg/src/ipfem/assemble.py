"""Interior-penalty assembly, Dirichlet elimination, and mesh-dependent norms.

The bilinear form is sum_{|a|=m} (d^a u, d^a v) over cells plus, for each
level l = 1..L, penalties eta * h_F^{1-2(n+1)(L-l+1)} int_F [d^b u][d^b v]
over every face (boundary faces use the one-sided trace) and every |b| =
m-(n+1)(L-l+1). All assembly integrals are exact polynomial integrals; cell
and face blocks are cached per translation class.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .element import ElementCache
from .linalg import SparseSym
from .mesh import Mesh, cell_vertices, mesh_sizes
from .poly import (
    basis_multiindices,
    derivative,
    derivative_matrix,
    integrate_simplex_exact,
    monomial_means,
    monomial_pair_means,
    pair_index_table,
    quadrature,
    simplex_measure,
)
from .space import DiscreteFunction, GlobalDofMap, dirichlet_partition

__all__ = [
    "AssembledSystem",
    "PenaltyLevel",
    "PenaltyPlan",
    "ReducedSystem",
    "assemble",
    "broken_error_norms",
    "broken_seminorm_discrete",
    "dump_matrix",
    "energy_error_norm",
    "energy_norm_discrete",
    "expand_solution",
    "penalty_plan",
    "reduce_system",
]


@dataclass(frozen=True)
class PenaltyLevel:
    level: int
    order: int      # derivative order m - (n+1)(L-l+1), absent from the DOF set
    exponent: int   # face weight exponent 1 - 2(n+1)(L-l+1)
    betas: tuple    # all ambient multi-indices of that order


@dataclass(frozen=True)
class PenaltyPlan:
    m: int
    n: int
    levels: tuple


@lru_cache(maxsize=None)
def penalty_plan(m: int, n: int) -> PenaltyPlan:
    """Orders and face-weight exponents for levels l = 1..L; empty iff L = 0."""
    if m < 0 or n < 1:
        raise ValueError(f"need m >= 0 and n >= 1, got m={m}, n={n}")
    L = m // (n + 1)
    levels = []
    for l in range(1, L + 1):
        order = m - (n + 1) * (L - l + 1)
        exponent = 1 - 2 * (n + 1) * (L - l + 1)
        betas = tuple(a for a in basis_multiindices(n, order) if sum(a) == order)
        levels.append(PenaltyLevel(l, order, exponent, betas))
    return PenaltyPlan(m, n, tuple(levels))


@dataclass
class AssembledSystem:
    matrix: SparseSym
    rhs: np.ndarray
    dirichlet_values: dict      # constrained global id -> value
    eta: float


@lru_cache(maxsize=None)
def _deriv_op(n: int, d: int, beta: tuple) -> np.ndarray:
    """Coefficient matrix of d^beta on the degree-d graded basis."""
    D = np.eye(comb(d + n, n))
    for axis, a in enumerate(beta):
        Dax = derivative_matrix(n, d, axis)
        for _ in range(a):
            D = Dax @ D
    return D


def _exact_order_indices(n: int, order: int) -> tuple:
    return tuple(a for a in basis_multiindices(n, order) if sum(a) == order)


class _FaceBlocks:
    """Per-face penalty blocks, cached by translation class of (face, cells)."""

    def __init__(self, mesh: Mesh, cache: ElementCache, plan: PenaltyPlan):
        self.mesh = mesh
        self.cache = cache
        self.plan = plan
        self._blocks: dict = {}

    def key(self, fkey, ent):
        ref = self.mesh.vertices[list(fkey)].mean(axis=0)
        parts = [np.round(self.mesh.vertices[list(fkey)] - ref, 12).tobytes()]
        for cid in ent.cells:
            parts.append(np.round(cell_vertices(self.mesh, cid) - ref, 12).tobytes())
            parts.append(self.cache.class_key(cid))
        return tuple(parts)

    def blocks(self, fkey, ent) -> list:
        """One raw block per plan level over the stacked side DOFs."""
        key = self.key(fkey, ent)
        got = self._blocks.get(key)
        if got is not None:
            return got
        F = self.mesh.vertices[list(fkey)]
        measure = simplex_measure(F)
        bases = [self.cache.get(cid) for cid in ent.cells]
        signs = (1.0, -1.0)[: len(bases)]
        J = bases[0].n_dofs
        n, m = self.plan.n, self.plan.m
        expo = basis_multiindices(n, m)
        cross = {}
        for s, bs in enumerate(bases):
            for t, bt in enumerate(bases):
                cross[(s, t)] = measure * monomial_pair_means(
                    F, expo, bs.center, bs.scale, expo, bt.center, bt.scale
                )
        out = []
        for level in self.plan.levels:
            B = np.zeros((J * len(bases), J * len(bases)))
            for beta in level.betas:
                G = [
                    (_deriv_op(n, m, beta) @ b.coeffs) / b.scale ** level.order
                    for b in bases
                ]
                for s in range(len(bases)):
                    for t in range(len(bases)):
                        B[s * J:(s + 1) * J, t * J:(t + 1) * J] += (
                            signs[s] * signs[t] * (G[s].T @ cross[(s, t)] @ G[t])
                        )
            out.append(B)
        self._blocks[key] = out
        return out


def assemble(mesh: Mesh, frames: dict, dof_map: GlobalDofMap, eta: float,
             f=None, dirichlet: DiscreteFunction | None = None,
             cache: ElementCache | None = None,
             quad_exactness: int | None = None) -> AssembledSystem:
    """Assemble the penalized stiffness matrix and load vector.

    `f` is a vectorized callback (points -> values) or None for a zero source.
    `dirichlet` supplies nonhomogeneous data as an interpolant of the exact
    solution: constrained DOFs take its values and boundary-face penalties act
    on the difference, which adds the matching data term to the load vector.
    """
    if eta <= 0.0:
        raise ValueError(f"penalty parameter eta must be positive, got {eta}")
    m, n = dof_map.m, mesh.dim
    if cache is None:
        cache = ElementCache(mesh, frames, m)
    if quad_exactness is None:
        quad_exactness = 2 * m + 4
    plan = penalty_plan(m, n)
    sizes = mesh_sizes(mesh)
    J = len(dof_map.specs)

    rows, cols, vals = [], [], []
    rhs = np.zeros(dof_map.n_dofs)

    # volume term: class-cached stiffness blocks
    stiff_cache: dict = {}
    expo_m = basis_multiindices(n, m)
    pairs = pair_index_table(n, m)
    alphas = _exact_order_indices(n, m)
    load_cache: dict = {}
    rule = quadrature(n, quad_exactness)
    for cid in range(mesh.n_cells):
        basis = cache.get(cid)
        ckey = cache.class_key(cid)
        K = stiff_cache.get(ckey)
        if K is None:
            verts = basis.vertices
            means2 = monomial_means(
                verts, basis_multiindices(n, 2 * m), basis.center, basis.scale
            )
            M2 = simplex_measure(verts) * means2[pairs]
            K = np.zeros((J, J))
            for alpha in alphas:
                G = _deriv_op(n, m, alpha) @ basis.coeffs
                K += G.T @ M2 @ G
            K /= basis.scale ** (2 * m)
            stiff_cache[ckey] = K
        g = dof_map.cell_dofs[cid]
        rows.append(np.repeat(g, J))
        cols.append(np.tile(g, J))
        vals.append(K.ravel())
        if f is not None:
            Phi = load_cache.get(ckey)
            verts = cell_vertices(mesh, cid)
            pts = rule.physical_points(verts)
            if Phi is None:
                y = (pts - basis.center) / basis.scale
                expo_arr = np.array(expo_m)
                Phi = np.prod(y[:, None, :] ** expo_arr[None, :, :], axis=2) @ basis.coeffs
                load_cache[ckey] = Phi
            fv = np.asarray(f(pts), dtype=float)
            rhs[g] += simplex_measure(verts) * (Phi.T @ (rule.weights * fv))

    # penalty terms on every face, interior and boundary
    if plan.levels:
        face_blocks = _FaceBlocks(mesh, cache, plan)
        for fkey, ent in mesh.tables[1].items():
            hF = sizes.h_face[fkey]
            blocks = face_blocks.blocks(fkey, ent)
            g = np.concatenate([dof_map.cell_dofs[cid] for cid in ent.cells])
            for level, B in zip(plan.levels, blocks):
                W = eta * hF ** level.exponent
                rows.append(np.repeat(g, len(g)))
                cols.append(np.tile(g, len(g)))
                vals.append(W * B.ravel())
                if ent.boundary and dirichlet is not None:
                    gloc = dirichlet.values[g]
                    rhs[g] += W * (B @ gloc)

    matrix = SparseSym.from_coo(
        dof_map.n_dofs,
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
    )
    _, constrained = dirichlet_partition(dof_map)
    if dirichlet is not None:
        dvals = {int(i): float(dirichlet.values[i]) for i in constrained}
    else:
        dvals = {int(i): 0.0 for i in constrained}
    return AssembledSystem(matrix, rhs, dvals, eta)


@dataclass
class ReducedSystem:
    matrix: SparseSym            # free-free block (SPD)
    rhs: np.ndarray
    free: np.ndarray
    constrained: np.ndarray
    constrained_values: np.ndarray
    n_dofs: int


def reduce_system(system: AssembledSystem, dof_map: GlobalDofMap) -> ReducedSystem:
    """Eliminate constrained DOFs; their contributions move to the RHS."""
    free, constrained = dirichlet_partition(dof_map)
    S = system.matrix.to_scipy()
    xc = np.array([system.dirichlet_values[int(i)] for i in constrained])
    Sf = S[free]
    A_ff = Sf[:, free]
    b = system.rhs[free]
    if len(constrained):
        b = b - Sf[:, constrained] @ xc
    return ReducedSystem(SparseSym.from_scipy(A_ff), b, free, constrained, xc,
                         dof_map.n_dofs)


def expand_solution(reduced: ReducedSystem, x_free: np.ndarray) -> np.ndarray:
    out = np.empty(reduced.n_dofs)
    out[reduced.free] = x_free
    out[reduced.constrained] = reduced.constrained_values
    return out


def dump_matrix(system: AssembledSystem) -> str:
    """Coordinate text format: row col value (0-based, 17 significant digits)."""
    A = system.matrix.to_scipy().tocoo()
    lines = [f"{i} {j} {v:.17g}" for i, j, v in zip(A.row, A.col, A.data)]
    return "\n".join(lines) + "\n"


# -- norms --------------------------------------------------------------------


def _refine_toward(verts: np.ndarray, corner: np.ndarray, levels: int) -> list:
    """2-D red refinement, recursing on the child containing `corner`."""
    out = []

    def red(tri, depth):
        v0, v1, v2 = tri
        m01, m02, m12 = (v0 + v1) / 2, (v0 + v2) / 2, (v1 + v2) / 2
        children = [
            np.array([v0, m01, m02]),
            np.array([m01, v1, m12]),
            np.array([m02, m12, v2]),
            np.array([m01, m12, m02]),
        ]
        for child in children:
            touches = any(np.linalg.norm(p - corner) < 1e-14 for p in child)
            if touches and depth < levels:
                red(child, depth + 1)
            else:
                out.append(child)

    red(np.asarray(verts, dtype=float), 0)
    return out


def _cell_quad_pieces(mesh, cid, corner, corner_levels):
    """(vertices, measure) pieces covering the cell, refined near a corner."""
    verts = cell_vertices(mesh, cid)
    if corner is not None and any(
        np.linalg.norm(v - corner) < 1e-14 for v in verts
    ):
        return [(t, simplex_measure(t)) for t in _refine_toward(verts, corner, corner_levels)]
    return [(verts, simplex_measure(verts))]


def broken_error_norms(mesh: Mesh, cache: ElementCache, u_h: DiscreteFunction,
                       partials, ks, exactness: int | None = None,
                       corner=None, corner_levels: int = 4) -> dict:
    """Broken seminorms |u - u_h|_{k,h} for the requested orders k.

    `partials` may be None to measure u_h itself. Cells touching `corner` are
    integrated on a dyadically refined sub-triangulation (singular solutions).
    """
    m, n = cache.m, mesh.dim
    if exactness is None:
        exactness = 2 * m + 4
    rule = quadrature(n, exactness)
    corner = None if corner is None else np.asarray(corner, dtype=float)
    expo_arr = np.array(basis_multiindices(n, m))
    design_cache: dict = {}
    acc = {k: 0.0 for k in ks}
    for cid in range(mesh.n_cells):
        basis = cache.get(cid)
        local = u_h.cell_values(cid)
        pieces = _cell_quad_pieces(mesh, cid, corner, corner_levels)
        ckey = cache.class_key(cid)
        for verts, measure in pieces:
            pts = rule.physical_points(verts)
            y = (pts - basis.center) / basis.scale
            mono = None
            for k in ks:
                for alpha in _exact_order_indices(n, k):
                    dkey = (ckey, alpha)
                    D = design_cache.get(dkey)
                    if D is None:
                        D = (_deriv_op(n, m, alpha) @ basis.coeffs) / basis.scale ** k
                        design_cache[dkey] = D
                    if mono is None:
                        mono = np.prod(y[:, None, :] ** expo_arr[None, :, :], axis=2)
                    vh = mono @ D @ local
                    if partials is not None:
                        vh = np.asarray(partials(pts, alpha), dtype=float) - vh
                    acc[k] += measure * float(rule.weights @ (vh * vh))
    return {k: float(np.sqrt(v)) for k, v in acc.items()}


def _face_jump_sq(mesh: Mesh, cache: ElementCache, u_h: DiscreteFunction,
                  partials, plan: PenaltyPlan, exactness: int) -> float:
    """sum_l sum_F h_F^{exp} sum_b ||[d^b (u - u_h)]||_{0,F}^2 by quadrature.

    Interior jumps of the (smooth) callback cancel, so only u_h enters there;
    boundary faces use the one-sided trace of the difference.
    """
    if not plan.levels:
        return 0.0
    n, m = plan.n, plan.m
    sizes = mesh_sizes(mesh)
    rule = quadrature(n - 1, exactness)
    expo_arr = np.array(basis_multiindices(n, m))
    total = 0.0
    for fkey, ent in mesh.tables[1].items():
        F = mesh.vertices[list(fkey)]
        measure = simplex_measure(F)
        pts = rule.physical_points(F)
        hF = sizes.h_face[fkey]
        for level in plan.levels:
            for beta in level.betas:
                traces = []
                for cid in ent.cells:
                    basis = cache.get(cid)
                    y = (pts - basis.center) / basis.scale
                    mono = np.prod(y[:, None, :] ** expo_arr[None, :, :], axis=2)
                    D = (_deriv_op(n, m, beta) @ basis.coeffs) / basis.scale ** level.order
                    traces.append(mono @ D @ u_h.cell_values(cid))
                if ent.boundary:
                    vals = traces[0]
                    if partials is not None:
                        vals = np.asarray(partials(pts, beta), dtype=float) - vals
                else:
                    vals = traces[0] - traces[1]
                total += hF ** level.exponent * measure * float(rule.weights @ (vals * vals))
    return total


def energy_error_norm(mesh: Mesh, cache: ElementCache, u_h: DiscreteFunction,
                      partials, exactness: int | None = None,
                      corner=None, corner_levels: int = 4) -> float:
    """Mesh-dependent norm ||u - u_h||_h (pass partials=None for ||u_h||_h)."""
    m, n = cache.m, mesh.dim
    if exactness is None:
        exactness = 2 * m + 4
    broken = broken_error_norms(mesh, cache, u_h, partials, (m,), exactness,
                                corner, corner_levels)[m]
    jumps = _face_jump_sq(mesh, cache, u_h, partials, penalty_plan(m, n), exactness)
    return float(np.sqrt(broken ** 2 + jumps))


def broken_seminorm_discrete(mesh: Mesh, cache: ElementCache,
                             u_h: DiscreteFunction, k: int) -> float:
    """|u_h|_{k,h} by exact polynomial integration (matrix-free pathway)."""
    n = mesh.dim
    total = 0.0
    for cid in range(mesh.n_cells):
        p = u_h.local_poly(cid, cache)
        verts = cell_vertices(mesh, cid)
        for alpha in _exact_order_indices(n, k):
            q = derivative(p, alpha)
            total += integrate_simplex_exact(q * q, verts)
    return float(np.sqrt(total))


def energy_norm_discrete(mesh: Mesh, cache: ElementCache,
                         u_h: DiscreteFunction) -> float:
    """||u_h||_h by exact integration, independent of the assembled matrix."""
    m, n = cache.m, mesh.dim
    plan = penalty_plan(m, n)
    total = broken_seminorm_discrete(mesh, cache, u_h, m) ** 2
    if plan.levels:
        sizes = mesh_sizes(mesh)
        for fkey, ent in mesh.tables[1].items():
            F = mesh.vertices[list(fkey)]
            hF = sizes.h_face[fkey]
            polys = [u_h.local_poly(cid, cache) for cid in ent.cells]
            for level in plan.levels:
                for beta in level.betas:
                    if len(polys) == 2:
                        q = derivative(polys[0], beta) - derivative(polys[1], beta)
                    else:
                        q = derivative(polys[0], beta)
                    total += hF ** level.exponent * integrate_simplex_exact(q * q, F)
    return float(np.sqrt(total))
