"""The degree-m nonconforming element on a physical n-simplex.

DOFs are mean values of mixed directional derivatives over sub-simplexes,
organized by level l = -1, 0, ..., L with L = floor(m/(n+1)): at level l and
codimension k the derivative order is m - k - (n+1)(L - l), taken along the
sub-simplex's global normal frame; level -1 is the cell average and exists
iff m = 0 mod (n+1). The nodal basis solves a generalized Vandermonde system
on monomials centered and scaled per cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from . import poly
from .mesh import Mesh, cell_vertices, local_subsimplices
from .poly import Poly, basis_multiindices, monomial_means, quadrature

__all__ = [
    "DofSpec",
    "ElementBasis",
    "ElementCache",
    "UnisolvenceError",
    "build_element",
    "cell_frame_table",
    "dof_matrix",
    "dof_table_text",
    "dof_values_of_function",
    "enumerate_dofs",
    "evaluate_dof",
    "interpolate_local",
    "mixed_derivative_weights",
    "n_levels",
]


class UnisolvenceError(RuntimeError):
    """The generalized Vandermonde system is numerically singular."""


def n_levels(m: int, n: int) -> int:
    """L = floor(m/(n+1))."""
    return m // (n + 1)


@dataclass(frozen=True)
class DofSpec:
    """One DOF functional: mean of a mixed normal derivative on a sub-simplex.

    level -1 is the cell average (codim and local_subsimplex are None, empty
    orders). Otherwise normal_orders has one entry per frame direction of the
    codim-k sub-simplex and |normal_orders| = m - k - (n+1)(L - level).
    """

    level: int
    codim: int | None
    local_subsimplex: int | None
    normal_orders: tuple

    @property
    def order(self) -> int:
        return sum(self.normal_orders)


def _orders_of_total(k: int, total: int):
    """Multi-indices of length k with |a| = total, graded-lex order."""
    if total == 0:
        return [(0,) * k]
    return [a for a in basis_multiindices(k, total) if sum(a) == total]


@lru_cache(maxsize=None)
def enumerate_dofs(m: int, n: int) -> tuple:
    """Ordered DOF list: level ascending, codim descending, sub-simplex, orders."""
    if m < 0 or n < 1:
        raise ValueError(f"need m >= 0 and n >= 1, got m={m}, n={n}")
    L = n_levels(m, n)
    specs: list[DofSpec] = []
    if m % (n + 1) == 0:
        specs.append(DofSpec(-1, None, None, ()))
    for level in range(L + 1):
        kmax = min(n, m - (n + 1) * (L - level))
        for codim in range(kmax, 0, -1):
            order = m - codim - (n + 1) * (L - level)
            n_subs = comb(n + 1, codim)
            for li in range(n_subs):
                for a in _orders_of_total(codim, order):
                    specs.append(DofSpec(level, codim, li, a))
    if len(specs) != comb(m + n, n):
        raise AssertionError(
            f"DOF count {len(specs)} != dim P_{m} = {comb(m + n, n)} for (m={m}, n={n})"
        )
    return tuple(specs)


def cell_frame_table(mesh: Mesh, frames: dict, cell_id: int) -> dict:
    """Map (codim, local sub-simplex index) -> global frame rows for one cell."""
    cell = mesh.cells[cell_id]
    table = {}
    for codim in range(1, mesh.dim + 1):
        for li, sub in enumerate(local_subsimplices(mesh.dim, codim)):
            key = tuple(cell[i] for i in sub)
            table[(codim, li)] = frames[key]
    return table


def mixed_derivative_weights(frame: np.ndarray, orders) -> dict:
    """Expansion of prod_i (nu_i . grad)^{a_i} into sum_beta w_beta d^beta."""
    n = frame.shape[1]
    acc = {(0,) * n: 1.0}
    for direction, a in zip(frame, orders):
        for _ in range(int(a)):
            new: dict[tuple, float] = {}
            for beta, w in acc.items():
                for t in range(n):
                    if direction[t] != 0.0:
                        key = beta[:t] + (beta[t] + 1,) + beta[t + 1:]
                        new[key] = new.get(key, 0.0) + w * direction[t]
            acc = new
    return acc


def _subsimplex_vertices(cell_verts: np.ndarray, n: int, codim: int, li: int) -> np.ndarray:
    sub = local_subsimplices(n, codim)[li]
    return cell_verts[list(sub)]


def evaluate_dof(spec: DofSpec, p: Poly, cell_verts, frame_table: dict,
                 _means_cache: dict | None = None) -> float:
    """Apply one DOF functional to a polynomial (exact integration)."""
    cell_verts = np.asarray(cell_verts, dtype=float)
    n = cell_verts.shape[1]
    if spec.level == -1:
        q = p
        F = cell_verts
        cache_key = (-1, 0)
    else:
        if (spec.codim, spec.local_subsimplex) not in frame_table:
            raise KeyError(
                f"no frame supplied for sub-simplex (codim {spec.codim}, "
                f"index {spec.local_subsimplex})"
            )
        frame = frame_table[(spec.codim, spec.local_subsimplex)]
        q = poly.directional_derivative(p, frame, spec.normal_orders)
        F = _subsimplex_vertices(cell_verts, n, spec.codim, spec.local_subsimplex)
        cache_key = (spec.codim, spec.local_subsimplex)
    if _means_cache is not None:
        tkey = (cache_key, q.degree)
        if tkey not in _means_cache:
            _means_cache[tkey] = monomial_means(F, q.exponents())
        means = _means_cache[tkey]
    else:
        means = monomial_means(F, q.exponents())
    return float(means @ q.coeffs)


@lru_cache(maxsize=None)
def _shift_table(n: int, m: int, beta: tuple):
    """Arrays (target index, falling-factorial coeff) of d^beta on the basis."""
    expo = basis_multiindices(n, m)
    idx = {a: i for i, a in enumerate(expo)}
    tgt = np.zeros(len(expo), dtype=np.int64)
    fall = np.zeros(len(expo))
    for i, a in enumerate(expo):
        if all(ai >= bi for ai, bi in zip(a, beta)):
            c = 1.0
            for ai, bi in zip(a, beta):
                for r in range(bi):
                    c *= ai - r
            tgt[i] = idx[tuple(ai - bi for ai, bi in zip(a, beta))]
            fall[i] = c
    return tgt, fall


def dof_matrix(m: int, n: int, cell_verts, frame_table: dict) -> tuple:
    """Generalized Vandermonde V[j, i] = d_j(y^alpha_i), centered monomials.

    Returns (V, center, scale, specs).
    """
    cell_verts = np.asarray(cell_verts, dtype=float)
    specs = enumerate_dofs(m, n)
    J = len(specs)
    center = cell_verts.mean(axis=0)
    diff = cell_verts[:, None, :] - cell_verts[None, :, :]
    scale = float(np.sqrt((diff ** 2).sum(axis=2).max()))
    expo = basis_multiindices(n, m)

    means_cache: dict = {}

    def means_of(codim_li) -> np.ndarray:
        if codim_li not in means_cache:
            if codim_li == (-1, 0):
                F = cell_verts
            else:
                F = _subsimplex_vertices(cell_verts, n, *codim_li)
            means_cache[codim_li] = monomial_means(F, expo, center, scale)
        return means_cache[codim_li]

    V = np.zeros((J, J))
    for j, spec in enumerate(specs):
        if spec.level == -1:
            V[j] = means_of((-1, 0))
            continue
        frame = frame_table[(spec.codim, spec.local_subsimplex)]
        weights = mixed_derivative_weights(frame, spec.normal_orders)
        means = means_of((spec.codim, spec.local_subsimplex))
        row = np.zeros(J)
        for beta, w in weights.items():
            tgt, fall = _shift_table(n, m, beta)
            row += w * fall * means[tgt]
        V[j] = row / scale ** spec.order
    return V, center, scale, specs


@dataclass
class ElementBasis:
    """Nodal basis of one element; columns of `coeffs` are the basis functions
    expressed in monomials of y = (x - center)/scale."""

    m: int
    n: int
    cell_id: int | None
    vertices: np.ndarray
    center: np.ndarray
    scale: float
    coeffs: np.ndarray            # (J, J), coeffs[:, i] = nodal basis p_i
    dof_list: tuple
    vandermonde_condition: float

    @property
    def n_dofs(self) -> int:
        return len(self.dof_list)

    def _centered_monomials(self) -> list:
        mono = getattr(self, "_mono", None)
        if mono is None:
            n, s, c = self.n, self.scale, self.center
            A = np.eye(n) / s
            b = -c / s
            mono = [
                Poly.monomial(n, a).compose_affine(A, b).with_degree(self.m)
                for a in basis_multiindices(n, self.m)
            ]
            self._mono = mono
        return mono

    def nodal_basis(self) -> list:
        """The J nodal basis functions as physical-coordinate polynomials."""
        mono = self._centered_monomials()
        out = []
        for i in range(self.n_dofs):
            c = self.coeffs[:, i]
            q = Poly(self.n, self.m, sum(c[k] * mono[k].coeffs for k in range(len(mono))))
            out.append(q)
        return out

    def local_poly(self, dof_values) -> Poly:
        """Linear combination sum_i p_i * values_i, as a physical polynomial."""
        dof_values = np.asarray(dof_values, dtype=float)
        if dof_values.shape != (self.n_dofs,):
            raise ValueError(
                f"expected {self.n_dofs} DOF values, got shape {dof_values.shape}"
            )
        mono = self._centered_monomials()
        w = self.coeffs @ dof_values
        return Poly(self.n, self.m, sum(w[k] * mono[k].coeffs for k in range(len(mono))))


def build_element(m: int, n: int, cell_verts, frame_table: dict,
                  cell_id: int | None = None, verify: bool = True,
                  cond_limit: float = 1e12, duality_tol: float = 1e-9) -> ElementBasis:
    """Solve V a_i = e_i for the nodal basis and verify d_j(p_i) = delta_ij."""
    cell_verts = np.asarray(cell_verts, dtype=float)
    V, center, scale, specs = dof_matrix(m, n, cell_verts, frame_table)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > cond_limit:
        raise UnisolvenceError(
            f"Vandermonde condition {cond:.3e} exceeds {cond_limit:.1e} for "
            f"(m={m}, n={n}) on cell {cell_id} with vertices\n{cell_verts}"
        )
    C = np.linalg.solve(V, np.eye(len(specs)))
    basis = ElementBasis(m, n, cell_id, cell_verts, center, scale, C, specs, cond)
    if verify:
        # independent re-evaluation through the generic functional pathway
        cache: dict = {}
        G = np.empty_like(V)
        for i, p in enumerate(basis.nodal_basis()):
            for j, spec in enumerate(specs):
                G[j, i] = evaluate_dof(spec, p, cell_verts, frame_table, cache)
        resid = float(np.abs(G - np.eye(len(specs))).max())
        if resid > duality_tol:
            raise UnisolvenceError(
                f"nodal duality residual {resid:.3e} > {duality_tol:.1e} for "
                f"(m={m}, n={n}) on cell {cell_id} (condition {cond:.3e})"
            )
    return basis


def interpolate_local(basis: ElementBasis, dof_values) -> Poly:
    """The element interpolant sum_i p_i d_i(v) from precomputed DOF values."""
    return basis.local_poly(dof_values)


def dof_value_from_callback(spec: DofSpec, cell_verts, frame_table: dict,
                            partials, exactness: int) -> float:
    """One DOF of a general function given its partial-derivative callback."""
    cell_verts = np.asarray(cell_verts, dtype=float)
    n = cell_verts.shape[1]
    if spec.level == -1:
        rule = quadrature(n, exactness)
        pts = rule.physical_points(cell_verts)
        return float(rule.weights @ partials(pts, (0,) * n))
    frame = frame_table[(spec.codim, spec.local_subsimplex)]
    F = _subsimplex_vertices(cell_verts, n, spec.codim, spec.local_subsimplex)
    rule = quadrature(n - spec.codim, exactness)
    pts = rule.physical_points(F)
    acc = 0.0
    for beta, w in mixed_derivative_weights(frame, spec.normal_orders).items():
        acc += w * float(rule.weights @ partials(pts, beta))
    return acc


def dof_values_of_function(m: int, n: int, cell_verts, frame_table: dict,
                           partials, exactness: int | None = None) -> np.ndarray:
    """All element DOFs of a function supplied as a partial-derivative callback."""
    if exactness is None:
        exactness = 2 * m + 4
    return np.array([
        dof_value_from_callback(spec, cell_verts, frame_table, partials, exactness)
        for spec in enumerate_dofs(m, n)
    ])


class ElementCache:
    """Per-mesh element provider with translation-class caching.

    Nodal coefficients depend on vertex positions only through differences
    (frames and centered monomials are translation invariant), so cells that
    are translates share one solved element.
    """

    def __init__(self, mesh: Mesh, frames: dict, m: int):
        self.mesh = mesh
        self.frames = frames
        self.m = m
        self._classes: dict = {}
        self._frame_tables: dict = {}
        self._class_of_cell: dict = {}

    def frame_table(self, cell_id: int) -> dict:
        tab = self._frame_tables.get(cell_id)
        if tab is None:
            tab = cell_frame_table(self.mesh, self.frames, cell_id)
            self._frame_tables[cell_id] = tab
        return tab

    def class_key(self, cell_id: int):
        key = self._class_of_cell.get(cell_id)
        if key is None:
            verts = cell_vertices(self.mesh, cell_id)
            rel = np.round(verts - verts.mean(axis=0), 12)
            tab = self.frame_table(cell_id)
            fr = np.round(np.concatenate([tab[k] for k in sorted(tab)]), 12)
            key = (rel.tobytes(), fr.tobytes())
            self._class_of_cell[cell_id] = key
        return key

    def get(self, cell_id: int) -> ElementBasis:
        key = self.class_key(cell_id)
        proto = self._classes.get(key)
        verts = cell_vertices(self.mesh, cell_id)
        if proto is None:
            basis = build_element(self.m, self.mesh.dim, verts,
                                  self.frame_table(cell_id), cell_id=cell_id)
            self._classes[key] = basis
            return basis
        return ElementBasis(proto.m, proto.n, cell_id, verts, verts.mean(axis=0),
                            proto.scale, proto.coeffs, proto.dof_list,
                            proto.vandermonde_condition)


def dof_table_text(m: int, n: int) -> str:
    """Human-readable DOF catalog: counts per level and codimension."""
    specs = enumerate_dofs(m, n)
    L = n_levels(m, n)
    lines = [
        f"element m={m}, n={n}: {len(specs)} local DOFs "
        f"(= dim of degree-{m} polynomials, C({m + n},{n}))",
        f"levels: -1..{L} (L = floor(m/(n+1)) = {L})",
    ]
    if m % (n + 1) == 0:
        lines.append("level -1: cell average, 1 DOF")
    for level in range(L + 1):
        kmax = min(n, m - (n + 1) * (L - level))
        for codim in range(kmax, 0, -1):
            order = m - codim - (n + 1) * (L - level)
            n_subs = comb(n + 1, codim)
            n_orders = len(_orders_of_total(codim, order))
            lines.append(
                f"level {level}: codim {codim} (dim-{n - codim} sub-simplexes), "
                f"derivative order {order}: {n_subs} x {n_orders} = "
                f"{n_subs * n_orders} DOFs"
            )
    plan_orders = [m - (n + 1) * (L - l + 1) for l in range(1, L + 1)]
    if plan_orders:
        lines.append(
            "penalized derivative orders (absent from the DOF set): "
            + ", ".join(str(o) for o in plan_orders)
        )
    return "\n".join(lines)
