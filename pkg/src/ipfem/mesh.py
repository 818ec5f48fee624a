"""Simplicial meshes with full sub-simplex lattices and global normal frames.

Cells are stored as sorted vertex tuples; orientation never enters the method
(volumes use absolute determinants, DOFs use globally fixed frames). Meshes
are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

__all__ = [
    "Mesh",
    "MeshSizes",
    "NormalFrame",
    "SubEntity",
    "build_box_mesh",
    "build_lshape_mesh",
    "cell_vertices",
    "check_invariants",
    "dump_mesh",
    "local_subsimplices",
    "mesh_sizes",
    "normal_frame",
    "normal_frames",
]

SubSimplexKey = tuple  # sorted tuple of global vertex ids


@dataclass(frozen=True)
class SubEntity:
    cells: tuple      # ids of incident cells, ascending
    boundary: bool


@dataclass
class Mesh:
    dim: int
    vertices: np.ndarray                      # (nv, dim)
    cells: list                               # sorted (dim+1)-tuples of vertex ids
    tables: dict = field(default_factory=dict)  # codim -> {key: SubEntity}

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]


@dataclass(frozen=True)
class NormalFrame:
    key: SubSimplexKey
    normals: np.ndarray  # (codim, dim), orthonormal rows spanning the normal space


@dataclass(frozen=True)
class MeshSizes:
    h_cell: np.ndarray   # diameter of each cell
    h_face: dict         # codim-1 key -> diameter of the incident-cell union
    h: float             # max over cells


def local_subsimplices(n: int, codim: int) -> tuple:
    """Local vertex-index tuples of the codim-k sub-simplexes of an n-simplex."""
    return tuple(combinations(range(n + 1), n + 1 - codim))


def cell_vertices(mesh: Mesh, cell_id: int) -> np.ndarray:
    return mesh.vertices[list(mesh.cells[cell_id])]


def _diameter(points: np.ndarray) -> float:
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=2).max()))


def _build_tables(dim: int, vertices: np.ndarray, cells: list) -> dict:
    tables: dict[int, dict] = {}
    incident: dict[int, dict] = {k: {} for k in range(1, dim + 1)}
    for cid, cell in enumerate(cells):
        for k in range(1, dim + 1):
            for sub in combinations(cell, dim + 1 - k):
                incident[k].setdefault(sub, []).append(cid)
    facets = incident[1]
    boundary_facets = []
    for key, cids in facets.items():
        if len(cids) not in (1, 2):
            raise ValueError(
                f"facet {key} incident to {len(cids)} cells; mesh is not conforming"
            )
        if len(cids) == 1:
            boundary_facets.append(key)
    boundary_subs: dict[int, set] = {k: set() for k in range(1, dim + 1)}
    boundary_subs[1] = set(boundary_facets)
    for key in boundary_facets:
        for k in range(2, dim + 1):
            for sub in combinations(key, dim + 1 - k):
                boundary_subs[k].add(sub)
    for k in range(1, dim + 1):
        tables[k] = {
            key: SubEntity(tuple(sorted(cids)), key in boundary_subs[k])
            for key, cids in sorted(incident[k].items())
        }
    return tables


def _check_cells(dim: int, vertices: np.ndarray, cells: list) -> None:
    for cid, cell in enumerate(cells):
        V = vertices[list(cell)]
        E = V[1:] - V[0]
        h = _diameter(V)
        det = abs(np.linalg.det(E))
        if det <= 1e-12 * h ** dim:
            raise ValueError(f"cell {cid} is degenerate (|det| = {det:.3e})")


def _make_mesh(dim: int, vertices: np.ndarray, cells: list) -> Mesh:
    cells = [tuple(sorted(c)) for c in cells]
    _check_cells(dim, vertices, cells)
    return Mesh(dim, vertices, cells, _build_tables(dim, vertices, cells))


def build_box_mesh(n: int, divisions: int, lo=None, hi=None) -> Mesh:
    """Uniform simplicial grid on a box: divisions^n sub-boxes, Kuhn-split.

    In 2-D each square is split along its (+1,+1) diagonal; in 3-D each cube
    into the 6 Kuhn tetrahedra sharing the main diagonal. The split pattern is
    identical in every sub-box, so the grid is conforming.
    """
    if n not in (1, 2, 3):
        raise ValueError(f"dimension {n} not supported (need 1, 2 or 3)")
    if divisions < 1:
        raise ValueError(f"divisions must be >= 1, got {divisions}")
    lo = np.full(n, 0.0) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(n, 1.0) if hi is None else np.asarray(hi, dtype=float)
    if not np.all(hi > lo):
        raise ValueError("need lo < hi componentwise")

    d = divisions
    axes = [np.linspace(lo[j], hi[j], d + 1) for j in range(n)]
    shape = (d + 1,) * n

    def vid(idx) -> int:
        return int(np.ravel_multi_index(idx, shape))

    grids = np.meshgrid(*axes, indexing="ij")
    vertices = np.column_stack([g.ravel() for g in grids])

    cells = []
    for corner in np.ndindex(*(d,) * n):
        for perm in permutations(range(n)):
            idx = list(corner)
            walk = [vid(idx)]
            for ax in perm:
                idx[ax] += 1
                walk.append(vid(idx))
            cells.append(tuple(walk))
    return _make_mesh(n, vertices, cells)


def build_lshape_mesh(divisions_per_unit: int) -> Mesh:
    """L-shaped domain (-1,1)^2 minus the closed fourth-quadrant unit square.

    Three unit squares, each meshed like build_box_mesh with the same diagonal
    pattern; the interfaces are conforming by construction.
    """
    d = divisions_per_unit
    if d < 1:
        raise ValueError(f"divisions_per_unit must be >= 1, got {d}")
    coords = np.linspace(-1.0, 1.0, 2 * d + 1)
    vid_map = {}
    vertices = []
    for j, y in enumerate(coords):
        for i, x in enumerate(coords):
            if x > 0.0 and y < 0.0:
                continue  # interior of the removed quadrant
            vid_map[(i, j)] = len(vertices)
            vertices.append((x, y))
    cells = []
    for j in range(2 * d):
        for i in range(2 * d):
            if coords[i] >= 0.0 and coords[j + 1] <= 0.0:
                continue  # sub-square inside the removed quadrant
            v00 = vid_map[(i, j)]
            v10 = vid_map[(i + 1, j)]
            v01 = vid_map[(i, j + 1)]
            v11 = vid_map[(i + 1, j + 1)]
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    return _make_mesh(2, np.array(vertices, dtype=float), cells)


# -- normal frames -----------------------------------------------------------


def _orthonormal_frame(edges: np.ndarray, n: int) -> np.ndarray:
    """Deterministic orthonormal basis of the normal space of span(edges).

    Edge vectors first, then canonical axes accepted greedily whenever they
    increase the rank; stabilized (modified, re-orthogonalized) Gram-Schmidt.
    The trailing vectors, those coming from the axes, form the frame.
    """
    basis: list[np.ndarray] = []

    def residual(v: np.ndarray) -> np.ndarray:
        w = v.astype(float).copy()
        for b in basis:
            w -= (b @ w) * b
        for b in basis:  # re-orthogonalization pass
            w -= (b @ w) * b
        return w

    for e in edges:
        w = residual(e)
        nw = np.linalg.norm(w)
        if nw <= 1e-10 * max(np.linalg.norm(e), 1e-300):
            raise ValueError("degenerate sub-simplex: edge vectors are dependent")
        basis.append(w / nw)
    n_tangent = len(basis)
    for ax in range(n):
        if len(basis) == n:
            break
        w = residual(np.eye(n)[ax])
        nw = np.linalg.norm(w)
        if nw > 1e-10:
            basis.append(w / nw)
    if len(basis) != n:
        raise ValueError("Gram-Schmidt failed to complete a basis of R^n")
    return np.array(basis[n_tangent:])


def normal_frame(mesh: Mesh, key) -> NormalFrame:
    """Orthonormal basis of the normal space of a sub-simplex.

    Depends only on the vertex coordinates and the sorted key, never on the
    incident cells, so both cells sharing the sub-simplex see the same frame.
    """
    key = tuple(key)
    n = mesh.dim
    codim = n - (len(key) - 1)
    if not 1 <= codim <= n:
        raise ValueError(f"key {key} has no normal space in dimension {n}")
    if key not in mesh.tables[codim]:
        raise KeyError(f"sub-simplex {key} not in mesh")
    V = mesh.vertices[list(key)]
    normals = _orthonormal_frame(V[1:] - V[0], n)
    return NormalFrame(key, normals)


def normal_frames(mesh: Mesh) -> dict:
    """Frames for every sub-simplex of every codimension, keyed by vertex tuple."""
    out = {}
    eye = np.eye(mesh.dim)
    for codim in range(1, mesh.dim + 1):
        for key in mesh.tables[codim]:
            if codim == mesh.dim:
                out[key] = eye  # a vertex: Gram-Schmidt of the canonical axes
            else:
                out[key] = normal_frame(mesh, key).normals
    return out


def mesh_sizes(mesh: Mesh) -> MeshSizes:
    h_cell = np.array([_diameter(cell_vertices(mesh, c)) for c in range(mesh.n_cells)])
    h_face = {}
    for key, ent in mesh.tables[1].items():
        vids = sorted({v for cid in ent.cells for v in mesh.cells[cid]})
        h_face[key] = _diameter(mesh.vertices[vids])
    return MeshSizes(h_cell, h_face, float(h_cell.max()))


def check_invariants(mesh: Mesh) -> None:
    """Raise AssertionError if a structural mesh invariant fails."""
    _check_cells(mesh.dim, mesh.vertices, mesh.cells)
    sizes = mesh_sizes(mesh)
    for key, ent in mesh.tables[1].items():
        assert len(ent.cells) in (1, 2)
        assert ent.boundary == (len(ent.cells) == 1)
        for cid in ent.cells:
            assert sizes.h_face[key] >= sizes.h_cell[cid] - 1e-14
    boundary_facets = [k for k, e in mesh.tables[1].items() if e.boundary]
    for codim in range(2, mesh.dim + 1):
        for key, ent in mesh.tables[codim].items():
            contained = any(set(key) <= set(f) for f in boundary_facets)
            assert ent.boundary == contained


def dump_mesh(mesh: Mesh) -> str:
    """Plain-text dump: header 'n <dim> <#vertices> <#cells>', vertices, cells."""
    lines = [f"n {mesh.dim} {mesh.n_vertices} {mesh.n_cells}"]
    for v in mesh.vertices:
        lines.append(" ".join(f"{x:.17g}" for x in v))
    for cell in mesh.cells:
        lines.append(" ".join(str(i) for i in cell))
    return "\n".join(lines) + "\n"
