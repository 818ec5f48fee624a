"""Self-contained invariant battery behind `ipfem verify`.

A quick, deterministic subset of the test suite: exact-integration oracle,
Green's identity, DOF counting, unisolvence, penalty closed forms, DOF
continuity, and the coercivity/boundedness sandwich.
"""

from __future__ import annotations

from math import comb, factorial, prod

import numpy as np

from .assemble import assemble, energy_norm_discrete, penalty_plan
from .element import ElementCache, build_element, enumerate_dofs
from .mesh import build_box_mesh, normal_frames
from .poly import Poly, basis_multiindices, integrate_simplex_exact, simplex_measure
from .space import DiscreteFunction, build_space, interpolate_global

__all__ = ["run_checks"]


def _random_simplex(rng, n):
    A = np.linalg.qr(rng.standard_normal((n, n)))[0]
    A = A * np.exp(rng.uniform(-0.5, 0.5, n))
    ref = np.vstack([np.zeros(n), np.eye(n)])
    return ref @ A.T * rng.uniform(0.2, 3.0) + rng.uniform(-1, 1, n)


def _check_moment_oracle(rng) -> bool:
    for _ in range(60):
        n = int(rng.integers(1, 4))
        verts = _random_simplex(rng, n)
        lam = _barycentric_polys(verts)
        a = tuple(int(x) for x in rng.integers(0, 4, n + 1))
        p = Poly.constant(n, 1.0)
        for lam_i, ai in zip(lam, a):
            for _ in range(ai):
                p = p * lam_i
        got = integrate_simplex_exact(p, verts)
        want = simplex_measure(verts) * factorial(n) * prod(
            factorial(x) for x in a) / factorial(sum(a) + n)
        if abs(got - want) > 1e-12 * max(abs(want), 1.0):
            return False
    return True


def _barycentric_polys(verts):
    n = verts.shape[1]
    M = np.vstack([np.ones(n + 1), verts.T])
    C = np.linalg.inv(M)  # row i: coefficients (c0, c) with lam_i = c0 + c.x
    out = []
    for i in range(n + 1):
        terms = {(0,) * n: C[i, 0]}
        for j in range(n):
            e = tuple(int(j == t) for t in range(n))
            terms[e] = C[i, j + 1]
        out.append(Poly.from_dict(n, terms))
    return out


def _check_greens_identity(rng) -> bool:
    from .mesh import local_subsimplices

    for _ in range(20):
        n = int(rng.integers(1, 4))
        verts = _random_simplex(rng, n)
        expo = basis_multiindices(n, 2)
        p = Poly(n, 2, rng.standard_normal(len(expo)))
        q = Poly(n, 2, rng.standard_normal(len(expo)))
        for axis in range(n):
            e = tuple(int(axis == t) for t in range(n))
            from .poly import derivative
            lhs = integrate_simplex_exact(derivative(p, e) * q, verts)
            lhs += integrate_simplex_exact(p * derivative(q, e), verts)
            rhs = 0.0
            for li, sub in enumerate(local_subsimplices(n, 1)):
                F = verts[list(sub)]
                opp = ({*range(n + 1)} - {*sub}).pop()
                nu = _outward_normal(verts, F, verts[opp])
                rhs += nu[axis] * integrate_simplex_exact(p * q, F)
            if abs(lhs - rhs) > 1e-10 * max(abs(lhs), abs(rhs), 1.0):
                return False
    return True


def _outward_normal(cell_verts, face_verts, opposite):
    n = cell_verts.shape[1]
    if n == 1:
        nu = face_verts[0] - opposite
        return nu / np.linalg.norm(nu)
    E = face_verts[1:] - face_verts[0]
    _, _, Vt = np.linalg.svd(E)
    nu = Vt[-1]
    if nu @ (face_verts.mean(axis=0) - opposite) < 0:
        nu = -nu
    return nu


def _check_dof_counts() -> bool:
    return all(
        len(enumerate_dofs(m, n)) == comb(m + n, n)
        for m in range(6) for n in range(1, 4)
    )


def _check_unisolvence(rng) -> bool:
    for n in (1, 2):
        for m in range(4):
            for _ in range(3):
                verts = _random_simplex(rng, n)
                build_element(m, n, verts, _simplex_frame_table(verts))
    return True


def _simplex_frame_table(verts):
    from .mesh import local_subsimplices
    from .mesh import _orthonormal_frame

    n = verts.shape[1]
    table = {}
    for codim in range(1, n + 1):
        for li, sub in enumerate(local_subsimplices(n, codim)):
            V = verts[list(sub)]
            table[(codim, li)] = _orthonormal_frame(V[1:] - V[0], n)
    return table


def _check_penalty_plan() -> bool:
    p32 = penalty_plan(3, 2).levels
    p42 = penalty_plan(4, 2).levels
    return (len(p32) == 1 and p32[0].order == 0 and p32[0].exponent == -5
            and len(p42) == 1 and p42[0].order == 1 and p42[0].exponent == -7
            and penalty_plan(2, 2).levels == ())


def _check_continuity_and_sandwich(rng) -> bool:
    mesh = build_box_mesh(2, 4)
    frames = normal_frames(mesh)
    dof_map = build_space(mesh, 3)
    cache = ElementCache(mesh, frames, 3)

    def partials(pts, alpha):
        a, b = alpha
        return (np.pi ** (a + b) * np.sin(np.pi * pts[:, 0] + a * np.pi / 2)
                * np.sin(np.pi * pts[:, 1] + b * np.pi / 2))

    v_h = interpolate_global(mesh, frames, dof_map, partials)
    from .element import evaluate_dof

    scale = max(abs(v_h.values).max(), 1.0)
    for codim in (1, 2):
        for key, ent in mesh.tables[codim].items():
            if len(ent.cells) < 2:
                continue
            vals = []
            for cid in ent.cells[:2]:
                sub_local = [mesh.cells[cid].index(v) for v in key]
                li = _local_index(mesh.dim, codim, tuple(sorted(sub_local)))
                spec = next(s for s in dof_map.specs
                            if s.codim == codim and s.local_subsimplex == li)
                p = v_h.local_poly(cid, cache)
                vals.append(evaluate_dof(spec, p, mesh.vertices[list(mesh.cells[cid])],
                                         cache.frame_table(cid)))
            if abs(vals[0] - vals[1]) > 1e-8 * scale:
                return False

    for eta in (0.5, 2.0):
        system = assemble(mesh, frames, dof_map, eta, cache=cache)
        S = system.matrix.to_scipy()
        for _ in range(10):
            x = rng.standard_normal(dof_map.n_dofs)
            v = DiscreteFunction(x, dof_map, mesh, frames)
            a_vv = float(x @ (S @ x))
            norm2 = energy_norm_discrete(mesh, cache, v) ** 2
            if not (min(1, eta) * norm2 - 1e-10 * norm2 <= a_vv
                    <= max(1, eta) * norm2 + 1e-10 * norm2):
                return False
    return True


def _local_index(n, codim, sub_tuple):
    from .mesh import local_subsimplices

    return local_subsimplices(n, codim).index(sub_tuple)


def run_checks(emit=print) -> bool:
    rng = np.random.default_rng(20240501)
    checks = [
        ("exact integration oracle (barycentric moments)", lambda: _check_moment_oracle(rng)),
        ("Green's identity on random simplices", lambda: _check_greens_identity(rng)),
        ("DOF count = dim P_m for m <= 5, n <= 3", _check_dof_counts),
        ("unisolvence on random simplices", lambda: _check_unisolvence(rng)),
        ("penalty plan closed forms", _check_penalty_plan),
        ("DOF continuity + coercivity sandwich", lambda: _check_continuity_and_sandwich(rng)),
    ]
    ok = True
    for name, fn in checks:
        try:
            passed = fn()
        except Exception as exc:  # a crash is a failure, reported not raised
            emit(f"[FAIL] {name}: {type(exc).__name__}: {exc}")
            ok = False
            continue
        emit(f"[{'PASS' if passed else 'FAIL'}] {name}")
        ok = ok and passed
    return ok
