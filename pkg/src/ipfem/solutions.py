"""Exact solutions with closed-form partial derivatives.

Each entry supplies a vectorized callback partials(points, alpha) for all
orders up to max_order, plus the source term of the discretized operator
(f = None means an identically zero source). Callbacks accept (N, n) arrays
or single points.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi
from typing import Callable

import numpy as np

from .poly import basis_multiindices

__all__ = ["ExactSolution", "get_solution", "harmonic_exp_sin",
           "lshape_singular", "manufactured_poly_trig"]


@dataclass(frozen=True)
class ExactSolution:
    name: str
    dim: int
    smoothness: str            # "analytic" | "singular"
    max_order: int
    partials: Callable         # (points, alpha) -> values
    f: Callable | None         # points -> values; None means f == 0


def _vectorize(fn):
    def wrapped(points, alpha):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = fn(pts, tuple(int(a) for a in alpha))
        return float(vals[0]) if np.asarray(points).ndim == 1 else vals
    return wrapped


def harmonic_exp_sin() -> ExactSolution:
    """u = exp(pi y) sin(pi x) on the unit square; harmonic, so f == 0."""

    def partials(pts, alpha):
        a, b = alpha
        return pi ** (a + b) * np.exp(pi * pts[:, 1]) * np.sin(pi * pts[:, 0] + a * pi / 2)

    return ExactSolution("harmonic_exp_sin", 2, "analytic", 12,
                         _vectorize(partials), None)


def lshape_singular() -> ExactSolution:
    """u = r^{5/2} sin(5 theta / 2) on the L-shaped domain, theta in [0, 3pi/2].

    Partials come from the complex form u = Im(z^{5/2}): d^alpha u is the
    imaginary part of c_alpha z^{5/2-|alpha|} with
    c_alpha = prod_{j<|alpha|}(5/2 - j) * i^{alpha_2}. Third derivatives are
    unbounded at the origin and evaluate to NaN there.
    """

    def partials(pts, alpha):
        a1, a2 = alpha
        order = a1 + a2
        s = 2.5 - order
        c = 1.0
        for j in range(order):
            c *= 2.5 - j
        c = c * (1j ** a2)
        x, y = pts[:, 0], pts[:, 1]
        r = np.hypot(x, y)
        theta = np.arctan2(y, x)
        theta = np.where(theta < 0.0, theta + 2.0 * pi, theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            rs = np.where(r > 0.0, r ** s, 0.0 if s > 0.0 else np.nan)
        val = rs * (c.real * np.sin(s * theta) + c.imag * np.cos(s * theta))
        return np.where(r > 0.0, val, 0.0 if s > 0.0 else np.nan)

    return ExactSolution("lshape_singular", 2, "singular", 3,
                         _vectorize(partials), None)


def manufactured_poly_trig(m: int, n: int) -> ExactSolution:
    """u = prod_i sin^2(pi x_i) on the unit box, with the matching source.

    The trace and normal derivative vanish on the boundary, which covers the
    essential conditions for m <= 2. The source is the operator the assembled
    form discretizes, (-1)^m sum_{|a|=m} d^{2a} u (identical to (-Delta)^m u
    for m = 1).
    """
    if (m, n) not in {(1, 2), (2, 2), (1, 3)}:
        raise ValueError(f"manufactured solution not provided for (m, n) = ({m}, {n})")

    def g(x, a):
        # d^a sin^2(pi x); sin^2 = (1 - cos 2 pi x)/2
        if a == 0:
            return np.sin(pi * x) ** 2
        return -0.5 * (2 * pi) ** a * np.cos(2 * pi * x + a * pi / 2)

    def partials(pts, alpha):
        out = np.ones(pts.shape[0])
        for j, a in enumerate(alpha):
            out = out * g(pts[:, j], a)
        return out

    vec = _vectorize(partials)
    m_alphas = [a for a in basis_multiindices(n, m) if sum(a) == m]

    def f(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        acc = np.zeros(pts.shape[0])
        for alpha in m_alphas:
            acc += vec(pts, tuple(2 * a for a in alpha))
        vals = (-1.0) ** m * acc
        return float(vals[0]) if np.asarray(points).ndim == 1 else vals

    return ExactSolution(f"manufactured_poly_trig_{m}_{n}", n, "analytic",
                         2 * m, vec, f)


def get_solution(name: str, m: int, n: int) -> ExactSolution:
    if name == "harmonic_exp_sin":
        return harmonic_exp_sin()
    if name == "lshape_singular":
        return lshape_singular()
    if name == "manufactured":
        return manufactured_poly_trig(m, n)
    raise KeyError(f"unknown solution '{name}' "
                   "(have: harmonic_exp_sin, lshape_singular, manufactured)")
