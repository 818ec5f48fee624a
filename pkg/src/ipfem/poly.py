"""Dense multivariate polynomials in physical coordinates.

Coefficients live on the graded monomial basis of degree <= d (graded
lexicographic order, leading variable first within each degree). Exact
integration over embedded simplices goes through the barycentric moment
formula; numeric quadrature is reserved for non-polynomial integrands.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial, prod

import numpy as np

__all__ = [
    "Poly",
    "QuadratureRule",
    "basis_multiindices",
    "derivative",
    "derivative_matrix",
    "directional_derivative",
    "integrate_simplex_exact",
    "monomial_means",
    "monomial_pair_means",
    "pair_index_table",
    "quadrature",
    "simplex_measure",
]


class DegenerateSimplexError(ValueError):
    """Raised when a simplex has (numerically) zero measure."""


@lru_cache(maxsize=None)
def basis_multiindices(n: int, m: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of order <= m in graded lex order; C(m+n, n) of them."""
    if n < 1 or m < 0:
        raise ValueError(f"need n >= 1 and m >= 0, got n={n}, m={m}")

    def fixed_total(slots: int, total: int):
        if slots == 1:
            yield (total,)
            return
        for head in range(total, -1, -1):
            for tail in fixed_total(slots - 1, total - head):
                yield (head,) + tail

    out = []
    for deg in range(m + 1):
        out.extend(fixed_total(n, deg))
    assert len(out) == comb(m + n, n)
    return tuple(out)


@lru_cache(maxsize=None)
def _index_of(n: int, m: int) -> dict[tuple[int, ...], int]:
    return {a: i for i, a in enumerate(basis_multiindices(n, m))}


@lru_cache(maxsize=None)
def _derivative_matrix(n: int, d: int, axis: int) -> np.ndarray:
    """Matrix D with (D @ coeffs) the coefficients of the axis-derivative."""
    expo = basis_multiindices(n, d)
    idx = _index_of(n, d)
    D = np.zeros((len(expo), len(expo)))
    for i, a in enumerate(expo):
        if a[axis] > 0:
            b = list(a)
            b[axis] -= 1
            D[idx[tuple(b)], i] = a[axis]
    return D


@lru_cache(maxsize=None)
def pair_index_table(n: int, d: int) -> np.ndarray:
    """pair[i, j] = index of expo_i + expo_j in the degree-2d basis."""
    expo = basis_multiindices(n, d)
    idx2 = _index_of(n, 2 * d)
    table = np.empty((len(expo), len(expo)), dtype=np.int64)
    for i, a in enumerate(expo):
        for j, b in enumerate(expo):
            table[i, j] = idx2[tuple(x + y for x, y in zip(a, b))]
    return table


def derivative_matrix(n: int, d: int, axis: int) -> np.ndarray:
    """Public view of the single-axis derivative matrix on the graded basis."""
    return _derivative_matrix(n, d, axis)


@dataclass(frozen=True)
class Poly:
    """Polynomial sum_a c[a] x^a with dense coefficients on the graded basis."""

    dim: int
    degree: int
    coeffs: np.ndarray  # length C(degree + dim, dim), aligned with basis_multiindices

    def __post_init__(self):
        want = comb(self.degree + self.dim, self.dim)
        if self.coeffs.shape != (want,):
            raise ValueError(
                f"coefficient vector has shape {self.coeffs.shape}, expected ({want},)"
            )

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero(dim: int, degree: int = 0) -> "Poly":
        return Poly(dim, degree, np.zeros(comb(degree + dim, dim)))

    @staticmethod
    def constant(dim: int, value: float) -> "Poly":
        c = np.zeros(1)
        c[0] = value
        return Poly(dim, 0, c)

    @staticmethod
    def from_dict(dim: int, terms: dict[tuple[int, ...], float]) -> "Poly":
        degree = max((sum(a) for a in terms), default=0)
        idx = _index_of(dim, degree)
        c = np.zeros(comb(degree + dim, dim))
        for a, v in terms.items():
            c[idx[tuple(a)]] += v
        return Poly(dim, degree, c)

    @staticmethod
    def monomial(dim: int, alpha: tuple[int, ...], coeff: float = 1.0) -> "Poly":
        return Poly.from_dict(dim, {tuple(alpha): coeff})

    # -- representation helpers --------------------------------------------

    def exponents(self) -> tuple[tuple[int, ...], ...]:
        return basis_multiindices(self.dim, self.degree)

    def to_dict(self, tol: float = 0.0) -> dict[tuple[int, ...], float]:
        return {
            a: c
            for a, c in zip(self.exponents(), self.coeffs)
            if abs(c) > tol
        }

    def with_degree(self, degree: int) -> "Poly":
        """Re-embed into the degree-`degree` basis (truncation must be exact)."""
        if degree == self.degree:
            return self
        idx = _index_of(self.dim, degree)
        c = np.zeros(comb(degree + self.dim, self.dim))
        for a, v in zip(self.exponents(), self.coeffs):
            if sum(a) > degree:
                if v != 0.0:
                    raise ValueError("nonzero coefficient lost in degree truncation")
                continue
            c[idx[a]] = v
        return Poly(self.dim, degree, c)

    def trimmed(self, tol: float = 0.0) -> "Poly":
        """Shrink the degree bound to the actual degree."""
        deg = 0
        for a, v in zip(self.exponents(), self.coeffs):
            if abs(v) > tol:
                deg = max(deg, sum(a))
        return self.with_degree(deg) if deg < self.degree else self

    # -- algebra -------------------------------------------------------------

    def __add__(self, other: "Poly") -> "Poly":
        d = max(self.degree, other.degree)
        return Poly(self.dim, d, self.with_degree(d).coeffs + other.with_degree(d).coeffs)

    def __sub__(self, other: "Poly") -> "Poly":
        d = max(self.degree, other.degree)
        return Poly(self.dim, d, self.with_degree(d).coeffs - other.with_degree(d).coeffs)

    def __rmul__(self, scalar: float) -> "Poly":
        return Poly(self.dim, self.degree, scalar * self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Poly):
            d = self.degree + other.degree
            idx = _index_of(self.dim, d)
            c = np.zeros(comb(d + self.dim, self.dim))
            for a, va in self.to_dict().items():
                for b, vb in other.to_dict().items():
                    c[idx[tuple(x + y for x, y in zip(a, b))]] += va * vb
            return Poly(self.dim, d, c)
        return self.__rmul__(other)

    def __call__(self, points) -> np.ndarray:
        """Evaluate at one point (shape (n,)) or many (shape (N, n))."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        expo = np.array(self.exponents())  # (C, n)
        vals = np.prod(pts[:, None, :] ** expo[None, :, :], axis=2) @ self.coeffs
        return vals[0] if single else vals

    def almost_equal(self, other: "Poly", tol: float = 1e-12) -> bool:
        d = max(self.degree, other.degree)
        a = self.with_degree(d).coeffs
        b = other.with_degree(d).coeffs
        scale = max(np.abs(a).max(), np.abs(b).max(), 1.0)
        return bool(np.abs(a - b).max() <= tol * scale)

    def compose_affine(self, A, b) -> "Poly":
        """p(A x + b) as a polynomial in x; A is (n, n) or a scalar."""
        n = self.dim
        b = np.asarray(b, dtype=float)
        A = np.asarray(A, dtype=float)
        if A.ndim == 0:
            A = A * np.eye(n)
        # substitution images of each variable, as term dicts
        images = []
        for j in range(n):
            img = {tuple(np.eye(n, dtype=int)[t]): A[j, t] for t in range(n) if A[j, t] != 0.0}
            if b[j] != 0.0:
                img[(0,) * n] = img.get((0,) * n, 0.0) + b[j]
            images.append(img)
        acc: dict[tuple[int, ...], float] = {}
        for alpha, coeff in self.to_dict().items():
            term = {(0,) * n: coeff}
            for j, a_j in enumerate(alpha):
                for _ in range(a_j):
                    term = _dict_mul(term, images[j], n)
            for k, v in term.items():
                acc[k] = acc.get(k, 0.0) + v
        out = Poly.from_dict(n, acc) if acc else Poly.zero(n)
        return out.with_degree(max(out.degree, self.degree))


def _dict_mul(p: dict, q: dict, n: int) -> dict:
    out: dict[tuple[int, ...], float] = {}
    for a, va in p.items():
        for b, vb in q.items():
            key = tuple(x + y for x, y in zip(a, b))
            out[key] = out.get(key, 0.0) + va * vb
    return out


def derivative(p: Poly, alpha) -> Poly:
    """Exact coefficientwise partial derivative d^alpha p."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != p.dim:
        raise ValueError("multi-index length must match the polynomial dimension")
    c = p.coeffs
    for axis, a in enumerate(alpha):
        D = _derivative_matrix(p.dim, p.degree, axis)
        for _ in range(a):
            c = D @ c
    return Poly(p.dim, p.degree, c).trimmed()


def directional_derivative(p: Poly, directions, orders) -> Poly:
    """Iterated directional derivative prod_i (d_i . grad)^{orders_i} p."""
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    orders = tuple(int(a) for a in orders)
    if len(orders) != len(directions):
        raise ValueError("one order per direction required")
    c = p.coeffs
    mats = [_derivative_matrix(p.dim, p.degree, ax) for ax in range(p.dim)]
    for u, a in zip(directions, orders):
        Du = sum(u[ax] * mats[ax] for ax in range(p.dim))
        for _ in range(a):
            c = Du @ c
    return Poly(p.dim, p.degree, c).trimmed()


# -- exact integration over simplices ---------------------------------------


def simplex_measure(vertices) -> float:
    """d-dimensional measure of a d-simplex embedded in R^n (1 for a point)."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    d = V.shape[0] - 1
    if d == 0:
        return 1.0
    E = V[1:] - V[0]
    G = E @ E.T
    det = np.linalg.det(G)
    if det <= 0.0:
        return 0.0
    return float(np.sqrt(det) / factorial(d))


def _barycentric_moment(a: tuple[int, ...], d: int) -> float:
    """Mean of prod lambda_i^{a_i} over a d-simplex: d! prod(a_i!)/(|a|+d)!."""
    return factorial(d) * prod(factorial(x) for x in a) / factorial(sum(a) + d)


def _expand_monomial_in_barycentric(gamma, linear_forms, nbary: int):
    """Term dict of prod_j (linear_forms[j])^{gamma_j} in barycentric variables."""
    acc = {(0,) * nbary: 1.0}
    for j, g in enumerate(gamma):
        for _ in range(g):
            acc = _dict_mul(acc, linear_forms[j], nbary)
    return acc


def monomial_means(vertices, exponents, center=None, scale: float = 1.0) -> np.ndarray:
    """Means (1/|S|) int_S y^gamma for y = (x - center)/scale over a simplex.

    `exponents` is a sequence of multi-indices in the ambient dimension. The
    simplex may have any dimension d <= n; a single vertex is a point
    (mean = evaluation).
    """
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    nbary, n = V.shape
    d = nbary - 1
    if center is not None:
        V = (V - np.asarray(center, dtype=float)) / scale
    if d == 0:
        pt = V[0]
        return np.array([prod(pt[j] ** g for j, g in enumerate(gamma)) for gamma in exponents])
    # linear form for coordinate j: sum_i V[i, j] * lambda_i
    forms = []
    for j in range(n):
        forms.append({
            tuple(np.eye(nbary, dtype=int)[i]): V[i, j]
            for i in range(nbary)
            if V[i, j] != 0.0
        })
    out = np.empty(len(exponents))
    for k, gamma in enumerate(exponents):
        bexp = _expand_monomial_in_barycentric(gamma, forms, nbary)
        out[k] = sum(c * _barycentric_moment(a, d) for a, c in bexp.items())
    return out


def monomial_pair_means(vertices, expo_a, center_a, scale_a,
                        expo_b=None, center_b=None, scale_b=None) -> np.ndarray:
    """Matrix of means (1/|S|) int_S y_a^gamma y_b^delta over a simplex.

    y_a = (x - center_a)/scale_a and y_b likewise; with a single coordinate
    system this is the Gram matrix of monomial means used for stiffness and
    penalty blocks.
    """
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    nbary, n = V.shape
    d = nbary - 1
    if expo_b is None:
        expo_b, center_b, scale_b = expo_a, center_a, scale_a
    Va = (V - np.asarray(center_a, dtype=float)) / scale_a
    Vb = (V - np.asarray(center_b, dtype=float)) / scale_b
    if d == 0:
        va = np.array([prod(Va[0][j] ** g for j, g in enumerate(g_)) for g_ in expo_a])
        vb = np.array([prod(Vb[0][j] ** g for j, g in enumerate(g_)) for g_ in expo_b])
        return np.outer(va, vb)

    def forms_of(W):
        return [
            {
                tuple(np.eye(nbary, dtype=int)[i]): W[i, j]
                for i in range(nbary)
                if W[i, j] != 0.0
            }
            for j in range(n)
        ]

    forms_a, forms_b = forms_of(Va), forms_of(Vb)
    terms_a = [_expand_monomial_in_barycentric(g, forms_a, nbary) for g in expo_a]
    terms_b = [_expand_monomial_in_barycentric(g, forms_b, nbary) for g in expo_b]
    out = np.empty((len(expo_a), len(expo_b)))
    for i, ta in enumerate(terms_a):
        for j, tb in enumerate(terms_b):
            prod_terms = _dict_mul(ta, tb, nbary)
            out[i, j] = sum(c * _barycentric_moment(a, d) for a, c in prod_terms.items())
    return out


def integrate_simplex_exact(p: Poly, vertices) -> float:
    """Exact integral of p over a (possibly lower-dimensional) simplex in R^n."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    if V.shape[1] != p.dim:
        raise ValueError("simplex ambient dimension must match the polynomial")
    d = V.shape[0] - 1
    if d == 0:
        return float(p(V[0]))
    meas = simplex_measure(V)
    span = np.max(np.linalg.norm(V[1:] - V[0], axis=1))
    if meas <= 1e-14 * max(span, 1.0) ** d:
        raise DegenerateSimplexError(f"simplex with measure {meas:.3e} rejected")
    means = monomial_means(V, p.exponents())
    return float(meas * (means @ p.coeffs))


# -- numeric quadrature ------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights (summing to 1) on the reference simplex.

    int_S f ~= measure(S) * sum_q w_q f(points_q @ vertices).
    """

    dim: int
    points: np.ndarray   # (nq, dim + 1) barycentric coordinates
    weights: np.ndarray  # (nq,), sum = 1
    exactness: int

    def physical_points(self, vertices) -> np.ndarray:
        return self.points @ np.atleast_2d(np.asarray(vertices, dtype=float))


@lru_cache(maxsize=None)
def quadrature(dim: int, exactness: int) -> QuadratureRule:
    """Rule exact to the requested total degree on the reference simplex."""
    if exactness < 0:
        raise ValueError("exactness must be >= 0")
    if dim == 0:
        return QuadratureRule(0, np.ones((1, 1)), np.ones(1), exactness)
    if dim == 1:
        npts = exactness // 2 + 1
        t, w = np.polynomial.legendre.leggauss(npts)
        pts = np.column_stack([(1.0 - t) / 2.0, (1.0 + t) / 2.0])
        return QuadratureRule(1, pts, w / 2.0, 2 * npts - 1)
    return _grundmann_moeller(dim, exactness)


def _grundmann_moeller(n: int, exactness: int) -> QuadratureRule:
    """Grundmann-Moeller rule of degree 2s+1 >= exactness on the n-simplex."""
    s = max(0, (exactness - 1 + 1) // 2)  # ceil((exactness - 1)/2)
    while 2 * s + 1 < exactness:
        s += 1
    d = 2 * s + 1
    pts: list[np.ndarray] = []
    wts: list[float] = []
    for i in range(s + 1):
        denom = d + n - 2 * i
        w = ((-1.0) ** i) * 2.0 ** (-2 * s) * denom ** d / (
            factorial(i) * factorial(d + n - i)
        )
        for beta in _compositions(s - i, n + 1):
            pts.append((2.0 * np.array(beta) + 1.0) / denom)
            wts.append(w)
    points = np.array(pts)
    weights = np.array(wts) * factorial(n)  # normalize: reference volume 1/n!
    return QuadratureRule(n, points, weights, d)


def _compositions(total: int, slots: int):
    if slots == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, slots - 1):
            yield (head,) + tail
