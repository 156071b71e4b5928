"""Zonotope algebra in G-representation plus the planar H-representation.

A zonotope is ``{c + G beta : ||beta||_inf <= 1}``. Everything here is a pure
function on immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import erf, exp, lgamma, log, sqrt

import numpy as np
from scipy.special import gammainc, gammaincc

EPS_GEN = 1e-9


class ZonotopeError(ValueError):
    pass


class DimensionMismatch(ZonotopeError):
    def __init__(self, dim1: int, dim2: int):
        super().__init__(f"zonotope dimensions differ: {dim1} and {dim2}")
        self.dims = (dim1, dim2)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Zonotope:
    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        g = np.asarray(self.generators, dtype=float)
        if g.size == 0:
            g = np.zeros((c.shape[0], 0))
        if g.ndim == 1:
            g = g.reshape(-1, 1)
        if g.shape[0] != c.shape[0]:
            raise ZonotopeError(
                f"generator matrix has {g.shape[0]} rows but center has {c.shape[0]} entries"
            )
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "generators", _frozen(g))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def n_generators(self) -> int:
        return self.generators.shape[1]

    def __add__(self, other: Zonotope) -> Zonotope:
        return minkowski_sum(self, other)

    def translate(self, v) -> Zonotope:
        return Zonotope(self.center + np.asarray(v, dtype=float), self.generators)

    def interval_hull(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.abs(self.generators).sum(axis=1)
        return self.center - r, self.center + r

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Points ``c + G beta`` for ``beta`` uniform in the unit box, shape (n, dim)."""
        beta = rng.uniform(-1.0, 1.0, size=(n, self.n_generators))
        return self.center + beta @ self.generators.T

    def vertices_2d(self) -> np.ndarray:
        """Counter-clockwise vertices of a planar zonotope (for plotting)."""
        if self.dim != 2:
            raise ZonotopeError("vertices_2d needs a 2-D zonotope")
        G = self.generators
        G = G[:, np.linalg.norm(G, axis=0) > 0]
        if G.shape[1] == 0:
            return self.center.reshape(1, 2)
        # Orient generators into the upper half plane then sort by angle.
        flip = (G[1] < 0) | ((G[1] == 0) & (G[0] < 0))
        G = np.where(flip, -G, G)
        G = G[:, np.argsort(np.arctan2(G[1], G[0]))]
        start = self.center - G.sum(axis=1)
        steps = np.concatenate([2 * G, -2 * G], axis=1)
        pts = start + np.cumsum(steps, axis=1).T
        return np.vstack([start, pts[:-1]])


@dataclass(frozen=True, eq=False)
class HPolytope:
    """``{x : A x <= b}`` with unit-norm rows."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "b", _frozen(np.reshape(self.b, -1)))

    def contains(self, x, tol: float = 0.0) -> bool:
        return point_outside_margin(self, x) <= tol


def minkowski_sum(z1: Zonotope, z2: Zonotope) -> Zonotope:
    if z1.dim != z2.dim:
        raise DimensionMismatch(z1.dim, z2.dim)
    return Zonotope(z1.center + z2.center, np.hstack([z1.generators, z2.generators]))


def cartesian_product(z1: Zonotope, z2: Zonotope) -> Zonotope:
    n1, n2 = z1.dim, z2.dim
    g = np.zeros((n1 + n2, z1.n_generators + z2.n_generators))
    g[:n1, : z1.n_generators] = z1.generators
    g[n1:, z1.n_generators :] = z2.generators
    return Zonotope(np.concatenate([z1.center, z2.center]), g)


def project(z: Zonotope, rows) -> Zonotope:
    rows = np.atleast_1d(np.asarray(rows, dtype=int))
    if rows.size and (rows.min() < 0 or rows.max() >= z.dim):
        raise IndexError(f"projection rows {rows.tolist()} out of range for dimension {z.dim}")
    return Zonotope(z.center[rows], z.generators[rows, :])


def normalize_generators(z: Zonotope, eps_gen: float = EPS_GEN) -> Zonotope:
    """Drop generator columns shorter than ``eps_gen``.

    If nothing survives, a single ``eps_gen * e1`` column is substituted so the
    planar H-representation stays well posed.
    """
    keep = np.linalg.norm(z.generators, axis=0) >= eps_gen
    g = z.generators[:, keep]
    if g.shape[1] == 0:
        g = np.zeros((z.dim, 1))
        g[0, 0] = eps_gen
    return Zonotope(z.center, g)


def to_hrep(z: Zonotope) -> HPolytope:
    """Planar zonotope to halfspaces.

    Rows follow the generator order, all positive normals first and then their
    negations, so row ``i + nG`` is the antipode of row ``i``.
    """
    if z.dim != 2:
        raise ZonotopeError(f"H-representation is only available in 2-D, got dimension {z.dim}")
    G = z.generators
    lengths = np.linalg.norm(G, axis=0)
    if G.shape[1] == 0 or np.any(lengths < EPS_GEN):
        raise ZonotopeError(
            "zero-length generator; drop degenerate columns with normalize_generators first"
        )
    C = np.vstack([-G[1], G[0]]) / lengths  # 2 x nG unit normals
    Ct = C.T
    half = Ct @ z.center + np.abs(Ct @ G).sum(axis=1)
    hdown = -Ct @ z.center + np.abs(Ct @ G).sum(axis=1)
    return HPolytope(np.vstack([Ct, -Ct]), np.concatenate([half, hdown]))


def point_outside_margin(h: HPolytope, x) -> float:
    """``max(A x - b)``; positive iff ``x`` is strictly outside."""
    return float(np.max(h.A @ np.asarray(x, dtype=float) - h.b))


def point_outside_margin_grad(h: HPolytope, x) -> np.ndarray:
    """Subgradient of :func:`point_outside_margin` (lowest active row on ties)."""
    vals = h.A @ np.asarray(x, dtype=float) - h.b
    return h.A[int(np.argmax(vals))].copy()


def collision_zonotope(z1: Zonotope, z2: Zonotope) -> Zonotope:
    """Zonotope whose complement holds ``c1`` exactly when ``z1`` and ``z2`` are disjoint."""
    if z1.dim != z2.dim:
        raise DimensionMismatch(z1.dim, z2.dim)
    return Zonotope(z2.center, np.hstack([z1.generators, z2.generators]))


def are_disjoint(z1: Zonotope, z2: Zonotope) -> bool:
    """Planar disjointness test via center containment in the collision zonotope."""
    P = normalize_generators(collision_zonotope(z1, z2))
    return point_outside_margin(to_hrep(P), z1.center) > 0


# -- symmetric eigendecomposition --------------------------------------------


def jacobi_eigh(S, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ``(w, V)`` with ascending eigenvalues and orthonormal eigenvectors
    in the columns of ``V``. Iterates until the off-diagonal Frobenius mass is
    below ``tol`` times the matrix norm.
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A**2) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp = V[:, p].copy()
                V[:, p] = c * Vp - s * V[:, q]
                V[:, q] = s * Vp + c * V[:, q]
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


# -- confidence regions -------------------------------------------------------


def chi2inv(p: float, dof: int, rtol: float = 1e-12) -> float:
    """Inverse CDF of the chi-squared distribution.

    Safeguarded Newton on the regularized incomplete gamma function (upper
    tail for ``p > 0.5`` to keep precision near one), falling back to bisection whenever a Newton step leaves the bracket.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"chi2inv needs 0 < p < 1, got {p}")
    if dof < 1 or int(dof) != dof:
        raise ValueError(f"degrees of freedom must be a positive integer, got {dof}")
    k = dof / 2.0

    q = 1.0 - p

    def excess(x):
        # CDF(x) - p, through the upper tail when p is close to one
        return q - gammaincc(k, x / 2.0) if p > 0.5 else gammainc(k, x / 2.0) - p

    lo, hi = 0.0, max(1.0, float(dof))
    while excess(hi) < 0:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    log_norm = -k * log(2.0) - lgamma(k)
    for _ in range(200):
        f = excess(x)
        if f > 0:
            hi = x
        else:
            lo = x
        pdf = exp(log_norm + (k - 1.0) * log(x) - x / 2.0) if x > 0 else 0.0
        x_new = x - f / pdf if pdf > 0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= rtol * max(x_new, 1e-300):
            return float(x_new)
        x = x_new
    return float(x)


def chi2cdf(x: float, dof: int) -> float:
    return float(gammainc(dof / 2.0, x / 2.0))


def confidence_scale(alpha: float, dof: int) -> float:
    """``sqrt(chi2inv_dof(erf(alpha / sqrt 2)))``."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return sqrt(chi2inv(erf(alpha / sqrt(2.0)), dof))


def confidence_zonotope(mu, Sigma, alpha: float = 1.0, scale: float | None = None) -> Zonotope:
    """Box in the covariance eigenbasis enclosing the alpha-level ellipsoid.

    ``scale`` may be passed to reuse a precomputed ellipsoid radius.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    S = np.asarray(Sigma, dtype=float)
    n = mu.shape[0]
    if S.shape != (n, n):
        raise ZonotopeError(f"covariance shape {S.shape} does not match mean of length {n}")
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-8:
        raise ZonotopeError("covariance is not symmetric")
    S = 0.5 * (S + S.T)
    w, V = jacobi_eigh(S)
    if w.size and w.min() < -1e-10:
        raise ZonotopeError(f"covariance has negative eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    eps = confidence_scale(alpha, n) if scale is None else scale
    return Zonotope(mu, eps * V * np.sqrt(w))
