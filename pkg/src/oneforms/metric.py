"""The scale-invariant metric on full-rank ``n x m`` matrices.

For a frame ``a`` of full column rank and tangent matrices ``u, v``::

    <u, v>_a = tr(u (a^T a)^{-1} v^T) sqrt(det(a^T a))

Tangent vectors are plain arrays of the same shape as ``a``; the base point is
wrapped in a :class:`Frame`, which caches the Gram matrix and its inverse.
Every public function also accepts a bare array for the base point.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegeneratePlane, NotUnimodularTangent
from .linalg import check_full_rank

PLANE_TOL = 1e-12
UNIMODULAR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Frame:
    """A point of the space of full-rank ``n x m`` matrices.

    Attributes
    ----------
    mat : ndarray, shape (n, m)
    gram : ndarray, shape (m, m)
        ``mat.T @ mat``.
    gram_inv : ndarray, shape (m, m)
    pinv : ndarray, shape (m, n)
        Moore-Penrose inverse ``gram_inv @ mat.T``.
    r_inv : ndarray, shape (m, m)
        Inverse of the triangular factor of ``mat = q r``, so that
        ``gram_inv = r_inv @ r_inv.T``.
    sqrt_det : float
        ``sqrt(det(gram))``, the volume density.
    """

    mat: np.ndarray
    gram: np.ndarray = field(init=False, repr=False)
    gram_inv: np.ndarray = field(init=False, repr=False)
    pinv: np.ndarray = field(init=False, repr=False)
    r_inv: np.ndarray = field(init=False, repr=False)
    sqrt_det: float = field(init=False)

    def __post_init__(self):
        a = check_full_rank(np.array(self.mat, dtype=float))
        a.setflags(write=False)
        gram = a.T @ a
        gram = 0.5 * (gram + gram.T)
        # a = q r: working through r keeps the rounding error at cond(a)
        # rather than cond(a)^2, which is what forming inv(a^T a) would give
        q, r = np.linalg.qr(a)
        r_inv = solve_triangular(r, np.eye(a.shape[1]))
        gram_inv = r_inv @ r_inv.T
        pinv = r_inv @ q.T
        for arr in (gram, gram_inv, pinv, r_inv):
            arr.setflags(write=False)
        object.__setattr__(self, "mat", a)
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "gram_inv", gram_inv)
        object.__setattr__(self, "pinv", pinv)
        object.__setattr__(self, "r_inv", r_inv)
        object.__setattr__(self, "sqrt_det", float(abs(np.prod(np.diag(r)))))

    @property
    def shape(self):
        return self.mat.shape

    @property
    def n(self):
        return self.mat.shape[0]

    @property
    def m(self):
        return self.mat.shape[1]

    @property
    def projector(self):
        """Orthogonal projector ``a a^+`` onto the column span."""
        return self.mat @ self.pinv


def as_frame(a):
    return a if isinstance(a, Frame) else Frame(a)


def _tangent(a, u):
    u = np.asarray(u, dtype=float)
    if u.shape != a.shape:
        raise ValueError(f"tangent of shape {u.shape} at a frame of shape {a.shape}")
    return u


def metric(a, u, v):
    """Inner product ``<u, v>_a``."""
    a = as_frame(a)
    u, v = _tangent(a, u), _tangent(a, v)
    return float(np.vdot(u @ a.r_inv, v @ a.r_inv) * a.sqrt_det)


def norm(a, u):
    return float(np.sqrt(max(metric(a, u, u), 0.0)))


def to_square(a, u):
    """Return ``U = u a^+``, the ``n x n`` representative of ``u``.

    ``<u, v>_a = tr(U V^T) sqrt(det(a^T a))`` and ``U a = u``.
    """
    a = as_frame(a)
    return _tangent(a, u) @ a.pinv


def traceless_split(a, u):
    """Split ``u = u0 + c a`` with ``c = tr(u a^+) / m`` and ``tr(u0 a^+) = 0``.

    Returns
    -------
    u0 : ndarray
        The traceless part.
    c : float
        Coefficient of the pure trace part.
    """
    a = as_frame(a)
    u = _tangent(a, u)
    c = float(np.trace(u @ a.pinv)) / a.m
    return u - c * a.mat, c


def orthonormalize_pair(a, u, v, tol=PLANE_TOL):
    """Metric Gram-Schmidt: normalize ``u`` first, then project ``v``.

    Raises :class:`DegeneratePlane` when the metric Gram determinant is below
    ``tol * |u|^2 |v|^2``.
    """
    a = as_frame(a)
    u, v = _tangent(a, u), _tangent(a, v)
    uu, vv, uv = metric(a, u, u), metric(a, v, v), metric(a, u, v)
    if uu <= 0 or vv <= 0 or uu * vv - uv * uv <= tol * uu * vv:
        raise DegeneratePlane("tangent vectors do not span a 2-plane")
    e1 = u / np.sqrt(uu)
    w = v - metric(a, e1, v) * e1
    return e1, w / norm(a, w)


@dataclass(frozen=True)
class ProductPoint:
    """Volume / unit-volume decomposition ``a = rho^(1/m) beta``.

    ``renormalized`` is set when ``beta`` was rescaled to ``det(beta^T beta) = 1``.
    """

    rho: float
    beta: Frame
    renormalized: bool = False


def make_product_point(rho, beta, tol=UNIMODULAR_TOL):
    """Build a :class:`ProductPoint`, renormalizing ``beta`` if its volume drifted."""
    beta = as_frame(beta)
    if not rho > 0:
        raise ValueError("rho must be positive")
    vol = beta.sqrt_det
    if abs(vol - 1.0) <= tol:
        return ProductPoint(float(rho), beta)
    warnings.warn(f"det(beta^T beta) = {vol ** 2:.3e}; renormalizing", RuntimeWarning, stacklevel=2)
    return ProductPoint(float(rho), Frame(beta.mat * vol ** (-1.0 / beta.m)), True)


def product_decompose(a):
    a = as_frame(a)
    rho = a.sqrt_det
    return ProductPoint(rho, Frame(a.mat * rho ** (-1.0 / a.m)))


def product_compose(p):
    return Frame(p.rho ** (1.0 / p.beta.m) * p.beta.mat)


def product_tangent(p, nu, h):
    """Push ``(nu, h)`` at ``(rho, beta)`` forward to a tangent at ``product_compose(p)``."""
    m = p.beta.m
    return p.rho ** (1.0 / m) * np.asarray(h, dtype=float) + (nu / m) * p.rho ** (1.0 / m - 1.0) * p.beta.mat


def product_split_tangent(a, u):
    """Inverse of :func:`product_tangent` at ``product_decompose(a)``.

    Returns ``(p, nu, h)`` with ``h`` tangent to the unit-volume factor.
    """
    a = as_frame(a)
    p = product_decompose(a)
    u0, c = traceless_split(a, u)
    nu = c * a.m * p.rho
    return p, nu, p.rho ** (-1.0 / a.m) * u0


def product_metric(p, x, y, tol=1e-10):
    """Metric in product coordinates for ``x = (nu1, h1)``, ``y = (nu2, h2)``.

    ``tr(h1 (beta^T beta)^{-1} h2^T) rho + nu1 nu2 / (m rho)``. Both ``h`` must
    satisfy ``tr(h beta^+) = 0``.
    """
    nu1, h1 = x
    nu2, h2 = y
    beta = p.beta
    h1, h2 = _tangent(beta, h1), _tangent(beta, h2)
    for h in (h1, h2):
        t = np.trace(h @ beta.pinv)
        scale = max(np.linalg.norm(h) * np.linalg.norm(beta.pinv), 1.0)
        if abs(t) > tol * scale:
            raise NotUnimodularTangent(f"tr(h beta^+) = {t:.3e} is not zero")
    return float(np.trace(h1 @ beta.gram_inv @ h2.T) * p.rho + nu1 * nu2 / (beta.m * p.rho))


__all__ = [
    "Frame", "as_frame", "metric", "norm", "to_square", "traceless_split",
    "orthonormalize_pair", "ProductPoint", "make_product_point", "product_decompose",
    "product_compose", "product_tangent", "product_split_tangent", "product_metric",
]
