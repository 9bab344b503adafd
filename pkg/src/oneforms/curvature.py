"""Christoffel symbols, Riemann tensor and sectional curvature of the frame metric.

Conventions: the geodesic equation reads ``a_tt = Gamma_a(a_t, a_t)`` and

    R_a(u, v) w = -dGamma_a(u)(v, w) + dGamma_a(v)(u, w)
                  + Gamma_a(u, Gamma_a(v, w)) - Gamma_a(v, Gamma_a(u, w))

so the sectional curvature of an orthonormal pair is ``<R(u, v) v, u>_a``.
The Riemann tensor is available through this coordinate formula and through
an independent long closed form in ``U = u a^+`` notation
(:func:`riemann_closed`); the two are compared by :func:`riemann_discrepancy`.
"""

from dataclasses import dataclass, field
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import WrongDimension
from .metric import PLANE_TOL, as_frame, metric, orthonormalize_pair, traceless_split

SCAN_BLOCK = 1 << 16


def christoffel(a, u, v):
    """Symmetric bilinear ``Gamma_a(u, v)`` obtained by polarizing the geodesic equation."""
    a = as_frame(a)
    x, gi, ap = a.mat, a.gram_inv, a.pinv
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    U, V = u @ ap, v @ ap
    return 0.5 * (u @ gi @ v.T @ x + v @ gi @ u.T @ x + U @ v + V @ u - U.T @ v - V.T @ u
                  + np.trace(u @ gi @ v.T) * x - np.trace(U) * v - np.trace(V) * u)


def dchristoffel(a, direction, u, v):
    """Derivative of ``Gamma_a(u, v)`` with respect to ``a`` along ``direction``."""
    a = as_frame(a)
    ap, P = a.pinv, a.projector
    D, U, V = (np.asarray(x, dtype=float) @ ap for x in (direction, u, v))
    tr = np.trace
    # 2 dGamma(D)(U, V) a^+, with (U, V) in the roles of (v, w)
    X = (-U @ D.T @ V.T @ P - U @ D @ V.T @ P + U @ V.T @ D - V @ D.T @ U.T @ P
         - V @ D @ U.T @ P + V @ U.T @ D - U @ D.T @ P @ V - U @ D @ V + U @ D.T @ V
         - V @ D.T @ P @ U - V @ D @ U + V @ D.T @ U + P @ D @ U.T @ V + D.T @ U.T @ V
         - D @ U.T @ V + P @ D @ V.T @ U + D.T @ V.T @ U - D @ V.T @ U
         - tr(U @ D.T @ V.T) * P - tr(U @ D @ V.T) * P + tr(U @ V.T) * D
         + tr(U @ D.T @ P) * V + tr(U @ D) * V - tr(U @ D.T) * V
         + tr(V @ D.T @ P) * U + tr(V @ D) * U - tr(V @ D.T) * U)
    return 0.5 * X @ a.mat


def riemann(a, u, v, w):
    """``R_a(u, v) w`` from Christoffel symbols and their derivative."""
    a = as_frame(a)
    return (-dchristoffel(a, u, v, w) + dchristoffel(a, v, u, w)
            + christoffel(a, u, christoffel(a, v, w)) - christoffel(a, v, christoffel(a, u, w)))


def _comm(x, y):
    return x @ y - y @ x


def riemann_closed(a, u, v, w):
    """``R_a(u, v) w`` from the closed form for ``4 R_a(u, v) w a^+``."""
    a = as_frame(a)
    ap, P, m = a.pinv, a.projector, a.m
    U, V, W = (np.asarray(x, dtype=float) @ ap for x in (u, v, w))
    tr = np.trace
    X = (_comm(V, U.T) @ W.T @ P + W @ _comm(U.T, V.T) @ P + W @ U @ V.T @ P + W.T @ U @ V.T @ P
         + U @ W @ V.T @ P - _comm(U, V.T) @ W.T @ P - W @ V @ U.T @ P - W.T @ V @ U.T @ P
         - V @ W @ U.T @ P + 2 * V @ U.T @ P @ W + W @ U.T @ P @ V + V @ W.T @ P @ U
         - 2 * U @ V.T @ P @ W - W @ V.T @ P @ U - U @ W.T @ P @ V + 2 * P @ V @ U.T @ W
         + P @ V @ W.T @ U + P @ W @ U.T @ V - 2 * P @ U @ V.T @ W - P @ U @ W.T @ V
         - P @ W @ V.T @ U + _comm(_comm(V, U), W) + _comm(V.T, U.T) @ W + 2 * U @ W.T @ V
         + 2 * U @ V.T @ W + V.T @ U @ W + W.T @ U.T @ V + V.T @ W @ U - 2 * V @ W.T @ U
         - 2 * V @ U.T @ W - U.T @ V @ W - W.T @ V.T @ U - U.T @ W @ V
         + tr(V @ W.T) * tr(U) * P - tr(V) * tr(W @ U.T) * P + m * tr(U @ W.T) * V
         - m * tr(V @ W.T) * U + tr(W) * tr(V) * U - tr(W) * tr(U) * V)
    return 0.25 * X @ a.mat


def riemann_discrepancy(a, u, v, w):
    """Relative max-entry difference between :func:`riemann` and :func:`riemann_closed`."""
    r1, r2 = riemann(a, u, v, w), riemann_closed(a, u, v, w)
    return float(np.abs(r1 - r2).max() / max(np.abs(r1).max(), np.abs(r2).max(), 1e-300))


def sectional(a, u, v):
    """Sectional curvature of the plane spanned by ``u, v`` at ``a``."""
    a = as_frame(a)
    e1, e2 = orthonormalize_pair(a, u, v)
    return metric(a, riemann(a, e1, e2, e2), e1)


def sectional_normalized(a, u, v):
    """``4 K_a(u, v) / sqrt(det(a^T a))``, the scale-free form of the curvature."""
    a = as_frame(a)
    return 4.0 * sectional(a, u, v) / a.sqrt_det


def _traceless_form(A, B, P, m):
    """``4 K / sqrt(det)`` for metric-orthonormal traceless ``A = U0``, ``B = V0``.

    Works on single matrices or stacks of shape ``(N, n, n)``.
    """
    T = lambda x: np.swapaxes(x, -1, -2)  # noqa: E731
    ip = lambda x, y: np.einsum("...ij,...ij->...", x, y)  # tr(x y^T)  # noqa: E731
    tr2 = lambda x, y: np.einsum("...ij,...ji->...", x, y)  # tr(x y)  # noqa: E731
    BA, AB = B @ A, A @ B
    BAt = B @ T(A)
    C1 = BA - AB
    C2 = T(B) @ A - A @ T(B)
    C3 = BAt - T(A) @ B
    BBt, AAt = B @ T(B), A @ T(A)
    return (2 * tr2(C1, C2) + 2 * tr2(C3, C1) + 2 * ip(BA, AB)
            + tr2(BBt, T(A) @ A) - 4 * ip(B @ B, A @ A) + 4 * ip(BAt, BAt)
            + tr2(T(B) @ B, AAt) - 2 * tr2(BBt, AAt) - 2 * tr2(BAt, BAt)
            + 6 * tr2(BAt, BAt @ P) - 3 * tr2(BAt @ T(BAt), P) - 3 * tr2(T(BAt) @ BAt, P)
            - m * ip(B, B) * ip(A, A) + m * ip(A, B) ** 2)


def sectional_formula(a, u, v):
    """Sectional curvature through the explicit traceless-part formula."""
    a = as_frame(a)
    e1, e2 = orthonormalize_pair(a, u, v)
    u0, _ = traceless_split(a, e1)
    v0, _ = traceless_split(a, e2)
    val = _traceless_form(u0 @ a.pinv, v0 @ a.pinv, a.projector, a.m)
    return float(val) * a.sqrt_det / 4.0


def sectional_m1(a, u, v):
    """Curvature for ``m = 1``: ``3/4 |a|^-2 (|u0|^2 |v0|^2 - <u0, v0>^2)`` on an orthonormal pair.

    Here ``|a|^2 = <a, a>_a = |a|_2``, the Euclidean norm of the column.
    """
    a = as_frame(a)
    if a.m != 1:
        raise WrongDimension(f"sectional_m1 needs m = 1, got m = {a.m}")
    e1, e2 = orthonormalize_pair(a, u, v)
    u0, _ = traceless_split(a, e1)
    v0, _ = traceless_split(a, e2)
    g = lambda x, y: metric(a, x, y)  # noqa: E731
    return 0.75 / metric(a, a.mat, a.mat) * (g(u0, u0) * g(v0, v0) - g(u0, v0) ** 2)


def sectional_batch(a, u, v):
    """Vectorized sectional curvature for stacks ``a, u, v`` of shape ``(N, n, m)``.

    Returns ``(kappa, ok)``; ``ok`` is False where ``a`` fails the rank test or
    the pair is degenerate, and ``kappa`` is NaN there.
    """
    a, u, v = (np.asarray(x, dtype=float) for x in (a, u, v))
    N, n, m = a.shape
    T = lambda x: np.swapaxes(x, -1, -2)  # noqa: E731
    ip = lambda x, y: np.einsum("...ij,...ij->...", x, y)  # noqa: E731
    sv = np.linalg.svd(a, compute_uv=False)
    ok = sv[:, -1] > 1e-9 * max(n, m) * sv[:, 0]
    a = np.where(ok[:, None, None], a, np.eye(n, m))
    g = T(a) @ a
    ap = np.linalg.solve(g, T(a))
    P = a @ ap
    sd = np.sqrt(np.linalg.det(g))
    U, V = u @ ap, v @ ap
    uu, vv, uv = ip(U, U) * sd, ip(V, V) * sd, ip(U, V) * sd
    ok &= (uu > 0) & (vv > 0) & (uu * vv - uv * uv > PLANE_TOL * uu * vv)
    uu = np.where(ok, uu, 1.0)
    U = U / np.sqrt(uu)[:, None, None]
    V = V - (ip(U, V) * sd)[:, None, None] * U
    nv = np.sqrt(np.where(ok, ip(V, V) * sd, 1.0))
    V = V / nv[:, None, None]
    eye_tr = lambda X: (np.trace(X, axis1=1, axis2=2) / m)[:, None, None]  # noqa: E731
    A = U - eye_tr(U) * P
    B = V - eye_tr(V) * P
    kappa = _traceless_form(A, B, P, m) * sd / 4.0
    return np.where(ok, kappa, np.nan), ok


@dataclass(frozen=True)
class Histogram:
    """Histogram of sampled sectional curvatures.

    ``positive_fraction`` counts samples with ``kappa > 0``; ``redraws`` counts
    draws rejected for rank or plane degeneracy.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    positive_fraction: float
    m: int
    n: int
    samples: int
    seed: int
    redraws: int = 0
    min_value: float = field(default=np.nan)
    max_value: float = field(default=np.nan)
    law: str = "gaussian"


def _block_seed(seed, index):
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


SAMPLING_LAWS = ("gaussian", "uniform")


def _draw(rng, law, shape):
    if law == "gaussian":
        return rng.standard_normal(shape)
    return rng.random(shape)


def _scan_block(args):
    m, n, seed, index, count, law = args
    rng = np.random.default_rng(_block_seed(seed, index))
    out = np.empty(count)
    filled, redraws = 0, 0
    while filled < count:
        need = count - filled
        a, u, v = _draw(rng, law, (3, need, n, m))
        kappa, ok = sectional_batch(a, u, v)
        good = kappa[ok]
        out[filled:filled + good.size] = good
        filled += good.size
        redraws += int(need - good.size)
    return out, redraws


def sample_sectional_curvatures(m, n, samples, seed, workers=1, block=SCAN_BLOCK, law="gaussian"):
    """Sectional curvatures of random planes spanned by random ``u, v`` at random ``a``.

    Entries are i.i.d. standard normal (``law="gaussian"``) or uniform on
    ``[0, 1)`` (``law="uniform"``). The positive fraction depends on this
    choice, so it is part of the scan's identity.

    Block ``k`` of ``block`` consecutive samples draws from the seed sequence
    ``(seed, k)``, so results do not depend on ``workers``.

    Returns
    -------
    kappa : ndarray, shape (samples,)
    redraws : int
    """
    if not 1 <= m <= n:
        raise WrongDimension(f"need 1 <= m <= n, got m = {m}, n = {n}")
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if n * m < 2:
        raise WrongDimension("a 1-dimensional space has no 2-planes")
    if law not in SAMPLING_LAWS:
        raise ValueError(f"law must be one of {SAMPLING_LAWS}")
    jobs = [(m, n, seed, k, min(block, samples - k * block), law) for k in range(-(-samples // block))]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_scan_block, jobs))
    else:
        parts = [_scan_block(j) for j in jobs]
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


def curvature_scan(m, n, samples, bins=200, seed=0, workers=1, law="gaussian"):
    """Monte-Carlo histogram of sectional curvatures on ``M_+(n, m)``."""
    kappa, redraws = sample_sectional_curvatures(m, n, samples, seed, workers, law=law)
    counts, edges = np.histogram(kappa, bins=bins)
    return Histogram(edges, counts, float(np.count_nonzero(kappa > 0)) / kappa.size, m, n, samples,
                     seed, redraws, float(kappa.min()), float(kappa.max()), law)


__all__ = [
    "christoffel", "dchristoffel", "riemann", "riemann_closed", "riemann_discrepancy",
    "sectional", "sectional_normalized", "sectional_formula", "sectional_m1", "sectional_batch",
    "Histogram", "sample_sectional_curvatures", "curvature_scan",
]
