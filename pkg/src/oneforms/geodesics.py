"""Geodesics of the frame metric.

The initial value problem has the closed-form solution::

    a(t) = f(t)^(1/m) expm(-s(t) omega0) a0 expm(s(t) P0)

with ``L0 = u0 a0^+``, ``tau0 = tr L0``, ``delta0 = tr(L0^T L0)``,
``f(t) = (m delta0 / 4) t^2 + tau0 t + 1``, ``s(t) = int_0^t dsigma / f``,
``omega0 = L0^T - L0`` and ``P0 = (a0^T a0)^{-1} u0^T a0 - (tau0 / m) I``.

The right factor is not evaluated through ``P0``, whose norm can reach
``cond(a0) |L0|``. Since ``a0 P0 = M0 a0`` with ``M0 = L0^T - (tau0 / m) I_n``,
the column span of ``a0`` is invariant under ``M0``. Writing ``a0 = Q R`` and
``N0 = Q^T M0 Q`` (``m x m``, ``|N0| <= 2 |L0|``) gives
``a0 expm(s P0) = Q expm(s N0) R``. Working on the span also keeps
``expm(s M0)`` from amplifying the orthogonal complement, where it can grow
like ``exp(s |L0|)``.

:func:`integrate_numeric` integrates the second-order ODE directly and is kept
independent of the closed form so the two can be checked against each other.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import BeyondBlowup, NoConvergence, RankDeficient, RankLossAt
from .linalg import check_full_rank, matrix_exp
from .metric import Frame, as_frame, metric

PARALLEL_TOL = 1e-10
SMALL_EPS = 1e-8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def geodesic_rhs(a, at):
    """Acceleration ``a_tt`` prescribed by the geodesic equation at ``(a, a_t)``."""
    a = as_frame(a)
    return _rhs(a.mat, np.asarray(at, dtype=float), a.gram_inv)


def _rhs(x, v, gi):
    w = v @ gi
    c = v.T @ x
    return (w @ (c + c.T) - x @ (gi @ (v.T @ v))
            + (0.5 * np.vdot(w, v)) * x - np.vdot(w, x) * v)


@dataclass(frozen=True)
class GeodesicSolution:
    """Closed-form geodesic data; evaluate with :func:`eval_geodesic`.

    ``blowup`` is the finite time at which the geodesic reaches the zero
    matrix, or None when it exists for all ``t >= 0``.
    """

    a0: Frame
    u0: np.ndarray
    tau0: float
    delta0: float
    eps: float
    omega0: np.ndarray
    P0: np.ndarray
    N0: np.ndarray
    q0: np.ndarray
    r0: np.ndarray
    blowup: float | None = None
    parallel: bool = False

    @property
    def m(self):
        return self.a0.m

    def f(self, t):
        return 0.25 * self.m * self.delta0 * t * t + self.tau0 * t + 1.0

    def df(self, t):
        return 0.5 * self.m * self.delta0 * t + self.tau0

    def s(self, t):
        """``int_0^t dsigma / f(sigma)`` in closed form."""
        return time_change(t, self.tau0, self.m * self.delta0, self.eps, self.parallel)


def time_change(t, tau0, mdelta0, eps, parallel=False):
    """``s(t) = int_0^t dsigma / f(sigma)`` for ``f = mdelta0 t^2 / 4 + tau0 t + 1``.

    ``eps = sqrt(mdelta0 - tau0^2)``. For ``0 < eps < SMALL_EPS`` the arctan
    form loses accuracy and composite 5-point Gauss-Legendre quadrature is
    used instead.
    """
    if t == 0:
        return 0.0
    if parallel or eps == 0.0:
        return 2.0 * t / (2.0 + tau0 * t)
    if eps < SMALL_EPS:
        return _s_quadrature(lambda x: 0.25 * mdelta0 * x * x + tau0 * x + 1.0, t)
    # (2/eps) * angle of the point (eps t, 2 + tau0 t); it stays in the
    # upper half plane for t > 0, so atan2 is the continuous branch.
    return 2.0 / eps * math.atan2(eps * t, 2.0 + tau0 * t)


def _s_quadrature(f, t, panels=64):
    edges = np.linspace(0.0, t, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] / f(pts)))


def solve_ivp(a0, u0):
    """Closed-form geodesic data for initial point ``a0`` and velocity ``u0``."""
    a0 = as_frame(a0)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != a0.shape:
        raise ValueError("u0 must have the shape of a0")
    m = a0.m
    L0 = u0 @ a0.pinv
    tau0 = float(np.trace(L0))
    delta0 = float(np.sum(L0 * L0))
    norm_u = np.linalg.norm(u0)
    c = float(np.sum(u0 * a0.mat) / np.sum(a0.mat * a0.mat))
    parallel = norm_u == 0.0 or np.linalg.norm(u0 - c * a0.mat) <= PARALLEL_TOL * norm_u
    # Cauchy-Schwarz: tau0^2 <= m delta0 with equality iff u0 is parallel to a0
    assert tau0 * tau0 <= m * delta0 * (1 + 1e-12) + 1e-300, "tau0^2 > m delta0"
    if parallel:
        eps = 0.0
        omega0 = np.zeros((a0.n, a0.n))
        P0 = np.zeros((m, m))
        N0 = np.zeros((m, m))
        blowup = 2.0 / (abs(c) * m) if c < 0 else None
        tau0, delta0 = c * m, c * c * m
    else:
        # m delta0 - tau0^2 = m |L0 - (tau0 / m) a0 a0^+|_F^2, evaluated without cancellation
        eps = math.sqrt(m) * float(np.linalg.norm(L0 - (tau0 / m) * a0.projector))
        omega0 = L0.T - L0
        P0 = a0.gram_inv @ u0.T @ a0.mat - (tau0 / m) * np.eye(m)
        blowup = None
    q0, r0 = np.linalg.qr(a0.mat)
    if not parallel:
        N0 = q0.T @ L0.T @ q0 - (tau0 / m) * np.eye(m)
    return GeodesicSolution(a0, u0.copy(), tau0, delta0, eps, omega0, P0, N0, q0, r0, blowup, bool(parallel))


def _check_time(sol, t):
    if t < 0:
        raise ValueError("geodesics are evaluated for t >= 0")
    if sol.blowup is not None and t >= sol.blowup:
        raise BeyondBlowup(f"t = {t} is at or beyond the blow-up time {sol.blowup}", blowup=sol.blowup)


def eval_geodesic(sol, t, frame=True):
    """Point and velocity of the geodesic at time ``t``.

    Returns ``(a, at)``; ``a`` is a :class:`Frame` unless ``frame=False``.
    """
    _check_time(sol, t)
    a0, m = sol.a0.mat, sol.m
    if t == 0:
        a, at = a0.copy(), sol.u0.copy()
    else:
        f = sol.f(t)
        s = sol.s(t)
        if sol.parallel:
            a = f ** (1.0 / m) * a0
            at = (sol.df(t) / (m * f)) * a
        else:
            rot = matrix_exp(-s * sol.omega0)
            E = matrix_exp(s * sol.N0)
            # a0 expm(s P0) = Q expm(s N0) R and a0 P0 expm(s P0) = Q N0 expm(s N0) R
            a = f ** (1.0 / m) * (rot @ (sol.q0 @ (E @ sol.r0)))
            aP0 = f ** (1.0 / m) * (rot @ (sol.q0 @ (sol.N0 @ E @ sol.r0)))
            at = (sol.df(t) / (m * f)) * a + (-sol.omega0 @ a + aP0) / f
    return (Frame(a) if frame else a), at


def velocity_matrix(sol, t):
    """``L(t) = a_t(t) a(t)^+``."""
    a, at = eval_geodesic(sol, t)
    return at @ a.pinv


def tau_delta_check(sol, t):
    """Return ``(f'(t) / f(t), delta0 / f(t))``, the closed forms of ``tr L`` and ``tr(L^T L)``."""
    _check_time(sol, t)
    f = sol.f(t)
    return sol.df(t) / f, sol.delta0 / f


@dataclass(frozen=True)
class MatrixPath:
    times: np.ndarray
    frames: list
    velocities: list

    def __post_init__(self):
        if not (len(self.times) == len(self.frames) == len(self.velocities)):
            raise ValueError("times, frames and velocities must have equal lengths")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def matrices(self):
        return np.array([f.mat for f in self.frames])


def sample_geodesic(sol, times):
    """Evaluate ``sol`` on a grid and collect a :class:`MatrixPath`."""
    frames, vels = [], []
    for t in times:
        a, at = eval_geodesic(sol, float(t))
        frames.append(a)
        vels.append(at)
    return MatrixPath(np.asarray(times, dtype=float), frames, vels)


def _rhs_batch(x, v):
    """Geodesic acceleration for stacks ``x, v`` of shape ``(B, n, m)``."""
    gi = np.linalg.inv(np.swapaxes(x, 1, 2) @ x)
    w = v @ gi
    c = np.swapaxes(v, 1, 2) @ x
    wv = np.einsum("bij,bij->b", w, v)[:, None, None]
    wx = np.einsum("bij,bij->b", w, x)[:, None, None]
    return (w @ (c + np.swapaxes(c, 1, 2)) - x @ (gi @ (np.swapaxes(v, 1, 2) @ v))
            + 0.5 * wv * x - wx * v)


def integrate_numeric_batch(a0, u0, T, steps, rank_tol=1e-3):
    """Classical RK4 for a stack of initial conditions of one shape.

    Parameters
    ----------
    a0, u0 : array_like, shape (B, n, m)
    T : float
    steps : int
    rank_tol : float
        Rank loss is declared for a sample when the smallest singular value
        of a state, or of the midpoint of two consecutive states, drops below
        ``rank_tol`` times the smallest singular value of its ``a0``.

    Returns
    -------
    times : ndarray, shape (steps + 1,)
    frames, velocities : ndarray, shape (steps + 1, B, n, m)
        Entries after a sample's rank loss are NaN.
    loss : ndarray, shape (B,)
        Time of rank loss per sample, NaN where none occurred.
    """
    x = np.array(a0, dtype=float)
    v = np.array(u0, dtype=float)
    if x.ndim != 3 or x.shape != v.shape:
        raise ValueError("a0 and u0 must be stacks of equal shape (B, n, m)")
    for a in x:
        check_full_rank(a)
    smin = lambda y: np.linalg.svd(y, compute_uv=False)[:, -1]
    floor = rank_tol * smin(x)
    h = T / steps
    B = x.shape[0]
    xs = np.full((steps + 1,) + x.shape, np.nan)
    vs = np.full_like(xs, np.nan)
    xs[0], vs[0] = x, v
    loss = np.full(B, np.nan)
    alive = np.arange(B)
    with np.errstate(all="ignore"):
        for k in range(steps):
            if alive.size == 0:
                break
            t = k * h
            y, w = x[alive], v[alive]
            try:
                y_new, w_new = _rk4_step(y, w, h)
            except np.linalg.LinAlgError:
                # a singular Gram matrix somewhere in the batch: redo one by one
                y_new, w_new = np.full_like(y, np.nan), np.full_like(w, np.nan)
                for i in range(len(alive)):
                    try:
                        y_new[i:i + 1], w_new[i:i + 1] = _rk4_step(y[i:i + 1], w[i:i + 1], h)
                    except np.linalg.LinAlgError:
                        pass
            finite = np.all(np.isfinite(y_new) & np.isfinite(w_new), axis=(1, 2))
            mid_ok = np.zeros(len(alive), bool)
            end_ok = np.zeros(len(alive), bool)
            if finite.any():
                mid_ok[finite] = smin(0.5 * (y[finite] + y_new[finite])) >= floor[alive][finite]
                end_ok[finite] = smin(y_new[finite]) >= floor[alive][finite]
            # rank loss time: the midpoint unless only the end state failed
            only_end = finite & mid_ok & ~end_ok
            failed = ~(finite & mid_ok & end_ok)
            loss[alive[failed]] = np.where(only_end[failed], t + h, t + 0.5 * h)
            keep = ~failed
            x[alive[keep]], v[alive[keep]] = y_new[keep], w_new[keep]
            alive = alive[keep]
            xs[k + 1, alive], vs[k + 1, alive] = x[alive], v[alive]
    return np.linspace(0.0, T, steps + 1), xs, vs, loss


def _rk4_step(y, w, h):
    k1 = _rhs_batch(y, w)
    k2 = _rhs_batch(y + 0.5 * h * w, w + 0.5 * h * k1)
    k3 = _rhs_batch(y + 0.5 * h * (w + 0.5 * h * k1), w + 0.5 * h * k2)
    k4 = _rhs_batch(y + h * (w + 0.5 * h * k2), w + h * k3)
    return y + h * w + h * h / 6.0 * (k1 + k2 + k3), w + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_numeric(a0, u0, T, steps, rank_tol=1e-3):
    """Classical RK4 for ``(a, a_t)`` on ``[0, T]``.

    A single-sample call of :func:`integrate_numeric_batch`; see there for
    the rank-loss rule.

    Raises
    ------
    RankLossAt
        With the path computed up to the last full-rank state.
    """
    a0 = as_frame(a0)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != a0.shape:
        raise ValueError(f"u0 of shape {u0.shape} at a frame of shape {a0.shape}")
    times, xs, vs, loss = integrate_numeric_batch(a0.mat[None], u0[None], T, steps, rank_tol)
    last = len(times) if np.isnan(loss[0]) else int(np.argmax(np.isnan(xs[:, 0, 0, 0])))
    frames = [a0] + [Frame(x) for x in xs[1:last, 0]]
    path = MatrixPath(times[:last], frames, [v.copy() for v in vs[:last, 0]])
    if not np.isnan(loss[0]):
        raise RankLossAt(f"rank loss near t = {loss[0]:.6g}", float(loss[0]), path)
    return path


def _speeds_squared(path):
    return np.array([metric(a, v, v) for a, v in zip(path.frames, path.velocities)])


def path_energy(path):
    """Trapezoidal quadrature of ``|a_t|_a^2`` over the path's times."""
    if len(path) == 0:
        raise ValueError("empty path")
    if len(path) == 1:
        return 0.0
    return float(np.trapezoid(_speeds_squared(path), path.times))


def path_length(path):
    """Trapezoidal quadrature of ``|a_t|_a`` over the path's times."""
    if len(path) == 0:
        raise ValueError("empty path")
    if len(path) == 1:
        return 0.0
    return float(np.trapezoid(np.sqrt(np.maximum(_speeds_squared(path), 0.0)), path.times))


def geodesic_length(a0, u0, T=1.0):
    """Length of the geodesic ``t -> eval_geodesic(solve_ivp(a0, u0), t)`` on ``[0, T]``.

    Geodesics have constant speed, so this is ``T * |u0|_{a0}``.
    """
    return T * math.sqrt(max(metric(a0, u0, u0), 0.0))


def endpoint(a0, u0, t=1.0):
    a, _ = eval_geodesic(solve_ivp(a0, u0), t, frame=False)
    return a


def shoot_bvp(a0, a1, max_iter=50, tol=1e-10, u_init=None, fd_step=1e-7):
    """Find ``u0`` with ``endpoint(a0, u0, 1) = a1`` by damped Gauss-Newton.

    The Jacobian of the endpoint map is formed by central differences. The
    default initial guess is ``a1 - a0``.

    Returns
    -------
    u0 : ndarray
    residual : float
        Frobenius norm of the endpoint mismatch.

    Raises
    ------
    NoConvergence
        Carrying the best iterate when ``tol`` is not met.
    """
    a0 = as_frame(a0)
    a1 = np.asarray(a1.mat if isinstance(a1, Frame) else a1, dtype=float)
    if a1.shape != a0.shape:
        raise ValueError("endpoints must have the same shape")
    as_frame(a1)
    shape = a0.shape

    def residual(u):
        # trial velocities may overflow the exponentials; such trials are rejected
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                r = endpoint(a0, u) - a1
        except (RankDeficient, np.linalg.LinAlgError, ValueError):
            return None
        return r if np.all(np.isfinite(r)) else None

    u = (a1 - a0.mat) if u_init is None else np.asarray(u_init, dtype=float).copy()
    r = residual(u)
    if r is None:
        u = np.zeros(shape)
        r = residual(u)
    best_u, best_res = u.copy(), float(np.linalg.norm(r))
    for _ in range(max_iter):
        if best_res <= tol:
            return best_u, best_res
        size = u.size
        J = np.empty((size, size))
        h = fd_step * max(1.0, np.linalg.norm(u))
        ok = True
        for j in range(size):
            e = np.zeros(size)
            e[j] = h
            rp, rm = residual(u + e.reshape(shape)), residual(u - e.reshape(shape))
            if rp is None or rm is None:
                ok = False
                break
            J[:, j] = (rp - rm).ravel() / (2 * h)
        if not ok:
            break
        step = np.linalg.lstsq(J, -r.ravel(), rcond=None)[0].reshape(shape)
        lam = 1.0
        res = float(np.linalg.norm(r))
        while lam > 1e-6:
            cand = u + lam * step
            rc = residual(cand)
            if rc is not None and np.linalg.norm(rc) < res:
                u, r = cand, rc
                break
            lam *= 0.5
        else:
            break
        res = float(np.linalg.norm(r))
        if res < best_res:
            best_u, best_res = u.copy(), res
    if best_res <= tol:
        return best_u, best_res
    raise NoConvergence(f"shooting stalled at residual {best_res:.3e}", best_u, best_res)
