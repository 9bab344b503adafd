"""The Riemannian submersion ``pi(a) = a^T a`` onto SPD matrices.

The base carries the finite-dimensional Ebin metric
``<h, k>_g = 1/4 tr(h g^-1 k g^-1) sqrt(det g)``. Vertical vectors at ``a`` are
``X a`` with ``X`` skew; horizontal vectors ``v`` have ``v a^+`` symmetric.
"""

from dataclasses import dataclass

import numpy as np

from .curvature import sectional
from .errors import DegeneratePlane, NotSPD
from .linalg import sym_eigh, sym_invsqrt, sym_sqrt
from .metric import PLANE_TOL, Frame, as_frame, metric, orthonormalize_pair

SYM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SymPoint:
    """An SPD matrix ``g`` with its inverse and ``sqrt(det g)`` cached."""

    g: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        scale = max(np.abs(g).max(), 1.0) if g.size else 1.0
        if g.ndim != 2 or g.shape[0] != g.shape[1] or np.abs(g - g.T).max() > 1e-10 * scale:
            raise NotSPD("base point must be a symmetric matrix")
        g = 0.5 * (g + g.T)
        w, _ = sym_eigh(g)
        g.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "inv", np.linalg.inv(g))
        object.__setattr__(self, "sqrt_det", float(np.sqrt(np.prod(w))))

    @property
    def m(self):
        return self.g.shape[0]


def as_sym_point(g):
    return g if isinstance(g, SymPoint) else SymPoint(g)


def _sym(h, tol=1e-10):
    h = np.asarray(h, dtype=float)
    if np.abs(h - h.T).max() > tol * max(np.abs(h).max(), 1.0):
        raise ValueError("tangent vector must be symmetric")
    return 0.5 * (h + h.T)


def project_pi(a):
    """``a -> a^T a``."""
    a = as_frame(a)
    return SymPoint(a.gram)


def dpi(a, v):
    """Differential of ``pi``: ``a^T v + v^T a``."""
    x = a.mat if isinstance(a, Frame) else np.asarray(a, dtype=float)
    v = np.asarray(v, dtype=float)
    return x.T @ v + v.T @ x


def split_horizontal_vertical(a, u):
    """Metric-orthogonal split ``u = h + X a`` with ``X`` skew and ``h a^+`` symmetric.

    ``X`` minimizes ``|u - X a|_a``; the normal equations are solved densely
    over a basis of skew matrices.

    Returns
    -------
    h, vert : ndarray
    """
    a = as_frame(a)
    u = np.asarray(u, dtype=float)
    n = a.n
    U, P = u @ a.pinv, a.projector
    iu, ju = np.triu_indices(n, 1)
    # |U - X P|_F^2 is the metric norm up to the constant sqrt(det)
    cols = []
    for i, j in zip(iu, ju):
        E = np.zeros((n, n))
        E[i, j], E[j, i] = 1.0, -1.0
        cols.append((E @ P).ravel())
    if not cols:
        return u.copy(), np.zeros_like(u)
    A = np.array(cols).T
    coef = np.linalg.lstsq(A, U.ravel(), rcond=None)[0]
    X = np.zeros((n, n))
    X[iu, ju] = coef
    X -= X.T
    vert = X @ a.mat
    return u - vert, vert


def is_horizontal(a, v, tol=1e-10):
    a = as_frame(a)
    V = np.asarray(v, dtype=float) @ a.pinv
    return bool(np.abs(V - V.T).max() <= tol * max(np.abs(V).max(), 1.0))


def horizontal_lift(a, h):
    """Horizontal ``v = 1/2 (a^+)^T h`` with ``dpi(a, v) = h``."""
    a = as_frame(a)
    return 0.5 * a.pinv.T @ _sym(h)


def orbit_decompose(a):
    """Write ``a = z [s; 0]`` with ``z`` orthogonal and ``s`` SPD.

    Returns
    -------
    z : ndarray, shape (n, n)
    s : ndarray, shape (m, m)
    """
    a = as_frame(a)
    s = sym_sqrt(a.gram)
    z1 = a.mat @ np.linalg.inv(s)
    if a.n == a.m:
        return z1, s
    q, _ = np.linalg.qr(z1, mode="complete")
    return np.hstack([z1, q[:, a.m:]]), s


def sym_metric(g, h, k):
    """Ebin inner product ``1/4 tr(h g^-1 k g^-1) sqrt(det g)``."""
    g = as_sym_point(g)
    h, k = _sym(h), _sym(k)
    return float(0.25 * np.trace(h @ g.inv @ k @ g.inv) * g.sqrt_det)


def sym_geodesic_rhs(g, gt):
    """``g_tt = g_t g^-1 g_t + 1/4 tr(g^-1 g_t g^-1 g_t) g - 1/2 tr(g^-1 g_t) g_t``."""
    g = as_sym_point(g)
    gt = _sym(gt)
    gi = g.inv
    out = gt @ gi @ gt + 0.25 * np.trace(gi @ gt @ gi @ gt) * g.g - 0.5 * np.trace(gi @ gt) * gt
    return 0.5 * (out + out.T)


def sym_christoffel(g, h, k):
    """Polarization of :func:`sym_geodesic_rhs`."""
    g = as_sym_point(g)
    h, k = _sym(h), _sym(k)
    gi = g.inv
    return (0.5 * (h @ gi @ k + k @ gi @ h) + 0.25 * np.trace(gi @ h @ gi @ k) * g.g
            - 0.25 * (np.trace(gi @ h) * k + np.trace(gi @ k) * h))


def sym_orthonormalize(g, h, k, tol=PLANE_TOL):
    g = as_sym_point(g)
    hh, kk, hk = sym_metric(g, h, h), sym_metric(g, k, k), sym_metric(g, h, k)
    if hh <= 0 or kk <= 0 or hh * kk - hk * hk <= tol * hh * kk:
        raise DegeneratePlane("symmetric tangents do not span a 2-plane")
    e1 = _sym(h) / np.sqrt(hh)
    w = _sym(k) - sym_metric(g, e1, k) * e1
    return e1, w / np.sqrt(sym_metric(g, w, w))


def sym_curvature_form(g, h, k, traceless=True):
    """``(1/16)[tr([A, B]^2) + m/4 tr(AB)^2 - m/4 tr(A^2) tr(B^2)] sqrt(det g)``.

    ``A = g^-1 h`` and ``B = g^-1 k``, replaced by their traceless parts when
    ``traceless`` is set. For an orthonormal pair this is the sectional
    curvature. Without the traceless projection the expression is wrong on
    planes containing the scaling direction ``h = g``, where the curvature
    vanishes.
    """
    g = as_sym_point(g)
    m = g.m
    A, B = g.inv @ _sym(h), g.inv @ _sym(k)
    if traceless:
        A = A - np.trace(A) / m * np.eye(m)
        B = B - np.trace(B) / m * np.eye(m)
    C = A @ B - B @ A
    tr = np.trace
    return float((tr(C @ C) + m / 4 * tr(A @ B) ** 2 - m / 4 * tr(A @ A) * tr(B @ B)) / 16 * g.sqrt_det)


def sym_sectional(g, h, k):
    """Sectional curvature of the Ebin metric on the plane spanned by ``h, k``."""
    g = as_sym_point(g)
    e1, e2 = sym_orthonormalize(g, h, k)
    return sym_curvature_form(g, e1, e2)


@dataclass(frozen=True)
class ONeillResult:
    k_sym: float
    k_mat: float
    oneill_term: float

    @property
    def defect(self):
        """``k_sym - (k_mat + oneill_term)``; zero up to rounding."""
        return self.k_sym - self.k_mat - self.oneill_term


def oneill_check(a, u, v, tol=1e-10):
    """Compare base and total-space curvature of a horizontal plane.

    ``u, v`` must be horizontal; they are orthonormalized first. The O'Neill
    term is ``3/4 |[U, V] a|_a^2 = -3/4 tr([U, V]^2) sqrt(det(a^T a))`` with
    ``U = u a^+``, ``V = v a^+``.
    """
    a = as_frame(a)
    for w in (u, v):
        if not is_horizontal(a, w, tol):
            raise ValueError("oneill_check needs horizontal tangent vectors")
    e1, e2 = orthonormalize_pair(a, u, v)
    U, V = e1 @ a.pinv, e2 @ a.pinv
    C = U @ V - V @ U
    term = float(-0.75 * np.trace(C @ C) * a.sqrt_det)
    k_mat = sectional(a, e1, e2)
    k_sym = sym_sectional(project_pi(a), dpi(a, e1), dpi(a, e2))
    return ONeillResult(k_sym, k_mat, term)


def lift_metric_to_frame(g, a0):
    """Frame ``b = a0 sqrt(Y)``, ``Y = g0^-1 g``, ``g0 = a0^T a0``, so that ``b^T b = g``."""
    a0 = as_frame(a0)
    g = as_sym_point(g)
    if g.m != a0.m:
        raise ValueError("dimension mismatch between g and a0")
    r = sym_sqrt(a0.gram)
    ri = sym_invsqrt(a0.gram)
    S = sym_sqrt(ri @ g.g @ ri)
    return Frame(a0.mat @ (ri @ S @ r))


def _random_horizontal(a, rng):
    s = rng.standard_normal((a.m, a.m))
    return horizontal_lift(a, s + s.T)


def projected_ode_residual(a0, v0, times, h=1e-4):
    """Largest relative residual of the Sym geodesic equation along ``pi`` of a geodesic.

    ``g(t) = a(t)^T a(t)`` is differentiated by central differences with step
    ``h`` and compared with :func:`sym_geodesic_rhs`.
    """
    from .geodesics import eval_geodesic, solve_ivp

    sol = solve_ivp(a0, v0)

    def g(t):
        a, _ = eval_geodesic(sol, t, frame=False)
        return a.T @ a

    worst = 0.0
    for t in times:
        gm, g0, gp = g(t - h), g(t), g(t + h)
        gt = (gp - gm) / (2 * h)
        gtt = (gp - 2 * g0 + gm) / (h * h)
        rhs = sym_geodesic_rhs(g0, gt)
        worst = max(worst, np.linalg.norm(gtt - rhs) / max(np.linalg.norm(rhs), np.linalg.norm(gtt), 1e-300))
    return worst


def verify_submersion(seed=0, samples=100, dims=((3, 2), (4, 3), (5, 2), (3, 3), (5, 4))):
    """Check the submersion invariants on seeded random data.

    Returns a dict mapping check names to ``{"passed", "worst", "tol"}`` plus
    an overall ``"passed"`` flag. Inputs with ``samples`` random points per
    check are cycled over ``dims`` (pairs ``(n, m)`` with ``m >= 2``).
    """
    from .geodesics import eval_geodesic, solve_ivp

    rng = np.random.default_rng(seed)
    worst = {k: -np.inf if k == "sym_sectional_max" else 0.0 for k in ("isometry", "lift_preimage", "lift_horizontal", "split", "projected_ode",
                              "horizontal_preserved", "oneill", "sym_sectional_max", "fiber",
                              "lift_metric")}
    # relative tolerances; the purely algebraic round trips (lift, split,
    # fiber, metric lift) lose a factor cond(a^T a) to rounding, hence 1e-9
    tols = {"isometry": 1e-10, "lift_preimage": 1e-9, "lift_horizontal": 1e-9, "split": 1e-9,
            "projected_ode": 1e-5, "horizontal_preserved": 1e-8, "oneill": 1e-8,
            "sym_sectional_max": 1e-12, "fiber": 1e-9, "lift_metric": 1e-9}
    for i in range(samples):
        n, m = dims[i % len(dims)]
        a = Frame(rng.standard_normal((n, m)))
        s = rng.standard_normal((m, m))
        hs = s + s.T
        v = horizontal_lift(a, hs)
        nv = np.sqrt(metric(a, v, v))
        worst["isometry"] = max(worst["isometry"], abs(np.sqrt(sym_metric(project_pi(a), dpi(a, v), dpi(a, v))) - nv) / nv)
        worst["lift_preimage"] = max(worst["lift_preimage"], np.abs(dpi(a, v) - hs).max() / np.abs(hs).max())
        V = v @ a.pinv
        worst["lift_horizontal"] = max(worst["lift_horizontal"], np.abs(V - V.T).max() / np.abs(V).max())
        u = rng.standard_normal((n, m))
        hor, vert = split_horizontal_vertical(a, u)
        H = hor @ a.pinv
        worst["split"] = max(worst["split"], np.abs(H - H.T).max() / np.abs(H).max(),
                             abs(metric(a, hor, vert)) / metric(a, u, u))
        v = v / nv
        worst["projected_ode"] = max(worst["projected_ode"], projected_ode_residual(a, v, (0.25, 0.5, 0.75)))
        sol = solve_ivp(a, v)
        for t in np.linspace(0.0, 1.0, 5):
            at, vt = eval_geodesic(sol, t)
            L = vt @ at.pinv
            worst["horizontal_preserved"] = max(worst["horizontal_preserved"], np.linalg.norm(L - L.T) / np.linalg.norm(L))
        w = _random_horizontal(a, rng)
        r = oneill_check(a, v, w)
        worst["oneill"] = max(worst["oneill"], abs(r.defect) / max(abs(r.k_sym), 1.0))
        g = project_pi(a)
        for _ in range(100):
            h1, h2 = rng.standard_normal((2, m, m))
            try:
                k = sym_sectional(g, h1 + h1.T, h2 + h2.T)
            except DegeneratePlane:
                continue
            worst["sym_sectional_max"] = max(worst["sym_sectional_max"], k)
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        b = Frame(q @ a.mat)
        za, sa = orbit_decompose(a)
        zb, sb = orbit_decompose(b)
        z = zb @ za.T
        worst["fiber"] = max(worst["fiber"], np.abs(project_pi(b).g - g.g).max() / np.abs(g.g).max(),
                             np.abs(sa - sb).max(), np.abs(z @ a.mat - b.mat).max(),
                             np.abs(z.T @ z - np.eye(n)).max())
        x = rng.standard_normal((m, m))
        target = x @ x.T + 0.5 * np.eye(m)
        lifted = lift_metric_to_frame(target, a)
        worst["lift_metric"] = max(worst["lift_metric"], np.abs(lifted.gram - target).max() / np.abs(target).max())
    report = {}
    for k, val in worst.items():
        ok = val <= tols[k]
        report[k] = {"passed": bool(ok), "worst": float(val), "tol": tols[k]}
    report["passed"] = all(r["passed"] for r in report.values())
    return report
