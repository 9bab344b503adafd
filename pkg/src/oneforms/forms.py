"""Discretized one-forms on [0, 1] and curves as their primitives.

The metric on one-forms is pointwise, so a one-form sampled at nodes
``theta_i`` with quadrature weights ``w_i`` inherits everything from the
matrix layer: ``G_alpha(zeta, eta) = sum_i w_i <zeta_i, eta_i>_{alpha_i}``, and
geodesics are node-wise matrix geodesics. Curves ``c`` correspond to forms
``c' dtheta`` modulo translation; for ``m = 1`` the pulled-back metric is
``int h' . k' / |c'| dtheta``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .curvature import riemann
from .errors import BeyondBlowup, NoConvergence, NotImmersed, NotMonotone, RankDeficient
from .geodesics import eval_geodesic, geodesic_length, shoot_bvp, solve_ivp, time_change
from .linalg import matrix_exp
from .metric import Frame, metric


def trapezoid_weights(nodes):
    """Composite trapezoid weights for ``nodes``; they sum to ``nodes[-1] - nodes[0]``."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.size == 1:
        return np.ones(1)
    d = np.diff(nodes)
    w = np.zeros_like(nodes)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _check_nodes(nodes):
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size < 1:
        raise ValueError("nodes must be a nonempty 1-d array")
    if np.any(np.diff(nodes) <= 0):
        raise ValueError("nodes must be strictly increasing")
    if nodes[0] < 0 or nodes[-1] > 1:
        raise ValueError("nodes must lie in [0, 1]")
    return nodes


@dataclass(frozen=True, eq=False)
class DiscreteOneForm:
    """Samples of a full-rank one-form: ``values[i]`` is the ``n x m`` matrix at ``nodes[i]``."""

    nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray = None
    frames: list = field(init=False, repr=False)

    def __post_init__(self):
        nodes = _check_nodes(self.nodes)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3 or values.shape[0] != nodes.size:
            raise ValueError("values must have shape (len(nodes), n, m)")
        weights = trapezoid_weights(nodes) if self.weights is None else np.asarray(self.weights, dtype=float)
        if weights.shape != nodes.shape or np.any(weights <= 0):
            raise ValueError("weights must be positive, one per node")
        frames = []
        for i, v in enumerate(values):
            try:
                frames.append(Frame(v))
            except RankDeficient as err:
                raise RankDeficient(f"one-form is not full rank at node {i}") from err
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "frames", frames)

    @property
    def shape(self):
        return self.values.shape[1:]

    def __len__(self):
        return self.nodes.size


def _field(alpha, zeta):
    zeta = np.asarray(zeta, dtype=float)
    if zeta.ndim == 2 and alpha.shape[1] == 1:
        zeta = zeta[:, :, None]
    if zeta.shape != alpha.values.shape:
        raise ValueError(f"tangent field of shape {zeta.shape} does not match {alpha.values.shape}")
    return zeta


def _stable_sum(x):
    return math.fsum(np.asarray(x, dtype=float).tolist())


def form_metric(alpha, zeta, eta):
    """``sum_i w_i <zeta_i, eta_i>_{alpha_i}``."""
    zeta, eta = _field(alpha, zeta), _field(alpha, eta)
    vals = [metric(f, z, e) for f, z, e in zip(alpha.frames, zeta, eta)]
    return _stable_sum(alpha.weights * np.array(vals))


def form_geodesics(alpha0, zeta0):
    """Per-node closed-form geodesic data."""
    zeta0 = _field(alpha0, zeta0)
    return [solve_ivp(f, z) for f, z in zip(alpha0.frames, zeta0)]


def form_blowup(solutions):
    """Earliest node blow-up time and its node, or ``(None, None)``."""
    times = [(s.blowup, i) for i, s in enumerate(solutions) if s.blowup is not None]
    return min(times) if times else (None, None)


def form_geodesic(alpha0, zeta0, t, solutions=None):
    """Geodesic of one-forms at time ``t``: each node follows its matrix geodesic.

    Raises :class:`BeyondBlowup` with the offending node when ``t`` reaches the
    earliest node blow-up time.
    """
    sols = form_geodesics(alpha0, zeta0) if solutions is None else solutions
    T, node = form_blowup(sols)
    if T is not None and t >= T:
        raise BeyondBlowup(f"node {node} blows up at t = {T}", blowup=T, node=node)
    values = np.array([eval_geodesic(s, t, frame=False)[0] for s in sols])
    return DiscreteOneForm(alpha0.nodes, values, alpha0.weights)


def form_geodesic_velocity(alpha0, zeta0, t, solutions=None):
    sols = form_geodesics(alpha0, zeta0) if solutions is None else solutions
    return np.array([eval_geodesic(s, t, frame=False)[1] for s in sols])


def form_sectional(alpha, zeta, eta):
    """Sectional curvature of the plane spanned by two tangent fields.

    Numerator and Gram determinant are both node-wise quadratures, so the sign
    statements for matrices carry over node by node.
    """
    zeta, eta = _field(alpha, zeta), _field(alpha, eta)
    num = _stable_sum(alpha.weights * np.array(
        [metric(f, riemann(f, z, e, e), z) for f, z, e in zip(alpha.frames, zeta, eta)]))
    zz, ee, ze = form_metric(alpha, zeta, zeta), form_metric(alpha, eta, eta), form_metric(alpha, zeta, eta)
    return num / (zz * ee - ze * ze)


@dataclass(frozen=True)
class DistanceBounds:
    """Bounds on the geodesic distance between two discrete one-forms.

    ``lower`` aggregates shot geodesic lengths node by node (``NaN`` entries in
    ``node_lengths`` mark nodes where shooting failed, and ``partial`` is set);
    ``upper`` aggregates the pointwise bound
    ``2/sqrt(m) (det(a^T a)^(1/4) + det(b^T b)^(1/4))`` the same way.
    ``volume_lower`` aggregates ``2/sqrt(m) |det(a^T a)^(1/4) - det(b^T b)^(1/4)|``,
    which bounds the pointwise distance from below unconditionally.
    """

    lower: float
    upper: float
    volume_lower: float
    partial: bool
    node_lengths: np.ndarray


def pointwise_upper_bound(a, b):
    a, b = Frame(a) if not isinstance(a, Frame) else a, Frame(b) if not isinstance(b, Frame) else b
    return 2.0 / math.sqrt(a.m) * (math.sqrt(a.sqrt_det) + math.sqrt(b.sqrt_det))


def pointwise_volume_bound(a, b):
    a, b = Frame(a) if not isinstance(a, Frame) else a, Frame(b) if not isinstance(b, Frame) else b
    return 2.0 / math.sqrt(a.m) * abs(math.sqrt(a.sqrt_det) - math.sqrt(b.sqrt_det))


def distance_bounds(alpha, beta, max_iter=50, tol=1e-10):
    """Node-wise distance bounds, aggregated as ``sqrt(sum_i w_i d_i^2)``."""
    if not np.array_equal(alpha.nodes, beta.nodes) or alpha.shape != beta.shape:
        raise ValueError("one-forms must share the node grid and matrix shape")
    w = alpha.weights
    lengths = np.empty(len(alpha))
    for i, (fa, fb) in enumerate(zip(alpha.frames, beta.frames)):
        if np.array_equal(fa.mat, fb.mat):
            lengths[i] = 0.0
            continue
        try:
            u0, _ = shoot_bvp(fa, fb, max_iter=max_iter, tol=tol)
        except NoConvergence:
            lengths[i] = np.nan
            continue
        lengths[i] = geodesic_length(fa, u0)
    ok = np.isfinite(lengths)
    upper = np.array([pointwise_upper_bound(a, b) for a, b in zip(alpha.frames, beta.frames)])
    vol = np.array([pointwise_volume_bound(a, b) for a, b in zip(alpha.frames, beta.frames)])
    agg = lambda d: math.sqrt(_stable_sum(w * d * d))  # noqa: E731
    lower = agg(lengths[ok]) if ok.all() else math.sqrt(_stable_sum(w[ok] * lengths[ok] ** 2))
    return DistanceBounds(lower, agg(upper), agg(vol), not ok.all(), lengths)


def _interp_rows(x, xp, fp):
    """Piecewise-linear interpolation of the rows of ``fp`` (first axis) at ``x``."""
    flat = fp.reshape(fp.shape[0], -1)
    out = np.column_stack([np.interp(x, xp, flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape((len(x),) + fp.shape[1:])


def _check_reparam(nodes, phi, dphi):
    phi = np.asarray(phi, dtype=float)
    dphi = np.asarray(dphi, dtype=float)
    if phi.shape != nodes.shape or dphi.shape != nodes.shape:
        raise ValueError("phi and dphi must be sampled at the nodes")
    if np.any(np.diff(phi) <= 0) or np.any(dphi <= 0):
        raise NotMonotone("reparametrization must be strictly increasing")
    if not (np.isclose(phi[0], nodes[0]) and np.isclose(phi[-1], nodes[-1])):
        raise NotMonotone("reparametrization must fix the endpoints")
    return phi, dphi


def reparametrize(alpha, phi, dphi, tangent=None):
    """Pull back by a diffeomorphism: ``(phi^* alpha)(theta) = alpha(phi(theta)) phi'(theta)``.

    ``phi`` and ``dphi`` are samples of the map and its derivative at
    ``alpha.nodes``; values between nodes are linearly interpolated. If
    ``tangent`` is given it is pulled back the same way and returned too.
    """
    phi, dphi = _check_reparam(alpha.nodes, phi, dphi)
    scale = dphi[:, None, None]
    values = _interp_rows(phi, alpha.nodes, alpha.values) * scale
    new = DiscreteOneForm(alpha.nodes, values, alpha.weights)
    if tangent is None:
        return new
    return new, _interp_rows(phi, alpha.nodes, _field(alpha, tangent)) * scale


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """Points ``points[i]`` in R^n sampled at ``nodes[i]``."""

    nodes: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        nodes = _check_nodes(self.nodes)
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] != nodes.size or nodes.size < 3:
            raise ValueError("a discrete curve needs at least 3 nodes and one point per node")
        steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
        bad = np.flatnonzero(steps == 0)
        if bad.size:
            raise NotImmersed(f"consecutive points coincide at node {bad[0]}", node=int(bad[0]))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "points", points)

    @property
    def dim(self):
        return self.points.shape[1]


def derivative(nodes, values):
    """Second-order finite differences along the first axis (one-sided at the ends)."""
    return np.gradient(np.asarray(values, dtype=float), nodes, axis=0, edge_order=2)


def _curve_derivative(c):
    d = derivative(c.nodes, c.points)
    speed = np.linalg.norm(d, axis=1)
    bad = np.flatnonzero(speed <= 1e-12 * max(speed.max(), 1e-300))
    if bad.size:
        raise NotImmersed(f"derivative vanishes at node {bad[0]}", node=int(bad[0]))
    return d


def curve_to_form(c, weights=None):
    """The one-form ``c' dtheta`` with ``n x 1`` values."""
    return DiscreteOneForm(c.nodes, _curve_derivative(c)[:, :, None], weights)


def integrate_values(nodes, values, basepoint=None):
    """Cumulative trapezoid integral of node values, pinned to ``basepoint`` at the first node."""
    values = np.asarray(values, dtype=float)
    pts = cumulative_trapezoid(values, nodes, axis=0, initial=0.0)
    if basepoint is not None:
        pts = pts + np.asarray(basepoint, dtype=float)
    return pts


def form_to_curve(alpha, basepoint=None):
    """Integrate an ``n x 1`` one-form; ``c(nodes[0]) = basepoint`` (origin by default)."""
    if alpha.shape[1] != 1:
        raise ValueError("only n x 1 one-forms integrate to curves")
    return DiscreteCurve(alpha.nodes, integrate_values(alpha.nodes, alpha.values[:, :, 0], basepoint))


def vector_field_derivative(c, h):
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape != c.points.shape:
        raise ValueError("vector field must have one vector per node")
    return derivative(c.nodes, h)


def curve_metric(c, h, k):
    """Younes metric ``sum_i w_i h'_i . k'_i / |c'_i|`` with trapezoid weights."""
    d = _curve_derivative(c)
    dh, dk = vector_field_derivative(c, h), vector_field_derivative(c, k)
    w = trapezoid_weights(c.nodes)
    return _stable_sum(w * np.einsum("ij,ij->i", dh, dk) / np.linalg.norm(d, axis=1))


def reparametrize_curve(c, phi, h=None):
    """``c o phi`` (and ``h o phi``) by linear interpolation of the samples."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != c.nodes.shape or np.any(np.diff(phi) <= 0):
        raise NotMonotone("reparametrization must be strictly increasing")
    new = DiscreteCurve(c.nodes, _interp_rows(phi, c.nodes, c.points))
    if h is None:
        return new
    h = np.asarray(h, dtype=float).reshape(c.points.shape)
    return new, _interp_rows(phi, c.nodes, h)


@dataclass(frozen=True)
class CurveGeodesicSolution:
    """Per-node geodesic data for a curve geodesic.

    ``derivative`` holds ``c0'`` at the nodes; ``tau0``, ``delta0``, ``eps`` and
    ``omega0`` are the node-wise closed-form quantities; ``blowup`` is the
    earliest node blow-up time.
    """

    nodes: np.ndarray
    derivative: np.ndarray
    tau0: np.ndarray
    delta0: np.ndarray
    eps: np.ndarray
    omega0: np.ndarray
    parallel: np.ndarray
    blowup: float | None
    blowup_node: int | None
    basepoint: np.ndarray


def solve_curve_geodesic(c0, h):
    """Closed-form data for the geodesic from ``c0`` in direction ``h`` (modulo translation)."""
    d = _curve_derivative(c0)
    dh = vector_field_derivative(c0, h)
    return _solve_from_derivatives(c0.nodes, d, dh, c0.points[0])


def _solve_from_derivatives(nodes, d, dh, basepoint):
    N, n = d.shape
    sq = np.einsum("ij,ij->i", d, d)
    V = dh[:, :, None] * (d / sq[:, None])[:, None, :]  # V = h' c0'^+
    tau0 = np.einsum("ij,ij->i", dh, d) / sq
    delta0 = np.einsum("ij,ij->i", dh, dh) / sq
    omega0 = np.swapaxes(V, 1, 2) - V
    c = tau0.copy()  # for m = 1, h' = c c0' gives tau0 = c
    resid = np.linalg.norm(dh - c[:, None] * d, axis=1)
    parallel = resid <= 1e-10 * np.maximum(np.linalg.norm(dh, axis=1), 1e-300)
    parallel |= np.linalg.norm(dh, axis=1) == 0
    # delta0 - tau0^2 = |h' - tau0 c0'|^2 / |c0'|^2, evaluated without cancellation
    eps = np.linalg.norm(dh - tau0[:, None] * d, axis=1) / np.sqrt(sq)
    eps[parallel] = 0.0
    omega0[parallel] = 0.0
    blow = np.where(parallel & (c < 0), 2.0 / np.abs(np.where(c == 0, 1.0, c)), np.inf)
    if np.isfinite(blow).any():
        node = int(np.argmin(blow))
        T, Tnode = float(blow[node]), node
    else:
        T, Tnode = None, None
    return CurveGeodesicSolution(nodes, d, tau0, delta0, eps, omega0, parallel, T, Tnode,
                                 np.asarray(basepoint, dtype=float))


def _curve_s(sol, t):
    return np.array([time_change(t, tau, delta, eps, par)
                     for tau, delta, eps, par in zip(sol.tau0, sol.delta0, sol.eps, sol.parallel)])


def curve_geodesic_derivative(sol, t):
    """``c'(t, theta_i) = f_i(t) expm(-s_i(t) (V_i^T - V_i)) c0'(theta_i)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if sol.blowup is not None and t >= sol.blowup:
        raise BeyondBlowup(f"node {sol.blowup_node} blows up at t = {sol.blowup}",
                           blowup=sol.blowup, node=sol.blowup_node)
    if t == 0:
        return sol.derivative.copy()
    f = 0.25 * sol.delta0 * t * t + sol.tau0 * t + 1.0
    s = _curve_s(sol, t)
    out = np.empty_like(sol.derivative)
    for i in range(out.shape[0]):
        rot = sol.derivative[i] if sol.parallel[i] else matrix_exp(-s[i] * sol.omega0[i]) @ sol.derivative[i]
        out[i] = f[i] * rot
    return out


def curve_geodesic(c0, h, t, solution=None, basepoint=None):
    """Point at time ``t`` on the geodesic of curves modulo translation.

    The change of the derivative, ``c'(t) - c0'``, is integrated by the
    cumulative trapezoid rule and added to the samples of ``c0``, so ``t = 0``
    and ``h = 0`` return ``c0`` exactly. The first point stays at ``c0``'s
    first point unless ``basepoint`` is given.
    """
    sol = solve_curve_geodesic(c0, h) if solution is None else solution
    d = curve_geodesic_derivative(sol, t)
    points = c0.points + integrate_values(sol.nodes, d - sol.derivative)
    if basepoint is not None:
        points = points + (np.asarray(basepoint, dtype=float) - c0.points[0])
    return DiscreteCurve(sol.nodes, points)
