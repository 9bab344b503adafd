import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oneforms.errors import BeyondBlowup, NotImmersed, NotMonotone, RankDeficient
from oneforms.forms import (DiscreteCurve, DiscreteOneForm, curve_geodesic, curve_geodesic_derivative,
                            curve_metric, curve_to_form, distance_bounds, form_geodesic, form_metric,
                            form_sectional, form_to_curve, reparametrize, reparametrize_curve,
                            solve_curve_geodesic, trapezoid_weights)
from oneforms.geodesics import eval_geodesic, path_length, sample_geodesic, solve_ivp
from oneforms.linalg import random_orthogonal
from oneforms.metric import metric

from conftest import random_frame

BLOCK = np.vstack([np.eye(2), np.zeros((1, 2))])
E32 = np.zeros((3, 2))
E32[2, 1] = 1.0


def grid(N):
    return np.linspace(0.0, 1.0, N)


def smooth_form(nodes, n=3, m=1, phase=0.0):
    """A full-rank n x m form with entries built from smooth functions of theta."""
    t = nodes[:, None, None]
    i = np.arange(n)[None, :, None]
    j = np.arange(m)[None, None, :]
    vals = np.cos((i + 1) * t + j + phase) * 0.5
    vals[:, :m, :] += np.eye(n, m)[None, :m, :] * (1.5 + np.sin(2 * t[:, :, :]))
    return vals


def order(errors):
    e = np.asarray(errors)
    return np.log2(e[:-1] / e[1:])


def test_trapezoid_weights():
    w = trapezoid_weights(grid(11))
    assert w.sum() == pytest.approx(1.0) and w[0] == pytest.approx(0.05)
    x = np.array([0.0, 0.1, 0.5, 1.0])
    assert trapezoid_weights(x) @ x ** 1 == pytest.approx(0.5)


def test_form_validation():
    with pytest.raises(ValueError):
        DiscreteOneForm(np.array([0.0, 0.5, 0.4]), np.ones((3, 2, 1)))
    vals = np.tile(BLOCK, (4, 1, 1))
    vals[2] = 0.0
    with pytest.raises(RankDeficient, match="node 2"):
        DiscreteOneForm(grid(4), vals)


def test_form_metric_examples(rng):
    N = 9
    alpha = DiscreteOneForm(grid(N), np.tile(BLOCK, (N, 1, 1)))
    z = np.tile(E32, (N, 1, 1))
    assert form_metric(alpha, z, z) == pytest.approx(1.0, abs=1e-15)
    assert form_metric(alpha, np.zeros_like(z), z) == 0.0
    vals = smooth_form(grid(N), 4, 2)
    alpha = DiscreteOneForm(grid(N), vals)
    zeta, eta = rng.standard_normal((2, N, 4, 2))
    direct = sum(w * metric(v, a, b) for w, v, a, b in zip(alpha.weights, vals, zeta, eta))
    assert form_metric(alpha, zeta, eta) == pytest.approx(direct, rel=1e-13)
    rot = np.array([random_orthogonal(4, s) for s in range(N)])
    rotated = DiscreteOneForm(grid(N), rot @ vals)
    ref = form_metric(alpha, zeta, eta)
    assert abs(form_metric(rotated, rot @ zeta, rot @ eta) - ref) < 1e-12 * max(1.0, abs(ref))


def test_form_geodesic_scaling():
    N, c, m = 7, -0.8, 2
    vals = smooth_form(grid(N), 3, m)
    alpha = DiscreteOneForm(grid(N), vals)
    T = 2 / (abs(c) * m)
    beta = form_geodesic(alpha, c * vals, 0.9 * T)
    assert np.abs(beta.values - (1 + c * m * 0.9 * T / 2) ** (2 / m) * vals).max() < 1e-12
    with pytest.raises(BeyondBlowup) as info:
        form_geodesic(alpha, c * vals, T)
    assert info.value.blowup == pytest.approx(T) and 0 <= info.value.node < N


def test_form_geodesic_blowup_node():
    N = 5
    vals = smooth_form(grid(N), 3, 1)
    zeta = np.zeros_like(vals)
    zeta[3] = -2.0 * vals[3]
    with pytest.raises(BeyondBlowup) as info:
        form_geodesic(DiscreteOneForm(grid(N), vals), zeta, 1.0)
    assert info.value.node == 3 and info.value.blowup == pytest.approx(1.0)


def test_form_geodesic_is_nodewise(rng):
    N = 6
    vals = smooth_form(grid(N), 4, 2)
    zeta = 0.5 * rng.standard_normal(vals.shape)
    alpha = DiscreteOneForm(grid(N), vals)
    assert np.array_equal(form_geodesic(alpha, zeta, 0.0).values, vals)
    beta = form_geodesic(alpha, zeta, 0.7)
    for i in range(N):
        a, _ = eval_geodesic(solve_ivp(vals[i], zeta[i]), 0.7, frame=False)
        assert np.array_equal(beta.values[i], a)
    single = DiscreteOneForm(np.array([0.5]), vals[:1])
    a, _ = eval_geodesic(solve_ivp(vals[0], zeta[0]), 0.7, frame=False)
    assert np.array_equal(form_geodesic(single, zeta[:1], 0.7).values[0], a)


def test_distance_identical(rng):
    alpha = DiscreteOneForm(grid(5), smooth_form(grid(5), 3, 2))
    b = distance_bounds(alpha, alpha)
    assert b.lower == 0.0 and not b.partial and b.upper > 0


def test_distance_scalings_bracket_path_length():
    N, m = 5, 2
    vals = smooth_form(grid(N), 3, m)
    alpha = DiscreteOneForm(grid(N), vals)
    beta = DiscreteOneForm(grid(N), 0.4 * vals)
    b = distance_bounds(alpha, beta)
    # node-wise the geodesic from a to 0.4 a is the scaling path a(t) = (1 + c m t / 2)^(2/m) a
    lengths = []
    for v in vals:
        c = 2 * (0.4 ** (m / 2) - 1) / m
        path = sample_geodesic(solve_ivp(v, c * v), np.linspace(0, 1, 401))
        lengths.append(path_length(path))
    explicit = math.sqrt(np.sum(alpha.weights * np.square(lengths)))
    assert b.volume_lower <= explicit * (1 + 1e-9)
    assert b.lower == pytest.approx(explicit, rel=1e-6)
    assert b.lower <= b.upper


def test_distance_random_pairs(rng):
    N = 3
    for _ in range(10):
        alpha = DiscreteOneForm(grid(N), np.array([random_frame(rng, 3, 2) for _ in range(N)]))
        beta = DiscreteOneForm(grid(N), alpha.values + 0.3 * rng.standard_normal((N, 3, 2)))
        b = distance_bounds(alpha, beta)
        if not b.partial:
            assert b.volume_lower <= b.lower * (1 + 1e-9) + 1e-12
            assert b.lower <= b.upper


def test_distance_partial_flag(rng):
    alpha = DiscreteOneForm(grid(3), smooth_form(grid(3), 3, 2))
    beta = DiscreteOneForm(grid(3), alpha.values + rng.standard_normal((3, 3, 2)))
    b = distance_bounds(alpha, beta, max_iter=0)
    assert b.partial and np.all(np.isnan(b.node_lengths)) and b.lower == 0.0


def test_reparametrize_identity_and_errors():
    nodes = grid(11)
    alpha = DiscreteOneForm(nodes, smooth_form(nodes))
    same = reparametrize(alpha, nodes, np.ones_like(nodes))
    assert np.allclose(same.values, alpha.values, atol=1e-15)
    with pytest.raises(NotMonotone):
        reparametrize(alpha, nodes[::-1], np.ones_like(nodes))
    with pytest.raises(NotMonotone):
        reparametrize(alpha, 0.5 * nodes, 0.5 * np.ones_like(nodes))


def phi(x):
    return 0.5 * (x + x * x), 0.5 + x


def psi(x):
    return np.sin(0.5 * np.pi * x), 0.5 * np.pi * np.cos(0.5 * np.pi * x)


def test_form_metric_reparametrization_invariance():
    errs = []
    for N in (41, 81, 161, 321):
        nodes = grid(N)
        vals = smooth_form(nodes, 3, 1)
        zeta, eta = smooth_form(nodes, 3, 1, 0.3), smooth_form(nodes, 3, 1, 1.1)
        alpha = DiscreteOneForm(nodes, vals)
        p, dp = phi(nodes)
        pulled, z2 = reparametrize(alpha, p, dp, zeta)
        _, e2 = reparametrize(alpha, p, dp, eta)
        errs.append(abs(form_metric(pulled, z2, e2) - form_metric(alpha, zeta, eta)))
    assert np.all(order(errs) >= 1.9)


def test_reparametrize_composition():
    nodes = grid(401)
    alpha = DiscreteOneForm(nodes, smooth_form(nodes))
    p, dp = phi(nodes)
    q, dq = psi(nodes)
    twice = reparametrize(reparametrize(alpha, p, dp), q, dq)
    pq, _ = phi(q)
    once = reparametrize(alpha, pq, dp_at(q) * dq)
    assert np.abs(twice.values - once.values).max() < 1e-4


def dp_at(x):
    return phi(x)[1]


def circle(nodes, r=1.0):
    return np.c_[r * np.cos(nodes), r * np.sin(nodes)]


def test_curve_to_form_examples():
    nodes = grid(11)
    line = DiscreteCurve(nodes, np.c_[nodes, 0 * nodes])
    alpha = curve_to_form(line)
    assert alpha.shape == (2, 1)
    assert np.allclose(alpha.values[:, :, 0], [[1.0, 0.0]] * 11)
    moved = DiscreteCurve(nodes, line.points + [3.0, -1.0])
    assert np.allclose(curve_to_form(moved).values, alpha.values, rtol=0, atol=1e-13)
    back = form_to_curve(alpha, basepoint=[3.0, -1.0])
    assert np.allclose(back.points, moved.points)


def test_round_trip_order():
    errs = []
    for N in (21, 41, 81, 161):
        c = DiscreteCurve(grid(N), circle(grid(N)))
        back = form_to_curve(curve_to_form(c), basepoint=c.points[0])
        errs.append(np.abs(back.points - c.points).max())
    assert np.all(order(errs) >= 1.9)


def test_not_immersed():
    nodes = grid(5)
    with pytest.raises(NotImmersed) as info:
        DiscreteCurve(nodes, np.array([[0, 0], [1, 0], [1, 0], [2, 0], [3, 0]], dtype=float))
    assert info.value.node == 1
    # distinct points whose central-difference derivative vanishes at node 2
    pts = np.array([[0, 0], [1, 0], [1.5, 0], [1, 0], [0, 0]], dtype=float)
    with pytest.raises(NotImmersed) as info:
        curve_to_form(DiscreteCurve(nodes, pts))
    assert info.value.node == 2


def test_curve_metric_examples():
    nodes = grid(21)
    line = DiscreteCurve(nodes, np.c_[nodes, 0 * nodes])
    const = np.tile([2.0, -1.0], (21, 1))
    assert abs(curve_metric(line, const, const)) < 1e-28
    h = np.c_[nodes, 0 * nodes]
    assert curve_metric(line, h, h) == pytest.approx(1.0, abs=1e-14)


def test_curve_metric_matches_form_metric(rng):
    nodes = grid(31)
    c = DiscreteCurve(nodes, circle(nodes) + 0.1 * np.c_[nodes ** 2, nodes])
    h, k = np.c_[np.sin(3 * nodes), nodes ** 2], np.c_[np.cos(nodes), np.exp(nodes)]
    alpha = curve_to_form(c)
    dh = np.gradient(h, nodes, axis=0, edge_order=2)[:, :, None]
    dk = np.gradient(k, nodes, axis=0, edge_order=2)[:, :, None]
    assert curve_metric(c, h, k) == pytest.approx(form_metric(alpha, dh, dk), abs=1e-12)


def test_curve_metric_reparametrization_invariance():
    def sample(N):
        nodes = grid(N)
        return nodes, circle(2 * nodes) + np.c_[nodes, 0 * nodes], np.c_[np.sin(3 * nodes), nodes ** 3]

    errs = []
    for N in (41, 81, 161, 321):
        nodes, pts, h = sample(N)
        c = DiscreteCurve(nodes, pts)
        ref = curve_metric(c, h, h)
        p, _ = phi(nodes)
        # sample the reparametrized curve and field exactly, not by interpolation
        q = p
        c2 = DiscreteCurve(nodes, circle(2 * q) + np.c_[q, 0 * q])
        h2 = np.c_[np.sin(3 * q), q ** 3]
        errs.append(abs(curve_metric(c2, h2, h2) - ref))
        c3, h3 = reparametrize_curve(c, p, h)
        assert abs(curve_metric(c3, h3, h3) - ref) < 50.0 / N ** 2
    assert np.all(order(errs) >= 1.9)


def test_curve_geodesic_scaling_example():
    nodes = grid(41)
    c0 = DiscreteCurve(nodes, np.c_[nodes, 0 * nodes])
    h = np.c_[-nodes, 0 * nodes]
    sol = solve_curve_geodesic(c0, h)
    assert np.allclose(sol.tau0, -1.0) and np.allclose(sol.delta0, 1.0)
    assert np.all(sol.omega0 == 0) and sol.blowup == pytest.approx(2.0)
    for t in np.linspace(0, 1.99, 12):
        c = curve_geodesic(c0, h, t)
        assert np.abs(c.points - (1 - t / 2) ** 2 * c0.points).max() < 1e-10
    with pytest.raises(BeyondBlowup):
        curve_geodesic(c0, h, 2.0)


def test_curve_geodesic_zero_field():
    nodes = grid(21)
    c0 = DiscreteCurve(nodes, circle(nodes))
    for t in (0.0, 0.5, 3.0):
        assert np.abs(curve_geodesic(c0, np.zeros((21, 2)), t).points - c0.points).max() < 1e-14


def test_curve_geodesic_pipelines_converge():
    """Closed-form curve geodesic on samples vs node-wise form geodesic on exact derivatives."""
    def curve(x):
        return np.c_[np.cos(2 * x) + x, np.sin(2 * x), 0.5 * x ** 2]

    def dcurve(x):
        return np.c_[-2 * np.sin(2 * x) + 1, 2 * np.cos(2 * x), x]

    def field(x):
        return np.c_[0.3 * np.sin(3 * x), x ** 2, -0.5 * np.cos(x)]

    def dfield(x):
        return np.c_[0.9 * np.cos(3 * x), 2 * x, 0.5 * np.sin(x)]

    t = 0.8
    errs = []
    for N in (41, 81, 161, 321):
        nodes = grid(N)
        c0 = DiscreteCurve(nodes, curve(nodes))
        a = curve_geodesic(c0, field(nodes), t, basepoint=np.zeros(3))
        alpha = DiscreteOneForm(nodes, dcurve(nodes)[:, :, None])
        b = form_to_curve(form_geodesic(alpha, dfield(nodes)[:, :, None], t))
        errs.append(np.abs(a.points - b.points).max())
    assert errs[-1] < 1e-3
    assert np.all(order(errs) >= 1.9)


def test_curve_geodesic_constant_speed():
    nodes = grid(51)
    c0 = DiscreteCurve(nodes, circle(nodes) + np.c_[nodes, 0 * nodes])
    h = np.c_[np.sin(2 * nodes), nodes ** 2]
    sol = solve_curve_geodesic(c0, h)
    w = trapezoid_weights(nodes)
    speeds = []
    for t in np.linspace(0.1, 1.5, 8):
        d = curve_geodesic_derivative(sol, t)
        eps = 1e-5
        dt = (curve_geodesic_derivative(sol, t + eps) - curve_geodesic_derivative(sol, t - eps)) / (2 * eps)
        speeds.append(np.sum(w * np.sum(dt * dt, axis=1) / np.linalg.norm(d, axis=1)))
    assert np.ptp(np.sqrt(speeds)) < 1e-6


@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_form_sectional_m1_nonnegative(seed, n):
    rng = np.random.default_rng(seed)
    N = 6
    alpha = DiscreteOneForm(grid(N), np.array([random_frame(rng, n, 1) for _ in range(N)]))
    zeta, eta = rng.standard_normal((2, N, n, 1))
    k = form_sectional(alpha, zeta, eta)
    assert k >= -1e-8
    if n == 2:
        assert abs(k) < 1e-8
