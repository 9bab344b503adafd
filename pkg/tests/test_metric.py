import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oneforms.errors import DegeneratePlane, NotUnimodularTangent, RankDeficient
from oneforms.linalg import random_orthogonal
from oneforms.metric import (Frame, make_product_point, metric, norm, orthonormalize_pair,
                             product_compose, product_decompose, product_metric,
                             product_split_tangent, product_tangent, to_square, traceless_split)

from conftest import random_frame

BLOCK = np.vstack([np.eye(2), np.zeros((1, 2))])
E32 = np.zeros((3, 2))
E32[2, 1] = 1.0


def direct_metric(a, u, v):
    g = a.T @ a
    return np.trace(u @ np.linalg.inv(g) @ v.T) * np.sqrt(np.linalg.det(g))


def test_metric_examples():
    assert metric(BLOCK, E32, E32) == pytest.approx(1.0, abs=1e-15)
    assert metric(2 * BLOCK, E32, E32) == pytest.approx(1.0, abs=1e-15)


def test_metric_rank_deficient():
    with pytest.raises(RankDeficient):
        metric(np.zeros((3, 2)), E32, E32)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_left_invariance(seed, m):
    rng = np.random.default_rng(seed)
    a, u, v = random_frame(rng, 3, m), rng.standard_normal((3, m)), rng.standard_normal((3, m))
    z = random_orthogonal(3, seed)
    ref = metric(a, u, v)
    assert abs(metric(z @ a, z @ u, z @ v) - ref) < 1e-12 * max(1.0, abs(ref))


@given(st.integers(0, 2**32 - 1))
def test_right_scaling(seed):
    rng = np.random.default_rng(seed)
    a, u, v = random_frame(rng, 4, 2), rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    c = random_frame(rng, 2, 2)
    ref = metric(a, u, v) * abs(np.linalg.det(c))
    assert abs(metric(a @ c, u @ c, v @ c) - ref) < 1e-10 * max(1.0, abs(ref))


def test_metric_matches_direct(rng):
    for n, m in [(2, 1), (3, 2), (5, 3), (4, 4)]:
        a, u, v = random_frame(rng, n, m), rng.standard_normal((n, m)), rng.standard_normal((n, m))
        assert metric(a, u, v) == pytest.approx(direct_metric(a, u, v), rel=1e-12)
        assert metric(a, u, v) == pytest.approx(metric(a, v, u), rel=1e-13)


def test_to_square(rng):
    a = random_frame(rng, 4, 2)
    U = to_square(a, a)
    assert np.allclose(U, U.T) and np.allclose(U @ U, U)
    assert np.trace(U) == pytest.approx(2.0)
    assert np.array_equal(to_square(a, np.zeros((4, 2))), np.zeros((4, 4)))
    u, v = rng.standard_normal((2, 4, 2))
    U, V = to_square(a, u), to_square(a, v)
    assert np.allclose(U @ a, u)
    assert np.trace(U @ V.T) * Frame(a).sqrt_det == pytest.approx(direct_metric(a, u, v), rel=1e-12)


def test_traceless_split(rng):
    a = random_frame(rng, 4, 3)
    u0, c = traceless_split(a, a)
    assert np.abs(u0).max() < 1e-12 and c == pytest.approx(1.0)
    u = rng.standard_normal((4, 3))
    u0, c = traceless_split(a, u)
    assert abs(metric(a, u0, a)) < 1e-12 * norm(a, u)
    assert np.allclose(u0 + c * a, u)
    u1, c1 = traceless_split(a, u0)
    assert np.allclose(u1, u0) and abs(c1) < 1e-13


def test_orthonormalize(rng):
    a = random_frame(rng, 4, 2)
    u, v = rng.standard_normal((2, 4, 2))
    e1, e2 = orthonormalize_pair(a, u, v)
    gram = [[metric(a, x, y) for y in (e1, e2)] for x in (e1, e2)]
    assert np.abs(np.array(gram) - np.eye(2)).max() < 1e-10
    f1, f2 = orthonormalize_pair(a, e1, e2)
    assert np.abs(f1 - e1).max() < 1e-12 and np.abs(f2 - e2).max() < 1e-12
    with pytest.raises(DegeneratePlane):
        orthonormalize_pair(a, u, 2 * u)


def test_product_decompose_examples(rng):
    p = product_decompose(BLOCK)
    assert p.rho == pytest.approx(1.0) and np.allclose(p.beta.mat, BLOCK)
    p = product_decompose(3 * BLOCK)
    assert p.rho == pytest.approx(9.0) and np.allclose(p.beta.mat, BLOCK)
    a = random_frame(rng, 5, 3)
    p = product_decompose(a)
    assert p.beta.sqrt_det == pytest.approx(1.0, abs=1e-12)
    assert np.abs(product_compose(p).mat - a).max() < 1e-12


def test_product_renormalizes():
    with pytest.warns(RuntimeWarning):
        p = make_product_point(2.0, 1.1 * BLOCK)
    assert p.renormalized and p.beta.sqrt_det == pytest.approx(1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not make_product_point(2.0, BLOCK).renormalized


def test_product_metric_values(rng):
    a = random_frame(rng, 4, 2)
    p = product_decompose(a)
    h = rng.standard_normal((4, 2))
    h = h - np.trace(h @ p.beta.pinv) / 2 * p.beta.mat
    nu = 0.7
    zero = np.zeros((4, 2))
    assert product_metric(p, (nu, zero), (nu, zero)) == pytest.approx(nu * nu / (2 * p.rho))
    assert product_metric(p, (nu, zero), (0.0, h)) == 0.0
    with pytest.raises(NotUnimodularTangent):
        product_metric(p, (0.0, p.beta.mat), (0.0, h))


def test_product_metric_pullback(rng):
    """The product metric equals the frame metric on pushed-forward tangents."""
    for n, m in [(3, 2), (5, 3), (4, 1)]:
        a = random_frame(rng, n, m)
        p = product_decompose(a)

        def tangent(nu, h, eps=1e-6):
            # differentiate product_compose along (nu, h) by central differences
            beta = p.beta.mat
            def point(s):
                b = beta + s * h
                b = b / np.sqrt(np.linalg.det(b.T @ b)) ** (1 / m)
                return (p.rho + s * nu) ** (1 / m) * b
            return (point(eps) - point(-eps)) / (2 * eps)

        hs = []
        for _ in range(2):
            h = rng.standard_normal((n, m))
            hs.append(h - np.trace(h @ p.beta.pinv) / m * p.beta.mat)
        x, y = (0.3, hs[0]), (-1.2, hs[1])
        ux, uy = product_tangent(p, *x), product_tangent(p, *y)
        assert np.allclose(ux, tangent(*x), atol=1e-7)
        assert product_metric(p, x, y) == pytest.approx(metric(a, ux, uy), rel=1e-10, abs=1e-12)
        _, nu, h = product_split_tangent(a, ux)
        assert nu == pytest.approx(0.3) and np.allclose(h, hs[0])
