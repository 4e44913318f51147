import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from conversekam.trigapprox import (GridTooCoarse, TrigPolyND, fejer, fejer_by_quadrature,
                                    fejer_weights, jackson_report, periodic_bspline,
                                    periodic_bspline_sup, random_trig_poly, sup_abs,
                                    vallee_poussin, vallee_poussin_nd, vallee_poussin_weights)


def _dense_sup(p, n=2048):
    return float(np.max(np.abs(p.on_grid([n] * p.d))))


def _fejer_kernel_mean(f, m, x):
    # (1 / 2 pi) int f(x - t) K_m(t) dt with K_m(t) = (1/m) (sin(m t/2) / sin(t/2))^2
    def K(t):
        s = math.sin(t / 2)
        return m if abs(s) < 1e-12 else math.sin(m * t / 2) ** 2 / (m * s * s)
    val, _ = quad(lambda t: f(x - t) * K(t), -math.pi, math.pi, limit=400,
                  epsabs=1e-14, epsrel=1e-13, points=[0.0])
    return val / (2 * math.pi)


# ---------------------------------------------------------------- fejer

def test_fejer_constant():
    p = fejer(lambda x: np.full_like(x, 2.5), 7)
    assert np.max(np.abs(p.on_grid([64]) - 2.5)) < 1e-14


@pytest.mark.parametrize("k,m", [(1, 4), (3, 8), (5, 6), (7, 32)])
def test_fejer_cosine(k, m):
    p = fejer(lambda x: np.cos(k * x), m)
    x = np.linspace(0, 2 * np.pi, 101)
    assert np.max(np.abs(p(x) - (1 - k / m) * np.cos(k * x))) < 1e-12
    for x0 in (0.0, 0.7, 2.9):
        direct = _fejer_kernel_mean(lambda t: math.cos(k * t), m, x0)
        assert direct == pytest.approx((1 - k / m) * math.cos(k * x0), abs=1e-10)


@pytest.mark.parametrize("m", [1, 4, 16, 32])
def test_fejer_kernel_equivalence(m):
    f = lambda x: np.exp(np.sin(x)) + 0.3 * np.cos(3 * x)
    p = fejer(f, m, shape=[1024])
    for x0 in (0.1, 1.3, 4.0):
        assert p(np.array([x0]))[0] == pytest.approx(fejer_by_quadrature(f, m, x0), abs=1e-9)
        assert fejer_by_quadrature(f, m, x0) == pytest.approx(_fejer_kernel_mean(f, m, x0),
                                                               abs=1e-10)


def test_fejer_degree_and_weights():
    rng = np.random.default_rng(1)
    f = random_trig_poly(rng, [20])
    assert fejer(f, 9).degrees()[0] <= 8
    k = np.arange(-12, 13)
    assert np.allclose(fejer_weights(6)(k), np.maximum(0, 1 - np.abs(k) / 6))


def test_fejer_contraction_random():
    rng = np.random.default_rng(2)
    for _ in range(50):
        f = random_trig_poly(rng, [int(rng.integers(1, 40))])
        m = int(rng.integers(1, 33))
        assert sup_abs(fejer(f, m))[0] <= sup_abs(f)[0] + 1e-10


def test_fejer_positive():
    f = lambda x: np.abs(np.sin(3 * x)) ** 1.5 + (x > 2.0)
    for m in (3, 10, 31):
        vals = fejer(f, m, shape=[4096]).on_grid([10000])
        assert np.min(vals) >= -1e-10


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        fejer(np.cos(np.arange(32) * 2 * np.pi / 32), 8)
    with pytest.raises(GridTooCoarse):
        vallee_poussin_nd(lambda x, y: np.cos(x + y), [4, 8], shape=[64, 32])


def test_bad_orders():
    with pytest.raises(ValueError):
        fejer(lambda x: x, 0)
    with pytest.raises(ValueError):
        vallee_poussin_nd(lambda x: x, [0])


# ------------------------------------------------------- vallee poussin

def test_vp_weights_identity_band():
    for m in (1, 3, 8):
        k = np.arange(-3 * m, 3 * m + 1)
        w = vallee_poussin_weights(m)(k)
        assert np.all(w[np.abs(k) <= m] == 1.0)
        assert np.all(w[np.abs(k) >= 2 * m] == 0.0)
        mid = (np.abs(k) > m) & (np.abs(k) < 2 * m)
        assert np.allclose(w[mid], 2 - np.abs(k[mid]) / m)


@given(degs=st.lists(st.integers(0, 10), min_size=1, max_size=3), extra=st.integers(0, 4),
       seed=st.integers(0, 2 ** 32 - 1))
def test_vp_reproduces(degs, extra, seed):
    f = random_trig_poly(np.random.default_rng(seed), degs)
    m = [max(1, D) + extra for D in degs]
    P = vallee_poussin_nd(f, m)
    shape = [max(8, 2 * D + 2) for D in degs]
    assert np.max(np.abs(P.on_grid(shape) - f.on_grid(shape))) < 1e-12
    assert all(d <= 2 * mj - 1 for d, mj in zip(P.degrees(), m))


def test_vp_degree_bound():
    f = random_trig_poly(np.random.default_rng(3), [30, 25])
    P = vallee_poussin_nd(f, [4, 7])
    d1, d2 = P.degrees(tol=1e-15)
    assert d1 <= 7 and d2 <= 13
    assert P.is_real()


def test_vp_linearity():
    rng = np.random.default_rng(4)
    for _ in range(10):
        f, g = random_trig_poly(rng, [12, 9]), random_trig_poly(rng, [12, 9])
        a, b = rng.standard_normal(2)
        lhs = vallee_poussin_nd(f * a + g * b, [5, 3])
        rhs = vallee_poussin_nd(f, [5, 3]) * a + vallee_poussin_nd(g, [5, 3]) * b
        assert np.max(np.abs((lhs - rhs).on_grid([64, 64]))) < 1e-12


def test_vp_axis_commutation():
    f = random_trig_poly(np.random.default_rng(5), [15, 15])
    a = vallee_poussin(vallee_poussin(f, 4, 0), 6, 1)
    b = vallee_poussin(vallee_poussin(f, 6, 1), 4, 0)
    assert np.max(np.abs((a - b).on_grid([64, 64]))) < 1e-12


def test_vp_bounded_random():
    rng = np.random.default_rng(6)
    for d in (1, 2):
        for _ in range(50):
            D = [int(rng.integers(1, 20)) for _ in range(d)]
            f = random_trig_poly(rng, D)
            m = [int(rng.integers(1, 33)) for _ in range(d)]
            assert _dense_sup(vallee_poussin_nd(f, m), 256) <= 3 * _dense_sup(f, 256) + 1e-10


def test_vp_bounded_sampled():
    # a step function: the interpolant of the samples is the operator input
    f = lambda x: np.sign(np.sin(x))
    for m in (2, 8, 32):
        P = vallee_poussin(f, m, shape=[1024])
        assert _dense_sup(P, 4096) <= 3 + 1e-10


# ---------------------------------------------------------------- jackson

def test_jackson_trig_poly_reproduced():
    f = random_trig_poly(np.random.default_rng(7), [6, 4])
    rep = jackson_report(f, [6, 4], [2, 2])
    assert rep.achieved_error < 1e-12


def test_jackson_expcos_superalgebraic():
    # errors reach round-off near m = 16, so the decay is resolved at small m
    ms = [1, 2, 3, 4, 5, 6, 8, 10]
    errs = [jackson_report(lambda x: np.exp(np.cos(x)), [m], [4]).achieved_error for m in ms]
    slopes = np.diff(np.log(errs)) / np.diff(np.log(ms))
    assert np.all(slopes < 0)
    assert np.all(np.diff(slopes) < 0)
    assert slopes[-1] < -20
    assert jackson_report(lambda x: np.exp(np.cos(x)), [16], [4]).achieved_error < 1e-14


def test_jackson_tensor_bound():
    f = lambda x, y: np.exp(np.cos(x)) * np.exp(np.cos(y))
    reps = [jackson_report(f, [m, m2], [4, 4], shape=[128, 128])
            for m, m2 in [(2, 2), (3, 2), (2, 4), (4, 4), (6, 5)]]
    C2 = reps[0].C_d
    for rep in reps:
        assert rep.achieved_error <= C2 * sum(rep.bound_terms) * (1 + 1e-12)
        assert rep.bound == pytest.approx(rep.achieved_error, rel=1e-12)


# ---------------------------------------------------------- spline test f

def test_bspline_derivatives():
    x = np.linspace(-3, 3, 301) + 0.003     # away from the knots
    h = 1e-5
    for j in range(4):
        fd = (periodic_bspline(x + h, deriv=j) - periodic_bspline(x - h, deriv=j)) / (2 * h)
        assert np.max(np.abs(fd - periodic_bspline(x, deriv=j + 1))) < 1e-6
    assert np.max(np.abs(periodic_bspline(x + 2 * np.pi) - periodic_bspline(x))) < 1e-14


def test_bspline_is_c4_not_c5():
    knot = np.pi / 2
    e = 1e-9
    d4 = [periodic_bspline(np.array([knot + s]), deriv=4)[0] for s in (-e, e)]
    d5 = [periodic_bspline(np.array([knot + s]), deriv=5)[0] for s in (-e, e)]
    assert abs(d4[0] - d4[1]) < 1e-6
    assert abs(d5[0] - d5[1]) > 1e-3


def test_bspline_sups():
    x = np.linspace(-np.pi, np.pi, 200001)
    for j in range(6):
        dense = np.max(np.abs(periodic_bspline(x, deriv=j)))
        assert periodic_bspline_sup(j) == pytest.approx(dense, rel=1e-4)


def test_bspline_jackson_slope():
    ms = [8, 16, 32, 64, 128]
    s4 = periodic_bspline_sup(4)
    errs = [jackson_report(periodic_bspline, [m], [4], shape=[8192],
                           deriv_norms=[s4]).achieved_error for m in ms]
    slope = np.polyfit(np.log(ms), np.log(errs), 1)[0]
    assert slope <= -3.8
