import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conversekam.aubry import minimal_periodic_orbit
from conversekam.herman import toy_potential
from conversekam.perturb import (AnalyticPerturbParams, SmoothBumpParams, make_analytic_v,
                                 make_bump_v, make_family, make_u)
from conversekam.rotation import rescale_problem
from conversekam.twistmap import (CosinePotential, GeneratingFunction, OrbitEscaped, PhasePoint,
                                  TrigPotential, ZeroPotential, map_step, momenta, orbit,
                                  orbit_rotation_number, stationarity_residual,
                                  stationarity_residuals)

GOLDEN = (math.sqrt(5) - 1) / 2

POTENTIALS = {
    "cosine": make_u(2, 1.0),
    "bump": make_bump_v(SmoothBumpParams(4, 1.0, 2)),
    "sum": make_family(4, 1.0, 2),
    "trig": TrigPotential.from_cos_sin([0.1, -0.05, 0.02], [0.03, 0.0, 0.01]),
    "rescaled": rescale_problem(make_u(1, 1.0), 3),
    "toy": toy_potential(2),
    "analytic": make_u(2, 1.0) + make_analytic_v(AnalyticPerturbParams(2, 1.0, 4, 0.3)).v,
}


# ------------------------------------------------------------ potentials

@pytest.mark.parametrize("name", sorted(POTENTIALS))
def test_potential_periodic(name):
    V = POTENTIALS[name]
    x = np.linspace(-2, 2, 1001)
    for j in range(5):
        a, b = V.deriv(x, j), V.deriv(x + V.period, j)
        assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


def _fd_error(V, j, h, x):
    fd = (V.deriv(x + h, j - 1) - V.deriv(x - h, j - 1)) / (2 * h)
    exact = V.deriv(x, j)
    scale = max(np.max(np.abs(exact)), np.max(np.abs(V.deriv(x, j - 1))) / V.period)
    return np.max(np.abs(fd - exact)) / scale


@pytest.mark.parametrize("name", sorted(POTENTIALS))
def test_derivatives_match_finite_differences(name):
    V = POTENTIALS[name]
    x = V.period * np.linspace(0, 1, 397, endpoint=False) + 1e-3
    # compact bumps have a huge fifth derivative near the support edge, so
    # the O(h^2) truncation of the order-4 check exceeds 1e-6 there
    top = 3 if name in ("bump", "sum") else 4
    for j in range(1, top + 1):
        assert _fd_error(V, j, 1e-5, x) <= 1e-6, j


@pytest.mark.parametrize("name", ["bump", "sum"])
def test_fourth_derivative_of_bump_converges(name):
    V = POTENTIALS[name]
    x = V.period * np.linspace(0, 1, 397, endpoint=False) + 1e-3
    e1, e2 = _fd_error(V, 4, 1e-5, x), _fd_error(V, 4, 1e-6, x)
    assert e2 < 1e-7
    assert e1 / e2 == pytest.approx(100, rel=0.05)


def test_derivative_order_cap():
    with pytest.raises(ValueError):
        make_u(1, 1.0).deriv(0.1, 5)


def test_sum_rejects_mixed_periods():
    with pytest.raises(ValueError):
        make_u(1, 1.0) + CosinePotential(1.0, period=2.0)


def test_trig_potential_rejects_complex():
    with pytest.raises(ValueError):
        TrigPotential([1j, 0, 1j])


def test_trig_potential_log_scale():
    T = TrigPotential.from_cos_sin([1.0], log_scale=-3.0)
    assert T(0.0) == pytest.approx(math.exp(-3.0), rel=1e-14)
    assert np.allclose(T.samples(64), T(np.arange(64) / 64), atol=1e-15)


# ----------------------------------------------------- generating function

@given(st.floats(-5, 5), st.floats(-5, 5))
def test_generating_function_invariants(x, xp):
    h = GeneratingFunction(POTENTIALS["sum"])
    assert float(h.d12(x, xp)) == -1.0
    assert float(h(x + 1, xp + 1)) == pytest.approx(float(h(x, xp)), abs=1e-12)
    eps = 1e-6
    d1 = (h(x + eps, xp) - h(x - eps, xp)) / (2 * eps)
    d2 = (h(x, xp + eps) - h(x, xp - eps)) / (2 * eps)
    assert float(h.d1(x, xp)) == pytest.approx(float(d1), abs=1e-6)
    assert float(h.d2(x, xp)) == pytest.approx(float(d2), abs=1e-6)


# ------------------------------------------------------------- map_step

def test_map_step_shear():
    p = map_step(GeneratingFunction(ZeroPotential()), PhasePoint(0.3, 0.5))
    assert p.x == pytest.approx(0.8, abs=1e-15)
    assert p.y == 0.5


def test_map_step_toy():
    p = map_step(GeneratingFunction(toy_potential(1)), PhasePoint(0.0, 0.0))
    assert p.x == 0.0
    assert p.y == pytest.approx(-1.25, abs=1e-15)


def test_map_step_cosine():
    # u_2'(x) = (2 pi / 2) sin(2 pi x) = pi at x = 1/4
    p = map_step(GeneratingFunction(make_u(2, 1.0)), PhasePoint(0.0, 0.25))
    assert p.x == 0.25
    assert p.y == pytest.approx(0.25 + math.pi, abs=1e-14)


def test_map_step_generating_equations():
    h = GeneratingFunction(POTENTIALS["sum"])
    p = PhasePoint(0.37, 0.21)
    q = map_step(h, p)
    assert p.y == pytest.approx(-float(h.d1(p.x, q.x)), abs=1e-15)
    assert q.y == pytest.approx(float(h.d2(p.x, q.x)), abs=1e-15)


def _jacobian_det(h, x, y, eps=1e-6):
    def f(a, b):
        q = map_step(h, PhasePoint(a, b))
        return np.array([q.x, q.y])
    J = np.column_stack([(f(x + eps, y) - f(x - eps, y)) / (2 * eps),
                         (f(x, y + eps) - f(x, y - eps)) / (2 * eps)])
    return np.linalg.det(J)


def test_area_preservation_random_points():
    rng = np.random.default_rng(1)
    h = GeneratingFunction(POTENTIALS["sum"])
    for x, y in rng.uniform(-1, 1, size=(100, 2)):
        assert abs(_jacobian_det(h, x, y) - 1) < 1e-8


@given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(sorted(POTENTIALS)))
def test_area_preservation_property(x, y, name):
    h = GeneratingFunction(POTENTIALS[name])
    # finite-difference error scales with V''' ; keep the step moderate
    assert abs(_jacobian_det(h, x, y, eps=1e-5) - 1) < 1e-6


@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(-5, 5))
def test_lift_equivariance(x, y, k):
    h = GeneratingFunction(POTENTIALS["cosine"])
    a = map_step(h, PhasePoint(x + k, y))
    b = map_step(h, PhasePoint(x, y))
    assert a.x == pytest.approx(b.x + k, abs=1e-12)
    assert a.y == pytest.approx(b.y, abs=1e-9)


# ------------------------------------------------------- rotation number

@given(st.floats(-2, 2), st.integers(1, 500))
def test_rotation_number_shear(w, N):
    h = GeneratingFunction(ZeroPotential())
    assert orbit_rotation_number(h, PhasePoint(0.0, w), N) == pytest.approx(w, abs=1e-12)


def test_rotation_number_golden_shear():
    r = orbit_rotation_number(GeneratingFunction(ZeroPotential()), PhasePoint(0.0, GOLDEN), 10 ** 4)
    assert abs(r - GOLDEN) < 1e-12


def test_rotation_number_cauchy_on_regular_orbit():
    # small-amplitude cosine well: the orbit lies on an invariant circle
    h = GeneratingFunction(make_u(64, 1.0))
    N = 10 ** 5
    a = orbit_rotation_number(h, PhasePoint(0.0, 0.3), N)
    b = orbit_rotation_number(h, PhasePoint(0.0, 0.3), 2 * N)
    assert abs(a - b) < 2 / N


def test_rotation_number_chaotic_orbit_diffuses():
    # u_3 with a = 1 is deep in the chaotic regime: the estimator drifts
    h = GeneratingFunction(make_u(3, 1.0))
    N = 10 ** 5
    a = orbit_rotation_number(h, PhasePoint(0.0, 0.3), N)
    b = orbit_rotation_number(h, PhasePoint(0.0, 0.3), 2 * N)
    assert abs(a - b) > 2 / N


def test_rotation_number_needs_positive_N():
    with pytest.raises(ValueError):
        orbit_rotation_number(GeneratingFunction(), PhasePoint(0, 0), 0)


def test_orbit_escape():
    with pytest.raises(OrbitEscaped):
        orbit(GeneratingFunction(), PhasePoint(0.0, 1e11), 100)


# ------------------------------------------------------------ stationarity

def test_stationarity_zero_for_progression():
    h = GeneratingFunction(ZeroPotential())
    x = 0.375 * np.arange(20)   # dyadic step: the progression is exact
    assert stationarity_residual(h, x) == 0.0


def test_stationarity_is_force_for_progression():
    V = make_u(2, 1.0)
    x = 0.3 * np.arange(12)
    r = stationarity_residual(GeneratingFunction(V), x)
    assert r == pytest.approx(np.max(np.abs(V.deriv(x[1:-1], 1))), rel=1e-12)
    assert r > 0


def test_stationarity_of_minimizer():
    h = GeneratingFunction(POTENTIALS["sum"])
    c = minimal_periodic_orbit(h, 2, 5)
    assert stationarity_residual(h, c) <= 1e-10
    assert stationarity_residuals(h, c).size == 5


def test_stationarity_needs_three_points():
    with pytest.raises(ValueError):
        stationarity_residual(GeneratingFunction(), [0.0, 1.0])


@pytest.mark.parametrize("pq", [(1, 2), (1, 3), (2, 5), (3, 7)])
def test_exactness_surrogate(pq):
    h = GeneratingFunction(POTENTIALS["sum"])
    c = minimal_periodic_orbit(h, *pq)
    y = momenta(c, h.period)
    assert abs(np.sum(np.diff(y))) < 1e-10
    assert abs(np.sum(h.V.deriv(c.values, 1))) < 1e-10
