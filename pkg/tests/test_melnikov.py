import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ellipk

from conversekam.melnikov import (MelnikovParams, OutOfBracket, PendulumParams, broken_action,
                                  action_derivative_check, coupling_drift, energy_from_time,
                                  energy_time_law, fit_gap_exponent, linear_fit,
                                  melnikov_closed_form, melnikov_gap, melnikov_quadrature,
                                  pendulum_energy, separatrix, time_of_flight)

# slope of log(e / sigma) against sqrt(sigma) T over [5, 20], 16 points
ENERGY_TIME_SLOPE = -1.9999625686548022
TOF_SIGMA_001 = 16.56638170236594


def _tof_oracle(s, e):
    # int_0^pi dq / sqrt(2 (e + s (1 - cos q))) = sqrt(2/e) K(m = -2 s / e)
    return math.sqrt(2 / e) * ellipk(-2 * s / e)


# ------------------------------------------------------------ separatrix

@pytest.mark.parametrize("s", [0.01, 0.25, 1.0])
def test_separatrix_values(s):
    p = PendulumParams(s)
    q, qd = separatrix(p, 0.0)
    assert q == pytest.approx(math.pi, rel=1e-15)
    assert qd == pytest.approx(2 * math.sqrt(s), rel=1e-15)
    q, qd = separatrix(p, 50 / math.sqrt(s))
    assert abs(q - 2 * math.pi) < 1e-8 and abs(qd) < 1e-8


def test_separatrix_energy_zero():
    rng = np.random.default_rng(0)
    for s in (0.01, 0.3, 2.0):
        p = PendulumParams(s)
        t = rng.uniform(-20, 20, 100) / math.sqrt(s)
        q, qd = separatrix(p, t)
        assert np.max(np.abs(pendulum_energy(p, q, qd))) < 1e-10
        # qd is the time derivative of q
        h = 1e-6 / math.sqrt(s)
        fd = (separatrix(p, t + h)[0] - separatrix(p, t - h)[0]) / (2 * h)
        assert np.max(np.abs(fd - qd)) < 1e-7


def test_params_validate():
    with pytest.raises(ValueError):
        PendulumParams(0.0)
    with pytest.raises(ValueError):
        MelnikovParams(-1.0, 1.0)


# ------------------------------------------------------- time of flight

@pytest.mark.parametrize("s", [0.01, 0.1, 1.0])
@pytest.mark.parametrize("r", [1e-8, 1e-3, 1.0, 1e4])
def test_time_of_flight_oracle(s, r):
    assert time_of_flight(PendulumParams(s), r * s) == pytest.approx(_tof_oracle(s, r * s), rel=1e-12)


def test_time_of_flight_frozen():
    assert time_of_flight(PendulumParams(0.01), 0.01) == pytest.approx(TOF_SIGMA_001, rel=1e-12)


def test_time_of_flight_free_limit():
    s = 0.05
    e = 1e4 * s
    assert time_of_flight(PendulumParams(s), e) == pytest.approx(math.pi / math.sqrt(2 * e), rel=1e-2)


def test_time_of_flight_monotone():
    p = PendulumParams(0.1)
    for k in range(0, 9):
        e = 0.1 * 10.0 ** -k
        assert time_of_flight(p, e) > time_of_flight(p, 2 * e)


def test_time_of_flight_rejects():
    with pytest.raises(ValueError):
        time_of_flight(PendulumParams(0.1), 0.0)


@given(s=st.floats(1e-3, 2.0), lr=st.floats(math.log(1e-8), math.log(1e4)))
def test_energy_time_round_trip(s, lr):
    p = PendulumParams(s)
    e = s * math.exp(lr)
    assert energy_from_time(p, time_of_flight(p, e)) == pytest.approx(e, rel=1e-8)


def test_energy_from_time_bracket():
    p = PendulumParams(0.1)
    e = 0.01
    assert energy_from_time(p, time_of_flight(p, e)) == pytest.approx(e, rel=1e-8)
    T_free = math.pi / math.sqrt(2 * 1e6)
    big = energy_from_time(p, 1.0001 * T_free)
    assert math.isfinite(big) and big > 1e5
    with pytest.raises(OutOfBracket):
        energy_from_time(p, 0.0)
    # e(T) ~ 32 sigma exp(-2 sqrt(sigma) T) underflows for huge T
    with pytest.raises(OutOfBracket):
        energy_from_time(p, 1e4)


@pytest.mark.parametrize("s", [0.01, 0.1, 1.0])
def test_energy_time_law(s):
    x, y, fit = energy_time_law(PendulumParams(s))
    assert x[0] == 5.0 and x[-1] == 20.0
    assert fit.relative_residual < 0.01
    assert fit.slope == pytest.approx(ENERGY_TIME_SLOPE, rel=1e-8)
    # leading asymptotics: e = 32 sigma exp(-2 sqrt(sigma) T)
    assert fit.intercept == pytest.approx(math.log(32), abs=1e-3)


def test_energy_asymptotic_bound():
    for s in (0.01, 0.1):
        p = PendulumParams(s)
        vals = [energy_from_time(p, x / math.sqrt(s)) * math.exp(2 * x) / s for x in (3, 5, 10, 20)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert vals[-1] <= 32 * (1 + 1e-10)
        assert vals[-1] == pytest.approx(32, rel=1e-10)


def test_linear_fit_exact():
    f = linear_fit([0, 1, 2], [1, 3, 5])
    assert f.slope == pytest.approx(2) and f.intercept == pytest.approx(1)
    assert f.max_residual < 1e-14 and f.relative_residual < 1e-14


# -------------------------------------------------------- broken action

def test_broken_action_symmetric():
    s = 0.04
    p = PendulumParams(s)
    c = action_derivative_check(p, 0.0, 30.0, 60.0)
    assert abs(c.fd_derivative) < 1e-6 * c.scale
    assert c.predicted == 0.0


@pytest.mark.parametrize("s", [0.01, 0.1])
@pytest.mark.parametrize("frac", [0.7, 0.85, 1.3])
def test_action_derivative_identity(s, frac):
    D = 8 / math.sqrt(s)
    c = action_derivative_check(PendulumParams(s), 0.0, frac * D, 2 * D)
    assert c.rel_error < 1e-4
    assert abs(c.fd_derivative - c.predicted) / abs(c.predicted) < 1e-4


@pytest.mark.parametrize("W", [10, 16, 20])
def test_three_point_truncation(W):
    # three-point error is h^2 L''' / 6 with L''' / e = 4 sigma
    s = 0.1
    D = W / 2 / math.sqrt(s)
    c = action_derivative_check(PendulumParams(s), 0.0, 0.8 * D, 2 * D, order=2)
    predicted = (1e-3 * W) ** 2 * 4 / 6
    assert c.rel_error == pytest.approx(predicted, rel=0.05)


def test_broken_action_difference_bound():
    # |L(a) - L(b)| <= |a - b| max e <= |a - b| 32 sigma exp(-2 sqrt(sigma) tmin)
    for s in (0.01, 0.1):
        p = PendulumParams(s)
        D = 8 / math.sqrt(s)
        for a, b in [(0.8 * D, 0.9 * D), (0.9 * D, 1.2 * D), (0.6 * D, 1.3 * D)]:
            diff = abs(broken_action(p, 0, a, 2 * D) - broken_action(p, 0, b, 2 * D))
            tmin = min(a, 2 * D - b)
            assert diff <= abs(a - b) * 32 * s * math.exp(-2 * math.sqrt(s) * tmin)
            assert diff > 0


def test_broken_action_order():
    with pytest.raises(ValueError):
        broken_action(PendulumParams(0.1), 0.0, 2.0, 1.0)


# ------------------------------------------------------------- Melnikov

def test_closed_form_zero_phase():
    assert abs(melnikov_closed_form(MelnikovParams(0.3, 1.2, math.pi / 2))) < 1e-15


def test_closed_form_value():
    mpmath.mp.dps = 40
    want = 2 * mpmath.pi / mpmath.sinh(mpmath.pi / 2)
    assert melnikov_closed_form(MelnikovParams(1.0, 1.0, 0.0)) == pytest.approx(float(want), rel=1e-15)
    assert float(want) == pytest.approx(2.7302778013234312, rel=1e-15)


@given(d=st.floats(1e-3, 4.0), w=st.floats(0.05, 5.0), q=st.floats(0, 2 * math.pi))
def test_closed_form_even(d, w, q):
    a = melnikov_closed_form(MelnikovParams(d, w, q))
    b = melnikov_closed_form(MelnikovParams(d, -w, q))
    assert a == pytest.approx(b, rel=1e-14, abs=1e-300)


def test_closed_form_rejects_zero():
    with pytest.raises(ValueError):
        melnikov_closed_form(MelnikovParams(1.0, 0.0))


@pytest.mark.parametrize("d", [1.0, 0.25, 0.04, 0.01])
@pytest.mark.parametrize("w", [0.5, 1.0, 2.0, -1.0])
def test_quadrature_matches_closed_form(d, w):
    for q in (0.0, math.pi / 3, math.pi, 2.0):
        m = MelnikovParams(d, w, q)
        assert melnikov_quadrature(m) == pytest.approx(melnikov_closed_form(m), rel=1e-6)


def test_quadrature_against_mpmath():
    mpmath.mp.dps = 30
    d, w = mpmath.mpf("0.25"), mpmath.mpf(1)
    f = lambda s: d * 2 / mpmath.cosh(mpmath.sqrt(d) * s) ** 2 * mpmath.cos(w * s)
    want = mpmath.quad(f, [-mpmath.inf, 0, mpmath.inf])
    assert melnikov_quadrature(MelnikovParams(0.25, 1.0, 0.0)) == pytest.approx(float(want), rel=1e-10)


def test_quadrature_phase_flip():
    a = melnikov_quadrature(MelnikovParams(0.2, 0.7, 0.0))
    b = melnikov_quadrature(MelnikovParams(0.2, 0.7, math.pi))
    assert b == pytest.approx(-a, rel=1e-10)


@pytest.mark.parametrize("w", [0.5, 1.0, 2.0])
def test_gap_exponent(w):
    deltas = [0.01, 0.02, 0.04, 0.08]
    fit = fit_gap_exponent(w, deltas)
    # gap = 4 pi w / sinh(pi w / (2 sqrt(delta))) ~ 8 pi w exp(-pi w / (2 sqrt(delta)))
    assert fit.slope == pytest.approx(math.pi * w / 2, rel=1e-3)
    for d in deltas:
        assert melnikov_gap(d, w) >= math.exp(-fit.slope / math.sqrt(d))
        assert melnikov_gap(d, w) == pytest.approx(2 * abs(melnikov_closed_form(MelnikovParams(d, w))))


def test_coupling_drift_scales_with_mu():
    consts = [coupling_drift(MelnikovParams(0.04, 1.0, 0.3, mu)).constant for mu in (1e-2, 1e-3, 1e-4)]
    assert max(consts) < 1.0
    assert max(consts) / min(consts) < 1.05


def test_coupling_drift_uncoupled():
    r = coupling_drift(MelnikovParams(0.04, 1.0, 0.3, 0.0))
    assert r.max_drift < 1e-12
    assert r.mean_slope == pytest.approx(1.0, rel=1e-12)
