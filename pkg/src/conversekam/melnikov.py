"""Pendulum actions near the separatrix and the Melnikov function of the
coupling (1 - cos q1) cos q2.

The pendulum Lagrangian is A = q'^2/2 + sigma (1 - cos q) with energy
E = q'^2/2 - sigma (1 - cos q); the separatrix is the level E = 0.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

QUAD_TOL = 1e-12
WINDOW_MULT = 40.0


class QuadratureFailure(ArithmeticError):
    pass


class OutOfBracket(ValueError):
    pass


@dataclass(frozen=True)
class PendulumParams:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class MelnikovParams:
    delta: float
    omega2: float
    q2_t1: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")


def separatrix(p: PendulumParams, t):
    """q(t) = 4 arctan(exp(sqrt(sigma) t)), q'(t) = 2 sqrt(sigma) / cosh(sqrt(sigma) t)."""
    s = math.sqrt(p.sigma)
    t = np.asarray(t, dtype=float)
    u = np.clip(s * t, -700.0, 700.0)
    q = 4.0 * np.arctan(np.exp(u))
    qdot = 2.0 * s / np.cosh(u)
    return (float(q), float(qdot)) if q.ndim == 0 else (q, qdot)


def pendulum_energy(p: PendulumParams, q, qdot):
    return 0.5 * np.asarray(qdot) ** 2 - p.sigma * (1.0 - np.cos(q))


def _breakpoints(scale: float, hi: float) -> list:
    """Geometric breakpoints from scale up to hi, for integrands with a
    boundary layer of width ~scale near 0."""
    pts = []
    x = scale
    while x < hi:
        pts.append(x)
        x *= 8.0
    return pts


def _quad(f, a, b, points=(), what="integral", tol=QUAD_TOL):
    val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=1e-13, limit=500,
                              points=list(points) or None)
    if not np.isfinite(val) or err > max(tol, 1e-10 * abs(val)) * 10:
        raise QuadratureFailure(f"{what}: estimate {val!r} with error {err:.2e}")
    return val


def time_of_flight(p: PendulumParams, e: float) -> float:
    """Time for q to go from 0 to pi at energy e > 0:
    int_0^pi dq / sqrt(2 (e + sigma (1 - cos q)))."""
    if not e > 0:
        raise ValueError("energy must be positive")
    s = p.sigma
    # with u = q/2: 1 - cos q = 2 sin^2 u, and the integrand has a layer of width ~ sqrt(e/sigma)
    f = lambda u: 2.0 / math.sqrt(2.0 * e + 4.0 * s * math.sin(u) ** 2)
    pts = _breakpoints(math.sqrt(e / s), math.pi / 2)
    total = 0.0
    edges = [0.0] + pts + [math.pi / 2]
    for a, b in zip(edges[:-1], edges[1:]):
        total += _quad(f, a, b, what="time of flight", tol=QUAD_TOL / len(edges))
    return total


def energy_from_time(p: PendulumParams, T: float, rtol: float = 1e-12) -> float:
    """Inverse of time_of_flight by a root find in log e."""
    if not T > 0:
        raise OutOfBracket("T must be positive")
    g = lambda le: math.log(time_of_flight(p, math.exp(le))) - math.log(T)
    # time_of_flight < pi / sqrt(2 e), so e < pi^2 / (2 T^2) is an upper bracket
    hi = math.log(math.pi ** 2 / (2.0 * T * T)) + 1e-12
    lo = min(hi, math.log(p.sigma)) - 1.0
    while g(lo) < 0:
        lo -= 2.0 + abs(lo)
        if lo < -700:
            raise OutOfBracket(f"no energy above exp(-700) has time of flight {T}")
    if g(hi) > 0:
        raise OutOfBracket(f"time {T} is not reached below the free-motion energy")
    le = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=200)
    return math.exp(le)


def half_turn_action(p: PendulumParams, dt: float) -> float:
    """Action int A dt of the half turn of duration dt:
    int_0^pi sqrt(2 (e + V(q))) dq - e dt with e = e(dt)."""
    e = energy_from_time(p, dt)
    s = p.sigma
    f = lambda u: 2.0 * math.sqrt(2.0 * e + 4.0 * s * math.sin(u) ** 2)
    pts = _breakpoints(math.sqrt(e / s), math.pi / 2)
    return _quad(f, 0.0, math.pi / 2, pts, "half-turn action") - e * dt


def broken_action(p: PendulumParams, t0: float, t1: float, t2: float) -> float:
    """L(t1): half turn 0 -> pi on (t0, t1) then pi -> 2 pi on (t1, t2)."""
    if not t0 < t1 < t2:
        raise ValueError("need t0 < t1 < t2")
    return half_turn_action(p, t1 - t0) + half_turn_action(p, t2 - t1)


@dataclass
class IdentityCheck:
    t1: float
    fd_derivative: float
    predicted: float               # e(t2 - t1) - e(t1 - t0)
    scale: float                   # max(e(t1 - t0), e(t2 - t1))

    @property
    def rel_error(self) -> float:
        return abs(self.fd_derivative - self.predicted) / self.scale


def action_derivative_check(p: PendulumParams, t0: float, t1: float, t2: float,
                            step_frac: float = 1e-3, order: int = 4) -> IdentityCheck:
    """Centred difference of L at t1 against e(t2 - t1) - e(t1 - t0).

    ``order`` 2 is the three-point stencil, whose truncation error is about
    h^2 (4 sigma) / 6 relative to e; ``order`` 4 uses the five-point stencil
    with the same step.  The error is measured relative to the larger of the
    two energies, the natural scale of both sides (their difference vanishes
    at the symmetric placement).
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    h = step_frac * (t2 - t0)
    L = lambda s: broken_action(p, t0, t1 + s * h, t2)
    if order == 2:
        fd = (L(1) - L(-1)) / (2 * h)
    else:
        fd = (8 * (L(1) - L(-1)) - (L(2) - L(-2))) / (12 * h)
    e1 = energy_from_time(p, t1 - t0)
    e2 = energy_from_time(p, t2 - t1)
    return IdentityCheck(t1, fd, e2 - e1, max(abs(e1), abs(e2)))


@dataclass
class LinearFit:
    slope: float
    intercept: float
    max_residual: float
    y_range: float

    @property
    def relative_residual(self) -> float:
        return self.max_residual / self.y_range if self.y_range > 0 else 0.0


def linear_fit(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    (m, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - (m * x + b)
    return LinearFit(float(m), float(b), float(np.max(np.abs(r))), float(np.ptp(y)))


def energy_time_law(p: PendulumParams, s_range=(5.0, 20.0), n_points: int = 16):
    """Samples (sqrt(sigma) T, log(e / sigma)) over the range and their affine fit."""
    s = np.linspace(s_range[0], s_range[1], n_points)
    T = s / math.sqrt(p.sigma)
    le = np.array([math.log(energy_from_time(p, t) / p.sigma) for t in T])
    return s, le, linear_fit(s, le)


# ------------------------------------------------------------ Melnikov

def melnikov_closed_form(m: MelnikovParams) -> float:
    """2 pi w / sinh(pi w / (2 sqrt(delta))) cos(q2)."""
    w = m.omega2
    if w == 0:
        raise ValueError("omega2 must be nonzero")
    x = math.pi * w / (2.0 * math.sqrt(m.delta))
    if abs(x) > 700:
        return 0.0 * math.cos(m.q2_t1)
    return 2.0 * math.pi * w / math.sinh(x) * math.cos(m.q2_t1)


def melnikov_quadrature(m: MelnikovParams, window_mult: float = WINDOW_MULT) -> float:
    """delta * int (1 - cos qhat(s)) cos(omega2 s + q2) ds over |s| <= W / sqrt(delta).

    The weight is computed from the separatrix itself, 1 - cos q = 2 sin^2(q/2).
    """
    p = PendulumParams(m.delta)
    Tw = window_mult / math.sqrt(m.delta)

    def g(s):
        q, _ = separatrix(p, s)
        return m.delta * 2.0 * math.sin(0.5 * q) ** 2

    kw = dict(epsabs=1e-15, epsrel=1e-13, limit=400)
    # quad's roundoff warning fires near machine precision; the error estimate is checked below
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if m.omega2 == 0:
            c, err = integrate.quad(g, 0.0, Tw, **kw)
        else:
            c, err = integrate.quad(g, 0.0, Tw, weight="cos", wvar=m.omega2, **kw)
    if not np.isfinite(c) or err > 1e-9 * max(abs(c), 1e-6):
        raise QuadratureFailure(f"Melnikov integral: {c!r} with error {err:.2e}")
    c *= 2.0
    s = 0.0
    if m.omega2 != 0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            s, _ = integrate.quad(g, -Tw, Tw, weight="sin", wvar=m.omega2, **kw)
    return c * math.cos(m.q2_t1) - s * math.sin(m.q2_t1)


def melnikov_gap(delta: float, omega2: float) -> float:
    """M(q2 = 0) - M(q2 = pi) from the closed form."""
    return (melnikov_closed_form(MelnikovParams(delta, omega2, 0.0))
            - melnikov_closed_form(MelnikovParams(delta, omega2, math.pi)))


def fit_gap_exponent(omega2: float, deltas: Sequence[float]) -> LinearFit:
    """Fit -log(gap) = lambda / sqrt(delta) + b; the slope estimates lambda."""
    x = [1.0 / math.sqrt(d) for d in deltas]
    y = [-math.log(abs(melnikov_gap(d, omega2))) for d in deltas]
    return linear_fit(x, y)


# ---------------------------------------------------------- coupling

@dataclass
class CouplingDrift:
    max_drift: float               # max |q2'(t) - mean slope| over the window
    bound_scale: float             # mu sqrt(delta)
    mean_slope: float

    @property
    def constant(self) -> float:
        return self.max_drift / self.bound_scale if self.bound_scale > 0 else math.inf


def coupling_drift(m: MelnikovParams, window_mult: float = 10.0, ratio: float = 1.0,
                   rtol: float = 1e-10) -> CouplingDrift:
    """Integrate q1'' = delta sin q1 (1 + mu cos q2), q2'' = -ratio mu delta (1 - cos q1) sin q2
    from the separatrix point q1 = pi at t = 0, both directions in time, and
    measure how far q2' strays from its average slope.

    ``ratio`` is |k'|^2 / |k|^2 from the kinetic weights.
    """
    d, mu = m.delta, m.mu

    def rhs(t, z):
        q1, v1, q2, v2 = z
        return [v1, d * math.sin(q1) * (1 + mu * math.cos(q2)),
                v2, -ratio * mu * d * (1 - math.cos(q1)) * math.sin(q2)]

    z0 = [math.pi, 2 * math.sqrt(d), m.q2_t1, m.omega2]
    Tw = window_mult / math.sqrt(d)
    fw = integrate.solve_ivp(rhs, (0, Tw), z0, method="DOP853", rtol=rtol, atol=1e-13, dense_output=True)
    bw = integrate.solve_ivp(rhs, (0, -Tw), z0, method="DOP853", rtol=rtol, atol=1e-13, dense_output=True)
    if not (fw.success and bw.success):
        raise QuadratureFailure("coupling integration failed")
    t = np.concatenate([bw.t[::-1], fw.t[1:]])
    q2 = np.concatenate([bw.y[2][::-1], fw.y[2][1:]])
    v2 = np.concatenate([bw.y[3][::-1], fw.y[3][1:]])
    slope = (q2[-1] - q2[0]) / (t[-1] - t[0])
    return CouplingDrift(float(np.max(np.abs(v2 - slope))), mu * math.sqrt(d), float(slope))
