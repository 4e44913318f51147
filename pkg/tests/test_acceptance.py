"""Acceptance checks, one test per criterion.

Each test times itself against its budget.  A PASS/FAIL line per criterion
is printed in the terminal summary (see conftest.py).
"""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conversekam.aubry import (BarrierSolver, RotationSymbol, barrier_profile,
                               invariant_circle_test, minimal_periodic_orbit)
from conversekam.herman import (TorusField, make_T_smooth, poisson_solve, smooth_threshold,
                                toy_family, toy_potential)
from conversekam.melnikov import (MelnikovParams, PendulumParams, action_derivative_check,
                                  energy_time_law, melnikov_closed_form, melnikov_quadrature)
from conversekam.perturb import SmoothBumpParams, make_bump_v, make_family, norm_report
from conversekam.rotation import convergents, rescale_problem, transport_configuration
from conversekam.trigapprox import (TrigPolyND, fejer, jackson_report, periodic_bspline,
                                    periodic_bspline_sup, random_trig_poly, sup_abs,
                                    vallee_poussin_nd)
from conversekam.twistmap import (GeneratingFunction, PhasePoint, ZeroPotential, orbit,
                                  stationarity_residual)
from oracles import pinned_oracle

GOLDEN = (math.sqrt(5) - 1) / 2
ENERGY_TIME_SLOPE = -1.9999625686548022


@contextmanager
def budget(seconds):
    t0 = time.perf_counter()
    yield
    elapsed = time.perf_counter() - t0
    assert elapsed < seconds, f"runtime {elapsed:.2f}s exceeds {seconds}s"


def _slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def test_criterion_01_toy_herman():
    with budget(1.0):
        for n in (1, 4, 16):
            r = toy_family(n).report
            assert abs(r.min_T + 1.5) < 1e-9
            assert abs(r.max_T - 1.0) < 1e-9
            assert r.holds
            assert r.margin == pytest.approx(4 - (1.5 + math.sqrt(1.25)), abs=1e-9)
            assert r.margin >= 1.38


def test_criterion_02_vallee_poussin():
    rng = np.random.default_rng(2)
    for d in (1, 2):
        for _ in range(50):
            m = [int(rng.integers(1, 33)) for _ in range(d)]
            D = [int(rng.integers(0, mj + 1)) for mj in m]
            f = random_trig_poly(rng, D)
            P = vallee_poussin_nd(f, m)
            shape = [4 * mj + 2 for mj in m]
            assert np.max(np.abs(P.on_grid(shape) - f.on_grid(shape))) < 1e-10
            # operator bounds on a wider input than the reproduction band
            g = random_trig_poly(rng, [3 * mj for mj in m])
            g_sup = sup_abs(g)[0]
            assert sup_abs(vallee_poussin_nd(g, m))[0] <= 3 * g_sup + 1e-10
            F = g
            for axis, mj in enumerate(m):
                F = fejer(F, mj, axis=axis)
            assert sup_abs(F)[0] <= g_sup + 1e-10


def test_criterion_03_jackson_spline():
    ms = [8, 16, 32, 64, 128]
    with budget(30.0):
        reps4 = [jackson_report(periodic_bspline, [m], [4], shape=[8192],
                                deriv_norms=[periodic_bspline_sup(4)]) for m in ms]
        reps5 = [jackson_report(periodic_bspline, [m], [5], shape=[8192],
                                deriv_norms=[periodic_bspline_sup(5)]) for m in ms]
    errs = [r.achieved_error for r in reps4]
    assert _slope(ms, errs) <= -3.8
    # against m^-4 ||f''''|| the constant drifts like 1/m, since f'''' is Lipschitz;
    # the bound holds with its largest value
    c4 = [r.C_d for r in reps4]
    print(f"C_d (r=4): {c4}")
    for r in reps4:
        assert r.achieved_error <= max(c4) * sum(r.bound_terms) * (1 + 1e-12)
    c5 = [r.C_d for r in reps5]
    print(f"C_d (r=5): {c5}")
    assert max(c5) / min(c5) <= 1.2


def test_criterion_04_melnikov_grid():
    with budget(10.0):
        for d in (1.0, 0.25, 0.04):
            for w in (0.5, 1.0, 2.0):
                for q in (0.0, math.pi / 3, math.pi):
                    m = MelnikovParams(d, w, q)
                    cf, qd = melnikov_closed_form(m), melnikov_quadrature(m)
                    assert abs(qd - cf) <= 1e-6 * abs(cf), (d, w, q)


def test_criterion_05_pendulum_identity():
    with budget(10.0):
        for s in (0.01, 0.1):
            D = 8 / math.sqrt(s)
            for frac in (0.7, 0.85, 1.3):
                c = action_derivative_check(PendulumParams(s), 0.0, frac * D, 2 * D)
                assert c.rel_error < 1e-4, (s, frac, c.rel_error)


def test_criterion_06_energy_time_law():
    for s in (0.01, 0.1, 1.0):
        x, _, fit = energy_time_law(PendulumParams(s))
        assert x[0] == 5.0 and x[-1] == 20.0
        assert fit.relative_residual < 0.01
        assert fit.slope == pytest.approx(ENERGY_TIME_SLOPE, rel=1e-8)


def _box(solver, xi):
    lo_v, ilo, hi_v, ihi = solver.tr.bracket(xi)
    idx = np.arange(1, solver.q)
    return solver.tr.translate(lo_v, ilo)(idx), solver.tr.translate(hi_v, ihi)(idx)


def test_criterion_07_peierls_barrier():
    with budget(300.0):
        h0 = GeneratingFunction(ZeroPotential())
        xi = np.arange(64) / 64
        golden = [f"{p}/{q}" for p, q in convergents(GOLDEN, 12).pairs if q > 1]
        for sym in ["0+", "1/2"] + golden:
            prof = barrier_profile(h0, RotationSymbol.parse(sym), xi)
            assert np.max(np.abs(prof.values)) < 1e-10, sym

        params = SmoothBumpParams(2, 1.0, 2)
        h = GeneratingFunction(make_family(2, 1.0, 2))
        v_peak = float(make_bump_v(params)(0.5))
        S = BarrierSolver(h, RotationSymbol.parse("0+"))
        assert S(0.5)[0] >= 0.9 * v_peak

        for p, q in [(1, 2), (1, 3), (2, 3), (1, 4), (3, 4), (1, 5), (2, 5)]:
            R = BarrierSolver(h, RotationSymbol("rational", p, q))
            for x in (0.15, 0.4, 0.65):
                B = R.periodic(x)
                _, polished, _ = pinned_oracle(h.V, x, x + p, q, M=2000, box=_box(R, x))
                assert abs(B - (polished - R.orbit.action)) <= 1e-6, (p, q, x)

        for x in (0.3, 0.5, 0.9):
            a, _ = S.one_sided(x, S.window)
            b, _ = S.one_sided(x, 2 * S.window)
            assert abs(a - b) < 1e-8


def test_criterion_08_rescaling():
    P = make_family(2, 1.0, 2)
    hP = GeneratingFunction(P)
    for q in (2, 3, 5):
        hQ = GeneratingFunction(rescale_problem(P, q))
        c = minimal_periodic_orbit(hQ, 1, 3)
        assert np.array_equal(transport_configuration(c, q), q * c.values)
        assert stationarity_residual(hP, q * c.unrolled(3, hQ.period)) < 1e-10

    # regular orbits keep round-off small over long runs
    P = make_family(64, 1.0, 2)
    hP = GeneratingFunction(P)
    for q in (2, 3, 5):
        hQ = GeneratingFunction(rescale_problem(P, q))
        N = 4000
        xs = orbit(hQ, PhasePoint(0.1, 0.23), N)
        ys = orbit(hP, PhasePoint(0.1 * q, 0.23 * q), N)
        w = (xs[-1] - xs[0]) / N
        rho = (ys[-1] - ys[0]) / N
        p = math.floor(q * w)
        assert abs((rho - p) - (q * w - p)) < 1e-8


def test_criterion_09_poisson_and_smooth_field():
    with budget(60.0):
        rng = np.random.default_rng(9)
        for d in (2, 3):
            shape = [64] * d
            for _ in range(3):
                c = random_trig_poly(rng, [12] * d).coeffs.copy()
                c[(12,) * d] = 0
                Psi = TorusField(TrigPolyND(c).on_grid(shape))
                T = TorusField(Psi.laplacian().samples / d)
                assert np.max(np.abs(poisson_solve(T).samples - Psi.samples)) < 1e-10
        for d, grid in ((2, 256), (3, 128)):
            thr, rows = smooth_threshold(d, grid=grid, n_max=1024)
            assert thr is not None
            for n, holds, margin in rows:
                if n >= thr:
                    assert holds and margin > 0
            F = make_T_smooth(thr, d, grid=grid)
            assert abs(F.field.mean) < 1e-15
            assert F.report.holds and F.report.margin > 0


def test_criterion_10_norm_decay():
    qs = [8, 16, 32, 64]
    a = 1.0
    reps = [norm_report(rescale_problem(make_family(q, a, 2), q), [0, 1, 2]) for q in qs]
    for r in (0, 1, 2):
        fit = _slope(qs, [rep.norms[r] for rep in reps])
        assert fit == pytest.approx(r - a - 2, abs=0.1), (r, fit)


def test_criterion_11_cross_validation():
    with budget(300.0):
        herman = toy_family(4).report
        v = invariant_circle_test(GeneratingFunction(toy_potential(4)), GOLDEN, xi_grid_size=64)
    assert v.destroyed and v.label == "destroyed"
    assert v.barrier > 1e-8
    assert v.destroyed == herman.holds
