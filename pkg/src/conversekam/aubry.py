"""Minimal configurations, heteroclinic orbits and Peierls barriers.

All problems reduce to minimising the discrete action of a chain

    A(x) = sum_i h(x_i, x_{i+1}),   h(x, x') = (x - x')**2 / 2 + V(x')

either periodically closed (x_{i+q} = x_i + p L, L the potential period)
or clamped at both ends.  The Hessian is tridiagonal (cyclic in the
periodic case) with diagonal 2 + V''(x_i) and off-diagonal -1, so each
Newton step is a linear-time banded solve.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numba
import numpy as np
from scipy import linalg, optimize

from .rotation import convergents, is_rational_at_precision
from .twistmap import GeneratingFunction, stationarity_residual

ZERO_TOL = 1e-12       # barrier values below this are reported as 0
STATIONARY_TOL = 1e-12
WINDOW_TOL = 1e-8
CLAMP_TOL = 1e-8
MIN_SIDE_STEPS = 50
BOX_GRID = 65             # grid points per box for the constrained chain seed
DENSE_CYCLE_MAX = 400      # above this the cyclic solve skips the definiteness check


class NonConvergence(RuntimeError):
    def __init__(self, iterations: int, residual: float, what: str = "Newton"):
        super().__init__(f"{what} did not converge: {iterations} iterations, residual {residual:.3e}")
        self.iterations = iterations
        self.residual = residual


class WindowTooSmall(RuntimeError):
    pass


class DegenerateMinimizer(WindowTooSmall):
    """Periodic minimizers are not isolated, so no heteroclinic exists."""


class UnresolvedGap(RuntimeError):
    pass


# ---------------------------------------------------------------- types

@dataclass(frozen=True)
class RotationSymbol:
    kind: str                  # "rational", "plus", "minus" or "irrational"
    p: int = 0
    q: int = 1
    omega: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("rational", "plus", "minus", "irrational"):
            raise ValueError(f"unknown symbol kind {self.kind!r}")
        if self.kind == "irrational":
            if self.omega is None or is_rational_at_precision(self.omega):
                raise ValueError(f"omega={self.omega} is rational at working precision")
        else:
            if self.q < 1 or math.gcd(self.p, self.q) != 1:
                raise ValueError(f"need q >= 1 and gcd(p, q) = 1, got {self.p}/{self.q}")

    @classmethod
    def parse(cls, text: str) -> "RotationSymbol":
        """'1/2', '0+', '1/3-', 'golden' or a decimal irrational such as '0.41421356'."""
        t = str(text).strip()
        if t == "golden":
            return cls("irrational", omega=(math.sqrt(5) - 1) / 2)
        kind = "rational"
        if t.endswith("+"):
            kind, t = "plus", t[:-1]
        elif t.endswith("-"):
            kind, t = "minus", t[:-1]
        if "/" in t or kind != "rational" or t.lstrip("-").isdigit():
            fr = Fraction(t)
            return cls(kind, fr.numerator, fr.denominator)
        return cls("irrational", omega=float(t))

    @property
    def value(self) -> float:
        return self.omega if self.kind == "irrational" else self.p / self.q

    def __str__(self):
        if self.kind == "irrational":
            return repr(self.omega)
        suffix = {"rational": "", "plus": "+", "minus": "-"}[self.kind]
        return f"{self.p}/{self.q}{suffix}" if self.q > 1 else f"{self.p}{suffix}"


@dataclass(frozen=True)
class Closure:
    kind: str                  # "periodic", "clamped" or "free"
    p: int = 0
    q: int = 1
    left: Optional[float] = None
    right: Optional[float] = None


@dataclass
class Configuration:
    values: np.ndarray
    closure: Closure = field(default_factory=lambda: Closure("free"))
    symbol: Optional[RotationSymbol] = None
    offset: int = 0            # index carried by values[0]
    action: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.closure.kind == "periodic" and self.values.size != self.closure.q:
            raise ValueError("periodic configuration must have exactly q entries")

    def __len__(self):
        return self.values.size

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.values.size)

    def unrolled(self, periods: int, period: float) -> np.ndarray:
        """Periodic configuration extended over the given number of periods."""
        if self.closure.kind != "periodic":
            return self.values.copy()
        p, q = self.closure.p, self.closure.q
        i = np.arange(periods * q)
        return self.values[i % q] + (i // q) * p * period

    def is_monotone(self) -> bool:
        """Non-strict: far out on a heteroclinic, consecutive gaps fall below round-off."""
        d = np.diff(self.values)
        return bool(np.all(d >= 0) or np.all(d <= 0))


@dataclass
class BarrierProfile:
    symbol: RotationSymbol
    xi_grid: np.ndarray
    values: np.ndarray
    truncation_window: int
    tolerance: float
    windows: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None

    @property
    def sup(self) -> float:
        return float(np.max(self.values))

    @property
    def witness(self) -> float:
        return float(self.xi_grid[int(np.argmax(self.values))])


@dataclass
class CircleVerdict:
    destroyed: bool
    witness_xi: Optional[float]
    barrier: float
    omega: float
    xi_grid: np.ndarray
    estimates: np.ndarray               # per xi, last-convergent barrier
    spread: np.ndarray                  # per xi, |last - previous|
    convergents: list

    @property
    def label(self) -> str:
        return "destroyed" if self.destroyed else "exists-compatible"


# ------------------------------------------------------------- actions

def segment_action(h: GeneratingFunction, c) -> float:
    """Sum of h over consecutive pairs (one full period if periodic)."""
    x = np.asarray(getattr(c, "values", c), dtype=float)
    closure = getattr(c, "closure", None)
    if closure is not None and closure.kind == "periodic":
        x = np.append(x, x[0] + closure.p * h.period)
    if x.size < 2:
        raise ValueError("segment needs at least two entries")
    return float(np.sum(h(x[:-1], x[1:])))


def _chain_action(h, x, a, b):
    full = np.concatenate(([a], x, [b]))
    return float(np.sum(h(full[:-1], full[1:])))


def _chain_grad(h, x, a, b):
    full = np.concatenate(([a], x, [b]))
    return 2.0 * x - full[:-2] - full[2:] + h.V.deriv(x, 1)


def _cycle_full(x, shift):
    return np.concatenate(([x[-1] - shift], x, [x[0] + shift]))


def _cycle_action(h, x, shift):
    full = np.append(x, x[0] + shift)
    return float(np.sum(h(full[:-1], full[1:])))


def _cycle_grad(h, x, shift):
    full = _cycle_full(x, shift)
    return 2.0 * x - full[:-2] - full[2:] + h.V.deriv(x, 1)


def _cycle_hessian_dense(h, x):
    q = x.size
    H = np.diag(2.0 + h.V.deriv(x, 2))
    for i in range(q):
        H[i, (i + 1) % q] -= 1.0
        H[i, (i - 1) % q] -= 1.0
    return H


def _curvature_bound(h) -> float:
    cache = getattr(h, "_curv_bound", None)
    if cache is None:
        xs = np.linspace(0.0, h.period, 1025)
        cache = 4.0 + float(np.max(np.abs(h.V.deriv(xs, 2))))
        h._curv_bound = cache
    return cache


# -------------------------------------------------------------- solvers

def _solve_cyclic(diag, rhs):
    """Solve the cyclic tridiagonal system with off-diagonals and corners -1."""
    n = diag.size
    if n <= 2:
        H = np.diag(diag)
        if n == 2:
            H[0, 1] = H[1, 0] = -2.0
        else:
            H[0, 0] = diag[0] - 2.0
        return np.linalg.solve(H, rhs)
    # Sherman-Morrison on top of a plain tridiagonal solve
    gamma = -diag[0]
    alpha = beta = -1.0
    bb = diag.copy()
    bb[0] -= gamma
    bb[-1] -= alpha * beta / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = -1.0
    ab[1] = bb
    ab[2, :-1] = -1.0
    u = np.zeros(n)
    u[0], u[-1] = gamma, alpha
    sol = linalg.solve_banded((1, 1), ab, np.column_stack([rhs, u]))
    y, z = sol[:, 0], sol[:, 1]
    fact = (y[0] + beta * y[-1] / gamma) / (1.0 + z[0] + beta * z[-1] / gamma)
    return y - fact * z


def _newton(x, grad_fn, action_fn, curv_fn, solve_fn, lo=None, hi=None,
            tol=STATIONARY_TOL, max_iter=200, gd_iters=60, step=0.25, lowest_fn=None):
    """Projected gradient warm-up followed by damped Newton with box projection.

    If `lowest_fn(diag, stuck)` is given it returns the lowest eigenpair of the
    reduced Hessian; an indefinite Hessian then triggers a step along the
    negative curvature direction instead of repeated shifting, which is what
    moves the iterate off symmetric saddles.
    """
    lo = np.full_like(x, -np.inf) if lo is None else lo
    hi = np.full_like(x, np.inf) if hi is None else hi
    x = np.clip(x, lo, hi)

    def projected(g):
        stuck = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        return np.where(stuck, 0.0, g), stuck

    for _ in range(gd_iters):
        gp, _ = projected(grad_fn(x))
        if np.max(np.abs(gp), initial=0.0) < 1e-3:
            break
        x = np.clip(x - step * gp, lo, hi)

    mu = 0.0
    res = np.inf
    for it in range(max_iter):
        g = grad_fn(x)
        gp, stuck = projected(g)
        res = float(np.max(np.abs(gp), initial=0.0))
        if res <= tol:
            return x, it, res
        diag = curv_fn(x) + mu
        diag = np.where(stuck, 1.0, diag)
        try:
            d = -solve_fn(diag, gp, stuck)
        except (linalg.LinAlgError, np.linalg.LinAlgError, ValueError):
            if lowest_fn is not None and mu == 0.0:
                lam, v = lowest_fn(np.where(stuck, 1.0, curv_fn(x)), stuck)
                if lam < 0:
                    xn = _curvature_step(x, gp, lam, v, action_fn, lo, hi, step)
                    if xn is not None:
                        x = xn
                        continue
            mu = max(4 * mu, 1e-6)
            continue
        d = np.where(stuck, 0.0, d)
        slope = float(gp @ d)
        if not np.all(np.isfinite(d)) or slope >= 0:
            mu = max(4 * mu, 1e-6)
            continue
        if res < 1e-7 and mu == 0.0:
            x = np.clip(x + d, lo, hi)
            continue
        a0 = action_fn(x)
        alpha = 1.0
        while alpha > 1e-10:
            xn = np.clip(x + alpha * d, lo, hi)
            if action_fn(xn) <= a0 + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            mu = max(4 * mu, 1e-6)
            continue
        x = xn
        mu = 0.0 if alpha == 1.0 else mu
    return x, max_iter, res


def _curvature_step(x, g, lam, v, action_fn, lo, hi, step):
    """Backtracking step along a negative curvature direction v."""
    v = v if float(g @ v) <= 0 else -v
    a0 = action_fn(x)
    t = 1.0
    while t > 1e-8:
        xn = np.clip(x + t * v, lo, hi)
        dx = xn - x
        if np.any(dx) and action_fn(xn) < a0 + 1e-4 * (float(g @ dx) + 0.5 * lam * float(dx @ dx)):
            return xn
        t *= 0.5
    return None


def _box_grid_seeds(h, a, b, lo, hi, G, keep=3):
    """Grid minima over x_i in linspace(lo_i, hi_i, G) by a transfer-matrix sweep.

    Paths ending in the `keep` lowest local minima of the final value are
    returned, so nearly degenerate wells are all tried by the descent.
    """
    X = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, G)[None, :]
    VX = np.asarray(h.V(X), dtype=float)
    f = 0.5 * (X[0] - a) ** 2 + VX[0]
    back = np.empty((X.shape[0], G), dtype=np.int64)
    for i in range(1, X.shape[0]):
        cost = f[:, None] + 0.5 * (X[i][None, :] - X[i - 1][:, None]) ** 2
        back[i] = np.argmin(cost, axis=0)
        f = cost[back[i], np.arange(G)] + VX[i]
    F = f + 0.5 * (b - X[-1]) ** 2
    Fp = np.concatenate(([np.inf], F, [np.inf]))
    cand = np.nonzero((F <= Fp[:-2]) & (F <= Fp[2:]))[0]
    out = []
    for j in cand[np.argsort(F[cand])][:keep]:
        path = [int(j)]
        for i in range(X.shape[0] - 1, 0, -1):
            path.append(int(back[i, path[-1]]))
        out.append(X[np.arange(X.shape[0]), path[::-1]])
    return out


def minimize_chain(h: GeneratingFunction, a: float, b: float, x0: np.ndarray,
                   lo=None, hi=None, tol=STATIONARY_TOL, max_iter=200, grid=BOX_GRID):
    """Minimise sum h over the chain (a, x_1..x_n, b) with optional box bounds.

    With finite bounds the descent is also started from the best point of a
    grid of `grid` values per box (exact over that grid), and the lower of
    the two results is returned; grid=0 disables this.  Returns
    (x, residual); raises NonConvergence if the projected gradient stays
    above 1e-10.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.size == 0:
        return x0, 0.0
    starts = [x0]
    if grid and lo is not None and hi is not None:
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
            starts += _box_grid_seeds(h, a, b, lo, hi, grid)
    best = None
    err = None
    for s in starts:
        try:
            x, res = _minimize_chain_from(h, a, b, s, lo, hi, tol, max_iter)
        except NonConvergence as e:
            err = e
            continue
        A = _chain_action(h, x, a, b)
        if best is None or A < best[0]:
            best = (A, x, res)
    if best is None:
        raise err
    return best[1], best[2]


def _minimize_chain_from(h, a, b, x0, lo, hi, tol, max_iter):
    V = h.V

    def solve(diag, rhs, stuck):
        n = diag.size
        if n == 1:
            if diag[0] <= 0:
                raise np.linalg.LinAlgError("not positive definite")
            return rhs / diag
        ab = np.zeros((2, n))
        off = np.full(n - 1, -1.0)
        off[stuck[:-1] | stuck[1:]] = 0.0
        ab[0, 1:] = off
        ab[1] = diag
        return linalg.solveh_banded(ab, rhs)

    def lowest(diag, stuck):
        n = diag.size
        if n == 1:
            return float(diag[0]), np.ones(1)
        ab = np.zeros((2, n))
        off = np.full(n - 1, -1.0)
        off[stuck[:-1] | stuck[1:]] = 0.0
        ab[0, 1:] = off
        ab[1] = diag
        w, v = linalg.eig_banded(ab, select="i", select_range=(0, 0))
        return float(w[0]), v[:, 0]

    x, it, res = _newton(
        x0, lambda x: _chain_grad(h, x, a, b), lambda x: _chain_action(h, x, a, b),
        lambda x: 2.0 + V.deriv(x, 2), solve, lo, hi, tol=tol, max_iter=max_iter,
        step=1.0 / _curvature_bound(h), lowest_fn=lowest)
    if res > 1e-10:
        raise NonConvergence(it, res, "chain Newton")
    return x, res


def _cyclic_dense(diag):
    H = np.diag(diag)
    q = diag.size
    for i in range(q):
        H[i, (i + 1) % q] -= 1.0
        H[i, (i - 1) % q] -= 1.0
    return H


def _solve_cyclic_pd(diag, rhs):
    """Cyclic solve that fails on an indefinite Hessian (dense Cholesky for moderate q)."""
    if diag.size > DENSE_CYCLE_MAX:
        return _solve_cyclic(diag, rhs)
    return linalg.cho_solve(linalg.cho_factor(_cyclic_dense(diag)), rhs)


def _lowest_cyclic(diag, stuck):
    w, v = linalg.eigh(_cyclic_dense(diag), subset_by_index=(0, 0))
    return float(w[0]), v[:, 0]


def _minimize_cycle(h, p, q, x0, tol=STATIONARY_TOL, max_iter=200):
    shift = p * h.period
    V = h.V
    x, it, res = _newton(
        np.asarray(x0, dtype=float), lambda x: _cycle_grad(h, x, shift),
        lambda x: _cycle_action(h, x, shift), lambda x: 2.0 + V.deriv(x, 2),
        lambda diag, rhs, stuck: _solve_cyclic_pd(diag, rhs), tol=tol, max_iter=max_iter,
        step=1.0 / _curvature_bound(h),
        lowest_fn=_lowest_cyclic if q <= DENSE_CYCLE_MAX else None)
    return x, res, it


def _normalise_periodic(x, p, q, L):
    """Index shift and lift translation so x_0 is the smallest orbit point in [0, L)."""
    r = np.mod(x, L)
    j = int(np.argmin(np.where(np.isclose(r, L, rtol=0, atol=1e-13), 0.0, r)))
    i = np.arange(j, j + q)
    y = x[i % q] + (i // q) * p * L
    return y - math.floor(y[0] / L + 1e-13) * L


@numba.njit(cache=True)
def _envelope(f, c):
    """g[j] = min_i f[i] + c (j - i)^2 with argmin (lower envelope of parabolas)."""
    n = f.size
    g = np.full(n, np.inf)
    arg = np.full(n, -1, dtype=np.int64)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    k = -1
    for i in range(n):
        if not np.isfinite(f[i]):
            continue
        s = -np.inf
        while k >= 0:
            j = v[k]
            s = ((f[i] + c * i * i) - (f[j] + c * j * j)) / (2.0 * c * (i - j))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = i
        z[k] = -np.inf if k == 0 else s
        z[k + 1] = np.inf
    if k < 0:
        return g, arg
    k = 0
    for j in range(n):
        while z[k + 1] < j:
            k += 1
        i = v[k]
        g[j] = f[i] + c * (j - i) * (j - i)
        arg[j] = i
    return g, arg


@numba.njit(cache=True)
def _cycle_scan(Vg, m, p, q, c, lo):
    """Grid action of the best (p, q) cycle from each start 0..m-1."""
    n = Vg.size
    out = np.empty(m)
    for s in range(m):
        f = np.full(n, np.inf)
        f[s - lo] = 0.0
        for _ in range(q):
            g, _a = _envelope(f, c)
            f = g + Vg
        out[s] = f[s + p * m - lo]
    return out


def _grid_seed(h, p, q, m=None):
    """Coarse transfer-matrix minimum over a lifted grid, used as a Newton seed."""
    L = h.period
    m = m or max(64, 2 * q)
    lo = (min(p, 0) - 1) * m
    idx = np.arange(lo, (max(p, 0) + 1) * m + 1)
    x = idx * (L / m)
    Vg = np.asarray(h.V(np.mod(x, L)), dtype=float)
    c = 0.5 * (L / m) ** 2
    scan = _cycle_scan(Vg, m, p, q, c, lo)
    s = int(np.argmin(scan))
    f = np.full(idx.size, np.inf)
    f[s - lo] = 0.0
    back = np.empty((q, idx.size), dtype=np.int64)
    for k in range(q):
        g, back[k] = _envelope(f, c)
        f = g + Vg
    path = [s + p * m - lo]
    for k in range(q - 1, 0, -1):
        path.append(int(back[k, path[-1]]))
    return np.concatenate(([x[s - lo]], x[np.array(path[::-1][:-1], dtype=np.int64)]))


def minimal_periodic_orbit(h: GeneratingFunction, p: int, q: int,
                           seed: Optional[Configuration] = None, n_seeds: int = 16,
                           max_iter: int = 200) -> Configuration:
    """Minimal (p, q)-periodic configuration, x_{i+q} = x_i + p L.

    Without a seed, descent is started from the rotation-linear seeds
    x_i = xi + i p L / q for n_seeds shifts xi in [0, L/q) and from the
    minimum of a coarse grid search (multi-well potentials have ordered
    local minima that descent alone does not escape); the lowest action
    wins and ties go to the lexicographically smallest normalised
    configuration.  With a seed the seed's anchor and index gauge are kept.
    """
    if q < 1 or math.gcd(p, q) != 1:
        raise ValueError(f"need q >= 1 and gcd(p, q) = 1, got {p}/{q}")
    L = h.period
    shift = p * L
    base = np.arange(q) * shift / q
    if seed is not None:
        starts = [np.asarray(getattr(seed, "values", seed), dtype=float)]
        if starts[0].size != q:
            raise ValueError("seed must have q entries")
    else:
        starts = [base + j * L / (q * n_seeds) for j in range(n_seeds)]
        starts.append(_grid_seed(h, p, q))

    best = None
    worst_res = 0.0
    for x0 in starts:
        x, res, it = _minimize_cycle(h, p, q, x0, max_iter=max_iter)
        if res > 1e-10:
            worst_res = max(worst_res, res)
            continue
        if seed is None:
            x = _normalise_periodic(x, p, q, L)
        A = _cycle_action(h, x, shift)
        if best is None:
            best = (A, x)
            continue
        tie = 1e-12 * max(1.0, abs(A))
        if A < best[0] - tie or (abs(A - best[0]) <= tie and tuple(x) < tuple(best[1])):
            best = (A, x)
    if best is None:
        raise NonConvergence(max_iter, worst_res, "periodic Newton")
    A, x = best
    if seed is not None and q > 1:
        x = _anchored(h, p, q, starts[0][0], A, x)
    return Configuration(x, Closure("periodic", p, q), RotationSymbol("rational", p, q), 0, A)


def _anchored(h, p, q, x0, A, x):
    """Keep x_0 = x0 when the minimizers form a continuum through x0."""
    shift = p * h.period
    try:
        inner, _ = minimize_chain(h, x0, x0 + shift, x[1:] - x[0] + x0)
    except NonConvergence:
        return x
    y = np.concatenate(([x0], inner))
    tie = 1e-12 * max(1.0, abs(A))
    if _cycle_action(h, y, shift) <= A + tie and np.max(np.abs(_cycle_grad(h, y, shift))) <= 1e-10:
        return y
    return x


def periodic_hessian_min_eig(h: GeneratingFunction, c: Configuration) -> float:
    return float(np.linalg.eigvalsh(_cycle_hessian_dense(h, c.values))[0])


# ------------------------------------------------------ gaps and barriers

class _Translates:
    """Translates of one periodic minimizer, used as box bounds and clamps."""

    def __init__(self, h, orbit: Configuration):
        self.h = h
        self.L = h.period
        self.p, self.q = orbit.closure.p, orbit.closure.q
        self.x = orbit.values
        self.action = orbit.action
        r = np.mod(self.x, self.L)
        self.order = np.argsort(r, kind="stable")
        self.r = r[self.order]

    def ext(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return self.x[idx % self.q] + (idx // self.q) * self.p * self.L

    def bracket(self, xi: float):
        """Orbit points s_lo <= xi < s_hi and the index of each in the orbit."""
        L = self.L
        base = math.floor(xi / L) * L
        red = xi - base
        j = int(np.searchsorted(self.r, red, side="right")) - 1
        if j < 0:
            lo, ilo = self.r[-1] - L, self.order[-1]
        else:
            lo, ilo = self.r[j], self.order[j]
        if j + 1 < self.q:
            hi, ihi = self.r[j + 1], self.order[j + 1]
        else:
            hi, ihi = self.r[0] + L, self.order[0]
        return base + lo, int(ilo), base + hi, int(ihi)

    def translate(self, start_value: float, start_index: int):
        """Function idx -> translate y with y_0 = start_value."""
        m = start_value - self.x[start_index]

        def y(idx):
            return self.ext(np.asarray(idx) + start_index) + m
        return y


def _pinned_periodic_barrier(h, tr: _Translates, xi: float):
    p, q, L = tr.p, tr.q, tr.L
    lo_v, ilo, hi_v, ihi = tr.bracket(xi)
    gap = hi_v - lo_v
    if gap <= 0:
        raise UnresolvedGap(f"empty complementary interval at xi={xi}")
    if min(xi - lo_v, hi_v - xi) <= 1e-13 * max(1.0, abs(xi)):
        return 0.0, None
    if q == 1:
        return float(h(xi, xi + p * L) - tr.action), np.array([xi])
    ym, yp = tr.translate(lo_v, ilo), tr.translate(hi_v, ihi)
    idx = np.arange(1, q)
    lo, hi = ym(idx), yp(idx)
    theta = (xi - lo_v) / gap
    x, _ = minimize_chain(h, xi, xi + p * L, lo + theta * (hi - lo), lo, hi)
    A = _chain_action(h, x, xi, xi + p * L)
    return A - tr.action, np.concatenate(([xi], x))


class BarrierSolver:
    """Barrier evaluation for one generating function and rational symbol.

    Periodic minimizers and heteroclinic reference actions are cached, so
    evaluating a whole xi grid reuses them.
    """

    def __init__(self, h: GeneratingFunction, symbol: RotationSymbol, window: int = 1,
                 max_doublings: int = 6):
        if symbol.kind == "irrational":
            raise ValueError("BarrierSolver handles rational symbols; use peierls_barrier")
        self.h = h
        self.symbol = symbol
        self.p, self.q = symbol.p, symbol.q
        self.window = max(int(window), math.ceil(MIN_SIDE_STEPS / self.q))
        self.max_doublings = max_doublings
        self.orbit = minimal_periodic_orbit(h, self.p, self.q)
        self.tr = _Translates(h, self.orbit)
        self._kcache: dict = {}

    # periodic symbol ------------------------------------------------------
    def periodic(self, xi: float) -> float:
        val, _ = _pinned_periodic_barrier(self.h, self.tr, xi)
        return 0.0 if abs(val) < ZERO_TOL else val

    # one-sided symbols ----------------------------------------------------
    def _setup(self, xi):
        lo_v, ilo, hi_v, ihi = self.tr.bracket(xi)
        return lo_v, hi_v, self.tr.translate(lo_v, ilo), self.tr.translate(hi_v, ihi)

    def _pinned(self, xi, lo_v, hi_v, ym, yp, W):
        """Pinned heteroclinic: x_0 = xi, clamped to translates at +-W q."""
        h, q = self.h, self.q
        M = W * q
        plus = self.symbol.kind == "plus"
        theta = (xi - lo_v) / (hi_v - lo_v)
        kappa = 1.0 / q
        il = np.arange(-M + 1, 0)
        ir = np.arange(1, M)
        lo_l, hi_l, lo_r, hi_r = ym(il), yp(il), ym(ir), yp(ir)
        if plus:
            a, b = ym(-M)[()], yp(M)[()]
            sl = lo_l + theta * (hi_l - lo_l) * np.exp(kappa * il)
            sr = hi_r - (1 - theta) * (hi_r - lo_r) * np.exp(-kappa * ir)
        else:
            a, b = yp(-M)[()], ym(M)[()]
            sl = hi_l - (1 - theta) * (hi_l - lo_l) * np.exp(kappa * il)
            sr = lo_r + theta * (hi_r - lo_r) * np.exp(-kappa * ir)
        xl, rl = minimize_chain(h, a, xi, sl, lo_l, hi_l)
        xr, rr = minimize_chain(h, xi, b, sr, lo_r, hi_r)
        A = _chain_action(h, xl, a, xi) + _chain_action(h, xr, xi, b)
        K = A - 2 * W * self.tr.action
        x = np.concatenate(([a], xl, [xi], xr, [b]))
        return K, x

    def heteroclinic(self, lo_v, hi_v, ym, yp, W):
        """Minimal heteroclinic through the gap (lo_v, hi_v): (x_0, K_W, window array).

        The whole window chain is minimised between the two translates with
        no pin, so K_W is the minimum over xi of the pinned values and the
        barrier K_W(xi) - K_W is nonnegative by construction.
        """
        key = (round(lo_v, 12), W)
        if key in self._kcache:
            return self._kcache[key]
        h, q = self.h, self.q
        M = W * q
        i = np.arange(-M + 1, M)
        lo, hi = ym(i), yp(i)
        kappa = 1.0 / q
        if self.symbol.kind == "plus":
            a, b = ym(-M)[()], yp(M)[()]
            w = 1.0 / (1.0 + np.exp(-kappa * i))
        else:
            a, b = yp(-M)[()], ym(M)[()]
            w = 1.0 / (1.0 + np.exp(kappa * i))
        x, _ = minimize_chain(h, a, b, lo + w * (hi - lo), lo, hi)
        K = _chain_action(h, x, a, b) - 2 * W * self.tr.action
        full = np.concatenate(([a], x, [b]))
        best = (float(full[M]), K, full)
        self._kcache[key] = best
        return best

    def one_sided(self, xi: float, W: int):
        lo_v, hi_v, ym, yp = self._setup(xi)
        if min(xi - lo_v, hi_v - xi) <= 1e-13 * max(1.0, abs(xi)):
            return 0.0, None
        _, K, _ = self.heteroclinic(lo_v, hi_v, ym, yp, W)
        Kxi, x = self._pinned(xi, lo_v, hi_v, ym, yp, W)
        return Kxi - K, x

    def __call__(self, xi: float):
        """Barrier value at xi together with the window used and a residual."""
        xi = float(xi)
        if self.symbol.kind == "rational":
            return self.periodic(xi), 0, 0.0
        # points of periodic minimizers lie in every one-sided minimal set
        if self.periodic(xi) <= ZERO_TOL:
            return 0.0, 0, 0.0
        W = self.window
        prev, _ = self.one_sided(xi, W)
        for _ in range(self.max_doublings):
            W *= 2
            cur, _ = self.one_sided(xi, W)
            if abs(cur - prev) < WINDOW_TOL:
                val = 0.0 if abs(cur) < ZERO_TOL else cur
                return val, W, abs(cur - prev)
            prev = cur
        raise WindowTooSmall(f"barrier at xi={xi} not stable under window doubling "
                             f"(last change {abs(cur - prev):.2e} at window {W})")


def minimal_heteroclinic(h: GeneratingFunction, p: int, q: int, sign: str = "plus",
                         window: int = 1) -> Configuration:
    """Minimal heteroclinic of symbol p/q+ (plus) or p/q- (minus).

    The chain runs over indices -window*q .. window*q and is clamped to the
    two neighbouring translates of the (p, q) minimizer.  Degenerate input
    (a continuum of periodic minimizers) is rejected.
    """
    if sign not in ("plus", "minus"):
        raise ValueError("sign must be 'plus' or 'minus'")
    solver = BarrierSolver(h, RotationSymbol(sign, p, q), window)
    lam = periodic_hessian_min_eig(h, solver.orbit)
    if lam < 1e-9:
        raise DegenerateMinimizer(
            f"periodic minimizer {p}/{q} is degenerate (Hessian eigenvalue {lam:.2e}); "
            "no isolated heteroclinic exists")
    W = solver.window
    lo_v, hi_v, ym, yp = solver._setup(solver.orbit.values[0])
    s, K, x = solver.heteroclinic(lo_v, hi_v, ym, yp, W)
    M = W * q
    idx = np.arange(-M, M + 1)
    ref_left = (ym if sign == "plus" else yp)(idx[1])
    ref_right = (yp if sign == "plus" else ym)(idx[-2])
    dev = max(abs(x[1] - ref_left), abs(x[-2] - ref_right))
    if dev > CLAMP_TOL:
        raise WindowTooSmall(f"clamp deviation {dev:.2e} exceeds {CLAMP_TOL}; increase window")
    # far-field points agree with the periodic orbit to round-off; make the
    # ordering exact there
    mono = np.maximum.accumulate(x) if x[-1] >= x[0] else np.minimum.accumulate(x)
    if np.max(np.abs(mono - x)) < 1e-13:
        x = mono
    c = Configuration(x, Closure("clamped", p, q, x[0], x[-1]), RotationSymbol(sign, p, q), -M, K)
    res = stationarity_residual(h, c)
    if res > 1e-10:
        raise NonConvergence(0, res, "heteroclinic")
    return c


def peierls_barrier(h: GeneratingFunction, s: RotationSymbol, xi: float, window: int = 1,
                    max_q: int = 100) -> float:
    """Peierls barrier P_s(xi); irrational symbols use the last convergent with q <= max_q."""
    if s.kind == "irrational":
        return irrational_barrier(h, s.omega, [xi], max_q=max_q)[0][-1, 0]
    return BarrierSolver(h, s, window)(xi)[0]


def _profile_chunk(args):
    h, s, window, xs = args
    solver = BarrierSolver(h, s, window)
    return [solver(x) for x in xs]


def barrier_profile(h: GeneratingFunction, s: RotationSymbol, xi_grid: Sequence[float],
                    window: int = 1, workers: int = 1) -> BarrierProfile:
    """Barrier on a grid of xi.  Parallel chunks give the same numbers as serial runs."""
    xi = np.asarray(xi_grid, dtype=float)
    if s.kind == "irrational":
        est, _, _ = irrational_barrier(h, s.omega, xi)
        vals = est[-1]
        return BarrierProfile(s, xi, vals, window, ZERO_TOL)
    if workers > 1 and xi.size > 1:
        chunks = np.array_split(xi, workers)
        with ProcessPoolExecutor(workers) as ex:
            out = [r for part in ex.map(_profile_chunk, [(h, s, window, c) for c in chunks])
                   for r in part]
    else:
        out = _profile_chunk((h, s, window, xi))
    vals = np.array([o[0] for o in out])
    wins = np.array([o[1] for o in out])
    res = np.array([o[2] for o in out])
    return BarrierProfile(s, xi, vals, window, ZERO_TOL, wins, res)


def irrational_barrier(h: GeneratingFunction, omega: float, xi_grid, max_q: int = 100,
                       min_q: int = 1):
    """Barriers of the convergent symbols p_k/q_k on a xi grid.

    Returns (values[k, j], pairs, spread[j]) where row k belongs to the
    k-th convergent with min_q <= q_k <= max_q and spread is the change
    between the last two rows.  The last row is the estimate of P_omega.
    """
    cs = convergents(omega, 64)
    pairs = [(p, q) for p, q in cs.pairs if min_q <= q <= max_q]
    if not pairs:
        raise ValueError(f"no convergent of {omega} with {min_q} <= q <= {max_q}")
    xi = np.asarray(xi_grid, dtype=float)
    rows = []
    for p, q in pairs:
        solver = BarrierSolver(h, RotationSymbol("rational", p, q))
        rows.append([solver.periodic(x) for x in xi])
    vals = np.array(rows)
    spread = np.abs(vals[-1] - vals[-2]) if len(rows) > 1 else np.full(xi.size, np.nan)
    return vals, pairs, spread


def invariant_circle_test(h: GeneratingFunction, omega: float, xi_grid_size: int = 64,
                          threshold: float = 1e-8, max_q: int = 100) -> CircleVerdict:
    """One-sided test of Mather's criterion for rotation number omega.

    'destroyed' is certified by a positive barrier witness; 'exists-compatible'
    only means no witness above threshold was found on the grid.
    """
    if is_rational_at_precision(omega):
        raise ValueError(f"omega={omega} is rational at working precision")
    L = h.period
    xi = L * np.arange(xi_grid_size) / xi_grid_size
    vals, pairs, spread = irrational_barrier(h, omega, xi, max_q=max_q)
    est = vals[-1]
    j = int(np.argmax(est))
    destroyed = bool(est[j] > threshold)
    return CircleVerdict(destroyed, float(xi[j]) if destroyed else None, float(est[j]), omega,
                         xi, est, spread, pairs)


def configuration_census(c, interval) -> dict:
    """Entries of a monotone configuration inside [lo, hi) and their smallest step.

    The step of an entry x_i is x_{i+1} - x_i, the successor taken in the
    full configuration (it may fall outside the interval).
    """
    x = np.sort(np.asarray(getattr(c, "values", c), dtype=float))
    lo, hi = interval
    inside = np.nonzero((x >= lo) & (x < hi))[0]
    steps = [x[i + 1] - x[i] for i in inside if i + 1 < x.size]
    return {"count": int(inside.size), "min_gap": float(min(steps)) if steps else math.inf}


def crossings(a: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> int:
    """Number of sign changes of a - b, ignoring near-zero entries."""
    d = np.asarray(a) - np.asarray(b)
    s = np.sign(d[np.abs(d) > tol])
    return int(np.sum(s[1:] != s[:-1]))
