"""Herman's total-destruction criterion, the toy model, the smooth and
analytic trace fields T_n and the torus Poisson solve.

Fields live on [0, 2 pi)^d.  For maps f(x, y) = (x + y, y + dPsi(x + y)),
T = (1/d) tr D(dPsi) = (1/d) Laplacian Psi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .perturb import DegreeOverflow, mollifier
from .trigapprox import TWO_PI, TrigPolyND, sup_abs, vallee_poussin_nd
from .twistmap import PeriodicPotential, TrigPotential

MEAN_TOL = 1e-12


class BallDoesNotFit(ValueError):
    pass


class NonzeroMean(ValueError):
    pass


class NotMonotone(ValueError):
    pass


# ----------------------------------------------------------- criterion

@dataclass
class CriterionReport:
    min_T: float
    max_T: float
    lhs: float
    rhs: float
    holds: bool
    lipschitz_bound_G: float
    denominator_collapse: bool = False
    negative_max: bool = False
    scri_lhs: float = 0.0           # -min/2
    scri_rhs: float = 0.0           # sqrt(max)
    witnesses: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs if not self.denominator_collapse else math.inf

    @property
    def scri_holds(self) -> bool:
        return self.scri_lhs > self.scri_rhs


def lipschitz_bound(max_T: float) -> float:
    """Largest G with (G + 1/G)/2 <= 1 + max_T/2."""
    M = max_T
    return 1.0 + 0.5 * M + math.sqrt(M + 0.25 * M * M)


def criterion_check(min_T: float, max_T: float, witnesses: Optional[dict] = None) -> CriterionReport:
    """1/(1 + min/2) > 1 + max/2 + sqrt(max + max^2/4).

    When min <= -2 the left side has no positive value: any invariant graph
    would need 1/G <= 1 + min/2 <= 0, so destruction holds outright and the
    report carries ``denominator_collapse``.  A negative max cannot come
    from a zero-mean field; it is flagged and the square root is taken of
    the (possibly negative) radicand clipped at zero.
    """
    m, M = float(min_T), float(max_T)
    rad = M + 0.25 * M * M
    rhs = 1.0 + 0.5 * M + math.sqrt(max(rad, 0.0))
    den = 1.0 + 0.5 * m
    collapse = den <= 0
    lhs = math.inf if collapse else 1.0 / den
    holds = True if collapse else lhs > rhs
    return CriterionReport(m, M, lhs, rhs, holds, rhs, collapse, M < 0,
                           -0.5 * m, math.sqrt(max(M, 0.0)), dict(witnesses or {}))


# ---------------------------------------------------------------- toy

@dataclass
class ToyModel:
    n: int
    potential: TrigPotential        # V with V' = phi
    report: CriterionReport
    argmin: float                   # location of min D phi in [0, 2 pi / n)
    argmax: float

    def phi(self, x):
        return self.potential.deriv(x, 1)

    def dphi(self, x):
        return self.potential.deriv(x, 2)


def toy_potential(n: int) -> TrigPotential:
    """V(x) = -5/(4n^2) sin(nx) - 1/(16 n^2) cos(2nx), period 2 pi / n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return TrigPotential.from_cos_sin([0.0, -1.0 / (16 * n * n)], [-5.0 / (4 * n * n)],
                                      period=TWO_PI / n)


def _extremum(f: Callable, lo: float, hi: float, n_grid: int, sign: float):
    """Global min of sign*f on [lo, hi): grid, then bounded Brent around the best cell."""
    x = np.linspace(lo, hi, n_grid, endpoint=False)
    i = int(np.argmin(sign * f(x)))
    h = (hi - lo) / n_grid
    res = optimize.minimize_scalar(lambda t: sign * float(f(t)), bounds=(x[i] - h, x[i] + h),
                                   method="bounded", options={"xatol": 1e-13})
    xb = float(res.x) if res.fun <= sign * f(x[i]) else float(x[i])
    return float(f(xb)), xb


def toy_family(n: int, n_grid: int = 256) -> ToyModel:
    V = toy_potential(n)
    L = V.period
    dphi = lambda x: V.deriv(x, 2)
    mn, xmin = _extremum(dphi, 0.0, L, n_grid, 1.0)
    mx, xmax = _extremum(dphi, 0.0, L, n_grid, -1.0)
    rep = criterion_check(mn, mx, {"argmin": xmin % L, "argmax": xmax % L})
    return ToyModel(n, V, rep, xmin % L, xmax % L)


# -------------------------------------------------------------- fields

@dataclass
class TorusField:
    """Samples on the uniform grid over [0, 2 pi)^d."""
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self._fft = None

    @property
    def d(self) -> int:
        return self.samples.ndim

    @property
    def shape(self) -> tuple:
        return self.samples.shape

    @property
    def spectrum(self) -> np.ndarray:
        if self._fft is None:
            self._fft = np.fft.fftn(self.samples) / self.samples.size
        return self._fft

    @property
    def mean(self) -> float:
        return float(self.spectrum.flat[0].real)

    @property
    def min(self) -> float:
        return float(self.samples.min())

    @property
    def max(self) -> float:
        return float(self.samples.max())

    def wavenumbers(self):
        ks = [np.fft.fftfreq(n, d=1.0 / n) for n in self.shape]
        return np.meshgrid(*ks, indexing="ij")

    @classmethod
    def from_spectrum(cls, spec: np.ndarray) -> "TorusField":
        return cls(np.real(np.fft.ifftn(spec * spec.size)))

    @classmethod
    def from_trigpoly(cls, p: TrigPolyND, shape: Sequence[int]) -> "TorusField":
        return cls(p.on_grid(shape))

    def to_trigpoly(self) -> TrigPolyND:
        return TrigPolyND.from_samples(self.samples)

    def laplacian(self) -> "TorusField":
        k2 = sum(k * k for k in self.wavenumbers())
        return TorusField.from_spectrum(-k2 * self.spectrum)


def grid_axes(shape: Sequence[int]):
    return [TWO_PI * np.arange(n) / n for n in shape]


def smooth_step(t):
    """C-infinity transition from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def plateau_1d(x, ramp: float = math.pi / 4):
    """Smooth bump on [0, pi] equal to 1 on [ramp, pi - ramp]; zero elsewhere mod 2 pi."""
    x = np.mod(x, TWO_PI)
    return smooth_step(x / ramp) * smooth_step((math.pi - x) / ramp)


def _periodic_offset(x, c):
    return np.mod(x - c + math.pi, TWO_PI) - math.pi


def ball_bump(axes, center: Sequence[float], R: float):
    """mollifier(|x - center| / R) with periodic distance, peak 1."""
    grids = np.meshgrid(*axes, indexing="ij")
    r2 = sum(_periodic_offset(g, c) ** 2 for g, c in zip(grids, center))
    return mollifier(np.sqrt(r2) / R)


def plateau_bump(axes, ramp: float = math.pi / 4):
    grids = np.meshgrid(*axes, indexing="ij")
    out = np.ones_like(grids[0])
    for g in grids:
        out = out * plateau_1d(g, ramp)
    return out


def unit_ball_mass(d: int) -> float:
    """Integral of mollifier(|y|) over the unit ball of R^d."""
    sphere = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    val, _ = integrate.quad(lambda r: float(mollifier(r)) * r ** (d - 1), 0.0, 1.0, epsabs=1e-14)
    return sphere * val


def plateau_mass(d: int, ramp: float = math.pi / 4) -> float:
    val, _ = integrate.quad(lambda x: float(plateau_1d(x, ramp)), 0.0, math.pi, epsabs=1e-14,
                            points=[ramp, math.pi - ramp])
    return val ** d


@dataclass
class SmoothTField:
    field: TorusField
    n: int
    c: float
    beta: float
    radius: float
    report: CriterionReport
    plus_max: float
    minus_max: float


def _assemble(plus: np.ndarray, minus: np.ndarray):
    """T = plus - beta * minus with beta fixed by the grid mean, then the
    residual zero mode removed so the mean is exactly representable as 0."""
    beta = float(np.sum(plus) / np.sum(minus))
    T = plus - beta * minus
    T = T - np.mean(T)
    return T, beta


def make_T_smooth(n: int, d: int, c: float = 4.0, radius_factor: float = 1.0,
                  grid: int = 256, ramp: float = math.pi / 4) -> SmoothTField:
    """T_n = T+ - beta T-: plateau bump of height 1/n on [0, pi]^d and a
    radial bump of height c/sqrt(n) and radius radius_factor * n^(-1/(2d))
    centred at (-pi/2, ..., -pi/2)."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    R = radius_factor * n ** (-1.0 / (2 * d))
    if R > math.pi / 2:
        raise BallDoesNotFit(f"radius {R:.4g} exceeds pi/2; the ball leaves [-pi, 0]^d")
    if R < 4 * TWO_PI / grid:
        raise ValueError(f"grid of {grid} points does not resolve a ball of radius {R:.3g}")
    axes = grid_axes([grid] * d)
    plus = plateau_bump(axes, ramp) / n
    minus = ball_bump(axes, [-math.pi / 2] * d, R) * (c / math.sqrt(n))
    T, beta = _assemble(plus, minus)
    f = TorusField(T)
    imin, imax = np.unravel_index(np.argmin(T), T.shape), np.unravel_index(np.argmax(T), T.shape)
    pos = lambda idx: [float(a[i]) for a, i in zip(axes, idx)]
    rep = criterion_check(f.min, f.max, {"argmin": pos(imin), "argmax": pos(imax)})
    return SmoothTField(f, n, c, beta, R, rep, float(plus.max()), float(minus.max()))


def smooth_threshold(d: int, c: float = 4.0, radius_factor: float = 1.0, n_max: int = 4096,
                     grid: int = 256) -> tuple:
    """Smallest n on the doubling ladder 1, 2, 4, ... from which the
    criterion holds up to n_max, with the margins met along the way.

    The ladder stops early once the grid no longer resolves the ball."""
    rows = []
    n = 1
    while n <= n_max:
        try:
            r = make_T_smooth(n, d, c, radius_factor, grid).report
            rows.append((n, r.holds, r.margin))
        except BallDoesNotFit:
            rows.append((n, False, float("nan")))
        except ValueError:
            break
        n *= 2
    thr = None
    for i in range(len(rows) - 1, -1, -1):
        if not rows[i][1]:
            break
        thr = rows[i][0]
    return thr, rows


# ------------------------------------------------------------ analytic

@dataclass
class AnalyticTField:
    poly: TrigPolyND                # normalised, zero mean
    n: int
    d: int
    k: int
    eps: float
    N: int                          # per-axis degree 2m - 1
    approx_error: float             # sup |T~ - P_m T~| before normalisation
    beta: float
    radius: float
    min_T: float
    max_T: float
    report: CriterionReport
    C_nn: float                     # N / n^(1/d + 1/k)
    threshold: Optional[int] = None


def analytic_threshold(eps: float, max_ratio: float, n_max: int = 2 ** 40) -> Optional[int]:
    """Smallest n on the doubling ladder where the criterion holds for
    min = -n^(eps-1), max = max_ratio * n^(eps-2), the normalised extremes."""
    n = 1
    while n <= n_max:
        r = criterion_check(-n ** (eps - 1.0), max_ratio * n ** (eps - 2.0))
        if r.holds:
            return n
        n *= 2
    return None


def make_T_analytic(n: int, d: int, k: int, eps: float, sigma: float = 0.1,
                    grid: int = 256, degree_cap: int = 512, radius_factor: Optional[float] = None,
                    ramp: float = math.pi / 4) -> AnalyticTField:
    """Trig-polynomial trace field: approximate T~ = T~+ - beta T~- (plateau
    of height 1, ball of height n and radius ~ n^(-1/d)) by P_m with the
    smallest m whose sup error is below sigma, zero the constant term and
    scale by 1 / (n^(1-eps) max |p_N|).

    The default radius factor makes the continuous masses of the two bumps
    equal, so beta = 1 up to discretisation.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if radius_factor is None:
        radius_factor = (plateau_mass(d, ramp) / unit_ball_mass(d)) ** (1.0 / d)
    R = radius_factor * n ** (-1.0 / d)
    if R > math.pi / 2:
        raise BallDoesNotFit(f"radius {R:.4g} exceeds pi/2; the ball leaves [-pi, 0]^d")
    axes = grid_axes([grid] * d)
    plus = plateau_bump(axes, ramp)
    minus = ball_bump(axes, [-math.pi / 2] * d, R) * n
    T, beta = _assemble(plus, minus)
    base = TrigPolyND.from_samples(T)
    m = 1
    while True:
        N = 2 * m - 1
        if N > degree_cap or 2 * N + 1 > grid:
            raise DegreeOverflow(f"degree {N} needed beyond cap {degree_cap} or grid {grid}")
        pN = vallee_poussin_nd(base, [m] * d)
        err = float(np.max(np.abs(pN.on_grid(T.shape) - T)))
        if err < sigma:
            break
        m += 1
    c = pN.coeffs.copy()
    c[pN.half_sizes] = 0.0
    pN = TrigPolyND(c)
    amax = sup_abs(pN)[0]
    p = pN * (1.0 / (n ** (1.0 - eps) * amax))
    vals = p.on_grid([max(4 * (2 * N + 1), 64)] * d)
    mn, mx = float(vals.min()), float(vals.max())
    # refine extremes with the Newton search of sup_abs
    pos_part = sup_abs(p)[0]
    if -mn >= mx:
        mn = -pos_part
    rep = criterion_check(mn, mx)
    thr = analytic_threshold(eps, mx * n ** (2.0 - eps))
    return AnalyticTField(p, n, d, k, eps, N, err, beta, R, mn, mx, rep,
                          N / n ** (1.0 / d + 1.0 / k), thr)


# ------------------------------------------------------------- Poisson

def poisson_solve(T: Union[TorusField, TrigPolyND], d: Optional[int] = None,
                  mean_tol: float = MEAN_TOL):
    """Zero-mean Psi with (1/d) Laplacian Psi = T; returns the input's type."""
    if isinstance(T, TrigPolyND):
        dim = T.d if d is None else d
        if abs(T.mean) > mean_tol:
            raise NonzeroMean(f"mean {T.mean:.3e} exceeds {mean_tol:g}")
        grids = np.meshgrid(*[T.freqs(a) for a in range(T.d)], indexing="ij")
        k2 = sum(g * g for g in grids).astype(float)
        k2[T.half_sizes] = 1.0
        c = -dim * T.coeffs / k2
        c[T.half_sizes] = 0.0
        return TrigPolyND(c)
    dim = T.d if d is None else d
    if abs(T.mean) > mean_tol:
        raise NonzeroMean(f"mean {T.mean:.3e} exceeds {mean_tol:g}")
    k2 = sum(k * k for k in T.wavenumbers())
    k2.flat[0] = 1.0
    spec = -dim * T.spectrum / k2
    spec.flat[0] = 0.0
    return TorusField.from_spectrum(spec)


def poisson_residual(Psi, T, d: Optional[int] = None) -> float:
    """sup |(1/d) Laplacian Psi - T|."""
    if isinstance(Psi, TrigPolyND):
        dim = Psi.d if d is None else d
        lap = sum((Psi.derivative(a, 2) for a in range(Psi.d)), TrigPolyND(np.zeros([1] * Psi.d)))
        diff = lap * (1.0 / dim) - T
        shape = [max(64, 4 * D + 2) for D in diff.half_sizes]
        return float(np.max(np.abs(diff.on_grid(shape))))
    dim = Psi.d if d is None else d
    return float(np.max(np.abs(Psi.laplacian().samples / dim - T.samples)))


# ----------------------------------------------------------- conjugacy

class CircleLift:
    """g(x) = x + c0 + sum_k a_k cos(kx) + b_k sin(kx), a lift of a circle map of period 2 pi."""

    def __init__(self, c0: float = 0.0, cos_coeffs=(), sin_coeffs=()):
        self.c0 = float(c0)
        a = np.asarray(cos_coeffs, dtype=float)
        b = np.asarray(sin_coeffs, dtype=float)
        K = max(a.size, b.size)
        self.a = np.pad(a, (0, K - a.size))
        self.b = np.pad(b, (0, K - b.size))

    @classmethod
    def from_params(cls, theta: np.ndarray, K: int) -> "CircleLift":
        return cls(theta[0], theta[1:K + 1], theta[K + 1:2 * K + 1])

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        out = (x + self.c0) if order == 0 else (np.ones_like(x) if order == 1 else np.zeros_like(x))
        for j, (aj, bj) in enumerate(zip(self.a, self.b), start=1):
            ph = j * x + order * math.pi / 2
            out = out + j ** order * (aj * np.cos(ph) + bj * np.sin(ph))
        return out

    def slope_bounds(self, n_grid: int = 1024):
        x = TWO_PI * np.arange(n_grid) / n_grid
        s = self(x, 1)
        return float(s.min()), float(s.max())


def _as_lift(g, n_grid: int) -> Callable:
    if callable(g):
        return g
    vals = np.asarray(g, dtype=float)
    x = TWO_PI * np.arange(vals.size) / vals.size
    p = TrigPolyND.from_samples(vals - x)
    return lambda z: np.asarray(z, dtype=float) + p(np.atleast_1d(np.asarray(z, dtype=float))).reshape(np.shape(z))


def check_lift(g: Callable, n_grid: int = 1024, tol: float = 1e-9):
    x = TWO_PI * np.arange(n_grid + 1) / n_grid
    gx = np.asarray(g(x), dtype=float)
    if not np.all(np.diff(gx) > 0):
        raise NotMonotone("g is not strictly increasing on the sample grid")
    if abs(float(g(np.array([TWO_PI]))[0] - g(np.array([0.0]))[0]) - TWO_PI) > tol:
        raise NotMonotone("g(x + 2 pi) != g(x) + 2 pi")


def invert_lift(g: Callable, y: np.ndarray, iters: int = 80) -> np.ndarray:
    """Vectorised bisection for g(z) = y, valid for increasing lifts of degree one."""
    y = np.asarray(y, dtype=float)
    xs = TWO_PI * np.arange(256) / 256
    dev = float(np.max(np.abs(g(xs) - xs)))
    lo = y - dev - 1.0
    hi = y + dev + 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = g(mid) > y
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.max(hi - lo) < 1e-15 * max(1.0, float(np.max(np.abs(y)))):
            break
    return 0.5 * (lo + hi)


def conjugacy_residuals(phi: Callable, g, n_grid: int = 256) -> np.ndarray:
    """(g(x) + g^{-1}(x))/2 - x - phi(x)/2 on the uniform grid of [0, 2 pi)."""
    gl = _as_lift(g, n_grid)
    check_lift(gl)
    x = TWO_PI * np.arange(n_grid) / n_grid
    ph = phi.deriv(x, 1) if isinstance(phi, PeriodicPotential) else np.asarray(phi(x), dtype=float)
    return 0.5 * (gl(x) + invert_lift(gl, x)) - x - 0.5 * ph


def conjugacy_residual(phi: Callable, g, n_grid: int = 256) -> float:
    """sup |(g + g^{-1})/2 - Id - phi/2|.

    ``phi`` is a callable of x or a potential whose derivative is phi;
    ``g`` a callable lift or its samples on the uniform grid.
    """
    return float(np.max(np.abs(conjugacy_residuals(phi, g, n_grid))))


@dataclass
class ConjugacySearch:
    best_residual: float
    best_lift: CircleLift
    residuals: list                 # per start


def search_conjugacy(phi: Callable, K: int = 8, n_starts: int = 8, n_grid: int = 128,
                     seed: int = 0) -> ConjugacySearch:
    """Minimise the conjugacy residual over lifts x + sum_{|k| <= K} c_k e^{ikx}.

    Least squares on the residual vector from several random starts, each
    kept inside the monotone lifts; the reported value is the sup residual
    of the best lift found.  It is an upper bound for the infimum over the
    family, and a value bounded away from zero is evidence (not proof) that
    no invariant graph exists.
    """
    rng = np.random.default_rng(seed)
    x = TWO_PI * np.arange(n_grid) / n_grid
    ph = phi.deriv(x, 1) if isinstance(phi, PeriodicPotential) else np.asarray(phi(x), dtype=float)
    jk = np.arange(1, K + 1)

    def resid(theta):
        g = CircleLift.from_params(theta, K)
        s = g(x, 1)
        if s.min() <= 0.02:
            return np.full(n_grid, 10.0) + (0.02 - s.min()) * 100
        r = 0.5 * (g(x) + invert_lift(g, x, iters=60)) - x - 0.5 * ph
        return r

    best, best_theta, per = math.inf, None, []
    for s in range(n_starts):
        theta0 = np.zeros(2 * K + 1)
        if s:
            theta0[1:] = rng.normal(scale=0.1, size=2 * K) / np.concatenate([jk, jk]) ** 2
        sol = optimize.least_squares(resid, theta0, method="trf", xtol=1e-12, ftol=1e-12,
                                     max_nfev=400)
        val = float(np.max(np.abs(resid(sol.x))))
        per.append(val)
        if val < best:
            best, best_theta = val, sol.x
    return ConjugacySearch(best, CircleLift.from_params(best_theta, K), per)
