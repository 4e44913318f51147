"""Perturbation families: the cosine well u_n, the smooth bump v_n and its
analytic (trigonometric) counterpart, plus derivative-norm reports."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .trigapprox import TrigPolyND, sup_abs, vallee_poussin
from .twistmap import CosinePotential, PeriodicPotential, TrigPotential

DEGREE_CAP = 4096


class SupportTooWide(ValueError):
    pass


class DegreeOverflow(ValueError):
    pass


def make_u(n: int, a: float) -> CosinePotential:
    """u_n(x) = n^-a (1 - cos 2 pi x)."""
    if n < 1 or a <= 0:
        raise ValueError("need n >= 1 and a > 0")
    return CosinePotential(float(n) ** (-a), period=1.0)


# ----------------------------------------------------------------- bump

def _mollifier_numerators(kmax: int) -> list:
    """N_k with g^(k)(t) = N_k(t) (1 - t^2)^(-2k) g(t), g(t) = exp(1 - 1/(1 - t^2))."""
    s = Polynomial([1.0, 0.0, -1.0])     # 1 - t^2
    t = Polynomial([0.0, 1.0])
    out = [Polynomial([1.0])]
    for k in range(kmax):
        Nk = out[-1]
        out.append(Nk.deriv() * s * s + 4 * k * t * Nk * s - 2 * t * Nk)
    return out


_NUMS = _mollifier_numerators(8)


def mollifier(t, order: int = 0):
    """Derivatives of exp(1 - 1/(1 - t^2)) on |t| < 1, zero outside."""
    t = np.asarray(t, dtype=float)
    s = 1.0 - t * t
    inside = s > 0
    ss = np.where(inside, s, 1.0)
    logmag = 1.0 - 1.0 / ss - 2 * order * np.log(ss)
    val = _NUMS[order](t) * np.exp(np.minimum(logmag, 700.0))
    return np.where(inside, val, 0.0)


class BumpPotential(PeriodicPotential):
    """peak * g((x - center) / half_width), repeated with the given period."""

    def __init__(self, center: float, half_width: float, peak: float, period: float = 1.0):
        if not 0 < half_width <= period / 2:
            raise SupportTooWide(f"half width {half_width} does not fit in period {period}")
        self.center = float(center)
        self.w = float(half_width)
        self.peak = float(peak)
        self.period = float(period)

    def _eval(self, x, order):
        P = self.period
        t = (np.mod(x - self.center + P / 2, P) - P / 2) / self.w
        return self.peak * self.w ** (-order) * mollifier(t, order)

    def describe(self):
        return {"kind": "bump", "center": self.center, "half_width": self.w,
                "peak": self.peak, "period": self.period}


@dataclass(frozen=True)
class SmoothBumpParams:
    n: int
    a: float
    k: int

    @property
    def s(self) -> float:
        return (self.k + 2) * self.a

    @property
    def half_width(self) -> float:
        return float(self.n) ** (-self.a)

    def violations(self) -> list:
        out = []
        if self.n < 1:
            out.append("n must be a positive integer")
        if self.a <= 0:
            out.append("a must be positive")
        if self.k < 1:
            out.append("k must be a positive integer")
        if not out and self.half_width > 0.5:
            out.append(f"support half-width n^-a = {self.half_width:.4g} exceeds 1/2")
        return out


def make_bump_v(p: SmoothBumpParams) -> BumpPotential:
    """Mollifier bump centred at 1/2, support [1/2 - n^-a, 1/2 + n^-a], peak n^-s."""
    bad = p.violations()
    if bad:
        raise SupportTooWide("; ".join(bad))
    return BumpPotential(0.5, p.half_width, float(p.n) ** (-p.s), period=1.0)


def make_family(n: int, a: float, k: Optional[int] = None) -> PeriodicPotential:
    """u_n, or u_n + v_n when a smoothness order k is given."""
    u = make_u(n, a)
    return u if k is None else u + make_bump_v(SmoothBumpParams(n, a, k))


# ------------------------------------------------------------- analytic

@dataclass(frozen=True)
class AnalyticPerturbParams:
    n: int
    a: float
    k: int
    sigma: float
    degree_cap: int = DEGREE_CAP

    def violations(self) -> list:
        out = []
        if self.n < 1 or self.a <= 0 or self.k < 1:
            out.append("need n >= 1, a > 0, k >= 1")
        elif not 0 < self.sigma <= 0.5 * float(self.n) ** (-self.a / 2):
            out.append(f"sigma must lie in (0, n^(-a/2)/2 = {0.5 * self.n ** (-self.a / 2):.4g}]")
        return out

    @property
    def bump_length(self) -> float:
        """Length of the bump interval Lambda_n centred at 1/2."""
        return 0.5 * float(self.n) ** (-self.a / 2)


@dataclass
class AnalyticPerturbation:
    v: TrigPotential                # exp(-2N) carried in v.log_scale
    params: AnalyticPerturbParams
    N: int                          # degree of p_N
    p_error: float                  # sup |phi - p_N|
    p_max: float
    on_bump_max: float              # max of v on Lambda_n, unscaled (times exp(-2N))
    off_bump_max: float             # max |v| off Lambda_n, unscaled
    C_off: float                    # off_bump_max / (sigma^2 n^-a)
    C_degree: float                 # N / (sigma^(-1/k) n^(a/2))
    info: dict = field(default_factory=dict)

    @property
    def log_on_bump_max(self) -> float:
        return math.log(self.on_bump_max) + self.v.log_scale


def _jackson_target(p: AnalyticPerturbParams, n_samples: int) -> np.ndarray:
    half = p.bump_length / 2
    x = np.arange(n_samples) / n_samples
    return 2.0 * mollifier((x - 0.5) / half)


def make_analytic_v(p: AnalyticPerturbParams, n_samples: int = 2 ** 14) -> AnalyticPerturbation:
    """v = u_n * exp(-2N) (p_N / max p_N)^2 with p_N a de la Vallee Poussin
    approximation of a peak-2 bump on Lambda_n.

    N is the smallest degree 2m - 1 whose approximation error is below sigma.
    """
    bad = p.violations()
    if bad:
        raise ValueError("; ".join(bad))
    phi = _jackson_target(p, n_samples)
    base = TrigPolyND.from_samples(phi)
    m = 1
    while True:
        N = 2 * m - 1
        if 2 * N + 1 > p.degree_cap:
            raise DegreeOverflow(f"degree 2N+1 = {2 * N + 1} exceeds cap {p.degree_cap}")
        pN = vallee_poussin(base, m)
        err = float(np.max(np.abs(pN.on_grid([n_samples]) - phi)))
        if err < p.sigma:
            break
        m += 1 if m < 8 else max(1, m // 8)
    pmax = sup_abs(pN)[0]
    sq = (pN * (1.0 / pmax)) * (pN * (1.0 / pmax))
    ucoef = TrigPolyND(np.array([-0.5, 1.0, -0.5], dtype=complex) * float(p.n) ** (-p.a))
    prod = (ucoef * sq).squeezed()
    v = TrigPotential(prod.coeffs, period=1.0, log_scale=-2.0 * N)
    x = np.arange(n_samples) / n_samples
    vals = v.base_eval(x) if prod.half_sizes[0] > n_samples // 2 else v.samples(n_samples) * math.exp(2.0 * N)
    on = np.abs(x - 0.5) <= p.bump_length / 2
    on_max = float(np.max(vals[on]))
    off_max = float(np.max(np.abs(vals[~on])))
    na = float(p.n) ** (-p.a)
    return AnalyticPerturbation(
        v, p, N, err, pmax, on_max, off_max, off_max / (p.sigma ** 2 * na),
        N / (p.sigma ** (-1.0 / p.k) * float(p.n) ** (p.a / 2)),
        {"m": m, "degree": prod.degrees()[0]})


# ---------------------------------------------------------------- norms

@dataclass
class NormReport:
    orders: list
    sup_derivs: dict              # j -> sup |V^(j)|
    norms: dict                   # r -> C^r norm (upper bound for fractional r)
    strip: Optional[dict] = None  # r -> exp(r N) ||p||, and cosh-type exact value

    def as_rows(self):
        return [(r, self.norms[r]) for r in self.orders]


def _trig_of(V: PeriodicPotential):
    return V if isinstance(V, TrigPotential) else None


def sup_derivative(V: PeriodicPotential, j: int, n_grid: int = 2 ** 14, refine: bool = True) -> float:
    """sup |V^(j)| over one period: dense grid, then a local parabola fit."""
    L = V.period
    x = L * np.arange(n_grid) / n_grid
    if isinstance(V, TrigPotential) and j > 4:
        vals = V.samples(n_grid, 0)
        k = np.fft.fftfreq(n_grid, d=1.0 / n_grid) * 2 * np.pi / L
        vals = np.real(np.fft.ifft(np.fft.fft(vals) * (1j * k) ** j))
    elif j > 4:
        vals = V(x)
        k = np.fft.fftfreq(n_grid, d=1.0 / n_grid) * 2 * np.pi / L
        vals = np.real(np.fft.ifft(np.fft.fft(vals) * (1j * k) ** j))
    else:
        vals = V.samples(n_grid, j) if isinstance(V, TrigPotential) else V.deriv(x, j)
    a = np.abs(vals)
    i = int(np.argmax(a))
    best = float(a[i])
    if refine and j <= 3:
        h = L / n_grid
        y0, y1, y2 = (abs(float(V.deriv(x[i] + s * h, j))) for s in (-1, 0, 1))
        den = y0 - 2 * y1 + y2
        if den < 0:
            t = 0.5 * (y0 - y2) / den
            if abs(t) <= 1:
                best = max(best, abs(float(V.deriv(x[i] + t * h, j))))
    return best


def norm_report(V: PeriodicPotential, orders: Sequence[float], strip_r: Optional[float] = None,
                n_grid: int = 2 ** 14) -> NormReport:
    """C^r norms max_{j <= r} sup|V^(j)| for integer r; for r = j + theta the
    interpolation bound ||V||_{C^j} + 2 sup|V^(j)|^(1-theta) sup|V^(j+1)|^theta."""
    orders = list(orders)
    need = sorted({j for r in orders for j in range(int(math.floor(r)) + 2)})
    sups = {j: sup_derivative(V, j, n_grid) for j in need}
    norms = {}
    for r in orders:
        j = int(math.floor(r))
        theta = r - j
        cj = max(sups[i] for i in range(j + 1))
        if theta == 0:
            norms[r] = cj
        else:
            norms[r] = cj + 2 * sups[j] ** (1 - theta) * sups[j + 1] ** theta
    strip = None
    if strip_r is not None:
        T = _trig_of(V)
        if T is None:
            raise ValueError("strip norms need a trigonometric polynomial")
        N = T.degree
        sup0 = sup_derivative(T, 0, n_grid)
        k = T.frequencies()
        # sup over the strip |Im x| <= r (theta units) bounded by sum |c_k| cosh(k r)
        exact = float(np.exp(T.log_scale) * np.sum(np.abs(T.coeffs) * np.cosh(k * strip_r)))
        strip = {"r": strip_r, "N": N, "bound": math.exp(strip_r * N) * sup0,
                 "coefficient_sum": exact}
    return NormReport(orders, sups, norms, strip)


def strip_sup(T: TrigPotential, r: float, n_grid: int = 4096) -> float:
    """sup of |T| on the line Im(theta) = r (and -r), theta = 2 pi x / period."""
    k = T.frequencies()
    th = 2 * np.pi * np.arange(n_grid) / n_grid
    best = 0.0
    for s in (r, -r):
        z = np.exp(1j * np.multiply.outer(th, k)) * np.exp(-k * s)
        best = max(best, float(np.max(np.abs(z @ T.coeffs))))
    return best * math.exp(T.log_scale)
