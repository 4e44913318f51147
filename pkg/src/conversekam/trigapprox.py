"""Trigonometric polynomials on the d-torus and the Fejer / de la Vallee Poussin means.

Operators act on Fourier coefficients: the Fejer mean F_m multiplies the
coefficient of frequency k (along one axis) by max(0, 1 - |k|/m), and the
de la Vallee Poussin mean P_m = 2 F_2m - F_m by

    w_m(k) = 1 for |k| <= m,  2 - |k|/m for m < |k| < 2m,  0 otherwise.

Inputs given as samples are converted with an FFT, so a non-band-limited
function is represented by the trigonometric interpolant of its samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

TWO_PI = 2 * np.pi
OVERSAMPLE = 8          # grid points per unit of operator order along an axis


class GridTooCoarse(ValueError):
    pass


class TrigPolyND:
    """Real trigonometric polynomial on [0, 2 pi)^d.

    ``coeffs`` has shape (2 D_1 + 1, ..., 2 D_d + 1); entry k + D holds the
    complex coefficient of exp(i <k, x>).
    """

    def __init__(self, coeffs: np.ndarray):
        c = np.asarray(coeffs, dtype=complex)
        if any(s % 2 == 0 for s in c.shape):
            raise ValueError("coefficient array needs odd length along every axis")
        self.coeffs = c

    # construction -----------------------------------------------------
    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "TrigPolyND":
        """Interpolant of samples on the uniform grid; Nyquist modes are dropped."""
        s = np.asarray(samples, dtype=float)
        spec = np.fft.fftn(s) / s.size
        degs = [(n - 1) // 2 for n in s.shape]
        idx = np.ix_(*[np.arange(-D, D + 1) % n for D, n in zip(degs, s.shape)])
        c = spec[idx]
        return cls(0.5 * (c + np.conj(c[tuple(slice(None, None, -1) for _ in c.shape)])))

    @classmethod
    def from_function(cls, f: Callable, shape: Sequence[int]) -> "TrigPolyND":
        return cls.from_samples(f(*grid_points(shape)))

    @classmethod
    def from_cos_sin_1d(cls, cos_coeffs=(), sin_coeffs=(), const=0.0) -> "TrigPolyND":
        a = np.asarray(cos_coeffs, dtype=float)
        b = np.asarray(sin_coeffs, dtype=float)
        D = max(a.size, b.size)
        c = np.zeros(2 * D + 1, dtype=complex)
        c[D] = const
        for k in range(1, D + 1):
            ak = a[k - 1] if k <= a.size else 0.0
            bk = b[k - 1] if k <= b.size else 0.0
            c[D + k], c[D - k] = 0.5 * (ak - 1j * bk), 0.5 * (ak + 1j * bk)
        return cls(c)

    # basic properties --------------------------------------------------
    @property
    def d(self) -> int:
        return self.coeffs.ndim

    @property
    def half_sizes(self) -> tuple:
        return tuple(s // 2 for s in self.coeffs.shape)

    def degrees(self, tol: float = 0.0) -> tuple:
        """Largest |k_j| carrying a coefficient above tol, per axis."""
        out = []
        mag = np.abs(self.coeffs)
        for ax, D in enumerate(self.half_sizes):
            other = tuple(a for a in range(self.d) if a != ax)
            m = mag.max(axis=other) if other else mag
            nz = np.nonzero(m > tol)[0]
            out.append(int(np.max(np.abs(nz - D))) if nz.size else 0)
        return tuple(out)

    def freqs(self, axis: int) -> np.ndarray:
        D = self.half_sizes[axis]
        return np.arange(-D, D + 1)

    def is_real(self, tol: float = 1e-14) -> bool:
        flip = self.coeffs[tuple(slice(None, None, -1) for _ in range(self.d))]
        return bool(np.max(np.abs(self.coeffs - np.conj(flip)), initial=0.0)
                    <= tol * max(1.0, np.abs(self.coeffs).max()))

    @property
    def mean(self) -> float:
        return float(self.coeffs[self.half_sizes].real)

    # algebra -----------------------------------------------------------
    def padded(self, half_sizes: Sequence[int]) -> "TrigPolyND":
        H = tuple(max(a, b) for a, b in zip(half_sizes, self.half_sizes))
        out = np.zeros([2 * h + 1 for h in H], dtype=complex)
        sl = tuple(slice(h - D, h + D + 1) for h, D in zip(H, self.half_sizes))
        out[sl] = self.coeffs
        return TrigPolyND(out)

    def truncated(self, half_sizes: Sequence[int]) -> "TrigPolyND":
        sl = tuple(slice(D - min(D, h), D + min(D, h) + 1)
                   for D, h in zip(self.half_sizes, half_sizes))
        return TrigPolyND(self.coeffs[sl].copy())

    def __add__(self, other):
        if np.isscalar(other):
            out = self.coeffs.copy()
            out[self.half_sizes] += other
            return TrigPolyND(out)
        H = tuple(max(a, b) for a, b in zip(self.half_sizes, other.half_sizes))
        return TrigPolyND(self.padded(H).coeffs + other.padded(H).coeffs)

    __radd__ = __add__

    def __neg__(self):
        return TrigPolyND(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if np.isscalar(other):
            return TrigPolyND(self.coeffs * other)
        from scipy.signal import fftconvolve
        if self.d == 1:
            return TrigPolyND(np.convolve(self.coeffs, other.coeffs))
        return TrigPolyND(fftconvolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def weighted(self, axis: int, w: Callable[[np.ndarray], np.ndarray]) -> "TrigPolyND":
        """Multiply the coefficient of frequency k along axis by w(k)."""
        shape = [1] * self.d
        shape[axis] = -1
        return TrigPolyND(self.coeffs * w(self.freqs(axis)).reshape(shape))

    def derivative(self, axis: int = 0, order: int = 1) -> "TrigPolyND":
        return self.weighted(axis, lambda k: (1j * k) ** order)

    def squeezed(self) -> "TrigPolyND":
        """Drop outer frequencies whose coefficients are all zero."""
        return self.truncated(self.degrees())

    # evaluation --------------------------------------------------------
    def on_grid(self, shape: Sequence[int]) -> np.ndarray:
        """Values on the uniform grid of the given shape (exact for shape > 2 D)."""
        shape = tuple(int(n) for n in shape)
        if any(n <= 2 * D for n, D in zip(shape, self.half_sizes)):
            return self(np.stack([g.ravel() for g in grid_points(shape)], axis=-1)).reshape(shape)
        spec = np.zeros(shape, dtype=complex)
        idx = np.ix_(*[np.arange(-D, D + 1) % n for D, n in zip(self.half_sizes, shape)])
        spec[idx] = self.coeffs
        return np.real(np.fft.ifftn(spec)) * np.prod(shape)

    def __call__(self, points) -> np.ndarray:
        """Values at points of shape (n, d) (or (n,) when d = 1)."""
        pts = np.asarray(points, dtype=float)
        if self.d == 1:
            pts = pts.reshape(-1, 1) if pts.ndim <= 1 else pts
        letters = "abcdefgh"[: self.d]
        factors = [np.exp(1j * np.multiply.outer(pts[:, ax], self.freqs(ax))) for ax in range(self.d)]
        expr = ",".join("n" + l for l in letters) + "," + letters + "->n"
        out = np.einsum(expr, *factors, self.coeffs, optimize=True)
        return np.real(out)

    def sup_norm(self, oversample: int = OVERSAMPLE, refine: bool = True) -> float:
        return sup_abs(self, oversample, refine)[0]


def grid_points(shape: Sequence[int]):
    axes = [TWO_PI * np.arange(n) / n for n in shape]
    return np.meshgrid(*axes, indexing="ij")


def _grid_shape(p: TrigPolyND, oversample: int) -> tuple:
    return tuple(max(64, oversample * (2 * D + 1)) for D in p.half_sizes)


def sup_abs(p: TrigPolyND, oversample: int = OVERSAMPLE, refine: bool = True, n_cand: int = 12):
    """max |p| with its location: dense grid, then Newton on the candidates."""
    shape = _grid_shape(p, oversample)
    vals = p.on_grid(shape)
    a = np.abs(vals).ravel()
    top = np.argsort(a)[::-1][:n_cand] if refine else np.argsort(a)[::-1][:1]
    best_v = float(a[top[0]])
    best_x = np.array(np.unravel_index(top[0], shape)) * TWO_PI / np.array(shape)
    if not refine:
        return best_v, best_x
    grads = [p.derivative(j) for j in range(p.d)]
    hess = [[grads[i].derivative(j) for j in range(p.d)] for i in range(p.d)]
    for t in top:
        x = np.array(np.unravel_index(t, shape)) * TWO_PI / np.array(shape)
        for _ in range(8):
            g = np.array([gj(x[None])[0] for gj in grads])
            H = np.array([[hij(x[None])[0] for hij in row] for row in hess])
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
            if np.max(np.abs(step)) > TWO_PI / min(shape):
                break
            x = x - step
            if np.max(np.abs(step)) < 1e-13:
                break
        v = abs(float(p(x[None])[0]))
        if v > best_v:
            best_v, best_x = v, np.mod(x, TWO_PI)
    return best_v, best_x


# ------------------------------------------------------------ operators

def fejer_weights(m: int) -> Callable:
    return lambda k: np.maximum(0.0, 1.0 - np.abs(k) / m)


def vallee_poussin_weights(m: int) -> Callable:
    return lambda k: 2 * np.maximum(0.0, 1.0 - np.abs(k) / (2 * m)) - np.maximum(0.0, 1.0 - np.abs(k) / m)


FunctionLike = Union[TrigPolyND, np.ndarray, Callable]


def as_trigpoly(f: FunctionLike, orders: Sequence[int], shape: Optional[Sequence[int]] = None,
                d: Optional[int] = None) -> TrigPolyND:
    """Coefficients of f, checking that sampled inputs resolve the operator orders."""
    if isinstance(f, TrigPolyND):
        return f
    if callable(f):
        dim = d if d is not None else len(orders)
        if shape is None:
            shape = [max(64, 2 ** int(np.ceil(np.log2(2 * OVERSAMPLE * m)))) for m in orders]
        shape = list(shape) + [shape[-1]] * (dim - len(shape))
        samples = f(*grid_points(shape))
    else:
        samples = np.asarray(f, dtype=float)
    for ax, m in enumerate(orders):
        if m and samples.shape[ax] < OVERSAMPLE * m:
            raise GridTooCoarse(f"axis {ax} has {samples.shape[ax]} samples, need >= {OVERSAMPLE * m}")
    return TrigPolyND.from_samples(samples)


def fejer(f: FunctionLike, m: int, axis: int = 0, shape=None) -> TrigPolyND:
    """m-th Fejer mean along one axis (degree <= m - 1 along it)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    orders = [0] * (axis + 1)
    orders[axis] = m
    p = as_trigpoly(f, orders, shape)
    half = list(p.half_sizes)
    half[axis] = min(half[axis], m - 1)
    return p.weighted(axis, fejer_weights(m)).truncated(half)


def vallee_poussin(f: FunctionLike, m: int, axis: int = 0, shape=None) -> TrigPolyND:
    """P_m = 2 F_2m - F_m along one axis (degree <= 2m - 1 along it)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    orders = [0] * (axis + 1)
    orders[axis] = m
    p = as_trigpoly(f, orders, shape)
    half = list(p.half_sizes)
    half[axis] = min(half[axis], 2 * m - 1)
    return p.weighted(axis, vallee_poussin_weights(m)).truncated(half)


def vallee_poussin_nd(f: FunctionLike, m_vec: Sequence[int], shape=None) -> TrigPolyND:
    """Compose P_{m_j} over all axes."""
    m_vec = [int(m) for m in m_vec]
    if min(m_vec) < 1:
        raise ValueError("all orders must be >= 1")
    p = as_trigpoly(f, m_vec, shape, d=len(m_vec))
    if p.d != len(m_vec):
        raise ValueError(f"{len(m_vec)} orders for a {p.d}-dimensional input")
    for ax, m in enumerate(m_vec):
        p = vallee_poussin(p, m, ax)
    return p


def fejer_by_quadrature(f: Callable[[np.ndarray], np.ndarray], m: int, x: float) -> float:
    """Fejer mean of a 1-D function by direct quadrature of the kernel integral.

    (1 / (m pi)) * int_{-pi/2}^{pi/2} f(x + 2t) (sin(mt) / sin(t))**2 dt
    """
    from scipy.integrate import quad

    def kern(t):
        st = np.sin(t)
        return m * m if abs(st) < 1e-12 else (np.sin(m * t) / st) ** 2

    val, _ = quad(lambda t: f(x + 2 * t) * kern(t), -np.pi / 2, np.pi / 2,
                  limit=400, epsabs=1e-14, epsrel=1e-13, points=[0.0])
    return val / (m * np.pi)


# ------------------------------------------------------------- Jackson

@dataclass
class JacksonReport:
    m_vec: tuple
    r_vec: tuple
    achieved_error: float
    bound_terms: tuple
    C_d: float                       # achieved_error / sum(bound_terms)

    @property
    def bound(self) -> float:
        return self.C_d * float(sum(self.bound_terms))


def jackson_report(f: FunctionLike, m_vec: Sequence[int], r_vec: Sequence[int],
                   shape: Optional[Sequence[int]] = None,
                   deriv_norms: Optional[Sequence[float]] = None) -> JacksonReport:
    """Sup error of P_m f on a dense grid against the terms m_j^-r_j ||d^r_j f / dx_j^r_j||.

    ``deriv_norms`` overrides the spectral derivative norms, which is needed
    when f is not smooth enough for spectral differentiation to be reliable.
    The reported C_d is the smallest constant for which the bound holds.
    """
    m_vec = tuple(int(m) for m in m_vec)
    r_vec = tuple(int(r) for r in r_vec)
    d = len(m_vec)
    if shape is None:
        shape = [max(256, 2 ** int(np.ceil(np.log2(16 * m)))) for m in m_vec]
    if isinstance(f, TrigPolyND):
        p = f
        shape = [max(n, 4 * D + 2) for n, D in zip(shape, p.half_sizes)]
        samples = p.on_grid(shape)
    else:
        samples = f(*grid_points(shape)) if callable(f) else np.asarray(f, dtype=float)
        p = TrigPolyND.from_samples(samples)
    approx = vallee_poussin_nd(p, m_vec).on_grid(samples.shape)
    err = float(np.max(np.abs(samples - approx)))
    if deriv_norms is None:
        deriv_norms = [float(np.max(np.abs(p.derivative(j, r).on_grid(samples.shape))))
                       for j, r in enumerate(r_vec)]
    terms = tuple(float(m) ** (-r) * float(nrm) for m, r, nrm in zip(m_vec, r_vec, deriv_norms))
    total = sum(terms)
    return JacksonReport(m_vec, r_vec, err, terms, err / total if total > 0 else np.inf)


def random_trig_poly(rng: np.random.Generator, degrees: Sequence[int]) -> TrigPolyND:
    """Random real trig polynomial with the given per-axis degrees."""
    shape = [2 * D + 1 for D in degrees]
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    flip = c[tuple(slice(None, None, -1) for _ in shape)]
    return TrigPolyND(0.5 * (c + np.conj(flip)))


# --------------------------------------------------------- test function

def periodic_bspline(x, spacing: float = math.pi / 2, deriv: int = 0) -> np.ndarray:
    """Quintic B-spline with knots at spacing * (-3..3), summed over its 2 pi translates.

    C^4 with a jump in the fifth derivative at the knots. For spacing = 2 pi / k
    the knots of all translates fall on one uniform grid.
    """
    from scipy.interpolate import BSpline
    if spacing <= 0 or not 0 <= deriv <= 5:
        raise ValueError("need spacing > 0 and 0 <= deriv <= 5")
    b = BSpline.basis_element(spacing * (np.arange(7) - 3.0), extrapolate=False)
    if deriv:
        b = b.derivative(deriv)
    t = np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi
    J = int(math.ceil(3 * spacing / TWO_PI)) + 1
    return sum(np.nan_to_num(b(t + TWO_PI * j)) for j in range(-J, J + 1))


def periodic_bspline_sup(deriv: int, spacing: float = math.pi / 2, n_grid: int = 2 ** 14) -> float:
    """sup |f^(deriv)| of periodic_bspline; the fifth derivative is piecewise constant."""
    knots = np.unique(np.mod(spacing * np.arange(-3, 4) + np.pi, TWO_PI)) - np.pi
    if deriv == 5:
        cuts = np.append(knots, knots[0] + TWO_PI)
        x = 0.5 * (cuts[:-1] + cuts[1:])
    else:
        x = np.concatenate([TWO_PI * np.arange(n_grid) / n_grid - np.pi, knots])
    return float(np.max(np.abs(periodic_bspline(x, spacing, deriv))))
