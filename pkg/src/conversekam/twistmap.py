"""Generating functions and iteration for mechanical twist maps.

Every map here is generated by

    h(x, x') = (x - x')**2 / 2 + V(x')

with V periodic, which gives the explicit map

    f(x, y) = (x + y, y + V'(x + y)).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_ORDER = 4
LIFT_BOUND = 1e12


class PeriodicPotential:
    """Base class for periodic potentials V with derivatives up to order 4.

    Subclasses implement ``_eval(x, order)``; ``period`` is the smallest
    translation under which the potential is invariant and also the unit
    in which rotation symbols are measured.
    """

    period: float = 1.0

    def _eval(self, x: np.ndarray, order: int) -> np.ndarray:
        raise NotImplementedError

    def deriv(self, x, order: int = 1):
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"derivative order {order} outside 0..{MAX_ORDER}")
        xa = np.asarray(x, dtype=float)
        out = self._eval(xa, order)
        return out if xa.ndim else float(out)

    def __call__(self, x):
        return self.deriv(x, 0)

    def __add__(self, other: "PeriodicPotential") -> "PeriodicPotential":
        return SumPotential([self, other])

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "period": self.period}


class ZeroPotential(PeriodicPotential):
    """V = 0, the integrable shear."""

    def __init__(self, period: float = 1.0):
        self.period = float(period)

    def _eval(self, x, order):
        return np.zeros_like(x)


class CosinePotential(PeriodicPotential):
    """V(x) = amp * (1 - cos(2 pi x / period))."""

    def __init__(self, amp: float, period: float = 1.0):
        self.amp = float(amp)
        self.period = float(period)

    def _eval(self, x, order):
        w = 2 * np.pi / self.period
        if order == 0:
            return self.amp * (1.0 - np.cos(w * x))
        # d^k/dx^k of -cos(wx) = -w^k cos(wx + k pi/2)
        return -self.amp * w**order * np.cos(w * x + order * np.pi / 2)

    def describe(self):
        return {"kind": "cosine", "amp": self.amp, "period": self.period}


class TrigPotential(PeriodicPotential):
    """Real trigonometric polynomial in x with the given period.

    ``coeffs[k + N]`` holds the complex coefficient of exp(i k theta),
    theta = 2 pi x / period, for k = -N..N.  ``log_scale`` multiplies the
    whole polynomial by exp(log_scale), which lets tiny amplitudes such as
    exp(-2N) be carried without underflow in the coefficients.
    """

    def __init__(self, coeffs: Sequence[complex], period: float = 1.0, log_scale: float = 0.0):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise ValueError("coefficient array must have odd length 2N+1")
        N = c.size // 2
        if not np.allclose(c, np.conj(c[::-1]), atol=1e-14 * max(1.0, np.abs(c).max())):
            raise ValueError("coefficients are not Hermitian; polynomial would not be real")
        self.coeffs = 0.5 * (c + np.conj(c[::-1]))
        self.N = N
        self.period = float(period)
        self.log_scale = float(log_scale)

    @classmethod
    def from_cos_sin(cls, cos_coeffs=(), sin_coeffs=(), const=0.0, period=1.0, log_scale=0.0):
        """Build sum const + a_k cos(k theta) + b_k sin(k theta), k = 1, 2, ..."""
        a = np.asarray(cos_coeffs, dtype=float)
        b = np.asarray(sin_coeffs, dtype=float)
        N = max(a.size, b.size)
        c = np.zeros(2 * N + 1, dtype=complex)
        c[N] = const
        for k in range(1, N + 1):
            ak = a[k - 1] if k <= a.size else 0.0
            bk = b[k - 1] if k <= b.size else 0.0
            c[N + k] = 0.5 * (ak - 1j * bk)
            c[N - k] = 0.5 * (ak + 1j * bk)
        return cls(c, period=period, log_scale=log_scale)

    @property
    def degree(self) -> int:
        nz = np.nonzero(np.abs(self.coeffs) > 0)[0]
        return int(np.max(np.abs(nz - self.N))) if nz.size else 0

    def frequencies(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def base_eval(self, x, order: int = 0) -> np.ndarray:
        """Value (or derivative) without the exp(log_scale) factor."""
        x = np.asarray(x, dtype=float)
        k = self.frequencies()
        w = 2 * np.pi / self.period
        ck = self.coeffs * (1j * k * w) ** order
        # real part of sum_k c_k e^{i k w x}; done with cos/sin to stay real
        phase = np.multiply.outer(x, k * w)
        return np.cos(phase) @ ck.real - np.sin(phase) @ ck.imag

    def _eval(self, x, order):
        return np.exp(self.log_scale) * self.base_eval(x, order)

    def samples(self, n: int, order: int = 0) -> np.ndarray:
        """Values on the uniform grid x_j = j * period / n via an inverse FFT."""
        if n <= 2 * self.N:
            return self._eval(np.arange(n) * self.period / n, order)
        k = self.frequencies()
        w = 2 * np.pi / self.period
        spec = np.zeros(n, dtype=complex)
        spec[k % n] = self.coeffs * (1j * k * w) ** order
        return np.exp(self.log_scale) * np.real(np.fft.ifft(spec) * n)

    def describe(self):
        return {"kind": "trig", "degree": self.degree, "period": self.period,
                "log_scale": self.log_scale}


class SumPotential(PeriodicPotential):
    def __init__(self, parts: Sequence[PeriodicPotential]):
        flat = []
        for p in parts:
            flat.extend(p.parts if isinstance(p, SumPotential) else [p])
        periods = {round(p.period, 12) for p in flat}
        if len(periods) != 1:
            raise ValueError(f"summands have different periods: {sorted(periods)}")
        self.parts = flat
        self.period = flat[0].period

    def _eval(self, x, order):
        return sum(p._eval(x, order) for p in self.parts)

    def describe(self):
        return {"kind": "sum", "parts": [p.describe() for p in self.parts], "period": self.period}


class RescaledPotential(PeriodicPotential):
    """Q(x) = q**-2 * P(q x); the period shrinks by the factor q."""

    def __init__(self, base: PeriodicPotential, q: int):
        if q < 1:
            raise ValueError("q must be a positive integer")
        self.base = base
        self.q = int(q)
        self.period = base.period / q

    def _eval(self, x, order):
        q = self.q
        return q ** (order - 2.0) * self.base._eval(q * x, order)

    def describe(self):
        return {"kind": "rescaled", "q": self.q, "base": self.base.describe(), "period": self.period}


class GeneratingFunction:
    """h(x, x') = (x - x')**2 / 2 + V(x')."""

    def __init__(self, potential: PeriodicPotential | None = None):
        self.V = potential if potential is not None else ZeroPotential()

    @property
    def period(self) -> float:
        return self.V.period

    def __call__(self, x, xp):
        return 0.5 * (np.asarray(xp) - x) ** 2 + self.V(xp)

    def d1(self, x, xp):
        return np.asarray(x) - xp

    def d2(self, x, xp):
        return np.asarray(xp) - x + self.V.deriv(xp, 1)

    def d12(self, x, xp):
        return -np.ones_like(np.asarray(x, dtype=float) + np.asarray(xp, dtype=float))


@dataclass(frozen=True)
class PhasePoint:
    x: float
    y: float


class OrbitEscaped(ArithmeticError):
    """The lift coordinate left [-1e12, 1e12]; the orbit drifts without bound."""

    def __init__(self, step: int, x: float):
        super().__init__(f"orbit escaped the lift bound at step {step} (x={x:.3e})")
        self.step = step
        self.x = x


def map_step(h: GeneratingFunction, p: PhasePoint) -> PhasePoint:
    """One step of the map: y = -d1 h(x, x'), y' = d2 h(x, x')."""
    xp = p.x + p.y
    return PhasePoint(xp, p.y + h.V.deriv(xp, 1))


def orbit(h: GeneratingFunction, p0: PhasePoint, N: int) -> np.ndarray:
    """Lift coordinates x_0..x_N of the orbit through p0."""
    xs = np.empty(N + 1)
    x, y = float(p0.x), float(p0.y)
    xs[0] = x
    dV = h.V.deriv
    for i in range(1, N + 1):
        x = x + y
        y = y + dV(x, 1)
        if not abs(x) <= LIFT_BOUND:
            raise OrbitEscaped(i, x)
        xs[i] = x
    return xs


def orbit_rotation_number(h: GeneratingFunction, p0: PhasePoint, N: int) -> float:
    """(x_N - x_0) / N along the orbit of p0, in lift units."""
    if N < 1:
        raise ValueError("N must be >= 1")
    xs = orbit(h, p0, N)
    return (xs[-1] - xs[0]) / N


def euler_lagrange(h: GeneratingFunction, xm, x, xp):
    """d1 h(x, x_next) + d2 h(x_prev, x), vectorised."""
    return 2.0 * x - xm - xp + h.V.deriv(x, 1)


def _padded(c, period: float) -> tuple[np.ndarray, bool]:
    values = np.asarray(getattr(c, "values", c), dtype=float)
    closure = getattr(c, "closure", None)
    if closure is not None and closure.kind == "periodic":
        shift = closure.p * period
        return np.concatenate([[values[-1] - shift], values, [values[0] + shift]]), True
    return values, False


def stationarity_residuals(h: GeneratingFunction, c) -> np.ndarray:
    """Euler-Lagrange residual at every interior index (all indices if periodic)."""
    x, _ = _padded(c, h.period)
    if x.size < 3:
        raise ValueError("configuration needs at least 3 entries (or periodic closure)")
    return euler_lagrange(h, x[:-2], x[1:-1], x[2:])


def stationarity_residual(h: GeneratingFunction, c) -> float:
    return float(np.max(np.abs(stationarity_residuals(h, c))))


def momenta(c, period: float = 1.0) -> np.ndarray:
    """y_i = x_i - x_{i-1} attached to each configuration point."""
    x, _ = _padded(c, period)
    return np.diff(x)
