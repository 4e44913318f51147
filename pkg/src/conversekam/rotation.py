"""Continued fractions, resonant integer vectors, orthogonal frames and rescaling."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .twistmap import PeriodicPotential, RescaledPotential

RATIONAL_TOL = 1e-9
RATIONAL_QMAX = 10_000
# q * omega in doubles stays accurate to well below 1/q up to here
CONVERGENT_QMAX = 10 ** 6


class Unsupported(ValueError):
    pass


@dataclass
class ConvergentSequence:
    omega: float
    pairs: list
    terminated: bool = False   # omega is rational at working precision

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


def is_rational_at_precision(omega: float, tol: float = RATIONAL_TOL,
                             qmax: int = RATIONAL_QMAX) -> bool:
    """True if |q omega - p| <= tol for some q <= qmax."""
    q = np.arange(1, qmax + 1)
    return bool(np.min(np.abs(q * omega - np.round(q * omega))) <= tol)


def convergents(omega: float, count: int, tol: float = RATIONAL_TOL) -> ConvergentSequence:
    """Continued-fraction convergents p/q of omega, q increasing.

    The leading pair (floor(omega), 1) is kept even when the next
    denominator is also 1 (as for the golden mean).  Stops early with
    ``terminated`` set when the last convergent reproduces omega to within
    tol.  Denominators above CONVERGENT_QMAX are not produced.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    pairs = []
    h0, h1 = 0, 1    # numerators p_{k-2}, p_{k-1}
    k0, k1 = 1, 0    # denominators
    x = Fraction(float(omega))    # exact binary value, so no error builds up
    terminated = False
    while len(pairs) < count:
        a = math.floor(x)
        if a * k1 + k0 > CONVERGENT_QMAX:
            break
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        pairs.append((h1, k1))
        frac = x - a
        if abs(k1 * omega - h1) <= tol or frac == 0:
            terminated = True
            break
        x = 1 / frac
    return ConvergentSequence(float(omega), pairs, terminated)


def _canonical_sign(k: np.ndarray) -> np.ndarray:
    """Flip rows so that the first nonzero entry is positive."""
    first = np.argmax(k != 0, axis=1)
    s = np.sign(k[np.arange(k.shape[0]), first])
    s[s == 0] = 1
    return k * s[:, None]


def _ball(d: int, radius: float) -> np.ndarray:
    R = int(math.floor(radius))
    rng = np.arange(-R, R + 1)
    pts = np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64)
    n2 = np.sum(pts * pts, axis=1)
    keep = (n2 > 0) & (n2 <= radius * radius + 1e-9)
    return _canonical_sign(pts[keep])


def resonance_vector(omega: Sequence[float], max_norm: int):
    """Integer k with |k| <= max_norm minimising |<omega, k>| |k|^(d-1).

    Returns (k, |<omega, k>|, C) with C the achieved constant.  Ties go to
    the smaller |k|, then to the lexicographically smaller vector (sign
    normalised so the first nonzero entry is positive).
    """
    w = np.asarray(omega, dtype=float)
    d = w.size
    if d < 2 or not np.any(w):
        raise ValueError("need a nonzero omega with d >= 2")
    ks = np.unique(_ball(d, max_norm), axis=0)
    dots = np.abs(ks @ w)
    norms = np.sqrt(np.sum(ks * ks, axis=1).astype(float))
    C = dots * norms ** (d - 1)
    keys = [tuple(r) for r in ks]
    order = sorted(range(len(ks)), key=lambda i: (C[i], norms[i], keys[i]))
    i = order[0]
    return ks[i].copy(), float(dots[i]), float(C[i])


@dataclass
class ResonanceFrame:
    d: int
    k: np.ndarray
    k_prime: np.ndarray
    l_rows: list
    omega: Optional[np.ndarray] = None

    @property
    def rows(self) -> np.ndarray:
        return np.vstack([self.k, self.k_prime] + list(self.l_rows))

    @property
    def omega1(self) -> Optional[float]:
        return None if self.omega is None else float(self.k @ self.omega)

    @property
    def omega2(self) -> Optional[float]:
        return None if self.omega is None else float(self.k_prime @ self.omega)

    def gram(self) -> np.ndarray:
        R = self.rows
        return R @ R.T


def orthogonal_frame(k: Sequence[int], omega: Optional[Sequence[float]] = None) -> ResonanceFrame:
    """Pairwise orthogonal integer rows (k, k', l_3) for d = 2 or 3.

    d = 2: k' = (-k2, k1).  d = 3: k' is a shortest integer vector
    orthogonal to k within radius 4|k| (ties: lexicographically largest
    after sign normalisation) and l_3 = k x k'.
    """
    k = np.asarray(k, dtype=np.int64)
    d = k.size
    if not np.any(k):
        raise ValueError("k must be nonzero")
    w = None if omega is None else np.asarray(omega, dtype=float)
    if d == 2:
        return ResonanceFrame(2, k, np.array([-k[1], k[0]]), [], w)
    if d != 3:
        raise Unsupported(f"orthogonal frames only for d in (2, 3), got d={d}")
    cand = _ball(3, 4 * math.sqrt(float(k @ k)))
    cand = cand[cand @ k == 0]
    n2 = np.sum(cand * cand, axis=1)
    cand = cand[n2 == n2.min()]
    kp = max(map(tuple, cand))
    kp = np.array(kp, dtype=np.int64)
    l3 = np.cross(k, kp)
    return ResonanceFrame(3, k, kp, [l3], w)


def rescale_problem(P: PeriodicPotential, q: int) -> PeriodicPotential:
    """Q(x) = q**-2 P(q x)."""
    if q < 1:
        raise ValueError("q must be >= 1")
    return P if q == 1 else RescaledPotential(P, q)


def transport_configuration(x, q: int) -> np.ndarray:
    """y_i = q x_i maps configurations of h0 + Q to those of h0 + P."""
    return q * np.asarray(getattr(x, "values", x), dtype=float)
