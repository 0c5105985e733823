"""Regularity exponents and the dyadic-bump construction of an unbounded state.

Exponent calculators work in exact rational arithmetic (``fractions.Fraction``);
``INF`` marks the critical case where any finite exponent is admissible.

The bump is ``phi(x, s) = psi(|x|) psi(|s|)`` with the smooth step
``psi(r) = S(2 - r) / (S(2 - r) + S(r - 1))``, ``S(t) = exp(-1/t)`` for
``t > 0``. It equals 1 for ``|x|, |s| <= 1`` and vanishes once ``|x| >= 2`` or
``|s| >= 2``. The state is ``y(x, t) = sum_k k^-1 phi(2^k x, 4^k (t - 1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .core import INF


def _frac(v):
    if isinstance(v, float):
        return Fraction(v).limit_denominator(10**9)
    return Fraction(v)


@dataclass(frozen=True)
class ExponentReport:
    inputs: dict
    outputs: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    note: str = ""

    @property
    def valid(self):
        return all(self.flags.values())

    def __getitem__(self, key):
        return self.outputs[key]


def gn_exponent(n):
    """Exponent ``2(n+2)/n`` of the embedding of ``L^2(H^1_0) cap L^inf(L^2)`` into ``L^p(Q)``."""
    if int(n) != n or n < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {n}")
    return Fraction(2 * (n + 2), n)


def parabolic_exponent(r, n):
    """Integrability ``q`` of the state for controls in ``L^r(Q)``, ``r in [2, 1 + n/2]``."""
    r = _frac(r)
    n = int(n)
    upper = 1 + Fraction(n, 2)
    flags = {"r >= 2": r >= 2, "r <= 1 + n/2": r <= upper}
    inputs = {"r": r, "n": n}
    if not all(flags.values()):
        bad = [k for k, ok in flags.items() if not ok]
        return ExponentReport(inputs, flags=flags, note=f"r={r} violates {', '.join(bad)}")
    if r == upper:
        return ExponentReport(inputs, {"q": INF}, flags, note="critical case: q < inf is arbitrary")
    q = r * (n + 2) / (n + 2 - 2 * r)
    p = r * n / (n + 2 - 2 * r)
    flags["q >= r(n+2)/n"] = q >= r * (n + 2) / n
    return ExponentReport(inputs, {"q": q, "p": p}, flags)


def bootstrap_steps(n):
    """Number of regularity upgrades ``e_j = 2((n+2)/(n-2))^j`` until ``e_j > 1 + n/2``."""
    if int(n) != n or n < 3:
        raise ValueError(f"bootstrap chain needs n >= 3 (ratio (n+2)/(n-2) undefined at n=2), got {n}")
    n = int(n)
    ratio = Fraction(n + 2, n - 2)
    target = 1 + Fraction(n, 2)
    chain = []
    e = Fraction(2)
    while True:
        e *= ratio
        chain.append(e)
        if e > target:
            return len(chain), tuple(chain)


def elliptic_exponents(r, n):
    """Exponents ``s, p, q, q~`` for boundary data in ``L^r(Gamma)``, ``r in [2(n-1)/n, n-1)``.

    ``s`` is fixed by the compatibility relation, ``q`` and ``q~`` by the
    reciprocal-gain rules, and ``p`` by the test-function power. Both routes
    to ``q`` and ``q~`` are computed and compared exactly.
    """
    if int(n) != n or n < 3:
        raise ValueError(f"elliptic exponents need n >= 3, got {n}")
    n = int(n)
    r = _frac(r)
    inputs = {"r": r, "n": n}
    flags = {"r >= 2(n-1)/n": r >= Fraction(2 * (n - 1), n), "r < n-1": r < n - 1}
    if not all(flags.values()):
        bad = [k for k, ok in flags.items() if not ok]
        return ExponentReport(inputs, flags=flags, note=f"r={r} violates {', '.join(bad)}")
    gain = 1 / r - Fraction(1, n - 1)
    inv_s = Fraction(2, n) + Fraction(n - 1, n) * gain
    s = 1 / inv_s
    flags["s >= 2n/(n+2)"] = s >= Fraction(2 * n, n + 2)
    flags["s < n/2"] = s < Fraction(n, 2)
    q = 1 / gain
    q_tilde = 1 / (inv_s - Fraction(2, n))
    p = 1 / (Fraction(n - 1, n - 2) * gain)
    flags["p >= 2"] = p >= 2
    flags["q = p(n-1)/(n-2)"] = q == p * Fraction(n - 1, n - 2)
    flags["q~ = pn/(n-2)"] = q_tilde == p * Fraction(n, n - 2)
    flags["compatibility"] = (n - 1) * gain == n * (inv_s - Fraction(2, n))
    return ExponentReport(inputs, {"s": s, "p": p, "q": q, "q_tilde": q_tilde}, flags)


# --------------------------------------------------------------------------
# smooth bump


def _S(t, order=0):
    t = np.asarray(t, dtype=float)
    pos = t > 0
    tt = np.where(pos, t, 1.0)
    e = np.where(pos, np.exp(-1.0 / tt), 0.0)
    if order == 0:
        return e
    if order == 1:
        return e / tt**2
    return e * (1.0 / tt**4 - 2.0 / tt**3)


def psi(r, order=0):
    """Smooth step (order 0) and its first two derivatives in ``r``."""
    r = np.asarray(r, dtype=float)
    a, b = _S(2.0 - r), _S(r - 1.0)
    d = a + b
    if order == 0:
        return a / d
    a1, b1 = -_S(2.0 - r, 1), _S(r - 1.0, 1)
    num = a1 * b - a * b1
    if order == 1:
        return num / d**2
    a2, b2 = _S(2.0 - r, 2), _S(r - 1.0, 2)
    num1 = a2 * b - a * b2
    d1 = a1 + b1
    return (num1 * d - 2.0 * num * d1) / d**3


def bump_eval(x, s, derivative="value"):
    """Evaluate ``phi(x, s) = psi(|x|) psi(|s|)`` or a derivative.

    ``x`` has shape ``(..., n)``. ``derivative`` is one of ``value``, ``dt``
    (derivative in ``s``), ``grad`` (in ``x``, shape ``(..., n)``), ``hess``
    (shape ``(..., n, n)``) or ``lap``.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    n = x.shape[-1]
    rho = np.linalg.norm(x, axis=-1)
    abs_s = np.abs(s)
    if derivative == "value":
        return psi(rho) * psi(abs_s)
    if derivative == "dt":
        return psi(rho) * psi(abs_s, 1) * np.sign(s)
    safe = np.where(rho > 0, rho, 1.0)
    p1 = np.where(rho > 0, psi(rho, 1), 0.0)
    time = psi(abs_s)
    if derivative == "grad":
        return (time * p1 / safe)[..., None] * x
    if derivative == "lap":
        return time * (psi(rho, 2) + (n - 1) * p1 / safe)
    if derivative == "hess":
        e = x / safe[..., None]
        outer = e[..., :, None] * e[..., None, :]
        eye = np.eye(n)
        h = psi(rho, 2)[..., None, None] * outer + (p1 / safe)[..., None, None] * (eye - outer)
        return time[..., None, None] * h
    raise ValueError(f"unknown derivative selector {derivative!r}")


def _sphere_area(n):
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@lru_cache(maxsize=None)
def bump_norm_sq(n, which):
    """``||d phi||^2_{L^2(R^{n+1})}`` for ``which`` in ``dt``, ``dxx`` (Hessian), ``lap``, ``heat``.

    ``heat`` is ``||phi_s - lap phi||^2``; the cross term vanishes by parity in ``s``.
    """
    from scipy.integrate import quad

    def q(func, a, b):
        val, _ = quad(func, a, b, points=[1.0] if a < 1.0 < b else None, limit=400, epsabs=1e-15, epsrel=1e-13)
        return val

    area = _sphere_area(n)
    space0 = area * q(lambda r: float(psi(r)) ** 2 * r ** (n - 1), 0.0, 2.0)
    time0 = 2.0 * q(lambda s: float(psi(s)) ** 2, 0.0, 2.0)
    time1 = 2.0 * q(lambda s: float(psi(s, 1)) ** 2, 1.0, 2.0)
    if which == "dt":
        return space0 * time1
    if which == "dxx":
        hess = area * q(
            lambda r: (float(psi(r, 2)) ** 2 + (n - 1) * (float(psi(r, 1)) / r) ** 2) * r ** (n - 1), 1.0, 2.0
        )
        return time0 * hess
    if which == "lap":
        lap = area * q(lambda r: (float(psi(r, 2)) + (n - 1) * float(psi(r, 1)) / r) ** 2 * r ** (n - 1), 1.0, 2.0)
        return time0 * lap
    if which == "heat":
        return bump_norm_sq(n, "dt") + bump_norm_sq(n, "lap")
    raise ValueError(f"unknown norm selector {which!r}")


# --------------------------------------------------------------------------
# dyadic series


def dyadic_terms(x, t, K, derivative="value"):
    """Individual summands ``k^-1 d[phi(2^k x, 4^k (t-1))]`` for ``k = 1..K``.

    ``derivative`` is ``value``, ``dt`` or ``lap`` (chain-rule factors included).
    Returns an array with a leading axis of length ``K``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    rho = np.linalg.norm(x, axis=-1)
    shape = np.broadcast_shapes(rho.shape, t.shape)
    out = np.zeros((K,) + shape)
    scale = {"value": lambda k: 1.0, "dt": lambda k: 4.0**k, "lap": lambda k: 4.0**k}[derivative]
    for k in range(1, K + 1):
        xs, ss = 2.0**k * x, 4.0**k * (t - 1.0)
        inside = (2.0**k * rho < 2.0) & (np.abs(ss) < 2.0)
        if not np.any(inside):
            break  # supports shrink with k
        out[k - 1] = scale(k) / k * bump_eval(xs, ss, derivative)
    return out


def counterexample_value(x, t, K):
    """Partial sum ``sum_{k<=K} k^-1 phi(2^k x, 4^k (t - 1))``."""
    v = dyadic_terms(x, t, K).sum(axis=0)
    return float(v) if v.ndim == 0 else v


def harmonic(m):
    return sum(1.0 / k for k in range(1, m + 1))


def counterexample_control(x, t, K, n, with_cubic=True):
    """``u = y_t - lap y (+ y^3)`` for the partial sum ``y`` with ``K`` terms."""
    if n not in (2, 3):
        raise ValueError(f"counterexample control is defined for n in (2, 3), got {n}")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"points must have {n} coordinates")
    u = dyadic_terms(x, t, K, "dt").sum(axis=0) - dyadic_terms(x, t, K, "lap").sum(axis=0)
    if with_cubic:
        u = u + counterexample_value(x, t, K) ** 3
    return float(u) if np.ndim(u) == 0 else u


def series_factor(K, n):
    """Exact ``sum_{k=1..K} k^-2 2^{k(2-n)}``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return sum(Fraction(1, k * k) * Fraction(2) ** (k * (2 - n)) for k in range(1, K + 1))


def counterexample_norm_series(K, n, which="dt"):
    """Partial sum ``sum_{k<=K} k^-2 2^{k(2-n)} ||d phi||^2`` for ``which`` in ``dt``, ``dxx``, ``heat``."""
    if n not in (2, 3):
        raise ValueError(f"norm series is evaluated for n in (2, 3), got {n}")
    return float(series_factor(K, n)) * bump_norm_sq(n, which)


def counterexample_control_norm(K, n, with_cubic=True, order=40):
    """``||u||_{L^2(Q)}`` by Gauss-Legendre quadrature adapted to the dyadic shells.

    ``u`` is radial in ``x``, so the integral is taken over ``(|x|, t)``. Shell
    ``j`` is the image of ``Q_{2,2} minus Q_{1,1}`` under ``(r, s) -> (2^-j r,
    1 + 4^-j s)``; inside the innermost box all ``K`` bumps equal 1 and ``u``
    is the constant ``H_K^3`` (or 0).
    """
    if n not in (2, 3):
        raise ValueError(f"counterexample control is defined for n in (2, 3), got {n}")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    pieces = [((1.0, 2.0), (-2.0, -1.0)), ((1.0, 2.0), (-1.0, 1.0)), ((1.0, 2.0), (1.0, 2.0)),
              ((0.0, 1.0), (1.0, 2.0)), ((0.0, 1.0), (-2.0, -1.0))]
    area = _sphere_area(n)
    total = 0.0
    for j in range(1, K + 1):
        for (r0, r1), (s0, s1) in pieces:
            r = 0.5 * (r1 - r0) * nodes + 0.5 * (r1 + r0)
            s = 0.5 * (s1 - s0) * nodes + 0.5 * (s1 + s0)
            wr = 0.5 * (r1 - r0) * weights
            ws = 0.5 * (s1 - s0) * weights
            R, Sg = np.meshgrid(r, s, indexing="ij")
            rad = 2.0**-j * R
            pts = np.zeros(R.shape + (n,))
            pts[..., 0] = rad
            tt = 1.0 + 4.0**-j * Sg
            u = counterexample_control(pts, tt, K, n, with_cubic)
            jac = area * rad ** (n - 1) * 2.0**-j * 4.0**-j
            total += float(np.sum(np.outer(wr, ws) * jac * u**2))
    if with_cubic:
        core = _sphere_area(n) / n * 2.0 ** (-K * n) * 2.0 * 4.0**-K
        total += harmonic(K) ** 6 * core
    return math.sqrt(total)


@dataclass(frozen=True)
class BumpSeries:
    """Truncated dyadic series in dimension ``n`` with ``K`` terms."""

    n: int
    K: int

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"n must be 2 or 3, got {self.n}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")

    def value(self, x, t):
        return counterexample_value(x, t, self.K)

    def control(self, x, t, with_cubic=True):
        return counterexample_control(x, t, self.K, self.n, with_cubic)

    def norm_series(self, which="dt"):
        return counterexample_norm_series(self.K, self.n, which)

    def control_norm(self, with_cubic=True, order=40):
        return counterexample_control_norm(self.K, self.n, with_cubic, order)

    def center_value(self):
        return harmonic(self.K)
