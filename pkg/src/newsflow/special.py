"""Special functions needed by the tests: regularized incomplete beta, F and t tails,
and the Hurwitz zeta function."""
from __future__ import annotations

import math

import numpy as np

_EPS = 1e-16
_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 10_000) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _front(a: float, b: float, x: float, y: float) -> float:
    return math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y))


def _betainc_pair(a: float, b: float, x: float, y: float = None):
    """(I_x(a, b), 1 - I_x(a, b)), each from its own accurate branch.

    ``y`` is 1 - x; callers that can form it without cancellation should.
    """
    if a <= 0 or b <= 0:
        raise ValueError("betainc requires a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("betainc requires 0 <= x <= 1")
    if y is None:
        y = 1.0 - x
    if x == 0.0 or y == 0.0:
        return (0.0, 1.0) if x == 0.0 else (1.0, 0.0)
    if x < (a + 1.0) / (a + b + 2.0):
        lower = _front(a, b, x, y) * _betacf(a, b, x) / a
        return lower, 1.0 - lower
    upper = _front(a, b, x, y) * _betacf(b, a, y) / b
    return 1.0 - upper, upper


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    return _betainc_pair(a, b, x)[0]


def betaincc(a: float, b: float, x: float) -> float:
    """Complement 1 - I_x(a, b), computed without cancellation in the upper tail."""
    return _betainc_pair(a, b, x)[1]


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f) of the F(d1, d2) distribution."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError("F degrees of freedom must be positive")
    if not f > 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    # P(F > f) = I_x(d2/2, d1/2) with x = d2 / (d2 + d1 f)
    den = d2 + d1 * f
    return _betainc_pair(d2 / 2.0, d1 / 2.0, d2 / den, d1 * f / den)[0]


def f_cdf(f: float, d1: float, d2: float) -> float:
    if not f > 0:
        return 0.0
    if math.isinf(f):
        return 1.0
    den = d2 + d1 * f
    return _betainc_pair(d2 / 2.0, d1 / 2.0, d2 / den, d1 * f / den)[1]


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| > |t|) for Student's t with ``df`` degrees of freedom."""
    t = abs(t)
    if math.isinf(t):
        return 0.0
    den = df + t * t
    return _betainc_pair(df / 2.0, 0.5, df / den, t * t / den)[0]


# Bernoulli numbers B_2k / (2k)!, k = 1..12
_B2K = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510,
        43867 / 798, -174611 / 330, 854513 / 138, -236364091 / 2730)
_EM_COEF = np.array([b / math.factorial(2 * k) for k, b in enumerate(_B2K, start=1)])
_SHIFT = 12


def hurwitz_zeta(s, a):
    """Hurwitz zeta sum_{k>=0} (k + a)^(-s) for s > 1, a > 0.

    Direct summation up to a + N >= 12, then the Euler-Maclaurin tail with
    twelve Bernoulli corrections. Vectorised over broadcastable s and a;
    relative accuracy is better than 1e-13.
    """
    s_arr = np.asarray(s, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    if np.any(s_arr <= 1):
        raise ValueError("hurwitz_zeta requires s > 1")
    if np.any(a_arr <= 0):
        raise ValueError("hurwitz_zeta requires a > 0")
    out = _hurwitz(s_arr, a_arr)
    return out if out.ndim else float(out)


def hurwitz_zeta_dlog(s, a, h: float = 1e-30):
    """(zeta(s, a), d/ds log zeta(s, a)) via a complex-step derivative.

    The step never subtracts nearby values, so the derivative is accurate to
    working precision. Same domain as hurwitz_zeta.
    """
    s_arr = np.asarray(s, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    if np.any(s_arr <= 1) or np.any(a_arr <= 0):
        raise ValueError("hurwitz_zeta_dlog requires s > 1 and a > 0")
    z = _hurwitz(s_arr + 1j * h, a_arr)
    return z.real, z.imag / h / z.real


def _hurwitz(s_arr: np.ndarray, a_arr: np.ndarray) -> np.ndarray:
    # s may be complex (for the complex-step derivative); a is real
    nd = max(s_arr.ndim, a_arr.ndim)
    s_arr = s_arr.reshape((1,) * (nd - s_arr.ndim) + s_arr.shape)
    a_arr = a_arr.reshape((1,) * (nd - a_arr.ndim) + a_arr.shape)
    lead = (-1,) + (1,) * nd  # shape of a table indexed along a new leading axis

    n = np.maximum(np.ceil(_SHIFT - a_arr), 0.0)
    max_n = int(n.max()) if n.size else 0
    total = 0.0
    if max_n:
        k = np.arange(max_n, dtype=float).reshape(lead)
        terms = (a_arr + k) ** -s_arr
        total = np.where(k < n, terms, 0.0).sum(axis=0)
    x = a_arr + n  # x >= 12
    tail = x ** (1.0 - s_arr) / (s_arr - 1.0) + 0.5 * x ** -s_arr
    # Euler-Maclaurin: sum_k B_2k/(2k)! * s(s+1)...(s+2k-2) * x^(-s-2k+1); the
    # rising factorials live on the shape of s, powers of 1/x^2 on that of a
    steps = np.arange(2 * len(_B2K) - 1, dtype=float).reshape(lead)
    rising = np.multiply.accumulate(s_arr + steps, axis=0)[0::2]
    ypow = np.empty((len(_B2K),) + x.shape)
    ypow[0] = 1.0
    ypow[1:] = 1.0 / (x * x)
    np.multiply.accumulate(ypow, axis=0, out=ypow)
    poly = (_EM_COEF.reshape(lead) * rising * ypow).sum(axis=0)
    return total + tail + x ** (-s_arr - 1.0) * poly
