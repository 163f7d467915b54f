"""Rational transfer functions and their discrete realisation.

Coefficients are stored highest power first, as in ``numpy.polyval``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:]


@dataclass(frozen=True, eq=False)
class TransferFunction:
    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num, den = _trim(self.num), _trim(self.den)
        if not den.any():
            raise ValueError("denominator is identically zero")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def constant(cls, k):
        return cls([float(k)], [1.0])

    @property
    def is_zero(self):
        return not self.num.any()

    @property
    def relative_degree(self):
        if self.is_zero:
            return 0
        return (len(self.den) - 1) - (len(self.num) - 1)

    @property
    def is_proper(self):
        return self.relative_degree >= 0

    def poles(self):
        return np.roots(self.den) if len(self.den) > 1 else np.zeros(0, dtype=complex)

    def is_stable(self):
        return bool(np.all(self.poles().real < 0))

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def freqresp(self, omega):
        return self(1j * np.asarray(omega, dtype=float))

    def dc_gain(self):
        return float(np.real(self(0.0)))

    def __mul__(self, other):
        if not isinstance(other, TransferFunction):
            other = TransferFunction.constant(other)
        return TransferFunction(np.polymul(self.num, other.num), np.polymul(self.den, other.den))

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, TransferFunction):
            other = TransferFunction.constant(other)
        num = np.polyadd(np.polymul(self.num, other.den), np.polymul(other.num, self.den))
        return TransferFunction(num, np.polymul(self.den, other.den))

    def inverse(self):
        return TransferFunction(self.den, self.num)

    def __repr__(self):
        return f"TransferFunction(num={self.num.tolist()}, den={self.den.tolist()})"


def first_order_lag(tau):
    return TransferFunction([1.0], [tau, 1.0])


def bilinear(tf: TransferFunction, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Tustin map s = (2/dt)(z-1)/(z+1); returns (b, a) in powers of z^-1 with a[0] = 1."""
    if not tf.is_proper:
        raise ValueError("cannot discretise an improper transfer function")
    k = 2.0 / dt
    n = len(tf.den) - 1
    num = np.concatenate([np.zeros(n + 1 - len(tf.num)), tf.num])
    den = tf.den

    def mapped(coeffs):
        out = np.zeros(n + 1)
        for i, c in enumerate(coeffs):
            power = n - i  # power of s
            if c == 0.0:
                continue
            term = np.polymul(binomial_poly(power, -1.0), binomial_poly(n - power, 1.0))
            out += c * k**power * term
        return out

    b, a = mapped(num), mapped(den)
    return b / a[0], a / a[0]


def discrete_freqresp(b, a, omega, dt):
    z = np.exp(1j * np.asarray(omega, dtype=float) * dt)
    zi = 1.0 / z
    return np.polyval(b[::-1], zi) / np.polyval(a[::-1], zi)


class DiscreteFilter:
    """Transposed direct-form II realisation of b(z^-1)/a(z^-1)."""

    def __init__(self, b, a):
        b = np.asarray(b, dtype=float)
        a = np.asarray(a, dtype=float)
        n = max(len(a), len(b))
        self.b = np.concatenate([b, np.zeros(n - len(b))]) / a[0]
        self.a = np.concatenate([a, np.zeros(n - len(a))]) / a[0]
        self.state = np.zeros(n - 1)

    @property
    def poles(self):
        return np.roots(self.a) if len(self.a) > 1 else np.zeros(0)

    def is_stable(self):
        return bool(np.all(np.abs(self.poles) < 1.0))

    def step(self, u: float) -> float:
        z = self.state
        y = self.b[0] * u + (z[0] if z.size else 0.0)
        n = z.size
        for i in range(n - 1):
            z[i] = self.b[i + 1] * u + z[i + 1] - self.a[i + 1] * y
        if n:
            z[n - 1] = self.b[n] * u - self.a[n] * y
        return float(y)

    def reset(self, u: float = 0.0):
        """Place the state at the equilibrium for a constant input ``u``."""
        n = self.state.size
        if n == 0:
            return
        dc = self.b.sum() / self.a.sum()
        y = dc * u
        z = np.zeros(n)
        z[n - 1] = self.b[n] * u - self.a[n] * y
        for i in range(n - 2, -1, -1):
            z[i] = self.b[i + 1] * u + z[i + 1] - self.a[i + 1] * y
        self.state = z

    def copy(self):
        other = DiscreteFilter(self.b, self.a)
        other.state = self.state.copy()
        return other


def binomial_poly(power, sign):
    """Coefficients of (z + sign)^power, highest power first."""
    return np.array([comb(power, j) * sign**j for j in range(power + 1)], dtype=float)
