"""Exponential polynomials c * t**k * exp(-i*w*t) and window averages.

Frequencies are stored as integer multiples of ``FREQ_QUANTUM`` so that
sums such as (-nu) + nu cancel exactly and keys compare reliably.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, Iterator, Tuple

import numpy as np

FREQ_QUANTUM = 1e-12
MAX_WINDOW_MOMENT = 8

Key = Tuple[int, int]  # (power, quantized frequency)


def qfreq(omega: float) -> int:
    return int(round(float(omega) / FREQ_QUANTUM))


def freq_of(q: int) -> float:
    return q * FREQ_QUANTUM


class ExpPoly:
    """Finite sum of terms c t^k e^{-i w t}; immutable by convention."""

    __slots__ = ("terms",)

    def __init__(self, terms: Dict[Key, complex] | None = None):
        self.terms: Dict[Key, complex] = {}
        if terms:
            for key, c in terms.items():
                if c != 0:
                    self.terms[key] = complex(c)

    # construction helpers
    @classmethod
    def term(cls, coeff=1.0, power: int = 0, freq: float = 0.0) -> "ExpPoly":
        if power < 0:
            raise ValueError("power must be nonnegative")
        return cls({(power, qfreq(freq)): coeff})

    @classmethod
    def const(cls, c=1.0) -> "ExpPoly":
        return cls.term(c)

    @classmethod
    def harmonic(cls, omega: float, coeff=1.0) -> "ExpPoly":
        """coeff * exp(-i omega t)"""
        return cls.term(coeff, 0, omega)

    @classmethod
    def cos(cls, omega: float, coeff=1.0) -> "ExpPoly":
        return cls({(0, qfreq(omega)): coeff / 2, (0, qfreq(-omega)): coeff / 2})

    @classmethod
    def sin(cls, omega: float, coeff=1.0) -> "ExpPoly":
        # sin(w t) = (e^{iwt} - e^{-iwt}) / 2i ; e^{iwt} has stored freq -w
        return cls({(0, qfreq(-omega)): coeff / 2j, (0, qfreq(omega)): -coeff / 2j})

    @classmethod
    def zero(cls) -> "ExpPoly":
        return cls()

    # inspection
    def __iter__(self) -> Iterator[Tuple[int, float, complex]]:
        for (k, q), c in sorted(self.terms.items()):
            yield k, freq_of(q), c

    def __len__(self):
        return len(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def max_power(self) -> int:
        return max((k for k, _ in self.terms), default=0)

    def __repr__(self):
        parts = [f"({c:.6g})t^{k}e^(-i{w:g}t)" for k, w, c in self]
        return "ExpPoly(" + " + ".join(parts) + ")" if parts else "ExpPoly(0)"

    def __eq__(self, other):
        if isinstance(other, (int, float, complex)):
            other = ExpPoly.const(other)
        if not isinstance(other, ExpPoly):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items(), key=lambda kv: kv[0])))

    def allclose(self, other: "ExpPoly", atol=1e-12, rtol=0.0) -> bool:
        keys = set(self.terms) | set(other.terms)
        for key in keys:
            a = self.terms.get(key, 0)
            b = other.terms.get(key, 0)
            if abs(a - b) > atol + rtol * max(abs(a), abs(b)):
                return False
        return True

    # ring operations
    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = ExpPoly.const(other)
        out = dict(self.terms)
        for key, c in other.terms.items():
            s = out.get(key, 0) + c
            if s == 0:
                out.pop(key, None)
            else:
                out[key] = s
        return _raw(out)

    __radd__ = __add__

    def __neg__(self):
        return _raw({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float, complex)):
            other = ExpPoly.const(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            if other == 0:
                return ExpPoly()
            return _raw({k: c * other for k, c in self.terms.items()})
        if not isinstance(other, ExpPoly):
            return NotImplemented
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, x):
        return self * (1.0 / x)

    # calculus
    def derivative(self) -> "ExpPoly":
        out: Dict[Key, complex] = {}
        for (k, q), c in self.terms.items():
            w = freq_of(q)
            if w != 0:
                _acc(out, (k, q), -1j * w * c)
            if k > 0:
                _acc(out, (k - 1, q), k * c)
        return _raw(out)

    def antiderivative(self) -> "ExpPoly":
        return antiderivative(self)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        val = np.zeros(t.shape, dtype=complex)
        for (k, q), c in self.terms.items():
            val = val + c * t ** k * np.exp(-1j * freq_of(q) * t)
        return val if val.shape else complex(val)

    def prune(self, atol: float = 0.0, max_freq: float | None = None) -> "ExpPoly":
        out = {}
        qmax = None if max_freq is None else qfreq(max_freq)
        for (k, q), c in self.terms.items():
            if abs(c) < atol:
                continue
            if qmax is not None and abs(q) > qmax:
                continue
            out[(k, q)] = c
        return _raw(out)

    def conj_time(self) -> "ExpPoly":
        """Complex conjugate as a function of real t."""
        return _raw({(k, -q): c.conjugate() for (k, q), c in self.terms.items()})

    def shift(self, t0: float) -> "ExpPoly":
        """s -> f(t0 + s), re-expanded in s."""
        out: Dict[Key, complex] = {}
        for (k, q), c in self.terms.items():
            ph = c * cmath.exp(-1j * freq_of(q) * t0)
            for j in range(k + 1):
                _acc(out, (j, q), ph * math.comb(k, j) * t0 ** (k - j))
        return _raw(out)


def _raw(d: Dict[Key, complex]) -> ExpPoly:
    e = ExpPoly.__new__(ExpPoly)
    e.terms = d
    return e


def _acc(d: Dict[Key, complex], key: Key, c: complex):
    s = d.get(key, 0) + c
    if s == 0:
        d.pop(key, None)
    else:
        d[key] = s


def multiply(f: ExpPoly, g: ExpPoly) -> ExpPoly:
    out: Dict[Key, complex] = {}
    for (k1, q1), c1 in f.terms.items():
        for (k2, q2), c2 in g.terms.items():
            _acc(out, (k1 + k2, q1 + q2), c1 * c2)
    return _raw(out)


@lru_cache(maxsize=None)
def _antider_table(k: int, q: int) -> Tuple[Tuple[Key, complex], ...]:
    """Antiderivative from 0 of t^k e^{-iwt}, as key/coeff pairs."""
    if q == 0:
        return (((k + 1, 0), 1.0 / (k + 1)),)
    a = -1j * freq_of(q)
    out = []
    fk = math.factorial(k)
    for j in range(k + 1):
        c = (-1) ** j * fk / (math.factorial(k - j) * a ** (j + 1))
        out.append(((k - j, q), c))
    out.append(((0, 0), -((-1) ** k) * fk / a ** (k + 1)))
    return tuple(out)


def antiderivative(f: ExpPoly) -> ExpPoly:
    """F with F(0) = 0 and F' = f."""
    out: Dict[Key, complex] = {}
    for (k, q), c in f.terms.items():
        for key, d in _antider_table(k, q):
            _acc(out, key, c * d)
    return _raw(out)


# ---------------------------------------------------------------- windows

@dataclass(frozen=True)
class WindowSpec:
    kind: str = "gaussian"
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "rectangular", "delta"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.kind != "delta" and not self.tau > 0:
            raise ValueError("window scale tau must be positive")

    def weights(self, dt: float) -> Tuple[np.ndarray, np.ndarray]:
        """Sampled, normalized window on a grid of spacing dt.

        Returns offsets s and weights w such that sum(w) = 1.
        """
        if self.kind == "delta":
            return np.zeros(1), np.ones(1)
        if self.kind == "gaussian":
            half = int(math.ceil(8.0 * self.tau / dt))
            s = dt * np.arange(-half, half + 1)
            w = np.exp(-0.5 * (s / self.tau) ** 2)
        else:
            half = int(math.floor(0.5 * self.tau / dt + 1e-9))
            s = dt * np.arange(-half, half + 1)
            w = np.ones_like(s)
            edge = 0.5 * self.tau / dt - half
            if half > 0 and edge < 1e-9:
                w[0] = w[-1] = 0.5  # trapezoid ends
        return s, w / w.sum()


class UnsupportedOrderError(ValueError):
    pass


@lru_cache(maxsize=None)
def _gauss_poly(j: int) -> Tuple[np.ndarray, ...]:
    """P_j as coefficient arrays in (omega, tau^2): W_j = e^{-w^2 tau^2/2} P_j.

    Returned as a dict-like tuple of ((a, b), c) meaning c * w^a * tau2^b.
    """
    poly = {(0, 0): 1 + 0j}
    for _ in range(j):
        new: Dict[Tuple[int, int], complex] = {}
        # P' - w tau^2 P, then times -i
        for (a, b), c in poly.items():
            if a > 0:
                key = (a - 1, b)
                new[key] = new.get(key, 0) + a * c
            key = (a + 1, b + 1)
            new[key] = new.get(key, 0) - c
        poly = {k: -1j * c for k, c in new.items() if c != 0}
    return tuple(sorted(poly.items()))


def _rect_transform(j: int, omega: float, tau: float) -> complex:
    h = 0.5 * tau
    x = omega * h
    if abs(x) < 0.5:
        # power series of (1/tau) int_{-h}^{h} s^j e^{i w s} ds
        total = 0j
        for m in range(60):
            n = j + m
            if n % 2:
                continue
            term = (1j * omega) ** m / math.factorial(m) * h ** n / (n + 1)
            total += term
            if m > 4 and abs(term) < 1e-18 * max(abs(total), 1e-300):
                break
        return total
    # closed form from I_j = int_{-h}^{h} s^j e^{iws} ds by parts
    a = 1j * omega
    ea, eb = cmath.exp(a * h), cmath.exp(-a * h)
    integral = (ea - eb) / a
    for n in range(1, j + 1):
        integral = (h ** n * ea - (-h) ** n * eb) / a - n / a * integral
    return integral / tau


def window_transform(win: WindowSpec, j: int, omega: float) -> complex:
    """W_j(w) = int w(s) s^j e^{i w s} ds."""
    if j < 0 or j > MAX_WINDOW_MOMENT:
        raise UnsupportedOrderError(f"window moment j={j} outside 0..{MAX_WINDOW_MOMENT}")
    if win.kind == "delta":
        return 1.0 + 0j if j == 0 else 0j
    if win.kind == "gaussian":
        t2 = win.tau ** 2
        env = math.exp(-0.5 * omega * omega * t2)
        if env == 0.0:
            return 0j
        val = sum(c * omega ** a * t2 ** b for (a, b), c in _gauss_poly(j))
        return env * val
    return _rect_transform(j, omega, win.tau)


def average(win: WindowSpec, f: ExpPoly) -> ExpPoly:
    """Convolution average  int w(s) f(t - s) ds, term by term."""
    if win.kind == "delta":
        return f
    out: Dict[Key, complex] = {}
    cache: Dict[Tuple[int, int], complex] = {}
    for (k, q), c in f.terms.items():
        w = freq_of(q)
        for j in range(k + 1):
            if (j, q) not in cache:
                cache[(j, q)] = window_transform(win, j, w)
            wj = cache[(j, q)]
            if wj == 0:
                continue
            _acc(out, (k - j, q), c * math.comb(k, j) * (-1) ** j * wj)
    return _raw(out)
