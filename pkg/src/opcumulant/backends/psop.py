"""Phase-space differential operators  sum c e^{ik theta} p^a d_theta^i d_p^j.

``PhaseFn`` holds the scalar functions (no derivatives).  Coefficients
are restricted to harmonics |k| <= K_MAX and powers a <= A_MAX; products
that leave this span drop the excess terms with a warning.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

K_MAX = 16
A_MAX = 12

OpKey = Tuple[int, int, int, int]
FnKey = Tuple[int, int]


class TruncationWarning(UserWarning):
    pass


def _acc(d, key, c):
    s = d.get(key, 0) + c
    if s == 0:
        d.pop(key, None)
    else:
        d[key] = s


def _falling(a: int, s: int) -> int:
    return math.perm(a, s) if s <= a else 0


class PhaseFn:
    """Scalar function sum c e^{ik theta} p^a."""

    __slots__ = ("c",)

    def __init__(self, coeffs: Dict[FnKey, complex] | None = None):
        self.c: Dict[FnKey, complex] = {}
        for key, v in (coeffs or {}).items():
            if v != 0:
                self.c[(int(key[0]), int(key[1]))] = v

    @classmethod
    def sin(cls, k: int = 1, coeff=1.0, power: int = 0):
        return cls({(k, power): coeff / 2j, (-k, power): -coeff / 2j})

    @classmethod
    def cos(cls, k: int = 1, coeff=1.0, power: int = 0):
        if k == 0:
            return cls({(0, power): coeff})
        return cls({(k, power): coeff / 2, (-k, power): coeff / 2})

    @classmethod
    def p(cls, power: int = 1, coeff=1.0):
        return cls({(0, power): coeff})

    @classmethod
    def const(cls, c=1.0):
        return cls({(0, 0): c})

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = PhaseFn.const(other)
        d = dict(self.c)
        for key, v in other.c.items():
            _acc(d, key, v)
        return _fn(d)

    __radd__ = __add__

    def __neg__(self):
        return _fn({k: -v for k, v in self.c.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PhaseFn):
            d: Dict[FnKey, complex] = {}
            for (k1, a1), c1 in self.c.items():
                for (k2, a2), c2 in other.c.items():
                    _acc(d, (k1 + k2, a1 + a2), c1 * c2)
            return _fn(d)
        if other == 0:
            return PhaseFn()
        return _fn({k: v * other for k, v in self.c.items()})

    __rmul__ = __mul__

    def d_theta(self) -> "PhaseFn":
        return _fn({(k, a): 1j * k * v for (k, a), v in self.c.items() if k != 0})

    def d_p(self) -> "PhaseFn":
        return _fn({(k, a - 1): a * v for (k, a), v in self.c.items() if a > 0})

    def __call__(self, theta, p):
        theta = np.asarray(theta, dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.zeros(np.broadcast(theta, p).shape, dtype=complex)
        for (k, a), v in self.c.items():
            out = out + v * np.exp(1j * k * theta) * p ** a
        return out if out.shape else complex(out)

    def is_zero(self, atol: float = 0.0) -> bool:
        return all(abs(v) <= atol for v in self.c.values())

    def max_abs(self) -> float:
        return max((abs(v) for v in self.c.values()), default=0.0)

    def is_real(self, atol: float = 1e-12) -> bool:
        for (k, a), v in self.c.items():
            w = self.c.get((-k, a), 0)
            if abs(v - np.conj(w)) > atol * max(1.0, abs(v)):
                return False
        return True

    def allclose(self, other: "PhaseFn", atol=1e-12, rtol=0.0) -> bool:
        for key in set(self.c) | set(other.c):
            a, b = self.c.get(key, 0), other.c.get(key, 0)
            if abs(a - b) > atol + rtol * max(abs(a), abs(b)):
                return False
        return True

    def chop(self, atol: float) -> "PhaseFn":
        return _fn({k: v for k, v in self.c.items() if abs(v) > atol})

    def __repr__(self):
        return "PhaseFn(" + ", ".join(f"{k}:{v:.6g}" for k, v in sorted(self.c.items())) + ")"


def _fn(d):
    f = PhaseFn.__new__(PhaseFn)
    f.c = d
    return f


class PsOp:
    """Differential operator on functions of (theta, p)."""

    __slots__ = ("c",)

    def __init__(self, coeffs: Dict[OpKey, complex] | None = None):
        self.c: Dict[OpKey, complex] = {}
        for key, v in (coeffs or {}).items():
            if v != 0:
                self.c[tuple(int(x) for x in key)] = v

    @classmethod
    def from_field(cls, f_theta: PhaseFn, f_p: PhaseFn) -> "PsOp":
        """The first-order operator f_theta d_theta + f_p d_p."""
        d: Dict[OpKey, complex] = {}
        for (k, a), v in f_theta.c.items():
            d[(k, a, 1, 0)] = v
        for (k, a), v in f_p.c.items():
            d[(k, a, 0, 1)] = v
        return _op(d)

    @classmethod
    def term(cls, coeff, k=0, a=0, dtheta=0, dp=0):
        return cls({(k, a, dtheta, dp): coeff})

    @classmethod
    def times(cls, fn: PhaseFn, dtheta=0, dp=0) -> "PsOp":
        return _op({(k, a, dtheta, dp): v for (k, a), v in fn.c.items()})

    def __add__(self, other):
        d = dict(self.c)
        for key, v in other.c.items():
            _acc(d, key, v)
        return _op(d)

    def __neg__(self):
        return _op({k: -v for k, v in self.c.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        if s == 0:
            return PsOp()
        return _op({k: v * s for k, v in self.c.items()})

    __rmul__ = __mul__

    def __matmul__(self, other: "PsOp") -> "PsOp":
        d: Dict[OpKey, complex] = {}
        dropped = 0
        for (k1, a1, i, j), c1 in self.c.items():
            for (k2, a2, k, l), c2 in other.c.items():
                kk = k1 + k2
                if abs(kk) > K_MAX:
                    dropped += 1
                    continue
                for r in range(i + 1):
                    fr = math.comb(i, r) * (1j * k2) ** r if r else 1
                    if fr == 0:
                        continue
                    for s in range(min(j, a2) + 1):
                        aa = a1 + a2 - s
                        if aa > A_MAX:
                            dropped += 1
                            continue
                        coef = c1 * c2 * fr * math.comb(j, s) * _falling(a2, s)
                        _acc(d, (kk, aa, i - r + k, j - s + l), coef)
        if dropped:
            warnings.warn(f"PsOp product dropped {dropped} terms beyond caps "
                          f"(|k|<={K_MAX}, a<={A_MAX})", TruncationWarning, stacklevel=2)
        return _op(d)

    def zero_like(self):
        return PsOp()

    def norm(self) -> float:
        return max((abs(v) for v in self.c.values()), default=0.0)

    def chop(self, atol: float) -> "PsOp":
        return _op({k: v for k, v in self.c.items() if abs(v) > atol})

    def allclose(self, other: "PsOp", atol=1e-12, rtol=0.0) -> bool:
        for key in set(self.c) | set(other.c):
            a, b = self.c.get(key, 0), other.c.get(key, 0)
            if abs(a - b) > atol + rtol * max(abs(a), abs(b)):
                return False
        return True

    def max_derivative_order(self) -> int:
        return max((i + j for (_, _, i, j) in self.c), default=0)

    def part(self, dtheta: int, dp: int) -> PhaseFn:
        return _fn({(k, a): v for (k, a, i, j), v in self.c.items() if (i, j) == (dtheta, dp)})

    def apply(self, f: PhaseFn) -> PhaseFn:
        """Act on a scalar function."""
        out = PhaseFn()
        for (k, a, i, j), v in self.c.items():
            g = f
            for _ in range(i):
                g = g.d_theta()
            for _ in range(j):
                g = g.d_p()
            out = out + g * PhaseFn({(k, a): v})
        return out

    def is_real(self, atol: float = 1e-12) -> bool:
        for (k, a, i, j), v in self.c.items():
            w = self.c.get((-k, a, i, j), 0)
            if abs(v - np.conj(w)) > atol * max(1.0, abs(v)):
                return False
        return True

    def dump(self) -> str:
        """One term per line: ``coeff k a dtheta dp``, sorted by key."""
        lines = []
        for key in sorted(self.c):
            v = complex(self.c[key])
            lines.append(f"{v.real:.17g}{v.imag:+.17g}j " + " ".join(str(x) for x in key))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def parse_dump(cls, text: str) -> "PsOp":
        d = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            c, *key = line.split()
            d[tuple(int(x) for x in key)] = complex(c)
        return cls(d)

    def __repr__(self):
        return f"PsOp({len(self.c)} terms)"


def _op(d):
    o = PsOp.__new__(PsOp)
    o.c = d
    return o


# --------------------------------------------------------- vector fields

@dataclass
class VectorField:
    f_theta: PhaseFn
    f_p: PhaseFn
    higher_order_terms: int = 0

    def __call__(self, theta, p):
        return np.real(self.f_theta(theta, p)), np.real(self.f_p(theta, p))

    def jacobian(self, theta: float, p: float) -> np.ndarray:
        ft, fp = self.f_theta, self.f_p
        rows = [[ft.d_theta(), ft.d_p()], [fp.d_theta(), fp.d_p()]]
        return np.array([[np.real(g(theta, p)) for g in row] for row in rows])


def vector_field(g: PsOp) -> VectorField:
    higher = sum(1 for (_, _, i, j) in g.c if i + j >= 2)
    return VectorField(g.part(1, 0), g.part(0, 1), higher)


def hamiltonian_op(h: PhaseFn) -> PsOp:
    """f -> {f, H} = H_p f_theta - H_theta f_p."""
    return PsOp.from_field(h.d_p(), -h.d_theta())


def dissipator_op(dfn: PhaseFn) -> PsOp:
    """f -> {{f, D}} = D_p f_p."""
    return PsOp.from_field(PhaseFn(), dfn.d_p())


@dataclass
class SplitResult:
    H: PhaseFn
    D: PhaseFn
    remainder: PsOp
    flags: List[str] = field(default_factory=list)

    def reconstruct(self) -> PsOp:
        return hamiltonian_op(self.H) + dissipator_op(self.D) + self.remainder


def split_hamiltonian_dissipator(g: PsOp, mass_scale: float = 1.0) -> SplitResult:
    """Write g = {., H} + {{., D}} + remainder.

    Gauge: H has no constant term; D has only p^a terms with a >= 2, so
    p-independent forces are absorbed by a theta-dependent part of H.  A
    theta- and p-independent force has no such antiderivative and stays
    in the remainder.  ``mass_scale`` M converts to a momentum p = M p~.
    """
    flags: List[str] = []
    vf = vector_field(g)
    # H from dH/dp = F_theta
    h = _fn({(k, a + 1): v / (a + 1) for (k, a), v in vf.f_theta.c.items()})
    rest = vf.f_p + h.d_theta()
    # p^0 part of the remaining force fixes h(theta)
    leftover: Dict[OpKey, complex] = {}
    hth: Dict[FnKey, complex] = {}
    dfn: Dict[FnKey, complex] = {}
    for (k, a), v in rest.c.items():
        if a == 0:
            if k == 0:
                leftover[(0, 0, 0, 1)] = v
                flags.append("constant force not integrable; kept in remainder")
            else:
                hth[(k, 0)] = -v / (1j * k)
        else:
            dfn[(k, a + 1)] = v / (a + 1)
    H = h + _fn(hth)
    H.c.pop((0, 0), None)
    D = _fn(dfn)
    higher = _op({key: v for key, v in g.c.items() if key[2] + key[3] >= 2
                  or key[2] + key[3] == 0})
    if higher.c:
        flags.append(f"{len(higher.c)} terms outside the bracket ansatz")
    remainder = higher + _op(leftover)
    if mass_scale != 1.0:
        M = float(mass_scale)
        H = _fn({(k, a): v * M ** (1 - a) for (k, a), v in H.c.items()})
        D = _fn({(k, a): v * M ** (2 - a) for (k, a), v in D.c.items()})
    return SplitResult(H, D, remainder, flags)
