from __future__ import annotations

from typing import Dict, Optional

from ..freewords import Word


class FreeElem:
    """Element of the free associative algebra: word -> coefficient.

    Coefficients may be any ring values supporting + and * (complex,
    Fraction, ExpPoly).  ``max_len`` truncates products to words of at
    most that length, which is how grade truncation is expressed here.
    """

    __slots__ = ("c", "max_len")

    def __init__(self, coeffs: Optional[Dict[Word, object]] = None, max_len: Optional[int] = None):
        self.c: Dict[Word, object] = {}
        self.max_len = max_len
        for w, v in (coeffs or {}).items():
            if not _is_zero(v) and (max_len is None or len(w) <= max_len):
                self.c[tuple(w)] = v

    @classmethod
    def letter(cls, i: int, max_len=None):
        return cls({(i,): 1.0}, max_len)

    def _new(self, d, other=None):
        ml = self.max_len
        if other is not None and other.max_len is not None:
            ml = other.max_len if ml is None else min(ml, other.max_len)
        return FreeElem(d, ml)

    def __add__(self, other):
        d = dict(self.c)
        for w, v in other.c.items():
            d[w] = d[w] + v if w in d else v
        return self._new(d, other)

    def __neg__(self):
        return self._new({w: -v for w, v in self.c.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        return self._new({w: v * s for w, v in self.c.items()})

    __rmul__ = __mul__

    def __matmul__(self, other):
        ml = self.max_len
        if other.max_len is not None:
            ml = other.max_len if ml is None else min(ml, other.max_len)
        d: Dict[Word, object] = {}
        for u, a in self.c.items():
            for v, b in other.c.items():
                if ml is not None and len(u) + len(v) > ml:
                    continue
                w = u + v
                p = a * b
                d[w] = d[w] + p if w in d else p
        return FreeElem(d, ml)

    def zero_like(self):
        return FreeElem({}, self.max_len)

    def grade(self, n: int) -> "FreeElem":
        return FreeElem({w: v for w, v in self.c.items() if len(w) == n}, self.max_len)

    def norm(self) -> float:
        vals = []
        for v in self.c.values():
            vals.append(v.max_abs() if hasattr(v, "max_abs") else abs(v))
        return max(vals, default=0.0)

    def items(self):
        return sorted(self.c.items())

    def __repr__(self):
        return f"FreeElem({dict(self.items())!r})"


def _is_zero(v) -> bool:
    if hasattr(v, "is_zero"):
        return v.is_zero()
    return v == 0
