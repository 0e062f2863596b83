"""Ordered moments, signature cumulants and effective generators.

Conventions.  A word w = (w1, ..., wn) stands for the operator product
L_{w1} ... L_{wn}; in the ordered integral w1 carries the latest time:

    S_w(t) = int_0^t f_{w1}(t1) S_{w2..wn}(t1) dt1,     M_w = avg(S_w).

The cumulants U_w are the coefficients of the log-derivative
U = (dM/dt) M^{-1} of the averaged propagator, computed by the recursion
U_w = dM_w - sum_m U_{w[:m]} M_{w[m:]}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .expavg import ExpPoly, WindowSpec, antiderivative, average
from .freewords import Word, compositions, ordered_partitions, split_by

MAX_WORDS = 10 ** 6


class IncompleteTableError(KeyError):
    pass


class SizeLimitError(ValueError):
    pass


# ------------------------------------------------------------- moments

class MomentTable:
    """Lazy table of S_w, M_w and dM_w/dt over a list of time functions.

    ``prune_rel`` drops averaged terms smaller than prune_rel times the
    largest coefficient of the same moment (0 keeps everything).
    """

    def __init__(self, fns: Sequence[ExpPoly], win: WindowSpec, prune_rel: float = 0.0,
                 lazy: bool = True):
        self.fns = list(fns)
        self.win = win
        self.prune_rel = prune_rel
        self.lazy = lazy
        self._S: Dict[Word, ExpPoly] = {}
        self._M: Dict[Word, ExpPoly] = {}
        self._dM: Dict[Word, ExpPoly] = {}

    def _prune(self, f: ExpPoly) -> ExpPoly:
        if self.prune_rel > 0 and len(f) > 1:
            return f.prune(self.prune_rel * f.max_abs())
        return f

    def integrand(self, w: Word) -> ExpPoly:
        """f_{w1} S_{w[1:]} (unaveraged)."""
        rest = self.S(w[1:]) if len(w) > 1 else ExpPoly.const(1.0)
        return self.fns[w[0]] * rest

    def S(self, w: Word) -> ExpPoly:
        if w not in self._S:
            if not self.lazy:
                raise IncompleteTableError(w)
            self._S[w] = antiderivative(self.integrand(w))
        return self._S[w]

    def M(self, w: Word) -> ExpPoly:
        if w not in self._M:
            if not self.lazy:
                raise IncompleteTableError(w)
            self._M[w] = self._prune(average(self.win, self.S(w)))
        return self._M[w]

    def dM(self, w: Word) -> ExpPoly:
        if w not in self._dM:
            if not self.lazy:
                raise IncompleteTableError(w)
            self._dM[w] = self._prune(average(self.win, self.integrand(w)))
        return self._dM[w]

    def populate(self, words: Iterable[Word]):
        for w in words:
            for i in range(len(w)):
                for j in range(i + 1, len(w) + 1):
                    self.M(w[i:j])
                    self.dM(w[i:j])
        return self

    def frozen(self) -> "MomentTable":
        """Copy that raises instead of computing missing entries."""
        t = MomentTable(self.fns, self.win, self.prune_rel, lazy=False)
        t._S, t._M, t._dM = dict(self._S), dict(self._M), dict(self._dM)
        return t


def _fns_of(model) -> List[ExpPoly]:
    if hasattr(model, "letters"):
        return [l.time for l in model.letters]
    return list(model)


def ordered_moment(w: Word, model, win: WindowSpec) -> ExpPoly:
    """M_w for a model (or a plain list of letter time functions)."""
    return MomentTable(_fns_of(model), win).M(tuple(w))


def harmonic_moment(omegas: Sequence[float], win: WindowSpec) -> ExpPoly:
    """Closed form  i^n / omega_up * avg(e^{-i (w1+...+wn) t}) for pure harmonics.

    omega_up is the product of the tail partial sums (w_k + ... + w_n).
    This is the indefinite iterated integral: it differs from the
    definite one in ``ordered_moment`` by boundary constants multiplied
    in from the right, so it has the same top-frequency component and
    yields identical cumulants.  Resonant words raise ZeroDivisionError.
    """
    n = len(omegas)
    up = 1.0
    for k in range(n):
        s = sum(omegas[k:])
        if abs(s) < 1e-12:
            raise ZeroDivisionError("vanishing tail partial sum")
        up *= s
    return average(win, ExpPoly.harmonic(sum(omegas), 1j ** n / up))


# ------------------------------------------------------------ cumulants

def signature_cumulant(w: Word, moments: MomentTable, method: str = "recursion",
                       _memo: Optional[Dict[Word, ExpPoly]] = None) -> ExpPoly:
    """U_w by the Dyson recursion or by the closed alternating sum."""
    w = tuple(w)
    if method == "closed":
        return _closed_cumulant(w, moments)
    if method != "recursion":
        raise ValueError(f"unknown method {method!r}")
    memo = {} if _memo is None else _memo
    return _rec_cumulant(w, moments, memo)


def _rec_cumulant(w: Word, moments: MomentTable, memo: Dict[Word, ExpPoly]) -> ExpPoly:
    if w in memo:
        return memo[w]
    u = moments.dM(w)
    for m in range(1, len(w)):
        u = u - _rec_cumulant(w[:m], moments, memo) * moments.M(w[m:])
    memo[w] = u
    return u


def _closed_cumulant(w: Word, moments: MomentTable) -> ExpPoly:
    u = ExpPoly()
    for blocks in ordered_partitions(w):
        k = len(blocks)
        term = moments.dM(blocks[0])
        for b in blocks[1:]:
            term = term * moments.M(b)
        u = u + term * ((-1) ** (k + 1))
    return u


class CumulantTable:
    """Memoized U_w over the words of a MomentTable."""

    def __init__(self, moments: MomentTable):
        self.moments = moments
        self._U: Dict[Word, ExpPoly] = {}

    def __getitem__(self, w: Word) -> ExpPoly:
        return _rec_cumulant(tuple(w), self.moments, self._U)

    def closed(self, w: Word) -> ExpPoly:
        return _closed_cumulant(tuple(w), self.moments)


# ------------------------------------------------------- magnus route

def magnus_word_cumulant(w: Word, moments: MomentTable) -> ExpPoly:
    """Coefficient of the word w in K = log M."""
    n = len(w)
    out = ExpPoly()
    for k in range(1, n + 1):
        for parts in compositions(n, k):
            term = ExpPoly.const(1.0)
            for b in split_by(w, parts):
                term = term * moments.M(b)
            out = out + term * ((-1) ** (k + 1) / k)
    return out


def magnus_cumulant(n: int, moments: MomentTable, letters: Sequence, words: Iterable[Word] | None = None,
                    t: float = 0.0):
    """K_n = sum_{|w|=n} K_w L_w evaluated at time t in a backend."""
    if words is None:
        from itertools import product
        words = product(range(len(moments.fns)), repeat=n)
    from .backends.base import compose_word
    elem = letters[0].zero_like()
    for w in words:
        c = magnus_word_cumulant(tuple(w), moments)(t)
        if c != 0:
            elem = elem + compose_word(letters, tuple(w)) * c
    return elem


def wilcox_series(K: Mapping[int, object], Kdot: Mapping[int, object], grade_max: int,
                  commutator: Callable | None = None) -> Dict[int, object]:
    """U_N = sum over n of ad_K^n(Kdot)/(n+1)!, sorted by total grade N.

    ``K`` and ``Kdot`` map a grade to a backend element of that grade.
    Products are kept only up to ``grade_max``.
    """
    if commutator is None:
        from .backends.base import commutator
    # level[n][g]: ad_K^n(Kdot) restricted to grade g
    grades = sorted(K)
    level = {g: Kdot[g] for g in Kdot if g <= grade_max}
    out: Dict[int, object] = dict(level)
    for n in range(1, grade_max):
        nxt: Dict[int, object] = {}
        for g, x in sorted(level.items()):
            for a in grades:
                if g + a > grade_max:
                    continue
                y = commutator(K[a], x)
                nxt[g + a] = nxt[g + a] + y if g + a in nxt else y
        if not nxt:
            break
        scale = 1.0 / math.factorial(n + 1)
        for g, x in sorted(nxt.items()):
            out[g] = out[g] + x * scale if g in out else x * scale
        level = nxt
    return out


def magnus_generator(moments: MomentTable, n_max: int, t: float | None = None):
    """Word-level Magnus route in the free algebra.

    Returns {order: FreeElem} whose coefficients are ExpPolys (or complex
    numbers when ``t`` is given).  Each order should coincide with the
    Dyson-route cumulants of the same words.
    """
    from itertools import product
    from .backends.freealg import FreeElem

    nl = len(moments.fns)
    K, Kd = {}, {}
    for g in range(1, n_max + 1):
        kc, kdc = {}, {}
        for w in product(range(nl), repeat=g):
            kw = magnus_word_cumulant(w, moments)
            if t is not None:
                kc[w], kdc[w] = kw(t), kw.derivative()(t)
            else:
                kc[w], kdc[w] = kw, kw.derivative()
        K[g] = FreeElem(kc, n_max)
        Kd[g] = FreeElem(kdc, n_max)
    return wilcox_series(K, Kd, n_max)


# ----------------------------------------------------------- generator

@dataclass(frozen=True)
class TruncationPolicy:
    n_max: int = 3
    slow_cutoff: Optional[float] = None  # None -> 2/tau
    coeff_floor: float = 1e-12           # relative to the leading scale of each order
    moment_floor: float = 0.0            # relative pruning inside moments
    max_grade: Tuple[Tuple[str, int], ...] = ()

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.slow_cutoff is not None and self.slow_cutoff < 0:
            raise ValueError("slow_cutoff must be >= 0")
        if self.coeff_floor < 0:
            raise ValueError("coeff_floor must be >= 0")

    def cutoff(self, win: WindowSpec) -> float:
        if self.slow_cutoff is not None:
            return self.slow_cutoff
        if win.kind == "delta":
            return math.inf
        return 2.0 / win.tau


@dataclass
class Entry:
    word: Word
    u: ExpPoly          # cumulant for unit letter amplitudes
    amp: complex        # product of the letter amplitudes
    op: object = None   # backend element L_w

    @property
    def coeff(self) -> ExpPoly:
        return self.u * self.amp


@dataclass
class GeneratorSeries:
    orders: Dict[int, List[Entry]]
    letters: Sequence
    n_max: int
    policy: TruncationPolicy
    window: WindowSpec
    meta: Dict[str, object] = field(default_factory=dict)

    def entries(self, orders: Iterable[int] | None = None):
        for n in sorted(self.orders if orders is None else orders):
            yield from self.orders.get(n, [])

    def element(self, t: float = 0.0, orders: Iterable[int] | None = None, amps=None):
        """Backend element sum_w U_w(t) L_w over the requested orders."""
        elem = self.letters[0].op.zero_like()
        for e in self.entries(orders):
            a = e.amp if amps is None else _amp_product(amps, e.word)
            c = e.u(t) * a
            if c != 0:
                elem = elem + e.op * c
        return elem

    def order_element(self, n: int, t: float = 0.0):
        return self.element(t, [n])

    def word_sum(self, n: int, t: float = 0.0) -> List[Tuple[Word, complex]]:
        return [(e.word, e.u(t) * e.amp) for e in self.orders.get(n, [])]

    def coefficient(self, word: Word) -> ExpPoly:
        for e in self.orders.get(len(word), []):
            if e.word == tuple(word):
                return e.coeff
        return ExpPoly()


def _amp_product(amps, word):
    a = 1.0 + 0j
    for i in word:
        a *= amps[i]
    return a


def enumerate_words(letters: Sequence, n: int, max_grade: Mapping[str, int]) -> List[Word]:
    """Omega^n in lexicographic order, skipping words over the grade limits."""
    out: List[Word] = []
    nl = len(letters)
    grades = [getattr(l, "grade", {}) or {} for l in letters]

    def rec(prefix, tally):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for i in range(nl):
            new = dict(tally)
            ok = True
            for key, v in grades[i].items():
                new[key] = new.get(key, 0) + v
                if key in max_grade and new[key] > max_grade[key]:
                    ok = False
                    break
            if ok:
                prefix.append(i)
                rec(prefix, new)
                prefix.pop()

    rec([], {})
    return out


_TABLE_CACHE: Dict[tuple, Tuple[List[ExpPoly], CumulantTable]] = {}


def cumulant_table(fns: Sequence[ExpPoly], win: WindowSpec, moment_floor: float = 0.0) -> CumulantTable:
    """Shared cumulant table for a list of distinct time functions.

    The cumulants depend only on the time functions and the window, so
    tables are cached across models that share them (threshold scans).
    """
    key = (tuple(hash(f) for f in fns), win, moment_floor)
    hit = _TABLE_CACHE.get(key)
    if hit is not None and all(a == b for a, b in zip(hit[0], fns)):
        return hit[1]
    table = CumulantTable(MomentTable(fns, win, prune_rel=moment_floor))
    _TABLE_CACHE[key] = (list(fns), table)
    return table


def effective_generator(model, win: WindowSpec, policy: TruncationPolicy,
                        backend: str | None = None, build_ops: bool = True) -> GeneratorSeries:
    """Order-truncated effective generator sum_n sum_{|w|=n} U_w L_w.

    ``model`` has ``letters`` with attributes ``time`` (ExpPoly), ``op``
    (backend element), optional ``amp`` and ``grade``.  ``backend='free'``
    replaces the letter elements by free-algebra letters.
    """
    letters = list(model.letters)
    nl = len(letters)
    if nl ** policy.n_max > MAX_WORDS:
        raise SizeLimitError(f"|Omega|^n = {nl}^{policy.n_max} exceeds {MAX_WORDS}")
    if backend == "free":
        from .backends.freealg import FreeElem
        ops = [FreeElem.letter(i) for i in range(nl)]
    else:
        ops = [l.op for l in letters]
    amps = [complex(getattr(l, "amp", 1.0)) for l in letters]

    # distinct time functions
    fns: List[ExpPoly] = []
    tid: List[int] = []
    for l in letters:
        for j, f in enumerate(fns):
            if f == l.time:
                tid.append(j)
                break
        else:
            tid.append(len(fns))
            fns.append(l.time)
    table = cumulant_table(fns, win, policy.moment_floor)
    wcut = policy.cutoff(win)
    max_grade = dict(policy.max_grade)

    orders: Dict[int, List[Entry]] = {}
    op_cache: Dict[Word, object] = {}

    def op_of(w: Word):
        if w not in op_cache:
            op_cache[w] = ops[w[0]] if len(w) == 1 else op_of(w[:-1]) @ ops[w[-1]]
        return op_cache[w]

    for n in range(1, policy.n_max + 1):
        raw = []
        for w in enumerate_words(letters, n, max_grade):
            u = table[tuple(tid[i] for i in w)]
            if math.isfinite(wcut):
                u = u.prune(0.0, wcut)
            if u.is_zero():
                continue
            a = _amp_product(amps, w)
            raw.append((w, u, a))
        scale = max((u.max_abs() * abs(a) for _, u, a in raw), default=0.0)
        floor = policy.coeff_floor * scale
        kept = []
        for w, u, a in raw:
            if floor > 0 and abs(a) > 0:
                u = u.prune(floor / abs(a))
            if u.is_zero():
                continue
            kept.append(Entry(w, u, a, op_of(w) if build_ops else None))
        orders[n] = kept
    series_letters = [type("L", (), {"op": o}) for o in ops]
    return GeneratorSeries(orders, series_letters, policy.n_max, policy, win,
                           {"time_ids": tid, "n_fns": len(fns)})
