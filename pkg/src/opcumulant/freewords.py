"""Words over a finite alphabet: compositions, contiguous partitions and
the right-nested Dynkin bracket expansion.

Letters are plain ints and words are tuples of ints.  Weights returned
here are exact ``Fraction`` values; floating point only enters in the
algebra backends.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations, product
from math import comb
from typing import Dict, Iterator, List, Sequence, Tuple

Word = Tuple[int, ...]
WordSum = Dict[Word, Fraction]


class EmptyDomainError(ValueError):
    pass


def as_word(letters: Sequence[int]) -> Word:
    w = tuple(int(x) for x in letters)
    if not w:
        raise ValueError("words must be nonempty")
    if any(x < 0 for x in w):
        raise ValueError("letter ids are nonnegative")
    return w


def concat(w: Word, v: Word) -> Word:
    return tuple(w) + tuple(v)


def all_words(alphabet_size: int, n: int) -> Iterator[Word]:
    """Omega^n in lexicographic order."""
    return product(range(alphabet_size), repeat=n)


def compositions(n: int, k: int) -> List[Tuple[int, ...]]:
    """All compositions of n into exactly k positive parts, lexicographic."""
    if n < 1 or k < 1 or k > n:
        raise EmptyDomainError(f"no compositions of n={n} into k={k} parts")
    out = []
    # choose k-1 cut positions among 1..n-1
    for cuts in combinations(range(1, n), k - 1):
        edges = (0,) + cuts + (n,)
        out.append(tuple(edges[i + 1] - edges[i] for i in range(k)))
    out.sort()
    return out


def split_by(w: Word, parts: Sequence[int]) -> Tuple[Word, ...]:
    blocks, i = [], 0
    for m in parts:
        blocks.append(tuple(w[i:i + m]))
        i += m
    if i != len(w):
        raise ValueError("composition does not match word length")
    return tuple(blocks)


def ordered_partitions(w: Word, k: int | None = None) -> List[Tuple[Word, ...]]:
    """Contiguous block decompositions of ``w``.

    Sorted by number of blocks, then by the composition.  With ``k`` given
    only the decompositions into k blocks are returned.
    """
    w = as_word(w)
    n = len(w)
    ks = [k] if k is not None else range(1, n + 1)
    out = []
    for kk in ks:
        for parts in compositions(n, kk):
            out.append(split_by(w, parts))
    return out


def _bracket(x: WordSum, y: WordSum) -> WordSum:
    out: WordSum = {}
    for u, a in x.items():
        for v, b in y.items():
            for word, s in ((u + v, a * b), (v + u, -a * b)):
                c = out.get(word, Fraction(0)) + s
                if c:
                    out[word] = c
                else:
                    out.pop(word, None)
    return out


def dynkin_expand(w: Word) -> WordSum:
    """(1/n)[w1,[w2,[...,[w_{n-1},w_n]...]]] expanded into words.

    Same-length words with weights +-1/n (repeated letters may merge
    terms into integer multiples of 1/n).
    """
    w = as_word(w)
    n = len(w)
    acc: WordSum = {(w[-1],): Fraction(1)}
    for letter in reversed(w[:-1]):
        acc = _bracket({(letter,): Fraction(1)}, acc)
    return {u: c / n for u, c in sorted(acc.items()) if c}


def dynkin_apply(x: WordSum) -> WordSum:
    """Linear extension of dynkin_expand to a weighted word sum."""
    out: WordSum = {}
    for w, c in x.items():
        for u, d in dynkin_expand(w).items():
            s = out.get(u, Fraction(0)) + c * d
            if s:
                out[u] = s
            else:
                out.pop(u, None)
    return dict(sorted(out.items()))


def count_compositions(n: int, k: int) -> int:
    return comb(n - 1, k - 1)
