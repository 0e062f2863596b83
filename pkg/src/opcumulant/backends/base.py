from __future__ import annotations

from typing import Dict, Iterable, Protocol, Sequence, Tuple

from ..freewords import Word, dynkin_expand


class Backend(Protocol):
    def __add__(self, other): ...
    def __sub__(self, other): ...
    def __mul__(self, scalar): ...
    def __matmul__(self, other): ...
    def zero_like(self): ...
    def norm(self) -> float: ...


def commutator(a, b):
    return (a @ b) - (b @ a)


def compose_word(letters: Sequence, word: Word):
    elem = letters[word[0]]
    for i in word[1:]:
        elem = elem @ letters[i]
    return elem


def dynkin_project(terms: Iterable[Tuple[Word, complex]], letters: Sequence):
    """Split a homogeneous word sum into its Dynkin (Lie) image and the rest.

    ``terms`` are (word, coefficient) pairs; ``letters`` the backend
    elements of the alphabet.  Returns (lie_part, remainder) as backend
    elements.
    """
    terms = sorted(terms)
    if not terms:
        raise ValueError("empty word sum")
    n = len(terms[0][0])
    if any(len(w) != n for w, _ in terms):
        raise ValueError("dynkin_project expects a homogeneous order")
    zero = letters[0].zero_like()
    full, lie = zero, zero
    cache: Dict[Word, object] = {}

    def elem(w):
        if w not in cache:
            cache[w] = compose_word(letters, w)
        return cache[w]

    for w, c in terms:
        full = full + elem(w) * c
        for u, d in dynkin_expand(w).items():
            lie = lie + elem(u) * (c * float(d))
    return lie, full - lie
