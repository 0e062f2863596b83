"""Algebra backends.

Every element type supports ``+``, ``-``, scalar ``*``, and ``@`` for
operator composition in the *direct* reading: ``a @ b`` is the operator
"apply b, then a" acting on observables, i.e. L_a L_b.
"""
from .base import commutator, dynkin_project, compose_word, Backend
from .matrix import MatrixOp
from .psop import PsOp, PhaseFn
from .freealg import FreeElem

__all__ = ["commutator", "dynkin_project", "compose_word", "Backend",
           "MatrixOp", "PsOp", "PhaseFn", "FreeElem"]
