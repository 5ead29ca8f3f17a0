"""Noncommutative *-polynomials with exact symbolic calculus.

A polynomial is a finite map ``Word -> complex`` where a word is a tuple of
:class:`Letter`.  The empty word is the unit.  Every operation returns a new
canonical polynomial (zero coefficients purged, words sorted by degree then
lexicographically), so equality of polynomials is equality of term maps.

The two derivations live here as well:

* ``cyclic_grad(P, i)``  sends each occurrence ``Q X_i R`` to ``R Q``;
* ``diff_quot(P, i)``    sends each occurrence ``Q X_i R`` to ``Q (x) R``.

Both are defined on adjoint-free polynomials only and raise
:class:`DomainError` otherwise.
"""

from __future__ import annotations

from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence, Union

import numpy as np

Scalar = Union[int, float, complex]


class PolyError(ValueError):
    """Base class for polynomial algebra errors."""


class DimensionError(PolyError):
    """Operands disagree on the number of variables or matrix shapes."""


class DomainError(PolyError):
    """Operation applied outside the domain where it is defined."""


class Letter(NamedTuple):
    index: int
    starred: bool = False

    def star(self) -> "Letter":
        return Letter(self.index, not self.starred)

    def __str__(self) -> str:
        return f"X{self.index}" + ("*" if self.starred else "")


Word = tuple  # tuple[Letter, ...]


def _word_key(w: Word):
    return (len(w), w)


def _clean(z: Scalar) -> complex:
    z = complex(z)
    if not (np.isfinite(z.real) and np.isfinite(z.imag)):
        raise DomainError(f"non-finite coefficient {z!r}")
    return z


class NCPoly:
    """Immutable polynomial in ``nvars`` noncommuting letters and their adjoints."""

    __slots__ = ("_terms", "_nvars", "_hash")

    def __init__(self, terms: Mapping[Word, Scalar] | Iterable = (), nvars: int = 1):
        if nvars < 1:
            raise DimensionError(f"nvars must be >= 1, got {nvars}")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for word, coef in items:
            word = tuple(Letter(int(l[0]), bool(l[1])) for l in word)
            for letter in word:
                if not 1 <= letter.index <= nvars:
                    raise DimensionError(
                        f"letter {letter} outside 1..{nvars}"
                    )
            acc[word] = acc.get(word, 0j) + _clean(coef)
        canon = {w: acc[w] for w in sorted(acc, key=_word_key) if acc[w] != 0}
        self._terms = MappingProxyType(canon)
        self._nvars = nvars
        self._hash = None

    def __reduce__(self):
        return (NCPoly, (dict(self._terms), self._nvars))

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "NCPoly":
        return cls({}, nvars)

    @classmethod
    def const(cls, z: Scalar, nvars: int) -> "NCPoly":
        return cls({(): z}, nvars)

    @classmethod
    def var(cls, i: int, nvars: int, starred: bool = False) -> "NCPoly":
        return cls({(Letter(i, starred),): 1.0}, nvars)

    @classmethod
    def monomial(cls, word: Sequence, nvars: int, coef: Scalar = 1.0) -> "NCPoly":
        return cls({tuple(word): coef}, nvars)

    # -- accessors ----------------------------------------------------------

    @property
    def nvars(self) -> int:
        return self._nvars

    @property
    def terms(self) -> Mapping[Word, complex]:
        return self._terms

    def __iter__(self) -> Iterator[tuple[Word, complex]]:
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def coefficient(self, word: Sequence) -> complex:
        return self._terms.get(tuple(word), 0j)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        """Maximum word length; ``-1`` for the zero polynomial."""
        return max((len(w) for w in self._terms), default=-1)

    def has_adjoints(self) -> bool:
        return any(l.starred for w in self._terms for l in w)

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> "NCPoly":
        if isinstance(other, NCPoly):
            if other._nvars != self._nvars:
                raise DimensionError(
                    f"nvars mismatch: {self._nvars} vs {other._nvars}"
                )
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return NCPoly.const(other, self._nvars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return NCPoly(list(self) + list(other), self._nvars)

    __radd__ = __add__

    def __neg__(self):
        return NCPoly({w: -c for w, c in self}, self._nvars)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = []
        for w1, c1 in self:
            for w2, c2 in other:
                out.append((w1 + w2, c1 * c2))
        return NCPoly(out, self._nvars)

    def __rmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise DomainError(f"exponent must be a non-negative integer, got {k!r}")
        out = NCPoly.const(1.0, self._nvars)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float, complex)):
            other = NCPoly.const(other, self._nvars)
        if not isinstance(other, NCPoly):
            return NotImplemented
        return self._nvars == other._nvars and dict(self._terms) == dict(other._terms)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._nvars, tuple(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        from .polylang import print_poly

        return f"NCPoly({print_poly(self)!r}, nvars={self._nvars})"

    def __str__(self) -> str:
        from .polylang import print_poly

        return print_poly(self)


def nc_add(p: NCPoly, q: NCPoly) -> NCPoly:
    return p + q


def nc_mul(p: NCPoly, q: NCPoly) -> NCPoly:
    return p * q


def nc_scale(z: Scalar, p: NCPoly) -> NCPoly:
    return NCPoly({w: z * c for w, c in p}, p.nvars)


def _star_word(w: Word) -> Word:
    return tuple(l.star() for l in reversed(w))


def adjoint(p: NCPoly) -> NCPoly:
    """Formal adjoint: reverse words, toggle stars, conjugate coefficients."""
    return NCPoly({_star_word(w): c.conjugate() for w, c in p}, p.nvars)


def star_swap(p: NCPoly) -> NCPoly:
    """Substitute ``X_i <-> X_i*`` letterwise without reversing words."""
    return NCPoly({tuple(l.star() for l in w): c for w, c in p}, p.nvars)


def is_self_adjoint(p: NCPoly) -> bool:
    """True iff ``P(X)* == P(X*)``, i.e. coef(w) == conj(coef(reversed w))."""
    return star_swap(adjoint(p)) == p


def _check_index(p: NCPoly, i: int) -> None:
    if not 1 <= i <= p.nvars:
        raise DimensionError(f"index {i} outside 1..{p.nvars}")
    if p.has_adjoints():
        raise DomainError("derivations are defined on adjoint-free polynomials only")


def _occurrences(w: Word, i: int) -> Iterator[int]:
    target = Letter(i, False)
    return (k for k, l in enumerate(w) if l == target)


def cyclic_grad(p: NCPoly, i: int) -> NCPoly:
    """Cyclic derivative ``D_i P``: each occurrence ``Q X_i R`` becomes ``R Q``."""
    _check_index(p, i)
    out = []
    for w, c in p:
        for k in _occurrences(w, i):
            out.append((w[k + 1 :] + w[:k], c))
    return NCPoly(out, p.nvars)


def gradient(p: NCPoly) -> tuple[NCPoly, ...]:
    return tuple(cyclic_grad(p, i) for i in range(1, p.nvars + 1))


class TensorPoly:
    """Finite sum of elementary tensors ``left (x) right``.

    Not normalized: two instances may represent the same tensor with
    different summand lists.  Compare with :meth:`expanded` or by pairing.
    """

    __slots__ = ("summands", "nvars")

    def __init__(self, summands: Iterable[tuple[NCPoly, NCPoly]] = (), nvars: int | None = None):
        summands = tuple((a, b) for a, b in summands)
        for a, b in summands:
            if a.nvars != b.nvars:
                raise DimensionError("tensor factors disagree on nvars")
        if nvars is None:
            if not summands:
                raise DimensionError("empty TensorPoly needs explicit nvars")
            nvars = summands[0][0].nvars
        if any(a.nvars != nvars for a, _ in summands):
            raise DimensionError("tensor summands disagree on nvars")
        self.summands = summands
        self.nvars = nvars

    def __iter__(self):
        return iter(self.summands)

    def __len__(self) -> int:
        return len(self.summands)

    def __add__(self, other: "TensorPoly") -> "TensorPoly":
        if other.nvars != self.nvars:
            raise DimensionError("nvars mismatch")
        return TensorPoly(self.summands + other.summands, self.nvars)

    def __mul__(self, other: "TensorPoly") -> "TensorPoly":
        """Product in the algebra ``A (x) A``: ``(a(x)b)(c(x)d) = ac (x) bd``."""
        if other.nvars != self.nvars:
            raise DimensionError("nvars mismatch")
        return TensorPoly(
            [(a * c, b * d) for a, b in self for c, d in other], self.nvars
        )

    def scale(self, z: Scalar) -> "TensorPoly":
        return TensorPoly([(nc_scale(z, a), b) for a, b in self], self.nvars)

    def expanded(self) -> dict:
        """Coefficients in the word-pair basis; zero entries dropped."""
        acc: dict = {}
        for a, b in self:
            for wa, ca in a:
                for wb, cb in b:
                    acc[(wa, wb)] = acc.get((wa, wb), 0j) + ca * cb
        return {k: v for k, v in acc.items() if v != 0}

    def is_zero(self) -> bool:
        return not self.expanded()

    def pair(self, left, right) -> complex:
        """Apply ``left (x) right`` for linear functionals on NCPoly."""
        return sum((left(a) * right(b) for a, b in self), 0j)

    def __str__(self) -> str:
        from .polylang import print_tensor

        return print_tensor(self)

    def __repr__(self) -> str:
        return f"TensorPoly({str(self)!r}, nvars={self.nvars})"


def tensor(a: NCPoly, b: NCPoly) -> TensorPoly:
    return TensorPoly([(a, b)])


def diff_quot(p: NCPoly, i: int) -> TensorPoly:
    """Free difference quotient ``d_i P``: ``Q X_i R`` becomes ``Q (x) R``."""
    _check_index(p, i)
    m = p.nvars
    out = []
    for w, c in p:
        for k in _occurrences(w, i):
            out.append((NCPoly.monomial(w[:k], m, c), NCPoly.monomial(w[k + 1 :], m)))
    return TensorPoly(out, m)


def tensor_mul_flip_contract(t: TensorPoly) -> NCPoly:
    """``sum Q_j (x) R_j  ->  sum R_j Q_j``."""
    out = NCPoly.zero(t.nvars)
    for a, b in t:
        out = out + b * a
    return out


def evaluate(p: NCPoly, X: np.ndarray) -> np.ndarray:
    """Substitute matrices for letters.

    ``X`` has shape ``(..., m, N, N)``; the leading axes broadcast, so a batch
    of tuples can be evaluated at once.  Starred letters evaluate to the
    conjugate transpose.  Shared word prefixes are multiplied once.
    """
    X = np.asarray(X)
    if X.ndim < 3 or X.shape[-1] != X.shape[-2]:
        raise DimensionError(f"expected (..., m, N, N) array, got shape {X.shape}")
    if X.shape[-3] != p.nvars:
        raise DimensionError(f"polynomial has {p.nvars} variables, tuple has {X.shape[-3]}")
    n = X.shape[-1]
    batch = X.shape[:-3]
    dtype = np.result_type(X.dtype, np.complex128)

    letters = {}

    def letter_value(l: Letter):
        if l not in letters:
            a = X[..., l.index - 1, :, :]
            letters[l] = np.conj(np.swapaxes(a, -1, -2)) if l.starred else a
        return letters[l]

    cache: dict = {}

    def word_value(w: Word):
        if len(w) == 1:
            return letter_value(w[0])
        if w not in cache:
            cache[w] = word_value(w[:-1]) @ letter_value(w[-1])
        return cache[w]

    out = np.zeros(batch + (n, n), dtype=dtype)
    for w, c in p:
        if not w:
            out = out + c * np.eye(n, dtype=dtype)
        elif c == 1:
            out = out + word_value(w)
        else:
            out = out + c * word_value(w)
    return out
