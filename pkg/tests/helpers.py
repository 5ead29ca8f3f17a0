"""Independent oracles and random generators shared by the test modules."""

from collections import Counter

import numpy as np
from hypothesis import strategies as st

from freediff import Letter, NCPoly


def brute_force_splittings(word, i):
    """All (Q, R) with word == Q + [X_i] + R, found by scanning every
    contiguous slice for one equal to the single letter X_i."""
    target = [(i, False)]
    found = []
    n = len(word)
    for a in range(n + 1):
        for b in range(a, n + 1):
            if list(word[a:b]) == target:
                found.append((tuple(word[:a]), tuple(word[b:])))
    return found


def oracle_cyclic(word, i):
    return Counter(r + q for q, r in brute_force_splittings(word, i))


def oracle_quotient(word, i):
    return Counter(brute_force_splittings(word, i))


def as_plain(word):
    return tuple((l.index, l.starred) for l in word)


def random_word(rng, m, max_deg, starred=False):
    deg = int(rng.integers(0, max_deg + 1))
    return tuple(
        Letter(int(rng.integers(1, m + 1)), bool(starred and rng.integers(0, 2)))
        for _ in range(deg)
    )


def random_poly(rng, m, max_deg=4, max_terms=4, starred=False, integer=True):
    """Gaussian-integer coefficients keep symbolic identities bit-exact."""
    terms = {}
    for _ in range(int(rng.integers(0, max_terms + 1))):
        w = random_word(rng, m, max_deg, starred)
        if integer:
            c = complex(int(rng.integers(-3, 4)), int(rng.integers(-3, 4)))
        else:
            c = complex(rng.normal(), rng.normal())
        terms[w] = terms.get(w, 0) + c
    return NCPoly(terms, m)


def random_hermitian_tuple(rng, m, n, scale=1.0):
    g = rng.normal(size=(m, n, n)) + 1j * rng.normal(size=(m, n, n))
    return scale * (g + np.conj(np.swapaxes(g, -1, -2))) / (2 * np.sqrt(n))


letters = st.builds(Letter, st.integers(1, 3), st.booleans())
words = st.lists(letters, max_size=5).map(tuple)
finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
coefs = st.one_of(
    finite.map(complex),
    st.builds(complex, finite, finite),
    st.builds(complex, st.just(0.0), finite),
)


small = st.floats(-1e6, 1e6, allow_nan=False)
small_coefs = st.builds(complex, small, small)


@st.composite
def polys(draw, nvars=3, starred=True, coefficients=coefs):
    wl = words if starred else st.lists(st.builds(Letter, st.integers(1, nvars), st.just(False)), max_size=5).map(tuple)
    items = draw(st.lists(st.tuples(wl, coefficients), max_size=5))
    items = [(w, c) for w, c in items if all(l.index <= nvars for l in w)]
    # distinct words only, so no coefficient sums (which could overflow) occur
    seen = {}
    for w, c in items:
        seen.setdefault(w, c)
    return NCPoly(seen, nvars)
