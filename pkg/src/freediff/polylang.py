"""Text format for polynomials.

Grammar::

    expression := term (('+' | '-') term)*
    term       := '-' term | '+' term | factor ('*' factor)*
    factor     := scalar | variable | variable '^' int | '(' expression ')'
    variable   := 'X' int | 'X' int '*'
    scalar     := decimal | decimal 'i' | 'i'

``X3*`` is the adjoint letter.  A ``*`` directly after a variable index is
read as the adjoint mark unless the next non-blank character starts another
factor, in which case it is multiplication: ``X1*X2`` is a product and
``X1**X2`` is ``X1*`` times ``X2``.

The printer emits exactly this grammar and ``parse_poly(print_poly(P)) == P``
holds bit-for-bit on coefficients.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .ncpoly import DimensionError, DomainError, NCPoly, PolyError, TensorPoly

MAX_EXPONENT = 256
MAX_NESTING = 200

_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_INT = re.compile(r"\d+")
_FACTOR_START = set("X0123456789.(i")


class PolySyntaxError(PolyError):
    """Malformed polynomial text; carries a 1-based line and column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class ArityError(DimensionError):
    """Variable index outside ``1..nvars``."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class PolySource:
    text: str
    nvars: Optional[int] = None


@dataclass
class _Tok:
    kind: str  # NUM, INT, VAR, OP, END
    value: object
    pos: int


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[_Tok] = []

    def linecol(self, pos: int) -> tuple[int, int]:
        before = self.text[:pos]
        line = before.count("\n") + 1
        col = pos - (before.rfind("\n") + 1) + 1
        return line, col

    def error(self, msg: str, pos: int) -> PolySyntaxError:
        return PolySyntaxError(msg, *self.linecol(pos))

    def run(self) -> list[_Tok]:
        s = self.text
        i = 0
        while i < len(s):
            ch = s[i]
            if ch.isspace():
                i += 1
            elif ch in "+-*^()":
                self.tokens.append(_Tok("OP", ch, i))
                i += 1
            elif ch == "X":
                i = self._variable(i)
            elif ch == "i":
                self.tokens.append(_Tok("NUM", 1j, i))
                i += 1
            elif ch.isascii() and (ch.isdigit() or ch == "."):
                i = self._number(i)
            else:
                raise self.error(f"unexpected character {ch!r}", i)
        self.tokens.append(_Tok("END", None, len(s)))
        return self.tokens

    def _number(self, i: int) -> int:
        m = _NUMBER.match(self.text, i)
        if m is None:
            raise self.error("malformed number", i)
        lit = m.group(0)
        end = m.end()
        x = float(lit)
        if x == float("inf"):
            line, col = self.linecol(i)
            raise DomainError(f"line {line}, col {col}: literal {lit[:20]!r} overflows")
        if end < len(self.text) and self.text[end] == "i":
            self.tokens.append(_Tok("NUM", complex(0.0, x), i))
            return end + 1
        kind = "INT" if _INT.fullmatch(lit) else "NUM"
        self.tokens.append(_Tok(kind, int(lit.lstrip("0") or "0") if kind == "INT" else x, i))
        return end

    def _variable(self, i: int) -> int:
        m = _INT.match(self.text, i + 1)
        if m is None:
            raise self.error("expected variable index after 'X'", i + 1)
        digits = m.group(0).lstrip("0") or "0"
        index = int(digits) if len(digits) <= 18 else 10**18
        j = m.end()
        starred = False
        if j < len(self.text) and self.text[j] == "*":
            k = j + 1
            while k < len(self.text) and self.text[k].isspace():
                k += 1
            if k >= len(self.text) or self.text[k] not in _FACTOR_START:
                starred = True
                j += 1
        self.tokens.append(_Tok("VAR", (index, starred), i))
        return j


class _Parser:
    def __init__(self, lexer: _Lexer, nvars: int):
        self.lexer = lexer
        self.toks = lexer.tokens
        self.k = 0
        self.nvars = nvars
        self.depth = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.k]

    def is_op(self, ch: str) -> bool:
        return self.tok.kind == "OP" and self.tok.value == ch

    def error(self, msg: str, tok: Optional[_Tok] = None) -> PolySyntaxError:
        tok = tok or self.tok
        return self.lexer.error(msg, tok.pos)

    def parse(self) -> NCPoly:
        if self.tok.kind == "END":
            raise self.error("empty expression")
        p = self.expression()
        if self.tok.kind != "END":
            raise self.error(f"unexpected {self._describe(self.tok)}")
        return p

    def expression(self) -> NCPoly:
        p = self.term()
        while self.is_op("+") or self.is_op("-"):
            op = self.tok
            self.k += 1
            q = self.term()
            p = self._arith(op, lambda: p + q if op.value == "+" else p - q)
        return p

    def term(self) -> NCPoly:
        if self.is_op("-") or self.is_op("+"):
            op = self.tok.value
            self._enter()
            self.k += 1
            p = self.term()
            self.depth -= 1
            return -p if op == "-" else p
        p = self.factor()
        while self.is_op("*"):
            op = self.tok
            self.k += 1
            q = self.factor()
            p = self._arith(op, lambda: p * q)
        return p

    def _arith(self, op: _Tok, thunk) -> NCPoly:
        try:
            return thunk()
        except DomainError as exc:
            line, col = self.lexer.linecol(op.pos)
            raise DomainError(f"line {line}, col {col}: {exc}") from None

    def factor(self) -> NCPoly:
        tok = self.tok
        if tok.kind in ("NUM", "INT"):
            self.k += 1
            return NCPoly.const(tok.value, self.nvars)
        if tok.kind == "VAR":
            self.k += 1
            index, starred = tok.value
            if not 1 <= index <= self.nvars:
                raise ArityError(
                    f"variable X{index} outside X1..X{self.nvars}",
                    *self.lexer.linecol(tok.pos),
                )
            base = NCPoly.var(index, self.nvars, starred)
            if self.is_op("^"):
                self.k += 1
                return base ** self.exponent()
            return base
        if self.is_op("("):
            self._enter()
            self.k += 1
            p = self.expression()
            if not self.is_op(")"):
                raise self.error(f"expected ')' but found {self._describe(self.tok)}")
            self.k += 1
            self.depth -= 1
            return p
        raise self.error(f"expected a factor but found {self._describe(tok)}")

    def exponent(self) -> int:
        tok = self.tok
        if self.is_op("-"):
            line, col = self.lexer.linecol(tok.pos)
            raise DomainError(f"line {line}, col {col}: negative exponent")
        if tok.kind != "INT":
            raise self.error(f"expected integer exponent but found {self._describe(tok)}")
        if tok.value > MAX_EXPONENT:
            line, col = self.lexer.linecol(tok.pos)
            raise DomainError(f"line {line}, col {col}: exponent exceeds {MAX_EXPONENT}")
        self.k += 1
        return tok.value

    def _enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_NESTING:
            raise self.error("nesting too deep")

    @staticmethod
    def _describe(tok: _Tok) -> str:
        if tok.kind == "END":
            return "end of input"
        if tok.kind == "VAR":
            index, starred = tok.value
            return f"variable X{index}{'*' if starred else ''}"
        return repr(tok.value) if tok.kind == "OP" else f"number {tok.value!r}"


def parse_poly(src, nvars: Optional[int] = None) -> NCPoly:
    """Parse polynomial text (``str``, ``bytes`` or :class:`PolySource`).

    With ``nvars=None`` the arity is the largest variable index present
    (at least 1).  Raises :class:`PolySyntaxError`, :class:`ArityError` or
    :class:`DomainError`; every error message carries line and column.
    """
    if isinstance(src, PolySource):
        src, nvars = src.text, src.nvars if nvars is None else nvars
    if isinstance(src, (bytes, bytearray)):
        try:
            src = bytes(src).decode("utf-8")
        except UnicodeDecodeError as exc:
            prefix = bytes(src)[: exc.start].decode("utf-8", errors="replace")
            line = prefix.count("\n") + 1
            col = len(prefix) - (prefix.rfind("\n") + 1) + 1
            raise PolySyntaxError("invalid UTF-8", line, col) from None
    if not isinstance(src, str):
        raise TypeError(f"expected text, got {type(src).__name__}")
    lexer = _Lexer(src)
    tokens = lexer.run()
    if nvars is None:
        nvars = max([t.value[0] for t in tokens if t.kind == "VAR"] + [1])
        nvars = max(nvars, 1)
    elif nvars < 1:
        raise DimensionError(f"nvars must be >= 1, got {nvars}")
    return _Parser(lexer, nvars).parse()


# -- printing ----------------------------------------------------------------


def _fmt(x: float) -> str:
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _word_text(word) -> str:
    parts = []
    k = 0
    while k < len(word):
        j = k
        while j < len(word) and word[j] == word[k]:
            j += 1
        run = j - k
        parts.append(str(word[k]) + (f"^{run}" if run > 1 else ""))
        k = j
    return "*".join(parts)


def _term_text(word, c: complex) -> tuple[str, str]:
    """Return (sign, body) for one term."""
    w = _word_text(word)
    if c.imag == 0:
        sign = "-" if c.real < 0 else "+"
        mag = abs(c.real)
        if w and mag == 1:
            return sign, w
        coef = _fmt(mag)
    elif c.real == 0:
        sign = "-" if c.imag < 0 else "+"
        mag = abs(c.imag)
        coef = "i" if mag == 1 else _fmt(mag) + "i"
    else:
        sign = "+"
        op = "-" if c.imag < 0 else "+"
        coef = f"({_fmt(c.real)}{op}{_fmt(abs(c.imag))}i)"
    return sign, coef + ("*" + w if w else "")


def print_poly(p: NCPoly) -> str:
    """Deterministic canonical rendering, e.g. ``0.5*X1^2 - X1*X2``."""
    if p.is_zero():
        return "0"
    out = []
    for n, (word, c) in enumerate(p):
        sign, body = _term_text(word, c)
        if n == 0:
            out.append(("-" if sign == "-" else "") + body)
        else:
            out.append(f" {sign} {body}")
    return "".join(out)


def print_tensor(t: TensorPoly) -> str:
    """Render ``sum L (x) R``; multi-term factors are parenthesized."""
    parts = []
    for a, b in t:
        sides = []
        for q in (a, b):
            s = print_poly(q)
            sides.append(f"({s})" if len(q) > 1 else s)
        parts.append(" (x) ".join(sides))
    return " + ".join(parts) if parts else "0"
