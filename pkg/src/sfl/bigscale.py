"""Configurable-precision reals and the dyadic scale ladder.

``BigReal`` wraps a raw mpmath ``mpf`` tuple together with its working
precision.  All arithmetic goes through the pure ``libmpf`` functions with an
explicit precision and round-to-nearest-even, so values are immutable and
operations carry no hidden global state.
"""
from __future__ import annotations

import contextlib
import math
import sys
import threading
from dataclasses import dataclass
from numbers import Integral, Real
from typing import Iterable, Union

from mpmath import libmp
from mpmath import mpf as _mp_mpf
from mpmath import workprec as _workprec

from .errors import DomainError, PrecisionError

DEFAULT_PRECISION = 256
MIN_PRECISION = 64
MAX_PRECISION_BITS = 1 << 20

_RND = libmp.round_nearest  # ties to even

Number = Union["BigReal", int, float, str]


def _raw(value, prec: int):
    if isinstance(value, BigReal):
        return value._mpf
    if isinstance(value, bool):
        return libmp.from_int(int(value))
    if isinstance(value, Integral):
        return libmp.from_int(int(value))
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise DomainError(f"non-finite value {value!r}")
        return libmp.from_float(value)
    if isinstance(value, str):
        try:
            if len(value) > 4000:
                with _long_int_strings():
                    return libmp.from_str(value.strip(), prec, _RND)
            return libmp.from_str(value.strip(), prec, _RND)
        except ValueError as exc:
            raise DomainError(f"cannot parse {value!r} as a real number") from exc
    if isinstance(value, tuple) and len(value) == 4:
        return value
    if isinstance(value, Real):
        return libmp.from_float(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to BigReal")


_INT_STR_LOCK = threading.Lock()


@contextlib.contextmanager
def _long_int_strings():
    """Lift the interpreter's int/str digit limit while formatting huge mantissas."""
    getter = getattr(sys, "get_int_max_str_digits", None)
    if getter is None:
        yield
        return
    with _INT_STR_LOCK:
        old = getter()
        sys.set_int_max_str_digits(0)
        try:
            yield
        finally:
            sys.set_int_max_str_digits(old)


class BigReal:
    """An immutable extended-precision real number.

    The result of a binary operation has the larger of the two operand
    precisions.  Plain Python numbers are converted exactly (``str`` inputs
    are rounded to the other operand's precision).
    """

    __slots__ = ("_mpf", "precision")

    def __init__(self, value: Number = 0, precision: int | None = None):
        if precision is None:
            precision = value.precision if isinstance(value, BigReal) else DEFAULT_PRECISION
        precision = int(precision)
        if precision < 2:
            raise DomainError(f"precision must be at least 2 bits, got {precision}")
        raw = _raw(value, precision)
        if raw in (libmp.fnan, libmp.finf, libmp.fninf):
            raise DomainError("non-finite value")
        object.__setattr__(self, "_mpf", libmp.mpf_pos(raw, precision, _RND))
        object.__setattr__(self, "precision", precision)

    @classmethod
    def _make(cls, raw, precision: int) -> "BigReal":
        if raw in (libmp.fnan, libmp.finf, libmp.fninf):
            raise DomainError("operation produced a non-finite value")
        obj = object.__new__(cls)
        object.__setattr__(obj, "_mpf", raw)
        object.__setattr__(obj, "precision", precision)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("BigReal is immutable")

    def __reduce__(self):
        return (BigReal._make, (self._mpf, self.precision))

    # -- coercion helpers -------------------------------------------------
    def _other(self, other):
        if isinstance(other, BigReal):
            return other._mpf, max(self.precision, other.precision)
        try:
            return _raw(other, self.precision), self.precision
        except TypeError:
            return None, None

    def with_precision(self, precision: int) -> "BigReal":
        return BigReal(self, precision)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        o, p = self._other(other)
        if o is None:
            return NotImplemented
        return BigReal._make(libmp.mpf_add(self._mpf, o, p, _RND), p)

    __radd__ = __add__

    def __sub__(self, other):
        o, p = self._other(other)
        if o is None:
            return NotImplemented
        return BigReal._make(libmp.mpf_sub(self._mpf, o, p, _RND), p)

    def __rsub__(self, other):
        o, p = self._other(other)
        if o is None:
            return NotImplemented
        return BigReal._make(libmp.mpf_sub(o, self._mpf, p, _RND), p)

    def __mul__(self, other):
        o, p = self._other(other)
        if o is None:
            return NotImplemented
        return BigReal._make(libmp.mpf_mul(self._mpf, o, p, _RND), p)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o, p = self._other(other)
        if o is None:
            return NotImplemented
        if o == libmp.fzero:
            raise ZeroDivisionError("BigReal division by zero")
        return BigReal._make(libmp.mpf_div(self._mpf, o, p, _RND), p)

    def __rtruediv__(self, other):
        o, p = self._other(other)
        if o is None:
            return NotImplemented
        if self._mpf == libmp.fzero:
            raise ZeroDivisionError("BigReal division by zero")
        return BigReal._make(libmp.mpf_div(o, self._mpf, p, _RND), p)

    def __pow__(self, exponent):
        if isinstance(exponent, Integral):
            if exponent < 0 and self._mpf == libmp.fzero:
                raise ZeroDivisionError("0 to a negative power")
            return BigReal._make(libmp.mpf_pow_int(self._mpf, int(exponent), self.precision, _RND),
                                 self.precision)
        o, p = self._other(exponent)
        if o is None:
            return NotImplemented
        if self.sign() <= 0:
            raise DomainError("non-integer power of a non-positive number")
        return BigReal._make(libmp.mpf_pow(self._mpf, o, p, _RND), p)

    def __neg__(self):
        return BigReal._make(libmp.mpf_neg(self._mpf), self.precision)

    def __pos__(self):
        return self

    def __abs__(self):
        return BigReal._make(libmp.mpf_abs(self._mpf), self.precision)

    # -- comparisons ------------------------------------------------------
    def _cmp(self, other):
        o, _ = self._other(other)
        if o is None:
            return None
        return libmp.mpf_cmp(self._mpf, o)

    def __eq__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is None else c == 0

    def __lt__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is None else c < 0

    def __le__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is None else c <= 0

    def __gt__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is None else c > 0

    def __ge__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is None else c >= 0

    def __hash__(self):
        return libmp.mpf_hash(self._mpf)

    def __bool__(self):
        return self._mpf != libmp.fzero

    # -- elementary functions --------------------------------------------
    def sign(self) -> int:
        return libmp.mpf_sign(self._mpf)

    def sqrt(self) -> "BigReal":
        if self.sign() < 0:
            raise DomainError("square root of a negative number")
        return BigReal._make(libmp.mpf_sqrt(self._mpf, self.precision, _RND), self.precision)

    def ln(self) -> "BigReal":
        if self.sign() <= 0:
            raise DomainError("logarithm of a non-positive number")
        return BigReal._make(libmp.mpf_log(self._mpf, self.precision, _RND), self.precision)

    def exp(self) -> "BigReal":
        return BigReal._make(libmp.mpf_exp(self._mpf, self.precision, _RND), self.precision)

    def floor(self) -> int:
        return int(libmp.to_int(libmp.mpf_floor(self._mpf)))

    def ceil(self) -> int:
        return int(libmp.to_int(libmp.mpf_ceil(self._mpf)))

    def log2_magnitude(self) -> int:
        """Binary exponent e with 2**(e-1) <= |x| < 2**e (0 for x == 0)."""
        if not self:
            return 0
        sign, man, exp, bc = self._mpf
        return exp + bc

    # -- conversion -------------------------------------------------------
    def __float__(self):
        return libmp.to_float(self._mpf)

    def to_mpmath(self):
        """Return an ``mpmath.mpf`` with the same value (for oracles and interop)."""
        with _workprec(self.precision):
            return _mp_mpf(self._mpf)

    def to_decimal(self) -> str:
        """Shortest decimal string that reads back to exactly this value."""
        if not self:
            return "0.0"
        with _long_int_strings():
            lo, hi = 1, libmp.repr_dps(self.precision) + 1
            while lo < hi:
                mid = (lo + hi) // 2
                if libmp.from_str(libmp.to_str(self._mpf, mid), self.precision, _RND) == self._mpf:
                    hi = mid
                else:
                    lo = mid + 1
            return libmp.to_str(self._mpf, lo)

    def __str__(self):
        return self.to_decimal()

    def __repr__(self):
        return f"BigReal('{self.to_decimal()}', precision={self.precision})"

    def __format__(self, spec):
        if not spec:
            return str(self)
        return format(float(self), spec)


def big(value: Number, precision: int | None = None) -> BigReal:
    """Coerce ``value`` to a BigReal (no copy when already one at that precision)."""
    if isinstance(value, BigReal) and (precision is None or value.precision == precision):
        return value
    return BigReal(value, precision)


def e_const(precision: int = DEFAULT_PRECISION) -> BigReal:
    return BigReal._make(libmp.mpf_e(precision, _RND), precision)


def pi_const(precision: int = DEFAULT_PRECISION) -> BigReal:
    return BigReal._make(libmp.mpf_pi(precision, _RND), precision)


def bsum(values: Iterable[BigReal], precision: int | None = None) -> BigReal:
    """Left-to-right sum (fixed order, so results are bit-reproducible)."""
    total = None
    for v in values:
        total = v if total is None else total + v
    if total is None:
        return BigReal(0, precision or DEFAULT_PRECISION)
    return total


def bprod(values: Iterable[BigReal], precision: int | None = None) -> BigReal:
    total = None
    for v in values:
        total = v if total is None else total * v
    if total is None:
        return BigReal(1, precision or DEFAULT_PRECISION)
    return total


def _check_unit_base(base: BigReal, what: str = "base") -> None:
    if not (0 < base < 1):
        raise DomainError(f"{what} out of range: {base} not in (0, 1)")


def pow_tower(base: Number, level: int) -> BigReal:
    """Return ``base ** (2 ** level)`` by ``level`` successive squarings."""
    base = big(base)
    _check_unit_base(base)
    if int(level) != level or level < 0:
        raise DomainError(f"level must be a non-negative integer, got {level}")
    x = base
    for _ in range(int(level)):
        x = x * x
    return x


@dataclass(frozen=True)
class DyadicScale:
    """The rung ``base ** (2 ** level)`` of the infinitesimal scale ladder."""

    base: BigReal
    level: int
    log_value: BigReal

    @classmethod
    def of(cls, base: Number, level: int) -> "DyadicScale":
        base = big(base)
        _check_unit_base(base)
        if level < 0:
            raise DomainError("level must be non-negative")
        return cls(base, level, base.ln() * (1 << level))

    @property
    def value(self) -> BigReal:
        return pow_tower(self.base, self.level)


def required_precision(eta: Number, depth: int, guard_digits: int = 10,
                       ceiling: int = MAX_PRECISION_BITS) -> int:
    """Bits needed so that ``1 - eta**(2**(depth+1))`` keeps ``guard_digits`` digits.

    The finest cascade scale must survive next to 1, so the count is
    ``(2**(depth+1) * log10(1/eta) + guard_digits) * log2(10)``, never below
    ``MIN_PRECISION``.
    """
    eta = big(eta)
    _check_unit_base(eta, "eta")
    if depth < 0:
        raise DomainError("depth must be non-negative")
    if guard_digits < 0:
        raise DomainError("guard_digits must be non-negative")
    log10_inv = -float(eta.with_precision(64).ln()) / math.log(10)
    digits = (1 << (depth + 1)) * log10_inv + guard_digits
    bits = max(MIN_PRECISION, math.ceil(digits * math.log2(10)))
    if bits > ceiling:
        raise PrecisionError(f"required precision {bits} bits exceeds ceiling {ceiling}")
    return bits


def log_product_accumulate(terms: Iterable[Number]) -> BigReal:
    """Sum of ``ln(term)`` in index order; the log of the product of ``terms``."""
    total = None
    for i, term in enumerate(terms):
        term = big(term)
        if term.sign() <= 0:
            raise DomainError(f"term {i} is not strictly positive: {term}")
        lt = term.ln()
        total = lt if total is None else total + lt
    return total if total is not None else BigReal(0)
