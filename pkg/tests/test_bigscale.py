from __future__ import annotations

import math
import pickle

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfl.bigscale import (BigReal, DyadicScale, big, bprod, bsum, e_const, log_product_accumulate,
                          pi_const, pow_tower, required_precision)
from sfl.errors import DomainError, PrecisionError

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
unit_open = st.floats(min_value=1e-3, max_value=0.999, allow_nan=False)


@given(finite, finite)
def test_arithmetic_matches_mpmath(x, y):
    a, b = BigReal(x, 200), BigReal(y, 200)
    with mpmath.workprec(200):
        mx, my = mpmath.mpf(x), mpmath.mpf(y)
        assert (a + b).to_mpmath() == mx + my
        assert (a - b).to_mpmath() == mx - my
        assert (a * b).to_mpmath() == mx * my
        if y != 0:
            assert (a / b).to_mpmath() == mx / my


def test_transcendentals_match_mpmath():
    x = big("0.7", 256)
    with mpmath.workprec(256):
        mx = mpmath.mpf("0.7")
        assert x.ln().to_mpmath() == mpmath.log(mx)
        assert x.exp().to_mpmath() == mpmath.exp(mx)
        assert x.sqrt().to_mpmath() == mpmath.sqrt(mx)
        assert e_const(256).to_mpmath() == +mpmath.e
        assert pi_const(256).to_mpmath() == +mpmath.pi


def test_result_precision_is_the_larger_operand():
    assert (BigReal(1, 100) + BigReal(1, 300)).precision == 300


def test_domain_errors():
    with pytest.raises(DomainError):
        big(-1).ln()
    with pytest.raises(DomainError):
        big(-1).sqrt()
    with pytest.raises(ZeroDivisionError):
        big(1) / 0
    with pytest.raises(DomainError):
        BigReal("not a number")
    with pytest.raises(DomainError):
        BigReal(float("nan"))


@given(finite)
def test_shortest_decimal_round_trips(x):
    v = BigReal(x, 256)
    text = v.to_decimal()
    assert BigReal(text, 256) == v


def test_decimal_is_shortest():
    assert big("0.1", 256).to_decimal() == "0.1"
    assert big(0.5).to_decimal() == "0.5"
    assert BigReal(0).to_decimal() == "0.0"


def test_decimal_at_very_high_precision():
    x = BigReal(1, 20000) / 3
    text = x.to_decimal()
    assert len(text) > 6000
    assert BigReal(text, 20000) == x


def test_pickle_and_hash():
    x = big("0.123", 300)
    y = pickle.loads(pickle.dumps(x))
    assert y == x and y.precision == 300 and hash(y) == hash(x)


def test_pow_tower_matches_direct_power():
    with mpmath.workprec(256):
        assert abs(pow_tower(big("0.1", 256), 5).to_mpmath() - mpmath.mpf("0.1") ** 32) \
            < mpmath.mpf(10) ** -105
    assert pow_tower(big("0.5", 64), 3) == big("0.00390625")
    assert pow_tower(big("0.3"), 0) == big("0.3")


@given(unit_open, st.integers(0, 6), st.integers(0, 6))
def test_pow_tower_composes(b, i, j):
    base = BigReal(b, 256)
    assert pow_tower(pow_tower(base, i), j) == pow_tower(base, i + j)


@given(unit_open, st.integers(0, 8))
def test_pow_tower_decreases(b, n):
    base = BigReal(b, 256)
    assert pow_tower(base, n + 1) < pow_tower(base, n)


@pytest.mark.parametrize("base,level", [(0, 1), (1, 1), (1.5, 1), (-0.2, 1), (0.5, -1)])
def test_pow_tower_domain(base, level):
    with pytest.raises(DomainError):
        pow_tower(big(base), level)


def test_dyadic_scale():
    s = DyadicScale.of(big("0.25"), 2)
    assert s.value == big("0.25") ** 4
    assert abs(float(s.log_value) - 4 * math.log(0.25)) < 1e-12


def test_required_precision_formula():
    # digits = 2**(depth+1) * log10(1/eta) + guard, bits = digits * log2(10)
    assert required_precision(big("0.1"), 5) == math.ceil(74 * math.log2(10))
    assert required_precision(big("0.5"), 1) == 64
    assert required_precision(big("0.01"), 8) > required_precision(big("0.1"), 8)
    with pytest.raises(PrecisionError):
        required_precision(big("0.1"), 40)
    with pytest.raises(DomainError):
        required_precision(big("1.5"), 3)


def test_log_product_accumulate():
    terms = [big("1.01"), big("0.99"), big("2.5")]
    with mpmath.workprec(256):
        want = sum(mpmath.log(mpmath.mpf(s)) for s in ("1.01", "0.99", "2.5"))
        assert abs(log_product_accumulate(terms).to_mpmath() - want) < mpmath.mpf(2) ** -250
    with pytest.raises(DomainError):
        log_product_accumulate([big(1), big(0)])


def test_ordered_sum_and_product():
    # Left to right, the tiny term is absorbed by 1 before the cancellation.
    assert bsum([big(1), big("1e-80"), big(-1)]) == 0
    assert bsum([big(1), big(-1), big("1e-80")]) == big("1e-80")
    assert bprod([big(2), big(3), big(4)]) == big(24)
