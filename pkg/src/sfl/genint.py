"""Generalized integral over the cascade-extended neighbourhood of a point.

The extended integral adds to the ordinary integral a first-order series over
cascade levels::

    E int_a^t f = int_a^t f(s) ds
                  + eps * sum_n [f(1/t'_{n+}) + tau_g(t) * t * f'(t)] * ln(1/t'_{n+})

where ``f`` inside each level is taken at the level's upper endpoint and the
Taylor term at the outer point ``t``.  Terms of order ``eps**2`` are dropped.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .bigscale import DEFAULT_PRECISION, BigReal, Number, big, bsum, pow_tower
from .cascade import SCHEMA_VERSION, CascadeTrace, GeneralizedSolution, generalized_solution
from .errors import DomainError

DEFAULT_ORDER = 10


@dataclass(frozen=True)
class Integrand:
    f: Callable[[BigReal], BigReal]
    df: Callable[[BigReal], BigReal] | None = None
    smoothness_hint: int = 1
    name: str = ""

    def __call__(self, t: BigReal) -> BigReal:
        return big(self.f(t), t.precision)

    def derivative(self, t: BigReal) -> tuple[BigReal, str]:
        """Return ``(f'(t), source)``; central differences when ``df`` is absent."""
        if self.df is not None:
            return big(self.df(t), t.precision), "provided"
        h = BigReal(2, t.precision) ** (-(t.precision // 4))
        return (self(t + h) - self(t - h)) / (2 * h), "finite_difference"


def _as_integrand(f) -> Integrand:
    return f if isinstance(f, Integrand) else Integrand(f)


@lru_cache(maxsize=64)
def gauss_legendre(order: int, precision: int) -> tuple[tuple, tuple]:
    """Nodes and weights of the ``order``-point Gauss-Legendre rule on [-1, 1].

    Double-precision nodes seed a Newton iteration on ``P_order`` carried out
    at ``precision`` bits.
    """
    if order < 1:
        raise DomainError("quadrature order must be >= 1")
    guess, _ = np.polynomial.legendre.leggauss(order)
    tol = BigReal(2, precision) ** (-(precision - 4))
    nodes, weights = [], []
    for g in guess:
        x = BigReal(float(g), precision)
        for _ in range(100):
            p, dp = _legendre(order, x)
            dx = p / dp
            x = x - dx
            if abs(dx) <= tol:
                break
        p, dp = _legendre(order, x)
        nodes.append(x)
        weights.append(2 / ((1 - x * x) * dp * dp))
    return tuple(nodes), tuple(weights)


def _legendre(n: int, x: BigReal) -> tuple[BigReal, BigReal]:
    p_prev, p = BigReal(1, x.precision), x
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    if n == 0:
        return p_prev, BigReal(0, x.precision)
    return p, n * (x * p - p_prev) / (x * x - 1)


def panel_nodes(a: BigReal, b: BigReal, panels: int, order: int = DEFAULT_ORDER):
    """Composite-rule nodes and weights on ``[a, b]`` in evaluation order."""
    prec = max(a.precision, b.precision)
    xs, ws = gauss_legendre(order, prec)
    h = (b - a) / panels
    half = h / 2
    out = []
    for i in range(panels):
        mid = a + (2 * i + 1) * half
        out.extend((mid + half * x, half * w) for x, w in zip(xs, ws))
    return out


def riemann(f, a: Number, b: Number, panels: int, order: int = DEFAULT_ORDER) -> BigReal:
    """Composite Gauss-Legendre quadrature of ``f`` over ``[a, b]``."""
    a, b = big(a), big(b)
    if not a < b:
        raise DomainError(f"need a < b, got a={a}, b={b}")
    if panels < 1:
        raise DomainError("panels must be >= 1")
    f = _as_integrand(f)
    return bsum(w * f(x) for x, w in panel_nodes(a, b, panels, order))


def measure_replacement(trace: CascadeTrace) -> BigReal:
    """Cascade form of ``int_{1-eta}^1 d ln t``: ``sum_{n>=0} ln t'_{n+}``.

    Level 0 contributes ``ln(1 + eta)``.  For a trivial trace the sum equals
    ``-ln(1 - eta)`` up to ``eta**(2**(depth+1))``; an empty trace gives 0.
    """
    prec = trace.precision
    if trace.depth == 0:
        return BigReal(0, prec)
    return bsum([(1 + trace.eta).ln()] + [tp.ln() for tp in trace.t_plus])


@dataclass(frozen=True)
class ExtendedIntegralResult:
    riemann_part: BigReal
    correction_terms: tuple
    epsilon: BigReal
    total: BigReal
    residual_bound: BigReal
    df_source: str

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "riemann_part": self.riemann_part.to_decimal(),
            "correction_terms": [c.to_decimal() for c in self.correction_terms],
            "epsilon": self.epsilon.to_decimal(),
            "total": self.total.to_decimal(),
            "residual_bound": self.residual_bound.to_decimal(),
            "df_source": self.df_source,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def correction_terms(f, t: BigReal, trace: CascadeTrace,
                     tau_g: GeneralizedSolution) -> tuple[tuple, str]:
    """Per-level bracket ``[f(1/t'_{n+}) + tau_g(t) t f'(t)] * ln(1/t'_{n+})``."""
    f = _as_integrand(f)
    df, source = f.derivative(t)
    taylor = tau_g.value(t) * t * df
    terms = []
    for tp in trace.t_plus:
        inv = 1 / tp
        terms.append((f(inv) + taylor) * inv.ln())
    return tuple(terms), source


def extended_integral(f, a: Number, t: Number, epsilon: Number, trace: CascadeTrace,
                      tau_g: GeneralizedSolution | None = None, panels: int = 16,
                      order: int = DEFAULT_ORDER) -> ExtendedIntegralResult:
    prec = trace.precision
    a, t = big(a, prec), big(t, prec)
    epsilon = big(epsilon, prec)
    if epsilon.sign() < 0:
        raise DomainError("epsilon must be non-negative")
    f = _as_integrand(f)
    if tau_g is None:
        tau_g = generalized_solution(trace)
    base = riemann(f, a, t, panels, order)
    terms, source = correction_terms(f, t, trace, tau_g)
    total = base + epsilon * bsum(terms, prec)

    h = (t - a) / panels
    fmax = max(abs(f(a + i * h)) for i in range(panels + 1))
    bound = 2 * pow_tower(trace.eta, trace.depth + 1) * fmax if trace.depth else BigReal(0, prec)
    return ExtendedIntegralResult(base, terms, epsilon, total, bound, source)


@dataclass(frozen=True)
class ModulatedExp:
    """Scale recursion behind the modulated exponential ``exp(sum 1/t_{k+})``."""

    plus_scales: tuple
    increments: tuple
    exponent_sum: BigReal
    value: BigReal

    @property
    def mu(self) -> BigReal:
        """``(t_{1+} - 1) / eta**2``, the induced scale distortion."""
        eta = self.increments[0]
        return self.increments[1] / (eta * eta)


def modulated_exp(eta: Number, depth: int) -> ModulatedExp:
    """Iterate ``t_{(k+1)+} = 1 + (1/t_{k-} - t_{k+})`` from ``t_{0+} = 1 + eta``.

    With ``t_{k-} = 2 - t_{k+}`` the increments obey
    ``d_{k+1} = d_k**2 / (1 - d_k)``, so ``t_{1+} = 1 + eta**2/(1 - eta)``.
    The returned value is ``exp(sum_{k=0..depth} 1/t_{k+})``; it matches the
    modulated exponential only up to a constant factor, so the raw exponent
    sum is reported as well.
    """
    eta = big(eta)
    if not (0 < eta < big("0.5", eta.precision)):
        raise DomainError(f"eta out of range: {eta} not in (0, 0.5)")
    if depth < 1:
        raise DomainError("depth must be >= 1")
    one = BigReal(1, eta.precision)
    d = eta
    incs, plus = [d], [one + d]
    for _ in range(depth):
        t_plus, t_minus = one + d, one - d
        d = 1 / t_minus - t_plus
        incs.append(d)
        plus.append(one + d)
    s = bsum(1 / tp for tp in plus)
    return ModulatedExp(tuple(plus), tuple(incs), s, s.exp())


def _check_cantor_eps(epsilon: BigReal) -> None:
    if not (0 < epsilon < 1):
        raise DomainError(f"epsilon out of range: {epsilon} not in (0, 1)")


def cantor_void_length(epsilon: Number, depth: int) -> BigReal:
    """``2 * sum_{n=0..depth} (eps**(2**n) - eps**(2**(n+1)))``, summed term by term."""
    epsilon = big(epsilon)
    _check_cantor_eps(epsilon)
    total = BigReal(0, epsilon.precision)
    x = epsilon
    for _ in range(depth + 1):
        nxt = x * x
        total = total + 2 * (x - nxt)
        x = nxt
    return total


def cantor_residual_length(epsilon: Number, depth: int) -> BigReal:
    """``2 * sum_{n=1..depth} eps**(2**n)``: the part left after removing the voids."""
    epsilon = big(epsilon)
    _check_cantor_eps(epsilon)
    total = BigReal(0, epsilon.precision)
    x = epsilon
    for _ in range(depth):
        x = x * x
        total = total + 2 * x
    return total


BUILTIN_INTEGRANDS = {
    "one": Integrand(lambda t: BigReal(1, t.precision), lambda t: BigReal(0, t.precision),
                     smoothness_hint=10**6, name="one"),
    "ident": Integrand(lambda t: t, lambda t: BigReal(1, t.precision),
                       smoothness_hint=10**6, name="ident"),
    "recip": Integrand(lambda t: 1 / t, lambda t: -1 / (t * t), smoothness_hint=10**6,
                       name="recip"),
}
