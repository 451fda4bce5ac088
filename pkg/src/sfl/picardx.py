"""Picard iteration for ``d ln tau / d ln t = f(t, tau)`` near ``t = 1``.

Iterates are kept as ``ln tau`` on a grid uniform in ``u = ln t`` that always
contains ``u = 0``.  Each sweep integrates ``f(e^u, tau_{n-1}(u))`` panel by
panel with a fixed Gauss-Legendre rule; values of the previous iterate
between grid nodes come from a monotone piecewise-cubic Hermite interpolant
(five-point derivative estimates passed through Hyman's monotonicity filter).
The extended run adds the generalized-integral correction series to every
antiderivative.
"""
from __future__ import annotations

import bisect
import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .bigscale import DEFAULT_PRECISION, BigReal, Number, big, bsum
from .cascade import SCHEMA_VERSION, CascadeTrace, generalized_solution
from .errors import DomainError
from .genint import Integrand, correction_terms, gauss_legendre, modulated_exp

DIVERGENCE_LIMIT = 10**4
DEFAULT_QUAD_ORDER = 6


@dataclass(frozen=True)
class RhsField:
    f: Callable[[BigReal, BigReal], BigReal]
    name: str = ""
    smoothness: int = 1
    # Closed-form mu when the field induces its scale distortion through the
    # scale recursion rather than through f'/f.
    scale_mu: Callable[[BigReal], BigReal] | None = None

    def __call__(self, t: BigReal, tau: BigReal) -> BigReal:
        return big(self.f(t, tau), max(t.precision, tau.precision))


def _case1_mu(eta: BigReal) -> BigReal:
    return modulated_exp(eta, 1).mu


BUILTIN_RHS = {
    "unit": RhsField(lambda t, tau: BigReal(1, t.precision), "unit", 10**6),
    "selfsim": RhsField(lambda t, tau: tau, "selfsim", 10**6),
    "texp": RhsField(lambda t, tau: t, "texp", 10**6, scale_mu=_case1_mu),
}


@dataclass
class PicardRun:
    grid: tuple
    iterates: list
    sup_deltas: list
    converged: bool
    iterations_used: int
    mode: str
    tolerance: BigReal
    log_grid: tuple = field(repr=False, default=())
    diverged: bool = False

    @property
    def final(self) -> tuple:
        return self.iterates[-1]

    def tau_final(self) -> list:
        return [v.exp() for v in self.final]

    def ln_tau_at(self, u: Number) -> BigReal:
        """Final ``ln tau`` interpolated at ``u = ln t``."""
        return _Interpolant(self.log_grid, self.final).at(big(u, self.final[0].precision))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "tolerance": self.tolerance.to_decimal(),
            "grid": [t.to_decimal() for t in self.grid],
            "ln_tau_final": [v.to_decimal() for v in self.final],
            "sup_deltas": [d.to_decimal() for d in self.sup_deltas],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "ln_tau_final", "tau_final"))
        for t, lv in zip(self.grid, self.final):
            w.writerow((t.to_decimal(), lv.to_decimal(), lv.exp().to_decimal()))
        return buf.getvalue()


def log_grid(lo: BigReal, hi: BigReal, grid_size: int) -> tuple:
    """``grid_size`` points on ``[lo, hi]`` (lo < 0 < hi), uniform on each side of 0."""
    n_left = max(1, round((grid_size - 1) * float(-lo / (hi - lo))))
    n_right = max(1, grid_size - 1 - n_left)
    zero = BigReal(0, lo.precision)
    left = [lo + (-lo) * i / n_left for i in range(n_left)]
    right = [hi * i / n_right for i in range(1, n_right + 1)]
    return tuple(left + [zero] + right)


def _deriv_weights(xs: Sequence[BigReal], k: int) -> list:
    """Weights w with ``sum w_i y_i`` = derivative at ``xs[k]`` of the interpolating polynomial."""
    out = []
    for i, xi in enumerate(xs):
        if i == k:
            out.append(bsum(1 / (xs[k] - xm) for m, xm in enumerate(xs) if m != k))
            continue
        num = BigReal(1, xi.precision)
        den = BigReal(1, xi.precision)
        for m, xm in enumerate(xs):
            if m != i:
                den = den * (xi - xm)
                if m != k:
                    num = num * (xs[k] - xm)
        out.append(num / den)
    return out


class _Interpolant:
    """Monotone cubic Hermite interpolant of ``ys`` on the nodes ``xs``."""

    _weights_cache: dict = {}

    def __init__(self, xs: Sequence[BigReal], ys: Sequence[BigReal]):
        self.xs, self.ys = xs, ys
        n = len(xs)
        self.h = [xs[i + 1] - xs[i] for i in range(n - 1)]
        secants = [(ys[i + 1] - ys[i]) / self.h[i] for i in range(n - 1)]
        weights = self._stencils(xs)
        slopes = []
        for j in range(n):
            lo = min(max(j - 2, 0), n - 5) if n >= 5 else 0
            idx = range(lo, min(lo + 5, n))
            d = bsum(w * ys[i] for w, i in zip(weights[j], idx))
            slopes.append(self._limit(d, secants[j - 1] if j > 0 else None,
                                      secants[j] if j < n - 1 else None))
        self.d = slopes

    @classmethod
    def _stencils(cls, xs):
        key = (id(xs), len(xs))
        hit = cls._weights_cache.get(key)
        if hit is not None and hit[0] is xs:
            return hit[1]
        n = len(xs)
        weights = []
        for j in range(n):
            lo = min(max(j - 2, 0), n - 5) if n >= 5 else 0
            window = xs[lo:min(lo + 5, n)]
            weights.append(_deriv_weights(window, j - lo))
        cls._weights_cache[key] = (xs, weights)
        return weights

    @staticmethod
    def _limit(d, left, right):
        # Hyman filter: keep the estimate's sign consistent with the data and
        # its size within 3x the adjacent secants.
        sides = [s for s in (left, right) if s is not None]
        if any(s.sign() == 0 for s in sides):
            return d * 0
        if len(sides) == 2 and sides[0].sign() != sides[1].sign():
            return d * 0
        sgn = sides[0].sign()
        if d.sign() != sgn:
            return d * 0
        cap = 3 * min(abs(s) for s in sides)
        return d if abs(d) <= cap else cap * sgn

    def on_panel(self, i: int, basis) -> BigReal:
        h00, h10, h01, h11 = basis
        h = self.h[i]
        return (h00 * self.ys[i] + h10 * h * self.d[i]
                + h01 * self.ys[i + 1] + h11 * h * self.d[i + 1])

    def at(self, x: BigReal) -> BigReal:
        i = bisect.bisect_right(self.xs, x) - 1
        i = min(max(i, 0), len(self.xs) - 2)
        return self.on_panel(i, hermite_basis((x - self.xs[i]) / self.h[i]))


def hermite_basis(theta: BigReal):
    t2 = theta * theta
    t3 = t2 * theta
    return (2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + theta, 3 * t2 - 2 * t3, t3 - t2)


def _interval_logs(interval, precision: int) -> tuple[BigReal, BigReal]:
    a, b = (big(x, precision) for x in interval)
    if not (0 < a < 1 < b):
        raise DomainError(f"interval [{a}, {b}] must contain 1 in its interior (and a > 0)")
    return a.ln(), b.ln()


def _run(rhs: RhsField, tau0: Number, interval, grid_size: int, tol: Number, max_iter: int,
         precision: int, order: int, epsilon: BigReal | None, trace: CascadeTrace | None
         ) -> PicardRun:
    if grid_size < 8:
        raise DomainError("grid_size must be >= 8")
    tau0 = big(tau0, precision)
    if tau0.sign() <= 0:
        raise DomainError("tau0 must be positive")
    tol = big(tol, precision)
    lo, hi = _interval_logs(interval, precision)
    us = log_grid(lo, hi, grid_size)
    ts = tuple(u.exp() for u in us)
    zero_idx = us.index(BigReal(0, precision))
    n = len(us)

    nodes, weights = gauss_legendre(order, precision)
    thetas = [(1 + x) / 2 for x in nodes]
    bases = [hermite_basis(th) for th in thetas]
    half_w = [w / 2 for w in weights]
    node_u = [[us[i] + th * (us[i + 1] - us[i]) for th in thetas] for i in range(n - 1)]
    node_t = [[u.exp() for u in row] for row in node_u]

    extended = epsilon is not None
    if extended:
        tau_g = generalized_solution(trace)
        tau_g_at = [tau_g.value(t) for t in ts]
        if trace.depth and 1 / trace.t_plus[0] < ts[0]:
            raise DomainError("interval does not reach the cascade points 1/t'_{n+}")

    ln_tau0 = tau0.ln()
    current = [ln_tau0] * n
    iterates = [tuple(current)]
    deltas = []
    converged = diverged = False
    for _ in range(max_iter):
        interp = _Interpolant(us, current)
        panel = []
        for i in range(n - 1):
            g = bsum(hw * rhs(t, interp.on_panel(i, b).exp())
                     for hw, t, b in zip(half_w, node_t[i], bases))
            panel.append(g * interp.h[i])
        cumulative = [None] * n
        cumulative[zero_idx] = BigReal(0, precision)
        for i in range(zero_idx, n - 1):
            cumulative[i + 1] = cumulative[i] + panel[i]
        for i in range(zero_idx - 1, -1, -1):
            cumulative[i] = cumulative[i + 1] - panel[i]
        new = [ln_tau0 + c for c in cumulative]

        if extended:
            h = Integrand(_log_measure_integrand(rhs, interp))
            for j, t in enumerate(ts):
                terms, _ = correction_terms(h, t, trace, _Fixed(tau_g_at[j]))
                new[j] = new[j] + epsilon * bsum(terms, precision)

        delta = max(abs(a - b) for a, b in zip(new, current))
        deltas.append(delta)
        current = new
        iterates.append(tuple(current))
        if delta < tol:
            converged = True
            break
        if any(abs(v) > DIVERGENCE_LIMIT for v in current):
            diverged = True
            break

    return PicardRun(ts, iterates, deltas, converged, len(deltas),
                     "extended" if extended else "standard", tol, us, diverged)


class _Fixed:
    """Stand-in for a generalized solution whose value at ``t`` is precomputed."""

    def __init__(self, v):
        self._v = v

    def value(self, t):
        return self._v


def _log_measure_integrand(rhs: RhsField, interp: _Interpolant):
    # f(s, tau(s)) d ln s written as h(s) ds with h(s) = f(s, tau(s)) / s.
    def h(s: BigReal) -> BigReal:
        return rhs(s, interp.at(s.ln()).exp()) / s
    return h


def picard_standard(rhs: RhsField, tau0: Number, interval, grid_size: int = 129,
                    tol: Number = "1e-10", max_iter: int = 50,
                    precision: int = DEFAULT_PRECISION,
                    order: int = DEFAULT_QUAD_ORDER) -> PicardRun:
    """Iterate ``ln tau_n = ln tau0 + int_1^t f(s, tau_{n-1}(s)) d ln s`` on ``interval``.

    ``interval`` is ``(a, b)`` in ``t`` with ``a < 1 < b``.  Non-convergence
    is reported through ``converged=False``, not raised.
    """
    return _run(rhs, tau0, interval, grid_size, tol, max_iter, precision, order, None, None)


def picard_extended(rhs: RhsField, tau0: Number, interval, epsilon: Number,
                    trace: CascadeTrace, grid_size: int = 129, tol: Number = "1e-10",
                    max_iter: int = 50, precision: int | None = None,
                    order: int = DEFAULT_QUAD_ORDER) -> PicardRun:
    """Picard iteration whose antiderivatives are generalized integrals over ``trace``.

    With ``epsilon = 0`` every iterate equals the standard run's bit for bit.
    """
    precision = precision or max(DEFAULT_PRECISION, trace.precision)
    epsilon = big(epsilon, precision)
    if epsilon.sign() < 0:
        raise DomainError("epsilon must be non-negative")
    return _run(rhs, tau0, interval, grid_size, tol, max_iter, precision, order, epsilon, trace)


def _scale_points(eta: BigReal):
    one = BigReal(1, eta.precision)
    t_plus, t_minus = one + eta, one - eta
    if t_plus == t_minus:
        raise DomainError("eta is too small for the working precision")
    return t_plus, t_minus


def correction_rhs(rhs: RhsField, tilde_tau: Callable[[BigReal], BigReal],
                   eta: Number) -> RhsField:
    """Field ``f'`` for the correction factor ``tau'_-`` on the scale ``t_{1-} = 1 - eta**2``.

    ``f'(t1, tau') = (t+ f(t-, tau~(1/t+) tau') - t- f(1/t+, tau~(1/t+))) / (t+ - t-)``;
    the value depends on ``t1`` only through ``eta``, which is fixed here.
    """
    eta = big(eta)
    if not (0 < eta < big("0.5", eta.precision)):
        raise DomainError(f"eta out of range: {eta} not in (0, 0.5)")
    t_plus, t_minus = _scale_points(eta)
    inv = 1 / t_plus
    anchor = big(tilde_tau(inv), eta.precision)
    f_inv = rhs(inv, anchor)
    span = t_plus - t_minus

    def f_prime(t1: BigReal, tau_prime: BigReal) -> BigReal:
        return (t_plus * rhs(t_minus, anchor * tau_prime) - t_minus * f_inv) / span

    return RhsField(f_prime, f"{rhs.name}'", rhs.smoothness)


def mu_factor(rhs: RhsField, tilde_tau: Callable[[BigReal], BigReal], eta: Number) -> BigReal:
    """``mu = f'/f`` at the first correction point ``(1 - eta**2, tau~(t-)/tau~(1/t+))``.

    Fields that distort the scale through the scale recursion (the
    modulated exponential) carry their own closed form, ``1/(1 - eta)``.
    """
    eta = big(eta)
    if rhs.scale_mu is not None:
        return rhs.scale_mu(eta)
    t_plus, t_minus = _scale_points(eta)
    t1 = 1 - eta * eta
    tau_prime = big(tilde_tau(t_minus), eta.precision) / big(tilde_tau(1 / t_plus), eta.precision)
    fp = correction_rhs(rhs, tilde_tau, eta)(t1, tau_prime)
    fv = rhs(t1, tau_prime)
    if not fv:
        raise ZeroDivisionError("f vanishes at the correction point")
    return fp / fv


def quadratic_mu(eta: Number) -> BigReal:
    """Closed-form ``mu`` for ``t dtau/dt = tau**2``, ``tau0 = 1/(1 - ln t)``.

    ``mu = A (1 - ln t'_{1-}) / (1 - ln t-)`` with
    ``A = (t+ - t- tau0(1/t+)/tau0(t-)) / (t+ - t-)`` and the implicit scale
    ``t'_{1-} = (1 - eta**2)**mu``, solved exactly since it is linear in ``mu``.
    """
    eta = big(eta)
    t_plus, t_minus = _scale_points(eta)
    tau0 = lambda t: 1 / (1 - t.ln())  # noqa: E731
    a = (t_plus - t_minus * tau0(1 / t_plus) / tau0(t_minus)) / (t_plus - t_minus)
    ell = (1 - eta * eta).ln()
    return a / (1 - t_minus.ln() + a * ell)
