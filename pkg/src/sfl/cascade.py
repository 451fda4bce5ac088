"""Residual-rescaling cascade for the scale-free equation ``t dtau/dt = tau``.

The standard solution ``tau_s = t`` is rebuilt at ``t- = 1 - eta`` as the
product ``1 / prod_k (1 + eta**(2**k))``.  A cascade walks the scale ladder
``eta'_n`` and, at the levels a :class:`RescalingSchedule` marks nontrivial,
injects a residual rescaling ``alpha_n = 1 + eps_n``.  The resulting trace
determines the generalized solution ``tau_N = C * prod 1 / t'_{n+}``.

Scale recursion used here (level 0 is ``eta`` itself, ``alpha_0 = 1``)::

    base_n  = (alpha_{n-1} * eta'_{n-1}) ** 2
    eta'_n  = (base_n + eps_n) / alpha_n      # t'_{n-} = t_{n-} / alpha_n

with ``eps_n`` drawn uniformly from ``[eta'_{n-1}**2, c * eta'_{n-1}]``.
"""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from mpmath import libmp

from .bigscale import (
    DEFAULT_PRECISION,
    BigReal,
    Number,
    big,
    bprod,
    required_precision,
)
from .errors import DegenerateFitError, DomainError

SCHEMA_VERSION = 1
GUARD_DIGITS = 10
MAX_REDRAWS = 16
TRACE_COLUMNS = ("level", "eta_prime", "alpha", "epsilon", "t_minus", "t_plus")


@dataclass(frozen=True)
class RescalingSchedule:
    """Which cascade levels receive a nontrivial rescaling.

    ``from_level(m)`` rescales levels ``m, m+1, ...``; ``until_level(n)``
    rescales levels ``2..n`` and continues trivially afterwards.
    """

    mode: str = "never"
    level: int | None = None
    levels: frozenset = frozenset()

    def __post_init__(self):
        if self.mode not in ("never", "from_level", "until_level", "explicit"):
            raise DomainError(f"unknown schedule mode {self.mode!r}")
        if self.mode in ("from_level", "until_level"):
            if self.level is None or self.level < 2:
                raise DomainError(f"{self.mode} needs a level >= 2, got {self.level}")
        if self.mode == "explicit" and any(lv < 1 for lv in self.levels):
            raise DomainError("explicit levels must be >= 1")

    @classmethod
    def never(cls) -> "RescalingSchedule":
        return cls("never")

    @classmethod
    def from_level(cls, m: int) -> "RescalingSchedule":
        return cls("from_level", level=m)

    @classmethod
    def until_level(cls, n: int) -> "RescalingSchedule":
        return cls("until_level", level=n)

    @classmethod
    def explicit(cls, levels: Iterable[int]) -> "RescalingSchedule":
        return cls("explicit", levels=frozenset(int(x) for x in levels))

    @classmethod
    def parse(cls, text: str) -> "RescalingSchedule":
        """Parse ``never``, ``from:M``, ``until:N`` or ``levels:A,B,...``."""
        text = text.strip()
        if text == "never":
            return cls.never()
        m = re.fullmatch(r"(from|until|levels):([0-9,\s]+)", text)
        if not m:
            raise DomainError(f"cannot parse schedule {text!r}")
        kind, arg = m.groups()
        try:
            if kind == "levels":
                return cls.explicit(int(x) for x in arg.split(",") if x.strip())
            n = int(arg)
        except ValueError as exc:
            raise DomainError(f"cannot parse schedule {text!r}") from exc
        return cls.from_level(n) if kind == "from" else cls.until_level(n)

    def is_nontrivial(self, level: int) -> bool:
        if self.mode == "from_level":
            return level >= self.level
        if self.mode == "until_level":
            return 2 <= level <= self.level
        if self.mode == "explicit":
            return level in self.levels
        return False

    def __str__(self):
        if self.mode == "from_level":
            return f"from:{self.level}"
        if self.mode == "until_level":
            return f"until:{self.level}"
        if self.mode == "explicit":
            return "levels:" + ",".join(str(x) for x in sorted(self.levels))
        return "never"


@dataclass(frozen=True)
class CascadeConfig:
    eta: Number
    depth: int
    schedule: RescalingSchedule = field(default_factory=RescalingSchedule.never)
    seed: int = 0
    epsilon_fraction: Number = "0.1"
    precision: int = DEFAULT_PRECISION
    # Pin every draw to the top of its interval instead of sampling.
    pin_epsilon: bool = False

    def __post_init__(self):
        eta = BigReal(self.eta, max(64, self.precision))
        if not (0 < eta < 1):
            raise DomainError(f"eta out of range: {self.eta} not in (0, 1)")
        if int(self.depth) != self.depth or self.depth < 1:
            raise DomainError(f"depth must be an integer >= 1, got {self.depth}")
        c = big(self.epsilon_fraction, 64)
        if not (0 < c < 1):
            raise DomainError(f"epsilon_fraction out of range: {self.epsilon_fraction}")
        if not (0 <= int(self.seed) < 1 << 64):
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.precision < 64:
            raise DomainError("precision must be at least 64 bits")

    def working_precision(self) -> int:
        return max(self.precision,
                   required_precision(BigReal(self.eta, self.precision), self.depth,
                                      GUARD_DIGITS))


@dataclass(frozen=True)
class CascadeTrace:
    """Per-level record of one cascade run (levels ``1..depth``)."""

    eta: BigReal
    eta_primes: tuple
    alphas: tuple
    epsilons: tuple
    t_minus: tuple
    t_plus: tuple
    seed_used: int
    precision: int
    schedule: str = "never"

    @property
    def depth(self) -> int:
        return len(self.eta_primes)

    def rows(self):
        for i in range(self.depth):
            yield (i + 1, self.eta_primes[i], self.alphas[i], self.epsilons[i],
                   self.t_minus[i], self.t_plus[i])


class _UnitDraws:
    """Uniform variates on [0, 1) at a given precision from Philox4x64-10.

    Each variate concatenates ``ceil(precision / 64)`` raw 64-bit outputs of
    numpy's Philox counter-based generator keyed by the seed, so the stream
    is identical on every platform.
    """

    def __init__(self, seed: int, precision: int):
        self._bitgen = np.random.Philox(key=int(seed))
        self._words = -(-precision // 64)
        self._precision = precision

    def next(self) -> BigReal:
        raw = self._bitgen.random_raw(self._words)
        mantissa = 0
        for w in raw:
            mantissa = (mantissa << 64) | int(w)
        return BigReal._make(
            libmp.from_man_exp(mantissa, -64 * self._words, self._precision, libmp.round_down),
            self._precision)


def run_cascade(config: CascadeConfig) -> CascadeTrace:
    prec = config.working_precision()
    eta = BigReal(config.eta, prec)
    c = BigReal(config.epsilon_fraction, prec)
    one = BigReal(1, prec)
    zero = BigReal(0, prec)
    draws = _UnitDraws(config.seed, prec)

    eta_primes, alphas, epsilons, t_minus, t_plus = [], [], [], [], []
    prev, prev_alpha = eta, one
    for n in range(1, config.depth + 1):
        scaled = prev_alpha * prev
        base = scaled * scaled
        if config.schedule.is_nontrivial(n):
            hi = c * prev
            lo = prev * prev
            if lo > hi:
                lo = hi  # the "<< eta" bound wins once eta'_{n-1} exceeds c
            for _ in range(MAX_REDRAWS):
                u = one if config.pin_epsilon else draws.next()
                eps = lo + u * (hi - lo)
                alpha = one + eps
                ep = (base + eps) / alpha
                if 0 < ep < prev:
                    break
            else:
                raise DomainError(
                    f"level {n}: no admissible epsilon after {MAX_REDRAWS} draws")
        else:
            eps, alpha, ep = zero, one, base
            if not (0 < ep < prev):
                raise DomainError(f"level {n}: scale {ep} is not in (0, {prev})")
        eta_primes.append(ep)
        alphas.append(alpha)
        epsilons.append(eps)
        t_minus.append(one - ep)
        t_plus.append(one + ep)
        prev, prev_alpha = ep, alpha

    return CascadeTrace(eta, tuple(eta_primes), tuple(alphas), tuple(epsilons),
                        tuple(t_minus), tuple(t_plus), int(config.seed), prec,
                        str(config.schedule))


def standard_product(eta: Number, depth: int) -> BigReal:
    """``prod_{k=0..depth} (1 + eta**(2**k))``, which equals ``(1 - eta**(2**(depth+1))) / (1 - eta)``."""
    eta = big(eta)
    if not (0 < eta < 1):
        raise DomainError(f"eta out of range: {eta} not in (0, 1)")
    if depth < 0:
        raise DomainError("depth must be non-negative")
    result = 1 + eta
    x = eta
    for _ in range(depth):
        x = x * x
        result = result * (1 + x)
    return result


@dataclass(frozen=True)
class GeneralizedSolution:
    """``tau_N(t) = C * S_N(t) * Phi`` on the punctured neighbourhood of t = 1.

    ``S_N`` is the depth-N standard product rebuilt at ``xi = 1 - t`` and
    ``Phi`` the fluctuation factor the trace's rescalings carry.  ``Phi`` is
    locally constant in ``t``; at the anchor itself every scale vanishes, so
    ``tau_N(1) = C = 1``.  Points ``t > 1`` are reached by inversion,
    ``tau(t) = 1 / tau(1/t)``.
    """

    trace: CascadeTrace
    normalization_C: BigReal
    factors: tuple
    fluctuation: BigReal
    terminated_at: int | None = None
    unwind_bound: BigReal | None = None

    @property
    def precision(self) -> int:
        return self.trace.precision

    def value_at_minus(self) -> BigReal:
        """``C * prod 1/t'_{n+}`` at ``t- = 1 - eta`` (level 0 factor included)."""
        return self.normalization_C * bprod(self.factors)

    def _standard_part(self, xi: BigReal) -> BigReal:
        result = 1 / (1 + xi)
        x = xi
        for _ in range(self.trace.depth):
            x = x * x
            result = result / (1 + x)
        return result

    def value(self, t: Number) -> BigReal:
        t = big(t, self.precision) if not isinstance(t, BigReal) else t
        if t.sign() <= 0:
            raise DomainError(f"generalized solution is defined for t > 0, got {t}")
        if self.trace.depth == 0:
            return t
        if t == 1:
            return BigReal(self.normalization_C, max(t.precision, self.precision))
        if t > 1:
            return 1 / self.value(1 / t)
        xi = 1 - t
        if xi == self.trace.eta:
            return self.value_at_minus()
        return self.normalization_C * self._standard_part(xi) * self.fluctuation

    __call__ = value

    def phi(self, t: Number) -> BigReal:
        t = big(t, self.precision)
        return self.value(t) / t


def generalized_solution(trace: CascadeTrace) -> GeneralizedSolution:
    prec = trace.precision
    one = BigReal(1, prec)
    if trace.depth == 0:
        return GeneralizedSolution(trace, one, (), one)
    eta = trace.eta
    factors = (one / (one + eta),) + tuple(one / tp for tp in trace.t_plus)
    fluct = one
    x = eta
    for ep in trace.eta_primes:
        x = x * x
        fluct = fluct * (one + x) / (one + ep)
    # C = prod t'_{n+} at the anchor, where every scale is zero.
    return GeneralizedSolution(trace, one, factors, fluct)


@dataclass(frozen=True)
class DeviationFit:
    """Log-log fit of ``|tau_g(t-)/tau_s(t-) - 1|`` against ``eta``."""

    slope: BigReal | None
    etas: tuple
    deviations: tuple
    standard: bool = False

    def __str__(self):
        return "standard" if self.standard else str(self.slope)


def _least_squares_slope(xs: Sequence[BigReal], ys: Sequence[BigReal]) -> BigReal:
    n = len(xs)
    xbar = sum(xs[1:], xs[0]) / n
    ybar = sum(ys[1:], ys[0]) / n
    num = sum(((x - xbar) * (y - ybar) for x, y in zip(xs, ys)), BigReal(0, xs[0].precision))
    den = sum(((x - xbar) * (x - xbar) for x in xs), BigReal(0, xs[0].precision))
    if not den:
        raise DegenerateFitError("all grid points coincide")
    return num / den


def deviation_order(config_template: CascadeConfig, start_level: int | None,
                    eta_grid: Sequence[Number]) -> DeviationFit:
    """Fit the order at which rescaling from ``start_level`` perturbs ``tau_s``.

    Each ``eta`` on the grid gets its own cascade with every draw pinned to
    the top of its interval.  The slope of ``ln|tau_g(t-)/t- - 1|`` against
    ``ln eta`` estimates the exponent; rescaling first at level ``m`` should
    give about ``2**(m-1)``.  ``start_level=None`` runs the
    unrescaled cascade, checks the truncation bound instead, and returns the
    ``standard`` sentinel.
    """
    if len(eta_grid) < 4:
        raise DomainError("eta_grid needs at least 4 points")
    grid = [big(e, 64) for e in eta_grid]
    if any(not (0 < e < big("0.3", 64)) for e in grid):
        raise DomainError("eta_grid points must lie in (0, 0.3)")
    standard = start_level is None
    if standard:
        schedule = RescalingSchedule.never()
    else:
        if start_level < 2:
            raise DomainError("start_level must be >= 2")
        schedule = RescalingSchedule.from_level(start_level)

    etas, devs = [], []
    for e in eta_grid:
        cfg = replace(config_template, eta=e, schedule=schedule, pin_epsilon=True)
        trace = run_cascade(cfg)
        sol = generalized_solution(trace)
        t_minus = 1 - trace.eta
        dev = abs(sol.value_at_minus() / t_minus - 1)
        etas.append(trace.eta)
        devs.append(dev)

    if standard:
        for e, d, in zip(etas, devs):
            bound = 2 * e ** (1 << (config_template.depth + 1))
            if d > bound:
                raise DomainError(f"standard deviation {d} exceeds truncation bound {bound}")
        return DeviationFit(None, tuple(etas), tuple(devs), standard=True)

    usable = [(e, d) for e, d in zip(etas, devs)
              if d and d.log2_magnitude() > -(d.precision - 8)]
    if len(usable) < 2:
        raise DegenerateFitError("deviations underflow the working precision")
    prec = max(e.precision for e, _ in usable)
    xs = [BigReal(e, prec).ln() for e, _ in usable]
    ys = [BigReal(d, prec).ln() for _, d in usable]
    return DeviationFit(_least_squares_slope(xs, ys), tuple(etas), tuple(devs))


def terminate_and_unwind(config: CascadeConfig, total_depth: int) -> GeneralizedSolution:
    """Rescale only up to ``until_level(n)`` and continue trivially to ``total_depth``.

    The returned solution records the termination level and the bound
    ``2 * eta'_{n+1}**2`` that the ratio ``tau_N(t)/t`` must respect across
    evaluation points.
    """
    sched = config.schedule
    if sched.mode == "never":
        trace = run_cascade(replace(config, depth=total_depth))
        sol = generalized_solution(trace)
        bound = 2 * trace.eta ** (1 << (total_depth + 1))
        return replace(sol, terminated_at=0, unwind_bound=bound)
    if sched.mode != "until_level":
        raise DomainError("terminate_and_unwind needs an until_level schedule")
    n = sched.level
    if total_depth < n + 2:
        raise DomainError(f"total_depth must be >= n + 2 = {n + 2}, got {total_depth}")
    trace = run_cascade(replace(config, depth=total_depth))
    sol = generalized_solution(trace)
    nxt = trace.eta_primes[n]  # level n + 1
    return replace(sol, terminated_at=n, unwind_bound=2 * nxt * nxt)


# -- serialization -------------------------------------------------------

def trace_to_csv(trace: CascadeTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in trace.rows():
        writer.writerow([row[0]] + [x.to_decimal() for x in row[1:]])
    return buf.getvalue()


def trace_to_dict(trace: CascadeTrace) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "eta": trace.eta.to_decimal(),
        "seed": trace.seed_used,
        "precision": trace.precision,
        "schedule": trace.schedule,
        "levels": [dict(zip(TRACE_COLUMNS, [r[0]] + [x.to_decimal() for x in r[1:]]))
                   for r in trace.rows()],
    }


def trace_to_json(trace: CascadeTrace) -> str:
    return json.dumps(trace_to_dict(trace), indent=2) + "\n"


def trace_from_dict(data: dict) -> CascadeTrace:
    prec = int(data["precision"])
    rows = data["levels"]
    col = lambda name: tuple(BigReal(r[name], prec) for r in rows)  # noqa: E731
    return CascadeTrace(BigReal(data["eta"], prec), col("eta_prime"), col("alpha"),
                        col("epsilon"), col("t_minus"), col("t_plus"),
                        int(data["seed"]), prec, data.get("schedule", "never"))
