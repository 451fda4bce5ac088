"""Cantor-like interval families around a point and their box-counting dimension.

A point ``a`` extended to depth ``N`` is the family of shells
``(a - eps**(2**n), a - eps**(2**(n+1)))`` and ``(a + eps**(2**(n+1)), a + eps**(2**n))``
for ``n = 0..N``.  Covering is done on the cascade scales ``delta**(2**n)``;
only boundary boxes (those meeting the family without lying inside a single
interval) enter the refinement ratio ``lambda``, and the dimension is
``sigma = 1 + lambda / (1 - lambda)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .bigscale import DEFAULT_PRECISION, BigReal, Number, big, bprod
from .cascade import SCHEMA_VERSION
from .errors import DomainError, InsufficientScalesError, PrecisionError

MAX_BOX_COUNT = 1 << 53


@dataclass(frozen=True)
class CantorSpec:
    epsilon: BigReal
    depth: int
    anchor: BigReal

    @classmethod
    def of(cls, epsilon: Number, depth: int, anchor: Number = 0,
           precision: int = DEFAULT_PRECISION) -> "CantorSpec":
        return cls(big(epsilon, precision), depth, big(anchor, precision))


@dataclass(frozen=True)
class Interval:
    """Open interval ``(left, right)`` tagged with its cascade level."""

    left: BigReal
    right: BigReal
    level: int

    @property
    def length(self) -> BigReal:
        return self.right - self.left


def build_cantor(spec: CantorSpec) -> list[Interval]:
    eps, a = spec.epsilon, spec.anchor
    if not (0 < eps < 1):
        raise DomainError(f"epsilon out of range: {eps} not in (0, 1)")
    if spec.depth < 1:
        raise DomainError("depth must be >= 1")
    prec = max(eps.precision, a.precision)
    radii = [eps]
    for _ in range(spec.depth + 1):
        radii.append(radii[-1] * radii[-1])
    window = max(eps, abs(a))
    if radii[-1].log2_magnitude() <= window.log2_magnitude() - prec + 2:
        raise PrecisionError(
            f"innermost radius eps**(2**{spec.depth + 1}) is below {prec}-bit resolution")
    out = []
    for n in range(spec.depth + 1):
        r_out, r_in = radii[n], radii[n + 1]
        out.append(Interval(a - r_out, a - r_in, n))
        out.append(Interval(a + r_in, a + r_out, n))
    out.sort(key=lambda iv: iv.left)
    return out


def _exact(x: BigReal) -> Fraction:
    sign, man, exp, _ = x._mpf
    value = Fraction(int(man)) * Fraction(2) ** int(exp) if man else Fraction(0)
    return -value if sign else value


def _box_range(iv: Interval, x0: Fraction, scale: Fraction) -> tuple[int, int, int, int]:
    """Index ranges of boxes meeting ``iv`` and of boxes inside its closure.

    Box indices are computed from the exact binary values so that rounding
    never moves an endpoint across a box edge.
    """
    lo = (_exact(iv.left) - x0) / scale
    hi = (_exact(iv.right) - x0) / scale
    return math.floor(lo), math.ceil(hi) - 1, math.ceil(lo), math.floor(hi) - 1


def _window_left(intervals: Sequence[Interval], window_left) -> BigReal:
    if window_left is not None:
        return big(window_left)
    return min(iv.left for iv in intervals)


def _merged_count(ranges) -> int:
    total, cur_lo, cur_hi = 0, None, None
    for lo, hi in sorted(r for r in ranges if r[0] <= r[1]):
        if cur_hi is None or lo > cur_hi + 1:
            if cur_hi is not None:
                total += cur_hi - cur_lo + 1
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo + 1
    return total


def box_count(intervals: Sequence[Interval], scale: Number,
              window_left: Number | None = None) -> int:
    """Number of boxes ``[x0 + k*scale, x0 + (k+1)*scale)`` meeting any interval."""
    scale = big(scale)
    if scale.sign() <= 0:
        raise DomainError("scale must be positive")
    if not intervals:
        return 0
    x0, step = _exact(_window_left(intervals, window_left)), _exact(scale)
    count = _merged_count(_box_range(iv, x0, step)[:2] for iv in intervals)
    if count > MAX_BOX_COUNT:
        raise PrecisionError(f"box count {count} exceeds 2**53")
    return count


def boundary_box_count(intervals: Sequence[Interval], scale: Number,
                       window_left: Number | None = None) -> int:
    """Boxes meeting the family but not contained in the closure of a single interval."""
    scale = big(scale)
    if scale.sign() <= 0:
        raise DomainError("scale must be positive")
    if not intervals:
        return 0
    x0, step = _exact(_window_left(intervals, window_left)), _exact(scale)
    partial = set()
    for iv in intervals:
        k_lo, k_hi, in_lo, in_hi = _box_range(iv, x0, step)
        for k in (k_lo, k_hi):
            if k_lo <= k <= k_hi and not in_lo <= k <= in_hi:
                partial.add(k)
    return len(partial)


@dataclass(frozen=True)
class CoverReport:
    scales: tuple
    counts: tuple
    cover_counts: tuple
    lambda_fit: BigReal
    sigma: BigReal | None
    n_total: BigReal

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("level", "scale", "count"))
        for n, (s, c) in enumerate(zip(self.scales, self.counts)):
            w.writerow((n, s.to_decimal(), c))
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "lambda_fit": self.lambda_fit.to_decimal(),
            "sigma": None if self.sigma is None else self.sigma.to_decimal(),
            "n_total": self.n_total.to_decimal(),
        }

    def to_json(self) -> str:
        data = self.summary()
        data["levels"] = [{"level": n, "scale": s.to_decimal(), "count": c,
                           "cover_count": cc}
                          for n, (s, c, cc) in enumerate(zip(self.scales, self.counts,
                                                              self.cover_counts))]
        return json.dumps(data, indent=2) + "\n"


def sigma_from_lambda(lam: Number) -> BigReal:
    lam = big(lam)
    if lam.sign() < 0 or lam >= 1:
        raise DomainError(f"lambda must lie in [0, 1), got {lam}")
    return 1 + lam / (1 - lam)


def cover_report(intervals: Sequence[Interval], delta: Number, levels: int,
                 window_left: Number | None = None) -> CoverReport:
    """Box counts on the scales ``delta**(2**n)``, ``n < levels``, and the fitted ``lambda``.

    ``lambda`` is the geometric mean of successive boundary-count ratios,
    taken over the levels whose previous count is nonzero.
    """
    delta = big(delta)
    if not (0 < delta < 1):
        raise DomainError(f"delta out of range: {delta} not in (0, 1)")
    if levels < 3:
        raise InsufficientScalesError(f"need at least 3 cascade scales, got {levels}")
    scales = [delta]
    for _ in range(levels - 1):
        scales.append(scales[-1] * scales[-1])
    counts = tuple(boundary_box_count(intervals, s, window_left) for s in scales)
    covers = tuple(box_count(intervals, s, window_left) for s in scales)
    prec = delta.precision
    ratios = [BigReal(counts[n + 1], prec) / counts[n]
              for n in range(levels - 1) if counts[n]]
    if not ratios or any(not r for r in ratios):
        lam = BigReal(0, prec)
    else:
        lam = bprod(ratios)
        if len(ratios) > 1:
            lam = lam ** (BigReal(1, prec) / len(ratios))
    sigma = sigma_from_lambda(lam) if lam < 1 else None
    return CoverReport(tuple(scales), counts, covers, lam, sigma, BigReal(sum(counts), prec))


def lambda_cascade_fit(spec: CantorSpec, delta: Number, levels: int | None = None) -> CoverReport:
    """Cover the depth-N family of ``spec`` on every scale that still resolves it.

    A scale resolves structure while it is strictly coarser than the innermost
    core radius ``eps**(2**(N+1))``.  When ``lambda >= 1`` the report carries
    ``sigma = None``.
    """
    delta = big(delta, spec.epsilon.precision)
    if not (0 < delta < 1):
        raise DomainError(f"delta out of range: {delta} not in (0, 1)")
    intervals = build_cantor(spec)
    core = intervals[len(intervals) // 2].left - spec.anchor
    usable, s = 0, delta
    while s > core and usable < 64:
        usable += 1
        s = s * s
    if levels is None:
        levels = usable
    if min(levels, usable) < 3:
        raise InsufficientScalesError(
            f"only {usable} cascade scales resolve the family (need 3)")
    return cover_report(intervals, delta, min(levels, usable), spec.anchor - spec.epsilon)


def engineered_family(delta: Number, points_per_level: Sequence[int]) -> tuple[list, BigReal]:
    """Interval family whose boundary counts are set level by level.

    ``points_per_level[k-1]`` endpoints sit on the grid of scale
    ``delta**(2**k)`` but off the grid of ``delta**(2**(k-1))``, each in its
    own coarse box, so the level-n boundary count is the number of endpoints
    placed at levels ``k > n``.  Endpoints are paired into intervals in order.
    Requires ``1/delta`` to be an integer.  Returns ``(intervals, window_left)``.
    """
    delta = big(delta)
    inv = 1 / delta
    if inv != inv.floor() or inv < 2:
        raise DomainError("engineered families need 1/delta to be an integer >= 2")
    total = sum(points_per_level)
    if total % 2:
        raise DomainError("the number of endpoints must be even")
    scales = [delta]
    for _ in range(len(points_per_level)):
        scales.append(scales[-1] * scales[-1])
    points, box = [], 0
    for k, m in enumerate(points_per_level, start=1):
        for _ in range(m):
            points.append(box * scales[0] + scales[k])
            box += 1
    intervals = [Interval(points[i], points[i + 1], 0) for i in range(0, total, 2)]
    return intervals, BigReal(0, delta.precision)


def family_to_csv(intervals: Sequence[Interval]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("level", "left", "right"))
    for iv in intervals:
        w.writerow((iv.level, iv.left.to_decimal(), iv.right.to_decimal()))
    return buf.getvalue()


@dataclass(frozen=True)
class DimensionEstimate:
    sigma_local: BigReal
    t: BigReal
    epsilon_phi: BigReal


def sigma_local(t: Number, epsilon_phi: Number) -> DimensionEstimate:
    """``sigma = 1 + ln(1 + eps*phi) / ln t``."""
    t, ephi = big(t), big(epsilon_phi)
    if t.sign() <= 0:
        raise DomainError("t must be positive")
    if t == 1:
        raise DomainError("sigma_local is singular at t = 1")
    if (1 + ephi).sign() <= 0:
        raise DomainError("1 + epsilon_phi must be positive")
    return DimensionEstimate(1 + (1 + ephi).ln() / t.ln(), t, ephi)


def golden_mean_cf(iterations: int, precision: int = DEFAULT_PRECISION) -> BigReal:
    """Apply ``x <- 1/(1 + x)`` ``iterations`` times from ``x = 1``; tends to (sqrt5 - 1)/2."""
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    x = BigReal(1, precision)
    for _ in range(iterations):
        x = 1 / (1 + x)
    return x
