from __future__ import annotations

import math

import pytest

from sfl.bigscale import BigReal, big
from sfl.cascade import CascadeConfig, RescalingSchedule, run_cascade
from sfl.errors import DomainError
from sfl.picardx import (BUILTIN_RHS, RhsField, _Interpolant, log_grid, mu_factor,
                         picard_extended, picard_standard, quadratic_mu)

HALF = (big("-0.5").exp(), big("0.5").exp())


def _sup_error(run, exact):
    return max(abs(lv - exact(u)) for u, lv in zip(run.log_grid, run.final))


def test_selfsim_converges_to_closed_form():
    run = picard_standard(BUILTIN_RHS["selfsim"], 1, HALF, tol="1e-12")
    assert run.converged and run.iterations_used <= 30
    err = _sup_error(run, lambda u: -(1 - u).ln())
    assert err < big("1e-8")
    assert abs(run.ln_tau_at(big("0.5")).exp() - 2) < big("1e-8")


def test_unit_field_converges_immediately():
    run = picard_standard(BUILTIN_RHS["unit"], 3, HALF, tol="1e-30")
    assert run.converged and run.iterations_used <= 2
    tau0 = big(3)
    for t, v in zip(run.grid, run.tau_final()):
        assert abs(v - tau0 * t) < big("1e-60")


def test_texp_matches_exponential_solution():
    # d ln tau / d ln t = t  =>  tau = exp(t - 1)
    run = picard_standard(BUILTIN_RHS["texp"], 1, HALF, tol="1e-12", max_iter=60)
    assert run.converged
    assert _sup_error(run, lambda u: u.exp() - 1) < big("1e-8")


def test_sup_deltas_shrink():
    run = picard_standard(BUILTIN_RHS["selfsim"], 1, HALF, tol="1e-10")
    d = [float(x) for x in run.sup_deltas]
    assert d[-1] < d[0] and d[-1] < 1e-10


def test_near_pole_reports_nonconvergence():
    run = picard_standard(BUILTIN_RHS["selfsim"], 1,
                          (big("-0.99").exp(), big("0.99").exp()), max_iter=20)
    assert not run.converged and run.iterations_used == 20


def test_divergence_is_flagged():
    steep = RhsField(lambda t, tau: tau * tau * tau * 50, "steep")
    run = picard_standard(steep, 1, HALF, max_iter=20)
    assert not run.converged and run.diverged


@pytest.mark.parametrize("interval", [(big("0.5"), big("0.9")), (big("1.1"), big(2)),
                                      (big(-1), big(2))])
def test_interval_must_straddle_one(interval):
    with pytest.raises(DomainError):
        picard_standard(BUILTIN_RHS["unit"], 1, interval)


def test_bad_arguments():
    with pytest.raises(DomainError):
        picard_standard(BUILTIN_RHS["unit"], 0, HALF)
    with pytest.raises(DomainError):
        picard_standard(BUILTIN_RHS["unit"], 1, HALF, grid_size=4)


def test_zero_epsilon_extended_run_is_bit_identical():
    trace = run_cascade(CascadeConfig("0.1", 3))
    std = picard_standard(BUILTIN_RHS["selfsim"], 1, HALF, grid_size=33, tol="1e-12")
    ext = picard_extended(BUILTIN_RHS["selfsim"], 1, HALF, 0, trace, grid_size=33, tol="1e-12")
    assert ext.iterates == std.iterates
    assert ext.sup_deltas == std.sup_deltas


def test_extended_run_moves_with_epsilon():
    trace = run_cascade(CascadeConfig("0.1", 3))
    std = picard_standard(BUILTIN_RHS["unit"], 1, HALF, grid_size=17, tol="1e-20")
    devs = []
    for eps in ("1e-4", "2e-4"):
        ext = picard_extended(BUILTIN_RHS["unit"], 1, HALF, eps, trace, grid_size=17,
                              tol="1e-20")
        devs.append(max(abs(a - b) for a, b in zip(ext.final, std.final)))
    assert devs[0] > 0
    assert abs(devs[1] / devs[0] - 2) < big("1e-3")


def test_log_grid_contains_zero_and_is_sorted():
    us = log_grid(big("-0.3"), big("0.7"), 41)
    assert BigReal(0, 256) in us
    assert all(a < b for a, b in zip(us, us[1:]))
    assert us[0] == big("-0.3") and us[-1] == big("0.7")


def test_interpolant_accuracy_and_monotonicity():
    us = log_grid(big(-1), big(1), 33)
    vals = tuple(u.exp() for u in us)
    interp = _Interpolant(us, vals)
    probes = [big(k) / 37 for k in range(-36, 37)]
    errs = [abs(interp.at(p) - p.exp()) for p in probes]
    assert max(errs) < big("1e-5")
    got = [interp.at(p) for p in probes]
    assert all(a <= b for a, b in zip(got, got[1:]))


def test_mu_for_modulated_exponential():
    for eta in ("0.05", "0.1", "0.2"):
        e = big(eta)
        mu = mu_factor(BUILTIN_RHS["texp"], lambda t: (t - 1).exp(), e)
        assert abs(mu - 1 / (1 - e)) < big("1e-70")


def test_mu_for_quadratic_field_matches_closed_form():
    tau0 = lambda t: 1 / (1 - t.ln())  # noqa: E731
    eta = big("0.05")
    generic = mu_factor(BUILTIN_RHS["selfsim"], tau0, eta)
    closed = quadratic_mu(eta)
    assert abs(generic - closed) < big("5e-4")
    assert math.isclose(float(closed), 0.932, abs_tol=1e-3)


def test_mu_zero_field():
    with pytest.raises(ZeroDivisionError):
        mu_factor(RhsField(lambda t, tau: BigReal(0, t.precision)), lambda t: t, big("0.1"))


def test_run_serialization():
    run = picard_standard(BUILTIN_RHS["unit"], 1, HALF, grid_size=9)
    data = run.to_dict()
    assert data["schema_version"] == 1 and data["converged"] is True
    assert run.to_csv().splitlines()[0] == "t,ln_tau_final,tau_final"
    assert len(run.to_csv().splitlines()) == 10
