import math

import numpy as np
import pytest
from scipy import integrate

from batchsched import optimizer as opt
from batchsched import schedule as sch
from batchsched.errors import DomainError, InfeasibleError
from batchsched.fsl import fsl_loss, kernel_simplified, noise_integral
from batchsched.model import ProblemSpec, Regime, regime

EASY = ProblemSpec(1.0, 2.0, 1.0, 0.05)
HARD = ProblemSpec(0.4, 2.0, 1.0, 0.05)


def slope(xs, ys):
    return np.polyfit(np.log(xs), np.log(ys), 1)[0]


def _nondecreasing(schedule):
    ts = np.linspace(0, schedule.T, 2001)
    return np.all(np.diff(sch.eval_many(schedule, ts)) >= -1e-9)


def test_easy_closed_form_exponents():
    Ds = np.geomspace(1e6, 1e7, 6)
    plans = [opt.closed_form_plan(EASY, D) for D in Ds]
    assert slope(Ds, [p.T_star for p in plans]) == pytest.approx(2 / 3, abs=0.02)
    assert slope(Ds, [p.B_max for p in plans]) == pytest.approx(5 / 6, abs=0.02)
    for p, D in zip(plans, Ds):
        assert p.T1_star == 0 and p.regime is Regime.EASY and p.method is opt.Method.CLOSED
        assert abs(p.schedule.D / D - 1) < 1e-8
        assert _nondecreasing(p.schedule)


def test_hard_closed_form_exponents():
    Ds = np.geomspace(1e5, 1e6, 6)
    plans = [opt.closed_form_plan(HARD, D) for D in Ds]
    frac = [(p.T_star - p.T1_star) / p.T_star for p in plans]
    assert slope(Ds, frac) == pytest.approx(-1 / 15, abs=0.01)
    assert slope(Ds, [p.B_max for p in plans]) == pytest.approx(0.7, abs=0.02)
    for p, D in zip(plans, Ds):
        assert 0 < p.T1_star < p.T_star and p.regime is Regime.HARD
        assert abs(p.schedule.D / D - 1) < 1e-8
        assert p.schedule.segments[0].form == sch.Constant(1.0)
        assert _nondecreasing(p.schedule)


def test_hard_plan_continuous_at_stable_end():
    p = opt.closed_form_plan(HARD, 5e4, B_min=3.0)
    assert sch.eval(p.schedule, p.T1_star) == pytest.approx(3.0, rel=1e-12)
    assert sch.eval_many(p.schedule, [p.T1_star], side="left")[0] == 3.0


def test_easy_lower_bound_at_start_value():
    D = 1e5
    free = opt.closed_form_plan(EASY, D)
    b0 = sch.eval(free.schedule, 0.0)
    same = opt.closed_form_plan(EASY, D, B_min=b0)
    assert same.T1_star == 0 and len(same.schedule.segments) == 1
    with pytest.raises(DomainError):
        opt.closed_form_plan(EASY, D, B_min=D / free.T_star)


def test_boundary_routed_through_hard_path():
    p = opt.closed_form_plan(ProblemSpec(0.5, 2.0, 1.0, 0.05), 1e5)
    assert p.regime is Regime.BOUNDARY and "boundary-regime-via-hard-path" in p.flags
    assert abs(p.schedule.D / 1e5 - 1) < 1e-8


def test_infeasible_budget():
    with pytest.raises(InfeasibleError):
        opt.closed_form_plan(HARD, 1.0, B_min=5.0)


def test_regime_consistency():
    for spec in (EASY, HARD, ProblemSpec(0.2, 3.0), ProblemSpec(2.0, 1.5)):
        assert opt.closed_form_plan(spec, 1e6).regime is regime(spec)


def test_kkt_unclipped_is_power_form():
    p = opt.numeric_kkt_plan(EASY, 1e5)
    assert p.T1_star == 0 and len(p.schedule.segments) == 1
    T = p.T_star
    ts = np.linspace(0, T, 50)
    ratio = sch.eval_many(p.schedule, ts) / (T - ts + 1) ** (1 / 4 - 1)
    assert np.ptp(ratio) / ratio[0] < 1e-6


def test_cauchy_schwarz_equality():
    for spec, D in ((EASY, 1e5), (ProblemSpec(2.0, 1.5, 1.0, 0.05), 3e4)):
        p = opt.numeric_kkt_plan(spec, D)
        T = p.T_star
        q = 1 / (2 * spec.beta) - 1
        root_k, _ = integrate.quad(lambda t: (T - t + 1) ** q, 0, T, epsabs=0, epsrel=1e-13)
        assert noise_integral(p.schedule, T, spec.beta) == pytest.approx(root_k ** 2 / D, rel=1e-6)


def test_kkt_clip_boundary_condition():
    p = opt.numeric_kkt_plan(HARD, 2e5, B_min=8.0)
    assert p.T1_star > 0
    assert p.schedule.segments[0].form == sch.Constant(8.0)
    resid = p.C * math.sqrt(kernel_simplified(p.T_star - p.T1_star, 2.0)) - 8.0
    assert abs(resid) < 1e-8


def test_kkt_cap():
    p = opt.numeric_kkt_plan(EASY, 1e5, B_min=1.0, B_max_cap=200.0)
    assert p.B_max == pytest.approx(200.0)
    assert p.schedule.segments[-1].form == sch.Constant(200.0)
    assert abs(p.schedule.D / 1e5 - 1) < 1e-8


def test_kkt_not_worse_than_closed_form():
    for spec in (EASY, HARD):
        for D in (1e4, 1e5):
            c = opt.closed_form_plan(spec, D)
            k = opt.numeric_kkt_plan(spec, D)
            assert k.predicted_loss <= c.predicted_loss + 1e-9
            assert abs(k.schedule.D / D - 1) < 1e-8 and _nondecreasing(k.schedule)


def _perturbation_delta(spec, plan, t_add, t_rm, width, h):
    """Objective change when h*width data move from [t_rm, t_rm+width] to [t_add, t_add+width]."""
    T = plan.T_star
    p = 2 - 1 / spec.beta
    b = lambda t: sch.eval(plan.schedule, t)

    def piece(a, sign):
        val, _ = integrate.quad(
            lambda t: (T - t + 1) ** -p * (1 / (b(t) + sign * h) - 1 / b(t)),
            a, a + width, epsabs=0, epsrel=1e-12)
        return val

    return spec.eta * spec.sigma ** 2 * (piece(t_add, +1) + piece(t_rm, -1))


@pytest.mark.parametrize("spec,D,B_min", [(EASY, 1e5, 1.0), (HARD, 1e5, 1.0), (HARD, 2e5, 8.0)])
def test_kkt_perturbation_optimality(spec, D, B_min):
    plan = opt.numeric_kkt_plan(spec, D, B_min)
    T = plan.T_star
    rng = np.random.default_rng(7)
    for _ in range(12):
        t_add, t_rm = rng.uniform(0.02 * T, 0.97 * T, 2)
        width = 0.01 * T
        room = min(sch.eval_many(plan.schedule, np.linspace(t_rm, t_rm + width, 20))) - B_min
        h = min(0.05, max(room, 0.0) * 0.5)
        if h <= 0:
            continue
        assert _perturbation_delta(spec, plan, t_add, t_rm, width, h) >= -1e-8


def test_two_stage_loss_degenerate_cases():
    spec = ProblemSpec(0.3, 1.5, 2.0, 0.05)
    D = 1e4
    assert opt.two_stage_loss(spec, D, 1, 2, 0) == pytest.approx(
        fsl_loss(spec, sch.constant(2, D), D / 2), rel=1e-13)
    assert opt.two_stage_loss(spec, D, 1, 2, D) == pytest.approx(
        fsl_loss(spec, sch.constant(1, D), D), rel=1e-13)
    vals = [opt.two_stage_loss(spec, D, 3, 3, P) for P in (0, 10, 5000, D)]
    assert np.ptp(vals) < 1e-14


def test_two_stage_loss_matches_schedule_evaluation():
    spec = ProblemSpec(0.4, 2.0, 1.0, 0.05)
    for P in (1.0, 2500.0, 9999.0):
        s = sch.two_stage(1, 4, 1e4, P)
        assert opt.two_stage_loss(spec, 1e4, 1, 4, P) == pytest.approx(fsl_loss(spec, s, s.T), rel=1e-12)


def test_switch_easy_boundary_optimum():
    spec = ProblemSpec(1.0, 2.0, 2.0, 0.05)
    for D in (1e5, 1e6):
        sol = opt.optimal_switch(spec, D, 1, 2)
        assert sol.P_star == 0
        assert "boundary-optimum-residual-inapplicable" in sol.flags
        assert sol.stationarity_residual == 0


def test_switch_matches_dense_scan():
    spec = ProblemSpec(0.4, 2.0, 2.0, 0.05)
    D = 2e5
    sol = opt.optimal_switch(spec, D, 1, 2)
    Ps = np.linspace(0, D, 100_001)
    Ls = np.array([opt.two_stage_loss(spec, D, 1, 2, P) for P in Ps])
    assert abs(sol.P_star - Ps[np.argmin(Ls)]) <= D / 1e5
    assert sol.loss_at_optimum <= Ls.min() + 1e-15
    assert sol.loss_at_optimum <= sol.loss_curve[:, 1].min()
    assert "loss-curve-not-unimodal" not in sol.flags
    # interior optimum: derivative bracket is near zero relative to its terms
    scale = 0.4 * (sol.P_star / 1 + (D - sol.P_star) / 2 + 1) ** -1.4
    assert sol.stationarity_residual < 1e-3 * scale


def test_switch_preconditions():
    with pytest.raises(DomainError):
        opt.optimal_switch(HARD, 1e4, 2, 2)
    with pytest.raises(DomainError):
        opt.two_stage_loss(HARD, 1e4, 1, 2, 2e4)


def test_plan_text_header():
    text = opt.closed_form_plan(HARD, 1e5).to_text()
    assert text.startswith("# T_star=")
    for key in ("T1_star", "B_max", "predicted_loss", "regime=Hard", "method=ClosedForm"):
        assert key in text
    body = "".join(ln + "\n" for ln in text.splitlines() if not ln.startswith("#"))
    assert sch.from_text(body).D == pytest.approx(1e5, rel=1e-10)
