import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batchsched.analysis import (APPENDIX_B2_TOTALS, Evaluator, PlanSource, appendix_b2_for_total,
                                 catchup_decay_prediction, catchup_gap, catchup_time_prediction,
                                 measure_catchup, powerlaw_fit, rate_sweep, switch_sweep,
                                 theory_catchup_curves)
from batchsched.errors import DomainError, RegimeError
from batchsched.model import ProblemSpec
from batchsched.trajectory import Kind, Trajectory


def test_fit_exact_square():
    f = powerlaw_fit([10, 100], [100, 1e4])
    assert f.slope == pytest.approx(2.0, abs=1e-12)
    assert f.r_squared == 1.0 and f.n_points == 2


def test_fit_constant_y():
    assert powerlaw_fit([1, 2, 5, 9], [3, 3, 3, 3]).slope == pytest.approx(0.0, abs=1e-14)


def test_fit_synthetic_power_law():
    x = np.array([1.0, 2.0, 5.0, 10.0, 50.0])
    f = powerlaw_fit(x, 3 * x ** -0.4)
    assert f.slope == pytest.approx(-0.4, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert abs(f.r_squared - 1) <= 1e-12


@pytest.mark.parametrize("xs,ys", [([1, 0], [1, 2]), ([1, 2], [1, -2]), ([1], [1]), ([2, 2], [1, 3])])
def test_fit_rejects_bad_input(xs, ys):
    with pytest.raises(DomainError):
        powerlaw_fit(xs, ys)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.1, 1e3), min_size=3, max_size=12, unique=True),
       st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_fit_scale_equivariant(xs, c, seed):
    x = np.array(xs)
    if np.ptp(np.log(x)) < 1e-3:
        return
    y = np.exp(np.random.default_rng(seed).normal(size=x.size))
    a, b = powerlaw_fit(x, y), powerlaw_fit(c * x, y)
    assert abs(a.slope - b.slope) <= 1e-12 * max(1, abs(a.slope)) + 1e-11
    assert abs(a.r_squared - b.r_squared) <= 1e-12 + 1e-11
    assert b.intercept == pytest.approx(a.intercept - a.slope * math.log(c), abs=1e-9)


def test_catchup_gap_examples():
    spec = ProblemSpec(0.3, 1.5, sigma=2.0, eta=0.05)
    assert catchup_gap(spec, 1, 2) == pytest.approx(0.1, rel=1e-15)
    assert catchup_gap(spec, 3, 3) == 0.0
    assert catchup_gap(spec, 2, 4) == pytest.approx(0.5 * catchup_gap(spec, 1, 2), rel=1e-15)
    with pytest.raises(DomainError):
        catchup_gap(spec, 4, 2)


def test_decay_prediction():
    assert catchup_decay_prediction(ProblemSpec(0.3, 1.5), 1.0, 8.0) == pytest.approx(0.5, rel=1e-14)
    assert catchup_decay_prediction(ProblemSpec(0.3, 2.0), 2.0, 16.0) == pytest.approx(0.5, rel=1e-14)
    # exponent vanishes as beta approaches 1
    assert catchup_decay_prediction(ProblemSpec(0.3, 1.0 + 1e-9), 1.0, 1e6) == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(DomainError):
        catchup_decay_prediction(ProblemSpec(0.3, 1.5), 1.0, 0.0)


def test_time_prediction():
    assert catchup_time_prediction(ProblemSpec(0.3, 1.5), 1e6) == pytest.approx(1e6 ** 0.9, rel=1e-12)
    spec = ProblemSpec(0.5, 2.0)  # s = 1 - 1/beta
    assert catchup_time_prediction(spec, 1234.5) == pytest.approx(1234.5, rel=1e-12)
    assert catchup_time_prediction(ProblemSpec(0.7, 3.0), 1.0) == 1.0


def _traj(t, y, se=None):
    return Trajectory(np.asarray(t, float), np.asarray(y, float), Kind.MONTE_CARLO,
                      None if se is None else np.asarray(se, float))


def test_measure_identical_inputs():
    t = np.linspace(0.1, 10, 100)
    y = 1 / (1 + t)
    r = measure_catchup(_traj(t, y), _traj(t, y), 0.05, 5.0)
    assert r.gap_measured == pytest.approx(0.0, abs=1e-15)
    assert r.delta_eps == pytest.approx(t[t > 5][0] - 5)
    assert "fit-underdetermined" in r.flags


def test_measure_noise_floor_flags():
    t = np.linspace(0.1, 10, 100)
    y = 1 / (1 + t)
    se = np.full_like(t, 1.0)
    r = measure_catchup(_traj(t, y + 1e-3, se), _traj(t, y, se), 1e-6, 5.0)
    assert r.decay_fit is None and "fit-underdetermined" in r.flags
    assert "catchup-not-reached" in r.flags and r.delta_eps is None


def test_measure_recovers_synthetic_decay():
    d = np.geomspace(0.01, 100, 300)
    t = np.concatenate(([1.0, 50.0], 50.0 + d))
    base = 0.2 + 0 * t
    gap = np.where(t > 50, 0.1 * np.maximum(t - 50, 1e-9) ** (-0.5), 0.1)
    r = measure_catchup(_traj(t, base + gap), _traj(t, base), 0.06, 50.0)
    assert r.decay_fit.slope == pytest.approx(-0.5, abs=1e-10)
    # first grid delta with 0.1 d^-0.5 <= 0.012, i.e. d >= 69.44
    assert r.delta_eps == d[d >= (0.1 / 0.012) ** 2][0]


def test_measure_rejects_short_baseline():
    t = np.linspace(1, 10, 10)
    with pytest.raises(DomainError):
        measure_catchup(_traj(t, t + 1), _traj(t[:5], t[:5] + 1), 0.05, 3.0)
    with pytest.raises(DomainError):
        measure_catchup(_traj(t, t + 1), _traj(t, t + 1), 0.0, 3.0)


@pytest.fixture(scope="module")
def theory_curves():
    spec = ProblemSpec(0.3, 1.5, sigma=2.0, eta=0.05)
    return spec, theory_catchup_curves(spec, 1, 2, 1e5, deltas=np.geomspace(1e-2, 3e4, 200))


def test_theory_catchup_slope(theory_curves):
    spec, (sw, bl, t_star) = theory_curves
    r = measure_catchup(sw, bl, 0.05, t_star, window=(20, 5e-4 * t_star), G_star=catchup_gap(spec, 1, 2))
    assert r.decay_fit.slope == pytest.approx(-1 / 3, abs=0.03)
    # the simplified law's plateau gap is G* / (p - 1) = 0.3
    assert r.gap_measured == pytest.approx(0.3, rel=0.05)


def test_measure_slope_scale_invariant(theory_curves):
    _, (sw, bl, t_star) = theory_curves
    scaled = [Trajectory(x.times, 7.5 * x.losses, x.kind) for x in (sw, bl)]
    a = measure_catchup(sw, bl, 0.05, t_star, window=(20, 50))
    b = measure_catchup(*scaled, 0.05, t_star, window=(20, 50))
    assert a.decay_fit.slope == pytest.approx(b.decay_fit.slope, abs=1e-12)
    assert a.delta_eps == b.delta_eps


def test_gap_csv_header(theory_curves):
    _, (sw, bl, t_star) = theory_curves
    text = measure_catchup(sw, bl, 0.05, t_star).gap_csv()
    lines = text.splitlines()
    assert lines[0] == "delta,gap,stderr" and len(lines) == 201


@pytest.mark.parametrize("s,b,target", [(0.4, 2.0, 14 / 15), (0.3, 1.5, 0.975)])
def test_switch_sweep_slope(s, b, target):
    fit, sols = switch_sweep(ProblemSpec(s, b, sigma=2.0, eta=0.05), np.geomspace(1e5, 1e6, 7), 1, 2)
    assert fit.slope == pytest.approx(target, abs=0.03)
    assert fit.r_squared >= 0.98
    assert all(0 < x.P_star < D for x, D in zip(sols, np.geomspace(1e5, 1e6, 7)))


def test_switch_sweep_easy_rejected():
    with pytest.raises(RegimeError):
        switch_sweep(ProblemSpec(1.0, 2.0), [1e5, 1e6], 1, 2)


def test_appendix_totals_by_inversion():
    spec = ProblemSpec(1.0, 2.0, sigma=1.0, eta=0.0005)
    assert [appendix_b2_for_total(spec, D).total for D in APPENDIX_B2_TOTALS] == list(APPENDIX_B2_TOTALS)


def test_appendix_inversion_hard_close():
    spec = ProblemSpec(0.4, 2.0, sigma=1.0, eta=0.0005)
    for D in APPENDIX_B2_TOTALS:
        assert appendix_b2_for_total(spec, D).total == pytest.approx(D, rel=0.01)


def test_sweep_needs_a_decade():
    spec = ProblemSpec(1.0, 2.0, eta=0.05, dim=50)
    with pytest.raises(DomainError):
        rate_sweep(spec, [100, 200, 400], PlanSource.CLOSED, Evaluator.VOLTERRA, dim=50)
    with pytest.raises(DomainError):
        rate_sweep(spec, [100, 200, 400, 800], PlanSource.CLOSED, Evaluator.VOLTERRA, dim=50)


@pytest.mark.parametrize("source", [PlanSource.CLOSED, PlanSource.APPENDIX_B2])
def test_volterra_sweep_grid_convergence(source):
    spec = ProblemSpec(1.0, 2.0, sigma=1.0, eta=0.05, dim=400)
    D = np.geomspace(2e3, 2e4, 4)
    slopes = []
    for div in (1024, 2048):
        r = rate_sweep(spec, D, source, Evaluator.VOLTERRA, dim=400,
                       grid_step=float(D[-1] * spec.eta / div))
        slopes.append(r.fit.slope)
    assert abs(slopes[0] - slopes[1]) <= 0.01
    assert -1.0 < slopes[1] < -0.3


def test_montecarlo_sweep_csv_and_seeds():
    spec = ProblemSpec(1.0, 2.0, sigma=0.5, eta=0.1, dim=30)
    D = [200, 400, 800, 2000]
    a = rate_sweep(spec, D, PlanSource.CLOSED, Evaluator.MONTE_CARLO, repeats=4, seed=3, dim=30)
    b = rate_sweep(spec, D, PlanSource.CLOSED, Evaluator.MONTE_CARLO, repeats=4, seed=3, dim=30, threads=1)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "D,final_loss,stderr"
    assert a.dim == 30 and np.all(a.stderr > 0)
    c = rate_sweep(spec, D, PlanSource.CLOSED, Evaluator.MONTE_CARLO, repeats=4, seed=3, dim=30,
                   tail_average=True)
    assert "tail-average" in c.flags
