import math

import numpy as np
import pytest
from scipy import integrate

from batchsched.errors import DomainError
from batchsched.model import ProblemSpec
from batchsched import schedule as sch

EASY = ProblemSpec(1.0, 2.0, 1.0, 0.0005)
HARD = ProblemSpec(0.4, 2.0, 1.0, 0.0005)


def test_constant():
    s = sch.constant(2, 10)
    assert s.T == 5 and len(s.segments) == 1 and s.D == 10
    assert sch.constant(1, 7).T == 7
    assert sch.budget(sch.constant(640, 4e8)) == 4e8
    assert sch.eval(sch.constant(5, 20), 1.0) == 5


def test_two_stage():
    s = sch.two_stage(1, 2, 100, 50)
    assert s.segments[0].t_end == 50 and s.T == 75 and s.D == 100
    s0 = sch.two_stage(1, 2, 100, 0)
    assert len(s0.segments) == 1 and s0.T == 50
    s1 = sch.two_stage(1, 2, 100, 100)
    assert len(s1.segments) == 1 and s1.T == 100
    with pytest.raises(DomainError):
        sch.two_stage(1, 2, 100, 101)
    with pytest.raises(DomainError):
        sch.two_stage(2, 2, 100, 10)


def test_eval_domain():
    s = sch.constant(3, 9)
    with pytest.raises(DomainError):
        sch.eval(s, 3.5)
    with pytest.raises(DomainError):
        sch.eval(s, -0.1)


def test_power_growth_budget_example():
    assert sch.power_growth(1.0, 3.0, -0.5, strict=False).D == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize("A,tref,q,a,b", [(3.0, 40.0, -0.75, 0.0, 40.0), (1.5, 12.0, -0.6, 2.0, 9.5),
                                          (10.0, 1e4, -0.8, 100.0, 9e3), (2.0, 5.0, -1.0, 0.0, 5.0)])
def test_power_growth_budget_vs_quadrature(A, tref, q, a, b):
    seg = sch.Segment(a, b, sch.PowerGrowth(A, tref, q), strict=False)
    ref, _ = integrate.quad(lambda t: A * (tref - t + 1) ** q, a, b, epsabs=0, epsrel=1e-13, limit=200)
    assert seg.integral() == pytest.approx(ref, rel=1e-10)


def test_segment_invariants():
    with pytest.raises(DomainError):
        sch.Segment(1.0, 1.0, sch.Constant(2.0))
    with pytest.raises(DomainError):
        sch.Segment(0.0, 1.0, sch.Constant(0.5))
    with pytest.raises(DomainError):
        sch.Segment(0.0, 5.0, sch.PowerGrowth(2.0, 4.0, -0.5))
    with pytest.raises(DomainError):
        sch.Schedule((sch.Segment(0.0, 1.0, sch.Constant(1.0)), sch.Segment(1.5, 2.0, sch.Constant(1.0))))


def test_budget_additivity():
    segs = (sch.Segment(0.0, 3.0, sch.Constant(2.0)),
            sch.Segment(3.0, 10.0, sch.PowerGrowth(20.0, 10.0, -0.75)))
    s = sch.Schedule(segs)
    assert s.D == pytest.approx(sum(g.integral() for g in segs), rel=1e-15)


def test_discretize_examples():
    d = sch.discretize(sch.constant(3, 30), 1.0)
    assert d.K == 10 and set(d.batch_sizes.tolist()) == {3}
    d = sch.discretize(sch.constant(2.0, 10), 0.5)
    assert d.K == 10 and set(d.batch_sizes.tolist()) == {2}


def test_discretize_power_growth_round_trip():
    T = 50.0
    s = sch.power_growth(200.0, T, -0.75)
    d = sch.discretize(s, T / 1000)
    assert abs(d.continuous_budget / s.D - 1) < 0.02


def test_discretize_rounds_half_up():
    s = sch.Schedule((sch.Segment(0.0, 1.0, sch.Constant(2.5)), sch.Segment(1.0, 2.0, sch.Constant(1.49))))
    assert sch.discretize(s, 1.0).batch_sizes.tolist() == [3, 1]


def test_to_schedule_round_trip():
    d = sch.DiscreteSchedule(np.array([1, 1, 2, 2, 2, 5]), 0.1)
    s = d.to_schedule()
    assert len(s.segments) == 3 and s.D == pytest.approx(d.continuous_budget, rel=1e-14)
    assert sch.discretize(s, 0.1).batch_sizes.tolist() == d.batch_sizes.tolist()


def test_discrete_schedule_invariants():
    with pytest.raises(DomainError):
        sch.DiscreteSchedule(np.array([1, 0, 2]), 0.1)
    with pytest.raises(DomainError):
        sch.DiscreteSchedule(np.array([1.5]), 0.1)


def test_appendix_easy_totals():
    totals = [sch.appendix_b2_easy(d, EASY).total for d in (2, 4, 8, 16, 32)]
    assert totals == [6346, 13973, 30331, 64962, 137693]


def test_appendix_easy_length_and_shape():
    d = sch.appendix_b2_easy(2, EASY)
    assert d.K == math.floor(2000 ** (2 / 3)) == 158
    b = d.batch_sizes
    assert np.all(np.diff(b) >= 0)
    assert b[-1] == b.max() == math.floor(500 * 2 ** (5 / 6) * (1 + 10) ** (-0.75))


def test_appendix_easy_domain():
    with pytest.raises(DomainError):
        sch.appendix_b2_easy(1e-9, EASY)
    with pytest.raises(DomainError):
        sch.appendix_b2_easy(2, EASY, nu=0)


def test_appendix_hard_structure():
    d = sch.appendix_b2_hard(2000, HARD)
    K1 = math.floor(2000 - 2000 ** (1.4 / 1.5))
    assert d.K == 2000 and K1 < 2000
    b = d.batch_sizes
    assert np.all(b[:K1] == 1)
    assert b[K1] == 1
    assert 2000 - K1 == pytest.approx(2000 ** (14 / 15), abs=1)
    assert np.all(np.diff(b) >= 0)


def test_appendix_hard_totals_as_printed():
    # literal construction; these differ from the published list (see README)
    totals = [sch.appendix_b2_hard(d, HARD).total for d in (2000, 4000, 8000, 16000, 32000)]
    assert totals == [3728, 7686, 15678, 31708, 63714]


def test_appendix_hard_domain():
    with pytest.raises(DomainError):
        sch.appendix_b2_hard(0.5, ProblemSpec(0.05, 1.1))


def test_text_round_trip():
    s = sch.Schedule((sch.Segment(0.0, 3.25, sch.Constant(2.0)),
                      sch.Segment(3.25, 10.0, sch.PowerGrowth(20.0, 10.0, -0.75))))
    assert sch.from_text(sch.to_text(s)) == s
    with pytest.raises(DomainError):
        sch.from_text("linear 0 1 2\n")
    with pytest.raises(DomainError):
        sch.from_text("constant 0 one 2\n")
