"""Optimal batch-size schedules under a data budget.

Closed-form stable-growth plans, numeric plans of the clipped form
b(t) = clip(C sqrt(K(T - t)), B_min, cap), and the optimal switch point of a
two-stage schedule.  The objective throughout is the simplified scaling law at
the horizon: (T+1)^-s + eta sigma^2 int_0^T K(T - t)/b(t) dt.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ._search import bisect_increasing, golden_section
from .errors import DomainError, InfeasibleError
from .fsl import fsl_loss, kernel_integral, kernel_simplified
from .model import ProblemSpec, Regime, regime
from .schedule import Constant, PowerGrowth, Schedule, Segment, to_text

SWITCH_GRID = 128
SWITCH_TOL = 1e-6
KKT_GRID = 32
KKT_FALLBACK_GRID = 256


class Method(str, enum.Enum):
    CLOSED = "ClosedForm"
    KKT = "NumericKKT"


@dataclass(frozen=True)
class OptimalPlan:
    schedule: Schedule
    T_star: float
    T1_star: float
    B_max: float
    predicted_loss: float
    regime: Regime
    method: Method
    flags: tuple = ()
    C: float | None = None

    def header(self) -> str:
        lines = [f"T_star={self.T_star!r}", f"T1_star={self.T1_star!r}", f"B_max={self.B_max!r}",
                 f"predicted_loss={self.predicted_loss!r}", f"regime={self.regime.value}",
                 f"method={self.method.value}"]
        if self.flags:
            lines.append("flags=" + ";".join(self.flags))
        return "".join("# " + ln + "\n" for ln in lines)

    def to_text(self) -> str:
        return self.header() + to_text(self.schedule)


@dataclass(frozen=True)
class SwitchSolution:
    P_star: float
    loss_at_optimum: float
    loss_curve: np.ndarray
    stationarity_residual: float
    flags: tuple = field(default=())


def _q(beta):
    return 1.0 / (2.0 * beta) - 1.0


def objective(spec: ProblemSpec, schedule: Schedule) -> float:
    return fsl_loss(spec, schedule, schedule.T)


def _growth_integral(T2, q):
    """int_0^T2 (u + 1)^q du."""
    return ((T2 + 1.0) ** (q + 1.0) - 1.0) / (q + 1.0)


def closed_form_plan(spec: ProblemSpec, D: float, B_min: float = 1.0) -> OptimalPlan:
    if not (D > 0 and B_min >= 1):
        raise DomainError("need D > 0 and B_min >= 1")
    reg = regime(spec)
    q = _q(spec.beta)
    flags = ()
    if reg is Regime.EASY:
        T = D ** (spec.beta / (1.0 + spec.s * spec.beta))
        A = D / _growth_integral(T, q)
        if A * (T + 1.0) ** q < B_min * (1 - 1e-12):
            raise DomainError(
                f"easy-regime growth schedule starts at b(0)={A * (T + 1.0) ** q:.6g} < B_min={B_min}; "
                "use numeric_kkt_plan for an active lower bound")
        sched = Schedule((Segment(0.0, T, PowerGrowth(A, T, q)),))
        T1 = 0.0
    else:
        if reg is Regime.BOUNDARY:
            flags = ("boundary-regime-via-hard-path",)
        gamma = (spec.s + 1.0) / (2.0 - 1.0 / spec.beta)

        def data(T):
            T2 = T ** gamma
            return B_min * (T - T2) + B_min * (T2 + 1.0) ** (-q) * _growth_integral(T2, q)

        if D < data(1.0):
            raise InfeasibleError(f"D={D} below the smallest stable-growth budget {data(1.0):.6g}")
        T = optimize.brentq(lambda x: data(x) - D, 1.0, max(1.0, D / B_min) * 1.0 + 1.0,
                            xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        T2 = min(T, T ** gamma)
        T1 = T - T2
        A = B_min * (T2 + 1.0) ** (-q)
        segs = []
        if T1 > 0:
            segs.append(Segment(0.0, T1, Constant(float(B_min))))
        segs.append(Segment(T1, T, PowerGrowth(A, T, q)))
        sched = Schedule(tuple(segs))
    return OptimalPlan(sched, T, T1, A, objective(spec, sched), reg, Method.CLOSED, flags)


def _clipped(T, C, q, B_min, cap):
    """Breakpoints of clip(C (T - t + 1)^q, B_min, cap) on [0, T]."""
    t1 = min(T, max(0.0, T + 1.0 - (B_min / C) ** (1.0 / q)))
    t2 = T if cap is None else min(T, max(t1, T + 1.0 - (cap / C) ** (1.0 / q)))
    return t1, t2


def _clipped_budget(T, C, q, B_min, cap):
    t1, t2 = _clipped(T, C, q, B_min, cap)
    mid = C * (((T - t1 + 1.0) ** (q + 1.0) - (T - t2 + 1.0) ** (q + 1.0)) / (q + 1.0))
    return B_min * t1 + mid + (0.0 if cap is None else cap * (T - t2))


def kkt_schedule(spec: ProblemSpec, D: float, T: float, B_min: float = 1.0, cap=None):
    """Clipped stationary schedule with horizon T whose budget is exactly D.

    Returns (schedule, C, t1) or raises InfeasibleError if T is outside
    [D/cap, D/B_min].
    """
    q = _q(spec.beta)
    if B_min * T > D * (1 + 1e-12) or (cap is not None and cap * T < D * (1 - 1e-12)):
        raise InfeasibleError(f"horizon T={T} cannot carry D={D} within the batch bounds")
    lo = math.log(B_min) - 1e-9
    hi = math.log(max(B_min, 1.0)) + 1.0
    while _clipped_budget(T, math.exp(hi), q, B_min, cap) < D:
        if cap is not None and math.exp(hi) > cap * (T + 1.0) ** (-q):
            break
        hi += 2.0
    logC = bisect_increasing(lambda x: _clipped_budget(T, math.exp(x), q, B_min, cap), D, lo, hi)
    C = math.exp(logC)
    t1, t2 = _clipped(T, C, q, B_min, cap)
    segs = []
    if t1 > 0:
        segs.append(Segment(0.0, t1, Constant(float(B_min))))
    if t2 > t1:
        segs.append(Segment(t1, t2, PowerGrowth(C, T, q)))
    if t2 < T:
        segs.append(Segment(t2, T, Constant(float(cap))))
    return Schedule(tuple(segs)), C, t1


def numeric_kkt_plan(spec: ProblemSpec, D: float, B_min: float = 1.0,
                     B_max_cap: float | None = None) -> OptimalPlan:
    """Numeric optimum over the clipped family; golden-section search in log T."""
    if not (D > 0 and B_min >= 1):
        raise DomainError("need D > 0 and B_min >= 1")
    if B_max_cap is not None and B_max_cap < B_min:
        raise DomainError("B_max_cap must be at least B_min")
    T_lo = D / (B_max_cap if B_max_cap is not None else D)
    T_hi = D / B_min
    if T_hi < T_lo:
        raise InfeasibleError("empty horizon bracket")

    def obj(logT):
        sched, _, _ = kkt_schedule(spec, D, math.exp(logT), B_min, B_max_cap)
        return objective(spec, sched)

    a, b = math.log(T_lo), math.log(T_hi)
    flags = []
    if b - a < 1e-12:
        x = b
    else:
        x, fx = golden_section(obj, a, b, 1e-10)
        grid = np.linspace(a, b, KKT_GRID)
        vals = np.array([obj(g) for g in grid])
        if vals.min() < fx - 1e-12 * abs(fx):
            flags.append("non-unimodal-dense-grid-fallback")
            grid = np.linspace(a, b, KKT_FALLBACK_GRID)
            vals = np.array([obj(g) for g in grid])
            i = int(np.argmin(vals))
            x, fx = golden_section(obj, grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)], 1e-10)
            if vals[i] < fx:
                x = grid[i]
        for end in (a, b):
            # edge optima are not interior to the golden bracket
            if obj(end) < obj(x):
                x = end
    T = math.exp(x)
    sched, C, t1 = kkt_schedule(spec, D, T, B_min, B_max_cap)
    return OptimalPlan(sched, T, t1, float(sched.segments[-1].form.value(T)),
                       objective(spec, sched), regime(spec), Method.KKT, tuple(flags), C)


def two_stage_loss(spec: ProblemSpec, D: float, B1: float, B2: float, P: float) -> float:
    """Scaling-law loss at the end of a two-stage schedule switching after P samples."""
    if not 0 <= P <= D:
        raise DomainError(f"P={P} outside [0, {D}]")
    if B1 > B2:
        raise DomainError("two-stage loss needs B1 <= B2")
    R = (D - P) / B2
    T = P / B1 + R
    G = lambda x: float(kernel_integral(x, spec.beta))
    noise = (G(T) - G(R)) / B1 + G(R) / B2
    return (T + 1.0) ** (-spec.s) + spec.eta * spec.sigma ** 2 * noise


def switch_derivative_bracket(spec, D, B1, B2, P):
    """-s (T+1)^(-s-1) + eta sigma^2 (K(T)/B1 + K(R)/B2); dE/dP is this times (1/B1 - 1/B2)."""
    R = (D - P) / B2
    T = P / B1 + R
    c = spec.eta * spec.sigma ** 2
    return (-spec.s * (T + 1.0) ** (-spec.s - 1.0)
            + c * (kernel_simplified(T, spec.beta) / B1 + kernel_simplified(R, spec.beta) / B2))


def optimal_switch(spec: ProblemSpec, D: float, B1: float, B2: float,
                   n_grid: int = SWITCH_GRID) -> SwitchSolution:
    if not B1 < B2:
        raise DomainError("optimal_switch needs B1 < B2")
    if not D > 0:
        raise DomainError("D must be positive")
    f = lambda P: two_stage_loss(spec, D, B1, B2, min(D, max(0.0, P)))
    Ps = np.linspace(0.0, D, n_grid)
    Ls = np.array([f(P) for P in Ps])
    i = int(np.argmin(Ls))
    lo, hi = Ps[max(i - 1, 0)], Ps[min(i + 1, n_grid - 1)]
    x, fx = golden_section(f, lo, hi, D * SWITCH_TOL)
    cands = sorted([(fx, x), (Ls[i], Ps[i])] + [(f(e), e) for e in (lo, hi)])
    best_L, best_P = cands[0]
    flags = []
    if np.count_nonzero(Ls <= best_L + 1e-12 * abs(best_L)) > 1:
        flags.append("flat-optimum-smallest-P")
    signs = np.sign(np.diff(Ls))
    signs = signs[signs != 0]
    if np.count_nonzero(np.diff(signs)) > 1:
        flags.append("loss-curve-not-unimodal")
    on_edge = best_P <= D * SWITCH_TOL or best_P >= D * (1 - SWITCH_TOL)
    if on_edge:
        best_P = 0.0 if best_P <= D * SWITCH_TOL else D
        best_L = f(best_P)
        residual = 0.0
        flags.append("boundary-optimum-residual-inapplicable")
    else:
        residual = abs(switch_derivative_bracket(spec, D, B1, B2, best_P))
    curve = np.column_stack([Ps, Ls])
    return SwitchSolution(float(best_P), float(min(best_L, Ls.min())), curve, float(residual), tuple(flags))
