"""Catch-up quantification, data-budget sweeps and log-log power-law fits."""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, InstabilityError, RegimeError
from .fsl import fsl_loss, volterra_solve
from .model import ProblemSpec, Regime, default_dim, regime
from .optimizer import SwitchSolution, closed_form_plan, numeric_kkt_plan, optimal_switch
from .schedule import (DiscreteSchedule, appendix_b2_easy, appendix_b2_hard, constant, discretize,
                       two_stage)
from .simulator import RunConfig, run_sgd_averaged
from .trajectory import Kind, Trajectory


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int

    def summary(self) -> str:
        return (f"slope={self.slope:.6f}, intercept={self.intercept:.6f}, "
                f"r2={self.r_squared:.6f}, n={self.n_points}")


def powerlaw_fit(xs, ys) -> FitResult:
    """Ordinary least squares of log y on log x."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise DomainError("need at least two paired points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("power-law fit needs strictly positive data")
    lx, ly = np.log(x), np.log(y)
    mx, my = lx.mean(), ly.mean()
    sxx = float(np.sum((lx - mx) ** 2))
    if sxx == 0:
        raise DomainError("x values are all equal")
    slope = float(np.sum((lx - mx) * (ly - my)) / sxx)
    intercept = float(my - slope * mx)
    ss_tot = float(np.sum((ly - my) ** 2))
    ss_res = float(np.sum((ly - intercept - slope * lx) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return FitResult(slope, intercept, r2, int(x.size))


# --- catch-up -------------------------------------------------------------

def catchup_gap(spec: ProblemSpec, B1: float, B2: float) -> float:
    if B1 > B2:
        raise DomainError("catch-up gap needs B1 <= B2")
    return spec.eta * spec.sigma ** 2 * (1.0 / B1 - 1.0 / B2)


def catchup_decay_prediction(spec: ProblemSpec, G_star: float, delta: float) -> float:
    if not delta > 0:
        raise DomainError("delta must be positive")
    return G_star * delta ** (-(1.0 - 1.0 / spec.beta))


def catchup_time_prediction(spec: ProblemSpec, t_star: float) -> float:
    if not t_star > 0:
        raise DomainError("t_star must be positive")
    return t_star ** (spec.s / (1.0 - 1.0 / spec.beta))


@dataclass(frozen=True)
class CatchupReport:
    G_star: float | None
    gap_measured: float
    decay_fit: FitResult | None
    delta_eps: float | None
    epsilon: float
    deltas: np.ndarray = field(repr=False, default=None)
    gaps: np.ndarray = field(repr=False, default=None)
    gap_stderr: np.ndarray | None = field(repr=False, default=None)
    flags: tuple = ()

    def summary(self) -> str:
        fit = self.decay_fit.summary() if self.decay_fit else "underdetermined"
        de = "not-reached" if self.delta_eps is None else repr(self.delta_eps)
        lines = [f"G_star={self.G_star!r}", f"gap_measured={self.gap_measured!r}",
                 f"decay_fit: {fit}", f"delta_eps={de}", f"epsilon={self.epsilon!r}"]
        if self.flags:
            lines.append("flags=" + ";".join(self.flags))
        return "\n".join(lines) + "\n"

    def gap_csv(self) -> str:
        buf = io.StringIO()
        buf.write("delta,gap,stderr\n")
        for i, (d, g) in enumerate(zip(self.deltas, self.gaps)):
            se = "" if self.gap_stderr is None else repr(float(self.gap_stderr[i]))
            buf.write(f"{float(d)!r},{float(g)!r},{se}\n")
        return buf.getvalue()


def measure_catchup(switched: Trajectory, baseline: Trajectory, epsilon: float, t_switch: float,
                    window: tuple | None = None, G_star: float | None = None,
                    gap_stderr=None) -> CatchupReport:
    """Gap between a switched run and the large-batch baseline after time ``t_switch``.

    The decay fit uses post-switch points inside ``window`` (a (delta_min,
    delta_max) pair, optional) whose gap exceeds three combined standard errors.
    The baseline is linearly interpolated onto the switched grid.  Pass
    ``gap_stderr`` (on the switched grid) when the two runs are coupled, since
    the combined marginal errors then overstate the noise of the difference.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    t = switched.times
    post = t > t_switch
    if not post.any():
        raise DomainError("switched trajectory has no points after the switch")
    if t[post][-1] > baseline.times[-1] * (1 + 1e-12):
        raise DomainError("baseline does not cover the post-switch window")
    base = baseline.at(t)
    gap = switched.losses - base
    se = None
    if switched.stderr is not None or baseline.stderr is not None:
        s1 = switched.stderr if switched.stderr is not None else np.zeros_like(t)
        s2 = np.interp(t, baseline.times, baseline.stderr) if baseline.stderr is not None else 0.0
        se = np.sqrt(s1 ** 2 + s2 ** 2)
    if gap_stderr is not None:
        se = np.asarray(gap_stderr, dtype=np.float64)
    deltas = t[post] - t_switch
    gpost = gap[post]
    sepost = None if se is None else se[post]
    gap0 = float(np.interp(t_switch, t, gap)) if t[0] <= t_switch else float(gpost[0])
    keep = gpost > (0.0 if sepost is None else 3.0 * sepost)
    if window is not None:
        keep &= (deltas >= window[0]) & (deltas <= window[1])
    flags = []
    fit = None
    if np.count_nonzero(keep) >= 2 and np.ptp(deltas[keep]) > 0:
        fit = powerlaw_fit(deltas[keep], gpost[keep])
    else:
        flags.append("fit-underdetermined")
    within = switched.losses[post] <= (1.0 + epsilon) * base[post]
    delta_eps = float(deltas[np.argmax(within)]) if within.any() else None
    if delta_eps is None:
        flags.append("catchup-not-reached")
    return CatchupReport(G_star, gap0, fit, delta_eps, float(epsilon), deltas, gpost, sepost,
                         tuple(flags))


def theory_catchup_curves(spec: ProblemSpec, B1: float, B2: float, T: float, switch_frac: float = 0.7,
                          deltas=None) -> tuple[Trajectory, Trajectory, float]:
    """Simplified-law curves of the two-stage run and the constant-B2 baseline.

    Both curves share the time grid t_star + deltas, where t_star = switch_frac T.
    Returns (switched, baseline, t_star).
    """
    t_star = switch_frac * T
    D = B1 * t_star + B2 * (T - t_star)
    sw = two_stage(B1, B2, D, B1 * t_star)
    bl = constant(B2, B2 * T)
    if deltas is None:
        deltas = np.geomspace(1e-2, T - t_star, 400)
    ts = np.concatenate(([t_star], t_star + np.asarray(deltas, dtype=np.float64)))
    ys = np.array([fsl_loss(spec, sw, float(x)) for x in ts])
    yb = np.array([fsl_loss(spec, bl, float(x)) for x in ts])
    return (Trajectory(ts, ys, Kind.SIMPLIFIED), Trajectory(ts, yb, Kind.SIMPLIFIED), t_star)


def catchup_schedules(B1: int, B2: int, K: int, eta: float, switch_frac: float = 0.7):
    """Per-step schedules with equal step count: switch at step round(switch_frac K) vs constant B2."""
    k_s = int(round(switch_frac * K))
    sw = np.concatenate((np.full(k_s, B1), np.full(K - k_s, B2))).astype(np.int64)
    return DiscreteSchedule(sw, eta), DiscreteSchedule(np.full(K, B2, dtype=np.int64), eta), k_s * eta


# --- sweeps ---------------------------------------------------------------

class PlanSource(str, enum.Enum):
    APPENDIX_B2 = "AppendixB2"
    CLOSED = "ClosedForm"
    KKT = "NumericKKT"


class Evaluator(str, enum.Enum):
    MONTE_CARLO = "MonteCarlo"
    VOLTERRA = "Volterra"


APPENDIX_B2_TOTALS = (6346, 13973, 30331, 64962, 137693)


@dataclass(frozen=True)
class SweepResult:
    fit: FitResult
    D: np.ndarray
    final_losses: np.ndarray
    stderr: np.ndarray | None
    dim: int
    flags: tuple = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("D,final_loss,stderr\n")
        for i, (d, y) in enumerate(zip(self.D, self.final_losses)):
            se = "" if self.stderr is None else repr(float(self.stderr[i]))
            buf.write(f"{float(d)!r},{float(y)!r},{se}\n")
        return buf.getvalue()


def appendix_b2_for_total(spec: ProblemSpec, D: float, **kw) -> DiscreteSchedule:
    """Appendix-style discrete schedule (easy or stable-growth form by regime) whose
    data total is closest to D, found by bisection over the data-scale parameter."""
    easy = regime(spec) is Regime.EASY
    build = appendix_b2_easy if easy else appendix_b2_hard

    def make(d0):
        try:
            return build(d0, spec, **kw)
        except DomainError:
            return None

    lo, hi = 1e-6, 1.0
    while (s := make(hi)) is None or s.total < D:
        hi *= 2.0
        if hi > 1e15:
            raise DomainError(f"cannot reach D={D}")
    for _ in range(200):
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        s = make(mid)
        if s is None or s.total < D:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1 < 1e-13:
            break
    above = make(hi)
    below = make(lo)
    if below is not None and abs(below.total - D) < abs(above.total - D):
        return below
    return above


def _plans(spec, D_list, source, B_min, **b2_kw):
    out = []
    for D in D_list:
        if source is PlanSource.APPENDIX_B2:
            out.append(appendix_b2_for_total(spec, D, **b2_kw))
        else:
            make = closed_form_plan if source is PlanSource.CLOSED else numeric_kkt_plan
            out.append(discretize(make(spec, D * spec.eta, B_min).schedule, spec.eta))
    return out


def rate_sweep(spec: ProblemSpec, D_list, plan_source=PlanSource.APPENDIX_B2,
               evaluator=Evaluator.MONTE_CARLO, repeats: int = 100, seed: int = 0,
               dim: int | str = "auto", grid_step: float | None = None, B_min: float = 1.0,
               tail_average: bool = False, threads: int | None = None,
               require_decade: bool = True) -> SweepResult:
    """Final loss versus data budget (in samples), fitted on log-log axes.

    Continuous plans are built with budget D * eta (time units) and
    discretized at step eta, so their sample count is close to D.  With
    ``dim="auto"`` the truncation dimension follows the tail-bound rule applied
    to the Volterra prediction of the smallest final loss.
    """
    plan_source = PlanSource(plan_source)
    evaluator = Evaluator(evaluator)
    D_list = sorted(float(d) for d in D_list)
    if require_decade and (len(D_list) < 4 or D_list[-1] < 10 * D_list[0] * (1 - 1e-9)):
        raise DomainError("a sweep needs at least 4 budgets spanning one decade")
    plans = _plans(spec, D_list, plan_source, B_min)
    flags = []
    if dim == "auto":
        probe = replace(spec, dim=1000)
        pred = volterra_solve(probe, plans[-1].to_schedule(), grid_step).final
        dim = default_dim(spec.s, spec.beta, pred)
    sp = replace(spec, dim=int(dim))
    finals, errs = [], []
    for i, (D, ds) in enumerate(zip(D_list, plans)):
        try:
            if evaluator is Evaluator.VOLTERRA:
                finals.append(volterra_solve(sp, ds.to_schedule(), grid_step).final)
                continue
            run_seed = int(np.random.SeedSequence(int(seed), spawn_key=(i,)).generate_state(1, np.uint64)[0])
            every = max(1, ds.K // 500) if tail_average else ds.K
            traj = run_sgd_averaged(RunConfig(sp, ds, run_seed, every, repeats), threads)
        except InstabilityError as exc:
            raise InstabilityError(f"sweep aborted at D={D}: {exc}", step=exc.step,
                                   run_index=exc.run_index) from exc
        if tail_average:
            n = max(1, int(math.ceil(0.02 * traj.losses.size)))
            finals.append(float(traj.losses[-n:].mean()))
            errs.append(float(np.sqrt(np.mean(traj.stderr[-n:] ** 2))) if traj.stderr is not None else 0.0)
            flags.append("tail-average")
        else:
            finals.append(traj.final)
            errs.append(float(traj.stderr[-1]) if traj.stderr is not None else 0.0)
    totals = np.array([ds.total for ds in plans], dtype=np.float64)
    finals = np.array(finals)
    fit = powerlaw_fit(totals, finals)
    return SweepResult(fit, totals, finals, np.array(errs) if errs else None, int(dim),
                       tuple(sorted(set(flags))))


def switch_sweep(spec: ProblemSpec, D_list, B1: float, B2: float):
    """Fit log(D - P*) against log D.  Returns (FitResult, [SwitchSolution])."""
    if regime(spec) is Regime.EASY:
        raise RegimeError("switch sweep needs a hard-regime spec (easy specs give P* = 0)")
    sols: list[SwitchSolution] = [optimal_switch(spec, float(D), B1, B2) for D in D_list]
    Ds = np.asarray(D_list, dtype=np.float64)
    rem = np.array([D - s.P_star for D, s in zip(Ds, sols)])
    return powerlaw_fit(Ds, rem), sols
