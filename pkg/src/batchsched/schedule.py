"""Batch-size schedules: continuous piecewise forms and per-step integer sequences."""
from __future__ import annotations

import bisect
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .model import ProblemSpec

_FLOOR_SLACK = 1e-12


@dataclass(frozen=True)
class Constant:
    B: float

    def value(self, t):
        return np.full_like(np.asarray(t, dtype=np.float64), self.B) if np.ndim(t) else float(self.B)

    def integral(self, a: float, b: float) -> float:
        return self.B * (b - a)

    def text(self) -> str:
        return f"constant {{}} {{}} {self.B!r}"


@dataclass(frozen=True)
class PowerGrowth:
    """b(t) = A (t_ref - t + 1)^q with q < 0, increasing in t."""

    A: float
    t_ref: float
    q: float

    def value(self, t):
        return self.A * (self.t_ref - np.asarray(t, dtype=np.float64) + 1.0) ** self.q \
            if np.ndim(t) else self.A * (self.t_ref - t + 1.0) ** self.q

    def integral(self, a: float, b: float) -> float:
        q1 = self.q + 1.0
        if abs(q1) < 1e-14:
            return self.A * math.log((self.t_ref - a + 1.0) / (self.t_ref - b + 1.0))
        return self.A * ((self.t_ref - a + 1.0) ** q1 - (self.t_ref - b + 1.0) ** q1) / q1

    def text(self) -> str:
        return f"powergrowth {{}} {{}} {self.A!r} {self.t_ref!r} {self.q!r}"


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    form: Constant | PowerGrowth
    strict: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise DomainError(f"segment needs t_start < t_end, got [{self.t_start}, {self.t_end}]")
        f = self.form
        if isinstance(f, PowerGrowth):
            if not (f.A > 0 and f.q < 0):
                raise DomainError("powergrowth needs A > 0 and q < 0")
            if f.t_ref < self.t_end * (1 - 1e-12) - 1e-12:
                raise DomainError("powergrowth needs t_ref >= t_end")
        lo = min(f.value(self.t_start), f.value(self.t_end))
        if not lo > 0 or (self.strict and not lo >= 1.0 - 1e-9):
            raise DomainError(f"batch size below 1 on [{self.t_start}, {self.t_end}]")

    def integral(self) -> float:
        return self.form.integral(self.t_start, self.t_end)

    def text(self) -> str:
        return self.form.text().format(repr(self.t_start), repr(self.t_end))


@dataclass(frozen=True)
class Schedule:
    segments: tuple
    budget_cache: float = field(default=0.0, repr=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise DomainError("schedule needs at least one segment")
        if segs[0].t_start != 0:
            raise DomainError("schedule must start at t=0")
        for a, b in zip(segs, segs[1:]):
            if a.t_end != b.t_start:
                raise DomainError("segments must be contiguous")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "budget_cache", math.fsum(s.integral() for s in segs))

    @property
    def T(self) -> float:
        return self.segments[-1].t_end

    @property
    def D(self) -> float:
        return self.budget_cache

    @property
    def breakpoints(self) -> list[float]:
        return [s.t_start for s in self.segments] + [self.T]

    def segment_index(self, t: float) -> int:
        starts = [s.t_start for s in self.segments]
        return max(0, bisect.bisect_right(starts, t) - 1)

    def digest(self) -> str:
        return hashlib.sha256(to_text(self).encode()).hexdigest()[:16]


def budget(schedule: Schedule) -> float:
    return schedule.D


def duration(schedule: Schedule) -> float:
    return schedule.T


def eval(schedule: Schedule, t: float) -> float:  # noqa: A001 - mirrors the public operation name
    if not 0 <= t <= schedule.T:
        raise DomainError(f"t={t} outside [0, {schedule.T}]")
    seg = schedule.segments[schedule.segment_index(t)]
    return float(seg.form.value(t))


def eval_many(schedule: Schedule, ts, side: str = "right") -> np.ndarray:
    """Vectorised eval.  With side="right" a breakpoint takes the value of the
    segment starting there; with side="left" that of the segment ending there."""
    ts = np.asarray(ts, dtype=np.float64)
    if ts.size and (ts.min() < 0 or ts.max() > schedule.T):
        raise DomainError("evaluation time outside schedule horizon")
    starts = np.array([s.t_start for s in schedule.segments])
    if side == "right":
        idx = np.searchsorted(starts, ts, side="right") - 1
    else:
        idx = np.searchsorted(starts, ts, side="left") - 1
    idx = np.clip(idx, 0, len(starts) - 1)
    out = np.empty_like(ts)
    for i, seg in enumerate(schedule.segments):
        m = idx == i
        if m.any():
            out[m] = seg.form.value(ts[m])
    return out


def constant(B: float, D: float) -> Schedule:
    if B < 1 or D <= 0:
        raise DomainError("constant schedule needs B >= 1 and D > 0")
    return Schedule((Segment(0.0, D / B, Constant(float(B))),))


def two_stage(B1: float, B2: float, D: float, P: float) -> Schedule:
    if not 1 <= B1 < B2:
        raise DomainError("two-stage schedule needs 1 <= B1 < B2")
    if not 0 <= P <= D:
        raise DomainError(f"P={P} outside [0, {D}]")
    if P == 0:
        return constant(B2, D)
    if P == D:
        return constant(B1, D)
    ts = P / B1
    return Schedule((Segment(0.0, ts, Constant(float(B1))),
                     Segment(ts, ts + (D - P) / B2, Constant(float(B2)))))


def power_growth(A: float, T: float, q: float, strict: bool = True) -> Schedule:
    """Single growth segment ending at its reference time.  ``strict=False`` admits
    b(0) < 1, useful for pure integral bookkeeping."""
    return Schedule((Segment(0.0, T, PowerGrowth(A, T, q), strict),))


@dataclass(frozen=True)
class DiscreteSchedule:
    batch_sizes: np.ndarray
    eta: float

    def __post_init__(self):
        b = np.asarray(self.batch_sizes)
        if b.ndim != 1 or b.size == 0:
            raise DomainError("discrete schedule needs a non-empty 1-d sequence")
        if not np.all(b == np.round(b)) or b.min() < 1:
            raise DomainError("batch sizes must be integers >= 1")
        b = b.astype(np.int64)
        b.setflags(write=False)
        object.__setattr__(self, "batch_sizes", b)
        if not self.eta > 0:
            raise DomainError("eta must be positive")

    @property
    def K(self) -> int:
        return int(self.batch_sizes.size)

    @property
    def total(self) -> int:
        return int(self.batch_sizes.sum())

    @property
    def T(self) -> float:
        return self.K * self.eta

    @property
    def continuous_budget(self) -> float:
        """Sample count expressed in the time units of a continuous schedule."""
        return self.total * self.eta

    def to_schedule(self) -> Schedule:
        """Piecewise-constant continuous form; step k covers ((k-1) eta, k eta]."""
        b = self.batch_sizes
        cuts = np.flatnonzero(np.diff(b)) + 1
        starts = np.concatenate(([0], cuts))
        ends = np.concatenate((cuts, [b.size]))
        segs = tuple(Segment(float(s * self.eta), float(e * self.eta), Constant(float(b[s])))
                     for s, e in zip(starts, ends))
        return Schedule(segs)


def discretize(schedule: Schedule, eta: float) -> DiscreteSchedule:
    """Sample b at t = k eta, round half up, clamp at 1.

    Step k covers ((k-1) eta, k eta], so a breakpoint at k eta takes the value
    of the segment ending there.
    The relative budget deviation is ``out.continuous_budget / schedule.D - 1``.
    """
    if not eta > 0:
        raise DomainError("eta must be positive")
    K = max(1, math.ceil(schedule.T / eta - 1e-9))
    ts = np.minimum(np.arange(1, K + 1) * eta, schedule.T)
    vals = np.floor(eval_many(schedule, ts, side="left") + 0.5)
    return DiscreteSchedule(np.maximum(1, vals).astype(np.int64), eta)


def appendix_b2_easy(D0: float, spec: ProblemSpec, alpha: float = 1000.0, nu: float = 10.0,
                     scale: float = 500.0) -> DiscreteSchedule:
    """Floored power-growth sequence over K = floor((alpha D0)^(beta/(1+s beta))) steps.

    B_k = floor(scale * D0^((1/2+s beta)/(1+s beta)) * (K - k + nu)^(1/(2 beta) - 1)), k = 0..K-1,
    clamped below at 1.  With the default ``scale`` the totals for D0 in {2, 4, 8, 16, 32}
    at s=1, beta=2 are 6346, 13973, 30331, 64962, 137693.
    """
    if not (D0 > 0 and alpha > 0 and nu > 0):
        raise DomainError("D0, alpha and nu must be positive")
    s, b = spec.s, spec.beta
    K = math.floor((alpha * D0) ** (b / (1 + s * b)))
    if K < 1:
        raise DomainError("K = 0: D0 too small")
    amp = scale * D0 ** ((0.5 + s * b) / (1 + s * b))
    k = np.arange(K, dtype=np.float64)
    raw = np.floor(amp * (K - k + nu) ** (1 / (2 * b) - 1))
    return DiscreteSchedule(np.maximum(1, raw).astype(np.int64), spec.eta)


def appendix_b2_hard(D0: float, spec: ProblemSpec, alpha: float = 1.0,
                     nu: float = 10.0) -> DiscreteSchedule:
    """Unit batches for K1 steps, then floored growth up to K = floor(alpha D0)."""
    if not (D0 > 0 and alpha > 0 and nu > 0):
        raise DomainError("D0, alpha and nu must be positive")
    s, b = spec.s, spec.beta
    K = math.floor(alpha * D0)
    K1 = math.floor(alpha * (D0 - D0 ** ((s + 1) / (2 - 1 / b))))
    if K1 < 0:
        raise DomainError(f"K1={K1} < 0: D0 too small for the stable-growth form")
    if K < 1:
        raise DomainError("K = 0: D0 too small")
    k = np.arange(K1 + 1, K + 1, dtype=np.float64)
    growth = np.floor(((K - k + nu) / (K - K1 + nu)) ** (1 / (2 * b) - 1))
    out = np.concatenate((np.ones(K1), np.maximum(1, growth)))
    return DiscreteSchedule(out.astype(np.int64), spec.eta)


def to_text(schedule: Schedule) -> str:
    return "".join(seg.text() + "\n" for seg in schedule.segments)


def from_text(text: str) -> Schedule:
    segs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "constant" and len(parts) == 4:
                t0, t1, B = map(float, parts[1:])
                segs.append(Segment(t0, t1, Constant(B)))
            elif parts[0] == "powergrowth" and len(parts) == 6:
                t0, t1, A, tr, q = map(float, parts[1:])
                segs.append(Segment(t0, t1, PowerGrowth(A, tr, q)))
            else:
                raise DomainError(f"line {n}: cannot parse {line!r}")
        except ValueError as exc:
            raise DomainError(f"line {n}: {exc}") from exc
    return Schedule(tuple(segs))
