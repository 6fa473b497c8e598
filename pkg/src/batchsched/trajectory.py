"""Time series of expected excess risk with provenance."""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


class Kind(str, enum.Enum):
    SIMPLIFIED = "SimplifiedFSL"
    VOLTERRA = "SpectralVolterra"
    ODE_LOWER = "MomentODE-Lower"
    ODE_UPPER = "MomentODE-Upper"
    MONTE_CARLO = "MonteCarlo"


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    losses: np.ndarray
    kind: Kind
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        y = np.asarray(self.losses, dtype=np.float64)
        if t.ndim != 1 or t.shape != y.shape or t.size == 0:
            raise DomainError("times and losses must be equal-length 1-d arrays")
        if t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise DomainError("times must be positive and strictly increasing")
        if not np.all(np.isfinite(y)) or y.min() < 0:
            raise DomainError("losses must be finite and non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "losses", y)
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.stderr is not None:
            se = np.asarray(self.stderr, dtype=np.float64)
            if se.shape != t.shape or se.min() < 0:
                raise DomainError("stderr must match times and be non-negative")
            object.__setattr__(self, "stderr", se)

    @property
    def final(self) -> float:
        return float(self.losses[-1])

    def at(self, ts) -> np.ndarray:
        """Linear interpolation of the loss at the requested times."""
        return np.interp(ts, self.times, self.losses)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,loss,stderr,kind\n")
        se = self.stderr
        for i, (t, y) in enumerate(zip(self.times, self.losses)):
            s = "" if se is None else repr(float(se[i]))
            buf.write(f"{float(t)!r},{float(y)!r},{s},{self.kind.value}\n")
        return buf.getvalue()


def from_csv(text: str) -> Trajectory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "t,loss,stderr,kind":
        raise DomainError("not a trajectory CSV")
    rows = [ln.split(",") for ln in lines[1:]]
    if not rows:
        raise DomainError("trajectory CSV has no rows")
    t = [float(r[0]) for r in rows]
    y = [float(r[1]) for r in rows]
    se = None if rows[0][2] == "" else [float(r[2]) for r in rows]
    return Trajectory(np.array(t), np.array(y), Kind(rows[0][3]), None if se is None else np.array(se))
