"""Power-law linear regression problem: spectrum, target, excess risk, regime."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError

BOUNDARY_TOL = 1e-12
MIN_DIM = 1000

SPEC_KEYS = ("s", "beta", "sigma", "eta", "dim")


class Regime(str, enum.Enum):
    EASY = "Easy"
    HARD = "Hard"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class ProblemSpec:
    """Task difficulty ``s``, capacity ``beta``, label noise ``sigma``,
    learning rate ``eta`` and truncation dimension ``dim``."""

    s: float
    beta: float
    sigma: float = 1.0
    eta: float = 0.05
    dim: int = MIN_DIM

    def __post_init__(self):
        vals = (self.s, self.beta, self.sigma, self.eta)
        if not all(np.isfinite(v) for v in vals):
            raise DomainError("spec parameters must be finite")
        if self.beta <= 1:
            raise DomainError(f"beta must exceed 1, got {self.beta}")
        if self.s <= 0:
            raise DomainError(f"s must be positive, got {self.s}")
        if self.sigma < 0:
            raise DomainError(f"sigma must be non-negative, got {self.sigma}")
        if not 0 < self.eta < 1:
            raise DomainError(f"eta must lie in (0, 1), got {self.eta}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def p(self) -> float:
        """Exponent of the simplified forgetting kernel, 2 - 1/beta."""
        return 2.0 - 1.0 / self.beta

    def to_dict(self) -> dict[str, str]:
        return {k: repr(getattr(self, k)) for k in SPEC_KEYS}

    @classmethod
    def from_dict(cls, d) -> "ProblemSpec":
        unknown = set(d) - set(SPEC_KEYS)
        if unknown:
            raise DomainError(f"unknown problem key: {sorted(unknown)[0]}")
        kw = {}
        for k, v in d.items():
            try:
                kw[k] = int(v) if k == "dim" else float(v)
            except ValueError as exc:
                raise DomainError(f"cannot parse {k}={v!r}") from exc
        return cls(**kw)

    def digest(self) -> str:
        text = ",".join(f"{k}={getattr(self, k)!r}" for k in SPEC_KEYS)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Spectrum:
    lambdas: np.ndarray
    theta_star: np.ndarray
    tail_bound: float
    s: float = field(default=0.0, repr=False)
    beta: float = field(default=0.0, repr=False)

    @property
    def dim(self) -> int:
        return self.lambdas.size


def make_spectrum(spec: ProblemSpec) -> Spectrum:
    """Eigenvalues j^-beta and positive targets with lambda_j theta_j^2 = j^-(1+s beta)."""
    if spec.dim < 1 or spec.beta <= 1:
        raise DomainError("need dim >= 1 and beta > 1")
    j = np.arange(1, spec.dim + 1, dtype=np.float64)
    lam = j ** (-spec.beta)
    theta = j ** (-(1.0 + (spec.s - 1.0) * spec.beta) / 2.0)
    sb = spec.s * spec.beta
    tail = spec.dim ** (-sb) / sb
    lam.setflags(write=False)
    theta.setflags(write=False)
    return Spectrum(lam, theta, float(tail), spec.s, spec.beta)


def excess_risk(spectrum: Spectrum, theta) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != spectrum.lambdas.shape:
        raise DimensionError(
            f"theta has shape {theta.shape}, expected ({spectrum.dim},)")
    d = theta - spectrum.theta_star
    return 0.5 * float(np.dot(spectrum.lambdas, d * d))


def regime(spec: ProblemSpec) -> Regime:
    gap = spec.s - (1.0 - 1.0 / spec.beta)
    if abs(gap) <= BOUNDARY_TOL:
        return Regime.BOUNDARY
    return Regime.EASY if gap > 0 else Regime.HARD


def default_dim(s: float, beta: float, predicted_loss: float, rel: float = 0.01) -> int:
    """Smallest N >= 1000 whose signal tail bound is below rel * predicted_loss."""
    sb = s * beta
    target = rel * predicted_loss
    n = (1.0 / (sb * target)) ** (1.0 / sb)
    return max(MIN_DIM, int(np.ceil(n)))
