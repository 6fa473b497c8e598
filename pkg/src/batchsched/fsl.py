"""Loss predictors: the simplified scaling law, the spectral Volterra equation,
and the per-coordinate moment ODEs that bound the SGD dynamics."""
from __future__ import annotations

import enum
import math

import numpy as np
from scipy import integrate

from . import _backend
from .errors import DomainError, InstabilityError
from .model import ProblemSpec, Spectrum, make_spectrum
from .schedule import Constant, PowerGrowth, Schedule, eval_many
from .trajectory import Kind, Trajectory

DEFAULT_GRID_POINTS = 4096
DIVERGENCE_FACTOR = 1e6
QUAD_RTOL = 1e-9


class Variant(str, enum.Enum):
    LOWER = "Lower"
    UPPER = "Upper"


def kernel_simplified(t, beta: float):
    return (np.asarray(t, dtype=np.float64) + 1.0) ** (-(2.0 - 1.0 / beta)) if np.ndim(t) \
        else (t + 1.0) ** (-(2.0 - 1.0 / beta))


def kernel_integral(t, beta: float):
    """int_0^t K(u) du for the simplified kernel."""
    p = 2.0 - 1.0 / beta
    return (1.0 - (np.asarray(t, dtype=np.float64) + 1.0) ** (1.0 - p)) / (p - 1.0)


def _spectral_sum(t, weights, lambdas, chunk=256):
    ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = np.empty(ts.size)
    for i in range(0, ts.size, chunk):
        blk = ts[i:i + chunk]
        out[i:i + chunk] = np.exp(-2.0 * np.outer(blk, lambdas)) @ weights
    return out if np.ndim(t) else float(out[0])


def kernel_spectral(t, spectrum: Spectrum):
    lam = spectrum.lambdas
    return _spectral_sum(t, lam * lam, lam)


def signal_spectral(t, spectrum: Spectrum):
    lam = spectrum.lambdas
    return _spectral_sum(t, lam * spectrum.theta_star ** 2, lam)


def _power_antideriv(t, a, b, r):
    # int_a^b (t - tau + 1)^(-r) dtau
    if abs(r - 1.0) < 1e-14:
        return math.log((t - a + 1.0) / (t - b + 1.0))
    return ((t - b + 1.0) ** (1.0 - r) - (t - a + 1.0) ** (1.0 - r)) / (r - 1.0)


def segment_noise_integral(seg, t: float, beta: float) -> float:
    """Contribution of one segment, clipped to [t_start, min(t_end, t)]."""
    a, b = seg.t_start, min(seg.t_end, t)
    if b <= a:
        return 0.0
    p = 2.0 - 1.0 / beta
    f = seg.form
    if isinstance(f, Constant):
        return _power_antideriv(t, a, b, p) / f.B
    if isinstance(f, PowerGrowth):
        if abs(f.t_ref - t) <= 1e-12 * max(1.0, abs(t)):
            # integrand collapses to a single power of (t - tau + 1)
            return _power_antideriv(t, a, b, p + f.q) / f.A
        val, _ = integrate.quad(
            lambda tau: (t - tau + 1.0) ** (-p) / (f.A * (f.t_ref - tau + 1.0) ** f.q),
            a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
        return val
    raise TypeError(f"unknown segment form {f!r}")


def noise_integral(schedule: Schedule, t: float, beta: float) -> float:
    if not 0 <= t <= schedule.T * (1 + 1e-12):
        raise DomainError(f"t={t} outside [0, {schedule.T}]")
    return math.fsum(segment_noise_integral(seg, t, beta) for seg in schedule.segments
                     if seg.t_start < t)


def fsl_loss(spec: ProblemSpec, schedule: Schedule, t: float) -> float:
    if not t > 0:
        raise DomainError("fsl_loss needs t > 0")
    signal = (t + 1.0) ** (-spec.s)
    if spec.sigma == 0:
        return signal
    return signal + spec.eta * spec.sigma ** 2 * noise_integral(schedule, t, spec.beta)


def fsl_trajectory(spec: ProblemSpec, schedule: Schedule, ts) -> Trajectory:
    ts = np.asarray(ts, dtype=np.float64)
    ys = np.array([fsl_loss(spec, schedule, float(t)) for t in ts])
    return Trajectory(ts, ys, Kind.SIMPLIFIED, meta=_meta(spec, schedule))


def _meta(spec, schedule, **extra):
    d = {"spec": spec.digest(), "schedule": schedule.digest()}
    d.update(extra)
    return d


def _grid(schedule: Schedule, grid_step):
    T = schedule.T
    h = T / DEFAULT_GRID_POINTS if grid_step is None else float(grid_step)
    if not h > 0:
        raise DomainError("grid_step must be positive")
    n = max(1, int(round(T / h)))
    return T / n, n


def volterra_solve(spec: ProblemSpec, schedule: Schedule, grid_step: float | None = None,
                   spectrum: Spectrum | None = None) -> Trajectory:
    """Solve f = g + K_spec * (eta/b) f by product-trapezoid marching.

    The forcing is g(t) = e(t)/2 + (sigma^2/2) eta int_0^t K_spec(t-z)/b(z) dz.
    Raises InstabilityError if f exceeds 1e6 f(0).
    """
    sp = spectrum or make_spectrum(spec)
    h, n = _grid(schedule, grid_step)
    ts = np.arange(n + 1) * h
    Kg = kernel_spectral(ts, sp)
    eg = signal_spectral(ts, sp)
    w = spec.eta / eval_many(schedule, np.minimum(ts, schedule.T))
    f, fail = _backend.volterra_march(Kg, eg, w, h, 0.5 * spec.sigma ** 2, DIVERGENCE_FACTOR)
    if fail >= 0:
        raise InstabilityError(f"Volterra solution diverged at step {fail}", step=int(fail))
    return Trajectory(ts[1:], f[1:], Kind.VOLTERRA, meta=_meta(spec, schedule, grid_step=h))


def moment_recursion(spec: ProblemSpec, schedule, variant: Variant | str = Variant.LOWER,
                     spectrum: Spectrum | None = None) -> Trajectory:
    """Step-exact counterpart of :func:`moment_ode` for discrete one-pass SGD.

    m_j <- (1 - eta lam_j)^2 m_j + (eta^2 / B_k) lam_j (c E + sigma^2).  For
    Gaussian features the true diagonal update has lam_j^2 m_j + lam_j (2E +
    sigma^2) in the bracket, which lies between the c = 2 and c = 4 forms, so
    the two variants bound the expected SGD loss at every step without any
    time-discretization error.  ``schedule`` is a DiscreteSchedule.
    """
    variant = Variant(variant)
    c = 2.0 if variant is Variant.LOWER else 4.0
    sp = spectrum or make_spectrum(spec)
    lam = np.asarray(sp.lambdas)
    eta = float(schedule.eta)
    if abs(eta - spec.eta) > 1e-12 * spec.eta:
        raise DomainError("schedule step size differs from spec.eta")
    bs = np.asarray(schedule.batch_sizes, dtype=np.float64)
    decay = (1.0 - eta * lam) ** 2
    s2 = spec.sigma ** 2
    m = np.asarray(sp.theta_star, dtype=np.float64) ** 2
    E0 = 0.5 * float(lam @ m)
    out = np.empty(bs.size)
    for k, B in enumerate(bs):
        E = 0.5 * float(lam @ m)
        m = decay * m + (eta * eta / B) * lam * (c * E + s2)
        out[k] = 0.5 * float(lam @ m)
        if not (np.isfinite(out[k]) and out[k] <= DIVERGENCE_FACTOR * E0):
            raise InstabilityError(f"moment recursion diverged at step {k + 1}", step=k + 1)
    kind = Kind.ODE_LOWER if variant is Variant.LOWER else Kind.ODE_UPPER
    return Trajectory(np.arange(1, bs.size + 1) * eta, out, kind,
                      meta=_meta(spec, schedule.to_schedule(), discrete=True))


def moment_ode(spec: ProblemSpec, schedule: Schedule, variant: Variant | str = Variant.LOWER,
               grid_step: float | None = None, order: int = 1,
               spectrum: Spectrum | None = None) -> Trajectory:
    """Integrate dm_j/dt = -2 lam_j m_j + (eta/b) lam_j (c E + sigma^2), c = 2 or 4.

    ``order=1`` is exponential Euler; ``order=2`` adds an exponential trapezoid
    corrector.  The batch size of each step is sampled at its midpoint, so
    schedule breakpoints on the grid are resolved exactly.
    """
    variant = Variant(variant)
    c = 2.0 if variant is Variant.LOWER else 4.0
    sp = spectrum or make_spectrum(spec)
    lam = np.asarray(sp.lambdas)
    h, n = _grid(schedule, grid_step)
    mids = np.minimum((np.arange(n) + 0.5) * h, schedule.T)
    w = spec.eta / eval_many(schedule, mids)
    decay = np.exp(-2.0 * lam * h)
    phi1 = -np.expm1(-2.0 * lam * h) / (2.0 * lam)
    phi2 = (decay - 1.0 + 2.0 * lam * h) / ((2.0 * lam) ** 2 * h)
    s2 = spec.sigma ** 2
    m = np.asarray(sp.theta_star, dtype=np.float64) ** 2
    E0 = 0.5 * float(lam @ m)
    out = np.empty(n)
    for k in range(n):
        E = 0.5 * float(lam @ m)
        F = w[k] * lam * (c * E + s2)
        m_new = decay * m + phi1 * F
        if order == 2:
            E1 = 0.5 * float(lam @ m_new)
            m_new = m_new + phi2 * w[k] * lam * c * (E1 - E)
        m = m_new
        out[k] = 0.5 * float(lam @ m)
        if not (np.isfinite(out[k]) and out[k] <= DIVERGENCE_FACTOR * E0):
            raise InstabilityError(f"moment ODE diverged at step {k + 1}", step=k + 1)
    kind = Kind.ODE_LOWER if variant is Variant.LOWER else Kind.ODE_UPPER
    return Trajectory(np.arange(1, n + 1) * h, out, kind,
                      meta=_meta(spec, schedule, grid_step=h, order=order))
