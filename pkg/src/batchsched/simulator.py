"""Brute-force one-pass SGD on sampled Gaussian data, with seeded Monte-Carlo averaging."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DomainError, InstabilityError
from .model import ProblemSpec, Spectrum, make_spectrum
from .schedule import DiscreteSchedule
from .trajectory import Kind, Trajectory


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    schedule: DiscreteSchedule
    seed: int = 0
    eval_every: int = 1
    repeats: int = 1
    theta0: np.ndarray | None = None

    def __post_init__(self):
        if self.repeats < 1 or self.eval_every < 1:
            raise DomainError("repeats and eval_every must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.spec.eta >= 1:
            raise DomainError("eta * lambda_1 must stay below 1")


def derive_seed(seed: int, run_index: int) -> int:
    """Seed of run ``run_index``: first 64-bit word of SeedSequence(seed, spawn_key=(run_index,))."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(run_index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _one_run(config: RunConfig, sp: Spectrum, run_index: int):
    spec = config.spec
    theta0 = np.zeros(sp.dim) if config.theta0 is None else np.asarray(config.theta0, dtype=np.float64)
    if theta0.shape != (sp.dim,):
        raise DomainError("theta0 has the wrong length")
    rng = np.random.default_rng(derive_seed(config.seed, run_index))
    steps, losses, fail = _backend.sgd_run(
        np.sqrt(np.asarray(sp.lambdas)), np.ascontiguousarray(sp.theta_star),
        np.ascontiguousarray(config.schedule.batch_sizes, dtype=np.int64),
        float(spec.eta), float(spec.sigma), int(config.eval_every), theta0, rng)
    if fail >= 0:
        raise InstabilityError(f"SGD diverged at step {fail} (run {run_index})",
                               step=int(fail), run_index=run_index)
    return steps, losses


def _meta(config, seeds):
    return {"spec": config.spec.digest(), "schedule_total": config.schedule.total,
            "seed": int(config.seed), "derived_seeds": seeds}


def run_sgd(config: RunConfig) -> Trajectory:
    """Single run using the seed derived for run index 0."""
    sp = make_spectrum(config.spec)
    steps, losses = _one_run(config, sp, 0)
    return Trajectory(steps * config.spec.eta, losses, Kind.MONTE_CARLO,
                      meta=_meta(config, [derive_seed(config.seed, 0)]))


def run_sgd_averaged(config: RunConfig, threads: int | None = None) -> Trajectory:
    """Mean over ``config.repeats`` runs; stderr = sample std / sqrt(repeats).

    Runs are reduced in run-index order, so the result does not depend on
    ``threads``.
    """
    sp = make_spectrum(config.spec)
    R = config.repeats
    threads = threads or os.cpu_count() or 1
    if threads > 1 and R > 1:
        with ThreadPoolExecutor(max_workers=min(threads, R)) as pool:
            results = list(pool.map(lambda r: _one_run(config, sp, r), range(R)))
    else:
        results = [_one_run(config, sp, r) for r in range(R)]
    steps = results[0][0]
    L = np.stack([res[1] for res in results])
    mean = L.mean(axis=0)
    stderr = L.std(axis=0, ddof=1) / np.sqrt(R) if R >= 2 else None
    return Trajectory(steps * config.spec.eta, mean, Kind.MONTE_CARLO, stderr,
                      meta=_meta(config, [derive_seed(config.seed, r) for r in range(R)]))


def run_sgd_coupled(config_a: RunConfig, config_b: RunConfig, threads: int | None = None):
    """Averaged runs of two schedules on common random numbers.

    Both configs must agree on spec, step count, seed, eval_every and repeats.
    Repeat r of each schedule uses the same derived seed and the same per-step
    samples (see the kernel docs), so their difference has far lower variance
    than two independent averages.  Returns (traj_a, traj_b, paired_stderr)
    where paired_stderr is the standard error of the mean difference a - b.
    """
    a, b = config_a, config_b
    if (a.spec != b.spec or a.schedule.K != b.schedule.K or a.seed != b.seed
            or a.eval_every != b.eval_every or a.repeats != b.repeats):
        raise DomainError("coupled runs need matching spec, length, seed, eval_every and repeats")
    sp = make_spectrum(a.spec)
    theta0 = np.zeros(sp.dim) if a.theta0 is None else np.asarray(a.theta0, dtype=np.float64)
    sl = np.sqrt(np.asarray(sp.lambdas))
    ts = np.ascontiguousarray(sp.theta_star)
    ba = np.ascontiguousarray(a.schedule.batch_sizes, dtype=np.int64)
    bb = np.ascontiguousarray(b.schedule.batch_sizes, dtype=np.int64)

    def one(r):
        rng = np.random.default_rng(derive_seed(a.seed, r))
        steps, la, lb, fail = _backend.sgd_run_coupled(sl, ts, ba, bb, float(a.spec.eta),
                                                       float(a.spec.sigma), int(a.eval_every), theta0, rng)
        if fail >= 0:
            raise InstabilityError(f"SGD diverged at step {fail} (run {r})", step=int(fail), run_index=r)
        return steps, la, lb

    R = a.repeats
    threads = threads or os.cpu_count() or 1
    if threads > 1 and R > 1:
        with ThreadPoolExecutor(max_workers=min(threads, R)) as pool:
            res = list(pool.map(one, range(R)))
    else:
        res = [one(r) for r in range(R)]
    steps = res[0][0]
    LA = np.stack([x[1] for x in res])
    LB = np.stack([x[2] for x in res])
    t = steps * a.spec.eta
    se = (lambda M: M.std(axis=0, ddof=1) / np.sqrt(R)) if R >= 2 else (lambda M: None)
    seeds = [derive_seed(a.seed, r) for r in range(R)]
    ta = Trajectory(t, LA.mean(0), Kind.MONTE_CARLO, se(LA), meta=_meta(a, seeds))
    tb = Trajectory(t, LB.mean(0), Kind.MONTE_CARLO, se(LB), meta=_meta(b, seeds))
    return ta, tb, se(LA - LB)


def sample_batch_gradients(spec: ProblemSpec, theta, B: int, n_batches: int, rng) -> np.ndarray:
    """Mini-batch gradients at a fixed theta, one row per independent batch."""
    sp = make_spectrum(spec)
    u = np.asarray(theta, dtype=np.float64) - sp.theta_star
    sl = np.sqrt(np.asarray(sp.lambdas))
    out = np.empty((n_batches, sp.dim))
    for i in range(n_batches):
        eps = spec.sigma * rng.standard_normal(B)
        phi = rng.standard_normal((B, sp.dim)) * sl
        out[i] = (phi @ u - eps) @ phi / B
    return out


def noise_covariance(spec: ProblemSpec, theta) -> np.ndarray:
    """Closed-form per-sample gradient-noise covariance H u u^T H + (u^T H u) H + sigma^2 H."""
    sp = make_spectrum(spec)
    lam = np.asarray(sp.lambdas)
    u = np.asarray(theta, dtype=np.float64) - sp.theta_star
    Hu = lam * u
    return np.outer(Hu, Hu) + (float(u @ Hu) + spec.sigma ** 2) * np.diag(lam)
