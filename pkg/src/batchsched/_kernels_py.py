"""Pure-Python/numpy implementations of the hot loops (fallback backend)."""
import numpy as np

_ROW_CHUNK = 4096


def volterra_march(Kg, eg, w, h, half_s2, limit):
    n = Kg.size - 1
    f = np.empty(n + 1)
    u = np.empty(n + 1)
    f[0] = 0.5 * eg[0]
    u[0] = w[0] * (f[0] + half_s2)
    cap = limit * f[0]
    for i in range(1, n + 1):
        conv = 0.5 * Kg[i] * u[0]
        if i > 1:
            conv += float(np.dot(Kg[i - 1:0:-1], u[1:i]))
        denom = 1.0 - 0.5 * h * Kg[0] * w[i]
        val = (0.5 * eg[i] + h * conv + 0.5 * h * Kg[0] * w[i] * half_s2) / denom
        if not (denom > 0 and np.isfinite(val) and val <= cap):
            return f, i
        f[i] = val
        u[i] = w[i] * (val + half_s2)
    return f, -1


def sgd_run(sqrt_lam, theta_star, batch_sizes, eta, sigma, eval_every, theta0, rng):
    """Run one-pass SGD on the diagonal Gaussian model.

    Per step the label noises for the whole batch are drawn first, then the
    feature rows in order.  Returns (checkpoint steps, losses, failing step or -1).
    """
    lam = sqrt_lam * sqrt_lam
    u = np.array(theta0, dtype=np.float64) - theta_star
    N = u.size
    K = batch_sizes.size
    steps = _checkpoints(K, eval_every)
    losses = np.empty(steps.size)
    ci = 0
    for k in range(1, K + 1):
        B = int(batch_sizes[k - 1])
        eps = sigma * rng.standard_normal(B)
        grad = np.zeros(N)
        for r0 in range(0, B, _ROW_CHUNK):
            r1 = min(B, r0 + _ROW_CHUNK)
            phi = rng.standard_normal((r1 - r0, N))
            phi *= sqrt_lam
            res = phi @ u - eps[r0:r1]
            grad += res @ phi
        u -= (eta / B) * grad
        if ci < steps.size and steps[ci] == k:
            loss = 0.5 * float(np.dot(lam, u * u))
            if not np.isfinite(loss):
                return steps, losses, k
            losses[ci] = loss
            ci += 1
    return steps, losses, -1


def _checkpoints(K, eval_every):
    steps = np.arange(eval_every, K + 1, eval_every, dtype=np.int64)
    if steps.size == 0 or steps[-1] != K:
        steps = np.append(steps, K)
    return steps


def sgd_run_coupled(sqrt_lam, theta_star, bs_a, bs_b, eta, sigma, eval_every, theta0, rng):
    """Two SGD runs on common random numbers.

    Step k draws max(B_a, B_b) label noises, then that many feature rows; run a
    uses the first B_a samples and run b the first B_b.  Each run on its own is
    ordinary one-pass SGD.
    """
    lam = sqrt_lam * sqrt_lam
    ua = np.array(theta0, dtype=np.float64) - theta_star
    ub = ua.copy()
    K = bs_a.size
    steps = _checkpoints(K, eval_every)
    la = np.empty(steps.size)
    lb = np.empty(steps.size)
    ci = 0
    for k in range(1, K + 1):
        Ba, Bb = int(bs_a[k - 1]), int(bs_b[k - 1])
        Bm = max(Ba, Bb)
        eps = sigma * rng.standard_normal(Bm)
        phi = rng.standard_normal((Bm, ua.size))
        phi *= sqrt_lam
        ua -= (eta / Ba) * ((phi[:Ba] @ ua - eps[:Ba]) @ phi[:Ba])
        ub -= (eta / Bb) * ((phi[:Bb] @ ub - eps[:Bb]) @ phi[:Bb])
        if ci < steps.size and steps[ci] == k:
            a = 0.5 * float(np.dot(lam, ua * ua))
            b = 0.5 * float(np.dot(lam, ub * ub))
            if not (np.isfinite(a) and np.isfinite(b)):
                return steps, la, lb, k
            la[ci], lb[ci] = a, b
            ci += 1
    return steps, la, lb, -1
