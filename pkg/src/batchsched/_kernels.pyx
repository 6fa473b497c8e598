# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: Volterra marching and the SGD step loop."""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal

cnp.import_array()

from ._kernels_py import _checkpoints


def volterra_march(const double[::1] Kg, const double[::1] eg, const double[::1] w, double h,
                   double half_s2, double limit):
    cdef Py_ssize_t n = Kg.shape[0] - 1, i, k
    f_arr = np.empty(n + 1)
    u_arr = np.empty(n + 1)
    cdef double[::1] f = f_arr
    cdef double[::1] u = u_arr
    cdef double conv, denom, val, cap
    cdef Py_ssize_t fail = -1
    f[0] = 0.5 * eg[0]
    u[0] = w[0] * (f[0] + half_s2)
    cap = limit * f[0]
    with nogil:
        for i in range(1, n + 1):
            conv = 0.5 * Kg[i] * u[0]
            for k in range(1, i):
                conv += Kg[i - k] * u[k]
            denom = 1.0 - 0.5 * h * Kg[0] * w[i]
            val = (0.5 * eg[i] + h * conv + 0.5 * h * Kg[0] * w[i] * half_s2) / denom
            if not (denom > 0 and isfinite(val) and val <= cap):
                fail = i
                break
            f[i] = val
            u[i] = w[i] * (val + half_s2)
    return f_arr, fail


def sgd_run(const double[::1] sqrt_lam, const double[::1] theta_star, const cnp.int64_t[::1] batch_sizes,
            double eta, double sigma, Py_ssize_t eval_every, theta0, rng):
    cdef Py_ssize_t N = sqrt_lam.shape[0], K = batch_sizes.shape[0]
    cdef Py_ssize_t k, i, j, B, ci = 0, fail = -1, maxB = 0
    steps_arr = _checkpoints(K, eval_every)
    cdef cnp.int64_t[::1] steps = steps_arr
    cdef Py_ssize_t nck = steps.shape[0]
    losses_arr = np.empty(nck)
    cdef double[::1] losses = losses_arr
    u_arr = np.asarray(theta0, dtype=np.float64) - np.asarray(theta_star)
    cdef double[::1] u = u_arr
    for k in range(K):
        if batch_sizes[k] > maxB:
            maxB = batch_sizes[k]
    phi_arr = np.empty(N)
    grad_arr = np.empty(N)
    eps_arr = np.empty(maxB)
    cdef double[::1] phi = phi_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] eps = eps_arr
    cdef double r, scale, loss, z
    bitgen = rng.bit_generator
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")
    with bitgen.lock, nogil:
        for k in range(K):
            B = batch_sizes[k]
            for i in range(B):
                eps[i] = sigma * random_standard_normal(bg)
            for j in range(N):
                grad[j] = 0.0
            for i in range(B):
                r = 0.0
                for j in range(N):
                    z = sqrt_lam[j] * random_standard_normal(bg)
                    phi[j] = z
                    r += z * u[j]
                r -= eps[i]
                for j in range(N):
                    grad[j] += r * phi[j]
            scale = eta / B
            for j in range(N):
                u[j] -= scale * grad[j]
            if ci < nck and steps[ci] == k + 1:
                loss = 0.0
                for j in range(N):
                    loss += sqrt_lam[j] * sqrt_lam[j] * u[j] * u[j]
                loss *= 0.5
                if not isfinite(loss):
                    fail = k + 1
                    break
                losses[ci] = loss
                ci += 1
    return steps_arr, losses_arr, fail


def sgd_run_coupled(const double[::1] sqrt_lam, const double[::1] theta_star,
                    const cnp.int64_t[::1] bs_a, const cnp.int64_t[::1] bs_b,
                    double eta, double sigma, Py_ssize_t eval_every, theta0, rng):
    cdef Py_ssize_t N = sqrt_lam.shape[0], K = bs_a.shape[0]
    cdef Py_ssize_t k, i, j, Ba, Bb, Bm, ci = 0, fail = -1, maxB = 0
    steps_arr = _checkpoints(K, eval_every)
    cdef cnp.int64_t[::1] steps = steps_arr
    cdef Py_ssize_t nck = steps.shape[0]
    la_arr = np.empty(nck)
    lb_arr = np.empty(nck)
    cdef double[::1] la = la_arr
    cdef double[::1] lb = lb_arr
    ua_arr = np.asarray(theta0, dtype=np.float64) - np.asarray(theta_star)
    ub_arr = ua_arr.copy()
    cdef double[::1] ua = ua_arr
    cdef double[::1] ub = ub_arr
    for k in range(K):
        maxB = max(maxB, bs_a[k], bs_b[k])
    phi_arr = np.empty(N)
    ga_arr = np.empty(N)
    gb_arr = np.empty(N)
    eps_arr = np.empty(maxB)
    cdef double[::1] phi = phi_arr
    cdef double[::1] ga = ga_arr
    cdef double[::1] gb = gb_arr
    cdef double[::1] eps = eps_arr
    cdef double ra, rb, z, a, b
    bitgen = rng.bit_generator
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")
    with bitgen.lock, nogil:
        for k in range(K):
            Ba = bs_a[k]
            Bb = bs_b[k]
            Bm = Ba if Ba > Bb else Bb
            for i in range(Bm):
                eps[i] = sigma * random_standard_normal(bg)
            for j in range(N):
                ga[j] = 0.0
                gb[j] = 0.0
            for i in range(Bm):
                ra = 0.0
                rb = 0.0
                for j in range(N):
                    z = sqrt_lam[j] * random_standard_normal(bg)
                    phi[j] = z
                    ra += z * ua[j]
                    rb += z * ub[j]
                ra -= eps[i]
                rb -= eps[i]
                if i < Ba:
                    for j in range(N):
                        ga[j] += ra * phi[j]
                if i < Bb:
                    for j in range(N):
                        gb[j] += rb * phi[j]
            for j in range(N):
                ua[j] -= (eta / Ba) * ga[j]
                ub[j] -= (eta / Bb) * gb[j]
            if ci < nck and steps[ci] == k + 1:
                a = 0.0
                b = 0.0
                for j in range(N):
                    z = sqrt_lam[j] * sqrt_lam[j]
                    a += z * ua[j] * ua[j]
                    b += z * ub[j] * ub[j]
                if not (isfinite(a) and isfinite(b)):
                    fail = k + 1
                    break
                la[ci] = 0.5 * a
                lb[ci] = 0.5 * b
                ci += 1
    return steps_arr, la_arr, lb_arr, fail
