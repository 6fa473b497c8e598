"""One-dimensional root and minimum search."""
import math

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, a, b, tol, max_iter=500):
    """Minimise a unimodal f on [a, b] until the bracket is narrower than tol.

    Returns (x, f(x)) for the best point evaluated; ties go to the smaller x.
    """
    if b < a:
        a, b = b, a
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    best = min((fc, c), (fd, d))
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
            best = min(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
            best = min(best, (fd, d))
    return best[1], best[0]


def bisect_increasing(g, target, lo, hi, rtol=1e-15, max_iter=400):
    """Solve g(x) = target for increasing g with g(lo) <= target <= g(hi)."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= rtol * abs(hi):
            break
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
