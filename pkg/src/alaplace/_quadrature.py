"""Graded Gauss-Legendre rules and a vectorized monotone inverse.

Both are used throughout the package to integrate densities that behave like
a power of the distance to one endpoint and to invert increasing functions
elementwise on arrays.
"""

from functools import lru_cache

import numpy as np

# target relative truncation of the innermost (dropped) panel
_TAIL_DIGITS = 47.0  # log2(1e-14) ~ -46.5


def graded_levels(beta):
    """Number of dyadic panels needed when the integrand behaves like w**beta at 0."""
    if beta <= -1.0:
        raise ValueError("integrand must be integrable at 0 (beta > -1)")
    return int(min(1200, np.ceil(_TAIL_DIGITS / (beta + 1.0)))) + 1


@lru_cache(maxsize=64)
def graded_rule(levels, points):
    """Nodes and weights on [0, 1], geometrically graded toward 0.

    Panels are [2**-(k+1), 2**-k] for k < levels plus the innermost [0, 2**-levels];
    each carries a ``points``-node Gauss-Legendre rule.
    """
    x, w = np.polynomial.legendre.leggauss(points)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    edges = np.concatenate([2.0 ** -np.arange(levels + 1, dtype=float), [0.0]])
    hi, lo = edges[:-1], edges[1:]
    width = hi - lo
    nodes = (lo[:, None] + width[:, None] * x[None, :]).ravel()
    weights = (width[:, None] * w[None, :]).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def integrate_from_zero(f, t, beta, points=16, chunk=4096):
    """Return int_0^t f(s) ds elementwise for an array ``t >= 0``.

    ``f`` must be vectorized. ``beta`` is a lower bound on the growth exponent of
    ``f`` at 0 and sets the grading depth.
    """
    t = np.asarray(t, dtype=float)
    nodes, weights = graded_rule(graded_levels(beta), points)
    flat = t.ravel()
    out = np.empty_like(flat)
    for start in range(0, flat.size, chunk):
        tt = flat[start:start + chunk]
        vals = f(tt[:, None] * nodes[None, :])
        out[start:start + chunk] = tt * (vals @ weights)
    return out.reshape(t.shape)


def monotone_inverse(f, fprime, y, rtol=1e-14, max_iter=200):
    """Solve f(t) = y for t >= 0 elementwise, with f increasing and f(0) = 0.

    Brackets each root by doubling/halving, then runs safeguarded Newton steps
    (bisection whenever Newton leaves the bracket).
    """
    y = np.asarray(y, dtype=float)
    shape = y.shape
    y = y.ravel()
    t = np.zeros_like(y)
    pos = y > 0
    if not pos.any():
        return t.reshape(shape)
    yy = y[pos]
    lo = np.zeros_like(yy)
    hi = np.ones_like(yy)
    # grow hi until f(hi) >= y
    for _ in range(2100):
        short = f(hi) < yy
        if not short.any():
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, 2.0 * hi, hi)
    # shrink hi while f(hi/2) >= y to get a tight bracket on small roots
    for _ in range(2100):
        half = 0.5 * hi
        over = (lo == 0.0) & (f(half) >= yy) & (half > 0)
        if not over.any():
            break
        hi = np.where(over, half, hi)
    lo = np.where(lo == 0.0, 0.5 * hi, lo)
    x = hi.copy()
    for _ in range(max_iter):
        fx = f(x) - yy
        lo = np.where(fx < 0, x, lo)
        hi = np.where(fx >= 0, x, hi)
        d = fprime(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d > 0, fx / d, np.inf)
        newton = x - step
        inside = (newton > lo) & (newton < hi) & np.isfinite(newton)
        x_new = np.where(inside, newton, 0.5 * (lo + hi))
        done = np.abs(x_new - x) <= rtol * x_new
        x = x_new
        if done.all():
            break
    t[pos] = x
    return t.reshape(shape)
