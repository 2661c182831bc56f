"""Discrete Hardy-Littlewood and sharp maximal operators on periodic grids.

The supremum over r > 0 is replaced by a maximum over a finite set of radii.
Ball sums are accumulated offset by offset in a fixed order (no summed-area
tables), so the result equals a plain loop over nodes and offsets bit for bit.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import DomainError, check_random_state
from .field import Grid, ScalarField, grad_periodic
from .nfunction import from_spec

__all__ = [
    "RadiusSet", "ball_offsets", "maximal_fn", "sharp_fn", "oscillation_exponents",
    "sample_nodes", "verify_pointwise_bound", "verify_maximal_theorem", "MaximalFunction",
    "SharpMaximalFunction",
]


@dataclass(frozen=True)
class RadiusSet:
    """Increasing physical radii used to discretize the supremum over r."""

    radii: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in self.radii)
        if not r:
            raise ValueError("RadiusSet needs at least one radius")
        if any(x <= 0 or not np.isfinite(x) for x in r):
            raise ValueError("radii must be positive and finite")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("radii must be strictly increasing")
        object.__setattr__(self, "radii", r)

    @classmethod
    def geometric(cls, grid, r_min=None, r_max=None, ratio=np.sqrt(2.0)):
        """r_min * ratio**k for all k with radius < r_max (default 2h and L/2)."""
        r_min = 2 * grid.h if r_min is None else float(r_min)
        r_max = min(grid.lengths) / 2 if r_max is None else float(r_max)
        if r_min >= r_max:
            raise ValueError("r_min must be below r_max")
        k = int(np.floor(np.log(r_max / r_min) / np.log(ratio) - 1e-12)) + 1
        radii = r_min * ratio ** np.arange(k)
        return cls(tuple(radii[radii < r_max]))

    def check(self, grid):
        if self.radii[0] < grid.h * (1 - 1e-12):
            raise DomainError("smallest radius is below the grid spacing")
        if 2 * self.radii[-1] >= min(grid.lengths):
            raise DomainError("periodic balls need r < L/2")


def ball_offsets(n, h, r):
    """Integer offsets k with |k| h <= r, in lexicographic order."""
    m = int(np.floor(r / h * (1 + 1e-12)))
    axes = [np.arange(-m, m + 1)] * n
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    keep = np.sum((grid * h) ** 2, axis=1) <= r * r * (1 + 1e-12)
    return grid[keep]


def _shifted(values, off):
    # value at x + off (periodic)
    return np.roll(values, tuple(-int(o) for o in off), axis=tuple(range(values.ndim)))


def _gather(values, points, off):
    idx = tuple((points[:, k] + off[k]) % values.shape[k] for k in range(values.ndim))
    return values[idx]


def _ball_mean(values, offs, points):
    acc = 0.0
    for off in offs:
        acc = acc + (_shifted(values, off) if points is None else _gather(values, points, off))
    return acc / len(offs)


def _ball_osc(values, offs, points, mean):
    acc = 0.0
    for off in offs:
        v = _shifted(values, off) if points is None else _gather(values, points, off)
        acc = acc + np.abs(v - mean)
    return acc / len(offs)


def _prepare(f, R, points):
    g = f.grid
    if g.topology != "periodic":
        raise ValueError("maximal operators act on periodic grids")
    R.check(g)
    if points is not None:
        points = np.atleast_2d(np.asarray(points, dtype=np.int64))
        if points.shape[1] != g.n:
            raise ValueError(f"points must have shape (k, {g.n})")
    return g, points


def _wrap(g, out, points):
    return out if points is not None else ScalarField(g, out)


def maximal_fn(f, R, points=None):
    """M[f](x) = max over r in ``R`` of the mean of |f| over the closed ball B_r(x).

    With ``points`` (integer node indices, shape (k, n)) only those nodes are
    evaluated and a plain array is returned.
    """
    g, points = _prepare(f, R, points)
    absf = np.abs(f.values)
    out = None
    for r in R.radii:
        mean = _ball_mean(absf, ball_offsets(g.n, g.h, r), points)
        out = mean if out is None else np.maximum(out, mean)
    return _wrap(g, out, points)


def sharp_fn(f, R, points=None):
    """f#(x) = max over r of the mean of |f - (f)_{x,r}| over B_r(x)."""
    g, points = _prepare(f, R, points)
    vals = f.values
    out = None
    for r in R.radii:
        offs = ball_offsets(g.n, g.h, r)
        mean = _ball_mean(vals, offs, points)
        osc = _ball_osc(vals, offs, points, mean)
        out = osc if out is None else np.maximum(out, osc)
    return _wrap(g, out, points)


def oscillation_exponents(nf, alpha, n):
    """(m, kappa) built from the indices and a decay exponent ``alpha``.

    m = n + (alpha + n)(1 + a1(1 + a1))/a0 and
    kappa = a1(1 + a1) + m (a1(1 + a1) + a0 + 1)/alpha.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    a0, a1 = nf.a0, nf.a1
    c = a1 * (1 + a1)
    m = n + (alpha + n) * (1 + c) / a0
    kappa = c + m * (c + a0 + 1) / alpha
    return m, kappa


def sample_nodes(grid, count, seed=0, fraction=0.5):
    """Random node indices inside the central ``fraction`` of the box."""
    rng = check_random_state(seed)
    lo = [int(round(s * (1 - fraction) / 2)) for s in grid.shape]
    hi = [int(round(s * (1 + fraction) / 2)) for s in grid.shape]
    return np.stack([rng.integers(a, b, size=count) for a, b in zip(lo, hi)], axis=1)


def verify_pointwise_bound(nf, u_report, F, delta=0.5, sample_points=200, alpha=1.0,
                           R=None, seed=0, points=None):
    """Smallest gamma with

        (A(|grad u|))#(x) <= gamma / delta**kappa * M[A(|F|)](x)
                             + 2 gamma delta**(a0 + 1) * M[A(|grad u|)](x)

    over sampled nodes. ``alpha`` is the fitted decay exponent feeding kappa.
    Samples where both sides vanish are skipped.
    """
    nf = from_spec(nf)
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    g = F.grid
    R = R or RadiusSet.geometric(g)
    if points is None:
        points = sample_nodes(g, sample_points, seed)
    m, kappa = oscillation_exponents(nf, alpha, g.n)
    G = grad_periodic(u_report.u.values, g.h)
    Agu = ScalarField(g, nf.A(np.sqrt(np.sum(G * G, axis=0))))
    AF = ScalarField(g, nf.A(F.magnitude()))
    lhs = sharp_fn(Agu, R, points)
    M_F = maximal_fn(AF, R, points)
    M_u = maximal_fn(Agu, R, points)
    denom = M_F / delta ** kappa + 2 * delta ** (nf.a0 + 1) * M_u
    live = denom > 0
    if np.any(lhs[~live] > 0):
        raise DomainError("nonzero oscillation where both maximal terms vanish")
    gammas = lhs[live] / denom[live]
    gamma = float(gammas.max()) if gammas.size else 0.0
    return {"gamma_emp": gamma, "kappa": kappa, "m": m, "alpha": alpha, "delta": delta,
            "samples": int(live.sum()), "lhs": lhs, "M_F": M_F, "M_u": M_u}


def verify_maximal_theorem(pair, f, R=None):
    """C9_emp = int B(A^{-1}(M[A(|f|)])) / int B(|f|); 0/0 is reported as 0."""
    g = f.grid
    R = R or RadiusSet.geometric(g)
    A, B = pair.A, pair.B
    Af = ScalarField(g, A.A(np.abs(f.values)))
    M = maximal_fn(Af, R).values
    lhs = g.cell_volume * float(np.sum(B.A(A.A_inv(M))))
    rhs = g.cell_volume * float(np.sum(B.A(np.abs(f.values))))
    if rhs == 0:
        if lhs != 0:
            raise DomainError("int B(|f|) vanishes but the maximal side does not")
        ratio = 0.0
    else:
        ratio = lhs / rhs
    return {"C9_emp": ratio, "lhs": lhs, "rhs": rhs, "admissible": pair.admissible,
            "finite": bool(np.isfinite(ratio))}


class _MaximalBase(TransformerMixin, BaseEstimator):
    def __init__(self, r_min=None, r_max=None, ratio=np.sqrt(2.0), length=1.0):
        self.r_min = r_min
        self.r_max = r_max
        self.ratio = ratio
        self.length = length

    def _field(self, X):
        if isinstance(X, ScalarField):
            return X
        X = np.asarray(X, dtype=float)
        if X.ndim not in (2, 3):
            raise ValueError("X must be a 2D or 3D grid array")
        return ScalarField(Grid(X.shape, self.length / X.shape[0]), X)

    def fit(self, X, y=None):
        f = self._field(X)
        self.radii_ = RadiusSet.geometric(f.grid, self.r_min, self.r_max, self.ratio)
        self.grid_ = f.grid
        return self

    def transform(self, X):
        f = self._field(X)
        if f.grid != self.grid_:
            raise ValueError("transform grid differs from the fitted grid")
        return self._op(f, self.radii_).values


class MaximalFunction(_MaximalBase):
    """Transformer form of :func:`maximal_fn` on arrays over a periodic box."""

    _op = staticmethod(maximal_fn)


class SharpMaximalFunction(_MaximalBase):
    """Transformer form of :func:`sharp_fn`."""

    _op = staticmethod(sharp_fn)
