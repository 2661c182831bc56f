"""N-functions A(t) = int_0^t a(s) ds described by their density ``a``.

An :class:`NFunction` carries the density, its derivative and the index bounds
``a0 <= t a'(t) / a(t) <= a1``. Everything else (the primitive, its inverse, the
Young conjugate) is computed numerically unless a closed form is attached.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.optimize import minimize_scalar

from ._quadrature import integrate_from_zero, monotone_inverse
from ._validation import (DomainError, as_scalar_or_array, check_nonneg,
                          check_positive_int, check_random_state)

__all__ = [
    "NFunction", "NFunctionPair", "IndexReport", "InequalityReport",
    "power", "plog", "tlog1p", "from_spec", "parse_nf",
    "eval_A", "eval_A_inverse", "eval_conjugate",
    "check_index_condition", "check_structural_inequalities",
    "composite_indices", "tail_integral", "check_tail_summability",
]

# widening applied when declared indices do not straddle 1
INDEX_MARGIN = 1e-9


@dataclass(frozen=True)
class NFunction:
    """An N-function given by its density.

    ``a`` and ``a_prime`` must accept numpy arrays. ``a0``/``a1`` are the declared
    index bounds; after construction they hold the widened pair satisfying
    ``a0 < 1 < a1`` and the declared values are kept in ``declared``.
    """

    a: Callable
    a_prime: Callable
    a0: float
    a1: float
    label: str = "custom"
    A_exact: Optional[Callable] = None
    A_inv_exact: Optional[Callable] = None
    a_inv_exact: Optional[Callable] = None
    conjugate_exact: Optional[Callable] = None
    declared: tuple = field(init=False)

    def __post_init__(self):
        a0, a1 = float(self.a0), float(self.a1)
        if not (np.isfinite(a0) and np.isfinite(a1)) or a0 <= 0 or a1 < a0:
            raise ValueError(f"need 0 < a0 <= a1 < inf, got ({a0}, {a1})")
        object.__setattr__(self, "declared", (a0, a1))
        object.__setattr__(self, "a0", min(a0, 1.0 - INDEX_MARGIN))
        object.__setattr__(self, "a1", max(a1, 1.0 + INDEX_MARGIN))

    # the numerical paths below assume validated, nonnegative float arrays

    def A(self, t):
        if self.A_exact is not None:
            return self.A_exact(t)
        return self.A_quadrature(t)

    def A_quadrature(self, t):
        # a(s) ~ s**a0 near 0, so the integrand exponent is bounded below by a0
        return integrate_from_zero(self.a, t, beta=self.a0)

    def A_inv(self, y):
        if self.A_inv_exact is not None:
            return self.A_inv_exact(y)
        return monotone_inverse(self.A, self.a, y)

    def a_inv(self, s):
        if self.a_inv_exact is not None:
            return self.a_inv_exact(s)
        return monotone_inverse(self.a, self.a_prime, s)

    def conjugate(self, t):
        if self.conjugate_exact is not None:
            return self.conjugate_exact(t)
        return self.conjugate_quadrature(t)

    def conjugate_quadrature(self, t):
        # a^{-1} has indices within [1/a1, 1/a0]
        return integrate_from_zero(self.a_inv, t, beta=1.0 / self.a1, points=12)

    def index_ratio(self, t):
        t = np.asarray(t, dtype=float)
        return t * self.a_prime(t) / self.a(t)

    def __repr__(self):
        return f"NFunction({self.label!r}, a0={self.a0:g}, a1={self.a1:g})"


def power(p):
    """a(t) = t**(p-1), A(t) = t**p / p."""
    p = float(p)
    if not p > 1:
        raise ValueError(f"power family needs p > 1, got {p}")
    q = p / (p - 1.0)
    return NFunction(
        a=lambda t: np.power(t, p - 1.0),
        a_prime=lambda t: (p - 1.0) * np.power(t, p - 2.0),
        a0=p - 1.0,
        a1=p - 1.0,
        label=f"power(p={p:g})",
        A_exact=lambda t: np.power(t, p) / p,
        A_inv_exact=lambda y: np.power(p * np.asarray(y, dtype=float), 1.0 / p),
        a_inv_exact=lambda s: np.power(s, 1.0 / (p - 1.0)),
        conjugate_exact=lambda t: np.power(t, q) / q,
    )


def _plog_bump():
    # sup over t > 0 of t / ((e + t) log(e + t)), taken on a log scale
    def neg(x):
        t = np.exp(x)
        return -t / ((np.e + t) * np.log(np.e + t))

    res = minimize_scalar(neg, bounds=(-30.0, 30.0), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun


_PLOG_BUMP = _plog_bump()


def plog(p, q):
    """a(t) = t**(p-1) * log(e + t)**q.

    The index ratio is (p-1) + q t/((e+t) log(e+t)), so the declared indices are
    computed from the maximum of that bump, and the function is only returned
    after :func:`check_index_condition` accepts it.
    """
    p, q = float(p), float(q)
    spread = q * _PLOG_BUMP
    a0 = p - 1.0 + min(0.0, spread) - 1e-12
    a1 = p - 1.0 + max(0.0, spread) + 1e-12
    if a0 <= 0:
        raise ValueError(f"plog(p={p}, q={q}) has a nonpositive lower index")

    def a(t):
        return np.power(t, p - 1.0) * np.power(np.log(np.e + t), q)

    def a_prime(t):
        L = np.log(np.e + t)
        return ((p - 1.0) * np.power(t, p - 2.0) * np.power(L, q)
                + np.power(t, p - 1.0) * q * np.power(L, q - 1.0) / (np.e + t))

    nf = NFunction(a=a, a_prime=a_prime, a0=a0, a1=a1, label=f"plog(p={p:g},q={q:g})")
    report = check_index_condition(nf)
    if not report.passed:
        raise ValueError(f"{nf.label} failed the index check: {report}")
    return nf


def tlog1p():
    """a(t) = t log(1 + t); index ratio 1 + t/((1+t) log(1+t)) lies in (1, 2)."""

    def a_prime(t):
        return np.log1p(t) + t / (1.0 + t)

    k = np.arange(1, 60)
    coef = (-1.0) ** (k + 1) / (k * (k + 2.0))

    def A_exact(t):
        # int_0^t s log(1+s) ds; the closed form cancels badly for small t
        t = np.asarray(t, dtype=float)
        closed = 0.5 * (t * t - 1.0) * np.log1p(t) - 0.25 * t * t + 0.5 * t
        small = np.minimum(t, 0.5)[..., None]
        series = np.sum(coef * small ** (k + 2), axis=-1)
        return np.where(t < 0.5, series, closed)

    return NFunction(a=lambda t: t * np.log1p(t), a_prime=a_prime, a0=1.0, a1=2.0,
                     label="tlog1p", A_exact=A_exact)


_FAMILIES = {"power": power, "plog": plog, "tlog1p": tlog1p}


def from_spec(spec):
    """Build an N-function from ``{"family": ..., **params}`` or a ``family:k=v,...`` string."""
    if isinstance(spec, NFunction):
        return spec
    if isinstance(spec, str):
        return parse_nf(spec)
    spec = dict(spec)
    family = spec.pop("family")
    if family not in _FAMILIES:
        raise ValueError(f"unknown N-function family {family!r}")
    return _FAMILIES[family](**spec)


def parse_nf(text):
    """Parse ``"power:p=2.5"``, ``"plog:p=2,q=1"`` or ``"tlog1p"``."""
    family, _, rest = text.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, _, value = item.partition("=")
        params[key.strip()] = float(value)
    return from_spec({"family": family.strip(), **params})


def eval_A(nf, t):
    """A(t) for scalar or array ``t >= 0``."""
    arr = check_nonneg(t, "t")
    return as_scalar_or_array(nf.A(arr), t)


def eval_A_inverse(nf, y):
    arr = check_nonneg(y, "y")
    return as_scalar_or_array(nf.A_inv(arr), y)


def eval_conjugate(nf, t):
    """Young conjugate int_0^t a^{-1}(s) ds."""
    arr = check_nonneg(t, "t")
    return as_scalar_or_array(nf.conjugate(arr), t)


@dataclass(frozen=True)
class IndexReport:
    min_ratio: float
    max_ratio: float
    passed: bool
    structural_failure: bool = False
    zero_density_at: Optional[float] = None


def check_index_condition(nf, t_min=1e-6, t_max=1e6, samples=2001, eps=1e-8):
    """Sample t a'(t)/a(t) on a log grid and compare with the stored indices."""
    if not 0 < t_min < t_max:
        raise ValueError("need 0 < t_min < t_max")
    check_positive_int(samples, "samples", minimum=2)
    t = np.geomspace(t_min, t_max, samples)
    a = nf.a(t)
    if np.any(a <= 0):
        where = float(t[np.argmax(a <= 0)])
        return IndexReport(np.nan, np.nan, False, True, where)
    with np.errstate(over="ignore", invalid="ignore"):
        r = t * nf.a_prime(t) / a
    if not np.all(np.isfinite(r)):
        return IndexReport(float(np.nanmin(r)), np.inf, False)
    lo, hi = float(r.min()), float(r.max())
    return IndexReport(lo, hi, bool(lo >= nf.a0 - eps and hi <= nf.a1 + eps))


@dataclass
class InequalityReport:
    """Worst relative slack and offending (s, t) pairs for each checked inequality."""

    worst_slack: dict
    violations: dict
    trials: int

    @property
    def passed(self):
        return not any(self.violations.values())


def _rel_slack(lhs, rhs):
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(scale > 0, (rhs - lhs) / np.where(scale > 0, scale, 1.0), 0.0)


def check_structural_inequalities(nf, trials=10_000, range_=100.0, rtol=1e-9, seed=0):
    """Check the elementary consequences of the index condition on random s, t.

    Each entry of the report is ``lhs <= rhs`` in relative terms:
    ``A_lower``/``A_upper``: t a(t)/(1+a1) <= A(t) <= t a(t);
    ``cross``: s a(t) <= s a(s) + t a(t);
    ``a_scale_lower``/``a_scale_upper``: power bounds on a(st);
    ``A_scale_lower``/``A_scale_upper``: power bounds on A(st);
    ``A_sum``: A(s+t) <= (1+a1) 2**a1 (A(s) + A(t)).
    """
    check_positive_int(trials, "trials")
    if not range_ > 0:
        raise ValueError("range_ must be positive")
    rng = check_random_state(seed)
    s = rng.uniform(0.0, range_, trials)
    t = rng.uniform(0.0, range_, trials)
    a0, a1 = nf.a0, nf.a1
    a_s, a_t, a_st = nf.a(s), nf.a(t), nf.a(s * t)
    A_s, A_t, A_st, A_sum = nf.A(s), nf.A(t), nf.A(s * t), nf.A(s + t)
    lo_a = np.minimum(s ** a0, s ** a1)
    hi_a = np.maximum(s ** a0, s ** a1)
    lo_A = np.minimum(s ** (1 + a0), s ** (1 + a1))
    hi_A = np.maximum(s ** (1 + a0), s ** (1 + a1))
    pairs = {
        "A_lower": (t * a_t / (1 + a1), A_t),
        "A_upper": (A_t, t * a_t),
        "cross": (s * a_t, s * a_s + t * a_t),
        "a_scale_lower": (lo_a * a_t, a_st),
        "a_scale_upper": (a_st, hi_a * a_t),
        "A_scale_lower": (lo_A * A_t / (1 + a1), A_st),
        "A_scale_upper": (A_st, (1 + a1) * hi_A * A_t),
        "A_sum": (A_sum, (1 + a1) * 2 ** a1 * (A_s + A_t)),
    }
    worst, bad = {}, {}
    for name, (lhs, rhs) in pairs.items():
        slack = _rel_slack(lhs, rhs)
        worst[name] = float(slack.min())
        idx = np.flatnonzero(slack < -rtol)
        bad[name] = [(float(s[i]), float(t[i])) for i in idx]
    return InequalityReport(worst, bad, trials)


def _composite_density(A, B, y):
    # g = B o A^{-1}  =>  g'(y) = b(A^{-1}(y)) / a(A^{-1}(y))
    x = A.A_inv(y)
    return B.a(x) / A.a(x)


def composite_indices(A, B, y_min=1e-6, y_max=1e6, samples=401, rel_step=1e-5):
    """Observed (min, max) of y g''(y)/g'(y) for g = B o A^{-1}.

    g' is exact through the chain rule; g'' comes from central differences with
    relative step ``rel_step``.
    """
    check_positive_int(samples, "samples", minimum=2)
    y = np.geomspace(y_min, y_max, samples)
    h = rel_step * y
    gp = _composite_density(A, B, y)
    gpp = (_composite_density(A, B, y + h) - _composite_density(A, B, y - h)) / (2 * h)
    r = y * gpp / gp
    if not np.all(np.isfinite(r)):
        return (float(np.nanmin(r)), np.inf)
    return (float(r.min()), float(r.max()))


@dataclass(frozen=True)
class NFunctionPair:
    """(A, B) such that B o A^{-1} is itself an N-function with finite indices."""

    A: NFunction
    B: NFunction
    composite: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "composite", composite_indices(self.A, self.B))

    @property
    def admissible(self):
        lo, hi = self.composite
        return bool(lo > 0 and np.isfinite(hi))

    def g(self, y):
        """B o A^{-1}."""
        return self.B.A(self.A.A_inv(np.asarray(y, dtype=float)))


def tail_integral(pair, T):
    """int_1^T g(1/t) dt, computed as int_{1/T}^1 g(s)/s**2 ds on a log scale."""

    def integrand(x):
        s = np.exp(x)
        return float(pair.g(np.array(s)) / s)

    val, _ = integrate.quad(integrand, -np.log(T), 0.0, epsabs=1e-14, epsrel=1e-12, limit=500)
    return val


def check_tail_summability(pair, T0=10.0, doublings=40, tol=1e-6):
    """Successive doublings of T must eventually change the tail integral by < tol."""
    values = [tail_integral(pair, T0 * 2.0 ** k) for k in range(doublings + 1)]
    steps = np.abs(np.diff(values))
    settled = steps < tol
    # once below tol, every later doubling must stay below it
    first = int(np.argmax(settled)) if settled.any() else len(steps)
    passed = bool(settled.any() and settled[first:].all())
    return {"values": values, "steps": steps.tolist(), "passed": passed}
