"""The flux map Theta(X) = a(|X|) X / |X|, segment kernels and pointwise verifiers.

All functions broadcast over leading axes; the last axis holds vector components.
Constants that are only known to exist (monotonicity constant, kernel bounds) are
estimated as extremes over samples and reported, never assumed.
"""

from dataclasses import dataclass

import numpy as np

from ._quadrature import graded_levels, graded_rule
from ._validation import DomainError, check_positive_int, check_random_state, check_vectors

__all__ = [
    "theta", "FluxSample", "monotonicity_ratio", "kernel_G", "kernel_Fp",
    "sample_pairs", "verify_kernel_G_bounds", "verify_kernel_Fp_bounds",
    "verify_monotonicity", "verify_convexity_gap", "verify_delta_split",
    "THETA_FLOOR",
]

THETA_FLOOR = 1e-14


def _norm(X):
    return np.sqrt(np.sum(X * X, axis=-1))


def theta(nf, X, floor=THETA_FLOOR):
    """a(|X|) X/|X| along the last axis; vectors with |X| <= floor map to 0."""
    X = check_vectors(X, "X")
    return _theta(nf, X, floor)


def _theta(nf, X, floor=THETA_FLOOR):
    r = _norm(X)
    big = r > floor
    safe = np.where(big, r, 1.0)
    scale = np.where(big, nf.a(safe) / safe, 0.0)
    return scale[..., None] * X


@dataclass(frozen=True)
class FluxSample:
    """Both sides of the monotonicity inequality for one pair (X, Y).

    ``ratio`` uses s = (|X|^2 + |Y|^2)^(1/2) in the structural side and
    ``ratio_sum`` uses s = |X| + |Y|; the two are equivalent up to constants.
    """

    X: np.ndarray
    Y: np.ndarray
    lhs: float
    rhs_structural: float
    ratio: float
    rhs_sum: float
    ratio_sum: float


def _monotonicity_parts(nf, X, Y):
    D = X - Y
    lhs = np.sum((_theta(nf, X) - _theta(nf, Y)) * D, axis=-1)
    d2 = np.sum(D * D, axis=-1)
    s = np.sqrt(np.sum(X * X, axis=-1) + np.sum(Y * Y, axis=-1))
    s1 = _norm(X) + _norm(Y)
    rhs = d2 * nf.a(s) / s
    rhs1 = d2 * nf.a(s1) / s1
    return lhs, rhs, rhs1


def monotonicity_ratio(nf, X, Y):
    X = check_vectors(X, "X")
    Y = check_vectors(Y, "Y")
    if np.allclose(X, Y, rtol=0, atol=0):
        raise DomainError("X == Y gives 0/0 in the monotonicity ratio")
    lhs, rhs, rhs1 = (float(v) for v in _monotonicity_parts(nf, X, Y))
    return FluxSample(X, Y, lhs, rhs, lhs / rhs, rhs1, lhs / rhs1)


def _segment_integral(f, xi, zeta, beta, points):
    """int_0^1 f(|t xi + (1-t) zeta|) dt for batches of segments.

    The interval is split at the closest approach to the origin and each side is
    integrated with a rule graded toward that point, so integrands that blow up
    like r**beta at r = 0 stay accurate when the segment crosses the origin.
    """
    d = xi - zeta
    dd = np.sum(d * d, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        tstar = np.where(dd > 0, -np.sum(zeta * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0)
    tstar = np.clip(tstar, 0.0, 1.0)
    closest = zeta + tstar[..., None] * d
    scale = np.maximum(_norm(xi), _norm(zeta))
    # segments through the origin: make the closest point exactly 0 so that
    # r = |offset| * |d| keeps full relative precision next to the singularity
    closest = np.where((_norm(closest) <= 1e-12 * scale)[..., None], 0.0, closest)
    nodes, weights = graded_rule(graded_levels(beta), points)
    cc = np.sum(closest * closest, axis=-1)[..., None]
    cd = np.sum(closest * d, axis=-1)[..., None]
    total = np.zeros(tstar.shape)
    for length, sign in ((tstar, -1.0), (1.0 - tstar, 1.0)):
        # |closest + s d|^2 expanded; s * cd >= 0 on each side, so no cancellation
        s = sign * length[..., None] * nodes
        r = np.sqrt(np.maximum(cc + s * (2.0 * cd + s * dd[..., None]), 0.0))
        total = total + length * (f(r) @ weights)
    return total


def _check_pair(xi, zeta):
    xi = check_vectors(xi, "xi")
    zeta = check_vectors(zeta, "zeta")
    if np.any((_norm(xi) == 0) & (_norm(zeta) == 0)):
        raise DomainError("kernel undefined at xi = zeta = 0")
    return np.broadcast_arrays(xi, zeta)


def _scalar_out(out):
    return float(out) if np.ndim(out) == 0 else out


def kernel_G(nf, xi, zeta, quad_points=16):
    """int_0^1 a(|theta_t|)/|theta_t| dt with theta_t = t xi + (1-t) zeta."""
    xi, zeta = _check_pair(xi, zeta)

    def f(r):
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, nf.a(safe) / safe, 0.0)

    # a(r)/r behaves like r**(a0 - 1) near the origin
    return _scalar_out(_segment_integral(f, xi, zeta, nf.a0 - 1.0, quad_points))


def kernel_Fp(p, xi, zeta, quad_points=16):
    """int_0^1 |t xi + (1-t) zeta|**(p-2) dt for p > 1."""
    if not p > 1:
        raise DomainError("kernel_Fp needs p > 1")
    xi, zeta = _check_pair(xi, zeta)
    if p == 2:
        return _scalar_out(np.ones(np.broadcast(xi[..., 0], zeta[..., 0]).shape))

    def f(r):
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, safe ** (p - 2.0), 0.0)

    return _scalar_out(_segment_integral(f, xi, zeta, min(p - 2.0, 0.0), quad_points))


def sample_pairs(trials, n=2, seed=0, scales=(0.1, 1.0, 10.0)):
    """Random vector pairs mixing magnitudes, plus adversarial configurations.

    Components are uniform on [-R, R] with R drawn from ``scales`` per pair; about a
    tenth of the pairs are replaced by axis-aligned and antiparallel pairs.
    """
    rng = check_random_state(seed)
    R = rng.choice(np.asarray(scales, dtype=float), size=(trials, 1))
    X = rng.uniform(-1.0, 1.0, (trials, n)) * R
    Y = rng.uniform(-1.0, 1.0, (trials, n)) * rng.choice(np.asarray(scales, dtype=float), size=(trials, 1))
    k = trials // 10
    if k:
        idx = rng.choice(trials, size=2 * k, replace=False)
        axis = rng.integers(0, n, k)
        e = np.eye(n)[axis]
        mags = rng.choice(np.asarray(scales, dtype=float), size=(k, 1))
        X[idx[:k]] = e * mags * rng.uniform(0.1, 1.0, (k, 1))
        Y[idx[:k]] = e * mags * rng.uniform(-1.0, 1.0, (k, 1))
        lam = rng.uniform(0.05, 3.0, (k, 1))
        Y[idx[k:]] = -lam * X[idx[k:]]
    # drop exact coincidences and (0, 0)
    keep = (np.any(X != Y, axis=-1)) & ((_norm(X) > 0) | (_norm(Y) > 0))
    return X[keep], Y[keep]


def verify_monotonicity(nf, trials=100_000, n=2, seed=0):
    """Empirical inf/sup of the monotonicity ratio over sampled pairs."""
    check_positive_int(trials, "trials")
    X, Y = sample_pairs(trials, n, seed)
    lhs, rhs, rhs1 = _monotonicity_parts(nf, X, Y)
    ratio = lhs / rhs
    ratio1 = lhs / rhs1
    return {
        "samples": int(ratio.size),
        "min_ratio": float(ratio.min()),
        "max_ratio": float(ratio.max()),
        "min_ratio_sum": float(ratio1.min()),
        "max_ratio_sum": float(ratio1.max()),
        "min_lhs": float(lhs.min()),
    }


def _chunked(fn, X, Y, chunk=2000):
    return np.concatenate([fn(X[i:i + chunk], Y[i:i + chunk]) for i in range(0, len(X), chunk)])


def verify_kernel_G_bounds(nf, trials=10_000, n=2, seed=0, quad_points=16):
    """G(xi, zeta) / [a(|xi|+|zeta|)/(|xi|+|zeta|)] over sampled pairs.

    Returns the observed extremes as empirical lower and upper kernel constants,
    plus the same ratio against the Euclidean pair norm.
    """
    check_positive_int(trials, "trials")
    X, Y = sample_pairs(trials, n, seed)
    G = _chunked(lambda x, y: kernel_G(nf, x, y, quad_points), X, Y)
    s1 = _norm(X) + _norm(Y)
    s2 = np.sqrt(np.sum(X * X, -1) + np.sum(Y * Y, -1))
    ratio = G / (nf.a(s1) / s1)
    ratio2 = G / (nf.a(s2) / s2)
    return {
        "samples": int(ratio.size),
        "min_ratio": float(ratio.min()),
        "max_ratio": float(ratio.max()),
        "min_ratio_euclid": float(ratio2.min()),
        "max_ratio_euclid": float(ratio2.max()),
    }


def verify_kernel_Fp_bounds(p, trials=10_000, n=2, seed=0, quad_points=16):
    """F_p(xi, zeta) / (|xi|^2 + |zeta|^2)^((p-2)/2) over sampled pairs."""
    check_positive_int(trials, "trials")
    X, Y = sample_pairs(trials, n, seed)
    Fp = _chunked(lambda x, y: np.atleast_1d(kernel_Fp(p, x, y, quad_points)), X, Y)
    base = (np.sum(X * X, -1) + np.sum(Y * Y, -1)) ** ((p - 2.0) / 2.0)
    ratio = Fp / base
    return {"samples": int(ratio.size), "min_ratio": float(ratio.min()),
            "max_ratio": float(ratio.max())}


def verify_convexity_gap(nf, trials=10_000, n=2, seed=0, rtol=1e-9):
    """Slack of A(|X|) >= A(|Y|) + <Theta(Y), X - Y> over sampled pairs."""
    check_positive_int(trials, "trials")
    X, Y = sample_pairs(trials, n, seed)
    AX = nf.A(_norm(X))
    slack = AX - nf.A(_norm(Y)) - np.sum(_theta(nf, Y) * (X - Y), axis=-1)
    bad = slack < -rtol * (1.0 + AX)
    return {
        "samples": int(slack.size),
        "min_slack": float(slack.min()),
        "violations": [(X[i].tolist(), Y[i].tolist()) for i in np.flatnonzero(bad)],
    }


def delta_split_constants(nf, C_kernel):
    """(C3, C4) built from an upper kernel constant: C3 = (1+a1) C, C4 = (1+a1) 2**a1 C3."""
    C3 = (1.0 + nf.a1) * C_kernel
    return C3, (1.0 + nf.a1) * 2.0 ** nf.a1 * C3


def verify_delta_split(nf, delta, trials=10_000, n=2, seed=0, C_kernel=None, X=None, Y=None):
    """Envelope of the constants needed in

        |A(|X|) - A(|Y|)| <= C3 delta^-(a1(1+a1)) A(|X-Y|) + C4 delta^(a0+1) (A(|X|) + A(|Y|)).

    With C4 fixed by the formula (using the empirical kernel constant), reports the
    smallest C3 that works for every sample, and symmetrically the smallest C4
    with C3 fixed.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if C_kernel is None:
        C_kernel = verify_kernel_G_bounds(nf, trials=min(trials, 4000), n=n, seed=seed)["max_ratio"]
    C3, C4 = delta_split_constants(nf, C_kernel)
    if X is None:
        X, Y = sample_pairs(trials, n, seed)
    X, Y = np.atleast_2d(X), np.atleast_2d(Y)
    AX, AY = nf.A(_norm(X)), nf.A(_norm(Y))
    lhs = np.abs(AX - AY)
    jump = nf.A(_norm(X - Y))
    p1 = delta ** (-nf.a1 * (1.0 + nf.a1))
    p2 = delta ** (nf.a0 + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        need3 = np.where(jump > 0, (lhs - C4 * p2 * (AX + AY)) / (p1 * jump), -np.inf)
        need4 = np.where(AX + AY > 0, (lhs - C3 * p1 * jump) / (p2 * (AX + AY)), -np.inf)
    worst3 = float(np.max(np.maximum(need3, 0.0)))
    worst4 = float(np.max(np.maximum(need4, 0.0)))
    holds = lhs <= C3 * p1 * jump + C4 * p2 * (AX + AY) + 1e-12 * (1.0 + lhs)
    return {
        "samples": int(lhs.size),
        "C_kernel": float(C_kernel),
        "C3": float(C3),
        "C4": float(C4),
        "worst_C3_needed": worst3,
        "worst_C4_needed": worst4,
        "holds_with_formula": bool(holds.all()),
    }
