"""Variational solvers for div Theta(grad u) = div Theta(F).

The discrete energy

    J(u) = h^n * sum_nodes [ A(|D u|) - Theta(F) . D u ]

(D the centered-difference gradient) is convex; its gradient is h^n times the
div-form residual r(u) = -div(Theta(D u) - Theta(F)). It is minimized with
Polak-Ribiere+ nonlinear conjugate gradients, preconditioned by the inverse
constant-coefficient Laplacian, with a secant line search on the directional
derivative guarded by Armijo backtracking.
"""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import factorized
from sklearn.base import BaseEstimator, TransformerMixin

from .field import Grid, ScalarField, VectorField, ball_mask, div_periodic, grad_periodic
from .nfunction import from_spec

__all__ = [
    "SolverConfig", "SolverReport", "solve_periodic", "solve_dirichlet_ball",
    "energy", "residual", "closed_ball_rows", "ALaplaceSolver", "write_trace",
    "poisson_periodic",
]


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the nonlinear CG solver.

    ``residual_tol=None`` picks 1e-8 for the linear (p = 2) case and 1e-6 otherwise.
    ``regularization_eps=None`` means 1e-8 times the data scale; 0 disables the
    regularized first stage.
    """

    max_iters: int = 3000
    residual_tol: Optional[float] = None
    regularization_eps: Optional[float] = None
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    init: str = "spectral"
    restart_every: int = 100
    max_backtracks: int = 40

    def __post_init__(self):
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if not 0 < self.sufficient_decrease < 1:
            raise ValueError("sufficient_decrease must lie in (0, 1)")
        if self.init not in ("spectral", "zero"):
            raise ValueError("init must be 'spectral' or 'zero'")

    def tol_for(self, nf):
        if self.residual_tol is not None:
            return self.residual_tol
        return 1e-8 if _is_linear(nf) else 1e-6


@dataclass(frozen=True)
class SolverReport:
    u: ScalarField
    residual_norm: float
    energy_trace: tuple
    iters: int
    converged: bool
    residual_trace: tuple = ()
    stage_starts: tuple = (0,)

    @property
    def grad(self):
        return VectorField(self.u.grid, grad_periodic(self.u.values, self.u.grid.h))


def _is_linear(nf):
    return nf.declared == (1.0, 1.0)


def _flux(nf, G, eps):
    """Theta_eps(G) for component-first arrays; eps > 0 uses sqrt(|G|^2 + eps^2)."""
    r2 = np.sum(G * G, axis=0)
    rho = np.sqrt(r2 + eps * eps)
    big = rho > 0
    safe = np.where(big, rho, 1.0)
    return np.where(big, nf.a(safe) / safe, 0.0) * G


def _A_of(nf, G, eps):
    rho = np.sqrt(np.sum(G * G, axis=0) + eps * eps)
    out = nf.A(rho)
    if eps > 0:
        out = out - nf.A(np.array(eps))
    return out


class _Problem:
    """Shared pieces: unknown x, rows of D x weighted by ``w``, flux data ``ThF``."""

    nf = None
    vol = 1.0
    w = 1.0
    ThF = 0.0

    def energy(self, x, eps):
        G = self.D(x)
        dens = _A_of(self.nf, G, eps) - np.sum(self.ThF * G, axis=0)
        return float(self.vol * np.sum(self.w * dens))

    def residual(self, x, eps):
        G = self.D(x)
        return self.DT(self.w * (_flux(self.nf, G, eps) - self.ThF))

    def slope(self, x, d, eps):
        """alpha -> d/dalpha J(x + alpha d)."""
        G0, Gd = self.D(x), self.D(d)
        wGd = self.w * Gd

        def dphi(alpha):
            return float(self.vol * np.sum((_flux(self.nf, G0 + alpha * Gd, eps) - self.ThF) * wGd))

        return dphi


class _Periodic(_Problem):
    def __init__(self, nf, F, scale):
        g = F.grid
        self.nf, self.grid, self.h = nf, g, g.h
        self.vol = g.cell_volume
        self.F = F.values
        self.ThF = _flux(nf, F.values, 0.0)
        k = [2 * np.pi * np.fft.fftfreq(s) for s in g.shape[:-1]] + [2 * np.pi * np.fft.rfftfreq(g.shape[-1])]
        mesh = np.meshgrid(*k, indexing="ij")
        lam = sum(np.sin(m) ** 2 for m in mesh) / g.h ** 2
        self.keep = lam > 1e-12 * lam.max()
        self.inv = np.where(self.keep, 1.0 / np.where(self.keep, lam, 1.0), 0.0)
        self.c = nf.a(scale) / scale
        self.axes = tuple(range(g.n))

    def D(self, x):
        return grad_periodic(x, self.h)

    def DT(self, W):
        return -div_periodic(W, self.h)

    def precondition(self, r):
        shape = self.grid.shape
        return np.fft.irfftn(np.fft.rfftn(r) * self.inv, s=shape, axes=self.axes) / self.c

    def project(self, x):
        shape = self.grid.shape
        return np.fft.irfftn(np.fft.rfftn(x) * self.keep, s=shape, axes=self.axes)

    def initial(self, how):
        if how == "zero":
            return np.zeros(self.grid.shape)
        # p = 2 problem with the same data: D^T D u = D^T F
        return self.project(np.fft.irfftn(np.fft.rfftn(self.DT(self.F)) * self.inv, s=self.grid.shape, axes=self.axes))


def poisson_periodic(F):
    """Spectral solve of div grad u = div F with the centered-difference symbol (mean zero)."""
    prob = _Periodic(from_spec({"family": "power", "p": 2}), F, 1.0)
    return ScalarField(F.grid, prob.initial("spectral"))


def closed_ball_rows(grid, center, radius):
    """(interior mask, row mask): the ball nodes and the ball plus its centered-stencil neighbours."""
    inner = ball_mask(grid, center, radius, periodic=True)
    rows = inner.copy()
    for k in range(grid.n):
        rows |= np.roll(inner, 1, k) | np.roll(inner, -1, k)
    return inner, rows


class _Ball(_Problem):
    def __init__(self, nf, boundary, center, radius, scale):
        g = boundary.grid
        self.nf, self.grid, self.h = nf, g, g.h
        self.vol = g.cell_volume
        self.inner, rows = closed_ball_rows(g, center, radius)
        self.w = rows.astype(float)
        self.base = np.array(boundary.values)
        self.idx = np.flatnonzero(self.inner.ravel())
        self.c = nf.a(scale) / scale
        self.L = self._stiffness(rows)
        self.solve_L = factorized(self.L.tocsc())

    def _stiffness(self, rows):
        N = self.grid.size
        shape = self.grid.shape
        lin = np.arange(N).reshape(shape)
        rsel = np.flatnonzero(rows.ravel())
        L = None
        for k in range(self.grid.n):
            plus = np.roll(lin, -1, k).ravel()
            minus = np.roll(lin, 1, k).ravel()
            Dk = sparse.csr_matrix(
                (np.concatenate([np.full(N, 0.5), np.full(N, -0.5)]) / self.h,
                 (np.concatenate([np.arange(N)] * 2), np.concatenate([plus, minus]))),
                shape=(N, N))
            block = Dk[rsel][:, self.idx]
            L = block.T @ block if L is None else L + block.T @ block
        return L

    def full(self, x):
        out = self.base.copy().ravel()
        out[self.idx] = x
        return out.reshape(self.grid.shape)

    def D(self, x):
        return grad_periodic(self.full(x), self.h)

    def slope(self, x, d, eps):
        G0 = self.D(x)
        dd = np.zeros(self.grid.size)
        dd[self.idx] = d
        Gd = grad_periodic(dd.reshape(self.grid.shape), self.h)
        wGd = self.w * Gd

        def dphi(alpha):
            return float(self.vol * np.sum(_flux(self.nf, G0 + alpha * Gd, eps) * wGd))

        return dphi

    def DT(self, W):
        return (-div_periodic(W, self.h)).ravel()[self.idx]

    def precondition(self, r):
        return self.solve_L(r) / self.c

    def project(self, x):
        return x

    def initial(self, how):
        if how == "zero":
            return self.base.ravel()[self.idx].copy()
        # harmonic (p = 2) replacement with the same boundary values
        zero_inside = self.base.copy().ravel()
        zero_inside[self.idx] = 0.0
        G = grad_periodic(zero_inside.reshape(self.grid.shape), self.h)
        rhs = -self.DT(self.w * G)
        return self.solve_L(rhs)


def _line_search(prob, x, d, g_dot_d, J0, eps, cfg, alpha0):
    """Secant search for dphi = 0 on a convex slice, then Armijo backtracking."""
    dphi = prob.slope(x, d, eps)
    lo, dlo = 0.0, g_dot_d
    hi = alpha0
    dhi = dphi(hi)
    grow = 0
    while dhi < 0 and grow < 60:
        lo, dlo = hi, dhi
        hi *= 2.0
        dhi = dphi(hi)
        grow += 1
    if not np.isfinite(dhi):
        raise FloatingPointError("non-finite slope in line search")
    alpha = hi
    if dhi > 0:
        side = 0
        for _ in range(40):
            # Illinois-modified regula falsi
            alpha = (lo * dhi - hi * dlo) / (dhi - dlo)
            da = dphi(alpha)
            if not np.isfinite(da):
                raise FloatingPointError("non-finite slope in line search")
            if abs(da) <= 0.05 * abs(g_dot_d):
                break
            if da < 0:
                lo, dlo = alpha, da
                if side == -1:
                    dhi *= 0.5
                side = -1
            else:
                hi, dhi = alpha, da
                if side == 1:
                    dlo *= 0.5
                side = 1
    slack = 1e-14 * max(1.0, abs(J0))
    for _ in range(cfg.max_backtracks):
        J = prob.energy(x + alpha * d, eps)
        if not np.isfinite(J):
            raise FloatingPointError("non-finite energy in line search")
        if J <= J0 + cfg.sufficient_decrease * alpha * g_dot_d + slack:
            return alpha, J
        alpha *= cfg.shrink
    return None, J0


def _ncg(prob, x, eps, tol_abs, cfg, energies, residuals, it0):
    x = prob.project(x)
    r = prob.residual(x, eps)
    z = prob.precondition(r)
    d = -z
    rz = float(np.vdot(r, z))
    J = prob.energy(x, eps)
    energies.append(J)
    rn = float(np.linalg.norm(r))
    residuals.append(rn)
    alpha0 = 1.0
    it = it0
    while rn > tol_abs and it < cfg.max_iters:
        g_dot_d = prob.vol * float(np.vdot(r, d))
        if g_dot_d >= 0:
            d = -z
            g_dot_d = prob.vol * float(np.vdot(r, d))
        alpha, J_new = _line_search(prob, x, d, g_dot_d, J, eps, cfg, alpha0)
        if alpha is None:
            break
        x = prob.project(x + alpha * d)
        J = J_new
        alpha0 = alpha
        r_new = prob.residual(x, eps)
        z_new = prob.precondition(r_new)
        rz_new = float(np.vdot(r_new, z_new))
        beta = max(0.0, (rz_new - float(np.vdot(r_new, z))) / rz) if rz > 0 else 0.0
        it += 1
        if it % cfg.restart_every == 0:
            beta = 0.0
        d = -z_new + beta * d
        r, z, rz = r_new, z_new, rz_new
        rn = float(np.linalg.norm(r))
        energies.append(J)
        residuals.append(rn)
    return x, rn, it


def _run(prob, x0, ref, scale, cfg, tol):
    eps = cfg.regularization_eps
    if eps is None:
        eps = 1e-8 * scale
    tol_abs = tol * ref
    energies, residuals, starts = [], [], []
    x, it = x0, 0
    if eps > 0:
        starts.append(0)
        x, _, it = _ncg(prob, x, eps, tol_abs, cfg, energies, residuals, it)
    starts.append(len(energies))
    x, rn, it = _ncg(prob, x, 0.0, tol_abs, cfg, energies, residuals, it)
    return x, rn, it, energies, residuals, starts


def _data_scale(mag):
    peak = float(mag.max()) if mag.size else 0.0
    if peak == 0:
        return 1.0
    sel = mag > 0.1 * peak
    return float(np.sqrt(np.mean(mag[sel] ** 2)))


def solve_periodic(nf, F, cfg=None, u0=None):
    """Minimize J over periodic grid functions with mean zero.

    Converged means ||r(u)||_2 <= tol * ||div Theta(F)||_2 (absolute ``tol`` when
    F = 0). Non-convergence is reported, not raised.
    """
    cfg = cfg or SolverConfig()
    nf = from_spec(nf)
    if F.grid.topology != "periodic":
        raise ValueError("solve_periodic needs a periodic grid")
    scale = _data_scale(F.magnitude())
    prob = _Periodic(nf, F, scale)
    ref = float(np.linalg.norm(div_periodic(prob.ThF, F.grid.h)))
    if ref == 0:
        ref = 1.0
    x0 = prob.initial(cfg.init) if u0 is None else np.asarray(u0, dtype=float)
    tol = cfg.tol_for(nf)
    x, rn, it, energies, residuals, starts = _run(prob, x0, ref, scale, cfg, tol)
    return SolverReport(ScalarField(F.grid, x), rn / ref, tuple(energies), it,
                        bool(rn <= tol * ref), tuple(r / ref for r in residuals), tuple(starts))


def solve_dirichlet_ball(nf, boundary_data, ball, cfg=None):
    """A-harmonic replacement inside ``ball`` with values pinned outside it.

    ``ball`` is a :class:`Grid` with ball topology on the same nodes as
    ``boundary_data`` (whose values outside the ball act as Dirichlet data and
    are wrapped periodically). The energy runs over the ball nodes and their
    centered-stencil neighbours, which makes affine data an exact solution.
    """
    cfg = cfg or SolverConfig()
    nf = from_spec(nf)
    g = boundary_data.grid
    if ball.shape != g.shape or ball.h != g.h or ball.topology != "ball":
        raise ValueError("ball must be a ball-topology grid on the boundary data's nodes")
    G = grad_periodic(boundary_data.values, g.h)
    inner, rows = closed_ball_rows(g, ball.center, ball.radius)
    scale = _data_scale(np.sqrt(np.sum(G * G, axis=0))[rows])
    prob = _Ball(nf, boundary_data, ball.center, ball.radius, scale)
    flux = _flux(nf, G, 0.0) * prob.w
    ref = float(np.linalg.norm(flux[:, rows])) / g.h
    if ref == 0:
        ref = 1.0
    tol = cfg.tol_for(nf)
    x, rn, it, energies, residuals, starts = _run(prob, prob.initial(cfg.init), ref, scale, cfg, tol)
    return SolverReport(ScalarField(g, prob.full(x)), rn / ref, tuple(energies), it,
                        bool(rn <= tol * ref), tuple(r / ref for r in residuals), tuple(starts))


def energy(nf, u, F):
    """J(u) = h^n sum [A(|D u|) - Theta(F) . D u] on a periodic grid."""
    nf = from_spec(nf)
    G = grad_periodic(u.values, u.grid.h)
    dens = nf.A(np.sqrt(np.sum(G * G, axis=0))) - np.sum(_flux(nf, F.values, 0.0) * G, axis=0)
    return float(u.grid.cell_volume * np.sum(dens))


def residual(nf, u, F):
    """r(u) = -div(Theta(D u) - Theta(F)); the energy gradient is h^n r(u)."""
    nf = from_spec(nf)
    G = grad_periodic(u.values, u.grid.h)
    return ScalarField(u.grid, -div_periodic(_flux(nf, G, 0.0) - _flux(nf, F.values, 0.0), u.grid.h))


def write_trace(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "energy", "residual"])
        for i, (e, r) in enumerate(zip(report.energy_trace, report.residual_trace)):
            w.writerow([i, repr(e), repr(r)])


class ALaplaceSolver(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit(F)`` solves div Theta(grad u) = div Theta(F).

    ``F`` may be a :class:`VectorField` or an array of shape (n, *shape) on a
    periodic box of side ``length``. After fitting, ``u_`` holds the potential,
    ``grad_`` its discrete gradient and ``report_`` the full solver report;
    ``transform`` returns the gradient field for new data.
    """

    def __init__(self, nf="power:p=2", max_iters=3000, residual_tol=None,
                 regularization_eps=None, init="spectral", length=1.0):
        self.nf = nf
        self.max_iters = max_iters
        self.residual_tol = residual_tol
        self.regularization_eps = regularization_eps
        self.init = init
        self.length = length

    def _as_field(self, F):
        if isinstance(F, VectorField):
            return F
        F = np.asarray(F, dtype=float)
        if F.ndim not in (3, 4) or F.shape[0] != F.ndim - 1:
            raise ValueError("F must have shape (n, *grid_shape) with n in {2, 3}")
        return VectorField(Grid(F.shape[1:], self.length / F.shape[1]), F)

    def _config(self):
        return SolverConfig(max_iters=self.max_iters, residual_tol=self.residual_tol,
                            regularization_eps=self.regularization_eps, init=self.init)

    def fit(self, F, y=None):
        F = self._as_field(F)
        self.report_ = solve_periodic(self.nf, F, self._config())
        self.u_ = self.report_.u.values
        self.grad_ = self.report_.grad.values
        self.n_iter_ = self.report_.iters
        return self

    def transform(self, F):
        F = self._as_field(F)
        return solve_periodic(self.nf, F, self._config()).grad.values
