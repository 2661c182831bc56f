"""Independent reference implementations used only by the tests."""

import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve


def naive_ball_offsets(h, r):
    m = int(math.floor(r / h * (1 + 1e-12)))
    out = []
    for di in range(-m, m + 1):
        for dj in range(-m, m + 1):
            if (di * h) ** 2 + (dj * h) ** 2 <= r * r * (1 + 1e-12):
                out.append((di, dj))
    return out


def naive_maximal(values, h, radii):
    """Triple loop over nodes, radii and ball offsets (2D, periodic)."""
    N0, N1 = values.shape
    out = np.zeros(values.shape)
    offsets = [naive_ball_offsets(h, r) for r in radii]
    for i in range(N0):
        for j in range(N1):
            best = None
            for offs in offsets:
                s = 0.0
                for di, dj in offs:
                    s += abs(values[(i + di) % N0, (j + dj) % N1])
                mean = s / len(offs)
                best = mean if best is None else max(best, mean)
            out[i, j] = best
    return out


def naive_sharp(values, h, radii):
    N0, N1 = values.shape
    out = np.zeros(values.shape)
    offsets = [naive_ball_offsets(h, r) for r in radii]
    for i in range(N0):
        for j in range(N1):
            best = None
            for offs in offsets:
                s = 0.0
                for di, dj in offs:
                    s += values[(i + di) % N0, (j + dj) % N1]
                mean = s / len(offs)
                t = 0.0
                for di, dj in offs:
                    t += abs(values[(i + di) % N0, (j + dj) % N1] - mean)
                osc = t / len(offs)
                best = osc if best is None else max(best, osc)
            out[i, j] = best
    return out


def fft_poisson(F, h):
    """u with D^T D u = D^T F for the centered difference D, null modes set to 0.

    Uses the full complex FFT and the symbol i sin(k)/h of the centered
    difference, independent of the package's real-FFT path.
    """
    shape = F.shape[1:]
    ks = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(s) for s in shape], indexing="ij")
    sym = [1j * np.sin(k) / h for k in ks]
    den = sum(np.abs(s) ** 2 for s in sym)
    num = sum(np.conj(s) * np.fft.fftn(F[c]) for c, s in enumerate(sym))
    ok = den > 1e-9 * den.max()
    uhat = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    return np.real(np.fft.ifftn(uhat))


def _centered_1d(N, h):
    e = np.ones(N)
    D = sparse.diags([0.5 * e[:-1], -0.5 * e[:-1]], [1, -1], shape=(N, N)).tolil()
    D[N - 1, 0] = 0.5
    D[0, N - 1] = -0.5
    return D.tocsr() / h


def dirichlet_harmonic(values, h, inner, rows):
    """Minimize sum over ``rows`` of |D v|^2 / 2 with v fixed off ``inner`` (2D)."""
    N0, N1 = values.shape
    D0 = sparse.kron(_centered_1d(N0, h), sparse.identity(N1), format="csr")
    D1 = sparse.kron(sparse.identity(N0), _centered_1d(N1, h), format="csr")
    r = np.flatnonzero(rows.ravel())
    free = np.flatnonzero(inner.ravel())
    fixed = np.flatnonzero(~inner.ravel())
    x = values.ravel().copy()
    K = None
    rhs = 0.0
    for D in (D0, D1):
        Dr = D[r]
        Df, Dx = Dr[:, free], Dr[:, fixed]
        K = Df.T @ Df if K is None else K + Df.T @ Df
        rhs = rhs - Df.T @ (Dx @ x[fixed])
    x[free] = spsolve(K.tocsc(), rhs)
    return x.reshape(values.shape)


def legendre_conjugate(nf, s):
    """Young conjugate evaluated at a(s) through s a(s) - A(s)."""
    return s * nf.a(s) - nf.A(s)


def fsum_modular(nf, V, h):
    mag = np.sqrt(np.sum(np.asarray(V) ** 2, axis=0)).ravel()
    return h ** V.shape[0] * math.fsum(float(nf.A(np.array(m))) for m in mag)


def closed_form_G_p3_orthogonal():
    """int_0^1 sqrt(t^2 + (1 - t)^2) dt."""
    return 0.5 + math.sqrt(2) / 4 * math.asinh(1.0)
