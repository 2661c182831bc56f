"""Uniform-grid scalar and vector fields on a periodic box or inside a ball.

Node ``i`` sits at ``x = i * h``. Periodic boxes stand in for R^n (data is kept
compactly supported in the central half); ball grids carry a node mask and are
used for Dirichlet problems.
"""

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from ._validation import DomainError

__all__ = [
    "Grid", "ScalarField", "VectorField", "gradient", "divergence", "laplacian",
    "ball_mask", "ball_average", "modular", "write_olf", "read_olf", "export_csv_slice",
]

MAGIC = b"OLF1"


@dataclass(frozen=True)
class Grid:
    """Geometry of a uniform grid.

    ``topology`` is ``"periodic"`` or ``"ball"``; ball grids also carry ``center``
    (physical coordinates) and ``radius``.
    """

    shape: tuple
    h: float
    topology: str = "periodic"
    center: tuple = None
    radius: float = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (2, 3):
            raise ValueError("grids must be 2- or 3-dimensional")
        if min(shape) < 4:
            raise ValueError("every axis needs at least 4 nodes")
        if not self.h > 0:
            raise ValueError("spacing h must be positive")
        if self.topology == "ball":
            if self.center is None or self.radius is None:
                raise ValueError("ball grids need center and radius")
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
            if self.radius < 4 * self.h:
                raise ValueError("ball radius must be at least 4h")
        elif self.topology != "periodic":
            raise ValueError(f"unknown topology {self.topology!r}")

    @classmethod
    def periodic(cls, resolution, n=2, length=1.0):
        return cls((resolution,) * n, length / resolution)

    @property
    def n(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def lengths(self):
        return tuple(s * self.h for s in self.shape)

    @property
    def cell_volume(self):
        return self.h ** self.n

    def coords(self):
        """Node coordinates, shape (n, *shape)."""
        axes = [np.arange(s) * self.h for s in self.shape]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def ball(self, center, radius):
        """Same nodes, ball topology."""
        return Grid(self.shape, self.h, "ball", tuple(center), radius)

    @cached_property
    def mask(self):
        if self.topology == "periodic":
            return np.ones(self.shape, dtype=bool)
        return ball_mask(self, self.center, self.radius, periodic=False)


def _frozen(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class VectorField:
    """Vector field with ``values`` of shape (n, *grid.shape)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n,) + self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != {(self.grid.n,) + self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def magnitude(self):
        return np.sqrt(np.sum(self.values ** 2, axis=0))


# --- periodic centered differences -------------------------------------------

def grad_periodic(u, h):
    return np.stack([(np.roll(u, -1, k) - np.roll(u, 1, k)) / (2 * h) for k in range(u.ndim)])


def div_periodic(V, h):
    # centered differences are skew-adjoint, so this is exactly -grad^T
    return sum((np.roll(V[k], -1, k) - np.roll(V[k], 1, k)) / (2 * h) for k in range(V.shape[0]))


def ball_mask(grid, center, radius, periodic=None):
    """Nodes whose centers satisfy |x - center| <= radius (minimum image if periodic)."""
    if periodic is None:
        periodic = grid.topology == "periodic"
    x = grid.coords()
    c = np.asarray(center, dtype=float).reshape((-1,) + (1,) * grid.n)
    d = x - c
    if periodic:
        L = np.asarray(grid.lengths).reshape((-1,) + (1,) * grid.n)
        d = d - L * np.round(d / L)
    return np.sum(d * d, axis=0) <= radius * radius * (1 + 1e-12)


def _ball_gradient_matrix(grid):
    """Sparse gradient on a ball grid: centered inside, one-sided next to the boundary."""
    mask = grid.mask
    idx = -np.ones(grid.shape, dtype=np.int64)
    idx[mask] = np.arange(mask.sum())
    m = int(mask.sum())
    blocks = []
    for k in range(grid.n):
        rows, cols, vals = [], [], []
        pos = np.argwhere(mask)
        for sign in (1, -1):
            nb = pos.copy()
            nb[:, k] += sign
            inside = (nb[:, k] >= 0) & (nb[:, k] < grid.shape[k])
            has = np.zeros(len(pos), dtype=bool)
            has[inside] = mask[tuple(nb[inside].T)]
            if sign == 1:
                has_p, nb_p = has, nb
            else:
                has_m, nb_m = has, nb
        me = idx[tuple(pos.T)]
        both = has_p & has_m
        only_p = has_p & ~has_m
        only_m = has_m & ~has_p
        r = np.arange(len(pos))
        for sel, entries in (
            (both, ((nb_p, 0.5), (nb_m, -0.5))),
            (only_p, ((nb_p, 1.0), (None, -1.0))),
            (only_m, ((None, 1.0), (nb_m, -1.0))),
        ):
            for where, coef in entries:
                cc = me[sel] if where is None else idx[tuple(where[sel].T)]
                rows.append(r[sel])
                cols.append(cc)
                vals.append(np.full(sel.sum(), coef / grid.h))
        blocks.append(sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)))
    return blocks


_BALL_CACHE = {}


def _ball_ops(grid):
    if grid not in _BALL_CACHE:
        _BALL_CACHE.clear()
        _BALL_CACHE[grid] = _ball_gradient_matrix(grid)
    return _BALL_CACHE[grid]


def gradient(u):
    """Second-order centered gradient; one-sided on the ring of a ball grid."""
    g = u.grid
    if g.topology == "periodic":
        return VectorField(g, grad_periodic(u.values, g.h))
    mask = g.mask
    out = np.zeros((g.n,) + g.shape)
    for k, Dk in enumerate(_ball_ops(g)):
        out[k][mask] = Dk @ u.values[mask]
    return VectorField(g, out)


def divergence(V):
    """Negative adjoint of :func:`gradient` under the nodal inner product."""
    g = V.grid
    if g.topology == "periodic":
        return ScalarField(g, div_periodic(V.values, g.h))
    mask = g.mask
    out = np.zeros(g.shape)
    out[mask] = -sum(Dk.T @ V.values[k][mask] for k, Dk in enumerate(_ball_ops(g)))
    return ScalarField(g, out)


def laplacian(u):
    return divergence(gradient(u))


def ball_average(f, x0, r):
    """Mean of node values inside the closed ball B_r(x0).

    Works for scalar fields and, componentwise, for vector fields.
    """
    g = f.grid
    if g.topology == "periodic" and 2 * r >= min(g.lengths):
        raise DomainError("periodic balls need r < L/2")
    sel = ball_mask(g, x0, r) & g.mask
    count = int(sel.sum())
    if count == 0:
        raise DomainError(f"ball of radius {r} at {x0} contains no nodes")
    if isinstance(f, VectorField):
        return f.values[:, sel].mean(axis=1)
    return float(f.values[sel].mean())


def modular(nf, V):
    """h^n * sum of A(|V|) over the nodes (of the mask, on ball grids)."""
    g = V.grid
    mag = V.magnitude() if isinstance(V, VectorField) else np.abs(V.values)
    return float(g.cell_volume * np.sum(nf.A(mag[g.mask])))


# --- I/O ---------------------------------------------------------------------

def write_olf(path, f):
    """Write a scalar field: b"OLF1", u32 n, u32 per axis, f64 h, f64 values (LE, row-major)."""
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", g.n))
        fh.write(struct.pack(f"<{g.n}I", *g.shape))
        fh.write(struct.pack("<d", g.h))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))


def read_olf(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an OLF1 file")
    (n,) = struct.unpack_from("<I", data, 4)
    shape = struct.unpack_from(f"<{n}I", data, 8)
    off = 8 + 4 * n
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    count = int(np.prod(shape))
    if len(data) - off != 8 * count:
        raise ValueError(f"{path}: expected {count} values")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
    return ScalarField(Grid(shape, h), values.astype(float))


def export_csv_slice(path, f, axis=2, index=0):
    """Write a 2D slice as CSV rows (i, j, x, y, value)."""
    g = f.grid
    vals = f.values if g.n == 2 else np.take(f.values, index, axis=axis)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", "value"])
        for (i, j), v in np.ndenumerate(vals):
            w.writerow([i, j, i * g.h, j * g.h, repr(float(v))])
