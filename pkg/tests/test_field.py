import struct

import numpy as np
import pytest

from alaplace import DomainError, power
from alaplace.field import (Grid, ScalarField, VectorField, ball_average, ball_mask, divergence,
                            export_csv_slice, gradient, laplacian, modular, read_olf, write_olf)

from oracles import fsum_modular


def periodic(N, n=2, L=1.0):
    return Grid.periodic(N, n, L)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((3, 8), 0.1)
    with pytest.raises(ValueError):
        Grid((8,), 0.1)
    with pytest.raises(ValueError):
        Grid((8, 8), 0.0)
    with pytest.raises(ValueError):
        Grid((16, 16), 0.1, "ball", (0.8, 0.8), 0.3)
    with pytest.raises(ValueError):
        Grid((16, 16), 0.1, "torus")


def test_fields_are_immutable_and_checked():
    g = periodic(8)
    f = ScalarField(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros((8, 9)))
    with pytest.raises(DomainError):
        ScalarField(g, np.full(g.shape, np.nan))
    with pytest.raises(ValueError):
        VectorField(g, np.zeros((3, 8, 8)))


def test_gradient_of_constant_is_zero():
    for g in (periodic(16), periodic(8, n=3)):
        G = gradient(ScalarField(g, np.full(g.shape, 5.0)))
        assert not G.values.any()


def test_gradient_second_order_on_sine():
    errs = []
    for N in (32, 64, 128):
        g = periodic(N, L=2.0)
        x = g.coords()
        u = ScalarField(g, np.sin(2 * np.pi * x[0] / 2.0))
        G = gradient(u)
        exact = (np.pi) * np.cos(np.pi * x[0])
        errs.append(np.abs(G.values[0] - exact).max())
        assert np.abs(G.values[1]).max() < 1e-12
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_linear_on_ball_grid_is_exact():
    g = periodic(32).ball((0.5, 0.5), 0.3)
    x = g.coords()
    c = np.array([1.5, -0.7])
    G = gradient(ScalarField(g, c[0] * x[0] + c[1] * x[1]))
    m = g.mask
    np.testing.assert_allclose(G.values[0][m], c[0], rtol=1e-12)
    np.testing.assert_allclose(G.values[1][m], c[1], rtol=1e-12)
    assert not G.values[:, ~m].any()


@pytest.mark.parametrize("n", [2, 3])
def test_divergence_adjoint_periodic(n):
    rng = np.random.default_rng(n)
    g = periodic(12, n=n)
    u = ScalarField(g, rng.normal(size=g.shape))
    V = VectorField(g, rng.normal(size=(n,) + g.shape))
    lhs = np.sum(divergence(V).values * u.values)
    rhs = -np.sum(V.values * gradient(u).values)
    assert abs(lhs - rhs) <= 1e-12 * np.sqrt(np.sum(V.values ** 2) * np.sum(u.values ** 2))


def test_divergence_adjoint_ball():
    rng = np.random.default_rng(5)
    g = periodic(24).ball((0.5, 0.5), 0.35)
    m = g.mask
    u = ScalarField(g, rng.normal(size=g.shape) * m)
    V = VectorField(g, rng.normal(size=(2,) + g.shape) * m)
    lhs = np.sum(divergence(V).values * u.values)
    rhs = -np.sum(V.values * gradient(u).values)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_divergence_of_constant_is_zero():
    g = periodic(16)
    assert not divergence(VectorField(g, np.ones((2,) + g.shape))).values.any()


def test_laplacian_matches_analytic_second_order():
    errs = []
    for N in (32, 64, 128):
        g = periodic(N)
        x = g.coords()
        u = np.sin(2 * np.pi * x[0]) * np.cos(4 * np.pi * x[1])
        exact = -(4 + 16) * np.pi ** 2 * u
        errs.append(np.abs(laplacian(ScalarField(g, u)).values - exact).max() / np.abs(exact).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_ball_average_examples():
    g = periodic(32)
    x = g.coords()
    assert ball_average(ScalarField(g, np.full(g.shape, 2.5)), (0.5, 0.5), 0.2) == pytest.approx(2.5)
    # node-centered symmetric ball: the odd part cancels exactly
    lin = ScalarField(g, 3 * x[0] - x[1])
    assert ball_average(lin, (0.5, 0.5), 0.2) == pytest.approx(3 * 0.5 - 0.5, rel=1e-13)
    V = VectorField(g, np.stack([np.ones(g.shape), 2 * np.ones(g.shape)]))
    np.testing.assert_allclose(ball_average(V, (0.5, 0.5), 0.1), [1.0, 2.0])
    with pytest.raises(DomainError):
        ball_average(lin, (0.5, 0.5), 0.5)
    with pytest.raises(DomainError):
        ball_average(lin, (0.51, 0.51), 0.001)


def test_ball_average_matches_monte_carlo():
    g = periodic(64)
    x = g.coords()

    def bump(a, b):
        return np.exp(-((a - 0.45) ** 2 + (b - 0.55) ** 2) / 0.02)

    f = ScalarField(g, bump(x[0], x[1]))
    rng = np.random.default_rng(0)
    c, r = np.array([0.5, 0.5]), 0.2
    rad = r * np.sqrt(rng.uniform(size=10 ** 6))
    ang = rng.uniform(0, 2 * np.pi, 10 ** 6)
    mc = bump(c[0] + rad * np.cos(ang), c[1] + rad * np.sin(ang)).mean()
    lip = np.sqrt(2 / np.e) / np.sqrt(0.02)  # max |grad| of the bump
    assert abs(ball_average(f, c, r) - mc) <= 2 * g.h * lip


def test_ball_mask_periodic_wraps():
    g = periodic(16)
    m = ball_mask(g, (0.0, 0.0), 0.15)
    assert m[0, 0] and m[-1, 0] and m[0, -1] and m[-2, 0]
    assert not ball_mask(g, (0.0, 0.0), 0.15, periodic=False)[-1, 0]


def test_modular_examples():
    g = periodic(8)
    nf = power(2)
    assert modular(nf, VectorField(g, np.zeros((2,) + g.shape))) == 0.0
    V = np.zeros((2,) + g.shape)
    V[0, :3, :2] = 1.0
    assert modular(nf, VectorField(g, V)) == pytest.approx(g.h ** 2 * 6 / 2, rel=1e-15)


@pytest.mark.parametrize("spec_p", [1.5, 2.0, 3.0])
def test_modular_matches_compensated_sum(spec_p):
    rng = np.random.default_rng(3)
    g = periodic(32)
    V = rng.normal(size=(2,) + g.shape) * 10 ** rng.uniform(-3, 2, size=g.shape)
    nf = power(spec_p)
    assert modular(nf, VectorField(g, V)) == pytest.approx(fsum_modular(nf, V, g.h), rel=1e-12)


def test_discrete_jensen():
    rng = np.random.default_rng(11)
    g = periodic(32)
    nf = power(3)
    for _ in range(20):
        V = VectorField(g, rng.normal(size=(2,) + g.shape))
        c, r = rng.uniform(0.2, 0.8, 2), rng.uniform(0.05, 0.3)
        mean = ball_average(V, c, r)
        AV = ScalarField(g, nf.A(V.magnitude()))
        assert nf.A(np.linalg.norm(mean)) <= ball_average(AV, c, r) * (1 + 1e-12)


def test_refinement_order_of_modular_and_average():
    nf = power(3)
    Ns = np.array([32, 48, 64, 96, 128, 192, 256])
    vals, avgs = [], []
    for N in Ns:
        g = periodic(int(N))
        x = g.coords()
        s = np.exp(-((x[0] - 0.5) ** 2 + (x[1] - 0.5) ** 2) / 0.01)
        vals.append(modular(nf, ScalarField(g, s)))
        avgs.append(ball_average(ScalarField(g, s), (0.5, 0.5), 0.2))
    # int A(e^{-r^2/w}) = int e^{-3 r^2/w}/3 = pi w / 9 for w = 0.01
    ref_mod = np.pi * 0.01 / 9
    # mean over the disk of radius 0.2: (w / r^2)(1 - e^{-r^2/w})
    ref_avg = 0.01 / 0.04 * (1 - np.exp(-4.0))
    e_mod = np.abs(np.array(vals) - ref_mod)
    e_avg = np.abs(np.array(avgs) - ref_avg)
    assert np.all(e_mod * Ns <= e_mod[0] * Ns[0] + 1e-12)
    # node counts in the disk fluctuate with h, so the average converges inside
    # an O(h) envelope rather than monotonically
    assert np.all(e_avg * Ns <= 0.25)
    assert e_avg[-1] < e_avg[0]


def test_olf_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    for shape, h in (((8, 12), 0.125), ((4, 5, 6), 0.3)):
        g = Grid(shape, h)
        f = ScalarField(g, rng.normal(size=shape))
        p = tmp_path / "f.olf"
        write_olf(p, f)
        data = p.read_bytes()
        assert data[:4] == b"OLF1"
        assert struct.unpack_from("<I", data, 4)[0] == len(shape)
        assert len(data) == 4 + 4 + 4 * len(shape) + 8 + 8 * f.values.size
        back = read_olf(p)
        assert back.grid.shape == shape and back.grid.h == h
        np.testing.assert_array_equal(back.values, f.values)


def test_olf_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.olf"
    p.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError):
        read_olf(p)
    g = Grid((4, 4), 1.0)
    write_olf(p, ScalarField(g, np.zeros((4, 4))))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_olf(p)


def test_csv_slice(tmp_path):
    g = Grid((4, 5), 0.5)
    f = ScalarField(g, np.arange(20.0).reshape(4, 5))
    p = tmp_path / "s.csv"
    export_csv_slice(p, f)
    lines = p.read_text().splitlines()
    assert lines[0] == "i,j,x,y,value"
    assert len(lines) == 21
    assert lines[7] == "1,1,0.5,0.5,6.0"
