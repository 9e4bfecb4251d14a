import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degentaxis.dualnorm import (
    DualNormError,
    distance_to_mean,
    dual_norm,
    lattice_oracle,
    lipschitz_repair,
    max_violation,
    trajectory_variation,
)
from degentaxis.grid import integrate, make_grid


def test_zero_and_constant():
    g = make_grid(2, [5, 5], [1.0, 1.0])
    r = dual_norm(g, g.zeros())
    assert r.value == 0.0 and np.all(r.psi == 0)
    r = dual_norm(g, g.full(2.0))
    assert r.value == pytest.approx(2.0, abs=1e-14)
    np.testing.assert_allclose(r.psi, 1.0)
    r = dual_norm(g, g.full(-0.5))
    assert r.value == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("n", [64, 256])
def test_sign_function(n):
    g = make_grid(1, [n], [1.0])
    (x,) = g.mesh()
    r = dual_norm(g, np.sign(x - 0.5))
    assert abs(r.value - 0.25) <= 2 * g.spacing[0]
    assert r.gap <= 1e-9


def test_oracle_examples():
    # h = 1/2 on (0, 1): psi may move by 1/2 between the cells
    g = make_grid(1, [2], [1.0])
    assert lattice_oracle(g, np.array([1.0, -1.0])) == pytest.approx(0.25, abs=1e-14)
    g = make_grid(1, [2], [2.0])
    assert lattice_oracle(g, np.array([1.0, -1.0])) == pytest.approx(1.0, abs=1e-14)
    g = make_grid(1, [3], [1.0])
    assert lattice_oracle(g, g.zeros()) == 0.0
    assert lattice_oracle(g, g.full(-3.0)) == pytest.approx(3.0)
    with pytest.raises(DualNormError):
        lattice_oracle(make_grid(1, [7], [1.0]), np.ones(7))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.floats(0.2, 3.0), st.integers(0, 10_000))
def test_matches_lattice_oracle(n, L, seed):
    g = make_grid(1, [n], [L])
    f = np.random.default_rng(seed).normal(size=n)
    exact = dual_norm(g, f).value
    lat = lattice_oracle(g, f, levels=41)
    # the lattice is a subset of the feasible set: below, by at most one spacing
    resolution = (2.0 / 40) * float(np.sum(np.abs(f))) * g.cell_volume
    assert lat <= exact + 1e-12
    assert exact - lat <= resolution + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2), st.integers(0, 100_000))
def test_norm_axioms(dim, seed):
    rng = np.random.default_rng(seed)
    g = make_grid(dim, [int(rng.integers(3, 12))] * dim, [1.0] * dim)
    f = rng.normal(size=g.shape)
    f2 = rng.normal(size=g.shape)
    c = float(rng.uniform(-3, 3))
    a = dual_norm(g, f)
    tol = 1e-6 * integrate(g, np.abs(f)) + 1e-12
    assert dual_norm(g, c * f).value == pytest.approx(abs(c) * a.value, abs=3 * tol)
    b = dual_norm(g, f2)
    assert dual_norm(g, f + f2).value <= a.value + b.value + tol + 1e-6 * integrate(g, np.abs(f2))
    assert a.value <= integrate(g, np.abs(f)) + tol
    assert a.value >= abs(integrate(g, f)) - tol
    assert max_violation(g, a.psi) <= 1e-12
    assert a.gap <= 1e-6 * integrate(g, np.abs(f)) + 1e-12


def test_pdhg_agrees_with_simplex():
    rng = np.random.default_rng(9)
    g = make_grid(2, [16, 16], [1.0, 1.0])
    f = rng.normal(size=g.shape)
    a = dual_norm(g, f, method="simplex")
    b = dual_norm(g, f, method="pdhg")
    l1 = integrate(g, np.abs(f))
    assert b.gap <= 1e-6 * l1 * 1.01
    assert abs(a.value - b.value) <= 2e-6 * l1
    assert max_violation(g, b.psi) <= 1e-12


def test_lipschitz_repair_feasible():
    rng = np.random.default_rng(1)
    g = make_grid(2, [9, 6], [1.0, 0.7])
    psi = rng.uniform(-2, 2, g.shape)
    r = lipschitz_repair(g, psi)
    assert max_violation(g, r) <= 1e-12


def test_trajectory_variation():
    g = make_grid(1, [16], [1.0])
    rng = np.random.default_rng(0)
    u = rng.uniform(size=16)
    assert trajectory_variation(g, [u, u, u]) == 0.0
    w = rng.uniform(size=16)
    assert trajectory_variation(g, [u, w]) == dual_norm(g, w - u).value
    snaps = [u + 0.1 * k * np.sin(k + np.arange(16)) for k in range(9)]
    fine = trajectory_variation(g, snaps)
    coarse = trajectory_variation(g, snaps[::2])
    assert coarse <= fine + 1e-8
    with pytest.raises(DualNormError):
        trajectory_variation(g, [u])
    with pytest.raises(DualNormError):
        trajectory_variation(g, [u, np.ones(8)])


def test_distance_to_mean_of_constant():
    g = make_grid(2, [4, 4], [1.0, 1.0])
    assert distance_to_mean(g, g.full(3.3)) <= 1e-15


def test_rejects_nonfinite():
    g = make_grid(1, [4], [1.0])
    with pytest.raises(DualNormError):
        dual_norm(g, np.array([1.0, np.inf, 0.0, 0.0]))
