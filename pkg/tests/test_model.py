import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degentaxis.grid import integrate, make_grid
from degentaxis.model import (
    ModelError,
    Params,
    RegimeError,
    State,
    diffusive_flux,
    regime_exponents,
    rhs_u,
    taxis_flux,
    v_implicit_operator,
)


def state(u, v, L=None):
    u = np.asarray(u, float)
    n = u.shape
    g = make_grid(len(n), list(n), L or [1.0] * len(n))
    return State(g, u, np.asarray(v, float))


def random_state(seed, dim=2):
    rng = np.random.default_rng(seed)
    cells = list(rng.integers(2, 9, size=dim))
    g = make_grid(dim, cells, [1.0] * dim)
    return State(g, rng.uniform(0, 2, size=g.shape), rng.uniform(0.1, 2, size=g.shape))


@pytest.mark.parametrize(
    "kw",
    [dict(chi=0), dict(ell=-1), dict(alpha=0), dict(eps=1.0), dict(safety=0), dict(safety=1.5), dict(clip_policy="x"), dict(mobility="geo")],
)
def test_params_validation(kw):
    with pytest.raises(ModelError):
        Params(**kw)


def test_certified_regime_flag():
    assert Params(alpha=1.55).certified_regime
    assert not Params(alpha=1.5).certified_regime
    assert not Params(alpha=19 / 12).certified_regime
    assert not Params(alpha=2.0).certified_regime


def test_diffusive_flux_examples():
    s = state([1.0, 2.0], [1.0, 1.0], [1.0])
    (f,) = diffusive_flux(s, Params())
    assert f.tolist() == [3.0]
    s = state([3.0, 3.0, 3.0], [1.0, 2.0, 5.0])
    assert np.all(diffusive_flux(s, Params())[0] == 0)
    s = state([1.0, 4.0, 2.0], [0.0, 0.0, 0.0])
    assert np.all(diffusive_flux(s, Params())[0] == 0)


def test_taxis_flux_examples():
    s = state([2.0, 1.0], [1.0, 1.2], [0.2])
    (f,) = taxis_flux(s, Params(chi=1.0, alpha=1.5))
    assert f[0] == pytest.approx(2**1.5 * 1.1 * 2.0, rel=1e-12)
    assert f[0] == pytest.approx(6.2225, abs=1e-4)
    s = state([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
    assert np.all(taxis_flux(s, Params())[0] == 0)
    s = state([0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
    assert np.all(taxis_flux(s, Params())[0] == 0)


def test_taxis_upwind_follows_drift_sign():
    s = state([2.0, 1.0], [1.2, 1.0], [0.2])
    (f,) = taxis_flux(s, Params(alpha=1.5))
    # drift negative: the right cell (u = 1) is upwind
    assert f[0] == pytest.approx(1.0 * 1.1 * -2.0, rel=1e-12)


def test_taxis_rejects_negative_u():
    with pytest.raises(ModelError):
        taxis_flux(state([-1.0, 1.0], [1.0, 2.0]), Params())


def test_taxis_flux_linear_in_chi():
    s = random_state(5)
    a = taxis_flux(s, Params(chi=1.3))
    b = taxis_flux(s, Params(chi=2.6))
    for x, y in zip(a, b):
        assert np.array_equal(2 * x, y)


def test_rhs_constant_state():
    g = make_grid(2, [4, 4], [1.0, 1.0])
    s = State(g, g.full(1.5), g.full(0.7))
    np.testing.assert_allclose(rhs_u(s, Params(ell=2.0)), 2.0 * 1.5 * 0.7, rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 3), st.sampled_from(["product", "half-square"]), st.sampled_from(["arithmetic", "harmonic"]))
def test_rhs_conservation(seed, dim, form, mob):
    s = random_state(seed, dim)
    p = Params(ell=1.7, diffusion_form=form, mobility=mob)
    c = integrate(s.grid, s.u * s.v)
    assert abs(integrate(s.grid, rhs_u(s, p)) - p.ell * c) <= 1e-13 * abs(c) * 10


def test_rhs_porous_medium_against_independent_stencil():
    # ell -> 0 is not allowed, so subtract the source; v = c constant
    n, c = 8, 0.7
    g = make_grid(1, [n], [1.0])
    u = 1.0 + np.random.default_rng(1).uniform(size=n)
    s = State(g, u, np.full(n, c))
    p = Params(ell=1.0)
    got = rhs_u(s, p) - p.ell * u * c
    h = 1.0 / n
    ref = np.zeros(n)
    for i in range(n):
        for j in (i - 1, i + 1):
            if 0 <= j < n:
                ref[i] += c * 0.5 * (u[i] + u[j]) * (u[j] - u[i]) / h**2
    np.testing.assert_allclose(got, ref, rtol=1e-12)
    # the half-square form is c * lap(u^2 / 2) exactly
    got = rhs_u(s, Params(diffusion_form="half-square")) - u * c
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_double_degeneracy_cell_isolation():
    # u = 0 in the middle cell and v = 0 on the right: no flux leaves the middle
    s = state([1.0, 0.0, 2.0], [1.0, 1.0, 0.0])
    d = diffusive_flux(s, Params(mobility="harmonic"))[0]
    assert d[0] == 0 and d[1] == 0


def test_regime_exponents():
    r = regime_exponents(1.55)
    assert r.delta == pytest.approx(1 / 30, abs=1e-15)
    assert r.p0 == pytest.approx(1.5 + 1 / 60, abs=1e-15)
    r = regime_exponents(1.51)
    assert r.delta == pytest.approx(19 / 12 - 1.51, abs=1e-15)
    assert r.p0 == pytest.approx(1.536667, abs=1e-6)
    for a in (19 / 12, 1.5, 2.0):
        with pytest.raises(RegimeError):
            regime_exponents(a)


def test_v_operator_examples():
    g = make_grid(2, [4, 3], [1.0, 1.0])
    s = State(g, g.zeros(), g.full(2.0))
    A, b = v_implicit_operator(s, 0.3)
    np.testing.assert_allclose(A @ b, b, rtol=1e-15)
    s = State(g, g.full(1.0), g.full(1.0))
    A, b = v_implicit_operator(s, 0.1)
    from scipy.sparse.linalg import spsolve

    np.testing.assert_allclose(spsolve(A.tocsc(), b), 1 / 1.1, rtol=1e-14)
    with pytest.raises(ModelError):
        v_implicit_operator(s, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 3), st.floats(1e-4, 10.0))
def test_v_operator_is_m_matrix(seed, dim, dt):
    s = random_state(seed, dim)
    A, _ = v_implicit_operator(s, dt)
    D = A.toarray()
    assert np.allclose(D, D.T, rtol=0, atol=0)
    off = D - np.diag(np.diag(D))
    assert np.all(off <= 0)
    np.testing.assert_allclose(D.sum(axis=1), 1 + dt * s.u.ravel(), rtol=1e-12)
    assert np.all(np.diag(D) >= -off.sum(axis=1))
