"""
The regularized nutrient-taxis system on a box:

    u_t = div(u v grad u) - chi div(u^alpha v grad v) + ell u v
    v_t = lap v - u v

with zero-flux conditions.  This module only assembles fluxes, right-hand
sides and the implicit operator for ``v``; time stepping lives in
:mod:`degentaxis.stepper`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse

from .grid import (
    FaceField,
    Grid,
    check_field,
    divergence,
    face_difference,
    face_mean,
)

CERTIFIED_ALPHA_LO = 1.5
CERTIFIED_ALPHA_HI = 19.0 / 12.0

CLIP_POLICIES = ("clip", "reject")
MOBILITY_MEANS = ("arithmetic", "harmonic")
DIFFUSION_FORMS = ("product", "half-square")


class RegimeError(ValueError):
    """Raised when alpha lies outside the window (3/2, 19/12)."""


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Params:
    """Model constants and scheme knobs.

    ``mobility`` selects the face average of ``u v`` (arithmetic default).
    ``diffusion_form="half-square"`` discretizes ``v grad(u^2)/2`` instead of
    ``u v grad u``; both agree in the continuum.
    """

    chi: float = 1.0
    ell: float = 1.0
    alpha: float = 1.55
    eps: float = 0.0
    safety: float = 0.5
    clip_policy: str = "clip"
    dt_max: float = 1e-2
    mobility: str = "arithmetic"
    diffusion_form: str = "product"
    lin_tol: float = 1e-12
    lin_maxiter: int = 1000

    def __post_init__(self):
        errs = []
        if not self.chi > 0:
            errs.append(f"chi must be > 0 (got {self.chi})")
        if not self.ell > 0:
            errs.append(f"ell must be > 0 (got {self.ell})")
        if not self.alpha > 0:
            errs.append(f"alpha must be > 0 (got {self.alpha})")
        if not 0 <= self.eps < 1:
            errs.append(f"eps must lie in [0, 1) (got {self.eps})")
        if not 0 < self.safety <= 1:
            errs.append(f"safety must lie in (0, 1] (got {self.safety})")
        if self.clip_policy not in CLIP_POLICIES:
            errs.append(f"clip_policy must be one of {CLIP_POLICIES}")
        if not self.dt_max > 0:
            errs.append(f"dt_max must be > 0 (got {self.dt_max})")
        if self.mobility not in MOBILITY_MEANS:
            errs.append(f"mobility must be one of {MOBILITY_MEANS}")
        if self.diffusion_form not in DIFFUSION_FORMS:
            errs.append(f"diffusion_form must be one of {DIFFUSION_FORMS}")
        if not self.lin_tol > 0:
            errs.append("lin_tol must be > 0")
        if errs:
            raise ModelError("; ".join(errs))

    @property
    def certified_regime(self) -> bool:
        return CERTIFIED_ALPHA_LO < self.alpha < CERTIFIED_ALPHA_HI

    def replace(self, **kw) -> "Params":
        return replace(self, **kw)


@dataclass
class State:
    grid: Grid
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self) -> "State":
        return State(self.grid, self.u.copy(), self.v.copy(), self.t)

    def validate(self, strict_v: bool = True) -> "State":
        self.u = check_field(self.grid, self.u, "u")
        self.v = check_field(self.grid, self.v, "v")
        if np.any(self.u < 0):
            raise ModelError("u must be nonnegative")
        if strict_v and np.any(self.v <= 0):
            raise ModelError("v must be strictly positive")
        if not strict_v and np.any(self.v < 0):
            raise ModelError("v must be nonnegative")
        return self


@dataclass(frozen=True)
class RegimeExponents:
    delta: float
    p0: float


def regime_exponents(alpha: float) -> RegimeExponents:
    """``delta = min{(alpha - 4/3)/2, 19/12 - alpha, 1/2}`` and ``p0 = 3/2 + delta/2``."""
    if not CERTIFIED_ALPHA_LO < alpha < CERTIFIED_ALPHA_HI:
        raise RegimeError(f"alpha = {alpha} lies outside the admissible window (3/2, 19/12)")
    delta = min(0.5 * (alpha - 4.0 / 3.0), 19.0 / 12.0 - alpha, 0.5)
    return RegimeExponents(delta=delta, p0=1.5 + 0.5 * delta)


def _finite(grid: Grid, state: State):
    u = check_field(grid, state.u, "u")
    v = check_field(grid, state.v, "v")
    return u, v


def _mean(a, b, kind: str):
    if kind == "arithmetic":
        return 0.5 * (a + b)
    s = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0, 2.0 * a * b / np.where(s > 0, s, 1.0), 0.0)
    return out


def face_mobility(state: State, params: Params) -> FaceField:
    """Face values of the diffusion coefficient multiplying ``grad u``."""
    grid = state.grid
    u, v = _finite(grid, state)
    out = []
    for ax in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        if params.diffusion_form == "product":
            uv = u * v
            out.append(_mean(uv[lo], uv[hi], params.mobility))
        else:
            out.append(face_mean(grid, v, ax) * face_mean(grid, u, ax))
    return tuple(out)


def diffusive_flux(state: State, params: Params) -> FaceField:
    """``mobility_face * (u_R - u_L) / h`` on interior faces."""
    grid = state.grid
    u, _ = _finite(grid, state)
    mob = face_mobility(state, params)
    return tuple(
        m * face_difference(grid, u, ax) / h
        for ax, (m, h) in enumerate(zip(mob, grid.spacing))
    )


def _upwind_u(grid: Grid, u: np.ndarray, ax: int, drift: np.ndarray) -> np.ndarray:
    lo = [slice(None)] * grid.dim
    hi = [slice(None)] * grid.dim
    lo[ax] = slice(None, -1)
    hi[ax] = slice(1, None)
    return np.where(drift >= 0, u[tuple(lo)], u[tuple(hi)])


def taxis_flux(state: State, params: Params) -> FaceField:
    """``chi * u_up^alpha * v_face * (v_R - v_L) / h`` with ``u`` taken upwind."""
    grid = state.grid
    u, v = _finite(grid, state)
    if np.any(u < 0):
        raise ModelError("taxis flux needs u >= 0")
    out = []
    for ax, h in enumerate(grid.spacing):
        drift = params.chi * face_mean(grid, v, ax) * face_difference(grid, v, ax) / h
        uu = _upwind_u(grid, u, ax, drift)
        out.append(uu**params.alpha * drift)
    return tuple(out)


def drift_speed(state: State, params: Params) -> FaceField:
    """``chi * u_up^(alpha-1) * v_face * |grad v|_face`` (zero where ``u_up = 0``)."""
    grid = state.grid
    u, v = _finite(grid, state)
    out = []
    for ax, h in enumerate(grid.spacing):
        drift = params.chi * face_mean(grid, v, ax) * face_difference(grid, v, ax) / h
        uu = _upwind_u(grid, u, ax, drift)
        with np.errstate(divide="ignore"):
            pw = np.where(uu > 0, uu ** (params.alpha - 1.0), 0.0)
        out.append(pw * np.abs(drift))
    return tuple(out)


def transport_divergence(state: State, params: Params) -> np.ndarray:
    """``div(diffusive - taxis)``: the conservative part of the u-equation."""
    dif = diffusive_flux(state, params)
    tax = taxis_flux(state, params)
    return divergence(state.grid, tuple(d - t for d, t in zip(dif, tax)))


def rhs_u(state: State, params: Params) -> np.ndarray:
    return transport_divergence(state, params) + params.ell * state.u * state.v


def neumann_laplacian(grid: Grid) -> sparse.csr_matrix:
    """Sparse 5/7-point Laplacian with mirrored ghost cells, row-major ordering."""
    ops = []
    for n, h in zip(grid.cells, grid.spacing):
        main = np.full(n, -2.0)
        main[0] = main[-1] = -1.0
        off = np.ones(n - 1)
        ops.append(sparse.diags([off, main, off], [-1, 0, 1]) / h**2)
    lap = None
    for ax in range(grid.dim):
        term = None
        for bx in range(grid.dim):
            piece = ops[bx] if bx == ax else sparse.identity(grid.cells[bx])
            term = piece if term is None else sparse.kron(term, piece)
        lap = term if lap is None else lap + term
    return sparse.csr_matrix(lap)


def v_implicit_operator(state: State, dt: float):
    """Backward-Euler system ``(I - dt lap + dt diag(u)) v_new = v`` as ``(A, b)``.

    ``A`` is a symmetric M-matrix with row sums ``1 + dt u_i``.
    """
    if not dt > 0:
        raise ModelError(f"dt must be > 0 (got {dt})")
    grid = state.grid
    u, v = _finite(grid, state)
    if np.any(u < 0):
        raise ModelError("v operator needs u >= 0")
    n = grid.size
    A = sparse.identity(n, format="csr") - dt * neumann_laplacian(grid)
    A = A + sparse.diags(dt * u.ravel())
    return sparse.csr_matrix(A), v.ravel().copy()


def apply_v_operator(grid: Grid, u: np.ndarray, dt: float, x: np.ndarray) -> np.ndarray:
    """Matrix-free product with the operator of :func:`v_implicit_operator`."""
    out = (1.0 + dt * u) * x
    for ax, h in enumerate(grid.spacing):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        d = (dt / h**2) * (x[hi] - x[lo])
        out[lo] -= d
        out[hi] += d
    return out


def v_operator_diagonal(grid: Grid, u: np.ndarray, dt: float) -> np.ndarray:
    diag = 1.0 + dt * u
    for ax, (n, h) in enumerate(zip(grid.cells, grid.spacing)):
        deg = np.full(n, 2.0)
        deg[0] = deg[-1] = 1.0
        shape = [1] * grid.dim
        shape[ax] = n
        diag = diag + dt * deg.reshape(shape) / h**2
    return diag
