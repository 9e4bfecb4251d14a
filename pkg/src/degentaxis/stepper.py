"""
Time integration.

One step advances ``(u, v)`` by ``dt``:

1. fluxes of the u-equation are assembled from the old state;
2. ``v`` is advanced by backward Euler, ``(I - dt lap + dt diag(u)) v_new = v``;
3. ``u_new = u + dt (div(fluxes) + ell u v_new)``; negative undershoots are
   clipped and accounted for (or rejected).

The reaction term uses the freshly solved ``v_new``, i.e. the same coupling
``u v_new`` that the nutrient solve consumed.  This makes the discrete budgets
telescope exactly:

    int v_new + dt int u v_new = int v                    (nutrient)
    int u_new = int u + ell dt int u v_new + clipped      (cells)

so ``int u + ell int v`` is conserved up to the clip budget.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dualnorm import dual_norm
from .functionals import DiagnosticsConfig, DiagnosticsRecord, accumulate_budgets, make_record
from .grid import Grid, divergence, fsum, integrate
from .io import snapshot_bytes
from .linsolve import solve_v
from .model import (
    ModelError,
    Params,
    State,
    diffusive_flux,
    drift_speed,
    face_mobility,
    taxis_flux,
)

log = logging.getLogger(__name__)

HORIZON, STEADY, INSTABILITY, REGIME_VIOLATION = "horizon", "steady", "instability", "regime-violation"
CLIP_RATE_LIMIT = 1e-8


class StepError(RuntimeError):
    pass


class InstabilityError(StepError):
    pass


class PositivityError(StepError):
    pass


@dataclass
class StepReport:
    dt: float
    mass_clipped: float
    lin_iterations: int
    lin_residual: float
    max_u: float
    min_u: float
    max_v: float
    min_v: float
    consumption: float  # dt * int u v_new
    # filled only when step(..., account=True); run() skips them for speed
    mass_u_before: float | None = None
    mass_u_after: float | None = None
    mass_v_before: float | None = None
    mass_v_after: float | None = None
    budget_defect: float | None = None  # int u_new - int u - ell * consumption - clipped


@dataclass
class RunResult:
    state: State
    records: list[DiagnosticsRecord]
    reason: str
    steps: int = 0
    steady_time: float | None = None
    snapshots: list[tuple[float, np.ndarray, np.ndarray]] = field(default_factory=list)
    clip_total: float = 0.0
    crash_snapshot: bytes | None = None
    crash_path: Path | None = None
    reports: list[StepReport] = field(default_factory=list)


@dataclass
class _Transport:
    div: np.ndarray
    max_mobility: float
    max_drift: float


def _transport(state: State, params: Params) -> _Transport:
    mob = face_mobility(state, params)
    dif = diffusive_flux(state, params)
    tax = taxis_flux(state, params)
    drift = drift_speed(state, params)
    div = divergence(state.grid, tuple(d - t for d, t in zip(dif, tax)))
    max_mob = max((float(np.max(m)) for m in mob if m.size), default=0.0)
    max_drift = max((float(np.max(d)) for d in drift if d.size), default=0.0)
    return _Transport(div, max_mob, max_drift)


def _dt_from(grid: Grid, params: Params, max_mob: float, max_drift: float) -> float:
    rate = 0.0
    for h in grid.spacing:
        rate += 2.0 * max_mob / h**2 + 2.0 * max_drift / h
    if rate == 0.0:
        return params.dt_max
    return min(params.safety / rate, params.dt_max)


def stable_dt(state: State, params: Params) -> float:
    """Largest positivity-preserving explicit step, scaled by ``params.safety``.

    Outflow from any cell over one step is at most
    ``dt * u_i * sum_axes(2 max_mobility / h^2 + 2 max_drift / h)``, so
    ``dt = safety / sum_axes(...)`` keeps ``u >= 0`` for ``safety <= 1``.
    Capped by ``params.dt_max``, which is also returned for fully degenerate
    states.
    """
    tr = _transport(state, params)
    return _dt_from(state.grid, params, tr.max_mobility, tr.max_drift)


def step(
    state: State,
    params: Params,
    dt: float | None = None,
    *,
    check_dt: bool = True,
    account: bool = True,
    _tr: _Transport | None = None,
):
    """Advance one step; returns ``(new_state, StepReport)``.

    ``dt=None`` takes :func:`stable_dt` of ``state`` without evaluating the
    fluxes twice.  With ``account=True`` the report carries both masses
    before and after the step and the defect of the cell-mass budget identity.
    """
    grid = state.grid
    u, v = state.u, state.v
    if np.any(u < 0):
        raise ModelError("u must be nonnegative")
    if np.any(v < 0):
        raise ModelError("v must be nonnegative")
    tr = _tr if _tr is not None else _transport(state, params)
    if dt is None:
        dt = _dt_from(grid, params, tr.max_mobility, tr.max_drift)
    if not (dt > 0 and math.isfinite(dt)):
        raise StepError(f"dt must be finite and > 0 (got {dt})")
    if check_dt:
        limit = _dt_from(grid, params, tr.max_mobility, tr.max_drift)
        if dt > limit * (1 + 1e-12):
            raise StepError(f"dt = {dt:.3e} exceeds the stable step {limit:.3e}")

    v_new, info = solve_v(grid, u, v, dt, tol=params.lin_tol, maxiter=params.lin_maxiter)
    # the exact solve obeys 0 <= v_new <= max v; trim solver round-off only
    vmax = float(np.max(v))
    v_new = np.clip(v_new, 0.0, vmax)
    if not np.all(np.isfinite(v_new)):
        raise InstabilityError("non-finite nutrient after implicit solve")

    coupling = u * v_new
    u_new = u + dt * (tr.div + params.ell * coupling)
    if not np.all(np.isfinite(u_new)):
        raise InstabilityError(f"non-finite density at t = {state.t + dt:.6g}")

    vol = grid.cell_volume
    neg = u_new < 0
    clipped = 0.0
    if np.any(neg):
        if params.clip_policy == "reject":
            raise PositivityError(f"negative density {float(np.min(u_new)):.3e} at t = {state.t + dt:.6g}")
        clipped = -fsum(u_new[neg]) * vol
        u_new = np.where(neg, 0.0, u_new)

    consumption = dt * integrate(grid, coupling)
    report = StepReport(
        dt=dt,
        mass_clipped=clipped,
        lin_iterations=info.iterations,
        lin_residual=info.residual,
        max_u=float(np.max(u_new)),
        min_u=float(np.min(u_new)),
        max_v=float(np.max(v_new)),
        min_v=float(np.min(v_new)),
        consumption=consumption,
    )
    if account:
        report.mass_u_before = integrate(grid, u)
        report.mass_u_after = integrate(grid, u_new)
        report.mass_v_before = integrate(grid, v)
        report.mass_v_after = integrate(grid, v_new)
        report.budget_defect = (
            report.mass_u_after - report.mass_u_before - params.ell * consumption - clipped
        )
    return State(grid, u_new, v_new, state.t + dt), report


def detect_steady(grid: Grid, window: Sequence, mass_v0: float, tol_v: float = 1e-6, tol_u: float = 1e-8) -> bool:
    """Steady-state test on the last two entries of ``window``.

    Each entry is ``(record, u)``.  True iff ``int v < tol_v * int v0`` and the
    dual-norm rate ``||u(t2) - u(t1)||_* / (t2 - t1) < tol_u``.
    """
    if len(window) < 2:
        raise ValueError("detect_steady needs at least two records")
    (r1, u1), (r2, u2) = window[-2], window[-1]
    if not r2.mass_v < tol_v * mass_v0:
        return False
    dt = r2.t - r1.t
    diff = np.asarray(u2) - np.asarray(u1)
    # ||f||_* <= ||f||_1: cheap sufficient test before the LP
    l1 = integrate(grid, np.abs(diff))
    if dt <= 0:
        return l1 == 0.0
    if l1 / dt < tol_u:
        return True
    return dual_norm(grid, diff).value / dt < tol_u


def run(
    initial: State,
    params: Params,
    horizon: float,
    *,
    diagnostics: DiagnosticsConfig | None = None,
    sample_every: float | None = None,
    snapshot_every: float | None = None,
    sinks: Sequence[Callable[[DiagnosticsRecord], None]] = (),
    stop_on_steady: bool = False,
    tol_v: float = 1e-6,
    tol_u: float = 1e-8,
    certify: bool = False,
    crash_dir: Path | str | None = None,
    fixed_dt: float | None = None,
    keep_reports: bool = False,
) -> RunResult:
    """Advance ``initial`` to ``horizon`` with adaptive steps.

    ``params.eps`` shifts the initial density once.  Records are emitted at
    ``t = 0`` and every ``sample_every`` time units (steps are shortened to land
    on sample times exactly).  ``(t, u, v)`` snapshots are kept every
    ``snapshot_every``.  Steady detection is evaluated at every sample; the
    first steady time is reported, and the run stops there if
    ``stop_on_steady``.
    """
    if certify and not params.certified_regime:
        return RunResult(initial.copy(), [], REGIME_VIOLATION)
    cfg = diagnostics or DiagnosticsConfig.defaults(params.alpha)
    grid = initial.grid
    state = State(grid, np.asarray(initial.u, float) + params.eps, np.asarray(initial.v, float).copy(), float(initial.t))
    state.validate(strict_v=False)
    u0 = state.u.copy()
    mass_u0 = integrate(grid, u0)
    mass_v0 = integrate(grid, state.v)
    t0 = state.t
    t_end = t0 + horizon

    consumption_chunks: list[float] = []
    pending: list[float] = []
    clip_total = 0.0
    steps = 0
    records: list[DiagnosticsRecord] = []
    reports: list[StepReport] = []
    snapshots: list[tuple[float, np.ndarray, np.ndarray]] = []
    window: list = []
    steady_time = None

    def emit():
        consumption_chunks.append(fsum(pending))
        pending.clear()
        rec = make_record(state, cfg, fsum(consumption_chunks), clip_total, steps)
        if cfg.dual_norm:
            rec.dual_dist_u0 = dual_norm(grid, state.u - u0).value
        accumulate_budgets(records[-1] if records else None, rec)
        records.append(rec)
        for sink in sinks:
            sink(rec)
        return rec

    def result(reason, crash=None, crash_path=None):
        return RunResult(state, records, reason, steps, steady_time, snapshots, clip_total, crash, crash_path, reports)

    rec = emit()
    window.append((rec, state.u.copy()))
    if snapshot_every is not None:
        snapshots.append((state.t, state.u.copy(), state.v.copy()))
    if horizon <= 0:
        return result(HORIZON)

    k_sample = 1
    k_snap = 1
    next_sample = t0 + sample_every if sample_every else math.inf
    next_snap = t0 + snapshot_every if snapshot_every else math.inf
    while state.t < t_end:
        try:
            tr = _transport(state, params)
            dt = fixed_dt if fixed_dt is not None else _dt_from(grid, params, tr.max_mobility, tr.max_drift)
            target = min(t_end, next_sample, next_snap)
            landing = state.t + dt >= target
            if landing:
                dt = target - state.t
            new, rep = step(state, params, dt, check_dt=fixed_dt is None, account=keep_reports, _tr=tr)
        except InstabilityError as exc:
            log.error("instability: %s", exc)
            data = snapshot_bytes(state)
            path = None
            if crash_dir is not None:
                path = Path(crash_dir) / "crash.snap"
                path.write_bytes(data)
            return result(INSTABILITY, data, path)
        if landing:
            new.t = target  # land exactly, no drift from repeated addition
        state = new
        steps += 1
        pending.append(rep.consumption)
        clip_total += rep.mass_clipped
        if keep_reports:
            reports.append(rep)
        if rep.mass_clipped / rep.dt > CLIP_RATE_LIMIT * mass_u0:
            log.error("clipped mass rate %.3e exceeds limit", rep.mass_clipped / rep.dt)
            data = snapshot_bytes(state)
            path = None
            if crash_dir is not None:
                path = Path(crash_dir) / "crash.snap"
                path.write_bytes(data)
            return result(INSTABILITY, data, path)

        if state.t >= next_snap:
            snapshots.append((state.t, state.u.copy(), state.v.copy()))
            k_snap += 1
            next_snap = t0 + k_snap * snapshot_every
        if state.t >= next_sample or state.t >= t_end:
            if state.t >= next_sample:
                k_sample += 1
                next_sample = t0 + k_sample * sample_every
            rec = emit()
            window.append((rec, state.u.copy()))
            del window[:-2]
            if steady_time is None and detect_steady(grid, window, mass_v0, tol_v, tol_u):
                steady_time = state.t
                if stop_on_steady:
                    return result(STEADY)
    if snapshot_every is not None and snapshots[-1][0] != state.t:
        snapshots.append((state.t, state.u.copy(), state.v.copy()))
    return result(HORIZON)
