"""
Initial data and the experiment drivers built on top of :func:`stepper.run`.

Three experiments are provided:

* ``stabilization_experiment``: one trajectory to steady state or horizon,
  with decay, stability and non-constancy verdicts that can be recomputed
  from the stored series alone.
* ``v0_sweep``: the same initial density at several nutrient scales ``s``;
  fits ``log V = log C + sigma log(s int v0)`` where ``V`` is the dual-norm
  variation of the trajectory.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dualnorm import distance_to_mean, trajectory_variation
from .functionals import DiagnosticsConfig
from .grid import Grid, cell_gradient_magnitude, integrate
from .inequalities import sample_positive_field
from .model import Params, State
from .stepper import HORIZON, REGIME_VIOLATION, RunResult, run

RECIPES = ("constant", "two-bump", "cosine-mix", "seeded-random")

# bump centers as fractions of the box; deliberately not mirror-symmetric
_BUMPS = ((0.3, 0.3, 0.3), (0.7, 0.65, 0.6))


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class InitialDataSpec:
    """Recipe for ``(u0, v0)``.

    Each field is ``floor + recipe``.  ``constant`` adds ``value``;
    ``two-bump`` adds two Gaussians of height ``amplitude`` and width ``width``
    (``value`` unused); ``cosine-mix`` adds ``value`` plus a nonnegative
    cosine oscillation of height ``amplitude``; ``seeded-random`` adds
    ``value`` plus a random cosine series from ``seed`` with ``modes`` modes.
    ``v0`` is finally multiplied by ``v0_scale``.
    """

    u0_recipe: str = "two-bump"
    v0_recipe: str = "constant"
    v0_scale: float = 1.0
    u0_floor: float = 0.1
    v0_floor: float = 0.0
    u0_value: float = 1.0
    v0_value: float = 1.0
    u0_amplitude: float = 1.0
    v0_amplitude: float = 0.5
    width: float = 0.1
    modes: int = 3
    seed: int = 0

    def __post_init__(self):
        errs = []
        for name in ("u0_recipe", "v0_recipe"):
            if getattr(self, name) not in RECIPES:
                errs.append(f"{name} must be one of {RECIPES} (got {getattr(self, name)!r})")
        if not (math.isfinite(self.v0_scale) and self.v0_scale > 0):
            errs.append(f"v0_scale must be > 0 (got {self.v0_scale})")
        if self.u0_floor < 0 or self.v0_floor < 0:
            errs.append("floors must be >= 0")
        if not self.width > 0:
            errs.append("width must be > 0")
        if self.modes < 0:
            errs.append("modes must be >= 0")
        if errs:
            raise ScenarioError("; ".join(errs))

    def replace(self, **kw) -> "InitialDataSpec":
        d = asdict(self)
        d.update(kw)
        return InitialDataSpec(**d)


def _recipe(grid: Grid, recipe: str, floor: float, value: float, amplitude: float, spec: InitialDataSpec, salt: int):
    if recipe == "constant":
        return grid.full(floor + value)
    if recipe == "two-bump":
        X = grid.mesh()
        out = grid.full(floor)
        for c in _BUMPS:
            r2 = sum((x - f * L) ** 2 for x, f, L in zip(X, c, grid.extents))
            out = out + amplitude * np.exp(-r2 / (2 * spec.width**2))
        return out
    if recipe == "cosine-mix":
        X = grid.mesh()
        osc = sum(np.cos(math.pi * (k + 1) * x / L) for k, (x, L) in enumerate(zip(X, grid.extents))) / grid.dim
        return floor + value + 0.5 * amplitude * (1.0 + osc)
    # seeded-random: sampler output is >= 1, so the field is >= floor + value
    base = sample_positive_field(grid, [spec.seed, salt], spec.modes, 1.0)
    return floor + value + amplitude * (base - 1.0)


def initial_bounds(grid: Grid, u0, v0) -> tuple[float, float]:
    """``(||u0||_inf + ||v0||_inf + ||grad ln v0||_inf, -int ln u0)``."""
    sup = float(np.max(np.abs(u0)) + np.max(np.abs(v0)))
    sup += float(np.max(cell_gradient_magnitude(grid, np.log(v0))))
    with np.errstate(divide="ignore"):
        neg_log = -integrate(grid, np.log(u0)) if np.all(u0 > 0) else math.inf
    return sup, neg_log


def make_initial_data(grid: Grid, spec: InitialDataSpec):
    """Return ``(u0, v0, K)`` with ``K`` the larger of the two bounds of :func:`initial_bounds`."""
    u0 = _recipe(grid, spec.u0_recipe, spec.u0_floor, spec.u0_value, spec.u0_amplitude, spec, 0)
    v0 = spec.v0_scale * _recipe(grid, spec.v0_recipe, spec.v0_floor, spec.v0_value, spec.v0_amplitude, spec, 1)
    if np.any(u0 < 0):
        raise ScenarioError("u0 recipe produced negative values; raise u0_floor")
    if not np.any(u0 > 0):
        raise ScenarioError("u0 recipe produced u0 = 0 identically")
    if np.any(v0 <= 0):
        raise ScenarioError("v0 must be strictly positive; raise v0_floor or v0_value")
    sup, neg_log = initial_bounds(grid, u0, v0)
    return u0, v0, max(sup, neg_log)


@dataclass
class StabilizationReport:
    """Series and scalars of one stabilization run.

    All verdicts are functions of the stored fields (see :func:`verdicts`).
    """

    v0_scale: float
    mass_v0: float
    times: list
    dual_dist_u0: list
    mass_v: list
    grad_v_norm: list
    initial_mean_distance: float
    final_mean_distance: float
    final_mass_u: float
    final_u_variance: float
    steady_time: float | None
    reason: str
    certified: bool
    nonconst_fraction: float = 0.5
    verdict: dict = field(default_factory=dict)

    @property
    def final_dual_dist_u0(self) -> float:
        return self.dual_dist_u0[-1]

    @property
    def max_dual_dist_u0(self) -> float:
        return max(self.dual_dist_u0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StabilizationReport":
        return cls(**d)


def verdicts(rep: StabilizationReport) -> dict:
    """Decay, steady and non-constancy verdicts from the stored series."""
    peak = max(rep.grad_v_norm)
    # with a flat nutrient throughout there is no gradient left to decay
    grad_ok = rep.grad_v_norm[-1] < 1e-4 * peak or peak == 0.0
    v_decay = rep.mass_v[-1] < 1e-6 * rep.mass_v0 and grad_ok
    # a final distance at roundoff level is constant no matter the ratio
    floor = 1e-12 * max(rep.final_mass_u, 1.0)
    nonconst = rep.final_mean_distance > floor and (
        rep.final_mean_distance >= rep.nonconst_fraction * rep.initial_mean_distance
    )
    return {
        "v_decay": bool(v_decay),
        "incomplete_decay": bool(not v_decay and rep.reason == HORIZON),
        "steady": rep.steady_time is not None,
        "non_constant": bool(nonconst),
        "max_dual_dist_u0": rep.max_dual_dist_u0,
        "certified": rep.certified,
    }


def _report(grid, res: RunResult, u0, params, v0_scale, mass_v0, nonconst_fraction) -> StabilizationReport:
    recs = res.records
    u = res.state.u
    mean = integrate(grid, u) / grid.volume
    rep = StabilizationReport(
        v0_scale=float(v0_scale),
        mass_v0=mass_v0,
        times=[r.t for r in recs],
        dual_dist_u0=[r.dual_dist_u0 for r in recs],
        mass_v=[r.mass_v for r in recs],
        grad_v_norm=[math.sqrt(r.grad_v_l2) for r in recs],
        initial_mean_distance=distance_to_mean(grid, u0),
        final_mean_distance=distance_to_mean(grid, u),
        final_mass_u=integrate(grid, u),
        final_u_variance=integrate(grid, (u - mean) ** 2) / grid.volume,
        steady_time=res.steady_time,
        reason=res.reason,
        certified=params.certified_regime,
        nonconst_fraction=nonconst_fraction,
    )
    rep.verdict = verdicts(rep)
    return rep


def stabilization_experiment(
    grid: Grid,
    spec: InitialDataSpec,
    params: Params,
    horizon: float,
    *,
    sample_every: float = 0.5,
    stop_on_steady: bool = False,
    certify: bool = False,
    nonconst_fraction: float = 0.5,
    diagnostics: DiagnosticsConfig | None = None,
    keep_snapshots: bool = False,
    sinks=(),
    tol_v: float = 1e-6,
    tol_u: float = 1e-8,
):
    """Run one trajectory with dual-distance diagnostics.

    Returns ``(StabilizationReport, RunResult)``.  With ``keep_snapshots`` the
    run stores ``u`` at every sample time.
    """
    u0, v0, _ = make_initial_data(grid, spec)
    cfg = diagnostics or DiagnosticsConfig.defaults(params.alpha)
    cfg.dual_norm = True
    res = run(
        State(grid, u0, v0),
        params,
        horizon,
        diagnostics=cfg,
        sample_every=sample_every,
        snapshot_every=sample_every if keep_snapshots else None,
        sinks=sinks,
        stop_on_steady=stop_on_steady,
        certify=certify,
        tol_v=tol_v,
        tol_u=tol_u,
    )
    if res.reason == REGIME_VIOLATION:
        raise ScenarioError(f"alpha = {params.alpha} outside (3/2, 19/12) with certify on")
    u0_run = u0 + params.eps
    rep = _report(grid, res, u0_run, params, spec.v0_scale, integrate(grid, v0), nonconst_fraction)
    return rep, res


@dataclass
class SweepLeg:
    scale: float
    mass_v0: float
    variation: float
    report: StabilizationReport
    # budgets: gain of int u, total consumption, clipped mass
    mass_u_gain: float
    consumption: float
    clip_total: float
    steps: int


@dataclass
class SweepReport:
    legs: list
    sigma_hat: float
    log_c: float
    flags: list = field(default_factory=list)

    @property
    def scales(self) -> list:
        return [leg.scale for leg in self.legs]

    @property
    def variations(self) -> list:
        return [leg.variation for leg in self.legs]

    def summary_table(self) -> str:
        lines = [f"{'scale':>10} {'int v0':>12} {'V':>12} {'final dist':>12} {'steps':>8}"]
        for leg in self.legs:
            lines.append(
                f"{leg.scale:>10.4g} {leg.mass_v0:>12.5g} {leg.variation:>12.5g} "
                f"{leg.report.final_dual_dist_u0:>12.5g} {leg.steps:>8d}"
            )
        lines.append(f"sigma_hat = {self.sigma_hat:.4g}" + (f"  flags: {', '.join(self.flags)}" if self.flags else ""))
        return "\n".join(lines)


def _leg(args) -> SweepLeg:
    grid, spec, params, horizon, sample_every, stop_on_steady, nonconst_fraction = args
    rep, res = stabilization_experiment(
        grid,
        spec,
        params,
        horizon,
        sample_every=sample_every,
        stop_on_steady=stop_on_steady,
        nonconst_fraction=nonconst_fraction,
        keep_snapshots=True,
    )
    V = trajectory_variation(grid, [u for _, u, _ in res.snapshots])
    first, last = res.records[0], res.records[-1]
    return SweepLeg(
        scale=spec.v0_scale,
        mass_v0=rep.mass_v0,
        variation=V,
        report=rep,
        mass_u_gain=last.mass_u - first.mass_u,
        consumption=last.cumulative_consumption,
        clip_total=res.clip_total,
        steps=res.steps,
    )


def fit_sigma(mass_v0, variations) -> tuple[float, float, list]:
    """Least-squares slope of ``log V`` against ``log int v0``; returns ``(sigma, log C, flags)``."""
    flags = []
    x = np.asarray(mass_v0, dtype=float)
    y = np.asarray(variations, dtype=float)
    order = np.argsort(x)
    if np.any(np.diff(y[order]) <= 0):
        flags.append("non-monotone V")
    if np.any(y <= 0):
        flags.append("zero variation: sigma undefined")
        return math.nan, math.nan, flags
    sigma, logc = np.polyfit(np.log(x), np.log(y), 1)
    return float(sigma), float(logc), flags


def v0_sweep(
    grid: Grid,
    spec: InitialDataSpec,
    scales,
    params: Params,
    horizon: float,
    *,
    sample_every: float = 0.5,
    stop_on_steady: bool = True,
    nonconst_fraction: float = 0.5,
    workers: int = 1,
) -> SweepReport:
    """Run one leg per nutrient scale and fit the effective exponent.

    Legs are independent; with ``workers > 1`` they run in a process pool and
    are merged in scale order, so the report does not depend on ``workers``.
    """
    scales = [float(s) for s in scales]
    if len(scales) < 3:
        raise ScenarioError("a sweep needs at least 3 scales")
    if any(not s > 0 for s in scales):
        raise ScenarioError("scales must be > 0")
    if max(scales) / min(scales) < 100 * (1 - 1e-12):
        raise ScenarioError("scales must span at least two decades")
    jobs = [
        (grid, spec.replace(v0_scale=s), params, horizon, sample_every, stop_on_steady, nonconst_fraction)
        for s in scales
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            legs = list(pool.map(_leg, jobs))
    else:
        legs = [_leg(j) for j in jobs]
    sigma, logc, flags = fit_sigma([l.mass_v0 for l in legs], [l.variation for l in legs])
    return SweepReport(legs, sigma, logc, flags)


def homogeneous_limit(u0: float, v0: float, ell: float) -> float:
    """Limit of the spatially homogeneous system: ``u0 + ell v0``."""
    return u0 + ell * v0


def logistic_v(t: float, u0: float = 1.0, v0: float = 1.0, ell: float = 1.0) -> float:
    """Exact ``v(t)`` of ``v' = -u v``, ``u = u0 + ell (v0 - v)``."""
    c = u0 + ell * v0
    # v' = -(c - ell v) v, a logistic equation
    return c * v0 / (ell * v0 + (c - ell * v0) * math.exp(c * t))


__all__ = [
    "RECIPES",
    "ScenarioError",
    "InitialDataSpec",
    "make_initial_data",
    "initial_bounds",
    "StabilizationReport",
    "verdicts",
    "stabilization_experiment",
    "SweepLeg",
    "SweepReport",
    "fit_sigma",
    "v0_sweep",
    "homogeneous_limit",
    "logistic_v",
]
