"""
Integral functionals tracked along trajectories.

All gradient magnitudes come from :func:`degentaxis.grid.cell_gradient_magnitude`
so that every functional shares one discrete definition of ``|grad f|``.
Cells with ``u = 0`` are excluded from integrands carrying negative powers of
``u``; the excluded volume fraction is reported next to the value.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import cell_gradient_magnitude, integrate
from .model import CERTIFIED_ALPHA_HI, CERTIFIED_ALPHA_LO, State, regime_exponents


class FunctionalError(ValueError):
    pass


class UndefinedFunctional(FunctionalError):
    """The functional needs ``u > 0`` everywhere."""


def key(x: float) -> str:
    """Stable dictionary key for an exponent."""
    return repr(float(x))


@dataclass
class DiagnosticsConfig:
    p_list: list[float] = field(default_factory=list)
    q_list: list[float] = field(default_factory=lambda: [2.0, 4.0])
    k_list: list[float] = field(default_factory=list)
    a_F: float = 1.0
    a_G: float = 1.0
    H_p: float = 2.0
    H_q: float = 4.0
    dual_norm: bool = False

    @classmethod
    def defaults(cls, alpha: float, **kw) -> "DiagnosticsConfig":
        """p in {2, p0, 4} and k in {1 - alpha, (1 - alpha)/2, 0}."""
        p_list = [2.0, 4.0]
        if CERTIFIED_ALPHA_LO < alpha < CERTIFIED_ALPHA_HI:
            p_list.insert(1, regime_exponents(alpha).p0)
        k_list = [1.0 - alpha, 0.5 * (1.0 - alpha), 0.0]
        kw.setdefault("p_list", p_list)
        kw.setdefault("k_list", k_list)
        return cls(**kw)


@dataclass
class DiagnosticsRecord:
    t: float
    mass_u: float
    mass_v: float
    coupling: float
    cumulative_consumption: float
    lp_norms: dict
    max_u: float
    max_v: float
    min_v: float
    grad_v_l2: float
    gradv_q: dict
    F: float | None
    G: float
    H: float
    dissipations: dict
    clip_budget: float
    dissipation_budgets: dict = field(default_factory=dict)
    dual_dist_u0: float | None = None
    steps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticsRecord":
        return cls(**d)


def _grad(state: State, f) -> np.ndarray:
    return cell_gradient_magnitude(state.grid, f)


def basic_moments(state: State) -> dict:
    g = state.grid
    return {
        "mass_u": integrate(g, state.u),
        "mass_v": integrate(g, state.v),
        "coupling": integrate(g, state.u * state.v),
        "max_u": float(np.max(state.u)),
        "max_v": float(np.max(state.v)),
        "min_v": float(np.min(state.v)),
    }


def gradv_functional(state: State, q: float) -> float:
    """``int |grad v|^q / v^(q-1)``."""
    if q < 2:
        raise FunctionalError(f"q must be >= 2 (got {q})")
    v = state.v
    if np.any(v <= 0):
        raise FunctionalError("v must be strictly positive")
    gv = _grad(state, v)
    return integrate(state.grid, gv**q / v ** (q - 1))


def quasi_energy_F(state: State, a: float = 1.0) -> float:
    """``a int |grad v|^2 / v - int ln u``; undefined if ``u`` vanishes anywhere."""
    if np.any(state.u <= 0):
        raise UndefinedFunctional("F needs u > 0 in every cell")
    return a * gradv_functional(state, 2.0) - integrate(state.grid, np.log(state.u))


def entropy(state: State) -> float:
    """``int u ln u`` with ``0 ln 0 = 0``."""
    u = state.u
    with np.errstate(divide="ignore", invalid="ignore"):
        ulnu = np.where(u > 0, u * np.log(np.where(u > 0, u, 1.0)), 0.0)
    return integrate(state.grid, ulnu)


def quasi_energy_G(state: State, a: float = 1.0) -> float:
    """``int u ln u + a int |grad v|^4 / v^3``."""
    return entropy(state) + a * gradv_functional(state, 4.0)


def quasi_energy_H(state: State, p: float, q: float) -> float:
    if not p > 1:
        raise FunctionalError(f"p must be > 1 (got {p})")
    if q < 2:
        raise FunctionalError(f"q must be >= 2 (got {q})")
    return gradv_functional(state, q) + integrate(state.grid, state.u**p)


def _masked_integral(state: State, values: np.ndarray, mask: np.ndarray) -> float:
    return integrate(state.grid, np.where(mask, values, 0.0))


def dissipations(state: State, k_list) -> dict:
    """Dissipation integrals of the estimate ladder.

    Keys: ``u_pow_k_v_gradu2`` (dict over k), ``u_over_v_gradv2``,
    ``v_over_u_gradu2``, ``gradv4_over_v3``, ``u_gradv4_over_v3`` and
    ``excluded_volume`` (fraction of cells with ``u = 0``, skipped wherever
    ``u`` carries a negative power).
    """
    u, v = state.u, state.v
    gu = _grad(state, u)
    gv = _grad(state, v)
    pos = u > 0
    safe_u = np.where(pos, u, 1.0)
    uk = {}
    for k in k_list:
        if k < 0:
            uk[key(k)] = _masked_integral(state, safe_u**k * v * gu**2, pos)
        else:
            uk[key(k)] = integrate(state.grid, u**k * v * gu**2)
    gv2_over_v = gv**2 / v
    gv4_over_v3 = gv**4 / v**3
    return {
        "u_pow_k_v_gradu2": uk,
        "u_over_v_gradv2": integrate(state.grid, u * gv2_over_v),
        "v_over_u_gradu2": _masked_integral(state, v * gu**2 / safe_u, pos),
        "gradv4_over_v3": integrate(state.grid, gv4_over_v3),
        "u_gradv4_over_v3": integrate(state.grid, u * gv4_over_v3),
        "excluded_volume": float(np.count_nonzero(~pos)) / state.grid.size,
    }


def flatten_dissipations(d: dict) -> dict:
    """One scalar per dissipation channel (``excluded_volume`` dropped)."""
    out = {}
    for name, val in d.items():
        if name == "excluded_volume":
            continue
        if isinstance(val, dict):
            for k, x in val.items():
                out[f"{name}[{k}]"] = x
        else:
            out[name] = val
    return out


def make_record(
    state: State,
    cfg: DiagnosticsConfig,
    cumulative_consumption: float = 0.0,
    clip_budget: float = 0.0,
    steps: int = 0,
) -> DiagnosticsRecord:
    """Evaluate every functional at one sample time."""
    m = basic_moments(state)
    g = state.grid
    try:
        F = quasi_energy_F(state, cfg.a_F)
    except UndefinedFunctional:
        F = None
    return DiagnosticsRecord(
        t=float(state.t),
        cumulative_consumption=float(cumulative_consumption),
        lp_norms={key(p): integrate(g, state.u**p) for p in cfg.p_list},
        grad_v_l2=integrate(g, _grad(state, state.v) ** 2),
        gradv_q={key(q): gradv_functional(state, q) for q in cfg.q_list},
        F=F,
        G=quasi_energy_G(state, cfg.a_G),
        H=quasi_energy_H(state, cfg.H_p, cfg.H_q),
        dissipations=dissipations(state, cfg.k_list),
        clip_budget=float(clip_budget),
        steps=steps,
        **m,
    )


def accumulate_budgets(prev: DiagnosticsRecord | None, rec: DiagnosticsRecord) -> None:
    """Trapezoidal running time integrals of every dissipation channel."""
    cur = flatten_dissipations(rec.dissipations)
    if prev is None:
        rec.dissipation_budgets = {k: 0.0 for k in cur}
        return
    old = flatten_dissipations(prev.dissipations)
    dt = rec.t - prev.t
    rec.dissipation_budgets = {
        k: prev.dissipation_budgets.get(k, 0.0) + 0.5 * dt * (old.get(k, 0.0) + x)
        for k, x in cur.items()
    }


def all_finite(rec: DiagnosticsRecord) -> bool:
    def walk(x):
        if isinstance(x, dict):
            return all(walk(y) for y in x.values())
        if x is None:
            return True
        return math.isfinite(x)

    return all(walk(v) for v in rec.to_dict().values())
