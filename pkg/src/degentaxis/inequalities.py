"""
Empirical checks of the interpolation inequalities behind the L^p ladder.

Each inequality has the shape

    lhs(phi, psi) <= a1 * A + a2 * B + C * base

where ``A`` and ``B`` are gradient terms with fixed coefficients and ``C`` is
the constant whose existence is asserted.  For sampled positive fields the
*implied constant* ``(lhs - a1 A - a2 B) / base`` is the smallest ``C`` that
works for that sample; ``fit_constant`` reports its maximum over a batch.

Inequality ids and exponent tuples:

``I2.28``  (p_star, q), bound ``M`` on ``int phi^p_star``;
           ``int phi^p psi <= C (A + B + int phi psi)``, ``p = (2 p_star + 3)/3``.
           Here the constant multiplies every term, so the implied constant is
           ``lhs / (A + B + base)``.
``I2.38``  (p, r, eta); ``||phi^((p+1)/2) psi^(1/2)||_r^2 <= eta A + eta B + C (int phi)^p int phi psi``.
``I3.10``  (k, beta), bound ``L`` on ``int phi``;
           ``int phi^beta psi <= A + int phi |grad psi|^4 / psi^3 + C int phi psi``.
``I3.25``  (p, q, beta, p0, eta), bound ``L`` on ``int phi^p0``;
           ``int phi^beta psi <= eta A + eta int phi |grad psi|^q / psi^(q-1) + C int phi psi``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, cell_gradient_magnitude, integrate, make_grid

IDS = ("I2.28", "I2.38", "I3.10", "I3.25")
EXPONENT_NAMES = {
    "I2.28": ("p_star", "q"),
    "I2.38": ("p", "r", "eta"),
    "I3.10": ("k", "beta"),
    "I3.25": ("p", "q", "beta", "p0", "eta"),
}
DEFAULT_BOUND = {"I2.28": 10.0, "I2.38": math.inf, "I3.10": 10.0, "I3.25": 10.0}
BLOWUP_CAP = 1e6
AMPLITUDE_RANGE = (1e-3, 2.0)
DEGENERATE_BASE = 1e-12

# three interior points per inequality, used by the acceptance suite and the CLI
ADMISSIBLE_POINTS = {
    "I2.28": [
        {"p_star": 1.0, "q": 2.0 / 3.0},
        {"p_star": 1.0, "q": 0.3},
        {"p_star": 2.0, "q": 1.0},
    ],
    "I2.38": [
        {"p": 1.0, "r": 2.0, "eta": 0.5},
        {"p": 0.5, "r": 4.0, "eta": 0.5},
        {"p": 2.0, "r": 3.0, "eta": 0.25},
    ],
    "I3.10": [
        {"k": -0.5, "beta": 2.0},
        {"k": -0.4, "beta": 1.5},
        {"k": -0.8, "beta": 1.8},
    ],
    "I3.25": [
        {"p": 2.0, "q": 6.5, "beta": 3.5, "p0": 1.52, "eta": 0.5},
        {"p": 1.5, "q": 5.5, "beta": 2.5, "p0": 1.6, "eta": 0.5},
        {"p": 1.2, "q": 6.0, "beta": 3.0, "p0": 1.55, "eta": 0.25},
    ],
}


class InadmissibleError(ValueError):
    """Exponents or fields violate the hypotheses of the inequality."""


def default_grid() -> Grid:
    return make_grid(1, [64], [1.0])


def _modes(grid: Grid, mode_count: int) -> list[tuple]:
    return [k for k in np.ndindex(*([mode_count + 1] * grid.dim)) if max(k) > 0]


def latent_bounds(grid: Grid, mode_count: int) -> list[tuple[float, float]]:
    """Box of the sampler's latent vector ``(offset, log amplitude, coefficients...)``."""
    lo, hi = AMPLITUDE_RANGE
    return [(0.0, 1.0), (math.log(lo), math.log(hi))] + [(-1.0, 1.0)] * len(_modes(grid, mode_count))


def draw_latent(grid: Grid, seed, mode_count: int) -> np.ndarray:
    """Uniform draw from :func:`latent_bounds`; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    box = latent_bounds(grid, mode_count)
    return np.array([rng.uniform(lo, hi) for lo, hi in box])


def field_from_latent(grid: Grid, z, mode_count: int, min_value: float) -> np.ndarray:
    """Cosine series with coefficients ``z[2:] / |k|``, oscillation rescaled to ``exp(z[1])``."""
    base = min_value + z[0]
    centers = grid.centers()
    g = grid.zeros()
    for c, k in zip(z[2:], _modes(grid, mode_count)):
        term = 1.0
        for ax, kk in enumerate(k):
            term = term * np.cos(math.pi * kk * centers[ax] / grid.extents[ax])
        g = g + (c / math.sqrt(sum(x * x for x in k))) * term
    spread = float(np.max(g) - np.min(g))
    if spread > 0:
        g = math.exp(z[1]) * (g - np.min(g)) / spread
    else:
        g = np.zeros_like(g)
    return base + g


def sample_positive_field(grid: Grid, seed, mode_count: int = 4, min_value: float = 0.1) -> np.ndarray:
    """Random truncated cosine series shifted to stay ``>= min_value``.

    The series uses the Neumann eigenfunctions ``prod cos(pi k_d x_d / L_d)``
    with ``1 <= max_d k_d <= mode_count``.  Its oscillation is normalized to a
    log-uniform amplitude in ``AMPLITUDE_RANGE`` (so nearly flat and strongly
    oscillating fields both show up), and a random offset in ``[0, 1)`` is
    added on top of ``min_value``.  Deterministic in ``seed``.
    """
    if not min_value > 0:
        raise ValueError("min_value must be > 0")
    if mode_count <= 0:
        offset = np.random.default_rng(seed).uniform(0.0, 1.0)
        return grid.full(min_value + offset)
    return field_from_latent(grid, draw_latent(grid, seed, mode_count), mode_count, min_value)


def admissibility(ident: str, ex: dict) -> list[str]:
    """Violated exponent hypotheses (empty when admissible)."""
    if ident not in IDS:
        raise InadmissibleError(f"unknown inequality {ident!r}")
    missing = [n for n in EXPONENT_NAMES[ident] if n not in ex]
    if missing:
        return [f"missing exponents {missing}"]
    bad = []
    if ident == "I2.28":
        ps, q = ex["p_star"], ex["q"]
        if not ps >= 1:
            bad.append("p_star >= 1")
        if not 0 <= q <= 2 * ps / 3:
            bad.append("q in [0, 2 p_star / 3]")
    elif ident == "I2.38":
        if not ex["p"] > 0:
            bad.append("p > 0")
        if not 1 < ex["r"] < 6:
            bad.append("1 < r < 6")
        if not ex["eta"] > 0:
            bad.append("eta > 0")
    elif ident == "I3.10":
        k, b = ex["k"], ex["beta"]
        if not -1 < k < -1.0 / 3.0:
            bad.append("k in (-1, -1/3)")
        if not 1 <= b < k + 8.0 / 3.0:
            bad.append("beta in [1, k + 8/3)")
    else:
        p, q, b, p0, eta = ex["p"], ex["q"], ex["beta"], ex["p0"], ex["eta"]
        if not p0 > 1.5:
            bad.append("p0 > 3/2")
        if not p > 1:
            bad.append("p > 1")
        if not q > 2 + 3 * p / p0:
            bad.append("q > 2 + 3p/p0")
        if not 1 <= b < 2 * p0 / 3 + p + 1:
            bad.append("beta in [1, 2 p0/3 + p + 1)")
        if not 0 < eta < 1:
            bad.append("eta in (0, 1)")
    return bad


def _mass_condition(ident: str, ex: dict, grid: Grid, phi: np.ndarray, bound: float):
    """``(value, description)`` of the integral constraint on ``phi``, or None."""
    if ident == "I2.28":
        return integrate(grid, phi ** ex["p_star"]), "int phi^p_star <= M"
    if ident == "I3.10":
        return integrate(grid, phi), "int phi <= L"
    if ident == "I3.25":
        return integrate(grid, phi ** ex["p0"]), "int phi^p0 <= L"
    return None


@dataclass
class InequalityCase:
    ident: str
    exponents: dict
    lhs: float = math.nan
    terms: dict = field(default_factory=dict)  # A, B, base
    coeffs: tuple = (1.0, 1.0)
    implied: float = math.nan
    admissible: bool = True
    violated: list = field(default_factory=list)
    seed: object = None

    def row(self) -> dict:
        return {
            "id": self.ident,
            "exponents": json.dumps(self.exponents, sort_keys=True),
            "seed": json.dumps(self.seed),
            "lhs": self.lhs,
            "A": self.terms.get("A", math.nan),
            "B": self.terms.get("B", math.nan),
            "base": self.terms.get("base", math.nan),
            "implied_constant": self.implied,
            "admissible": self.admissible,
            "violated": "; ".join(self.violated),
        }


def evaluate(
    ident: str,
    exponents: dict,
    phi,
    psi,
    grid: Grid | None = None,
    bound: float | None = None,
    strict: bool = True,
    seed=None,
) -> InequalityCase:
    """Compute both sides of one inequality for a field pair.

    With ``strict=True`` inadmissible exponents or a violated integral
    constraint raise :class:`InadmissibleError` naming the hypothesis;
    otherwise the case is returned with ``admissible=False``.
    """
    grid = grid or default_grid()
    bound = DEFAULT_BOUND[ident] if bound is None else bound
    ex = {k: float(v) for k, v in exponents.items()}
    violated = admissibility(ident, ex)
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if np.any(phi <= 0) or np.any(psi <= 0):
        violated.append("phi > 0 and psi > 0")
    if not violated:
        cond = _mass_condition(ident, ex, grid, phi, bound)
        if cond is not None and not cond[0] <= bound:
            violated.append(f"{cond[1]} (got {cond[0]:.6g} > {bound:.6g})")
    if violated and strict:
        raise InadmissibleError(f"{ident} {ex}: violated hypotheses: {', '.join(violated)}")

    gphi = cell_gradient_magnitude(grid, phi)
    gpsi = cell_gradient_magnitude(grid, psi)
    base = integrate(grid, phi * psi)
    if ident == "I2.28":
        p = (2 * ex["p_star"] + 3) / 3
        lhs = integrate(grid, phi**p * psi)
        A = integrate(grid, phi ** (ex["q"] - 1) * psi * gphi**2)
        B = integrate(grid, phi / psi * gpsi**2)
        coeffs = (None, None)
        denom = A + B + base
        implied = lhs / denom if denom > 0 else math.inf
        terms = {"A": A, "B": B, "base": base}
    else:
        if ident == "I2.38":
            p, r, eta = ex["p"], ex["r"], ex["eta"]
            lhs = integrate(grid, (phi ** ((p + 1) / 2) * np.sqrt(psi)) ** r) ** (2 / r)
            A = integrate(grid, phi ** (p - 1) * psi * gphi**2)
            B = integrate(grid, phi ** (p + 1) / psi * gpsi**2)
            denom = integrate(grid, phi) ** p * base
            coeffs = (eta, eta)
        elif ident == "I3.10":
            k, beta = ex["k"], ex["beta"]
            lhs = integrate(grid, phi**beta * psi)
            A = integrate(grid, phi**k * psi * gphi**2)
            B = integrate(grid, phi * gpsi**4 / psi**3)
            denom = base
            coeffs = (1.0, 1.0)
        else:
            q, beta, eta = ex["q"], ex["beta"], ex["eta"]
            lhs = integrate(grid, phi**beta * psi)
            A = integrate(grid, phi ** (ex["p"] - 1) * psi * gphi**2)
            B = integrate(grid, phi * gpsi**q / psi ** (q - 1))
            denom = base
            coeffs = (eta, eta)
        terms = {"A": A, "B": B, "base": denom}
        implied = (lhs - coeffs[0] * A - coeffs[1] * B) / denom if denom > 0 else math.inf
    return InequalityCase(ident, ex, lhs, terms, coeffs, implied, not violated, violated, seed)


def constant_case(ident: str, exponents: dict, grid: Grid | None = None) -> InequalityCase:
    """``phi = psi = 1``: gradient terms vanish, forcing ``C >= lhs / base``."""
    grid = grid or default_grid()
    one = grid.full(1.0)
    return evaluate(ident, exponents, one, one, grid, strict=False)


@dataclass
class FitResult:
    ident: str
    exponents: dict
    c_hat: float
    best_seed: object
    ratios: list
    cases: list
    skipped_degenerate: int = 0
    skipped_inadmissible: int = 0
    random_c_hat: float = math.nan  # before polishing


def sample_pair(grid: Grid, seed, index: int, mode_count: int, min_value: float):
    phi = sample_positive_field(grid, [seed, index, 0], mode_count, min_value)
    psi = sample_positive_field(grid, [seed, index, 1], mode_count, min_value)
    return phi, psi


def _polish(ident, exponents, grid, bound, seed, index, mode_count, min_value, max_evals):
    """Bounded local ascent of the implied constant from one sample's latent vectors.

    Returns ``(implied, case)`` of the best pair found; every candidate is a
    member of the sampler's family, so the result is still a sample maximum.
    """
    from scipy.optimize import minimize

    za = draw_latent(grid, [seed, index, 0], mode_count)
    zb = draw_latent(grid, [seed, index, 1], mode_count)
    n = za.size
    box = latent_bounds(grid, mode_count) * 2
    best = [-math.inf, None]

    def objective(z):
        phi = field_from_latent(grid, z[:n], mode_count, min_value)
        psi = field_from_latent(grid, z[n:], mode_count, min_value)
        case = evaluate(ident, exponents, phi, psi, grid, bound, strict=False, seed=[seed, index, "polished"])
        if not case.admissible or case.terms["base"] < DEGENERATE_BASE or not math.isfinite(case.implied):
            return 1e3
        if case.implied > best[0]:
            best[0], best[1] = case.implied, case
        return -case.implied

    minimize(objective, np.concatenate([za, zb]), method="Powell", bounds=box, options={"maxfev": max_evals, "xtol": 1e-4, "ftol": 1e-6})
    return best[0], best[1]


def fit_constant(
    ident: str,
    exponents: dict,
    sample_count: int,
    seed: int = 0,
    grid: Grid | None = None,
    bound: float | None = None,
    mode_count: int = 4,
    min_value: float = 0.1,
    include_constant: bool = False,
    polish: int = 3,
    polish_evals: int = 1500,
) -> FitResult:
    """Largest implied constant over ``sample_count`` random field pairs.

    Samples violating the integral constraint on ``phi`` are skipped and
    counted, so enlarging the bound only ever adds samples.  The ``polish``
    best random samples are then pushed uphill by a bounded local search over
    the sampler's latent parameters (``polish=0`` disables this); a plain
    random maximum over a hundred samples is too noisy to reproduce.
    """
    if sample_count <= 0:
        raise ValueError("sample_count must be positive")
    bad = admissibility(ident, exponents)
    if bad:
        raise InadmissibleError(f"{ident} {exponents}: violated hypotheses: {', '.join(bad)}")
    grid = grid or default_grid()
    cases, ratios = [], []
    skipped_deg = skipped_adm = 0
    best, best_seed = 0.0, None
    pairs = []
    if include_constant:
        pairs.append(("constant", grid.full(1.0), grid.full(1.0)))
    for i in range(sample_count):
        phi, psi = sample_pair(grid, seed, i, mode_count, min_value)
        pairs.append(([seed, i], phi, psi))
    for tag, phi, psi in pairs:
        case = evaluate(ident, exponents, phi, psi, grid, bound, strict=False, seed=tag)
        if not case.admissible:
            skipped_adm += 1
            continue
        if case.terms["base"] < DEGENERATE_BASE:
            skipped_deg += 1
            continue
        cases.append(case)
        r = max(case.implied, 0.0)
        ratios.append(r)
        if r > best or best_seed is None:
            best, best_seed = r, tag
    random_best = best
    if polish > 0 and mode_count > 0:
        ranked = sorted(
            (c for c in cases if c.seed != "constant"), key=lambda c: (-c.implied, c.seed[1])
        )[:polish]
        for c in ranked:
            val, pc = _polish(ident, exponents, grid, bound, seed, c.seed[1], mode_count, min_value, polish_evals)
            if pc is not None and val > best:
                best, best_seed = val, pc.seed
    return FitResult(
        ident, dict(exponents), best, best_seed, ratios, cases, skipped_deg, skipped_adm, random_best
    )


@dataclass
class HuntEntry:
    ident: str
    exponents: dict
    admissible: bool
    violated_hypotheses: list
    c_hat: float = math.nan
    c_cap: float = math.nan
    violations: list = field(default_factory=list)  # (seed, implied)
    unbounded: bool = False
    refinement: list = field(default_factory=list)  # (n, c_hat)
    growth_rate: float = math.nan
    cases: list = field(default_factory=list)  # fitting batch, for the CSV report


def violation_hunt(
    ident: str,
    exponent_grid,
    budget: int,
    seed: int = 0,
    grid: Grid | None = None,
    c_cap: float | None = None,
    bound: float | None = None,
    refine=(16, 32, 64, 128),
) -> list[HuntEntry]:
    """Search each exponent point for samples that no constant ``<= c_cap`` covers.

    Admissible points: ``C_hat`` is fitted on one seed batch and a disjoint
    batch is checked against ``c_cap`` (default ``2 C_hat``).  Inadmissible
    points get a refinement study instead: ``C_hat`` at increasing resolution
    with mode count growing with ``n``, and the log-log growth rate.  Nothing is
    asserted outside the admissible range.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    grid = grid or default_grid()
    out = []
    for ex in exponent_grid:
        ex = {k: float(v) for k, v in ex.items()}
        bad = admissibility(ident, ex)
        entry = HuntEntry(ident, ex, not bad, bad)
        if not bad:
            fit = fit_constant(ident, ex, budget, seed, grid, bound)
            entry.c_hat = fit.c_hat
            entry.cases = fit.cases
            entry.c_cap = 2.0 * fit.c_hat if c_cap is None else c_cap
            check = fit_constant(ident, ex, budget, seed + 1_000_003, grid, bound, polish=0)
            entry.violations = [
                (c.seed, c.implied) for c in check.cases if c.implied > entry.c_cap
            ]
            entry.unbounded = max(fit.c_hat, check.c_hat) > BLOWUP_CAP
        elif not any(h.startswith("missing") for h in bad):
            for n in refine:
                g = make_grid(grid.dim, [n] * grid.dim, grid.extents)
                best = 0.0
                for i in range(budget):
                    phi, psi = sample_pair(g, seed, i, max(4, n // 8), 0.1 / n)
                    case = evaluate(ident, ex, phi, psi, g, bound, strict=False)
                    if case.terms.get("base", 0.0) >= DEGENERATE_BASE and math.isfinite(case.implied):
                        best = max(best, case.implied)
                entry.refinement.append((n, best))
            ns = np.log([n for n, _ in entry.refinement])
            cs = [c for _, c in entry.refinement]
            if all(c > 0 for c in cs):
                entry.growth_rate = float(np.polyfit(ns, np.log(cs), 1)[0])
        out.append(entry)
    return out


def write_csv(path, cases) -> None:
    cases = list(cases)
    fields = list(InequalityCase("I3.10", {}).row().keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for c in cases:
            w.writerow(c.row())
