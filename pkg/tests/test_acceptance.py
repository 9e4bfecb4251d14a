"""Acceptance criteria 1-9.

Each test prints one ``PASS``/``FAIL`` line with the measured numbers, then
asserts.  Run alone with ``pytest tests/test_acceptance.py -v``.  The full
suite takes several minutes on one core; criteria 4-6 dominate.
"""

import json
import math
import time

import numpy as np
import pytest

from degentaxis import cli
from degentaxis.dualnorm import dual_norm, lattice_oracle, max_violation
from degentaxis.functionals import key
from degentaxis.grid import integrate, make_grid
from degentaxis.inequalities import ADMISSIBLE_POINTS, IDS, constant_case, fit_constant, violation_hunt
from degentaxis.model import Params, State
from degentaxis.scenarios import InitialDataSpec, logistic_v, stabilization_experiment, v0_sweep
from degentaxis.stepper import HORIZON, run, step


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}", flush=True)
        assert ok, detail

    return emit


def test_c1_homogeneous_logistic(verdict):
    t0 = time.perf_counter()
    g = make_grid(2, [32, 32], [1.0, 1.0])
    p = Params(chi=1.0, ell=1.0, alpha=1.55, dt_max=1e-4)
    res = run(State(g, g.full(1.0), g.full(1.0)), p, 1.0, sample_every=0.5)
    elapsed = time.perf_counter() - t0
    v_err = float(np.max(np.abs(res.state.v - 0.238406)))
    u_err = float(np.max(np.abs(res.state.u - 1.761594)))
    exact = abs(logistic_v(1.0) - 0.238406)
    ok = res.reason == HORIZON and v_err <= 1e-4 and u_err <= 1e-4 and elapsed < 30
    verdict(1, ok, f"|v-0.238406|={v_err:.2e} |u-1.761594|={u_err:.2e} (closed form off by {exact:.1e}) in {elapsed:.1f}s")


def test_c2_heat_mode(verdict):
    t0 = time.perf_counter()
    g = make_grid(1, [128], [1.0])
    (x,) = g.mesh()
    res = run(State(g, g.zeros(), 1 + 0.5 * np.cos(np.pi * x)), Params(), 0.1, fixed_dt=1e-5, sample_every=0.1)
    elapsed = time.perf_counter() - t0
    exact = 1 + 0.5 * math.exp(-math.pi**2 * 0.1) * np.cos(np.pi * x)
    err = float(np.max(np.abs(res.state.v - exact)))
    verdict(2, err <= 1e-3 and elapsed < 10, f"L-inf error {err:.2e} at t=0.1 after {res.steps} steps in {elapsed:.1f}s")


def _random_state(seed):
    rng = np.random.default_rng([2024, seed])
    if seed % 2 == 0:
        g = make_grid(1, [int(rng.integers(4, 17))], [float(rng.uniform(0.5, 2.0))])
    else:
        g = make_grid(2, [int(rng.integers(2, 5)), int(rng.integers(2, 5))], [1.0, float(rng.uniform(0.5, 2.0))])
    u = rng.uniform(0.0, 2.0, g.shape)
    u[rng.uniform(size=g.shape) < 0.2] = 0.0  # degenerate cells
    v = rng.uniform(0.05, 1.5, g.shape)
    p = Params(chi=float(rng.uniform(0.5, 3.0)), ell=float(rng.uniform(0.5, 2.0)), alpha=float(rng.uniform(1.51, 1.58)))
    return State(g, u, v), p


def test_c3_discrete_budgets(verdict):
    t0 = time.perf_counter()
    worst = {"identity": 0.0, "mass_v_up": 0.0, "max_v_up": 0.0, "consumption_excess": -math.inf}
    min_v = math.inf
    steps = 0
    for seed in range(20):
        s, p = _random_state(seed)
        mass_v0 = integrate(s.grid, s.v)
        consumed = 0.0
        for _ in range(10_000):
            new, rep = step(s, p)
            worst["identity"] = max(worst["identity"], abs(rep.budget_defect) / rep.mass_u_after)
            worst["mass_v_up"] = max(worst["mass_v_up"], rep.mass_v_after - rep.mass_v_before)
            worst["max_v_up"] = max(worst["max_v_up"], rep.max_v - float(np.max(s.v)))
            min_v = min(min_v, rep.min_v)
            consumed += rep.consumption
            worst["consumption_excess"] = max(worst["consumption_excess"], consumed - mass_v0)
            s = new
            steps += 1
    elapsed = time.perf_counter() - t0
    ok = (
        worst["identity"] <= 1e-12
        and worst["mass_v_up"] <= 0.0
        and worst["max_v_up"] <= 0.0
        and min_v > 0
        and worst["consumption_excess"] <= 1e-10
        and elapsed < 120
    )
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    verdict(3, ok, f"{steps} steps: {detail}, min v={min_v:.2e}, {elapsed:.1f}s")


@pytest.fixture(scope="module")
def long_run():
    t0 = time.perf_counter()
    g = make_grid(2, [64, 64], [1.0, 1.0])
    spec = InitialDataSpec(u0_recipe="two-bump", v0_recipe="constant")
    rep, res = stabilization_experiment(g, spec, Params(alpha=1.55), 50.0, sample_every=0.5, certify=True)
    return rep, res, time.perf_counter() - t0


def test_c4_no_blowup(long_run, verdict):
    rep, res, elapsed = long_run
    recs = res.records
    series = {
        "int u^2": [r.lp_norms[key(2.0)] for r in recs],
        "int u^4": [r.lp_norms[key(4.0)] for r in recs],
        "H": [r.H for r in recs],
    }
    t = np.array([r.t for r in recs])
    early, late = t <= 1.0, t >= 1.0
    parts, ok = [], res.reason == HORIZON and rep.certified
    for name, y in series.items():
        y = np.array(y)
        ratio = float(np.max(y[late]) / np.max(y[early]))
        ok &= ratio < 10.0
        parts.append(f"{name} max[1,50]/max[0,1]={ratio:.3f}")
    # context only, not part of the verdict: late-time drift and the Jensen
    # floor (int u)^4 / |box|^3 that mass gain alone forces on int u^4
    late_drift = max(abs(y[-1] - y[t >= 20.0][0]) / y[-1] for y in map(np.array, series.values()))
    jensen = recs[-1].mass_u**4 / res.state.grid.volume**3 / max(np.array(series["int u^4"])[early])
    parts.append(f"(relative drift over [20,50] {late_drift:.1e}, Jensen floor ratio for int u^4 {jensen:.1f})")
    final = recs[-1].dissipation_budgets
    at40 = next(r for r in recs if r.t >= 40.0).dissipation_budgets
    growth = {k: (final[k] - at40[k]) / final[k] for k in final if final[k] > 0}
    worst_name = max(growth, key=growth.get)
    ok &= growth[worst_name] < 0.01 and elapsed < 600
    parts.append(f"worst last-decade budget growth {growth[worst_name]:.2e} ({worst_name}) over {len(growth)} channels")
    verdict(4, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


def test_c5_stabilization(long_run, verdict):
    rep, res, _ = long_run
    mass_ratio = rep.mass_v[-1] / rep.mass_v0
    grad_ratio = rep.grad_v_norm[-1] / max(rep.grad_v_norm)
    ok = mass_ratio < 1e-6 and grad_ratio < 1e-4 and rep.steady_time is not None and rep.steady_time < 50
    verdict(
        5,
        ok and rep.verdict["v_decay"] and rep.verdict["steady"],
        f"int v/int v0={mass_ratio:.2e}, |grad v|/peak={grad_ratio:.2e}, steady at t={rep.steady_time}",
    )


def test_c6_small_v0_nonconstancy(verdict):
    t0 = time.perf_counter()
    g = make_grid(2, [64, 64], [1.0, 1.0])
    spec = InitialDataSpec(u0_recipe="two-bump", v0_recipe="constant")
    sw = v0_sweep(g, spec, [1.0, 0.1, 0.01], Params(alpha=1.55), 50.0, sample_every=0.5, stop_on_steady=True)
    elapsed = time.perf_counter() - t0
    dist = [leg.report.final_dual_dist_u0 for leg in sw.legs]
    small = sw.legs[-1].report
    ratio = small.final_mean_distance / small.initial_mean_distance
    ok = dist[0] > dist[1] > dist[2] and ratio >= 0.5 and sw.sigma_hat > 0 and elapsed < 1800
    verdict(
        6,
        ok,
        f"final dual_dist_u0 {['%.4g' % d for d in dist]}, scale 0.01 mean-distance ratio {ratio:.3f}, "
        f"sigma_hat={sw.sigma_hat:.3f}, V={['%.4g' % v for v in sw.variations]}, {elapsed:.0f}s",
    )


def test_c7_dual_norm(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    lattice_gap = 0.0
    lattice_ok = True
    for n in (2, 3, 4):
        for _ in range(15):
            g = make_grid(1, [n], [float(rng.uniform(0.2, 3.0))])
            f = rng.normal(size=n)
            exact = dual_norm(g, f).value
            lat = lattice_oracle(g, f, levels=41)
            resolution = (2.0 / 40) * float(np.sum(np.abs(f))) * g.cell_volume
            lattice_ok &= lat <= exact + 1e-12 and exact - lat <= resolution + 1e-12
            lattice_gap = max(lattice_gap, (exact - lat) / resolution)
    const_err = 0.0
    for c, L in ((2.5, [1.0]), (-0.7, [1.0, 2.0]), (1e-3, [0.5, 0.5])):
        g = make_grid(len(L), [9] * len(L), L)
        vol = float(np.prod(L))
        const_err = max(const_err, abs(dual_norm(g, g.full(c)).value - abs(c) * vol))
    sign_err = 0.0
    sign_ok = True
    for n in (64, 256):
        g = make_grid(1, [n], [1.0])
        (x,) = g.mesh()
        e = abs(dual_norm(g, np.sign(x - 0.5)).value - 0.25)
        sign_ok &= e <= 2 * g.spacing[0]
        sign_err = max(sign_err, e / g.spacing[0])
    axiom_worst = 0.0
    for k in range(100):
        dim = 1 + k % 2
        g = make_grid(dim, [int(rng.integers(3, 17))] * dim, [float(rng.uniform(0.5, 2.0))] * dim)
        f, f2 = rng.normal(size=g.shape), rng.normal(size=g.shape)
        c = float(rng.uniform(-3, 3))
        a, b = dual_norm(g, f), dual_norm(g, f2)
        l1, l1b = integrate(g, np.abs(f)), integrate(g, np.abs(f2))
        tol = 1e-6 * (l1 + l1b)
        defects = [
            abs(dual_norm(g, c * f).value - abs(c) * a.value) / max(abs(c), 1.0),
            dual_norm(g, f + f2).value - a.value - b.value,
            a.value - l1,
            abs(integrate(g, f)) - a.value,
            max_violation(g, a.psi),
        ]
        axiom_worst = max(axiom_worst, max(d / tol for d in defects))
    elapsed = time.perf_counter() - t0
    ok = lattice_ok and const_err <= 1e-12 and sign_ok and axiom_worst <= 1.0 and elapsed < 120
    verdict(
        7,
        ok,
        f"lattice gap <= {lattice_gap:.2f} resolution, const err {const_err:.1e}, sign err <= {sign_err:.2f} h, "
        f"worst axiom defect {axiom_worst:.2e} of the 1e-6 gap, {elapsed:.1f}s",
    )


def test_c8_inequality_harness(verdict):
    t0 = time.perf_counter()
    g = make_grid(1, [64], [1.0])
    lines, ok = [], True
    for ident in IDS:
        for ex in ADMISSIBLE_POINTS[ident]:
            (entry,) = violation_hunt(ident, [ex], 100, seed=0, grid=g)
            other = fit_constant(ident, ex, 100, seed=5_000_011, grid=g)
            forced = constant_case(ident, ex, g).implied
            spread = abs(entry.c_hat - other.c_hat) / max(entry.c_hat, other.c_hat)
            point_ok = not entry.violations and not entry.unbounded and forced >= 1.0 - 1e-14 and spread <= 0.2
            ok &= point_ok
            lines.append(f"{ident} {ex}: C={entry.c_hat:.4g}/{other.c_hat:.4g} spread {spread:.1%}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    worst = max(lines, key=lambda s: float(s.rsplit("spread ", 1)[1].rstrip("%")))
    verdict(8, ok, f"12 points, 0 violations required; worst batch spread {worst}; {elapsed:.0f}s")


DETERMINISM_CFG = """
[grid]
dim = 2
cells = 24
extents = 1.0, 1.5

[params]
alpha = 1.55
dt_max = 1e-2

[initial]
u0_recipe = seeded-random
v0_recipe = cosine-mix
v0_floor = 0.1

[run]
horizon = 1.0
sample_every = 0.25
snapshot_every = 0.5

[diagnostics]
dual_norm = true

[sweep]
scales = 1, 0.1, 0.01
workers = 3
stop_on_steady = false
"""


def test_c9_determinism(tmp_path, verdict):
    t0 = time.perf_counter()
    cfg = tmp_path / "det.cfg"
    cfg.write_text(DETERMINISM_CFG)
    codes = []
    for threads in ("1", "8"):
        out = tmp_path / f"t{threads}"
        codes.append(cli.main(["run", "--config", str(cfg), "--out", str(out / "run"), "--seed", "11", "--threads", threads]))
        sweep_cfg = tmp_path / "sweep.cfg"
        sweep_cfg.write_text(DETERMINISM_CFG.replace("cells = 24", "cells = 12").replace("horizon = 1.0", "horizon = 0.5"))
        codes.append(cli.main(["sweep", "--config", str(sweep_cfg), "--out", str(out / "sweep"), "--seed", "11", "--threads", threads]))
    files = ["run/diagnostics.ndjson", "run/final.snap", "run/snapshots/state_00001.snap", "sweep/sweep.ndjson"]
    same = {f: (tmp_path / "t1" / f).read_bytes() == (tmp_path / "t8" / f).read_bytes() for f in files}
    lines = len((tmp_path / "t1" / "run/diagnostics.ndjson").read_text().splitlines())
    man = json.loads((tmp_path / "t1" / "run" / "manifest.json").read_text())
    elapsed = time.perf_counter() - t0
    ok = all(same.values()) and codes[0] == 0 and lines == 5 and man["seed"] == 11 and elapsed < 300
    verdict(9, ok, f"byte-identical {sum(same.values())}/{len(same)} files, exit codes {codes}, {elapsed:.0f}s")
