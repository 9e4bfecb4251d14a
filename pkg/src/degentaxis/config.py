"""
Sectioned ``key = value`` configuration.

::

    # comment
    [grid]
    dim = 2
    cells = 64            # one value is broadcast to every axis
    extents = 1.0, 1.0

    [params]
    alpha = 1.55

Lists are comma separated.  Booleans accept ``true/false/yes/no/1/0``.
Every problem is collected with its line number before anything is built;
unknown sections and keys are errors.  See ``docs/config-reference.md``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .functionals import DiagnosticsConfig
from .grid import Grid, GridError, make_grid
from .inequalities import ADMISSIBLE_POINTS, EXPONENT_NAMES, IDS
from .model import CERTIFIED_ALPHA_HI, CERTIFIED_ALPHA_LO, ModelError, Params
from .scenarios import InitialDataSpec, ScenarioError


class ConfigError(ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.issues))


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _float(s: str) -> float:
    x = float(s)
    if math.isnan(x):
        raise ValueError("NaN is not allowed")
    return x


def _int(s: str) -> int:
    return int(s.strip())


def _str(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        s = s[1:-1]
    return s


def _list(conv):
    def parse(s: str):
        items = [x.strip() for x in s.split(",") if x.strip()]
        return [conv(x) for x in items]

    return parse


def _optional_float(s: str):
    return None if s.strip().lower() in ("none", "off", "") else _float(s)


def _points(s: str):
    """``name:value, name:value ; name:value, ...`` into a list of dicts."""
    out = []
    for chunk in s.split(";"):
        if not chunk.strip():
            continue
        pt = {}
        for item in chunk.split(","):
            name, sep, val = item.partition(":")
            if not sep:
                raise ValueError(f"expected name:value, got {item.strip()!r}")
            pt[name.strip()] = _float(val)
        out.append(pt)
    return out


SCHEMA = {
    "grid": {"dim": _int, "cells": _list(_int), "extents": _list(_float)},
    "params": {
        "chi": _float,
        "ell": _float,
        "alpha": _float,
        "eps": _float,
        "safety": _float,
        "clip_policy": _str,
        "dt_max": _float,
        "mobility": _str,
        "diffusion_form": _str,
        "lin_tol": _float,
    },
    "initial": {
        "u0_recipe": _str,
        "v0_recipe": _str,
        "v0_scale": _float,
        "u0_floor": _float,
        "v0_floor": _float,
        "u0_value": _float,
        "v0_value": _float,
        "u0_amplitude": _float,
        "v0_amplitude": _float,
        "width": _float,
        "modes": _int,
        "seed": _int,
    },
    "run": {
        "horizon": _float,
        "sample_every": _float,
        "snapshot_every": _optional_float,
        "fixed_dt": _optional_float,
        "tol_v": _float,
        "tol_u": _float,
        "stop_on_steady": _bool,
        "certify": _bool,
    },
    "diagnostics": {
        "p_list": _list(_float),
        "q_list": _list(_float),
        "k_list": _list(_float),
        "dual_norm": _bool,
        "a_F": _float,
        "a_G": _float,
        "H_p": _float,
        "H_q": _float,
    },
    "output": {"directory": _str, "formats": _list(_str)},
    "sweep": {"scales": _list(_float), "workers": _int, "nonconst_fraction": _float, "stop_on_steady": _bool},
    "inequalities": {
        "ids": _list(_str),
        "samples": _int,
        "cells": _int,
        "seed": _int,
        "c_cap": _optional_float,
        **{ident: _points for ident in IDS},
    },
}

FORMATS = ("ndjson", "snap")


@dataclass
class RunSection:
    horizon: float = 10.0
    sample_every: float = 0.5
    snapshot_every: float | None = None
    fixed_dt: float | None = None
    tol_v: float = 1e-6
    tol_u: float = 1e-8
    stop_on_steady: bool = False
    certify: bool = False


@dataclass
class SweepSection:
    scales: list = field(default_factory=lambda: [1.0, 0.1, 0.01])
    workers: int = 1
    nonconst_fraction: float = 0.5
    stop_on_steady: bool = True


@dataclass
class InequalitySection:
    ids: list = field(default_factory=lambda: list(IDS))
    samples: int = 100
    cells: int = 64
    seed: int = 0
    c_cap: float | None = None
    points: dict = field(default_factory=lambda: {k: [dict(p) for p in v] for k, v in ADMISSIBLE_POINTS.items()})


@dataclass
class RunConfig:
    grid: Grid
    params: Params
    initial: InitialDataSpec
    run: RunSection
    diagnostics: DiagnosticsConfig
    output_directory: str | None = None
    formats: list = field(default_factory=lambda: list(FORMATS))
    sweep: SweepSection = field(default_factory=SweepSection)
    inequalities: InequalitySection = field(default_factory=InequalitySection)
    text: str = ""

    @property
    def seed(self) -> int:
        return self.initial.seed


def _lex(text: str):
    """Yield ``(values, lines, issues)``: per-section dicts of converted values."""
    values: dict = {}
    lines: dict = {}
    issues = []
    section = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                issues.append((ln, f"malformed section header {raw.strip()!r}"))
                section = None
                continue
            section = line[1:-1].strip()
            if section not in SCHEMA:
                issues.append((ln, f"unknown section [{section}]; known: {', '.join(SCHEMA)}"))
                section = None
                continue
            values.setdefault(section, {})
            lines.setdefault(section, {"": ln})
            continue
        name, sep, val = line.partition("=")
        name = name.strip()
        if not sep:
            issues.append((ln, f"expected 'key = value', got {raw.strip()!r}"))
            continue
        if section is None:
            issues.append((ln, f"key {name!r} outside a known section"))
            continue
        conv = SCHEMA[section].get(name)
        if conv is None:
            issues.append((ln, f"unknown key {name!r} in [{section}]"))
            continue
        if name in values[section]:
            issues.append((ln, f"duplicate key {name!r} in [{section}] (first on line {lines[section][name]})"))
            continue
        try:
            values[section][name] = conv(val)
        except ValueError as exc:
            issues.append((ln, f"{section}.{name}: {exc}"))
            continue
        lines[section][name] = ln
    return values, lines, issues


def _line_for(lines: dict, section: str, message: str) -> int | None:
    sec = lines.get(section, {})
    for name, ln in sec.items():
        if name and name in message:
            return ln
    return sec.get("")


def parse_config(text: str, certify: bool | None = None, seed: int | None = None) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem.

    ``certify`` and ``seed`` override the file (command-line flags).
    """
    values, lines, issues = _lex(text)

    def build(section, fn):
        try:
            return fn()
        except (ModelError, GridError, ScenarioError, ValueError, TypeError) as exc:
            for part in str(exc).split("; "):
                issues.append((_line_for(lines, section, part), f"[{section}] {part}"))
            return None

    g = values.get("grid", {})

    def make():
        dim = g.get("dim", 2)
        cells = g.get("cells", [64])
        ext = g.get("extents", [1.0])
        if len(cells) == 1:
            cells = cells * dim
        if len(ext) == 1:
            ext = ext * dim
        return make_grid(dim, cells, ext)

    grid = build("grid", make)
    params = build("params", lambda: Params(**values.get("params", {})))
    init = dict(values.get("initial", {}))
    if seed is not None:
        init["seed"] = int(seed)
    spec = build("initial", lambda: InitialDataSpec(**init))
    run = RunSection(**values.get("run", {}))
    if certify is not None:
        run.certify = certify or run.certify
    for name in ("horizon", "sample_every"):
        if not getattr(run, name) > 0:
            issues.append((_line_for(lines, "run", name), f"[run] {name} must be > 0"))
    for name in ("snapshot_every", "fixed_dt"):
        x = getattr(run, name)
        if x is not None and not x > 0:
            issues.append((_line_for(lines, "run", name), f"[run] {name} must be > 0 or none"))
    alpha = values.get("params", {}).get("alpha", Params.alpha)
    if run.certify and not CERTIFIED_ALPHA_LO < alpha < CERTIFIED_ALPHA_HI:
        issues.append(
            (
                _line_for(lines, "params", "alpha"),
                f"[params] alpha = {alpha} outside the certified window (3/2, 19/12) required by certify",
            )
        )

    d = values.get("diagnostics", {})
    diag = build("diagnostics", lambda: DiagnosticsConfig.defaults(alpha, **d))
    for name in ("q_list",):
        if diag is not None and any(q < 2 for q in diag.q_list):
            issues.append((_line_for(lines, "diagnostics", name), "[diagnostics] q_list entries must be >= 2"))

    out = values.get("output", {})
    formats = out.get("formats", list(FORMATS))
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        issues.append((_line_for(lines, "output", "formats"), f"[output] unknown formats {bad}; known: {FORMATS}"))

    sw = SweepSection(**values.get("sweep", {}))
    if any(not s > 0 for s in sw.scales):
        issues.append((_line_for(lines, "sweep", "scales"), "[sweep] scales must be > 0"))
    if sw.workers < 1:
        issues.append((_line_for(lines, "sweep", "workers"), "[sweep] workers must be >= 1"))

    iq = dict(values.get("inequalities", {}))
    points = {k: [dict(p) for p in v] for k, v in ADMISSIBLE_POINTS.items()}
    for ident in IDS:
        if ident in iq:
            points[ident] = iq.pop(ident)
            for pt in points[ident]:
                extra = set(pt) - set(EXPONENT_NAMES[ident])
                if extra:
                    issues.append(
                        (_line_for(lines, "inequalities", ident), f"[inequalities] {ident}: unknown exponents {sorted(extra)}")
                    )
    ineq = InequalitySection(points=points, **iq)
    if seed is not None:
        ineq.seed = int(seed)
    unknown = [i for i in ineq.ids if i not in IDS]
    if unknown:
        issues.append((_line_for(lines, "inequalities", "ids"), f"[inequalities] unknown ids {unknown}; known: {IDS}"))
    if ineq.samples < 1:
        issues.append((_line_for(lines, "inequalities", "samples"), "[inequalities] samples must be >= 1"))
    if ineq.cells < 2:
        issues.append((_line_for(lines, "inequalities", "cells"), "[inequalities] cells must be >= 2"))

    if issues:
        raise ConfigError(sorted(issues, key=lambda x: (x[0] or 0)))
    return RunConfig(
        grid=grid,
        params=params,
        initial=spec,
        run=run,
        diagnostics=diag,
        output_directory=out.get("directory"),
        formats=formats,
        sweep=sw,
        inequalities=ineq,
        text=text,
    )


def load_config(path, **kw) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **kw)
