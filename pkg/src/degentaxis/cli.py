"""
Command-line entry point: ``degentaxis <command> [options]``.

Exit codes: 0 success, 2 a scientific verdict failed, 1 any error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .dualnorm import dual_norm
from .grid import make_grid
from .inequalities import ADMISSIBLE_POINTS, violation_hunt, write_csv
from .io import NdjsonSink, SnapshotError, ndjson_line, read_snapshot, resolve_out_dir, write_manifest, write_snapshot
from .model import State
from .scenarios import make_initial_data, v0_sweep
from .stepper import INSTABILITY, run

log = logging.getLogger("degentaxis")

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2


def _load(args) -> RunConfig:
    text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
    return parse_config(text, certify=True if args.certify else None, seed=args.seed)


def _out_dir(args, cfg: RunConfig) -> Path:
    d = resolve_out_dir(args.out, cfg.output_directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _trajectory(args, cfg: RunConfig, command: str, stop_on_steady: bool) -> int:
    out = _out_dir(args, cfg)
    snaps = "snap" in cfg.formats
    outputs = []
    if "ndjson" in cfg.formats:
        outputs.append("diagnostics.ndjson")
    if snaps:
        outputs.append("final.snap")
        if cfg.run.snapshot_every:
            outputs.append("snapshots/")
    write_manifest(out, config_text=cfg.text, seed=cfg.seed, grid=cfg.grid, command=command, outputs=outputs)

    u0, v0, K = make_initial_data(cfg.grid, cfg.initial)
    log.info("initial data bound K = %.6g", K)
    sinks = []
    sink = NdjsonSink(out / "diagnostics.ndjson") if "ndjson" in cfg.formats else None
    if sink is not None:
        sinks.append(sink)
    try:
        res = run(
            State(cfg.grid, u0, v0),
            cfg.params,
            cfg.run.horizon,
            diagnostics=cfg.diagnostics,
            sample_every=cfg.run.sample_every,
            snapshot_every=cfg.run.snapshot_every if snaps else None,
            sinks=sinks,
            stop_on_steady=stop_on_steady or cfg.run.stop_on_steady,
            tol_v=cfg.run.tol_v,
            tol_u=cfg.run.tol_u,
            certify=cfg.run.certify,
            crash_dir=out,
            fixed_dt=cfg.run.fixed_dt,
        )
    finally:
        if sink is not None:
            sink.close()
    if snaps:
        if res.snapshots:
            sdir = out / "snapshots"
            sdir.mkdir(exist_ok=True)
            for k, (t, u, v) in enumerate(res.snapshots):
                write_snapshot(sdir / f"state_{k:05d}.snap", State(cfg.grid, u, v, t))
        write_snapshot(out / "final.snap", res.state)
    summary = {
        "reason": res.reason,
        "steps": res.steps,
        "t": res.state.t,
        "steady_time": res.steady_time,
        "clip_total": res.clip_total,
    }
    print(ndjson_line(summary), end="")
    if res.reason == INSTABILITY:
        log.error("run aborted; crash snapshot in %s", out)
        return EXIT_ERROR
    if command == "steady" and res.steady_time is None:
        log.warning("no steady state detected before the horizon")
        return EXIT_VERDICT
    return EXIT_OK


def cmd_run(args) -> int:
    return _trajectory(args, _load(args), "run", False)


def cmd_steady(args) -> int:
    return _trajectory(args, _load(args), "steady", True)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    write_manifest(
        out, config_text=cfg.text, seed=cfg.seed, grid=cfg.grid, command="sweep", outputs=["sweep.ndjson", "sweep.txt"]
    )
    workers = min(cfg.sweep.workers, args.threads) if args.threads else cfg.sweep.workers
    rep = v0_sweep(
        cfg.grid,
        cfg.initial,
        cfg.sweep.scales,
        cfg.params,
        cfg.run.horizon,
        sample_every=cfg.run.sample_every,
        stop_on_steady=cfg.sweep.stop_on_steady,
        nonconst_fraction=cfg.sweep.nonconst_fraction,
        workers=workers,
    )
    with open(out / "sweep.ndjson", "w", encoding="utf-8") as fh:
        for leg in rep.legs:
            fh.write(
                ndjson_line(
                    {
                        "scale": leg.scale,
                        "mass_v0": leg.mass_v0,
                        "variation": leg.variation,
                        "mass_u_gain": leg.mass_u_gain,
                        "consumption": leg.consumption,
                        "clip_total": leg.clip_total,
                        "steps": leg.steps,
                        "report": leg.report.to_dict(),
                    }
                )
            )
        sigma = rep.sigma_hat if rep.sigma_hat == rep.sigma_hat else None
        fh.write(ndjson_line({"sigma_hat": sigma, "log_c": rep.log_c if sigma is not None else None, "flags": rep.flags}))
    table = rep.summary_table()
    (out / "sweep.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    if rep.flags or not rep.sigma_hat > 0:
        return EXIT_VERDICT
    return EXIT_OK


def cmd_verify_inequalities(args) -> int:
    cfg = _load(args)
    iq = cfg.inequalities
    out = _out_dir(args, cfg)
    write_manifest(
        out,
        config_text=cfg.text,
        seed=iq.seed,
        grid=make_grid(1, [iq.cells], [1.0]),
        command="verify-inequalities",
        outputs=["inequalities.csv", "inequalities.ndjson"],
    )
    grid = make_grid(1, [iq.cells], [1.0])
    failed = False
    cases = []
    with open(out / "inequalities.ndjson", "w", encoding="utf-8") as fh:
        for ident in iq.ids:
            for entry in violation_hunt(ident, iq.points.get(ident, ADMISSIBLE_POINTS[ident]), iq.samples, iq.seed, grid, iq.c_cap):
                row = {
                    "id": ident,
                    "exponents": entry.exponents,
                    "admissible": entry.admissible,
                    "violated_hypotheses": entry.violated_hypotheses,
                }
                if entry.admissible:
                    row.update(
                        c_hat=entry.c_hat,
                        c_cap=entry.c_cap,
                        violations=len(entry.violations),
                        unbounded=entry.unbounded,
                    )
                    cases.extend(entry.cases)
                    if entry.violations or entry.unbounded:
                        failed = True
                    print(f"{ident} {entry.exponents}: C_hat = {entry.c_hat:.6g}, violations = {len(entry.violations)}")
                else:
                    row.update(refinement=entry.refinement, growth_rate=entry.growth_rate if entry.refinement else None)
                    if row["growth_rate"] is not None and row["growth_rate"] != row["growth_rate"]:
                        row["growth_rate"] = None
                    print(f"{ident} {entry.exponents}: inadmissible ({'; '.join(entry.violated_hypotheses)})")
                fh.write(ndjson_line(row))
    write_csv(out / "inequalities.csv", cases)
    return EXIT_VERDICT if failed else EXIT_OK


def cmd_dual_norm(args) -> int:
    a = read_snapshot(args.snapshots[0])
    b = read_snapshot(args.snapshots[1])
    if a.grid != b.grid:
        raise SnapshotError("snapshots live on different grids")
    res = dual_norm(a.grid, a.u - b.u)
    print(ndjson_line({"dual_norm": res.value, "upper_bound": res.upper, "method": res.method}), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (sectioned key = value)")
    common.add_argument("--out", help="output directory (else config, DEGENTAXIS_OUT, ./out)")
    common.add_argument("--seed", type=int, help="override the initial-data / sampling seed")
    common.add_argument("--certify", action="store_true", help="require alpha in (3/2, 19/12)")
    common.add_argument("--threads", type=int, default=None, help="cap on BLAS threads and sweep workers")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="degentaxis", description="Doubly degenerate nutrient-taxis simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one trajectory to the horizon").set_defaults(fn=cmd_run)
    sub.add_parser("steady", parents=[common], help="run until steady state is detected").set_defaults(fn=cmd_steady)
    sub.add_parser("sweep", parents=[common], help="nutrient-scale sweep and exponent fit").set_defaults(fn=cmd_sweep)
    sub.add_parser(
        "verify-inequalities", parents=[common], help="fit constants and hunt for violations"
    ).set_defaults(fn=cmd_verify_inequalities)
    dn = sub.add_parser("dual-norm", parents=[common], help="dual-norm distance between two snapshots")
    dn.add_argument("snapshots", nargs=2, metavar="SNAP")
    dn.set_defaults(fn=cmd_dual_norm)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        with threadpool_limits(limits=args.threads):
            return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
