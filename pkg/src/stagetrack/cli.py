"""Command-line entry points: coverage, simulate, serve, replay-check."""

from __future__ import annotations

import argparse
import sys

from .config import (
    load_config_sections,
    load_motion_script,
    load_stage_config,
    filter_params_from_dict,
    noise_from_dict,
    script_from_dict,
    solver_options_from_dict,
    stage_from_dict,
)
from .errors import ConfigError, StageTrackError
from .eventlog import read_log, replay_check, summarize_log, write_log
from .geometry import coverage_map
from .service import CaptureSource, ReplaySource, SimulationSource, TelemetryServer
from .sim import run_simulation


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stagetrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coverage", help="grid coverage analysis of an anchor layout")
    p.add_argument("config", help="stage config JSON")
    p.add_argument("--cell-size", type=float, default=0.25, help="grid cell size in meters")
    p.add_argument("--hdop-max", type=float, default=6.0, help="HDOP threshold for a covered cell")
    p.add_argument("--min-anchors", type=int, default=3, help="minimum anchors in range")
    p.add_argument("--eval-height", type=float, default=1.0, help="evaluation height in meters")
    p.add_argument("--out", default=None, help="CSV output path (default: stdout)")

    p = sub.add_parser("simulate", help="run the simulator through the full pipeline")
    p.add_argument("config", help="stage config JSON")
    p.add_argument("script", help="motion script JSON")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--duration", type=float, default=15.0, help="seconds of simulated time")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--out", required=True, help="event log output path (NDJSON)")
    p.add_argument(
        "--run-past-end",
        action="store_true",
        help="keep simulating after the show reaches its end scene",
    )

    p = sub.add_parser("serve", help="telemetry/command service over a socket")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--sim", metavar="CONFIG", help="simulation source: stage config JSON")
    src.add_argument("--replay", metavar="LOG", help="replay source: event log NDJSON")
    src.add_argument("--capture", metavar="BIN", help="capture source: raw wire-frame file")
    p.add_argument("--script", help="motion script JSON (simulation source)")
    p.add_argument("--config", help="stage config JSON (capture source)")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ws-port", type=int, default=None, help="optional WebSocket listener port")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--speed", type=float, default=1.0, help="pacing multiplier")

    p = sub.add_parser("replay-check", help="verify a log's events against recomputation")
    p.add_argument("log", help="event log NDJSON")
    return parser


def _cmd_coverage(args) -> int:
    stage = load_stage_config(args.config)
    grid = coverage_map(
        stage,
        cell_size=args.cell_size,
        hdop_max=args.hdop_max,
        min_anchors=args.min_anchors,
        eval_height=args.eval_height,
    )
    lines = ["x_idx,y_idx,anchors,hdop,covered"]
    for ix, iy, anchors, hdop, covered in grid.csv_rows():
        hdop_text = "" if hdop is None else f"{hdop:.6g}"
        lines.append(f"{ix},{iy},{anchors},{hdop_text},{int(covered)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"covered_fraction={grid.covered_fraction:.3f}")
    return 0


def _cmd_simulate(args) -> int:
    sections = load_config_sections(args.config)
    stage = stage_from_dict(sections)
    script = load_motion_script(args.script)
    noise = noise_from_dict(sections.get("noise"))
    solve_opts = solver_options_from_dict(sections.get("solver"))
    filter_params = filter_params_from_dict(sections.get("filter"))
    records = run_simulation(
        stage,
        script,
        noise,
        seed=args.seed,
        duration_s=args.duration,
        fps=args.fps,
        solve_opts=solve_opts,
        filter_params=filter_params,
        stop_at_end=not args.run_past_end,
    )
    write_log(args.out, records)
    summary = summarize_log(records)
    raw = summary["raw_rmse"]
    fused = summary["fused_rmse"]
    print(f"frames={summary['n_frames']} zone_events={summary['zone_events']}")
    print(f"raw_rmse_m={raw:.4f}" if raw is not None else "raw_rmse_m=n/a")
    print(f"fused_rmse_m={fused:.4f}" if fused is not None else "fused_rmse_m=n/a")
    print(f"final_scene={summary['final_scene'] or 'n/a'}")
    return 0


def _cmd_serve(args) -> int:
    if args.sim:
        sections = load_config_sections(args.sim)
        stage = stage_from_dict(sections)
        if not args.script:
            raise ConfigError("--sim needs --script")
        source = SimulationSource(
            stage,
            load_motion_script(args.script),
            noise_from_dict(sections.get("noise")),
            seed=args.seed,
            fps=args.fps,
            speed=args.speed,
            solve_opts=solver_options_from_dict(sections.get("solver")),
            filter_params=filter_params_from_dict(sections.get("filter")),
        )
    elif args.replay:
        source = ReplaySource(read_log(args.replay), speed=args.speed)
    else:
        if not args.config:
            raise ConfigError("--capture needs --config")
        sections = load_config_sections(args.config)
        source = CaptureSource(
            args.capture,
            stage_from_dict(sections),
            fps=args.fps,
            speed=args.speed,
            solve_opts=solver_options_from_dict(sections.get("solver")),
            filter_params=filter_params_from_dict(sections.get("filter")),
        )
    try:
        server = TelemetryServer(source, host=args.host, port=args.port, ws_port=args.ws_port)
    except OSError as e:
        print(f"cannot bind port: {e}", file=sys.stderr)
        return 2
    print(
        f"serving telemetry on {args.host}:{server.port}"
        + (f" (ws {server.ws_port})" if server.ws_port else ""),
        flush=True,
    )
    server.run_forever()
    return 0


def _cmd_replay_check(args) -> int:
    records = read_log(args.log)
    divergence = replay_check(records)
    if divergence is None:
        print("replay check ok")
        return 0
    print(f"replay check FAILED: {divergence}", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "coverage": _cmd_coverage,
        "simulate": _cmd_simulate,
        "serve": _cmd_serve,
        "replay-check": _cmd_replay_check,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, StageTrackError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
