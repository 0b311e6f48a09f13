"""Command line interface.

Verbs: selftest, study, serve, replay. Exit codes: 0 ok, 1 validation
failure (bad inputs, failed checks, replay mismatch), 2 runtime error.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .errors import FluoroNavError, SceneValidationError
from .study import StudyConfig, run_blind_trial, run_guided_trial, run_study


def _check(name: str, passed: bool, detail: str) -> bool:
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return passed


def cmd_selftest(args) -> int:
    """Fast invariant suite over registration, dewarp, and calibration."""
    from .calibration import estimate_source, make_grid, pinhole_to_detector, triangulate
    from .distortion import DistortionParams, distort, fit_dewarp_points, dewarp
    from .geometry import register_point_sets, rotation_vector_to_matrix
    from .scene import default_scene, build_world
    from .navigation import NavigationSession, render_overlays

    rng = np.random.default_rng(args.seed)
    ok = True

    worst = 0.0
    for _ in range(200):
        model = rng.normal(scale=60.0, size=(6, 3))
        R = rotation_vector_to_matrix(rng.normal(size=3))
        t = rng.normal(scale=50.0, size=3)
        observed = model @ R.T + t
        pose, rms = register_point_sets(model, observed)
        worst = max(worst, rms, abs(np.linalg.det(pose.rotation) - 1.0))
    ok &= _check("registration", worst < 1e-9, f"worst residual {worst:.2e} mm over 200 sets")

    params = DistortionParams(k1=1e-7, s_rot=0.01)
    xs = np.arange(-5, 6) * 90.0
    lattice = np.array([(x, y) for y in xs for x in xs])
    lattice = lattice[np.linalg.norm(lattice, axis=1) <= 450.0 + 1e-9]
    model = fit_dewarp_points(distort(lattice, params), lattice, degree=4)
    r = 450.0 * np.sqrt(rng.random(500))
    th = 2 * np.pi * rng.random(500)
    hold = np.column_stack([r * np.cos(th), r * np.sin(th)])
    res = np.linalg.norm(dewarp(distort(hold, params), model) - hold, axis=1)
    rms = float(np.sqrt(np.mean(res**2)))
    ok &= _check("dewarp", rms < 0.5, f"held-out rms {rms:.3f} px (500 points)")

    grid = make_grid(lower_spacing_mm=39.6)
    worst_src = 0.0
    for _ in range(20):
        src = np.array([0.0, 0.0, 900.0]) + rng.normal(scale=25.0, size=3)
        pairs = [
            (f.fiducial_id, grid.detector.mm_to_px(pinhole_to_detector(src, np.asarray(f.position_mm))))
            for f in grid.upper_fiducials
        ]
        est = estimate_source(pairs, grid)
        worst_src = max(worst_src, float(np.linalg.norm(est.source_grid_mm - src)))
    ok &= _check("source", worst_src < 1e-6, f"worst noiseless error {worst_src:.2e} mm over 20 shots")

    world = build_world(default_scene())
    srng = np.random.default_rng(args.seed)
    ap, _, _ = world.calibrated_shot("AP", "calibration_shot", srng, view_id="AP")
    lat, _, _ = world.calibrated_shot("lateral", "nav_shot", srng, view_id="lateral")
    session = NavigationSession([ap, lat], world.tool, world=world.simulator)
    worst_tri = 0.0
    for _ in range(100):
        frame = world.simulator.tick()
        overlays = render_overlays(session, frame)
        tip = world.true_tool_ray().origin
        rec, gap = triangulate(session.views, [o.tip_2d_mm for o in overlays])
        worst_tri = max(worst_tri, float(np.linalg.norm(rec - tip)), gap)
    ok &= _check("multi-view", worst_tri < 1e-6, f"worst tip gap {worst_tri:.2e} mm over 100 frames")

    return 0 if ok else 1


def cmd_study(args) -> int:
    config = StudyConfig(
        n_trials=args.trials,
        seed=args.seed,
        guided_tracker_sigma_mm=args.tracker_sigma,
        blind_entry_sigma_mm=args.blind_entry_sigma,
        blind_angle_sigma_deg=args.blind_angle_sigma,
    )
    t0 = time.time()
    if args.arm == "both":
        report = run_study(config)
        print(
            f"guided {report.guided.breach_count}/{report.guided.n_trials} breaches, "
            f"blind {report.blind.breach_count}/{report.blind.n_trials}, "
            f"p={report.p_value:.2e}, exposure ratio {report.exposure_ratio:.3f} "
            f"({time.time() - t0:.1f}s)"
        )
        if args.out_dir:
            from .report import write_study_outputs

            paths = write_study_outputs(report, args.out_dir)
            print(f"wrote {paths['json']}, {paths['csv']}, {len(paths['figures'])} figures")
    else:
        runner = run_guided_trial if args.arm == "guided" else run_blind_trial
        breaches = 0
        for i in range(config.n_trials):
            record = runner(config, i)[0]
            breaches += record.breach_mm > 0.0
        print(f"{args.arm} arm: {breaches}/{config.n_trials} breaches ({time.time() - t0:.1f}s)")
    return 0


def cmd_serve(args) -> int:
    from .server import run_server

    print(f"session API on ws://{args.host}:{args.port}")
    run_server(args.host, args.port, args.log_dir)
    return 0


def cmd_replay(args) -> int:
    from .report import write_session_report
    from .session import replay_file

    if not Path(args.log).is_file():
        print(f"validation error: no such log {args.log}", file=sys.stderr)
        return 1
    result = replay_file(args.log)
    n_frames = sum(1 for e in result.replayed_events if e.kind == "frame")
    if result.identical:
        print(f"replay ok: {len(result.replayed_events)} events, {n_frames} frames byte-identical")
    else:
        for m in result.mismatches[:10]:
            print(f"mismatch at seq {m['seq']}: {m['reason']}")
        print(f"replay FAILED: {len(result.mismatches)} mismatches")
    if args.out_dir:
        paths = write_session_report(result.replayed_events, args.out_dir)
        print(f"wrote {paths['json']}, {len(paths['figures'])} figures")
    return 0 if result.identical else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluoronav", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("selftest", help="run the calibration/registration invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("study", help="run the guided-vs-freehand Monte-Carlo study")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arm", choices=("both", "guided", "blind"), default="both")
    p.add_argument("--tracker-sigma", type=float, default=0.15, help="guided-arm marker noise [mm]")
    p.add_argument("--blind-entry-sigma", type=float, default=0.5, help="freehand entry noise [mm]")
    p.add_argument("--blind-angle-sigma", type=float, default=1.25, help="freehand angle noise [deg]")
    p.add_argument("--out-dir", default=None, help="write study.json/.csv and figures here")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("serve", help="host the session API over WebSocket")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--log-dir", default=None, help="write per-session JSONL event logs here")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="re-execute a session log and verify byte-identity")
    p.add_argument("log", help="path to a session JSONL event log")
    p.add_argument("--out-dir", default=None, help="write calibration report and figures here")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SceneValidationError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except FluoroNavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
