"""Command-line front end: ``synth``, ``run``, ``eval``, ``sweep`` and ``bench``.

Exit codes: 0 success, 1 usage or validation error, 2 I/O or parse error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig
from .evaluation import ALGORITHMS, assign_targets, detection_probability, rmse, run_estimator, run_sweep
from .exceptions import (
    AlignmentError,
    DelayDopplerError,
    IllConditionedError,
    NumericalError,
    ParseError,
    UndefinedMetricError,
    ValidationError,
)
from .formats import (
    BENCH_FIELDS,
    DETAIL_FIELDS,
    ESTIMATE_FIELDS,
    RESULT_FIELDS,
    read_csv,
    read_ctf1,
    read_estimates,
    read_ground_truth,
    write_csv,
    write_ctf1,
    write_ground_truth,
    write_spectrum,
)
from .signal_model import ChannelFrame, scene_ground_truth, synthesize_scene_frame
from .spectrum import background_subtract, hamming_window, periodogram

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    """Bad command line; mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract reserves 2 for I/O
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="flat 'section.key = value' config file")
    p.add_argument("--set", metavar="K=V", action="append", default=[], dest="overrides",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, help="root seed (same as --set seed=N)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--out", metavar="PATH", default="-", help="output path ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="delaydoppler", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="synthesise a CTF1 frame file and its ground truth")
    _common(p)
    p.add_argument("--frames", type=int, help="number of frames (synth.frames)")
    p.add_argument("--truth", metavar="PATH", help="ground-truth CSV (default <out>.truth.csv)")

    p = sub.add_parser("run", help="run an estimator over a CTF1 file")
    _common(p)
    p.add_argument("input", help="CTF1 frame file")
    p.add_argument("--algorithm", required=True, help=f"one of {', '.join(ALGORITHMS)}")
    p.add_argument("--spectrum", metavar="PATH", help="also write the periodogram of frame 0 as CSV")

    p = sub.add_parser("eval", help="score estimates against ground truth")
    _common(p)
    p.add_argument("estimates", help="estimates CSV written by 'run'")
    p.add_argument("truth", help="ground-truth CSV written by 'synth'")
    p.add_argument("--boundary", type=float, help="match box as a fraction of the resolution")
    p.add_argument("--detail", metavar="PATH", help="also write the per-frame detail CSV")

    p = sub.add_parser("sweep", help="detection probability over bistatic angles")
    _common(p)
    p.add_argument("--angles", help="comma-separated angles in degrees (sweep.angles)")
    p.add_argument("--algorithms", help="comma-separated algorithm names (sweep.algorithms)")
    p.add_argument("--frames", type=int, help="frames per angle (sweep.frames)")
    p.add_argument("--boundary", type=float, help="match box as a fraction of the resolution")

    p = sub.add_parser("bench", help="wall-clock time per frame for each algorithm")
    _common(p)
    p.add_argument("--frames", type=int, default=5, help="frames per algorithm (default 5)")
    p.add_argument("--algorithms", help="comma-separated algorithm names (sweep.algorithms)")
    return parser


def _config(args, **extra):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    for key, value in extra.items():
        if value is not None:
            overrides.append(f"{key}={value}")
    return RunConfig.load(args.config, overrides)


def _algorithms(text):
    names = tuple(text) if isinstance(text, tuple) else tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [n for n in names if n not in ALGORITHMS]
    if bad:
        raise UsageError(f"unknown algorithm {bad[0]!r}; valid names: {', '.join(ALGORITHMS)}")
    return names


def _jobs(args):
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return args.jobs


def _map(fn, tasks, jobs):
    # results come back in task order whatever the completion order
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


# ------------------------------------------------------------------- synth


def _synth_task(args):
    scene, grid, n, seed = args
    frame, _ = synthesize_scene_frame(scene, grid, n, seed)
    return frame.data


def cmd_synth(args) -> int:
    cfg = _config(args, **{"synth.frames": args.frames})
    if args.out == "-":
        raise UsageError("synth needs --out PATH for the binary frame file")
    grid, scene, n = cfg.grid(), cfg.scene(), cfg["synth.frames"]
    if n < 1:
        raise ValidationError("synth.frames must be >= 1")
    frames = _map(_synth_task, [(scene, grid, i, cfg["seed"]) for i in range(n)], _jobs(args))
    write_ctf1(args.out, grid, frames)
    truth_path = args.truth or f"{args.out}.truth.csv"
    write_ground_truth(truth_path, scene_ground_truth(scene, grid, n), cfg.header("synth"))
    return EXIT_OK


# --------------------------------------------------------------------- run


def _run_task(args):
    data, grid, algorithm, cfar_cfg, mle_cfg, bg = args
    frame = ChannelFrame(grid, data)
    start = time.perf_counter()
    found = run_estimator(frame, algorithm, cfar_cfg, mle_cfg, bg)
    return found, time.perf_counter() - start


def cmd_run(args) -> int:
    (algorithm,) = _algorithms(args.algorithm)
    cfg = _config(args)
    grid, data = read_ctf1(args.input)
    bg = cfg["preprocess.background_subtraction"]
    tasks = [(data[n], grid, algorithm, cfg.cfar(), cfg.mle(), bg) for n in range(len(data))]
    outcomes = _map(_run_task, tasks, _jobs(args))
    timing = cfg["output.timing"]
    rows = []
    for n, (found, runtime) in enumerate(outcomes):
        for p in found:
            w = complex(p.weight)
            rows.append((n, p.delay, p.doppler, w.real, w.imag, runtime if timing else None))
    header = [*cfg.header("run"), f"algorithm = {algorithm}", f"input = {args.input}"]
    write_csv(args.out, ESTIMATE_FIELDS, rows, header)
    if args.spectrum and len(data):
        spec = periodogram(_preprocessed(ChannelFrame(grid, data[0]), bg))
        write_spectrum(args.spectrum, spec, header)
    return EXIT_OK


def _preprocessed(frame, bg):
    return hamming_window(background_subtract(frame) if bg else frame)


# -------------------------------------------------------------------- eval


def _comment_value(comments, key):
    for line in comments:
        name, sep, value = line.partition("=")
        if sep and name.strip() == key:
            return value.strip()
    return None


def cmd_eval(args) -> int:
    cfg = _config(args, **{"eval.boundary": args.boundary})
    estimates, est_comments = read_estimates(args.estimates)
    truth = read_ground_truth(args.truth)
    _, truth_comments = read_csv(args.truth, ())
    known = set(int(n) for n in truth.frames)
    extra = sorted(set(estimates) - known)
    if extra:
        raise AlignmentError(f"estimate frame {extra[0]} has no ground-truth entry in {args.truth}")
    # resolutions come from the grid echoed in the truth header, else the config
    for key in ("grid.K", "grid.L", "grid.delta_f", "grid.delta_t"):
        value = _comment_value(truth_comments, key)
        if value is not None and not any(o.startswith(key + "=") for o in args.overrides):
            cfg.set(key, value)
    grid = cfg.grid()
    results = []
    for r, n in enumerate(truth.frames):
        gt = np.column_stack([truth.delays[r], truth.dopplers[r]])
        results.append(assign_targets(estimates.get(int(n), []), gt, cfg.boundary(), grid, int(n)))
    if not results:
        raise AlignmentError(f"{args.truth} holds no frames")
    det = detection_probability(results)
    try:
        d_rmse, a_rmse = rmse(results)
    except UndefinedMetricError:
        d_rmse = a_rmse = math.nan
    angle = _comment_value(truth_comments, "scene.bistatic_angle_deg")
    algorithm = _comment_value(est_comments, "algorithm") or ""
    los = _comment_value(truth_comments, "scene.los_gain_db")
    row = (
        float(angle) if angle else math.nan,
        algorithm,
        det,
        d_rmse,
        a_rmse,
        math.nan,
        float(los) if los else math.nan,
        len(results),
        sum(r.n_matched for r in results),
        sum(r.false_detections for r in results),
    )
    header = [*cfg.header("eval"), f"estimates = {args.estimates}", f"truth = {args.truth}"]
    header += [f"det_prob_sphere_{s} = {detection_probability(results, s)!r}" for s in range(len(results[0].matched))]
    write_csv(args.out, RESULT_FIELDS, [row], header)
    if args.detail:
        write_csv(args.detail, DETAIL_FIELDS, _detail_rows(results), header)
    return EXIT_OK


def _detail_rows(results):
    for r in results:
        for s, hit in enumerate(r.matched):
            yield (r.frame, s, hit, r.delay_errors[s], r.doppler_errors[s])


# ------------------------------------------------------------------- sweep


def cmd_sweep(args) -> int:
    cfg = _config(
        args,
        **{
            "sweep.angles": args.angles,
            "sweep.algorithms": args.algorithms,
            "sweep.frames": args.frames,
            "eval.boundary": args.boundary,
        },
    )
    algorithms = _algorithms(cfg["sweep.algorithms"])
    jobs = _jobs(args)
    timing = cfg["output.timing"]
    rows = []
    for algorithm in algorithms:
        report = run_sweep(
            cfg.scene(),
            cfg["sweep.angles"],
            algorithm,
            cfg["sweep.frames"],
            cfg["seed"],
            cfg.grid(),
            cfg.cfar(),
            cfg.mle(),
            cfg.boundary(),
            cfg.los_profile(),
            cfg["preprocess.background_subtraction"],
            jobs,
        )
        for r in report.rows:
            rows.append((
                r.angle_deg, r.algorithm, r.det_prob, r.delay_rmse, r.doppler_rmse,
                r.mean_runtime if timing else None, r.los_gain_db, r.frames, r.matches, r.false_detections,
            ))
    write_csv(args.out, RESULT_FIELDS, rows, cfg.header("sweep"))
    return EXIT_OK


# ------------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    cfg = _config(args, **{"sweep.algorithms": args.algorithms})
    if args.frames < 1:
        raise ValidationError("bench needs at least one frame")
    algorithms = _algorithms(cfg["sweep.algorithms"])
    grid, scene = cfg.grid(), cfg.scene()
    frames = [synthesize_scene_frame(scene, grid, n, cfg["seed"])[0] for n in range(args.frames)]
    bg = cfg["preprocess.background_subtraction"]
    rows = []
    # timed serially so workers do not compete for cores
    for algorithm in algorithms:
        times = []
        for frame in frames:
            start = time.perf_counter()
            run_estimator(frame, algorithm, cfg.cfar(), cfg.mle(), bg)
            times.append(time.perf_counter() - start)
        rows.append((algorithm, len(times), float(np.mean(times)), min(times), max(times)))
    write_csv(args.out, BENCH_FIELDS, rows, cfg.header("bench"))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "eval": cmd_eval, "sweep": cmd_sweep, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, IllConditionedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ParseError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, AlignmentError, UndefinedMetricError, DelayDopplerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
