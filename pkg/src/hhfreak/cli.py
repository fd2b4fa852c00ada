"""``hhfreak`` command line."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, telemetry
from .detector import DetectorConfig, detect
from .freak import MatchPolicy, describe_many, match_descriptors
from .pipeline import TileConfig, tile_candidates
from .raster import (
    DecodeError,
    encode_pnm,
    load_image,
    parse_descriptor_file,
    parse_keypoint_file,
    to_grey,
    write_descriptor_file,
    write_keypoint_file,
)
from .synthetic import (
    BUNDLED_TRACES,
    bundled_trace_text,
    poster_image,
    trace_csv,
    trace_step_rows,
    trace_warmup_rows,
)

BUILTIN_IMAGE = "builtin:posters"
log = logging.getLogger("hhfreak")


class CliError(Exception):
    pass


def _image(arg: str):
    if arg == BUILTIN_IMAGE:
        return poster_image()
    try:
        return load_image(arg)
    except FileNotFoundError:
        raise CliError(f"no such image: {arg}") from None


def _config(args) -> DetectorConfig:
    if getattr(args, "config", None):
        return DetectorConfig.from_file(args.config)
    return DetectorConfig()


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_detect(args) -> None:
    img = to_grey(_image(args.image))
    result = detect(img, _config(args))
    out = _out(args)
    with open(out / "keypoints.txt", "w", encoding="utf-8", newline="\n") as fh:
        write_keypoint_file(result.keypoints, fh)
    report = bench.TimingReport(
        {k: result.timings.samples(k) for k in result.timings.names()},
        [sum(st.elapsed for _, st in result.timings.items())],
        result.space.sigmas,
        len(result.keypoints),
    )
    with open(out / "timings.csv", "w", encoding="utf-8", newline="\n") as fh:
        report.to_csv(fh)
    print(f"{len(result.keypoints)} keypoints, characteristic sigma {result.characteristic_sigma:g}")
    print(f"wrote {out / 'keypoints.txt'} and {out / 'timings.csv'}")


def cmd_describe(args) -> None:
    img = to_grey(_image(args.image))
    if args.keypoints:
        with open(args.keypoints, encoding="utf-8") as fh:
            kps = parse_keypoint_file(fh)
    else:
        kps = detect(img, _config(args)).keypoints
    records = describe_many(img, kps)
    out = _out(args)
    with open(out / "descriptors.txt", "w", encoding="utf-8", newline="\n") as fh:
        write_descriptor_file(records, fh)
    print(f"{len(records)} descriptors -> {out / 'descriptors.txt'}")


def cmd_match(args) -> None:
    with open(args.a, encoding="utf-8") as fa, open(args.b, encoding="utf-8") as fb:
        da, db = parse_descriptor_file(fa), parse_descriptor_file(fb)
    policy = MatchPolicy(tuple(int(v) for v in args.thresholds.split(",")))
    matches = match_descriptors(da, db, policy)
    out = _out(args)
    with open(out / "matches.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("query,train,distance\n")
        for m in matches:
            fh.write(f"{m.query},{m.train},{m.distance}\n")
    print(f"{len(matches)} of {len(da)} descriptors matched -> {out / 'matches.csv'}")


def cmd_bench(args) -> None:
    cfg = bench.BenchConfig(_image(args.image), runs=args.runs, detector=_config(args))
    report = bench.bench_pipeline(cfg)
    out = _out(args)
    with open(out / "bench.csv", "w", encoding="utf-8", newline="\n") as fh:
        report.to_csv(fh)
    print(report.summary())
    if not report.gaussian_dominates():
        msg = "gaussx+gaussy do not dominate the other stages on this host"
        if args.waive_dominance:
            print(f"note: {msg} (waived)")
        else:
            print(f"warning: {msg}", file=sys.stderr)
    print(f"wrote {out / 'bench.csv'}")


def cmd_sweep(args) -> None:
    if args.tiles:
        # parse with no area limit so oversized requests get reported, not rejected
        cands = tuple(TileConfig.parse(t, max_tile_area=1 << 30) for t in args.tiles.split(","))
    else:
        cands = tuple(tile_candidates(args.max_area, max_w=args.max_w, max_h=args.max_h))
    cfg = bench.BenchConfig(
        _image(args.image), runs=args.runs, stages=tuple(args.stage or ["gaussx"]),
        tiles=cands, max_tile_area=args.max_area, sigma=args.sigma,
    )
    report = bench.sweep_workgroups(cfg)
    paths = bench.write_sweep_outputs(report, _out(args))
    print(report.summary())
    print("wrote " + ", ".join(str(p) for p in paths))


def cmd_telemetry(args) -> None:
    if args.trace.startswith("builtin:"):
        name = args.trace.split(":", 1)[1]
        if name not in BUNDLED_TRACES:
            raise CliError(f"no bundled trace {name!r}; choose from {', '.join(BUNDLED_TRACES)}")
        traces = telemetry.parse_trace(bundled_trace_text(name))
    else:
        traces = telemetry.load_trace(args.trace)
    report = telemetry.analyze(
        traces,
        step_window=args.window,
        min_delta={"frequency": args.min_delta_freq, "temperature": args.min_delta_temp},
        stable_eps=args.eps,
        stable_window=args.stable_window,
        pair_tol=args.tol,
    )
    out = _out(args)
    with open(out / "events.csv", "w", encoding="utf-8", newline="\n") as fh:
        report.to_csv(fh)
    print(report.summary())
    print(f"wrote {out / 'events.csv'}")


def cmd_make_data(args) -> None:
    out = _out(args)
    (out / "posters.ppm").write_bytes(encode_pnm(poster_image()))
    (out / "trace_step.csv").write_text(trace_csv(trace_step_rows()), encoding="utf-8")
    (out / "trace_warmup.csv").write_text(trace_csv(trace_warmup_rows()), encoding="utf-8")
    print(f"wrote synthetic image and traces to {out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hhfreak", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.set_defaults(func=fn)
        return sp

    img_help = f"PGM/PPM/PNG path, or {BUILTIN_IMAGE} for the synthetic test image"

    sp = add("detect", cmd_detect, "detect keypoints")
    sp.add_argument("image", help=img_help)
    sp.add_argument("--config", help="key=value detector config file")

    sp = add("describe", cmd_describe, "compute FREAK descriptors")
    sp.add_argument("image", help=img_help)
    sp.add_argument("--keypoints", help="keypoint file from `detect` (default: run the detector)")
    sp.add_argument("--config")

    sp = add("match", cmd_match, "match two descriptor files")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--thresholds", default="24,48,72,96", help="cascade reject thresholds")

    sp = add("bench", cmd_bench, "per-stage timing of the detector")
    sp.add_argument("image", help=img_help)
    sp.add_argument("--runs", type=int, default=10)
    sp.add_argument("--config")
    sp.add_argument("--waive-dominance", action="store_true",
                    help="do not warn when Gaussian stages are not the slowest")

    sp = add("sweep", cmd_sweep, "tile (work-group) size sweep")
    sp.add_argument("image", help=img_help)
    sp.add_argument("--stage", action="append", choices=bench.SWEEPABLE)
    sp.add_argument("--max-area", type=int, default=1024)
    sp.add_argument("--max-w", type=int)
    sp.add_argument("--max-h", type=int)
    sp.add_argument("--tiles", help="explicit comma-separated list, e.g. 2x2,8x4,32x8")
    sp.add_argument("--runs", type=int, default=10)
    sp.add_argument("--sigma", type=float, default=bench.SWEEP_SIGMA)

    sp = add("telemetry", cmd_telemetry, "analyse a temperature/frequency trace CSV")
    sp.add_argument("trace", help="trace CSV path, or builtin:step / builtin:warmup")
    sp.add_argument("--window", type=float, default=telemetry.DEFAULT_STEP_WINDOW)
    sp.add_argument("--min-delta-freq", type=float, default=telemetry.DEFAULT_MIN_DELTA["frequency"])
    sp.add_argument("--min-delta-temp", type=float, default=telemetry.DEFAULT_MIN_DELTA["temperature"])
    sp.add_argument("--eps", type=float, default=telemetry.DEFAULT_STABLE_EPS)
    sp.add_argument("--stable-window", type=float, default=telemetry.DEFAULT_STABLE_WINDOW)
    sp.add_argument("--tol", type=float, default=telemetry.DEFAULT_PAIR_TOL)

    add("make-data", cmd_make_data, "write the synthetic test image and traces")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, DecodeError, ValueError, OSError, RuntimeError) as exc:
        print(f"hhfreak: error: {exc}", file=sys.stderr)
        return 1
    return 0
