"""Benchmark harness: per-stage timing of the detector and tile-size sweeps.

Method: one untimed warm-up, then ``runs`` timed repetitions executed
serially. Stage times are compute only; the pipeline total is measured
separately around the whole detector call, so it includes host overhead.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .detector import GATHER, STAGES, DetectorConfig, _harris, _product, detect
from .pipeline import (
    DEFAULT_MAX_TILE_AREA,
    StageTimer,
    TileConfig,
    diff_x_array,
    diff_y_array,
    gauss_x_array,
    gauss_y_array,
    make_gaussian_kernel,
    tile_candidates,
    warm_up,
)
from .raster import Raster, load_image, to_grey

log = logging.getLogger(__name__)

SWEEPABLE = ("gaussx", "gaussy", "gaussx2", "gaussy2", "ddx", "ddy")
SWEEP_SIGMA = 20.0
CSV_HEADER = "stage,tile_w,tile_h,mean_s,std_s,min_s,max_s"


def summarize(samples: Sequence[float]) -> tuple[float, float, float, float]:
    """(mean, population std, min, max)."""
    n = len(samples)
    if n == 0:
        raise ValueError("no samples")
    mean = sum(samples) / n
    std = math.sqrt(sum((s - mean) ** 2 for s in samples) / n)
    return mean, std, min(samples), max(samples)


@dataclass
class BenchConfig:
    image: str | Path | Raster
    runs: int = 10
    stages: tuple[str, ...] = ("gaussx", "gaussy")
    tiles: tuple[TileConfig, ...] = ()
    max_tile_area: int = DEFAULT_MAX_TILE_AREA
    out_dir: Path | None = None
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    sigma: float = SWEEP_SIGMA
    warmup: bool = True

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.tiles:
            self.tiles = tuple(tile_candidates(self.max_tile_area))

    def load(self) -> Raster:
        if isinstance(self.image, Raster):
            return self.image
        return load_image(self.image)


# ---------------------------------------------------------------------------
# full-pipeline timing


@dataclass
class TimingReport:
    samples: dict[tuple[str, float | None], list[float]]
    totals: list[float]
    sigmas: list[float]
    keypoint_count: int

    def stage_names(self) -> list[str]:
        seen = []
        for name, _ in self.samples:
            if name not in seen:
                seen.append(name)
        return seen

    def stage_means(self) -> dict[str, float]:
        """Per stage: mean over runs of that run's time summed over all scales."""
        runs = len(self.totals)
        out = {}
        for name in self.stage_names():
            per_run = [0.0] * runs
            for (n, _), s in self.samples.items():
                if n == name:
                    for i, v in enumerate(s):
                        per_run[i] += v
            out[name] = sum(per_run) / runs
        return out

    @property
    def total_mean(self) -> float:
        return sum(self.totals) / len(self.totals)

    def matrix(self) -> dict[str, dict[float, float]]:
        """stage -> sigma -> mean seconds (the gather stage is keyed by ``None``)."""
        out: dict[str, dict] = {}
        for (name, sigma), s in self.samples.items():
            out.setdefault(name, {})[sigma] = summarize(s)[0]
        return out

    def gaussian_dominates(self) -> bool:
        """Whether the first-pass gaussx+gaussy time beats every non-Gaussian stage."""
        m = self.stage_means()
        g = m.get("gaussx", 0.0) + m.get("gaussy", 0.0)
        return all(g >= v for k, v in m.items() if not k.startswith("gauss"))

    def to_csv(self, sink: IO[str]) -> int:
        lines = ["stage,sigma,mean_s,std_s,min_s,max_s"]
        for (name, sigma), s in self.samples.items():
            mean, std, lo, hi = summarize(s)
            sig = "" if sigma is None else repr(sigma)
            lines.append(f"{name},{sig},{mean!r},{std!r},{lo!r},{hi!r}")
        mean, std, lo, hi = summarize(self.totals)
        lines.append(f"total,,{mean!r},{std!r},{lo!r},{hi!r}")
        text = "\n".join(lines) + "\n"
        sink.write(text)
        return len(text.encode("utf-8"))

    def summary(self) -> str:
        means = self.stage_means()
        width = max(len(n) for n in means)
        lines = [f"{n:<{width}}  {1000 * v:10.2f} ms" for n, v in means.items()]
        lines.append(f"{'total':<{width}}  {1000 * self.total_mean:10.2f} ms  ({len(self.totals)} runs)")
        return "\n".join(lines)


def bench_pipeline(cfg: BenchConfig) -> TimingReport:
    img = cfg.load()
    grey = to_grey(img)
    warm_up()
    if cfg.warmup:
        detect(grey, cfg.detector)

    samples: dict = {}
    totals = []
    reference = None
    sigmas: list[float] = []
    for _ in range(cfg.runs):
        timer = StageTimer()
        t0 = time.perf_counter()
        result = detect(grey, cfg.detector, timer)
        totals.append(time.perf_counter() - t0)
        if reference is None:
            reference = result.keypoints
            sigmas = result.space.sigmas
        elif result.keypoints != reference:
            raise RuntimeError("keypoints differ between benchmark runs")
        for key, st in timer.items():
            samples.setdefault(key, []).extend(timer.samples(key))
    return TimingReport(samples, totals, sigmas, len(reference or []))


# ---------------------------------------------------------------------------
# tile sweeps


@dataclass
class SweepRow:
    stage: str
    tiles: TileConfig
    samples: list[float]

    @property
    def stats(self) -> tuple[float, float, float, float]:
        return summarize(self.samples)

    @property
    def mean(self) -> float:
        return self.stats[0]


@dataclass
class SweepReport:
    rows: list[SweepRow] = field(default_factory=list)
    skipped: list[tuple[str, TileConfig, str]] = field(default_factory=list)

    def for_stage(self, stage: str) -> list[SweepRow]:
        return [r for r in self.rows if r.stage == stage]

    def stages(self) -> list[str]:
        return sorted({r.stage for r in self.rows})

    def best(self, stage: str) -> SweepRow:
        return min(self.for_stage(stage), key=lambda r: r.mean)

    def worst(self, stage: str) -> SweepRow:
        return max(self.for_stage(stage), key=lambda r: r.mean)

    def summary(self) -> str:
        lines = []
        for st in self.stages():
            b, w = self.best(st), self.worst(st)
            ratio = w.mean / b.mean if b.mean > 0 else float("inf")
            lines.append(
                f"{st}: best {1000 * b.mean:.2f} ms ({b.tiles}), "
                f"worst {1000 * w.mean:.2f} ms ({w.tiles}), worst/best {ratio:.1f}x"
            )
        for st, t, why in self.skipped:
            lines.append(f"{st}: skipped {t} ({why})")
        return "\n".join(lines)


def prepare_stage_input(grey: np.ndarray, stage: str, sigma: float = SWEEP_SIGMA):
    """The input a stage sees inside the detector at ``sigma``, plus a runner for it."""
    if stage not in SWEEPABLE:
        raise ValueError(f"stage {stage!r} cannot be swept; choose from {', '.join(SWEEPABLE)}")
    kern = make_gaussian_kernel(sigma)
    ref = TileConfig(8, 4)
    if stage == "gaussx":
        return grey, lambda a, t: gauss_x_array(a, kern, t)
    bx = gauss_x_array(grey, kern, ref)
    if stage == "gaussy":
        return bx, lambda a, t: gauss_y_array(a, kern, t)
    blurred = gauss_y_array(bx, kern, ref)
    if stage == "ddx":
        return blurred, diff_x_array
    if stage == "ddy":
        return blurred, diff_y_array
    dx, dy = diff_x_array(blurred, ref), diff_y_array(blurred, ref)
    s2 = sigma * sigma
    prods = (_product(dx, dx, s2), _product(dy, dy, s2), _product(dx, dy, s2))
    if stage == "gaussx2":
        return prods, lambda a, t: tuple(gauss_x_array(p, kern, t) for p in a)
    sx = tuple(gauss_x_array(p, kern, ref) for p in prods)
    return sx, lambda a, t: tuple(gauss_y_array(p, kern, t) for p in a)


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def sweep_workgroups(cfg: BenchConfig) -> SweepReport:
    """Time each stage in isolation for every tile candidate.

    Every candidate's output is checked bit-for-bit against the first valid
    candidate before it is timed.
    """
    grey = np.ascontiguousarray(to_grey(cfg.load()).data)
    warm_up()
    report = SweepReport()
    for stage in cfg.stages:
        data, run = prepare_stage_input(grey, stage, cfg.sigma)
        reference = None
        for tiles in cfg.tiles:
            if tiles.area > cfg.max_tile_area:
                log.warning("skipping %s %s: area %d > %d", stage, tiles, tiles.area, cfg.max_tile_area)
                report.skipped.append((stage, tiles, f"area {tiles.area} > {cfg.max_tile_area}"))
                continue
            # the gate run doubles as the warm-up
            out = run(data, tiles)
            if reference is None:
                reference = out
            elif not _same(out, reference):
                raise RuntimeError(f"{stage} output with tiles {tiles} differs from reference")
            samples = []
            for _ in range(cfg.runs):
                t0 = time.perf_counter()
                run(data, tiles)
                samples.append(time.perf_counter() - t0)
            report.rows.append(SweepRow(stage, tiles, samples))
    return report


# ---------------------------------------------------------------------------
# output


def _sorted_rows(report: SweepReport) -> list[SweepRow]:
    return sorted(report.rows, key=lambda r: (r.stage, r.tiles.tile_w, r.tiles.tile_h))


def emit_csv(report: SweepReport, sink: IO[str]) -> int:
    lines = [CSV_HEADER]
    for r in _sorted_rows(report):
        mean, std, lo, hi = r.stats
        lines.append(f"{r.stage},{r.tiles.tile_w},{r.tiles.tile_h},{mean!r},{std!r},{lo!r},{hi!r}")
    text = "\n".join(lines) + "\n"
    sink.write(text)
    return len(text.encode("utf-8"))


def parse_sweep_csv(source: IO[str]) -> list[tuple[str, int, int, float, float, float, float]]:
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or ",".join(header) != CSV_HEADER:
        raise ValueError("not a sweep CSV")
    return [(r[0], int(r[1]), int(r[2]), *(float(v) for v in r[3:])) for r in reader if r]


def emit_matrix(report: SweepReport, stage: str, sink: IO[str]) -> int:
    """gnuplot ``nonuniform matrix`` of mean milliseconds: columns tile_w, rows tile_h.

    Plot with ``plot 'f' nonuniform matrix with image``; missing cells are NaN.
    """
    rows = report.for_stage(stage)
    ws = sorted({r.tiles.tile_w for r in rows})
    hs = sorted({r.tiles.tile_h for r in rows})
    cell = {(r.tiles.tile_w, r.tiles.tile_h): 1000 * r.mean for r in rows}
    lines = [f"# {stage}: mean ms; first row tile_w, first column tile_h"]
    lines.append(" ".join([str(len(ws))] + [str(w) for w in ws]))
    for h in hs:
        vals = [f"{cell[(w, h)]:.6g}" if (w, h) in cell else "NaN" for w in ws]
        lines.append(" ".join([str(h)] + vals))
    text = "\n".join(lines) + "\n"
    sink.write(text)
    return len(text.encode("utf-8"))


def write_sweep_outputs(report: SweepReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "sweep.csv"]
    with open(paths[0], "w", encoding="utf-8", newline="") as fh:
        emit_csv(report, fh)
    for st in report.stages():
        p = out_dir / f"sweep_{st}.matrix"
        with open(p, "w", encoding="utf-8") as fh:
            emit_matrix(report, st, fh)
        paths.append(p)
    return paths


def expected_stage_keys(sigmas: Sequence[float]) -> set:
    return {(s, sig) for sig in sigmas for s in STAGES} | {(GATHER, None)}
