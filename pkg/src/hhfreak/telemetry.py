"""Analysis of recorded temperature / clock-frequency traces.

Input is a long-format CSV (``t,channel,kind,value``). Channels are opaque
identifiers; nothing here knows which sensor sits where on the chip.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np

HEADER = ("t", "channel", "kind", "value")
KINDS = ("temperature", "frequency")

DEFAULT_STEP_WINDOW = 30.0
DEFAULT_MIN_DELTA = {"frequency": 50.0, "temperature": 0.5}
DEFAULT_STABLE_EPS = 0.5
DEFAULT_STABLE_WINDOW = 300.0
DEFAULT_PAIR_TOL = 60.0


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SensorTrace:
    channel: str
    kind: str
    t: np.ndarray
    values: np.ndarray

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.values.tolist()))

    def __len__(self):
        return self.t.size

    def shifted(self, dt: float) -> "SensorTrace":
        return SensorTrace(self.channel, self.kind, self.t + dt, self.values)


@dataclass(frozen=True)
class StepEvent:
    t: float
    delta: float
    channel: str


@dataclass(frozen=True)
class EventPair:
    temperature: StepEvent
    frequency: StepEvent

    @property
    def dt(self) -> float:
        return self.temperature.t - self.frequency.t


@dataclass
class Correlation:
    pairs: list[EventPair] = field(default_factory=list)
    unpaired_temperature: list[StepEvent] = field(default_factory=list)
    unpaired_frequency: list[StepEvent] = field(default_factory=list)


def _check_value(kind, value, lineno):
    if kind == "temperature" and not (-40.0 < value < 150.0):
        raise TraceFormatError(f"line {lineno}: temperature {value} outside (-40, 150)")
    if kind == "frequency" and value < 0:
        raise TraceFormatError(f"line {lineno}: negative frequency {value}")


def parse_trace(source: IO[str] | str) -> list[SensorTrace]:
    """Parse a trace CSV into per-channel, time-sorted traces (sorted by channel name)."""
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError("missing header") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise TraceFormatError(f"line 1: expected header {','.join(HEADER)!r}")

    rows: dict[str, list[tuple[float, float, int]]] = {}
    kinds: dict[str, str] = {}
    for lineno, row in enumerate(reader, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise TraceFormatError(f"line {lineno}: expected 4 fields, got {len(row)}")
        t_s, channel, kind, v_s = (c.strip() for c in row)
        try:
            t, v = float(t_s), float(v_s)
        except ValueError:
            raise TraceFormatError(f"line {lineno}: non-numeric t or value") from None
        if not (math.isfinite(t) and math.isfinite(v)):
            raise TraceFormatError(f"line {lineno}: non-finite t or value")
        if not channel:
            raise TraceFormatError(f"line {lineno}: empty channel")
        if kind not in KINDS:
            raise TraceFormatError(f"line {lineno}: unknown kind {kind!r}")
        if kinds.setdefault(channel, kind) != kind:
            raise TraceFormatError(f"line {lineno}: channel {channel!r} changes kind")
        _check_value(kind, v, lineno)
        rows.setdefault(channel, []).append((t, v, lineno))

    traces = []
    for channel in sorted(rows):
        samples = sorted(rows[channel])
        for (t0, _, _), (t1, _, ln) in zip(samples, samples[1:]):
            if t1 <= t0:
                raise TraceFormatError(f"line {ln}: non-monotonic time {t1} in channel {channel!r}")
        t = np.array([s[0] for s in samples])
        v = np.array([s[1] for s in samples])
        traces.append(SensorTrace(channel, kinds[channel], t, v))
    return traces


def load_trace(path) -> list[SensorTrace]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_trace(fh)


def stabilization_window(trace: SensorTrace, eps: float, w: float) -> tuple[float, float] | None:
    """Earliest ``t`` whose window ``[t, t+w]`` stays within ``eps`` of its own mean.

    Only windows fully covered by the trace are considered. Returns ``(t, mean)``
    or ``None``.
    """
    if trace.kind != "temperature":
        raise ValueError("stabilization_window expects a temperature trace")
    if not w > 0:
        raise ValueError("window must be positive")
    t, v = trace.t, trace.values
    if t.size == 0:
        return None
    ends = np.searchsorted(t, t + w, side="right")
    for i in range(t.size):
        if t[i] + w > t[-1]:
            break
        win = v[i : ends[i]]
        m = win.mean()
        if np.max(np.abs(win - m)) <= eps:
            return float(t[i]), float(m)
    return None


def detect_steps(trace: SensorTrace, min_delta: float, w: float) -> list[StepEvent]:
    """Windowed-mean step detector.

    At each sample time ``t`` compares the mean over ``(t, t+w]`` with the mean
    over ``[t-w, t)``. Runs of detections closer than ``w`` collapse to one event
    at the earliest time, carrying the largest-magnitude difference of the run.
    Windows must lie entirely within the trace.
    """
    if not w > 0:
        raise ValueError("window must be positive")
    t, v = trace.t, trace.values
    n = t.size
    if n < 3:
        return []
    csum = np.concatenate(([0.0], np.cumsum(v)))
    left_lo = np.searchsorted(t, t - w, side="left")
    right_hi = np.searchsorted(t, t + w, side="right")
    idx = np.arange(n)
    ok = (t - w >= t[0]) & (t + w <= t[-1]) & (left_lo < idx) & (right_hi > idx + 1)
    candidates = []
    for i in np.nonzero(ok)[0]:
        left = (csum[i] - csum[left_lo[i]]) / (i - left_lo[i])
        right = (csum[right_hi[i]] - csum[i + 1]) / (right_hi[i] - i - 1)
        d = right - left
        if abs(d) >= min_delta:
            candidates.append((float(t[i]), float(d)))

    events = []
    group: list[tuple[float, float]] = []
    for c in candidates:
        if group and c[0] - group[-1][0] > w:
            events.append(_collapse(group, trace.channel))
            group = []
        group.append(c)
    if group:
        events.append(_collapse(group, trace.channel))
    return events


def _collapse(group, channel) -> StepEvent:
    peak = max(group, key=lambda c: abs(c[1]))
    return StepEvent(group[0][0], peak[1], channel)


def correlate(temp_events: Iterable[StepEvent], freq_events: Iterable[StepEvent], tol: float) -> Correlation:
    """Greedy nearest-in-time pairing of temperature and frequency events within ``tol`` seconds."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    temps, freqs = list(temp_events), list(freq_events)
    candidates = sorted(
        (abs(a.t - b.t), i, j)
        for i, a in enumerate(temps)
        for j, b in enumerate(freqs)
        if abs(a.t - b.t) <= tol
    )
    used_t, used_f = set(), set()
    result = Correlation()
    for _, i, j in candidates:
        if i in used_t or j in used_f:
            continue
        used_t.add(i)
        used_f.add(j)
        result.pairs.append(EventPair(temps[i], freqs[j]))
    result.pairs.sort(key=lambda p: (p.temperature.t, p.frequency.t))
    result.unpaired_temperature = [e for i, e in enumerate(temps) if i not in used_t]
    result.unpaired_frequency = [e for j, e in enumerate(freqs) if j not in used_f]
    return result


# ---------------------------------------------------------------------------
# whole-file analysis


@dataclass
class TelemetryReport:
    stable: dict[str, tuple[float, float] | None]
    steps: dict[str, list[StepEvent]]
    correlation: Correlation

    def rows(self) -> list[tuple[str, str, float, float]]:
        """``event_type,channel,t,delta`` rows.

        ``stable`` rows carry the plateau mean as delta; ``pair`` rows name both
        channels and carry the temperature-minus-frequency time offset.
        """
        out = []
        for ch, st in self.stable.items():
            if st is not None:
                out.append(("stable", ch, st[0], st[1]))
        for ch, evs in self.steps.items():
            out += [("step", ch, e.t, e.delta) for e in evs]
        for p in self.correlation.pairs:
            out.append(("pair", f"{p.temperature.channel}+{p.frequency.channel}", p.temperature.t, p.dt))
        return out

    def to_csv(self, sink: IO[str]) -> int:
        text = "event_type,channel,t,delta\n" + "".join(
            f"{kind},{ch},{t!r},{d!r}\n" for kind, ch, t, d in self.rows()
        )
        sink.write(text)
        return len(text.encode("utf-8"))

    def summary(self) -> str:
        lines = []
        for ch, st in self.stable.items():
            if st is None:
                lines.append(f"{ch}: never stabilises")
            else:
                lines.append(f"{ch}: stable from t={st[0]:.0f} s around {st[1]:.2f} C")
        for ch, evs in self.steps.items():
            for e in evs:
                lines.append(f"{ch}: step of {e.delta:+.2f} at t={e.t:.0f} s")
        for p in self.correlation.pairs:
            lines.append(
                f"{p.temperature.channel} step at {p.temperature.t:.0f} s pairs with "
                f"{p.frequency.channel} step at {p.frequency.t:.0f} s (dt={p.dt:+.0f} s)"
            )
        n_un = len(self.correlation.unpaired_temperature) + len(self.correlation.unpaired_frequency)
        lines.append(f"{len(self.correlation.pairs)} correlated pair(s), {n_un} unpaired event(s)")
        return "\n".join(lines)


def analyze(
    traces: list[SensorTrace],
    step_window: float = DEFAULT_STEP_WINDOW,
    min_delta: dict[str, float] | None = None,
    stable_eps: float = DEFAULT_STABLE_EPS,
    stable_window: float = DEFAULT_STABLE_WINDOW,
    pair_tol: float = DEFAULT_PAIR_TOL,
) -> TelemetryReport:
    min_delta = {**DEFAULT_MIN_DELTA, **(min_delta or {})}
    stable = {}
    steps = {}
    for tr in traces:
        if tr.kind == "temperature":
            stable[tr.channel] = stabilization_window(tr, stable_eps, stable_window)
        steps[tr.channel] = detect_steps(tr, min_delta[tr.kind], step_window)
    kind = {tr.channel: tr.kind for tr in traces}
    temp_ev = [e for ch, evs in steps.items() if kind[ch] == "temperature" for e in evs]
    freq_ev = [e for ch, evs in steps.items() if kind[ch] == "frequency" for e in evs]
    return TelemetryReport(stable, steps, correlate(temp_ev, freq_ev, pair_tol))
