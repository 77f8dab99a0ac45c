"""Experiment specs, recall metrics, oscillation analysis and report export."""

from __future__ import annotations

import dataclasses
import enum
import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .engine import SimulationConfig, SpikeRecord, run_simulation
from .memory import (
    DG,
    PC,
    STDP_PROJ,
    OscillatoryConfig,
    OscillatoryMemory,
    Pattern,
    RegulatedConfig,
    RegulatedMemory,
    ResourceCounts,
    WeightSnapshot,
    build_oscillatory,
    count_resources,
)
from .plasticity import StdpOptions, StdpParams


class SpecError(ValueError):
    """The experiment description does not match the schema."""


def generate_orthogonal_patterns(n: int, size: int, count: int, seed: int | None = None) -> list[Pattern]:
    """Disjoint patterns. ``seed=None`` gives contiguous blocks, otherwise a seeded shuffle."""
    if size < 1 or count < 1:
        raise ValueError("size and count must be positive")
    if size * count > n:
        raise ValueError(f"{count} disjoint patterns of size {size} do not fit in {n} neurons")
    order = np.arange(n) if seed is None else np.random.default_rng(seed).permutation(n)
    return [Pattern(order[j * size:(j + 1) * size].tolist(), n) for j in range(count)]


def overlap_matrix(patterns: Sequence) -> np.ndarray:
    """Pairwise intersection sizes with a zero diagonal. ``self_overlap`` gives the diagonal."""
    sets = [frozenset(p) for p in patterns]
    m = np.array([[len(a & b) for b in sets] for a in sets], dtype=int)
    np.fill_diagonal(m, 0)
    return m


def self_overlap(patterns: Sequence) -> list[int]:
    return [len(frozenset(p)) for p in patterns]


@dataclass(frozen=True)
class CueSlot:
    cue: frozenset[int]
    cue_end: float
    slot_end: float
    population: str = PC


@dataclass(frozen=True)
class RecallMetrics:
    recalled: frozenset[int]
    expected: frozenset[int]
    exact: bool
    spurious: int
    missing: int
    latency_ms: float | None

    def as_dict(self) -> dict[str, Any]:
        return {
            "recalled": sorted(self.recalled),
            "expected": sorted(self.expected),
            "exact": self.exact,
            "spurious": self.spurious,
            "missing": self.missing,
            "latency_ms": self.latency_ms,
        }


def evaluate_recall(record: SpikeRecord, slot: CueSlot, expected) -> RecallMetrics:
    """Score completions that fire strictly after the last cue millisecond and within the slot."""
    expected = frozenset(expected)
    lo, hi = slot.cue_end + record.dt, slot.slot_end
    recalled = frozenset(record.active(slot.population, lo, hi) - slot.cue)
    first = [
        k * record.dt for i, k in record.spikes.get(slot.population, [])
        if i in expected and lo - 1e-9 <= k * record.dt <= hi + 1e-9
    ]
    latency = min(first) - slot.cue_end if first else None
    spurious, missing = len(recalled - expected), len(expected - recalled)
    return RecallMetrics(recalled, expected, spurious == 0 and missing == 0, spurious, missing, latency)


class Persistence(enum.Enum):
    PERSISTENT = "persistent"
    CHANGED = "changed"
    NO_ACTIVITY = "no-activity"

    def __bool__(self) -> bool:
        return self is Persistence.PERSISTENT


def _step_sets(record: SpikeRecord, window: tuple[float, float], population: str) -> list[frozenset[int]]:
    lo, hi = (round(t / record.dt) for t in window)
    sets: list[set[int]] = [set() for _ in range(hi - lo + 1)]
    for i, k in record.spikes.get(population, []):
        if lo <= k <= hi:
            sets[k - lo].add(i)
    return [frozenset(s) for s in sets]


def oscillation_cycles(record: SpikeRecord, window: tuple[float, float], population: str = PC,
                       max_gap: int = 3) -> list[frozenset[int]]:
    """Split activity in ``window`` into cycles and return the set each one emits.

    The cycle length is the shortest period, up to ``max_gap`` steps, that
    repeats the per-step activity. If no such period exists, every active
    step counts as its own cycle. A silent stretch longer than ``max_gap``
    steps also ends the oscillation. Its cycles are returned as they are,
    and the caller decides what that means.
    """
    steps = _step_sets(record, window, population)
    active = [j for j, s in enumerate(steps) if s]
    if not active:
        return []
    steps = steps[active[0]:active[-1] + 1]
    period = next(
        (p for p in range(1, max_gap + 1)
         if len(steps) >= p and all(steps[j] == steps[j % p] for j in range(len(steps)))),
        None,
    )
    if period is None:
        return [s for s in steps if s]
    return [frozenset().union(*steps[j:j + period]) for j in range(0, len(steps) - period + 1, period)]


def detect_state_persistence(record: SpikeRecord, pattern, window: tuple[float, float],
                             population: str = PC) -> Persistence:
    steps = _step_sets(record, window, population)
    active = [j for j, s in enumerate(steps) if s]
    if not active:
        return Persistence.NO_ACTIVITY
    gaps = np.diff([-1] + active + [len(steps)])
    if np.any(gaps > 3):
        return Persistence.CHANGED
    cycles = oscillation_cycles(record, window, population)
    target = frozenset(pattern)
    return Persistence.PERSISTENT if all(c == target for c in cycles) else Persistence.CHANGED


def merged_state(record: SpikeRecord, patterns: Sequence, cue, window: tuple[float, float],
                 population: str = PC) -> bool:
    """True if some cycle in ``window`` strictly contains the union of two patterns' non-cue parts."""
    cue = frozenset(cue)
    pats = [frozenset(p) for p in patterns]
    steps = [s for s in _step_sets(record, window, population)]
    candidates = set(oscillation_cycles(record, window, population))
    for width in (1, 2, 3):
        for j in range(len(steps) - width + 1):
            candidates.add(frozenset().union(*steps[j:j + width]))
    for a in range(len(pats)):
        for b in range(a + 1, len(pats)):
            union = (pats[a] - cue) | (pats[b] - cue)
            if any(c > union for c in candidates):
                return True
    return False


# Experiment specs ---------------------------------------------------------

_OSC_KEYS = {f.name for f in dataclasses.fields(OscillatoryConfig)} - {"n", "stdp", "options"}
_REG_KEYS = {f.name for f in dataclasses.fields(RegulatedConfig)} - {"n", "stdp", "options"}
_SPEC_KEYS = {"name", "model", "n", "config", "stdp", "options", "patterns", "generate", "recalls",
              "idle_ms", "seed", "description"}


@dataclass(frozen=True)
class RecallOp:
    cue: frozenset[int]
    expect: frozenset[int] | None
    repeats: int = 1
    outcome: str = "exact"


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    model: str
    n: int
    patterns: tuple[frozenset[int], ...]
    recalls: tuple[RecallOp, ...]
    config: dict = field(default_factory=dict)
    stdp: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    idle_ms: int = 0
    seed: int | None = None

    def model_config(self) -> OscillatoryConfig | RegulatedConfig:
        extra: dict[str, Any] = dict(self.config)
        if self.stdp:
            extra["stdp"] = StdpParams(**self.stdp)
        if self.options:
            extra["options"] = StdpOptions(**self.options)
        cls = OscillatoryConfig if self.model == "oscillatory" else RegulatedConfig
        return cls(self.n, **extra)


def _int_set(value, n: int, what: str) -> frozenset[int]:
    if not isinstance(value, list) or not value or not all(isinstance(i, int) and not isinstance(i, bool) for i in value):
        raise SpecError(f"{what} must be a nonempty list of integers")
    s = frozenset(value)
    if min(s) < 0 or max(s) >= n:
        raise SpecError(f"{what} has indices outside [0, {n})")
    return s


def parse_spec(data: dict) -> ExperimentSpec:
    """Validate a decoded spec document and return an ``ExperimentSpec``."""
    if not isinstance(data, dict):
        raise SpecError("spec must be a JSON object")
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise SpecError(f"unknown spec keys: {sorted(unknown)}")
    model = data.get("model")
    if model not in ("oscillatory", "regulated"):
        raise SpecError("model must be 'oscillatory' or 'regulated'")
    n = data.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        raise SpecError("n must be an integer >= 2")
    config = data.get("config", {})
    allowed = _OSC_KEYS if model == "oscillatory" else _REG_KEYS
    if not isinstance(config, dict) or set(config) - allowed:
        raise SpecError(f"config keys must be among {sorted(allowed)}")
    seed = data.get("seed")
    if "generate" in data:
        g = data["generate"]
        try:
            pats = generate_orthogonal_patterns(n, g["size"], g["count"], seed)
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError(f"bad pattern generator: {exc}") from exc
        patterns = tuple(p.active for p in pats)
    else:
        raw = data.get("patterns")
        if not isinstance(raw, list) or not raw:
            raise SpecError("patterns must be a nonempty list")
        patterns = tuple(_int_set(p, n, f"pattern {j}") for j, p in enumerate(raw))
    recalls = []
    for j, r in enumerate(data.get("recalls", [])):
        if not isinstance(r, dict) or "cue" not in r:
            raise SpecError(f"recall {j} needs a cue")
        if set(r) - {"cue", "expect", "repeats", "outcome"}:
            raise SpecError(f"recall {j} has unknown keys")
        outcome = r.get("outcome", "exact")
        if outcome not in ("exact", "merge", "fail"):
            raise SpecError(f"recall {j}: outcome must be exact, merge or fail")
        expect = r.get("expect")
        if expect is None:
            raise SpecError(f"recall {j} needs an expected completion")
        exp = frozenset(expect) if expect == [] else _int_set(expect, n, f"recall {j} expect")
        repeats = r.get("repeats", 1)
        if not isinstance(repeats, int) or repeats < 1:
            raise SpecError(f"recall {j}: repeats must be a positive integer")
        recalls.append(RecallOp(_int_set(r["cue"], n, f"recall {j} cue"), exp, repeats, outcome))
    spec = ExperimentSpec(
        name=str(data.get("name", "experiment")), model=model, n=n, patterns=patterns,
        recalls=tuple(recalls), config=config, stdp=data.get("stdp", {}),
        options=data.get("options", {}), idle_ms=int(data.get("idle_ms", 0)), seed=seed,
    )
    try:
        cfg = spec.model_config()
    except (TypeError, ValueError) as exc:
        raise SpecError(f"invalid model configuration: {exc}") from exc
    if isinstance(cfg, OscillatoryConfig) and any(r.repeats != 1 for r in spec.recalls):
        raise SpecError("the oscillatory model takes cue length from cue_presentations, not repeats")
    return spec


BUNDLED = ("fig4_orthogonal", "fig4_nonorthogonal", "fig4_volatility", "fig5_orthogonal",
           "fig5_nonorthogonal", "capacity_n20")


def load_spec(name_or_path: str | Path, seed: int | None = None) -> ExperimentSpec:
    """Load a bundled spec by name or a JSON spec file by path.

    ``seed`` overrides the document's seed, which only matters for generated patterns.
    """
    path = Path(name_or_path)
    try:
        if path.suffix == ".json" or path.exists():
            text = path.read_text()
        elif str(name_or_path) in BUNDLED:
            text = resources.files("snnmem.specs").joinpath(f"{name_or_path}.json").read_text()
        else:
            raise SpecError(f"no bundled spec or file named {name_or_path!r}")
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read spec {name_or_path}: {exc}") from exc
    if seed is not None and isinstance(data, dict):
        data["seed"] = seed
    return parse_spec(data)


@dataclass
class RecallReport:
    op: RecallOp
    metrics: RecallMetrics
    window: tuple[float, float]
    merged: bool
    persistence: str
    ok: bool

    def as_dict(self) -> dict[str, Any]:
        return {
            "cue": sorted(self.op.cue),
            "outcome": self.op.outcome,
            "repeats": self.op.repeats,
            "window_ms": list(self.window),
            "merged_state": self.merged,
            "persistence_until_next_cue": self.persistence,
            "ok": self.ok,
            **self.metrics.as_dict(),
        }


@dataclass
class Report:
    spec: ExperimentSpec
    recalls: list[RecallReport]
    record: SpikeRecord
    snapshot: WeightSnapshot
    resources: ResourceCounts
    slots: list[tuple[str, float, float]]

    @property
    def spike_count(self) -> int:
        return self.record.count()

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.recalls)

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.spec.name,
            "model": self.spec.model,
            "n": self.spec.n,
            "patterns": [sorted(p) for p in self.spec.patterns],
            "ok": self.ok,
            "recalls": [r.as_dict() for r in self.recalls],
            "spike_counts": {pop: self.record.count(pop) for pop in self.record.spikes}
            | {"total": self.spike_count},
            "resources": self.resources.as_dict(),
            "slots": [{"kind": k, "start_ms": a, "end_ms": b} for k, a, b in self.slots],
        }


def _judge(op: RecallOp, metrics: RecallMetrics, merged: bool) -> bool:
    if op.outcome == "exact":
        return metrics.exact
    if op.outcome == "fail":
        return not metrics.exact
    return merged


def run_experiment(spec: ExperimentSpec) -> Report:
    """Build, learn, recall and score one experiment deterministically."""
    cfg = spec.model_config()
    if isinstance(cfg, OscillatoryConfig):
        return _run_oscillatory(spec, cfg)
    return _run_regulated(spec, cfg)


def _run_oscillatory(spec: ExperimentSpec, cfg: OscillatoryConfig) -> Report:
    mem = OscillatoryMemory(cfg)
    snap = mem.learn(list(spec.patterns))
    for op in spec.recalls:
        mem._deliver(op.cue, cfg.cue_presentations, "recall")
    end = mem.clock - 1 + spec.idle_ms
    res = mem.simulate(end)
    slots = [(kind, float(start), float(start + cfg.slot_ms - 1)) for kind, _, start in mem.slots]
    recall_starts = [start for kind, _, start in mem.slots if kind == "recall"]
    reports = []
    for j, (op, start) in enumerate(zip(spec.recalls, recall_starts)):
        cue_end = float(start + cfg.cue_presentations - 1)
        slot_end = float(start + cfg.slot_ms - 1)
        m = evaluate_recall(res.record, CueSlot(op.cue, cue_end, slot_end), op.expect)
        merged = merged_state(res.record, spec.patterns, op.cue, (cue_end + 1, slot_end))
        target = (m.recalled | op.cue) if m.recalled else op.cue
        persistence = detect_state_persistence(res.record, target, (cue_end + 1, slot_end)).value
        reports.append(RecallReport(op, m, (cue_end + 1, slot_end), merged, persistence, _judge(op, m, merged)))
    snapshot = WeightSnapshot(res.weights[STDP_PROJ], res.pending[STDP_PROJ])
    return Report(spec, reports, res.record, snapshot, count_resources("oscillatory", spec.n), slots)


def _shift(record: SpikeRecord, by_steps: int, into: SpikeRecord) -> None:
    for pop, ev in record.spikes.items():
        into.spikes.setdefault(pop, []).extend((i, k + by_steps) for i, k in ev)
        into.sizes[pop] = record.sizes.get(pop, 0)


def _run_regulated(spec: ExperimentSpec, cfg: RegulatedConfig) -> Report:
    mem = RegulatedMemory(cfg)
    snap = mem.learn(list(spec.patterns))
    learn_ms = len(spec.patterns) * cfg.learn_slot_ms
    slots = [("learn", float(1 + j * cfg.learn_slot_ms), float((j + 1) * cfg.learn_slot_ms))
             for j in range(len(spec.patterns))]
    timeline = SpikeRecord(1.0)
    _shift(mem.last_learning.record, 0, timeline)
    reports = []
    # Groups of consecutive recalls that share a repeat count run in one frozen simulation.
    groups: list[list[RecallOp]] = []
    for op in spec.recalls:
        if groups and groups[-1][0].repeats == op.repeats:
            groups[-1].append(op)
        else:
            groups.append([op])
    offset = learn_ms
    for g_idx, group in enumerate(groups):
        idle = spec.idle_ms if g_idx == len(groups) - 1 else 0
        results, rec = mem.recall_sequence([op.cue for op in group], snap, group[0].repeats, idle)
        _shift(rec, offset, timeline)
        for j, (op, r) in enumerate(zip(group, results)):
            slot = CueSlot(op.cue, r.cue_end + offset, r.window[1] + offset)
            m = evaluate_recall(timeline, slot, op.expect)
            window = (r.window[0] + offset, r.window[1] + offset)
            merged = merged_state(timeline, spec.patterns, op.cue, window)
            start = offset + 1 + j * cfg.recall_slot_ms
            slots.append(("recall", float(start), float(start + cfg.recall_slot_ms - 1)))
            persistence = detect_state_persistence(timeline, op.cue | m.recalled, window).value
            reports.append(RecallReport(op, m, window, merged, persistence, _judge(op, m, merged)))
        offset += len(group) * cfg.recall_slot_ms + idle
    for ev in timeline.spikes.values():
        ev.sort(key=lambda e: (e[1], e[0]))
    return Report(spec, reports, timeline, snap, count_resources("regulated", spec.n), slots)


def spike_count_comparison(n: int, patterns: Sequence, cues: Sequence, duration: float = 100.0) -> dict[str, int]:
    """Total spikes of each model serving the same cues from its learned state over ``duration`` ms.

    Both models start from their own learned weights. The oscillatory model
    keeps plasticity live and the regulated model runs frozen. Cues go into
    consecutive 14 ms recall slots starting at 1 ms, and the remaining time
    is idle.
    """
    osc_cfg = OscillatoryConfig(n)
    osc = OscillatoryMemory(osc_cfg)
    w = osc.learn(patterns).weights
    events = [(i, float(1 + j * osc_cfg.slot_ms + r)) for j, c in enumerate(cues)
              for r in range(osc_cfg.cue_presentations) for i in sorted(c)]
    res = run_simulation(build_oscillatory(osc_cfg, w), {DG: sorted(events, key=lambda e: (e[1], e[0]))},
                         SimulationConfig(duration=duration), osc_cfg.options)
    reg = RegulatedMemory(RegulatedConfig(n))
    snap = reg.learn(patterns)
    idle = int(duration) - len(cues) * reg.cfg.recall_slot_ms
    _, rec = reg.recall_sequence(cues, snap, 1, idle)
    return {"oscillatory": res.record.count(), "regulated": rec.count()}


# Export -------------------------------------------------------------------

def write_report(report: Report, out_dir: str | Path, svg: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{report.spec.name}_report.json", out / f"{report.spec.name}_spikes.csv",
             out / f"{report.spec.name}_weights.csv"]
    paths[0].write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    report.record.to_csv(paths[1])
    report.snapshot.to_csv(paths[2])
    if svg:
        paths.append(out / f"{report.spec.name}_raster.svg")
        paths[-1].write_text(raster_svg(report.record, report.slots))
    return paths


def raster_svg(record: SpikeRecord, slots: Sequence[tuple[str, float, float]] = (),
               populations: Sequence[str] = (DG, PC), px_per_ms: float = 4.0, row_px: float = 8.0) -> str:
    """Stacked spike rasters, one panel per population, with shaded operation slots."""
    t_max = max([k for ev in record.spikes.values() for _, k in ev] + [1]) * record.dt
    width = 60 + t_max * px_per_ms + 20
    parts, y0 = [], 10.0
    for pop in populations:
        size = record.sizes.get(pop, 1 + max((i for i, _ in record.spikes.get(pop, [])), default=0))
        h = size * row_px
        parts.append(f'<g class="panel" data-population="{pop}">')
        parts.append(f'<text x="4" y="{y0 + h / 2:.1f}" font-size="10">{pop}</text>')
        parts.append(f'<rect x="60" y="{y0:.1f}" width="{t_max * px_per_ms:.1f}" height="{h:.1f}" '
                     'fill="none" stroke="#888"/>')
        for kind, a, b in slots:
            colour = "#dde8ff" if kind == "learn" else "#ffe8cc"
            parts.append(f'<rect class="slot" x="{60 + a * px_per_ms:.1f}" y="{y0:.1f}" '
                         f'width="{(b - a + 1) * px_per_ms:.1f}" height="{h:.1f}" fill="{colour}" opacity="0.6"/>')
        for i, k in record.spikes.get(pop, []):
            x = 60 + k * record.dt * px_per_ms
            y = y0 + (size - 1 - i) * row_px
            parts.append(f'<line class="spike" x1="{x:.1f}" y1="{y + 1:.1f}" x2="{x:.1f}" y2="{y + row_px - 1:.1f}" '
                         'stroke="black"/>')
        parts.append("</g>")
        y0 += h + 20
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{y0:.0f}">'
            + "".join(parts) + "</svg>\n")
