"""DG-CA3 memory models: topology builders, learn/recall protocols and inhibition calibration."""

from __future__ import annotations

import csv
import dataclasses
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .engine import (
    NetworkTopology,
    NeuronParams,
    Population,
    Projection,
    SimulationConfig,
    SimulationResult,
    SpikeRecord,
    all_to_all,
    one_to_one,
    run_simulation,
)
from .plasticity import StdpOptions, StdpParams, freeze

ModelKind = Literal["oscillatory", "regulated"]

DG, PC, INH, LEARNING = "DG", "PC", "INH", "LEARNING"
STDP_PROJ = "pc_pc_stdp"
LATERAL_PROJ = "pc_pc_inh"


class CalibrationError(RuntimeError):
    def __init__(self, message: str, table: list[tuple[float, float]]):
        super().__init__(message)
        self.table = table


@dataclass(frozen=True)
class Pattern:
    active: frozenset[int]
    n: int

    def __init__(self, active: Iterable[int], n: int):
        object.__setattr__(self, "active", frozenset(int(i) for i in active))
        object.__setattr__(self, "n", int(n))
        if not self.active:
            raise ValueError("pattern must not be empty")
        if min(self.active) < 0 or max(self.active) >= n:
            raise ValueError(f"pattern indices must lie in [0, {n})")

    def __iter__(self):
        return iter(sorted(self.active))

    def __len__(self) -> int:
        return len(self.active)


class Cue(Pattern):
    """A partial (or full) pattern presented to trigger completion."""


def _as_indices(x) -> frozenset[int]:
    return x.active if isinstance(x, Pattern) else frozenset(int(i) for i in x)


@dataclass(frozen=True)
class OscillatoryConfig:
    n: int
    w_dg_pc: float = 100.0
    w_pc_pc_inh: float = 6.0
    stdp: StdpParams = field(default_factory=StdpParams)
    v_min: float | None = -60.0
    presentations: int = 5
    cue_presentations: int = 5
    slot_ms: int = 14
    options: StdpOptions = field(default_factory=StdpOptions)

    tau_refrac = 0.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.presentations < 1 or self.cue_presentations < 1:
            raise ValueError("need at least one presentation")
        if self.presentations >= self.slot_ms - 1 or self.cue_presentations >= self.slot_ms - 1:
            raise ValueError("presentations must fit inside a slot")

    def neuron_params(self) -> NeuronParams:
        return NeuronParams(tau_refrac=self.tau_refrac, v_min=self.v_min)


@dataclass(frozen=True)
class RegulatedConfig:
    n: int
    w_pc_pc_inh: float = 1.0
    w_dg_pc: float = 200.0
    w_learning_inh: float = 6.0
    w_dg_inh: float = 12.0
    w_inh_pc: float = 100.0
    stdp: StdpParams = field(default_factory=StdpParams)
    v_min: float | None = -60.0
    presentations: int = 4
    presentation_spacing_ms: int = 3
    learn_slot_ms: int = 50
    recall_slot_ms: int = 14
    cue_spacing_ms: int = 3
    final_commit: bool = False
    options: StdpOptions = field(default_factory=StdpOptions)

    tau_refrac = 2.0
    inh_tau_refrac = 0.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if min(self.w_pc_pc_inh, self.w_dg_pc, self.w_learning_inh, self.w_dg_inh, self.w_inh_pc) < 0:
            raise ValueError("weights are magnitudes and must be >= 0")
        if 1 + (self.presentations - 1) * self.presentation_spacing_ms >= self.learn_slot_ms - 2:
            raise ValueError("presentations do not fit inside the learning slot")
        if self.presentation_spacing_ms < 1 or self.cue_spacing_ms < 1:
            raise ValueError("spacings must be >= 1 ms")


@dataclass(frozen=True)
class ResourceCounts:
    neurons: int
    static_synapses: int
    stdp_synapses: int
    learning_latency: int
    recall_latency: int
    static_synapses_full: int

    def as_dict(self) -> dict[str, int]:
        return dataclasses.asdict(self)


@dataclass
class WeightSnapshot:
    """Committed recurrent weights plus any potentiation still awaiting a presynaptic spike."""

    weights: np.ndarray
    pending: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pre", "post", "weight_nA"])
            for i in range(self.n):
                for j in range(self.n):
                    if i != j:
                        w.writerow([i, j, repr(float(self.weights[i, j]))])

    @classmethod
    def from_csv(cls, path: str | Path, n: int | None = None) -> WeightSnapshot:
        rows = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append((int(r["pre"]), int(r["post"]), float(r["weight_nA"])))
        size = n if n is not None else 1 + max(max(a, b) for a, b, _ in rows)
        w = np.zeros((size, size))
        for a, b, x in rows:
            w[a, b] = x
        return cls(w)


@dataclass
class RecallResult:
    recalled: set[int]
    record: SpikeRecord
    window: tuple[float, float]
    cue_end: float


def _probe_suprathreshold(weight: float, params: NeuronParams) -> None:
    topo = NetworkTopology(
        (Population("src", 1), Population("dst", 1, dataclasses.replace(params, v_min=None))),
        (one_to_one("probe", "src", "dst", 1, weight),),
    )
    res = run_simulation(topo, {"src": [(0, 1.0)]}, SimulationConfig(duration=4.0))
    if res.record.times("dst") != [2.0]:
        raise ValueError(f"DG->PC weight {weight} nA does not make one DG spike yield one PC spike")


def build_oscillatory(cfg: OscillatoryConfig, weights: np.ndarray | None = None) -> NetworkTopology:
    n = cfg.n
    _probe_suprathreshold(cfg.w_dg_pc, cfg.neuron_params())
    stdp = all_to_all(STDP_PROJ, PC, PC, n, n, cfg.stdp.w_init, allow_self=False,
                      plastic=True, stdp=cfg.stdp, delay=cfg.stdp.delay)
    if weights is not None:
        stdp = dataclasses.replace(stdp, weights=np.where(stdp.mask, weights, 0.0))
    return NetworkTopology(
        (Population(DG, n), Population(PC, n, cfg.neuron_params())),
        (
            one_to_one("dg_pc", DG, PC, n, cfg.w_dg_pc),
            stdp,
            all_to_all(LATERAL_PROJ, PC, PC, n, n, cfg.w_pc_pc_inh, "inhibitory", allow_self=False),
        ),
    )


def build_regulated(cfg: RegulatedConfig, weights: np.ndarray | None = None) -> NetworkTopology:
    n = cfg.n
    pc_params = NeuronParams(tau_refrac=cfg.tau_refrac, v_min=cfg.v_min)
    inh_params = NeuronParams(tau_refrac=cfg.inh_tau_refrac, v_min=cfg.v_min)
    _probe_suprathreshold(cfg.w_dg_pc, pc_params)
    stdp = all_to_all(STDP_PROJ, PC, PC, n, n, cfg.stdp.w_init, allow_self=False,
                      plastic=True, stdp=cfg.stdp, delay=cfg.stdp.delay)
    if weights is not None:
        stdp = dataclasses.replace(stdp, weights=np.where(stdp.mask, weights, 0.0))
    return NetworkTopology(
        (Population(DG, n), Population(PC, n, pc_params), Population(INH, n, inh_params),
         Population(LEARNING, 1)),
        (
            one_to_one("dg_pc", DG, PC, n, cfg.w_dg_pc),
            one_to_one("dg_inh", DG, INH, n, cfg.w_dg_inh, "inhibitory"),
            one_to_one("inh_pc", INH, PC, n, cfg.w_inh_pc, "inhibitory"),
            all_to_all("learning_inh", LEARNING, INH, 1, n, cfg.w_learning_inh),
            stdp,
            all_to_all(LATERAL_PROJ, PC, PC, n, n, cfg.w_pc_pc_inh, "inhibitory", allow_self=False),
        ),
    )


def _check(indices: frozenset[int], n: int) -> None:
    if not indices:
        raise ValueError("empty pattern or cue")
    if min(indices) < 0 or max(indices) >= n:
        raise ValueError(f"indices {sorted(indices)} outside [0, {n})")


class OscillatoryMemory:
    """Oscillatory attractor memory. Learning and recall share one continuous simulation.

    Every call appends an operation slot to the timeline. Each recall
    replays the whole timeline from t=0, which is cheap at this scale and
    keeps the simulation a pure function of its inputs.
    """

    kind: ModelKind = "oscillatory"

    def __init__(self, cfg: OscillatoryConfig):
        self.cfg = cfg
        self.topology = build_oscillatory(cfg)
        self.events: list[tuple[int, float]] = []
        self.slots: list[tuple[str, frozenset[int], int]] = []
        self.clock = 1

    def _deliver(self, indices: frozenset[int], reps: int, kind: str) -> int:
        start = self.clock
        for r in range(reps):
            self.events += [(i, float(start + r)) for i in sorted(indices)]
        self.slots.append((kind, indices, start))
        self.clock += self.cfg.slot_ms
        return start

    def simulate(self, duration: float | None = None) -> SimulationResult:
        dur = float(duration if duration is not None else self.clock - 1)
        events = sorted(self.events, key=lambda e: (e[1], e[0]))
        return run_simulation(self.topology, {DG: events}, SimulationConfig(duration=dur), self.cfg.options)

    def learn(self, patterns: Sequence) -> WeightSnapshot:
        if not patterns:
            raise ValueError("no patterns to learn")
        if any(kind == "recall" for kind, _, _ in self.slots):
            raise RuntimeError("learning after recall would store the ongoing oscillation as well")
        for p in patterns:
            idx = _as_indices(p)
            _check(idx, self.cfg.n)
            self._deliver(idx, self.cfg.presentations, "learn")
        res = self.simulate()
        return WeightSnapshot(res.weights[STDP_PROJ], res.pending[STDP_PROJ])

    def recall(self, cue) -> RecallResult:
        idx = _as_indices(cue)
        _check(idx, self.cfg.n)
        start = self._deliver(idx, self.cfg.cue_presentations, "recall")
        res = self.simulate()
        cue_end = float(start + self.cfg.cue_presentations - 1)
        window = (cue_end + 1, float(start + self.cfg.slot_ms - 1))
        return RecallResult(res.record.active(PC, *window) - idx, res.record, window, cue_end)


class RegulatedMemory:
    """Activity-regulated memory. Learning and recall are separate simulations linked by a snapshot."""

    kind: ModelKind = "regulated"

    def __init__(self, cfg: RegulatedConfig):
        self.cfg = cfg
        self.topology = build_regulated(cfg)
        self.last_learning: SimulationResult | None = None

    def learning_schedule(self, patterns: Sequence) -> tuple[list[tuple[int, float]], float]:
        c = self.cfg
        events = []
        for j, p in enumerate(patterns):
            idx = _as_indices(p)
            _check(idx, c.n)
            start = 1 + j * c.learn_slot_ms
            for r in range(c.presentations):
                events += [(i, float(start + r * c.presentation_spacing_ms)) for i in sorted(idx)]
        return events, float(len(patterns) * c.learn_slot_ms)

    def learn(self, patterns: Sequence) -> WeightSnapshot:
        if not patterns:
            raise ValueError("no patterns to learn")
        events, duration = self.learning_schedule(patterns)
        learning = [(0, float(t)) for t in range(int(duration) + 1)]
        res = run_simulation(
            self.topology,
            {DG: sorted(events, key=lambda e: (e[1], e[0])), LEARNING: learning},
            SimulationConfig(duration=duration),
            self.cfg.options,
        )
        self.last_learning = res
        return WeightSnapshot(res.weights[STDP_PROJ], res.pending[STDP_PROJ])

    def frozen(self, snapshot: WeightSnapshot) -> NetworkTopology:
        pending = {STDP_PROJ: snapshot.pending} if snapshot.pending is not None else None
        with warnings.catch_warnings():
            if not self.cfg.final_commit:
                warnings.simplefilter("ignore")
            return freeze(self.topology, {STDP_PROJ: snapshot.weights}, pending,
                          final_commit=self.cfg.final_commit)

    def recall_sequence(self, cues: Sequence, snapshot: WeightSnapshot, repeats: int = 1,
                        idle_ms: int = 0) -> tuple[list[RecallResult], SpikeRecord]:
        """Present each cue in its own recall slot of one frozen simulation."""
        c = self.cfg
        if repeats < 1:
            raise ValueError("repeats must be >= 1")
        if 1 + (repeats - 1) * c.cue_spacing_ms >= c.recall_slot_ms - 2:
            raise ValueError("repeated cue does not fit in the recall slot")
        events, spans = [], []
        for j, cue in enumerate(cues):
            idx = _as_indices(cue)
            _check(idx, c.n)
            start = 1 + j * c.recall_slot_ms
            for r in range(repeats):
                events += [(i, float(start + r * c.cue_spacing_ms)) for i in sorted(idx)]
            cue_end = float(start + (repeats - 1) * c.cue_spacing_ms)
            spans.append((idx, cue_end, (cue_end + 1, float(start + c.recall_slot_ms - 1))))
        duration = float(len(cues) * c.recall_slot_ms + idle_ms)
        res = run_simulation(self.frozen(snapshot), {DG: sorted(events, key=lambda e: (e[1], e[0]))},
                             SimulationConfig(duration=duration), c.options)
        out = [RecallResult(res.record.active(PC, *w) - idx, res.record, w, end) for idx, end, w in spans]
        return out, res.record

    def recall(self, cue, snapshot: WeightSnapshot, repeats: int = 1) -> RecallResult:
        return self.recall_sequence([cue], snapshot, repeats)[0][0]


Memory = OscillatoryMemory | RegulatedMemory


def learn(model: Memory, patterns: Sequence) -> WeightSnapshot:
    return model.learn(patterns)


def recall(model: Memory, cue, snapshot: WeightSnapshot | None = None, repeats: int = 1):
    """Recall from ``cue`` and return ``(recalled set, SpikeRecord)``."""
    if isinstance(model, OscillatoryMemory):
        r = model.recall(cue)
    else:
        if snapshot is None:
            raise ValueError("the regulated model recalls from a weight snapshot")
        r = model.recall(cue, snapshot, repeats)
    return r.recalled, r.record


def leave_one_out(patterns: Sequence) -> tuple[list[frozenset[int]], list[frozenset[int]]]:
    """Cue each pattern with all but its largest index."""
    cues, expected = [], []
    for p in patterns:
        idx = _as_indices(p)
        last = max(idx)
        cues.append(idx - {last})
        expected.append(frozenset({last}))
    return cues, expected


def calibrate_inhibition(
    n: int,
    patterns: Sequence,
    search_bounds: tuple[float, float],
    *,
    step: float = 0.25,
    cues: Sequence | None = None,
    expected: Sequence | None = None,
    repeats: int = 1,
    base: RegulatedConfig | None = None,
) -> tuple[float, list[tuple[float, float]]]:
    """Grid-search the lateral inhibition weight of the regulated model.

    Every candidate runs a fresh learn and recall cycle and is scored by its
    fraction of exact completions. Returns the smallest weight that scores 1.0
    together with the full score table. Raises ``CalibrationError`` if no
    candidate scores 1.0.
    """
    lo, hi = search_bounds
    if lo > hi or lo < 0 or step <= 0:
        raise ValueError("bounds must satisfy 0 <= lo <= hi and step > 0")
    if cues is None:
        cues, expected = leave_one_out(patterns)
    if expected is None or len(expected) != len(cues):
        raise ValueError("need one expected completion per cue")
    expected = [_as_indices(e) for e in expected]
    base = base or RegulatedConfig(n)
    candidates = np.round(np.arange(lo, hi + step / 2, step), 10) if hi > lo else np.array([lo])
    table = []
    for h in candidates:
        model = RegulatedMemory(dataclasses.replace(base, n=n, w_pc_pc_inh=float(h)))
        snap = model.learn(patterns)
        results, _ = model.recall_sequence(cues, snap, repeats)
        score = float(np.mean([r.recalled == e for r, e in zip(results, expected)]))
        table.append((float(h), score))
    for h, score in table:
        if score == 1.0:
            return h, table
    raise CalibrationError(f"no inhibition weight in [{lo}, {hi}] gives perfect recall", table)


def count_resources(kind: ModelKind, n: int) -> ResourceCounts:
    if n < 2:
        raise ValueError("n must be >= 2")
    recurrent = n * (n - 1)
    if kind == "oscillatory":
        return ResourceCounts(2 * n, n, recurrent, 14, 14, n + recurrent)
    if kind == "regulated":
        return ResourceCounts(3 * n + 1, 4 * n, recurrent, 50, 14, 4 * n + recurrent)
    raise ValueError(f"unknown model kind {kind!r}")


def tally_topology(topology: NetworkTopology, learning_latency: int, recall_latency: int) -> ResourceCounts:
    """Count a built network in the same terms as ``count_resources``.

    The headline static count leaves out the recurrent inhibitory projection.
    The full count includes it.
    """
    neurons = sum(p.size for p in topology.populations)
    static = [p for p in topology.projections if not p.plastic]
    full = sum(p.n_synapses for p in static)
    headline = sum(p.n_synapses for p in static if p.name != LATERAL_PROJ)
    stdp = sum(p.n_synapses for p in topology.projections if p.plastic)
    return ResourceCounts(neurons, headline, stdp, learning_latency, recall_latency, full)


def model_for(kind: ModelKind, n: int, **overrides) -> Memory:
    if kind == "oscillatory":
        return OscillatoryMemory(OscillatoryConfig(n, **overrides))
    if kind == "regulated":
        return RegulatedMemory(RegulatedConfig(n, **overrides))
    raise ValueError(f"unknown model kind {kind!r}")
