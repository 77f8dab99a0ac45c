"""Clock-driven LIF simulation kernel with delayed current-based synapses.

Each timestep runs four stages in a fixed order:

1. Currents arriving this step are added to the synaptic state.
2. All neurons are integrated.
3. Plasticity runs.
4. The new spikes are enqueued for their targets.

Membrane and synaptic equations are integrated exactly over each step,
assuming a current that jumps on arrival and then decays exponentially.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .plasticity import StdpOptions, StdpParams, TraceStdp

Receptor = Literal["excitatory", "inhibitory"]


class TopologyError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class NeuronParams:
    """Current-based LIF constants (nF, ms, mV).

    ``v_min`` is an optional floor on the membrane potential. ``None``
    leaves the potential unbounded below.
    """

    c_m: float = 0.27
    tau_m: float = 10.0
    tau_syn_exc: float = 0.3
    tau_syn_inh: float = 0.3
    v_reset: float = -60.0
    v_rest: float = -60.0
    v_thresh: float = -55.0
    tau_refrac: float = 0.0
    v_min: float | None = None

    def __post_init__(self) -> None:
        if min(self.c_m, self.tau_m, self.tau_syn_exc, self.tau_syn_inh) <= 0:
            raise ValueError("c_m and time constants must be positive")
        if self.tau_refrac < 0:
            raise ValueError("tau_refrac must be >= 0")
        if self.v_reset > self.v_thresh or self.v_rest >= self.v_thresh:
            raise ValueError("need v_reset <= v_thresh and v_rest < v_thresh")
        if self.v_min is not None and self.v_min > self.v_reset:
            raise ValueError("v_min must not exceed v_reset")

    def refrac_steps(self, dt: float) -> int:
        return math.ceil(self.tau_refrac / dt - 1e-9)


@dataclass(frozen=True, slots=True)
class NeuronState:
    v: float = -60.0
    i_exc: float = 0.0
    i_inh: float = 0.0
    refrac_remaining: int = 0


def _coupling(tau_syn: float, p: NeuronParams, dt: float) -> float:
    """Voltage change after one step per nA of synaptic current present at step start."""
    pm = math.exp(-dt / p.tau_m)
    if math.isclose(tau_syn, p.tau_m):
        return dt / p.c_m * pm
    ps = math.exp(-dt / tau_syn)
    return tau_syn * p.tau_m / (p.c_m * (p.tau_m - tau_syn)) * (pm - ps)


def integrate_neuron_step(state: NeuronState, params: NeuronParams, dt: float) -> tuple[NeuronState, bool]:
    """Advance one neuron by ``dt``. Arriving currents must already be in ``state``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ce = _coupling(params.tau_syn_exc, params, dt)
    ci = _coupling(params.tau_syn_inh, params, dt)
    i_exc = state.i_exc * math.exp(-dt / params.tau_syn_exc)
    i_inh = state.i_inh * math.exp(-dt / params.tau_syn_inh)
    if state.refrac_remaining > 0:
        return NeuronState(params.v_reset, i_exc, i_inh, state.refrac_remaining - 1), False
    v = params.v_rest + (state.v - params.v_rest) * math.exp(-dt / params.tau_m)
    v += state.i_exc * ce - state.i_inh * ci
    if params.v_min is not None:
        v = max(v, params.v_min)
    if v >= params.v_thresh:
        return NeuronState(params.v_reset, i_exc, i_inh, params.refrac_steps(dt)), True
    return NeuronState(v, i_exc, i_inh, 0), False


@dataclass(frozen=True, slots=True)
class StaticSynapse:
    pre: int
    post: int
    weight: float
    receptor: Receptor = "excitatory"
    delay: float = 1.0


@dataclass(frozen=True)
class Population:
    """A group of neurons. ``params=None`` makes it an external spike source."""

    name: str
    size: int
    params: NeuronParams | None = None

    @property
    def is_source(self) -> bool:
        return self.params is None


@dataclass(frozen=True)
class Projection:
    """Connections from ``pre`` to ``post`` held as a dense weight matrix.

    ``mask[i, j]`` is True where neuron ``i`` of ``pre`` connects to neuron ``j``
    of ``post``. Weights are magnitudes and ``receptor`` supplies the sign.
    """

    name: str
    pre: str
    post: str
    mask: np.ndarray
    weights: np.ndarray
    receptor: Receptor = "excitatory"
    delay: float = 1.0
    plastic: bool = False
    stdp: StdpParams | None = None

    @property
    def n_synapses(self) -> int:
        return int(np.count_nonzero(self.mask))

    def synapses(self) -> list[StaticSynapse]:
        return [
            StaticSynapse(int(i), int(j), float(self.weights[i, j]), self.receptor, self.delay)
            for i, j in zip(*np.nonzero(self.mask))
        ]


def one_to_one(name, pre, post, n, weight, receptor: Receptor = "excitatory", delay=1.0) -> Projection:
    mask = np.eye(n, dtype=bool)
    return Projection(name, pre, post, mask, mask * float(weight), receptor, delay)


def all_to_all(name, pre, post, n_pre, n_post, weight, receptor: Receptor = "excitatory",
               delay=1.0, *, allow_self=True, plastic=False, stdp=None) -> Projection:
    mask = np.ones((n_pre, n_post), dtype=bool)
    if not allow_self:
        np.fill_diagonal(mask, False)
    return Projection(name, pre, post, mask, mask * float(weight), receptor, delay, plastic, stdp)


@dataclass(frozen=True)
class NetworkTopology:
    populations: tuple[Population, ...]
    projections: tuple[Projection, ...]

    def population(self, name: str) -> Population:
        for p in self.populations:
            if p.name == name:
                return p
        raise TopologyError(f"no population named {name!r}")

    def projection(self, name: str) -> Projection:
        for p in self.projections:
            if p.name == name:
                return p
        raise TopologyError(f"no projection named {name!r}")

    @property
    def n_neurons(self) -> int:
        return sum(p.size for p in self.populations)

    def validate(self, dt: float = 1.0) -> None:
        names = [p.name for p in self.populations]
        if len(set(names)) != len(names):
            raise TopologyError("duplicate population names")
        if len({p.name for p in self.projections}) != len(self.projections):
            raise TopologyError("duplicate projection names")
        for pop in self.populations:
            if pop.size < 1:
                raise TopologyError(f"population {pop.name} is empty")
        for proj in self.projections:
            pre, post = self.population(proj.pre), self.population(proj.post)
            if post.is_source:
                raise TopologyError(f"{proj.name}: cannot project onto spike source {post.name}")
            if proj.mask.shape != (pre.size, post.size) or proj.weights.shape != proj.mask.shape:
                raise TopologyError(
                    f"{proj.name}: connection matrix shape {proj.mask.shape} does not match "
                    f"{pre.name}({pre.size}) -> {post.name}({post.size})"
                )
            if proj.delay < dt or abs(proj.delay / dt - round(proj.delay / dt)) > 1e-9:
                raise TopologyError(f"{proj.name}: delay {proj.delay} must be a positive multiple of dt")
            if np.any(proj.weights[proj.mask] < 0):
                raise TopologyError(f"{proj.name}: negative weight; use the receptor for sign")
            if proj.receptor not in ("excitatory", "inhibitory"):
                raise TopologyError(f"{proj.name}: unknown receptor {proj.receptor!r}")
            if proj.plastic and proj.stdp is None:
                raise TopologyError(f"{proj.name}: plastic projection needs StdpParams")


@dataclass(frozen=True, slots=True)
class SimulationConfig:
    dt: float = 1.0
    duration: float = 100.0
    record_voltages: bool = False

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        steps = self.duration / self.dt
        if self.duration < 0 or abs(steps - round(steps)) > 1e-9:
            raise ValueError("duration must be a non-negative multiple of dt")

    @property
    def n_steps(self) -> int:
        return round(self.duration / self.dt)


StimulusSchedule = Sequence[tuple[int, float]]


@dataclass
class SpikeRecord:
    """Spikes per population as ``(neuron, step)`` pairs in emission order."""

    dt: float
    spikes: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    sizes: dict[str, int] = field(default_factory=dict)

    def times(self, population: str, neuron: int | None = None) -> list[float]:
        return [
            k * self.dt for i, k in self.spikes.get(population, []) if neuron is None or i == neuron
        ]

    def active(self, population: str, start: float, stop: float) -> set[int]:
        """Neurons of ``population`` that spiked at times in ``[start, stop]``."""
        return {i for i, k in self.spikes.get(population, []) if start - 1e-9 <= k * self.dt <= stop + 1e-9}

    def count(self, population: str | None = None) -> int:
        if population is not None:
            return len(self.spikes.get(population, []))
        return sum(len(v) for v in self.spikes.values())

    def rows(self) -> list[tuple[str, int, float]]:
        out = [(pop, i, k) for pop, ev in self.spikes.items() for i, k in ev]
        out.sort(key=lambda r: (r[2], r[0], r[1]))
        return [(pop, i, round(k * self.dt, 9)) for pop, i, k in out]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["population", "neuron", "time_ms"])
            for pop, i, t in self.rows():
                w.writerow([pop, i, _fmt(t)])

    @classmethod
    def from_csv(cls, path: str | Path, dt: float = 1.0) -> SpikeRecord:
        rec = cls(dt)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                step = round(float(row["time_ms"]) / dt)
                rec.spikes.setdefault(row["population"], []).append((int(row["neuron"]), step))
        return rec


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass
class SimulationResult:
    record: SpikeRecord
    weights: dict[str, np.ndarray]
    pending: dict[str, np.ndarray]
    voltages: dict[str, np.ndarray] | None = None


def run_simulation(
    topology: NetworkTopology,
    stimuli: Mapping[str, Iterable[tuple[int, float]]],
    config: SimulationConfig,
    options: StdpOptions | None = None,
) -> SimulationResult:
    """Simulate ``topology`` for ``config.duration`` ms and return spikes and plastic state.

    ``stimuli`` maps spike-source population names to ``(index, time_ms)``
    events. A source spike at time ``t`` is emitted at step ``t/dt``, and its
    targets see it ``delay`` later.
    """
    dt = config.dt
    topology.validate(dt)
    options = options or StdpOptions()
    pops = topology.populations
    offset, o = {}, 0
    for p in pops:
        offset[p.name] = o
        o += p.size
    n_total = o
    n_steps = config.n_steps

    source_events: dict[int, list[int]] = {}
    for name, events in stimuli.items():
        pop = topology.population(name)
        if not pop.is_source:
            raise TopologyError(f"stimuli given for non-source population {name!r}")
        last: dict[int, float] = {}
        for idx, t in events:
            if not 0 <= idx < pop.size:
                raise TopologyError(f"stimulus index {idx} outside {name}({pop.size})")
            if t < 0 or t > config.duration + 1e-9:
                raise ValueError(f"stimulus time {t} outside [0, {config.duration}]")
            if idx in last and t <= last[idx]:
                raise ValueError(f"stimulus times for {name}[{idx}] must be strictly increasing")
            last[idx] = t
            source_events.setdefault(round(t / dt), []).append(offset[name] + idx)

    # Per-neuron constants; spike sources get inert placeholders.
    is_neuron = np.zeros(n_total, dtype=bool)
    pm = np.ones(n_total)
    pse, psi, ce, ci = (np.zeros(n_total) for _ in range(4))
    v_rest, v_reset = np.zeros(n_total), np.zeros(n_total)
    v_thresh = np.full(n_total, np.inf)
    v_min = np.full(n_total, -np.inf)
    refrac = np.zeros(n_total, dtype=int)
    for p in pops:
        if p.is_source:
            continue
        s = slice(offset[p.name], offset[p.name] + p.size)
        q = p.params
        is_neuron[s] = True
        pm[s] = math.exp(-dt / q.tau_m)
        pse[s] = math.exp(-dt / q.tau_syn_exc)
        psi[s] = math.exp(-dt / q.tau_syn_inh)
        ce[s] = _coupling(q.tau_syn_exc, q, dt)
        ci[s] = _coupling(q.tau_syn_inh, q, dt)
        v_rest[s], v_reset[s], v_thresh[s] = q.v_rest, q.v_reset, q.v_thresh
        if q.v_min is not None:
            v_min[s] = q.v_min
        refrac[s] = q.refrac_steps(dt)

    v = v_rest.copy()
    i_exc = np.zeros(n_total)
    i_inh = np.zeros(n_total)
    ref_left = np.zeros(n_total, dtype=int)

    projs = topology.projections
    max_delay = max((round(p.delay / dt) for p in projs), default=1)
    ring_exc = np.zeros((max_delay + 1, n_total))
    ring_inh = np.zeros((max_delay + 1, n_total))

    learners: dict[str, TraceStdp] = {
        p.name: TraceStdp(p.stdp, p.mask, p.weights.copy(), dt, options) for p in projs if p.plastic
    }
    record = SpikeRecord(dt, {p.name: [] for p in pops}, {p.name: p.size for p in pops})
    trace_v = {p.name: np.zeros((n_steps + 1, p.size)) for p in pops if not p.is_source} if config.record_voltages else None

    for k in range(n_steps + 1):
        slot = k % (max_delay + 1)
        i_exc += ring_exc[slot]
        i_inh += ring_inh[slot]
        ring_exc[slot] = 0.0
        ring_inh[slot] = 0.0

        free = is_neuron & (ref_left == 0)
        v_new = v_rest + (v - v_rest) * pm + i_exc * ce - i_inh * ci
        v_new = np.maximum(v_new, v_min)
        v = np.where(free, v_new, np.where(is_neuron, v_reset, v))
        ref_left = np.where(free | ~is_neuron, ref_left, ref_left - 1)
        fired = free & (v >= v_thresh)
        v[fired] = v_reset[fired]
        ref_left[fired] = refrac[fired]
        i_exc *= np.where(is_neuron, pse, 0.0)
        i_inh *= np.where(is_neuron, psi, 0.0)

        fired_idx = list(np.flatnonzero(fired)) + source_events.get(k, [])
        spiking = np.zeros(n_total, dtype=bool)
        spiking[fired_idx] = True

        local: dict[str, np.ndarray] = {}
        for p in pops:
            s = offset[p.name]
            idx = np.flatnonzero(spiking[s:s + p.size])
            local[p.name] = idx
            record.spikes[p.name].extend((int(i), k) for i in idx)
            if trace_v is not None and not p.is_source:
                trace_v[p.name][k] = v[s:s + p.size]

        for proj in projs:
            rows_idx = local[proj.pre]
            if proj.plastic:
                learner = learners[proj.name]
                learner.decay()
                rows = learner.step(rows_idx, local[proj.post])
            else:
                if rows_idx.size == 0:
                    continue
                rows = proj.weights[rows_idx]
            if rows_idx.size == 0:
                continue
            target = (k + round(proj.delay / dt)) % (max_delay + 1)
            s = offset[proj.post]
            ring = ring_exc if proj.receptor == "excitatory" else ring_inh
            ring[target, s:s + rows.shape[1]] += rows.sum(axis=0)

    return SimulationResult(
        record,
        {name: l.weights.copy() for name, l in learners.items()},
        {name: l.pending.copy() for name, l in learners.items()},
        trace_v,
    )


def reference_spike_times(
    params: NeuronParams,
    inputs: Sequence[tuple[float, float]],
    duration: float,
    dt: float = 0.001,
) -> list[float]:
    """Fine-step forward-Euler integration of one neuron, used as a numerical oracle.

    ``inputs`` are ``(arrival_ms, weight_nA)`` pairs. Positive weights are
    excitatory and negative ones inhibitory. An input tagged with step ``k``
    in the clock-driven kernel arrives at ``(k-1)*dt_coarse``. Spike times
    are returned in ms.
    """
    n = round(duration / dt)
    kicks: dict[int, tuple[float, float]] = {}
    for t, w in inputs:
        j = round(t / dt)
        e, i = kicks.get(j, (0.0, 0.0))
        kicks[j] = (e + max(w, 0.0), i + max(-w, 0.0))
    v, ie, ii, hold = params.v_rest, 0.0, 0.0, 0.0
    out = []
    for j in range(n):
        e, i = kicks.get(j, (0.0, 0.0))
        ie += e
        ii += i
        if hold > 0:
            hold -= dt
            v = params.v_reset
        else:
            v += dt * ((params.v_rest - v) / params.tau_m + (ie - ii) / params.c_m)
            if params.v_min is not None:
                v = max(v, params.v_min)
        ie -= dt * ie / params.tau_syn_exc
        ii -= dt * ii / params.tau_syn_inh
        if hold <= 0 and v >= params.v_thresh:
            out.append((j + 1) * dt)
            v = params.v_reset
            hold = params.tau_refrac
    return out
