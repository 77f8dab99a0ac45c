"""Pair-based additive STDP whose weight changes are committed only on presynaptic spikes.

Two implementations live here. ``PlasticSynapse`` with ``on_pre_spike`` and
``on_post_spike`` keeps explicit spike histories and is the readable
per-synapse reference. ``TraceStdp`` is the vectorised form used by the
engine. It keeps one exponential trace per neuron, which reproduces
all-to-all pairing exactly.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

TransmitMode = Literal["pre_commit", "post_commit"]
PairOrder = Literal["pre_first", "post_first"]


class UncommittedChangeWarning(UserWarning):
    """Raised when freezing drops potentiation that no presynaptic spike committed."""


@dataclass(frozen=True, slots=True)
class StdpParams:
    tau_plus: float = 3.0
    tau_minus: float = 2.0
    a_plus: float = 6.0
    a_minus: float = 3.0
    w_max: float = 12.0
    w_min: float = 0.0
    w_init: float = 0.0
    delay: float = 1.0

    def __post_init__(self) -> None:
        if self.tau_plus <= 0 or self.tau_minus <= 0:
            raise ValueError("STDP time constants must be positive")
        if self.a_plus < 0 or self.a_minus < 0:
            raise ValueError("STDP amplitudes must be non-negative")
        if not (self.w_min <= self.w_init <= self.w_max):
            raise ValueError("require w_min <= w_init <= w_max")
        if self.delay <= 0:
            raise ValueError("plastic synapse delay must be positive")

    @property
    def horizon(self) -> float:
        """Age beyond which a remembered spike may be dropped.

        At 25 time constants a single pairing is worth under 1e-10 of its
        amplitude, so even a long train loses far less than 1e-6 nA.
        """
        return 25.0 * max(self.tau_plus, self.tau_minus)

    def clamp(self, w):
        return np.clip(w, self.w_min, self.w_max)


@dataclass(frozen=True, slots=True)
class StdpOptions:
    """Engine-level switches for the two ordering choices the rule leaves open.

    ``transmit`` picks the weight a committing presynaptic spike carries:
    the value before the commit or after it. ``order`` picks which is
    handled first when a neuron's outgoing synapses commit in the same step
    that its incoming synapses receive a postsynaptic spike.
    """

    transmit: TransmitMode = "pre_commit"
    order: PairOrder = "pre_first"

    def __post_init__(self) -> None:
        if self.transmit not in ("pre_commit", "post_commit"):
            raise ValueError(f"unknown transmit mode {self.transmit!r}")
        if self.order not in ("pre_first", "post_first"):
            raise ValueError(f"unknown pair order {self.order!r}")


def stdp_pairing_delta(delta_t: float, params: StdpParams) -> float:
    """Weight change in nA for one pairing with ``delta_t = t_post - t_pre``.

    Same-step pairs (``delta_t == 0``) contribute nothing.
    """
    if delta_t > 0:
        return params.a_plus * math.exp(-delta_t / params.tau_plus)
    if delta_t < 0:
        return -params.a_minus * math.exp(delta_t / params.tau_minus)
    return 0.0


@dataclass(frozen=True, slots=True)
class PlasticSynapse:
    pre: int
    post: int
    weight: float = 0.0
    pre_spike_history: tuple[float, ...] = ()
    post_spike_history: tuple[float, ...] = ()
    pending_delta: float = 0.0
    delay: float = 1.0


def _trim(history: tuple[float, ...], t: float, horizon: float) -> tuple[float, ...]:
    return tuple(s for s in history if t - s <= horizon)


def on_post_spike(syn: PlasticSynapse, t: float, params: StdpParams) -> PlasticSynapse:
    """Pair a postsynaptic spike with remembered presynaptic spikes. Never commits."""
    if syn.post_spike_history and t < syn.post_spike_history[-1]:
        raise ValueError("postsynaptic spikes must arrive in time order")
    gain = sum(stdp_pairing_delta(t - s, params) for s in syn.pre_spike_history)
    return dataclasses.replace(
        syn,
        pending_delta=syn.pending_delta + gain,
        pre_spike_history=_trim(syn.pre_spike_history, t, params.horizon),
        post_spike_history=_trim(syn.post_spike_history, t, params.horizon) + (t,),
    )


def on_pre_spike(syn: PlasticSynapse, t: float, params: StdpParams) -> tuple[PlasticSynapse, float]:
    """Pair a presynaptic spike with remembered postsynaptic spikes, then commit.

    Returns the updated synapse and the committed weight.
    """
    if syn.pre_spike_history and t < syn.pre_spike_history[-1]:
        raise ValueError("presynaptic spikes must arrive in time order")
    loss = sum(stdp_pairing_delta(s - t, params) for s in syn.post_spike_history)
    w = float(params.clamp(syn.weight + syn.pending_delta + loss))
    new = dataclasses.replace(
        syn,
        weight=w,
        pending_delta=0.0,
        pre_spike_history=_trim(syn.pre_spike_history, t, params.horizon) + (t,),
        post_spike_history=_trim(syn.post_spike_history, t, params.horizon),
    )
    return new, w


def transmitted_weight(before: PlasticSynapse, after: PlasticSynapse, mode: TransmitMode) -> float:
    return before.weight if mode == "pre_commit" else after.weight


@dataclass
class TraceStdp:
    """Dense STDP state for one plastic projection.

    ``weights`` and ``pending`` have shape ``(n_pre, n_post)``. ``mask`` marks
    which entries are real synapses. Traces hold the sum of
    ``exp(-age/tau)`` over earlier spikes, so pairing against the trace
    equals pairing against the full history.
    """

    params: StdpParams
    mask: np.ndarray
    weights: np.ndarray
    dt: float = 1.0
    options: StdpOptions = field(default_factory=StdpOptions)
    pending: np.ndarray = field(init=False)
    pre_trace: np.ndarray = field(init=False)
    post_trace: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool)
        self.weights = np.where(self.mask, np.asarray(self.weights, dtype=float), 0.0)
        self.pending = np.zeros_like(self.weights)
        self.pre_trace = np.zeros(self.mask.shape[0])
        self.post_trace = np.zeros(self.mask.shape[1])
        self._pre_decay = math.exp(-self.dt / self.params.tau_plus)
        self._post_decay = math.exp(-self.dt / self.params.tau_minus)

    def decay(self) -> None:
        self.pre_trace *= self._pre_decay
        self.post_trace *= self._post_decay

    def _commit(self, rows: np.ndarray) -> np.ndarray:
        before = self.weights[rows].copy()
        self.pending[rows] -= self.params.a_minus * self.post_trace[None, :]
        updated = self.params.clamp(self.weights[rows] + self.pending[rows])
        self.weights[rows] = np.where(self.mask[rows], updated, 0.0)
        self.pending[rows] = 0.0
        return before if self.options.transmit == "pre_commit" else self.weights[rows].copy()

    def _potentiate(self, cols: np.ndarray) -> None:
        gain = self.params.a_plus * self.pre_trace[:, None]
        self.pending[:, cols] += np.where(self.mask[:, cols], gain, 0.0)

    def step(self, pre_spikes: np.ndarray, post_spikes: np.ndarray) -> np.ndarray:
        """Process one timestep's spikes and return the outgoing weight rows.

        Call ``decay`` first at every step. Row ``r`` of the result holds the
        weights carried by the spike of presynaptic neuron ``pre_spikes[r]``.
        """
        if self.options.order == "pre_first":
            rows = self._commit(pre_spikes)
            self._potentiate(post_spikes)
        else:
            self._potentiate(post_spikes)
            rows = self._commit(pre_spikes)
        self.pre_trace[pre_spikes] += 1.0
        self.post_trace[post_spikes] += 1.0
        return rows


def freeze(topology, weights: dict, pending: dict | None = None, *, final_commit: bool = False):
    """Turn every plastic projection into a static one carrying its committed weights.

    Uncommitted potentiation is dropped with a warning unless
    ``final_commit`` is set, in which case it is added and clamped first.
    Freezing a topology without plastic projections returns it unchanged.
    """
    pending = pending or {}
    projections = []
    for proj in topology.projections:
        if not proj.plastic:
            projections.append(proj)
            continue
        w = np.asarray(weights.get(proj.name, proj.weights), dtype=float)
        extra = pending.get(proj.name)
        if extra is not None and np.any(extra[proj.mask] > 0):
            if final_commit:
                w = proj.stdp.clamp(w + extra)
            else:
                warnings.warn(
                    f"{proj.name}: discarding {int(np.count_nonzero(extra > 0))} uncommitted "
                    "positive weight changes",
                    UncommittedChangeWarning,
                    stacklevel=2,
                )
        w = np.where(proj.mask, w, 0.0)
        projections.append(dataclasses.replace(proj, weights=w, plastic=False, stdp=None))
    return dataclasses.replace(topology, projections=tuple(projections))
