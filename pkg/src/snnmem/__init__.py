"""Spiking DG-CA3 associative memories on a deterministic LIF engine."""

from .engine import (
    NetworkTopology,
    NeuronParams,
    NeuronState,
    Population,
    Projection,
    SimulationConfig,
    SpikeRecord,
    StaticSynapse,
    integrate_neuron_step,
    run_simulation,
)
from .memory import (
    Cue,
    OscillatoryConfig,
    OscillatoryMemory,
    Pattern,
    RegulatedConfig,
    RegulatedMemory,
    WeightSnapshot,
    calibrate_inhibition,
    count_resources,
    learn,
    recall,
)
from .plasticity import PlasticSynapse, StdpOptions, StdpParams, freeze, stdp_pairing_delta

__version__ = "0.1.0"
