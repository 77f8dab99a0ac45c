import csv
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from snnmem.engine import (
    NetworkTopology,
    NeuronParams,
    NeuronState,
    Population,
    Projection,
    SimulationConfig,
    SpikeRecord,
    TopologyError,
    all_to_all,
    integrate_neuron_step,
    one_to_one,
    reference_spike_times,
    run_simulation,
)

# Peak depolarisation (mV) for one input of the given weight, from a 1 us
# forward-Euler run of the same equations (scripts/derive_oracles.py).
FINE_DT_PEAK = {1.0: 0.997095, 2.0: 1.994191, 4.0: 3.988382, 6.0: 5.982572}
MIN_SUPRATHRESHOLD_NA = 5.0146


def relay(weight, params=None, receptor="excitatory", n=1):
    params = params or NeuronParams()
    return NetworkTopology(
        (Population("src", n), Population("dst", n, params)),
        (one_to_one("w", "src", "dst", n, weight, receptor),),
    )


def test_rest_is_a_fixed_point():
    s, spiked = integrate_neuron_step(NeuronState(), NeuronParams(), 1.0)
    assert s.v == -60.0 and not spiked
    s, _ = integrate_neuron_step(NeuronState(), NeuronParams(), 0.013)
    assert s.v == -60.0


def test_threshold_crossing_resets():
    s, spiked = integrate_neuron_step(NeuronState(v=-54.9), NeuronParams(tau_refrac=2.0), 1.0)
    assert not spiked  # leak pulls it back below threshold
    s, spiked = integrate_neuron_step(NeuronState(v=-55.0, i_exc=1.0), NeuronParams(tau_refrac=2.0), 1.0)
    assert spiked and s.v == -60.0 and s.refrac_remaining == 2


def test_refractory_holds_reset_and_counts_down():
    s = NeuronState(v=-60.0, i_exc=50.0, refrac_remaining=2)
    s, spiked = integrate_neuron_step(s, NeuronParams(tau_refrac=2.0), 1.0)
    assert not spiked and s.v == -60.0 and s.refrac_remaining == 1


@pytest.mark.parametrize("w", sorted(FINE_DT_PEAK))
def test_single_input_response_matches_fine_dt_oracle(w):
    # Threshold raised out of the way so the full excursion is visible.
    s, _ = integrate_neuron_step(NeuronState(i_exc=w), NeuronParams(v_thresh=0.0), 1.0)
    dv = s.v + 60.0
    assert dv == pytest.approx(FINE_DT_PEAK[w], rel=0.10)


def test_scalar_step_agrees_with_vector_kernel():
    res = run_simulation(relay(4.0), {"src": [(0, 0.0)]}, SimulationConfig(duration=5.0, record_voltages=True))
    s = NeuronState(i_exc=4.0)
    for k in range(1, 6):
        s, _ = integrate_neuron_step(s, NeuronParams(), 1.0)
        assert res.voltages["dst"][k, 0] == pytest.approx(s.v, abs=1e-12)


def test_delay_arithmetic():
    topo = NetworkTopology(
        (Population("src", 1), Population("dst", 1, NeuronParams())),
        (Projection("w", "src", "dst", np.ones((1, 1), bool), np.full((1, 1), 20.0), delay=3.0),),
    )
    res = run_simulation(topo, {"src": [(0, 5.0)]}, SimulationConfig(duration=12.0))
    assert res.record.times("dst") == [8.0]


def test_relay_spike_one_step_later():
    res = run_simulation(relay(100.0), {"src": [(0, 5.0)]}, SimulationConfig(duration=10.0))
    assert res.record.times("dst") == [6.0]


def test_probe_weight_boundary():
    # The 1 ms kernel samples the membrane at 1 ms, just before the continuous peak.
    hi = run_simulation(relay(5.03), {"src": [(0, 1.0)]}, SimulationConfig(duration=4.0))
    lo = run_simulation(relay(4.9), {"src": [(0, 1.0)]}, SimulationConfig(duration=4.0))
    assert hi.record.count("dst") == 1 and lo.record.count("dst") == 0
    assert MIN_SUPRATHRESHOLD_NA < 5.03


def test_coincident_inputs_sum():
    two = NetworkTopology(
        (Population("src", 2), Population("dst", 1, NeuronParams())),
        (Projection("w", "src", "dst", np.ones((2, 1), bool), np.full((2, 1), 3.0)),),
    )
    res = run_simulation(two, {"src": [(0, 1.0), (1, 1.0)]}, SimulationConfig(duration=3.0))
    assert res.record.times("dst") == [2.0]
    res = run_simulation(two, {"src": [(0, 1.0)]}, SimulationConfig(duration=3.0))
    assert res.record.count() == 1  # only the source spike


def test_silence_without_input():
    topo = NetworkTopology(
        (Population("src", 3), Population("pc", 3, NeuronParams())),
        (one_to_one("in", "src", "pc", 3, 100.0),
         all_to_all("rec", "pc", "pc", 3, 3, 0.0, allow_self=False)),
    )
    assert run_simulation(topo, {}, SimulationConfig(duration=50.0)).record.count() == 0


@given(st.lists(st.tuples(st.integers(0, 29), st.floats(0.1, 2.0)), min_size=1, max_size=6),
       st.lists(st.tuples(st.integers(0, 29), st.floats(0.1, 2.0)), min_size=1, max_size=6))
@settings(max_examples=40, deadline=None)
def test_subthreshold_superposition(a, b):
    assume(sum(w for _, w in a + b) < 4.5)
    def trace(events):
        by_t = {}
        for t, w in events:
            by_t[t] = by_t.get(t, 0.0) + w
        n = len(by_t)
        topo = NetworkTopology(
            (Population("src", n), Population("dst", 1, NeuronParams())),
            (Projection("w", "src", "dst", np.ones((n, 1), bool), np.array([[w] for w in by_t.values()])),),
        )
        stim = {"src": [(j, float(t)) for j, t in enumerate(by_t)]}
        res = run_simulation(topo, stim, SimulationConfig(duration=40.0, record_voltages=True))
        return res.voltages["dst"][:, 0] + 60.0

    both = trace(a + b)
    assert both.max() < 5.0
    np.testing.assert_allclose(both, trace(a) + trace(b), atol=1e-9)


@given(st.lists(st.integers(0, 40), min_size=1, max_size=25, unique=True))
@settings(max_examples=40, deadline=None)
def test_refractory_period_respected(times):
    res = run_simulation(relay(200.0, NeuronParams(tau_refrac=2.0)),
                         {"src": [(0, float(t)) for t in sorted(times)]}, SimulationConfig(duration=45.0))
    spikes = res.record.times("dst")
    assert all(b - a > 2.0 for a, b in zip(spikes, spikes[1:]))


def test_zero_refractory_allows_consecutive_spikes():
    res = run_simulation(relay(20.0), {"src": [(0, float(t)) for t in range(1, 6)]},
                         SimulationConfig(duration=8.0))
    assert res.record.times("dst") == [2.0, 3.0, 4.0, 5.0, 6.0]


def test_voltage_floor():
    p = NeuronParams(v_min=-60.0)
    res = run_simulation(relay(80.0, p, "inhibitory"), {"src": [(0, 1.0)]},
                         SimulationConfig(duration=4.0, record_voltages=True))
    assert res.voltages["dst"].min() == -60.0
    free = run_simulation(relay(80.0, NeuronParams(), "inhibitory"), {"src": [(0, 1.0)]},
                          SimulationConfig(duration=4.0, record_voltages=True))
    assert free.voltages["dst"].min() < -130.0


def _ring(n, order):
    """Excitatory ring i -> i+1 with neuron labels permuted by ``order``."""
    mask = np.zeros((n, n), bool)
    for i in range(n):
        mask[order[i], order[(i + 1) % n]] = True
    return NetworkTopology(
        (Population("src", n), Population("pc", n, NeuronParams(tau_refrac=2.0))),
        (one_to_one("in", "src", "pc", n, 100.0), Projection("ring", "pc", "pc", mask, mask * 30.0)),
    )


def test_relabelling_neurons_relabels_the_output():
    n = 6
    perm = np.random.default_rng(3).permutation(n)
    base = run_simulation(_ring(n, np.arange(n)), {"src": [(0, 1.0)]}, SimulationConfig(duration=30.0))
    shuffled = run_simulation(_ring(n, perm), {"src": [(int(perm[0]), 1.0)]}, SimulationConfig(duration=30.0))
    mapped = sorted((int(perm[i]), k) for i, k in base.record.spikes["pc"])
    assert mapped == sorted(shuffled.record.spikes["pc"])
    assert base.record.count("pc") > n


def test_runs_are_bit_identical():
    stim = {"src": [(0, float(t)) for t in (1, 4, 9)]}
    a = run_simulation(_ring(5, np.arange(5)), stim, SimulationConfig(duration=40.0, record_voltages=True))
    b = run_simulation(_ring(5, np.arange(5)), stim, SimulationConfig(duration=40.0, record_voltages=True))
    assert a.record.spikes == b.record.spikes
    assert np.array_equal(a.voltages["pc"], b.voltages["pc"])


@pytest.mark.parametrize("bad", [
    lambda: NetworkTopology((Population("a", 2),), (one_to_one("x", "a", "b", 2, 1.0),)),
    lambda: NetworkTopology((Population("a", 2), Population("b", 3, NeuronParams())),
                            (one_to_one("x", "a", "b", 2, 1.0),)),
    lambda: NetworkTopology((Population("a", 2), Population("b", 2, NeuronParams())),
                            (one_to_one("x", "a", "b", 2, 1.0, delay=0.0),)),
    lambda: NetworkTopology((Population("a", 2), Population("b", 2)),
                            (one_to_one("x", "a", "b", 2, 1.0),)),
    lambda: NetworkTopology((Population("a", 2), Population("b", 2, NeuronParams())),
                            (one_to_one("x", "a", "b", 2, -1.0),)),
])
def test_malformed_topology_rejected(bad):
    with pytest.raises(TopologyError):
        run_simulation(bad(), {}, SimulationConfig(duration=1.0))


def test_bad_stimuli_rejected():
    with pytest.raises(TopologyError):
        run_simulation(relay(10.0), {"src": [(3, 1.0)]}, SimulationConfig(duration=5.0))
    with pytest.raises(ValueError):
        run_simulation(relay(10.0), {"src": [(0, 2.0), (0, 2.0)]}, SimulationConfig(duration=5.0))
    with pytest.raises(TopologyError):
        run_simulation(relay(10.0), {"dst": [(0, 1.0)]}, SimulationConfig(duration=5.0))


@pytest.mark.parametrize("kwargs", [dict(c_m=0.0), dict(tau_m=-1.0), dict(tau_refrac=-1.0),
                                    dict(v_reset=-50.0), dict(v_rest=-55.0)])
def test_neuron_param_invariants(kwargs):
    with pytest.raises(ValueError):
        NeuronParams(**kwargs)


def test_config_invariants():
    with pytest.raises(ValueError):
        SimulationConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimulationConfig(dt=1.0, duration=10.5)
    assert SimulationConfig(dt=0.5, duration=10.0).n_steps == 20


def test_spike_csv_sorted_and_round_trips(tmp_path):
    rec = SpikeRecord(1.0, {"PC": [(3, 5), (0, 5), (1, 2)], "DG": [(2, 5), (0, 1)]})
    path = tmp_path / "s.csv"
    rec.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["population", "neuron", "time_ms"]
    assert rows[1:] == [["DG", "0", "1"], ["PC", "1", "2"], ["DG", "2", "5"], ["PC", "0", "5"], ["PC", "3", "5"]]
    back = SpikeRecord.from_csv(path)
    assert sorted(back.spikes["PC"]) == sorted(rec.spikes["PC"])


def test_reference_integrator_agrees_on_a_simple_case():
    p = NeuronParams(tau_refrac=2.0)
    ref = reference_spike_times(p, [(0.0, 12.0)], 10.0)
    assert len(ref) == 1 and 0.0 < ref[0] < 1.0
    res = run_simulation(relay(12.0, p), {"src": [(0, 0.0)]}, SimulationConfig(duration=10.0))
    assert res.record.times("dst") == [math.ceil(ref[0])]
