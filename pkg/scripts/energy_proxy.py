"""Spike totals of both models serving the same cues, as a stand-in for energy.

Also prints the resource table for a few network sizes.
"""

import warnings

from snnmem.harness import spike_count_comparison
from snnmem.memory import count_resources


def main() -> None:
    warnings.simplefilter("ignore")
    patterns = [range(0, 4), range(4, 8), range(8, 12)]
    cues = [{0, 1, 2}, {4, 5, 6}, {8, 9, 10}]
    for duration in (50.0, 100.0, 200.0):
        counts = spike_count_comparison(15, patterns, cues, duration)
        print(f"{duration:5.0f} ms  oscillatory {counts['oscillatory']:5d}  regulated {counts['regulated']:4d}")
    print()
    print("model        n  neurons  static  stdp  static_full  latency")
    for n in (2, 15, 20, 50):
        for kind in ("oscillatory", "regulated"):
            c = count_resources(kind, n)
            print(f"{kind:11s} {n:3d} {c.neurons:8d} {c.static_synapses:7d} {c.stdp_synapses:5d} "
                  f"{c.static_synapses_full:12d}  {c.learning_latency}/{c.recall_latency} ms")


if __name__ == "__main__":
    main()
