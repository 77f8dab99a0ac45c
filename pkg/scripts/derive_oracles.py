"""Print the reference numbers frozen into the test suite.

Peak depolarisation per input weight comes from a 1 us forward-Euler run
of the LIF equations, independent of the exact-step kernel. STDP
reference values are direct evaluations of the pairing rule.
"""

import math

C_M, TAU_M, TAU_S = 0.27, 10.0, 0.3


def peak_depolarisation(w: float, dt: float = 0.001, t_end: float = 20.0) -> float:
    v, i, best = 0.0, w, 0.0
    for _ in range(round(t_end / dt)):
        v += dt * (-v / TAU_M + i / C_M)
        i -= dt * i / TAU_S
        best = max(best, v)
    return best


def main() -> None:
    for w in (1.0, 2.0, 4.0, 6.0):
        print(f"peak dv for {w:g} nA: {peak_depolarisation(w):.6f} mV")
    lo, hi = 0.0, 20.0
    for _ in range(60):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if peak_depolarisation(mid) < 5.0 else (lo, mid)
    print(f"smallest single-input weight reaching threshold: {hi:.4f} nA")
    print(f"stdp +1 ms: {6 * math.exp(-1 / 3):.6f}")
    print(f"stdp -1 ms: {-3 * math.exp(-1 / 2):.6f}")
    print(f"stdp +1,+2 ms: {6 * (math.exp(-1 / 3) + math.exp(-2 / 3)):.6f}")


if __name__ == "__main__":
    main()
