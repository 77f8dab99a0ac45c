"""Run every bundled experiment and write reports, CSVs and rasters.

Usage: python3 scripts/reproduce_figures.py [OUT_DIR]
"""

import sys
import warnings

from snnmem.harness import BUNDLED, load_spec, run_experiment, write_report


def main(out: str = "out/figures") -> int:
    warnings.simplefilter("ignore")
    status = 0
    for name in BUNDLED:
        report = run_experiment(load_spec(name))
        write_report(report, out, svg=True)
        got = [sorted(r.metrics.recalled) for r in report.recalls]
        print(f"{name:20s} {'ok' if report.ok else 'MISMATCH':8s} {got}")
        status |= not report.ok
    return int(status)


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
