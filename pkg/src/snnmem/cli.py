"""Command-line entry point: run, calibrate, resources, export.

Exit codes: 0 success, 1 recall mismatch or calibration failure, 2 usage or spec error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .harness import BUNDLED, SpecError, load_spec, run_experiment, write_report
from .memory import CalibrationError, calibrate_inhibition, count_resources

OUT_ENV = "SNNMEM_OUT_DIR"


def _out_dir(flag: str | None) -> Path:
    return Path(flag or os.environ.get(OUT_ENV) or "out")


def _cmd_run(args) -> int:
    names = list(BUNDLED) if args.all else args.spec
    if not names:
        print("run: give spec names/paths or --all", file=sys.stderr)
        return 2
    try:
        specs = [load_spec(s, args.seed) for s in names]
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    out = _out_dir(args.out)
    status = 0
    for spec in specs:
        report = run_experiment(spec)
        paths = write_report(report, out, svg=args.svg)
        for r in report.recalls:
            mark = "ok" if r.ok else "MISMATCH"
            print(f"{spec.name}: cue {sorted(r.op.cue)} -> {sorted(r.metrics.recalled)} "
                  f"(expected {sorted(r.metrics.expected)}, {r.op.outcome}) {mark}")
        print(f"{spec.name}: {'pass' if report.ok else 'FAIL'}; wrote {', '.join(p.name for p in paths)}")
        status = max(status, 0 if report.ok else 1)
    return status


def _parse_bounds(text: str) -> tuple[float, float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError("bounds need two numbers: LO HI")
    lo, hi = float(parts[0]), float(parts[1])
    if lo < 0 or hi < lo:
        raise ValueError("bounds must satisfy 0 <= LO <= HI")
    return lo, hi


def _cmd_calibrate(args) -> int:
    try:
        lo, hi = _parse_bounds(args.bounds)
        spec = load_spec(args.workload)
        if spec.model != "regulated":
            raise SpecError("calibration applies to the regulated model")
        if args.step <= 0:
            raise ValueError("step must be positive")
    except (ValueError, SpecError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    n = args.n if args.n is not None else spec.n
    kwargs = {}
    if spec.recalls:
        kwargs = {"cues": [r.cue for r in spec.recalls], "expected": [r.expect for r in spec.recalls],
                  "repeats": spec.recalls[0].repeats}
    cfg = spec.model_config()
    try:
        w, table = calibrate_inhibition(n, list(spec.patterns), (lo, hi), step=args.step, base=cfg, **kwargs)
        failed = False
    except CalibrationError as exc:
        table, failed = exc.table, True
        print(str(exc))
    print("w_pc_pc_inh_nA,score")
    for h, score in table:
        print(f"{h:g},{score:g}")
    if failed:
        return 1
    print(f"calibrated w_pc_pc_inh = {w:g} nA")
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fragment = out / f"{spec.name}_calibration.json"
    fragment.write_text(json.dumps({"n": n, "config": {"w_pc_pc_inh": w}}, indent=2) + "\n")
    print(f"wrote {fragment}")
    return 0


def _cmd_resources(args) -> int:
    if args.n < 2:
        print("n must be >= 2", file=sys.stderr)
        return 2
    counts = count_resources(args.kind, args.n).as_dict()
    if args.csv:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["model", "n", *counts])
        w.writerow([args.kind, args.n, *counts.values()])
    else:
        print(f"{args.kind} model, n = {args.n}")
        for key, value in counts.items():
            unit = " ms" if key.endswith("latency") else ""
            print(f"  {key:22s} {value}{unit}")
    return 0


def _cmd_export(args) -> int:
    try:
        spec = load_spec(args.spec)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    report = run_experiment(spec)
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spikes, weights = out / f"{spec.name}_spikes.csv", out / f"{spec.name}_weights.csv"
    report.record.to_csv(spikes)
    report.snapshot.to_csv(weights)
    written = [spikes, weights]
    if args.svg:
        from .harness import raster_svg

        written.append(out / f"{spec.name}_raster.svg")
        written[-1].write_text(raster_svg(report.record, report.slots))
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snnmem", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run experiment specs and check their expected completions")
    r.add_argument("spec", nargs="*", help=f"bundled name ({', '.join(BUNDLED)}) or JSON path")
    r.add_argument("--all", action="store_true", help="run every bundled spec")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    r.add_argument("--svg", action="store_true", help="also write a raster SVG")
    r.add_argument("--seed", type=int, help="override the seed used to generate patterns")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("calibrate", help="grid-search the regulated lateral inhibition weight")
    c.add_argument("workload", help="regulated spec name or path providing patterns and cues")
    c.add_argument("--n", type=int, help="override the network size")
    c.add_argument("--bounds", default="0 12", help="search range 'LO HI' in nA")
    c.add_argument("--step", type=float, default=0.25)
    c.add_argument("--out")
    c.set_defaults(func=_cmd_calibrate)

    s = sub.add_parser("resources", help="neuron and synapse counts for a model size")
    s.add_argument("kind", choices=["oscillatory", "regulated"])
    s.add_argument("n", type=int)
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=_cmd_resources)

    e = sub.add_parser("export", help="write spike and weight CSVs for a spec without judging it")
    e.add_argument("spec")
    e.add_argument("--out")
    e.add_argument("--svg", action="store_true")
    e.set_defaults(func=_cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
