#!/usr/bin/env python3
"""Print campaign manifests as readable tables.

Usage: python3 scripts/summarize.py results/*/"*_manifest.json" ...
Each manifest's aggregates are recomputable from its CSVs; this script
only formats what the manifest already holds.
"""

import argparse
import json
from pathlib import Path


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _print_replicated(blob):
    for n, per_alpha in sorted(blob["aggregates"].items(), key=lambda kv: int(kv[0])):
        for alpha, agg in sorted(per_alpha.items(), key=lambda kv: float(kv[0])):
            if "coverage_by_model" in agg:
                print(f"  n={n} alpha={alpha} reps={agg['reps']}")
                for label, cov in agg["coverage_by_model"].items():
                    print(f"    {label:<14} coverage={_fmt(cov)}")
            else:
                cells = [f"{k}={_fmt(v)}" for k, v in sorted(agg.items()) if k != "reps"]
                print(f"  n={n} alpha={alpha} reps={agg['reps']} " + " ".join(cells))
        failures = blob.get("failures", {}).get(n, [])
        if failures:
            print(f"  n={n} FAILED replications: {len(failures)}")


def _print_stability(blob):
    for variant, agg in sorted(blob["aggregates"].items()):
        slope = "n/a" if agg.get("slope") is None else _fmt(agg["slope"])
        print(f"  {variant} ({agg['kind']}): slope={slope}")
        for n, count in sorted(agg["violations"].items(), key=lambda kv: int(kv[0])):
            print(f"    n={n} violations={count}")


def _print_phi(blob):
    for variant, per_n in sorted(blob["aggregates"].items()):
        print(f"  {variant}:")
        for n, agg in sorted(per_n.items(), key=lambda kv: int(kv[0])):
            diag = ", ".join(_fmt(v) for v in agg["diag"])
            print(f"    n={n} diag=[{diag}]")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("manifests", nargs="+", help="campaign manifest JSON files")
    args = parser.parse_args()
    for path in args.manifests:
        blob = json.loads(Path(path).read_text())
        print(f"{path} [{blob['kind']}]")
        if blob["kind"] == "stability":
            _print_stability(blob)
        elif blob["kind"] == "phi":
            _print_phi(blob)
        else:
            _print_replicated(blob)
        print()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
