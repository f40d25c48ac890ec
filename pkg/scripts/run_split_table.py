#!/usr/bin/env python3
"""Run the full eigenvalue-splitting sweep and emit table + plot CSVs.

Usage: python scripts/run_split_table.py [out_dir]

Equivalent to `qpencil split-table --out-dir out_dir --metrics` with the
default parameters; kept as a script for quick editing during experiments.
"""

import sys
from pathlib import Path

from qpencil import (
    REFERENCE_DELTAS,
    SplitExperimentConfig,
    compute_split_delta_metric,
    make_split_data,
    run_table,
)
from qpencil.experiments import format_table


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("split_table_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    config = SplitExperimentConfig(delta_list=(0.0,) + REFERENCE_DELTAS)
    rows = run_table(config, out_dir=out_dir)
    print(format_table(rows))
    reference = make_split_data(0.0)
    print("\ncontour perturbation metric (vs double-eigenvalue data):")
    for delta in REFERENCE_DELTAS:
        metric = compute_split_delta_metric(make_split_data(delta), reference,
                                            config.n_star, config.contour_radius)
        print(f"  delta={delta:<8g} metric={metric:.6e}  metric/delta={metric / delta:.3f}")
    print(f"\noutputs in {out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
