"""Boxplot-ready data for the estimation-error and bias figures.

For each (n, delta) cell: per-replication L2 error of the fitted decision rule
against the generative truth on a large independent draw, and the one-step
estimate of the unfairness degree with its oracle target.  Output is a long
CSV suitable for any plotting tool.
"""

import argparse
import csv
from pathlib import Path

from fairdesert.simulate import DgpConfig, MonteCarloSettings, monte_carlo, oracle_theta


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=200)
    parser.add_argument("--sizes", default="2000,4000")
    parser.add_argument("--deltas", default="0,0.05,0.1")
    parser.add_argument("--test-size", type=int, default=100_000)
    parser.add_argument("--jobs", type=int, default=2)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--out-dir", default="results/error_bias")
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    settings = MonteCarloSettings(methods=("dsd",), test_size=args.test_size)
    with (out / "error_bias.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "delta", "rep", "tau_error", "theta_hat", "theta_true"])
        for delta in (float(v) for v in args.deltas.split(",")):
            theta_true = oracle_theta(DgpConfig(n=2000, delta=delta, seed=args.seed))
            for n in (int(v) for v in args.sizes.split(",")):
                config = DgpConfig(n=n, delta=delta, seed=args.seed)
                print(f"running n={n} delta={delta} ...", flush=True)
                summary = monte_carlo(config, args.reps, settings, jobs=args.jobs)
                for row in summary.replications:
                    if "failed" in row:
                        continue
                    writer.writerow([
                        n, delta, row["rep"], row.get("tau_error"),
                        row.get("theta_hat"), theta_true,
                    ])
    print(f"data written to {out}")


if __name__ == "__main__":
    main()
