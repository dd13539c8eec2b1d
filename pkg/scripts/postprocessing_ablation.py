"""Solar MPL with and without online post-processing on a capacity-shift scenario."""

import argparse

from hybridcast.harness.experiments import postprocessing_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="capacity_shift")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-days", type=int, default=60, help="rolling window length")
    args = ap.parse_args()
    r = postprocessing_ablation(args.scenario, seed=args.seed, max_days=args.max_days)
    print(f"offline MPL {r['offline']:.3f}")
    print(f"online  MPL {r['online']:.3f}  ({1 - r['online'] / r['offline']:.2%} lower)")
    coef = r["final_model"].coefficients
    for tau, row in zip(r["final_model"].levels, coef):
        print(f"  q{tau:g}: b = {row[0]:.4f}, {row[1]:.2e}, {row[2]:.2e}")


if __name__ == "__main__":
    main()
