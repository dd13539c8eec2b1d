"""Walk-forward backtest revenue of every baseline bidding strategy."""

import argparse

from hybridcast.harness.experiments import trading_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="seasonal_spread")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--window-days", type=int, default=60)
    args = ap.parse_args()
    report = trading_ablation(args.scenario, seed=args.seed, window_days=args.window_days)
    perfect = report.totals["perfect"]
    print(f"{len(report.daily)} test days")
    for name, total in sorted(report.totals.items(), key=lambda kv: -kv[1]):
        print(f"{name:>12}  {total:>14.0f}  {total / perfect:>7.2%} of perfect")


if __name__ == "__main__":
    main()
