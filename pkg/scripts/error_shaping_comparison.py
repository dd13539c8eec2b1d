"""Trading loss of the error-shaping spread model against the accuracy-oriented one."""

import argparse

from hybridcast.harness.experiments import error_shaping_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="asymmetric")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=200)
    args = ap.parse_args()
    print(f"{'seed':>4}  {'e2e loss':>9}  {'acc loss':>9}  {'e2e mse':>8}  {'acc mse':>8}")
    for seed in range(args.seeds):
        r = error_shaping_comparison(args.scenario, seed=seed, epochs=args.epochs)
        print(f"{seed:>4}  {r['e2e']:>9.1f}  {r['accuracy']:>9.1f}  "
              f"{r['e2e_spread_mse']:>8.1f}  {r['accuracy_spread_mse']:>8.1f}")


if __name__ == "__main__":
    main()
