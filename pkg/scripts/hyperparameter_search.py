"""Random hyperparameter search for the median wind model on a synthetic scenario."""

import argparse
import dataclasses

from hybridcast.gbqr import TrainConfig
from hybridcast.harness.scenarios import generate, get_scenario
from hybridcast.harness.search import random_search

# a reduced space so a desk run finishes in minutes
DESK_SPACE = {
    "learning_rate": ("uniform", 0.01, 0.3),
    "max_depth": ("choice", [3, 4, 5, 6]),
    "num_leaves": ("choice", [16, 32, 64]),
    "min_data_in_leaf": ("choice", [20, 50, 100, 200]),
    "num_estimators": ("choice", [50, 100, 200]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="smoke")
    ap.add_argument("--budget", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--full-space", action="store_true", help="sample the full tuning ranges instead")
    args = ap.parse_args()
    data = generate(get_scenario(args.scenario))
    train = data.dataset("wind", "dwd", 0.0, 48.0)
    test = data.dataset("wind", "dwd", 23.0, 47.0, reference_hours=(0,))
    space = None if args.full_space else DESK_SPACE
    best, trials = random_search(train, args.budget, test, seed=args.seed, space=space,
                                 base=TrainConfig(histogram_bins=64))
    for score, cfg in sorted(trials, key=lambda t: t[0]):
        print(f"{score:10.4f}  lr={cfg.learning_rate:.3f} depth={cfg.max_depth} leaves={cfg.num_leaves} "
              f"min_leaf={cfg.min_data_in_leaf} trees={cfg.num_estimators}")
    print("best:", dataclasses.asdict(best))


if __name__ == "__main__":
    main()
