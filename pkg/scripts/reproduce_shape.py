#!/usr/bin/env python3
"""Desk-scale run on the default synthetic cohort: classifiers and encoder vs Zero-Rule."""
import argparse
import json

from syntha1c.experiments import run_desk_reproduction


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--task", choices=("dm", "dm_predm"), default="dm")
    ap.add_argument("--schema", default="r")
    args = ap.parse_args()
    for seed in args.seeds:
        print(json.dumps(run_desk_reproduction(seed, args.task, args.schema), sort_keys=True))


if __name__ == "__main__":
    main()
