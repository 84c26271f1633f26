#!/usr/bin/env python3
"""CDP-only vs IDP-only vs combined inputs for GBDT classifiers and encoders."""
import argparse
import json

import numpy as np

from syntha1c.cohort import SplitSpec, split_samples
from syntha1c.config import default_gbdt
from syntha1c.evaluation import classification_report, regression_report
from syntha1c.experiments import HOLDOUT, synthetic_samples
from syntha1c.features import derive_labels, get_schema
from syntha1c.models import fit_model
from syntha1c.synthgen import GeneratorSpec


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    samples, _ = synthetic_samples(GeneratorSpec(seed=args.seed))
    split = split_samples(samples, SplitSpec(holdout_count=HOLDOUT, seed=args.seed))
    y = np.array([s.target_hba1c for s in split.holdout])
    for variant in ("cdp_only", "idp_only", "r"):
        schema = get_schema(variant)
        row = {"schema": variant, "cardinality": len(schema)}
        for task in ("dm", "dm_predm"):
            clf = fit_model("gbdt", task, split.train, schema, gbdt=default_gbdt(task, variant))
            row[f"{task}_accuracy"] = classification_report(
                clf.predict_labels(split.holdout), derive_labels(y, task)).accuracy
        enc = fit_model("gbdt", "syntha1c", split.train, schema, gbdt=default_gbdt("syntha1c", variant))
        row["encoder"] = regression_report(enc.predict(split.holdout), y).to_dict()
        print(json.dumps(row, sort_keys=True))


if __name__ == "__main__":
    main()
