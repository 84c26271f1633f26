"""Command-line entry point: ``syntha1c <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import MultiRuleAnswer, multi_rule_breakdown, multi_rule_classify
from .cohort import assemble_samples, daterange_stats, load_cohort, read_samples, split_samples, write_samples
from .config import RunConfig
from .evaluation import (
    classification_report,
    regression_report,
    stratified_report,
    write_bland_altman_csv,
    write_report_csv,
    write_scatter_csv,
)
from .features import derive_labels, encode_matrix, get_schema
from .models import FittedModel, fit_model
from .robustness import SmoothnessConfig, dataset_columns, empirical_kl, global_smoothness
from .synthgen import GeneratorSpec, foreign_like, generate, inpatient_like, write_cohort

log = logging.getLogger("syntha1c")

PARTITIONS = ("train", "validation", "holdout", "all")


def _dump(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _provenance(config: RunConfig | None, **inputs) -> dict:
    return {
        "version": __version__,
        "config": None if config is None else config.resolved(),
        "inputs": {k: str(v) for k, v in inputs.items()},
    }


def _load_config(args) -> RunConfig:
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = RunConfig.from_dict(raw)
    log.info("resolved config: %s", json.dumps(cfg.resolved(), sort_keys=True))
    return cfg


def _partition(samples, cfg: RunConfig, name: str):
    if name == "all":
        return samples
    split = split_samples(samples, cfg.split_spec())
    return getattr(split, name)


def cmd_generate(args) -> int:
    spec = GeneratorSpec.from_dict(json.loads(Path(args.spec).read_text())) if args.spec else GeneratorSpec()
    if args.seed is not None:
        spec = GeneratorSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    if args.preset != "default":
        _, _, base_ledger = generate(spec)
        spec = (inpatient_like if args.preset == "inpatient" else foreign_like)(spec, base_ledger, seed=spec.seed + 1)
    meas, statics, ledger = generate(spec)
    ledger["version"] = __version__
    paths = write_cohort(args.out, meas, statics, ledger)
    print(json.dumps({"written": {k: str(v) for k, v in paths.items()}, "n_samples": ledger["n_samples"],
                      "dm_prevalence": ledger["dm_prevalence"]}))
    return 0


def cmd_assemble(args) -> int:
    data = Path(args.data)
    timelines, statics = load_cohort(data / "measurements.csv", data / "statics.csv")
    samples = assemble_samples(timelines, statics, get_schema(args.schema))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_samples(out, samples)
    summary = {"n_samples": len(samples), "n_patients": len({s.patient_id for s in samples})}
    if samples:
        summary["daterange"] = daterange_stats(samples)
    _dump(out.with_suffix(".summary.json"), {**summary, **_provenance(None, data=data, schema=args.schema)})
    print(json.dumps({k: v for k, v in summary.items() if k != "daterange"}
                     | ({"median_daterange_days": summary["daterange"]["median_days"]} if samples else {})))
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    samples = read_samples(args.samples)
    train = _partition(samples, cfg, "train")
    schema = get_schema(cfg.schema)
    history: list = []
    model = fit_model(cfg.model, cfg.task, train, schema, gbdt=cfg.gbdt_config(), mlp=cfg.mlp_config(),
                      seed=cfg.seed, log=history)
    doc = {"model": model.to_dict(), **_provenance(cfg, samples=args.samples), "n_train": len(train)}
    _dump(args.out, doc)
    _dump(Path(args.out).with_suffix(".log.json"), {"history": history, "n_train": len(train)})
    print(json.dumps({"model": str(args.out), "n_train": len(train)}))
    return 0


def load_model(path) -> FittedModel:
    return FittedModel.from_dict(json.loads(Path(path).read_text())["model"])


def evaluate_model(model: FittedModel, samples) -> dict:
    """Report dict for ``model`` on ``samples`` (classification or SynthA1c layout)."""
    y = np.array([s.target_hba1c for s in samples])
    if model.is_encoder:
        pred = model.predict(samples)
        report = {"regression": regression_report(pred, y).to_dict(), "classification": {}}
        for task in ("dm", "dm_predm"):
            report["classification"][task] = classification_report(
                model.predict_labels(samples, task), derive_labels(y, task)).to_dict()
        report["stratified"] = {
            g: {k: {"count": v["count"], "report": v["report"].to_dict() if v["report"] else None}
                for k, v in stratified_report(samples, pred, g).items()}
            for g in ("gender", "race", "bmi_category", "age_decade")
        }
        return report
    labels = model.predict_labels(samples)
    report = {"classification": {model.task: classification_report(labels, derive_labels(y, model.task)).to_dict()}}
    report["stratified"] = {
        g: {k: {"count": v["count"], "report": v["report"].to_dict()}
            for k, v in stratified_report(samples, labels, g, task=model.task).items()}
        for g in ("gender", "race")
    }
    return report


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    model = load_model(args.model)
    samples = _partition(read_samples(args.samples), cfg, args.partition)
    report = evaluate_model(model, samples)
    report["n"] = len(samples)
    report["partition"] = args.partition
    out = Path(args.out)
    _dump(out, {"report": report, **_provenance(cfg, model=args.model, samples=args.samples)})
    rows = [{"task": t, **r["percent"], **r["counts"]} for t, r in report["classification"].items()]
    write_report_csv(out.with_suffix(".csv"), rows)
    if model.is_encoder and len(samples) >= 2:
        pred = model.predict(samples)
        write_bland_altman_csv(out.with_suffix(".bland_altman.csv"), samples, pred)
        write_scatter_csv(out.with_suffix(".scatter.csv"), samples, pred)
    summary = {t: r["percent"] for t, r in report["classification"].items()}
    if "regression" in report:
        summary["regression"] = report["regression"]
    print(json.dumps(summary))
    return 0


def cmd_smoothness(args) -> int:
    cfg = _load_config(args)
    model = load_model(args.model)
    samples = _partition(read_samples(args.samples), cfg, args.partition)
    s = cfg.smoothness
    sc = SmoothnessConfig(model.stats, q=s.q, radius=s.radius, seed=cfg.seed, eval_cap=s.eval_cap)
    rep = global_smoothness(model, encode_matrix(samples, model.schema), sc, len(model.schema), model.schema.variant)
    _dump(args.out, {"report": rep.to_dict(), **_provenance(cfg, model=args.model, samples=args.samples)})
    print(json.dumps({"M_x100": 100 * rep.global_smoothness, "M": rep.global_smoothness,
                      "cardinality": rep.cardinality, "n_points": int(rep.mu.size)}))
    return 0


def cmd_shift(args) -> int:
    cfg = _load_config(args)
    feats = [f.strip() for f in args.features.split(",") if f.strip()]
    q = dataset_columns(read_samples(args.reference), feats)
    p = dataset_columns(read_samples(args.test), feats)
    rep = empirical_kl(p, q, feats, bins=cfg.kl.get("bins", 10), smoothing=cfg.kl.get("smoothing", 0.5),
                       joint=cfg.kl.get("joint", False))
    _dump(args.out, {"report": rep.to_dict(), **_provenance(cfg, reference=args.reference, test=args.test)})
    print(json.dumps({"total_kl": rep.total, "per_feature": rep.per_feature}))
    return 0


def cmd_score(args) -> int:
    answer = MultiRuleAnswer(args.age, args.gender, args.sbp, args.dbp, args.bmi)
    parts = multi_rule_breakdown(answer)
    points = sum(parts.values())
    out = {"points": points, "breakdown": parts,
           "dm": multi_rule_classify(points, "dm"), "dm_predm": multi_rule_classify(points, "dm_predm")}
    if args.out:
        _dump(args.out, {**out, "version": __version__})
    print(json.dumps(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="syntha1c", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic cohort")
    p.add_argument("--spec", help="generator spec JSON")
    p.add_argument("--preset", choices=("default", "inpatient", "foreign"), default="default")
    p.set_defaults(func=cmd_generate, out_required=True)

    p = sub.add_parser("assemble", parents=[common], help="build samples from a cohort directory")
    p.add_argument("--data", required=True, help="directory with measurements.csv and statics.csv")
    p.add_argument("--schema", default="union")
    p.set_defaults(func=cmd_assemble, out_required=True)

    p = sub.add_parser("train", parents=[common], help="fit a model on the train partition")
    p.add_argument("--samples", required=True)
    p.set_defaults(func=cmd_train, out_required=True)

    for name, func, help_ in (("evaluate", cmd_evaluate, "metrics on a partition"),
                              ("smoothness", cmd_smoothness, "global manifold smoothness")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--model", required=True)
        p.add_argument("--samples", required=True)
        p.add_argument("--partition", choices=PARTITIONS, default="holdout" if name == "evaluate" else "all")
        p.set_defaults(func=func, out_required=True)

    p = sub.add_parser("shift", parents=[common], help="empirical KL divergence D(test || reference)")
    p.add_argument("--reference", required=True, help="training samples (Q)")
    p.add_argument("--test", required=True, help="test samples (P)")
    p.add_argument("--features", default="race,gender,age,bmi,hba1c")
    p.set_defaults(func=cmd_shift, out_required=True)

    p = sub.add_parser("score", parents=[common], help="multi-rule questionnaire score")
    p.add_argument("--age", type=float, required=True)
    p.add_argument("--gender", choices=("male", "female"), required=True)
    p.add_argument("--sbp", type=float, required=True)
    p.add_argument("--dbp", type=float, required=True)
    p.add_argument("--bmi", type=float, required=True)
    p.set_defaults(func=cmd_score, out_required=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.out_required and not args.out:
            raise ValueError(f"{args.command} needs --out")
        return args.func(args)
    except Exception as exc:  # one machine-readable line, nonzero exit
        print(json.dumps({"error": type(exc).__name__, "command": args.command, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
