"""Command-line entry point: ``nameorigin <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 input-format error, 4 numerical
check failure. Every artifact-producing run writes ``run.json`` next to
its outputs with the resolved configuration and input checksums.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import dataset as ds
from . import metrics, persist, prevalence, pseudo_label as pl
from .codec import NameEncoder, normalize
from .errors import (
    EmptyAfterNormalization,
    InputFormatError,
    InvalidConfig,
    ModelFormatError,
    NameOriginError,
)
from .gradcheck import standard_suite
from .model import ModelConfig, build, final_fit, predict, train
from .training import TrainConfig

logger = logging.getLogger("nameorigin")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_SEED = 42


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_sidecar(out: Path, command: str, resolved: dict, inputs: dict):
    meta = {
        "command": command,
        "version": __version__,
        "config": resolved,
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in sorted(inputs.items()) if v},
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require_file(path, what):
    if path is None or not Path(path).is_file():
        raise InputFormatError(f"{what} not found: {path}")
    return Path(path)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    cfg_path = _require_file(path, "config file")
    try:
        cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputFormatError("config file must hold a JSON object")
    return cfg


def _pick(flag, cfg: dict, key, default):
    """Flag beats config file beats default."""
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _taxonomy(path):
    return ds.OriginTaxonomy.from_file(_require_file(path, "taxonomy file")) if path else ds.DEFAULT_TAXONOMY


def _encode_records(records):
    names = [normalize(r.name) for r in records]
    return NameEncoder().fit_transform(names), np.array([r.label for r in records], dtype=np.int64)


def _write_history(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_accuracy"])
        for r in history.records:
            writer.writerow([r.epoch, repr(r.train_loss), "" if r.val_accuracy is None else repr(r.val_accuracy)])


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    data_path = _require_file(args.data, "training data")
    taxonomy = _taxonomy(_pick(args.taxonomy, cfg, "taxonomy", None))
    seed = int(_pick(args.seed, cfg, "seed", DEFAULT_SEED))
    mcfg = cfg.get("model", {})
    tcfg = cfg.get("train", {})
    model_config = ModelConfig(
        lstm_sizes=_pick(args.lstm_sizes, mcfg, "lstm_sizes", (512, 256, 64)),
        dropout_rate=float(_pick(args.dropout, mcfg, "dropout_rate", 0.2)),
        num_classes=len(taxonomy),
    )
    tc = TrainConfig(
        batch_size=int(_pick(args.batch_size, tcfg, "batch_size", 256)),
        max_epochs=int(_pick(args.epochs, tcfg, "max_epochs", 50)),
        early_stopping_patience=int(_pick(args.patience, tcfg, "early_stopping_patience", 7)),
        learning_rate=float(_pick(args.learning_rate, tcfg, "learning_rate", 0.0025)),
        seed=seed,
    )
    spec = ds.SplitSpec(
        test_fraction=float(_pick(args.test_fraction, cfg, "test_fraction", 0.10)),
        validation_fraction=float(_pick(args.val_fraction, cfg, "validation_fraction", 0.15)),
        seed=seed,
    )
    final = bool(args.final_fit or cfg.get("final_fit", False))
    dtype = _pick(args.dtype, cfg, "dtype", "f64")

    records = ds.load_labeled_csv(data_path, taxonomy)
    tr, va, te = ds.split(records, spec)
    X_tr, y_tr = _encode_records(tr)
    val = _encode_records(va) if va else None
    model = build(model_config, seed=seed, taxonomy=taxonomy)
    model, history = train(model, (X_tr, y_tr), val, tc)
    out = _out_dir(args.out)
    _write_history(out / "history.csv", history)
    if te:
        X_te, y_te = _encode_records(te)
        metrics.write_report(out / "test_metrics.csv", metrics.evaluate(y_te, predict(model, X_te)), list(taxonomy.names))
    if final:
        # retrain on every record for the selected number of epochs
        X_all, y_all = _encode_records(records)
        model, _ = final_fit(model_config, (X_all, y_all), tc, history.best_epoch, seed=seed, taxonomy=taxonomy)
    persist.save(model, out / "model.nom", dtype=dtype)

    resolved = {
        "seed": seed,
        "model": model_config.to_dict(),
        "train": tc.to_dict(),
        "split": {"test_fraction": spec.test_fraction, "validation_fraction": spec.validation_fraction,
                  "sizes": [len(tr), len(va), len(te)]},
        "final_fit": final,
        "dtype": dtype,
        "taxonomy": list(taxonomy.names),
        "best_epoch": history.best_epoch,
        "epochs_run": history.epochs_run,
    }
    _write_sidecar(out, "train", resolved, {"data": data_path, "config": args.config})
    print(f"trained {history.epochs_run} epochs (best {history.best_epoch}); model written to {out / 'model.nom'}")
    return EXIT_OK


def _load_model(path):
    return persist.load(_require_file(path, "model file"))


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    data_path = _require_file(args.data, "labeled data")
    taxonomy = ds.OriginTaxonomy.from_names(model.taxonomy)
    records = ds.load_labeled_csv(data_path, taxonomy)
    X, y = _encode_records(records)
    result = metrics.evaluate(y, predict(model, X))
    out = _out_dir(args.out)
    metrics.write_report(out / "metrics.csv", result, list(model.taxonomy))
    _write_sidecar(out, "evaluate", {"n": len(records)}, {"model": args.model, "data": data_path})
    print(f"weighted precision {result.weighted_precision:.4f} recall {result.weighted_recall:.4f} "
          f"f1 {result.weighted_f1:.4f} on {len(records)} names")
    return EXIT_OK


def _read_names(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "name":
            raise InputFormatError("names file must have a 'name' column first", line=1)
        names = []
        for row in reader:
            if row:
                names.append((reader.line_num, row[0]))
    return names


def cmd_classify(args) -> int:
    model = _load_model(args.model)
    names_path = _require_file(args.names, "names file")
    rows = _read_names(names_path)
    normalized = []
    for line, raw in rows:
        try:
            normalized.append(normalize(raw))
        except EmptyAfterNormalization:
            raise InputFormatError(f"name {raw!r} has no letters", line=line) from None
    probs = predict(model, NameEncoder().fit_transform(normalized)) if rows else np.zeros((0, len(model.taxonomy)))
    out = _out_dir(args.out)
    with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "predicted"] + list(model.taxonomy))
        for (_, raw), p in zip(rows, probs):
            writer.writerow([raw, model.taxonomy[int(p.argmax())]] + [repr(float(v)) for v in p])
    _write_sidecar(out, "classify", {"n": len(rows)}, {"model": args.model, "names": names_path})
    print(f"classified {len(rows)} names")
    return EXIT_OK


def _weights_file(path):
    if path is None:
        return pl.DEFAULT_WEIGHTS, pl.DEFAULT_WEIGHT_SCHEMES
    cfg = _load_config(path)
    weights = tuple(cfg.get("weights", pl.DEFAULT_WEIGHTS))
    schemes = tuple(tuple(s) for s in cfg.get("schemes", pl.DEFAULT_WEIGHT_SCHEMES))
    return weights, schemes


def _fmt(v):
    return "" if v is None else f"{v:g}"


def cmd_filter(args) -> int:
    leaf_path = _require_file(args.leaf_data, "leaf data")
    seed = DEFAULT_SEED if args.seed is None else args.seed
    weights, schemes = _weights_file(args.weights)
    names, labels, X = pl.load_leaf_csv(leaf_path)
    labeled = np.flatnonzero(labels >= 0)
    pool = np.flatnonzero(labels < 0)
    if len(labeled) < 3:
        raise InputFormatError("need at least 3 labeled rows to train and evaluate the mapper")
    order = np.random.default_rng(seed).permutation(labeled)
    n_test = int(np.ceil(args.test_fraction * len(order)))
    test, tr = order[:n_test], order[n_test:]

    mapper = pl.LeafMapper(hidden_sizes=args.hidden_sizes, random_state=seed).fit(X[tr], labels[tr])
    proba = mapper.predict_proba(X[test])
    out = _out_dir(args.out)
    K = len(ds.DEFAULT_TAXONOMY)
    with open(out / "mapping_performance.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "accuracy", "f1"])
        methods = [("highest", pl.CrosswalkClassifier("highest").fit().predict_index(X[test])),
                   ("grouped", pl.CrosswalkClassifier("grouped").fit().predict_index(X[test])),
                   ("ffnn", proba.argmax(axis=1))]
        for method, pred in methods:
            acc = float(np.mean(pred == labels[test]))
            # unclassifiable rows count as an extra, always-wrong class
            cm = metrics.confusion(labels[test], np.where(pred < 0, K, pred), n_classes=K + 1)
            writer.writerow([method, f"{acc:.6f}", f"{metrics.scores(cm).weighted_f1:.6f}"])

    baseline = args.baseline_size or len(test)
    combos, raw, scored = pl.evaluate_grid(proba, labels[test], baseline, weights=weights)
    best, ranking = pl.select_best(scored)
    with open(out / "grid_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "min_p_h", "min_delta", "max_entropy", "size", "f1", "fraction",
                         "share_variance", "smallest_two_share", "std_f1", "std_fraction",
                         "std_variance", "std_smallest_two", "score"])
        for rank, i in enumerate(ranking, start=1):
            s = scored[i]
            writer.writerow([rank, _fmt(s.combo.min_p_h), _fmt(s.combo.min_delta), _fmt(s.combo.max_entropy),
                             s.raw.size, f"{s.raw.f1:.6f}", f"{s.raw.fraction:.6f}",
                             f"{s.raw.share_variance:.8f}", f"{s.raw.smallest_two_share:.6f}",
                             *(f"{v:.6f}" for v in s.standardized), f"{s.score:.6f}"])
    ranks = pl.robustness_ranks(combos, raw, best.combo, schemes)
    selected = {
        "combo": best.combo._asdict(),
        "score": best.score,
        "f1": best.raw.f1,
        "fraction": best.raw.fraction,
        "robustness_ranks": ranks,
        "top5_share": sum(r <= 5 for r in ranks) / len(ranks),
        "top20_share": sum(r <= 20 for r in ranks) / len(ranks),
    }
    (out / "selected_combo.json").write_text(json.dumps(selected, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    kept = []
    if len(pool):
        pool_proba = mapper.predict_proba(X[pool])
        mask = pl.apply_combo(*pl.confidence_arrays(pool_proba), best.combo)
        kept = [ds.LabeledName(names[pool[i]], int(pool_proba[i].argmax()), "pseudo_labeled")
                for i in np.flatnonzero(mask)]
    ds.write_labeled_csv(out / "pseudo_labeled.csv", kept)
    resolved = {"seed": seed, "weights": list(weights), "baseline_size": baseline,
                "test_fraction": args.test_fraction, "hidden_sizes": list(args.hidden_sizes),
                "n_labeled": int(len(labeled)), "n_pool": int(len(pool)), "n_kept": len(kept)}
    _write_sidecar(out, "filter", resolved, {"leaf_data": leaf_path, "weights": args.weights})
    print(f"selected {best.combo} (score {best.score:.4f}); kept {len(kept)} of {len(pool)} unlabeled rows")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    inv_path = _require_file(args.inventors, "inventor file")
    records = prevalence.load_inventor_csv(inv_path)
    if any(r.prediction is None for r in records):
        if args.model is None:
            raise InputFormatError("inventor file has no probability columns; pass --model")
        model = _load_model(args.model)
        X = NameEncoder().fit_transform([normalize(r.name) for r in records])
        for r, p in zip(records, predict(model, X)):
            r.prediction = p
    regions = None
    if args.group_by == "region":
        if args.regions is None:
            raise InputFormatError("--group-by region needs --regions")
        regions = _load_config(args.regions)
    series = prevalence.prevalence(records, args.group_by, regions=regions)
    out = _out_dir(args.out)
    prevalence.write_series_csv(out / "prevalence.csv", series)
    nw = prevalence.aggregate_subset(series, ds.DEFAULT_TAXONOMY.non_western)
    prevalence.write_scalar_csv(out / "non_western.csv", nw, "non_western", series)
    if args.dominant:
        dom = prevalence.dominant_series(series, _load_config(args.dominant))
        prevalence.write_scalar_csv(out / "dominant.csv", dom, "dominant", series)
    if args.home_countries:
        split = prevalence.location_split(records, _load_config(args.home_countries))
        with open(out / "location.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["origin", "year", "domestic", "abroad", "domestic_share", "abroad_share"])
            for origin, years in split.items():
                for year, c in years.items():
                    writer.writerow([origin, year, c.domestic, c.abroad,
                                     repr(c.domestic_share), repr(c.abroad_share)])
    _write_sidecar(out, "aggregate", {"group_by": args.group_by, "n": len(records)},
                   {"inventors": inv_path, "model": args.model, "regions": args.regions,
                    "dominant": args.dominant, "home_countries": args.home_countries})
    print(f"aggregated {len(records)} records into {len(series)} group-years")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = standard_suite(tolerance=args.tolerance, seed=args.seed)
    ok = True
    for name, report in reports.items():
        print(f"[{'PASS' if report.passed else 'FAIL'}] {name}")
        for line in report.lines():
            print("    " + line)
        ok &= report.passed
    if args.out:
        out = _out_dir(args.out)
        resolved = {"tolerance": args.tolerance, "seed": args.seed,
                    "max_rel_error": {k: r.max_rel_error for k, r in reports.items()}, "passed": ok}
        _write_sidecar(out, "gradcheck", resolved, {})
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nameorigin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the LSTM classifier on a labeled CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--taxonomy")
    p.add_argument("--lstm-sizes", type=_int_list)
    p.add_argument("--dropout", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--final-fit", action="store_true", default=None,
                   help="retrain on all rows for the best epoch count")
    p.add_argument("--dtype", choices=sorted(persist.DTYPES))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="precision/recall/F1 report on a labeled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", help="origin probabilities for a names CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--names", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("filter", help="map leaf vectors, select thresholds, emit pseudo-labels")
    p.add_argument("--leaf-data", required=True)
    p.add_argument("--baseline-size", type=int)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--hidden-sizes", type=_int_list, default=(64,))
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("aggregate", help="prevalence series from inventor records")
    p.add_argument("--inventors", required=True)
    p.add_argument("--group-by", choices=prevalence.GROUP_BY, default="country")
    p.add_argument("--model")
    p.add_argument("--regions", help="JSON object country -> region")
    p.add_argument("--dominant", help="JSON object group -> dominant origin")
    p.add_argument("--home-countries", help="JSON object origin -> list of home countries")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InputFormatError, ModelFormatError, EmptyAfterNormalization, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvalidConfig as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NameOriginError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
