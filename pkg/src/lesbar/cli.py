"""Command-line surface: split, train, predict, evaluate, ensemble-study.

Runs are driven by a config file of ``key = value`` lines (see README for
the schema) with command-line flags taking precedence. All randomness
flows from the root seed through labeled derivation, so identical inputs
reproduce identical outputs byte for byte, independent of ``--jobs``.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import ensemble as ens
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    FoldSplit,
    carve_final_split,
    load_corpus,
    make_cv_splits,
    write_split_manifest,
)
from .encoder import EncoderConfig, POOL_CLS, POOL_EOS
from .features import FeatureCatalog, load_frequency_lexicon
from .metrics import evaluate_predictions
from .rng import derive_seed
from .training import ProviderSpec, TrainingConfig, predict_many, train_member


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 2."""


# config schema: key -> (parser, default)
_SCHEMA = {
    "corpus": (str, None),
    "lexicon": (str, None),
    "embeddings": (str, None),
    "output_dir": (str, "out"),
    "seed": (int, None),
    "k": (int, 5),
    "es_fraction": (float, 0.1),
    "final_es_fraction": (float, 0.075),
    "encoder": (str, "transformer"),
    "family": (str, "a"),
    "n_members": (int, 1),
    "vocab_max_size": (int, 4000),
    "projection_dim": (int, 64),
    "max_len": (int, 128),
    "model_dim": (int, 64),
    "num_layers": (int, 2),
    "num_heads": (int, 4),
    "feedforward_dim": (int, 128),
    "batch_size": (int, 16),
    "phase1_lr": (float, 5e-5),
    "phase2_lr": (float, 1e-3),
    "warmup_fraction": (float, 0.3),
    "phase1_max_epochs": (int, 100),
    "phase1_patience": (int, 5),
    "phase1_warmup_grace": (int, 300),
    "phase2_max_epochs": (int, 5000),
    "phase2_patience": (int, 100),
    "mlp_hidden": (int, 128),
    "floor": (float, 1.0),
    "sizes": (str, "1..60"),
    "resamples": (int, 1000),
    "composition": (str, "a,b,mixed"),
    "jobs": (int, 1),
}


def parse_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, quotes are optional."""
    values = {}
    for line_number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {line_number}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip().strip('"').strip("'")
        if key not in _SCHEMA:
            raise UsageError(f"{path}: line {line_number}: unknown key {key!r}")
        parse, _ = _SCHEMA[key]
        try:
            values[key] = parse(value)
        except ValueError:
            raise UsageError(f"{path}: line {line_number}: bad value for {key}: {value!r}") from None
    return values


class Settings:
    """Config-file values overlaid by command-line flags."""

    def __init__(self, args: argparse.Namespace):
        self._config = parse_config_file(args.config) if getattr(args, "config", None) else {}
        self._args = args

    def get(self, key: str):
        flag = getattr(self._args, key.replace("-", "_"), None)
        if flag is not None:
            return flag
        if key in self._config:
            return self._config[key]
        return _SCHEMA[key][1]

    def require(self, key: str):
        value = self.get(key)
        if value is None:
            raise UsageError(f"missing required setting {key!r} (flag --{key.replace('_', '-')} "
                             "or config entry)")
        return value

    def existing_path(self, key: str) -> Path:
        path = Path(self.require(key))
        if not path.exists():
            raise UsageError(f"{key} path does not exist: {path}")
        return path


def _parse_sizes(text: str) -> list[int]:
    sizes = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, _, hi = part.partition("..")
            sizes.extend(range(int(lo), int(hi) + 1))
        else:
            sizes.append(int(part))
    if not sizes:
        raise UsageError(f"no ensemble sizes in {text!r}")
    return sizes


def _parse_compositions(text: str) -> list[str]:
    comps = [part.strip() for part in str(text).split(",") if part.strip()]
    for comp in comps:
        if comp not in ens.COMPOSITIONS:
            raise UsageError(f"unknown composition {comp!r} (expected a, b, or mixed)")
    if not comps:
        raise UsageError("no compositions given")
    return comps


def _family_encoder_config(settings: Settings, family: str) -> EncoderConfig:
    if family not in ("a", "b"):
        raise UsageError(f"family must be a or b, got {family!r}")
    causal = family == "b"
    return EncoderConfig(
        vocab_size=1,  # placeholder, replaced once the vocabulary is built
        max_len=settings.get("max_len"),
        model_dim=settings.get("model_dim"),
        num_layers=settings.get("num_layers"),
        num_heads=settings.get("num_heads"),
        feedforward_dim=settings.get("feedforward_dim"),
        pooling=POOL_EOS if causal else POOL_CLS,
        causal=causal,
    )


def _training_config(settings: Settings, seed: int) -> TrainingConfig:
    return TrainingConfig(
        batch_size=settings.get("batch_size"),
        phase1_lr=settings.get("phase1_lr"),
        phase2_lr=settings.get("phase2_lr"),
        warmup_fraction=settings.get("warmup_fraction"),
        phase1_max_epochs=settings.get("phase1_max_epochs"),
        phase1_patience=settings.get("phase1_patience"),
        phase1_warmup_grace=settings.get("phase1_warmup_grace"),
        phase2_max_epochs=settings.get("phase2_max_epochs"),
        phase2_patience=settings.get("phase2_patience"),
        mlp_hidden=settings.get("mlp_hidden"),
        seed=seed,
    )


def _provider_spec(settings: Settings, encoder_config: EncoderConfig) -> ProviderSpec:
    kind = settings.get("encoder")
    if kind not in ("transformer", "random-projection", "precomputed"):
        raise UsageError(f"unknown encoder provider {kind!r}")
    embeddings = settings.get("embeddings")
    if kind == "precomputed":
        if not embeddings:
            raise UsageError("precomputed encoder needs --embeddings")
        if not Path(embeddings).exists():
            raise UsageError(f"embeddings path does not exist: {embeddings}")
    return ProviderSpec(
        kind=kind,
        encoder=encoder_config,
        projection_dim=settings.get("projection_dim"),
        vocab_max_size=settings.get("vocab_max_size"),
        embeddings_path=embeddings if kind == "precomputed" else None,
    )


def cmd_split(args) -> int:
    settings = Settings(args)
    corpus = load_corpus(settings.existing_path("corpus"))
    seed = settings.require("seed")
    out = Path(settings.get("output_dir")) / "splits"
    out.mkdir(parents=True, exist_ok=True)
    if args.final:
        train_ids, es_ids = carve_final_split(corpus, settings.get("final_es_fraction"), seed)
        split = FoldSplit(fold_index=-1, train_ids=train_ids, early_stop_ids=es_ids,
                          validation_ids=())
        write_split_manifest(out / "final.json", split, seed)
        print(f"wrote {out / 'final.json'}")
    else:
        for split in make_cv_splits(corpus, settings.get("k"), settings.get("es_fraction"), seed):
            path = out / f"fold_{split.fold_index}.json"
            write_split_manifest(path, split, seed)
            print(f"wrote {path}")
    return 0


def _train_one_member(payload):
    """Worker for member training; top level so it pickles for process pools."""
    (member_id, train, early_stop, validation, lexicon, catalog, spec, config) = payload
    result = train_member(train, early_stop, lexicon, catalog, spec, config)
    predictions = None
    if validation:
        predictions = predict_many(validation, result.model, lexicon, catalog)
    return member_id, result, predictions


def cmd_train(args) -> int:
    settings = Settings(args)
    corpus = load_corpus(settings.existing_path("corpus"))
    lexicon = load_frequency_lexicon(settings.existing_path("lexicon"))
    catalog = FeatureCatalog()
    seed = settings.require("seed")
    family = settings.get("family")
    n_members = settings.get("n_members")
    out = Path(settings.get("output_dir"))

    by_id = {s.id: s for s in corpus}
    if args.final:
        fold_tag = "final"
        train_ids, es_ids = carve_final_split(corpus, settings.get("final_es_fraction"), seed)
        validation = []
    else:
        if args.fold is None:
            raise UsageError("pass --fold N or --final")
        splits = make_cv_splits(corpus, settings.get("k"), settings.get("es_fraction"), seed)
        if not (0 <= args.fold < len(splits)):
            raise UsageError(f"--fold must be in 0..{len(splits) - 1}")
        split = splits[args.fold]
        fold_tag = f"f{split.fold_index}"
        train_ids, es_ids = split.train_ids, split.early_stop_ids
        validation = [by_id[i] for i in split.validation_ids]

    train = [by_id[i] for i in train_ids]
    early_stop = [by_id[i] for i in es_ids]
    encoder_config = _family_encoder_config(settings, family)
    spec = _provider_spec(settings, encoder_config)

    payloads = []
    for index in range(n_members):
        member_id = f"{family}{index:03d}_{fold_tag}"
        member_seed = derive_seed(seed, "member", family, fold_tag, index)
        config = _training_config(settings, member_seed)
        payloads.append((member_id, train, early_stop, validation, lexicon, catalog,
                         spec, config))

    jobs = settings.get("jobs")
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_one_member, payloads))
    else:
        results = [_train_one_member(p) for p in payloads]

    checkpoints_dir = out / "checkpoints"
    checkpoints_dir.mkdir(parents=True, exist_ok=True)
    for member_id, result, predictions in results:
        save_checkpoint(checkpoints_dir / member_id, result.model)
        line = f"{member_id}: phase2 early-stop rmse {result.phase2_rmse:.4f}"
        if result.phase1_rmse is not None:
            line += f" (phase1 {result.phase1_rmse:.4f})"
        print(line)
        if validation:
            member = ens.PoolMember(member_id=member_id, family=family,
                                    fold=int(fold_tag[1:]), predictions=predictions)
            ens.write_pool_member(out / "pool", member, [s.id for s in validation])
    if validation:
        fold = int(fold_tag[1:])
        ens.write_pool_labels(out / "pool", fold, [s.id for s in validation],
                              [s.mos for s in validation])
    return 0


def _checkpoint_prefixes(paths) -> list[Path]:
    prefixes = []
    for path in paths:
        path = Path(path)
        if path.is_dir():
            prefixes.extend(sorted(p.with_suffix("") for p in path.glob("*.json")))
        else:
            if path.suffix == ".json":
                path = path.with_suffix("")
            if not Path(str(path) + ".json").exists():
                raise UsageError(f"missing checkpoint {path}")
            prefixes.append(path)
    if not prefixes:
        raise UsageError("no checkpoints found")
    return prefixes


def cmd_predict(args) -> int:
    settings = Settings(args)
    sentences = load_corpus(settings.existing_path("input"))
    lexicon = load_frequency_lexicon(settings.existing_path("lexicon"))
    catalog = FeatureCatalog()
    floor = settings.get("floor")
    embeddings = settings.get("embeddings")

    prefixes = _checkpoint_prefixes(args.checkpoints)
    models = [load_checkpoint(p, embeddings_path=embeddings) for p in prefixes]
    scores = np.stack([predict_many(sentences, m, lexicon, catalog) for m in models])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *[f"member_{i}" for i in range(len(models))], "ensemble"])
        for col, sentence in enumerate(sentences):
            member_scores = scores[:, col]
            writer.writerow([
                sentence.id,
                *[repr(float(v)) for v in member_scores],
                repr(ens.ensemble_predict(member_scores, floor=floor)),
            ])
    print(f"wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    labels = {s.id: s.mos for s in load_corpus(Path(args.labels))}
    ids, predictions = [], []
    with Path(args.predictions).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "id" or header[-1] != "ensemble":
            raise ValueError(f"{args.predictions}: expected id,...,ensemble header")
        for row in reader:
            ids.append(row[0])
            predictions.append(float(row[-1]))
    if set(ids) != set(labels):
        raise ValueError("prediction ids do not match label ids")
    y = np.array([labels[i] for i in ids])
    report = evaluate_predictions(y, np.array(predictions))
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_ensemble_study(args) -> int:
    settings = Settings(args)
    pool, fold_labels = ens.load_pool(Path(args.pool))
    seed = settings.require("seed")
    report = ens.bootstrap_study(
        pool, fold_labels,
        sizes=_parse_sizes(settings.get("sizes")),
        compositions=_parse_compositions(settings.get("composition")),
        n_resamples=settings.get("resamples"),
        seed=seed,
        floor=settings.get("floor"),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(out)
    curves = out.with_name(out.stem + "_curves.csv")
    report.write_curves(curves)
    print(f"wrote {out} and {curves}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesbar",
        description="Sentence readability regression pipeline: splits, two-phase "
                    "training, filtered ensembles, and the bootstrap ensemble study.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file of key = value lines")
        p.add_argument("--seed", type=int, help="root seed (mandatory via flag or config)")
        p.add_argument("--jobs", type=int, help="parallel worker processes")

    p = sub.add_parser("split", help="write cross-validation split manifests")
    common(p)
    p.add_argument("--corpus", help="labeled corpus CSV (id,sentence,mos)")
    p.add_argument("--k", type=int, help="number of folds")
    p.add_argument("--es-fraction", dest="es_fraction", type=float,
                   help="early-stop share of the non-validation data")
    p.add_argument("--final-es-fraction", dest="final_es_fraction", type=float)
    p.add_argument("--final", action="store_true", help="carve the no-validation final split")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train ensemble members on one fold or the final split")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--lexicon", help="word frequency TSV")
    p.add_argument("--fold", type=int, help="cross-validation fold index")
    p.add_argument("--final", action="store_true", help="train on the final split")
    p.add_argument("--k", type=int)
    p.add_argument("--es-fraction", dest="es_fraction", type=float)
    p.add_argument("--final-es-fraction", dest="final_es_fraction", type=float)
    p.add_argument("--encoder", choices=["transformer", "random-projection", "precomputed"])
    p.add_argument("--embeddings", help="embedding JSONL for the precomputed provider")
    p.add_argument("--family", choices=["a", "b"],
                   help="a: bidirectional encoder, cls pooling; b: causal, eos pooling")
    p.add_argument("--n-members", dest="n_members", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score sentences with checkpoints and ensemble them")
    common(p)
    p.add_argument("--input", help="sentence CSV (id,sentence,mos)")
    p.add_argument("--lexicon")
    p.add_argument("--checkpoints", nargs="+", required=True,
                   help="checkpoint prefixes or a directory of checkpoints")
    p.add_argument("--embeddings")
    p.add_argument("--floor", type=float, help="validity floor for ensemble averaging")
    p.add_argument("--out", required=True, help="predictions CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a predictions CSV against labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", required=True, help="labels CSV (id,sentence,mos)")
    p.add_argument("--out", help="evaluation JSON (stdout when omitted)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ensemble-study", help="bootstrap study of ensemble size and composition")
    common(p)
    p.add_argument("--pool", required=True, help="pool directory (labels/ and members/)")
    p.add_argument("--sizes", help="ensemble sizes, e.g. 1..60 or 1,5,20")
    p.add_argument("--resamples", type=int)
    p.add_argument("--composition", help="comma-separated subset of a,b,mixed")
    p.add_argument("--floor", type=float)
    p.add_argument("--out", required=True, help="report CSV")
    p.set_defaults(func=cmd_ensemble_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
