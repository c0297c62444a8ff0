"""Filtered ensemble averaging and the bootstrap size/composition study.

Member predictions live in a PredictionPool: each member belongs to one
family ("a" or "b") and one cross-validation fold, and predicts that
fold's validation sentences. The ensemble score for a sentence is the
mean of the member scores above the validity floor of 1.0 (the label
scale's minimum); if every score falls at or below the floor, the floor
itself is returned.

The bootstrap study resamples ensembles of each requested size with
replacement, per fold, computes the filtered ensemble RMSE per fold,
averages across folds, and reports the mean and standard deviation of
those averaged RMSEs over all resamples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import derive_rng

FAMILY_A = "a"
FAMILY_B = "b"
COMPOSITION_A = "a"
COMPOSITION_B = "b"
COMPOSITION_MIXED = "mixed"
COMPOSITIONS = (COMPOSITION_A, COMPOSITION_B, COMPOSITION_MIXED)

DEFAULT_FLOOR = 1.0


def ensemble_predict(member_scores, floor: float = DEFAULT_FLOOR) -> float:
    """Mean of the member scores above ``floor``; the floor if none remain."""
    scores = np.asarray(list(member_scores), dtype=float)
    if scores.size == 0:
        raise ValueError("ensemble_predict needs at least one member score")
    kept = scores[scores > floor]
    if kept.size == 0:
        return float(floor)
    return float(kept.mean())


@dataclass(frozen=True)
class PoolMember:
    """One trained model's predictions on one fold's validation sentences."""

    member_id: str
    family: str
    fold: int
    predictions: np.ndarray

    def __post_init__(self):
        if self.family not in (FAMILY_A, FAMILY_B):
            raise ValueError(f"family must be {FAMILY_A!r} or {FAMILY_B!r}, got {self.family!r}")
        predictions = np.asarray(self.predictions, dtype=float)
        if not np.all(np.isfinite(predictions)):
            raise ValueError(f"member {self.member_id!r} has non-finite predictions")
        object.__setattr__(self, "predictions", predictions)


class PredictionPool:
    """Member predictions grouped by fold, with a shared sentence order per fold."""

    def __init__(self, members, fold_sentence_ids: dict[int, list[str]]):
        self.members = list(members)
        self.fold_sentence_ids = {int(f): list(ids) for f, ids in fold_sentence_ids.items()}
        seen = set()
        for m in self.members:
            if m.member_id in seen:
                raise ValueError(f"duplicate member id {m.member_id!r}")
            seen.add(m.member_id)
            if m.fold not in self.fold_sentence_ids:
                raise ValueError(f"member {m.member_id!r} references unknown fold {m.fold}")
            expected = len(self.fold_sentence_ids[m.fold])
            if m.predictions.shape != (expected,):
                raise ValueError(
                    f"member {m.member_id!r}: {m.predictions.shape[0]} predictions "
                    f"for fold {m.fold} with {expected} sentences"
                )

    @property
    def folds(self) -> list[int]:
        return sorted(self.fold_sentence_ids)

    def prediction_matrix(self, fold: int, family: str) -> np.ndarray:
        """Stack one fold's members of one family into (n_members, n_sentences)."""
        rows = [m.predictions for m in self.members
                if m.fold == fold and m.family == family]
        if not rows:
            raise ValueError(f"no family-{family} members for fold {fold}")
        return np.stack(rows)


@dataclass(frozen=True)
class BootstrapRow:
    size: int
    composition: str
    mean_rmse: float
    std_rmse: float
    n_resamples: int


@dataclass(frozen=True)
class BootstrapReport:
    rows: tuple[BootstrapRow, ...]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["size", "composition", "mean_rmse", "std_rmse", "n_resamples"])
            for row in self.rows:
                writer.writerow([row.size, row.composition, repr(row.mean_rmse),
                                 repr(row.std_rmse), row.n_resamples])

    def write_curves(self, path) -> None:
        """Wide per-size table (one mean/std column pair per composition) for plotting."""
        compositions = []
        for row in self.rows:
            if row.composition not in compositions:
                compositions.append(row.composition)
        sizes = sorted({row.size for row in self.rows})
        cells = {(row.size, row.composition): row for row in self.rows}
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["size"]
            for comp in compositions:
                header += [f"mean_{comp}", f"std_{comp}"]
            writer.writerow(header)
            for size in sizes:
                record = [size]
                for comp in compositions:
                    row = cells.get((size, comp))
                    record += ["", ""] if row is None else [repr(row.mean_rmse), repr(row.std_rmse)]
                writer.writerow(record)


def bootstrap_study(pool: PredictionPool, fold_labels: dict[int, np.ndarray],
                    sizes, compositions, n_resamples: int, seed: int,
                    floor: float = DEFAULT_FLOOR) -> BootstrapReport:
    """Bootstrap the averaged-RMSE distribution per ensemble size and composition.

    For every (size, composition) pair, ``n_resamples`` ensembles are drawn
    with replacement (mixed-equal draws size/2 members from each family,
    independently per fold), scored with filtered averaging on each fold,
    and averaged across folds. Each pair uses its own derived seed, so
    adding sizes or compositions never perturbs other rows.
    """
    if n_resamples <= 0:
        raise ValueError(f"n_resamples must be positive, got {n_resamples}")
    folds = pool.folds
    labels = {}
    for fold in folds:
        if fold not in fold_labels:
            raise ValueError(f"missing labels for fold {fold}")
        arr = np.asarray(fold_labels[fold], dtype=float)
        expected = len(pool.fold_sentence_ids[fold])
        if arr.shape != (expected,):
            raise ValueError(f"fold {fold}: {arr.shape[0]} labels for {expected} sentences")
        labels[fold] = arr

    rows = []
    for composition in compositions:
        if composition not in COMPOSITIONS:
            raise ValueError(f"unknown composition {composition!r}")
        families = {COMPOSITION_A: (FAMILY_A,), COMPOSITION_B: (FAMILY_B,),
                    COMPOSITION_MIXED: (FAMILY_A, FAMILY_B)}[composition]
        matrices = {
            (fold, family): pool.prediction_matrix(fold, family)
            for fold in folds for family in families
        }
        for size in sizes:
            size = int(size)
            if size < 1:
                raise ValueError(f"ensemble size must be >= 1, got {size}")
            if composition == COMPOSITION_MIXED and size % 2 != 0:
                raise ValueError(f"mixed-equal composition needs an even size, got {size}")
            per_family = size // 2 if composition == COMPOSITION_MIXED else size
            rng = derive_rng(seed, "bootstrap", composition, size)

            avg = np.zeros(n_resamples)
            for fold in folds:
                draws = [
                    rng.integers(0, matrices[(fold, family)].shape[0],
                                 size=(n_resamples, per_family))
                    for family in families
                ]
                avg += _fold_rmse_for_draws(
                    [matrices[(fold, family)] for family in families],
                    draws, labels[fold], floor,
                )
            avg /= len(folds)
            rows.append(BootstrapRow(
                size=size, composition=composition,
                mean_rmse=float(avg.mean()), std_rmse=float(avg.std()),
                n_resamples=n_resamples,
            ))
    return BootstrapReport(rows=tuple(rows))


def _fold_rmse_for_draws(family_matrices, draws, labels, floor,
                         chunk_elements: int = 4_000_000) -> np.ndarray:
    """Filtered-ensemble RMSE on one fold for every resample, chunked for memory."""
    n_resamples = draws[0].shape[0]
    members_per_draw = sum(d.shape[1] for d in draws)
    n_sentences = labels.shape[0]
    out = np.zeros(n_resamples)
    chunk = max(1, chunk_elements // max(1, members_per_draw * n_sentences))
    for start in range(0, n_resamples, chunk):
        stop = min(start + chunk, n_resamples)
        picked = np.concatenate(
            [matrix[idx[start:stop]] for matrix, idx in zip(family_matrices, draws)],
            axis=1,
        )  # (chunk, size, n_sentences)
        keep = picked > floor
        counts = keep.sum(axis=1)
        sums = np.where(keep, picked, 0.0).sum(axis=1)
        ens = np.where(counts > 0, sums / np.maximum(counts, 1), floor)
        out[start:stop] = np.sqrt(np.mean((ens - labels[None, :]) ** 2, axis=1))
    return out


def save_pool(directory, pool: PredictionPool, fold_labels: dict[int, np.ndarray]) -> None:
    """Write a pool directory: per-fold label files plus one CSV per member."""
    directory = Path(directory)
    (directory / "labels").mkdir(parents=True, exist_ok=True)
    (directory / "members").mkdir(parents=True, exist_ok=True)
    for fold in pool.folds:
        write_pool_labels(directory, fold, pool.fold_sentence_ids[fold], fold_labels[fold])
    for member in pool.members:
        write_pool_member(directory, member, pool.fold_sentence_ids[member.fold])


def write_pool_labels(directory, fold: int, sentence_ids, labels) -> None:
    path = Path(directory) / "labels" / f"fold_{fold}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "mos"])
        for sid, mos in zip(sentence_ids, labels):
            writer.writerow([sid, repr(float(mos))])


def write_pool_member(directory, member: PoolMember, sentence_ids) -> None:
    path = Path(directory) / "members" / f"{member.member_id}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "fold", "id", "prediction"])
        for sid, pred in zip(sentence_ids, member.predictions):
            writer.writerow([member.family, member.fold, sid, repr(float(pred))])


def load_pool(directory) -> tuple[PredictionPool, dict[int, np.ndarray]]:
    """Read a pool directory back; member rows are aligned to the label order."""
    directory = Path(directory)
    fold_sentence_ids: dict[int, list[str]] = {}
    fold_labels: dict[int, np.ndarray] = {}
    label_files = sorted((directory / "labels").glob("fold_*.csv"))
    if not label_files:
        raise ValueError(f"{directory}: no labels/fold_*.csv files")
    for path in label_files:
        fold = int(path.stem.split("_", 1)[1])
        ids, values = [], []
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["id", "mos"]:
                raise ValueError(f"{path}: bad header {header!r}")
            for row in reader:
                ids.append(row[0])
                values.append(float(row[1]))
        fold_sentence_ids[fold] = ids
        fold_labels[fold] = np.array(values)

    members = []
    for path in sorted((directory / "members").glob("*.csv")):
        rows = []
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["family", "fold", "id", "prediction"]:
                raise ValueError(f"{path}: bad header {header!r}")
            rows = list(reader)
        if not rows:
            raise ValueError(f"{path}: empty member file")
        family = rows[0][0]
        fold = int(rows[0][1])
        if any(r[0] != family or int(r[1]) != fold for r in rows):
            raise ValueError(f"{path}: mixed family or fold within one member file")
        if fold not in fold_sentence_ids:
            raise ValueError(f"{path}: unknown fold {fold}")
        by_id = {r[2]: float(r[3]) for r in rows}
        expected = fold_sentence_ids[fold]
        missing = [sid for sid in expected if sid not in by_id]
        if missing or len(by_id) != len(expected):
            raise ValueError(f"{path}: sentence ids do not match fold {fold} labels")
        members.append(PoolMember(
            member_id=path.stem, family=family, fold=fold,
            predictions=np.array([by_id[sid] for sid in expected]),
        ))
    return PredictionPool(members, fold_sentence_ids), fold_labels
