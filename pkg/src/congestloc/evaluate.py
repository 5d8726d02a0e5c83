"""Confusion counts of detector verdicts against simulator ground truth."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Hashable, Iterable, Mapping, Sequence


class KeyMismatchError(ValueError):
    def __init__(self, missing_verdicts: Sequence, missing_truth: Sequence):
        self.missing_verdicts = sorted(missing_verdicts)
        self.missing_truth = sorted(missing_truth)
        parts = []
        if self.missing_verdicts:
            parts.append("no verdict for " + ", ".join(_fmt_key(k) for k in self.missing_verdicts))
        if self.missing_truth:
            parts.append("no ground truth for " + ", ".join(_fmt_key(k) for k in self.missing_truth))
        super().__init__("; ".join(parts))

    @property
    def orphan_units(self) -> list[str]:
        keys = [*self.missing_verdicts, *self.missing_truth]
        return sorted({k[0] if isinstance(k, tuple) else k for k in keys})


def _fmt_key(k) -> str:
    return "/".join(map(str, k)) if isinstance(k, tuple) else str(k)


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def fnr(self) -> float | None:
        return self.fn / (self.fn + self.tp) if self.fn + self.tp else None

    @property
    def fpr(self) -> float | None:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else None


def evaluate(
    predicted: Mapping[Hashable, bool],
    truth: Mapping[Hashable, bool],
    skip: Iterable[Hashable] = (),
) -> Confusion:
    """Compare predictions with ground truth over their common keys.

    ``skip`` lists keys that were legitimately not scored (ineligible or
    excluded months); they are ignored on both sides. Any other key present
    on only one side raises :class:`KeyMismatchError`.
    """
    skip = set(skip)
    missing_verdicts = set(truth) - set(predicted) - skip
    missing_truth = set(predicted) - set(truth)
    if missing_verdicts or missing_truth:
        raise KeyMismatchError(missing_verdicts, missing_truth)
    tp = fp = tn = fn = 0
    for key, pred in predicted.items():
        if key in skip:
            continue
        actual = truth[key]
        if pred and actual:
            tp += 1
        elif pred:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return Confusion(tp, fp, tn, fn)


CONFUSION_COLUMNS = ("target", "tp", "fp", "tn", "fn", "n", "tpr", "fnr", "fpr")


def write_confusion(out: IO[str], rows: Mapping[str, Confusion]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CONFUSION_COLUMNS)
    for target, c in rows.items():
        rates = ["" if r is None else repr(r) for r in (c.tpr, c.fnr, c.fpr)]
        w.writerow([target, c.tp, c.fp, c.tn, c.fn, c.n, *rates])


def read_confusion(source: IO[str]) -> dict[str, Confusion]:
    return {
        row["target"]: Confusion(int(row["tp"]), int(row["fp"]), int(row["tn"]), int(row["fn"]))
        for row in csv.DictReader(source)
    }
