"""Evaluation metrics: yes/no confusion metrics, weight heatmap export, judged relative score."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import (
    DuplicateIdError,
    EmptyCountsError,
    EmptyInputError,
    InvalidAnswerError,
    OutOfRangeError,
    UnmatchedIdError,
)

JUDGE_MIN, JUDGE_MAX = 1.0, 9.0


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        """Percentages rounded to 2 decimals."""
        return {name: round(100.0 * getattr(self, name), 2)
                for name in ("accuracy", "precision", "recall", "f1")}


@dataclass(frozen=True)
class JudgedPair:
    item_id: str
    candidate_score: float
    reference_score: float


def parse_answer(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("yes", "no"):
            return v == "yes"
    raise InvalidAnswerError(f"answer must be 'yes' or 'no', got {value!r}")


def _as_dict(pairs: Iterable, what: str) -> dict:
    out = {}
    for item_id, answer in pairs:
        if item_id in out:
            raise DuplicateIdError(f"duplicate {what} id {item_id!r}")
        out[item_id] = parse_answer(answer)
    return out


def confusion(preds: Iterable, golds: Iterable) -> ConfusionCounts:
    """Tally ``(id, answer)`` predictions against gold answers, "yes" positive."""
    gold = _as_dict(golds, "gold")
    tp = fp = tn = fn = 0
    for item_id, p in _as_dict(preds, "prediction").items():
        if item_id not in gold:
            raise UnmatchedIdError(f"prediction id {item_id!r} has no gold answer")
        g = gold[item_id]
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def f1_from_pr(p: float, r: float) -> float:
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise OutOfRangeError(f"precision/recall must lie in [0, 1], got ({p}, {r})")
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def metrics(c: ConfusionCounts) -> MetricsReport:
    if c.total <= 0:
        raise EmptyCountsError("no scored pairs")
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    return MetricsReport(_ratio(c.tp + c.tn, c.total), precision, recall, f1_from_pr(precision, recall))


def export_heatmap(pools: Iterable[tuple[str, float]]) -> bytes:
    """CSV ``tag,weight`` sorted by descending weight (stable), weights to 4 decimals."""
    rows = list(pools)
    for tag, weight in rows:
        if not 0.0 <= weight <= 1.0:
            raise OutOfRangeError(f"weight for {tag!r} outside [0, 1]: {weight}")
    rows.sort(key=lambda r: -r[1])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tag", "weight"])
    for tag, weight in rows:
        w.writerow([tag, f"{weight:.4f}"])
    return buf.getvalue().encode("utf-8")


def relative_score(pairs: Iterable[JudgedPair]) -> float:
    """Candidate score as a percentage of the reference: ratio of sums."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyInputError("no judged pairs")
    cand = ref = 0.0
    for p in pairs:
        for s in (p.candidate_score, p.reference_score):
            if not JUDGE_MIN <= s <= JUDGE_MAX:
                raise OutOfRangeError(f"{p.item_id!r}: judge score {s} outside [1, 9]")
        cand += p.candidate_score
        ref += p.reference_score
    return 100.0 * cand / ref


def read_answers(lines: Iterable[str]) -> Iterator[tuple[str, str]]:
    """Parse ``{"id": ..., "answer": "yes"|"no"}`` JSONL; errors name the line."""
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            answer = obj["answer"]
            parse_answer(answer)
            yield str(obj["id"]), answer
        except (json.JSONDecodeError, KeyError, TypeError, InvalidAnswerError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
