"""Trial records: canonical CSV ingestion, derived features and k-fold plans.

A trial is one binary decision between a gamble (keep ``initial_amount``
with probability ``win_prob``, otherwise nothing) and a sure option (keep
``sure_amount``).  Fair trials have ``sure_amount == win_prob * initial_amount``;
catch trials deliberately break that equality.
"""

from __future__ import annotations

import csv
import logging
import math
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyFile,
    InvariantViolation,
    MalformedRow,
    OrderingError,
    TooFewTrials,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "subject_id",
    "block_id",
    "trial_index",
    "initial_amount",
    "win_prob",
    "framing",
    "time_limit",
    "need_level",
    "current_score",
    "sure_amount",
    "previous_outcome",
    "is_catch",
    "response",
)

FAIR_TOLERANCE = 1e-6
SCORE_TOLERANCE = 1e-6


class Framing(Enum):
    GAIN = "gain"
    LOSS = "loss"

    @property
    def indicator(self) -> int:
        return 1 if self is Framing.GAIN else -1


class Outcome(Enum):
    """Result of the previous trial in the same block."""

    WON = "won"
    LOST = "lost"
    SURE = "sure"
    NONE = "none"

    @property
    def indicator(self) -> int:
        if self is Outcome.WON:
            return 1
        if self is Outcome.LOST:
            return -1
        return 0


class Response(Enum):
    GAMBLE = "gamble"
    SURE = "sure"
    MISSING = ""


@dataclass(frozen=True)
class GameTrial:
    """One gamble-vs-sure decision problem and the observed response.

    ``current_score`` and ``previous_outcome`` may be ``None`` when the
    source file leaves them empty; :func:`derive_features` fills them in.
    """

    subject_id: str
    block_id: int
    trial_index: int
    initial_amount: float
    win_prob: float
    framing: Framing
    time_limit: float
    need_level: float
    current_score: float | None
    sure_amount: float
    previous_outcome: Outcome | None
    is_catch: bool
    response: Response

    def __post_init__(self) -> None:
        if not 0.0 < self.win_prob < 1.0:
            raise InvariantViolation(f"win_prob must lie in (0, 1), got {self.win_prob}")
        if not self.initial_amount > 0:
            raise InvariantViolation(f"initial_amount must be > 0, got {self.initial_amount}")
        if not self.time_limit > 0:
            raise InvariantViolation(f"time_limit must be > 0, got {self.time_limit}")
        if self.need_level < 0 or self.sure_amount < 0:
            raise InvariantViolation("need_level and sure_amount must be >= 0")
        if self.current_score is not None and self.current_score < 0:
            raise InvariantViolation(f"current_score must be >= 0, got {self.current_score}")
        if not self.is_catch:
            expected = self.win_prob * self.initial_amount
            if abs(self.sure_amount - expected) > FAIR_TOLERANCE:
                raise InvariantViolation(
                    f"fair trial {self.key} has sure_amount {self.sure_amount}, "
                    f"expected {expected}"
                )

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.subject_id, self.block_id, self.trial_index)

    @property
    def has_response(self) -> bool:
        return self.response is not Response.MISSING


@dataclass(frozen=True)
class DerivedTrial:
    """A trial with the features the choice model consumes."""

    trial: GameTrial
    std: float
    need_gap: float

    @property
    def key(self) -> tuple[str, int, int]:
        return self.trial.key

    @property
    def previous_indicator(self) -> int:
        prev = self.trial.previous_outcome
        return 0 if prev is None else prev.indicator


def gamble_std(initial_amount, win_prob):
    """Standard deviation of the gamble paying ``initial_amount`` w.p. ``win_prob``, else 0."""
    return initial_amount * np.sqrt(win_prob * (1.0 - win_prob))


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------


def _parse_float(text: str, name: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(f"line {line}: column {name!r} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRow(f"line {line}: column {name!r} is not finite: {text!r}")
    return value


def _parse_int(text: str, name: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise MalformedRow(f"line {line}: column {name!r} is not an integer: {text!r}") from None


def _parse_enum(enum_cls, text: str, name: str, line: int):
    try:
        return enum_cls(text.strip().lower())
    except ValueError:
        raise MalformedRow(f"line {line}: column {name!r} has invalid value {text!r}") from None


def parse_row(row: Sequence[str], line: int = 0) -> GameTrial:
    """Parse one canonical CSV row (without header) into a :class:`GameTrial`."""
    if len(row) != len(CSV_COLUMNS):
        raise MalformedRow(
            f"line {line}: expected {len(CSV_COLUMNS)} columns, got {len(row)}"
        )
    r = dict(zip(CSV_COLUMNS, (cell.strip() for cell in row)))
    if not r["subject_id"]:
        raise MalformedRow(f"line {line}: empty subject_id")
    if r["is_catch"] not in ("0", "1"):
        raise MalformedRow(f"line {line}: is_catch must be 0 or 1, got {r['is_catch']!r}")
    score = r["current_score"]
    prev = r["previous_outcome"]
    return GameTrial(
        subject_id=r["subject_id"],
        block_id=_parse_int(r["block_id"], "block_id", line),
        trial_index=_parse_int(r["trial_index"], "trial_index", line),
        initial_amount=_parse_float(r["initial_amount"], "initial_amount", line),
        win_prob=_parse_float(r["win_prob"], "win_prob", line),
        framing=_parse_enum(Framing, r["framing"], "framing", line),
        time_limit=_parse_float(r["time_limit"], "time_limit", line),
        need_level=_parse_float(r["need_level"], "need_level", line),
        current_score=_parse_float(score, "current_score", line) if score else None,
        sure_amount=_parse_float(r["sure_amount"], "sure_amount", line),
        previous_outcome=_parse_enum(Outcome, prev, "previous_outcome", line) if prev else None,
        is_catch=r["is_catch"] == "1",
        response=_parse_enum(Response, r["response"], "response", line),
    )


def _format_number(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def format_row(trial: GameTrial) -> list[str]:
    """Inverse of :func:`parse_row`."""
    return [
        trial.subject_id,
        str(trial.block_id),
        str(trial.trial_index),
        _format_number(trial.initial_amount),
        _format_number(trial.win_prob),
        trial.framing.value,
        _format_number(trial.time_limit),
        _format_number(trial.need_level),
        "" if trial.current_score is None else _format_number(trial.current_score),
        _format_number(trial.sure_amount),
        "" if trial.previous_outcome is None else trial.previous_outcome.value,
        "1" if trial.is_catch else "0",
        trial.response.value,
    ]


def write_trials(path: str | Path, trials: Iterable[GameTrial]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for trial in trials:
            writer.writerow(format_row(trial))


def sort_trials(trials: Iterable[GameTrial]) -> list[GameTrial]:
    """Group by subject (first-appearance order), then order by block and trial index."""
    first_seen: dict[str, int] = {}
    for t in trials:
        first_seen.setdefault(t.subject_id, len(first_seen))
    return sorted(trials, key=lambda t: (first_seen[t.subject_id], t.block_id, t.trial_index))


def load_trials(path: str | Path) -> list[GameTrial]:
    """Read and validate a canonical trial CSV.

    Rows are returned grouped by subject and ordered by block and trial
    index.  Subjects with a missing response anywhere are logged as
    incomplete but still returned; use :func:`drop_incomplete` to remove them.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        header = [h.strip().lstrip("﻿") for h in header]
        if tuple(header) != CSV_COLUMNS:
            raise MalformedRow(f"{path}: header does not match the canonical column order")
        trials = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                trials.append(parse_row(row, reader.line_num))
            except InvariantViolation as exc:
                raise InvariantViolation(f"line {reader.line_num}: {exc}") from None
    if not trials:
        raise EmptyFile(f"{path} has a header but no data rows")

    trials = sort_trials(trials)
    seen = set()
    for t in trials:
        if t.key in seen:
            raise InvariantViolation(f"duplicate trial {t.key}")
        seen.add(t.key)

    incomplete = incomplete_subjects(trials)
    if incomplete:
        log.warning("subjects with missing responses: %s", ", ".join(incomplete))
    return trials


def incomplete_subjects(trials: Iterable[GameTrial]) -> list[str]:
    """Subject ids with at least one missing response, in first-appearance order."""
    out: list[str] = []
    for t in trials:
        if not t.has_response and t.subject_id not in out:
            out.append(t.subject_id)
    return out


def drop_incomplete(trials: Sequence[GameTrial]) -> tuple[list[GameTrial], list[str]]:
    """Remove every subject that has any missing response."""
    dropped = incomplete_subjects(trials)
    bad = set(dropped)
    return [t for t in trials if t.subject_id not in bad], dropped


def group_by_subject(trials: Iterable) -> "OrderedDict[str, list]":
    """Group GameTrial or DerivedTrial items by subject id, preserving order."""
    groups: OrderedDict[str, list] = OrderedDict()
    for t in trials:
        subject = t.key[0]
        groups.setdefault(subject, []).append(t)
    return groups


# --------------------------------------------------------------------------
# Feature derivation
# --------------------------------------------------------------------------


def _kept_points(trial: GameTrial, outcome: Outcome) -> float:
    if trial.response is Response.SURE:
        return trial.sure_amount
    if trial.response is Response.GAMBLE:
        return trial.initial_amount if outcome is Outcome.WON else 0.0
    return 0.0


def _outcome_from_scores(prior: GameTrial, current: GameTrial) -> Outcome | None:
    if prior.current_score is None or current.current_score is None:
        return None
    delta = current.current_score - prior.current_score
    if abs(delta - prior.initial_amount) <= SCORE_TOLERANCE:
        return Outcome.WON
    if abs(delta) <= SCORE_TOLERANCE:
        return Outcome.LOST
    raise InvariantViolation(
        f"score change {delta} after gamble at {prior.key} matches neither a win nor a loss"
    )


def _resolve_previous(prior: GameTrial | None, current: GameTrial) -> Outcome:
    if prior is None:
        if current.previous_outcome not in (None, Outcome.NONE):
            raise InvariantViolation(f"first trial {current.key} of a block has a previous outcome")
        return Outcome.NONE
    if prior.response is Response.SURE:
        expected = {Outcome.SURE}
    elif prior.response is Response.GAMBLE:
        expected = {Outcome.WON, Outcome.LOST}
    else:
        expected = {Outcome.NONE}
    stated = current.previous_outcome
    if stated is not None:
        if stated not in expected:
            raise InvariantViolation(
                f"{current.key}: previous_outcome {stated.value!r} contradicts "
                f"prior response {prior.response.value!r}"
            )
        return stated
    if len(expected) == 1:
        return next(iter(expected))
    outcome = _outcome_from_scores(prior, current)
    if outcome is None:
        raise InvariantViolation(
            f"{current.key}: cannot recover the gamble outcome of {prior.key} "
            "without previous_outcome or current_score"
        )
    return outcome


def _derive_block(block: list[GameTrial]) -> list[DerivedTrial]:
    out: list[DerivedTrial] = []
    prior: GameTrial | None = None
    for trial in block:
        previous = _resolve_previous(prior, trial)
        if prior is None:
            score = 0.0 if trial.current_score is None else trial.current_score
        else:
            recomputed = prior.current_score + _kept_points(prior, previous)
            if trial.current_score is None:
                score = recomputed
            else:
                if abs(trial.current_score - recomputed) > SCORE_TOLERANCE:
                    raise InvariantViolation(
                        f"{trial.key}: stated score {trial.current_score} differs from "
                        f"recomputed {recomputed}"
                    )
                score = trial.current_score
        filled = replace(trial, current_score=score, previous_outcome=previous)
        out.append(
            DerivedTrial(
                trial=filled,
                std=float(gamble_std(trial.initial_amount, trial.win_prob)),
                need_gap=trial.need_level - score,
            )
        )
        prior = filled
    return out


def derive_features(trials: Iterable[GameTrial | DerivedTrial]) -> list[DerivedTrial]:
    """Compute std and need gap, filling in previous outcome and running score.

    Input order is preserved.  Already-derived rows are accepted, which makes
    the function idempotent.
    """
    raw = [t.trial if isinstance(t, DerivedTrial) else t for t in trials]
    blocks: OrderedDict[tuple[str, int], list[GameTrial]] = OrderedDict()
    for t in raw:
        blocks.setdefault((t.subject_id, t.block_id), []).append(t)

    derived: dict[tuple[str, int, int], DerivedTrial] = {}
    for (subject, block_id), block in blocks.items():
        for a, b in zip(block, block[1:]):
            if b.trial_index <= a.trial_index:
                raise OrderingError(
                    f"subject {subject} block {block_id}: trial_index {b.trial_index} "
                    f"follows {a.trial_index}"
                )
        for d in _derive_block(block):
            derived[d.key] = d
    return [derived[t.key] for t in raw]


@dataclass(frozen=True)
class TrialTable:
    """Column view of derived trials for vectorised model evaluation."""

    initial_amount: np.ndarray
    win_prob: np.ndarray
    sure_amount: np.ndarray
    framing: np.ndarray
    time_limit: np.ndarray
    previous: np.ndarray
    std: np.ndarray
    need_gap: np.ndarray
    is_catch: np.ndarray
    chose_gamble: np.ndarray  # 1.0 / 0.0, NaN where the response is missing

    def __len__(self) -> int:
        return len(self.win_prob)

    @classmethod
    def from_trials(cls, trials: Sequence[DerivedTrial]) -> "TrialTable":
        def col(fn, dtype=float):
            return np.fromiter((fn(d) for d in trials), dtype=dtype, count=len(trials))

        response = {Response.GAMBLE: 1.0, Response.SURE: 0.0, Response.MISSING: np.nan}
        return cls(
            initial_amount=col(lambda d: d.trial.initial_amount),
            win_prob=col(lambda d: d.trial.win_prob),
            sure_amount=col(lambda d: d.trial.sure_amount),
            framing=col(lambda d: d.trial.framing.indicator),
            time_limit=col(lambda d: d.trial.time_limit),
            previous=col(lambda d: d.previous_indicator),
            std=col(lambda d: d.std),
            need_gap=col(lambda d: d.need_gap),
            is_catch=col(lambda d: d.trial.is_catch, dtype=bool),
            chose_gamble=col(lambda d: response[d.trial.response]),
        )

    def subset(self, mask: np.ndarray) -> "TrialTable":
        return TrialTable(**{name: getattr(self, name)[mask] for name in self.__dataclass_fields__})


# --------------------------------------------------------------------------
# Cross-validation folds
# --------------------------------------------------------------------------


def subject_stream_key(subject_id: str) -> int:
    """Stable integer key for seeding per-subject random streams."""
    return zlib.crc32(subject_id.encode("utf-8"))


@dataclass(frozen=True)
class FoldPlan:
    seed: int
    n_folds: int
    assignments: dict[tuple[str, int, int], int] = field(repr=False)

    def fold_of(self, trial) -> int:
        return self.assignments[trial.key]

    def fold_indices(self, trials: Sequence) -> np.ndarray:
        """Fold index for each trial, aligned with ``trials``."""
        return np.array([self.assignments[t.key] for t in trials], dtype=int)

    def fold_sizes(self, subject_id: str | None = None) -> list[int]:
        sizes = [0] * self.n_folds
        for key, fold in self.assignments.items():
            if subject_id is None or key[0] == subject_id:
                sizes[fold] += 1
        return sizes


def kfold_split(trials: Sequence, n_folds: int = 6, seed: int = 0) -> FoldPlan:
    """Shuffle each subject's trials and deal them round-robin into folds.

    The permutation for a subject depends only on ``seed`` and the subject
    id, so adding or removing other subjects never moves a trial.
    """
    if n_folds < 2:
        raise ValueError(f"n_folds must be >= 2, got {n_folds}")
    assignments: dict[tuple[str, int, int], int] = {}
    for subject, group in group_by_subject(trials).items():
        if len(group) < n_folds:
            raise TooFewTrials(
                f"subject {subject} has {len(group)} trials, fewer than {n_folds} folds"
            )
        rng = np.random.default_rng([seed, subject_stream_key(subject)])
        order = rng.permutation(len(group))
        for rank, idx in enumerate(order):
            assignments[group[idx].key] = rank % n_folds
    return FoldPlan(seed=seed, n_folds=n_folds, assignments=assignments)
