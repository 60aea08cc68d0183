"""Synthetic participants with known parameters, for oracle tests and recovery studies."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDescriptor
from .model import AttractionParams, UtilityParams, prospect_probabilities
from .trials import (
    DerivedTrial,
    Framing,
    GameTrial,
    Outcome,
    Response,
    gamble_std,
    subject_stream_key,
)

# (initial_amount, win_prob, sure_amount); each appears in both frames.
DEFAULT_CATCH = (
    (100.0, 0.7, 40.0),
    (50.0, 0.6, 15.0),
    (100.0, 0.3, 60.0),
    (50.0, 0.4, 35.0),
)


@dataclass(frozen=True)
class ExperimentDescriptor:
    """Layout of a two-option experiment.

    Each block holds every (amount, probability, frame) fair trial plus the
    catch trials, all repeated ``repeats_per_block`` times in random order.
    One block is run per (time limit, need level) pair, ``block_repeats`` times.
    """

    amounts: tuple[float, ...]
    probabilities: tuple[float, ...]
    time_limits: tuple[float, ...]
    need_levels: tuple[float, ...]
    repeats_per_block: int = 1
    block_repeats: int = 1
    catch_trials: tuple[tuple[float, float, float], ...] = DEFAULT_CATCH
    frames: tuple[Framing, ...] = (Framing.GAIN, Framing.LOSS)

    def __post_init__(self) -> None:
        if not (self.amounts and self.probabilities and self.time_limits and self.need_levels
                and self.frames):
            raise InvalidDescriptor("amounts, probabilities, frames, time limits and need levels "
                                    "must be non-empty")
        if self.repeats_per_block < 1 or self.block_repeats < 1:
            raise InvalidDescriptor("repeat counts must be >= 1")
        if any(a <= 0 for a in self.amounts):
            raise InvalidDescriptor("amounts must be > 0")
        if any(not 0 < p < 1 for p in self.probabilities):
            raise InvalidDescriptor("probabilities must lie in (0, 1)")
        if any(t <= 0 for t in self.time_limits) or any(n < 0 for n in self.need_levels):
            raise InvalidDescriptor("time limits must be > 0 and need levels >= 0")
        for amount, p, sure in self.catch_trials:
            if amount <= 0 or not 0 < p < 1 or sure < 0:
                raise InvalidDescriptor(f"invalid catch trial {(amount, p, sure)}")

    @property
    def trials_per_block(self) -> int:
        fair = len(self.amounts) * len(self.probabilities) * len(self.frames)
        catch = len(self.catch_trials) * len(self.frames)
        return (fair + catch) * self.repeats_per_block

    @property
    def n_blocks(self) -> int:
        return len(self.time_limits) * len(self.need_levels) * self.block_repeats

    @property
    def n_trials(self) -> int:
        return self.trials_per_block * self.n_blocks


DATASET1 = ExperimentDescriptor(
    amounts=(25.0, 50.0, 75.0, 100.0),
    probabilities=(0.3, 0.4, 0.6, 0.7),
    time_limits=(1.0, 3.0),
    need_levels=(0.0, 2500.0, 3500.0),
    repeats_per_block=2,
    block_repeats=2,
)

DATASET2 = ExperimentDescriptor(
    amounts=(19.0, 20.0, 21.0, 39.0, 40.0, 41.0, 59.0, 60.0, 61.0, 79.0, 80.0, 81.0),
    probabilities=(0.3, 0.4, 0.6, 0.7),
    time_limits=(1.0, 3.0),
    need_levels=(0.0, 2800.0, 3600.0),
)

SHAPES = {"dataset1": DATASET1, "dataset2": DATASET2}


@dataclass(frozen=True)
class SyntheticSubject:
    subject_id: str
    utility: UtilityParams
    attraction: AttractionParams
    schedule: tuple[GameTrial, ...] = field(repr=False)
    rng_seed: int = 0


def _block_schedule(descriptor: ExperimentDescriptor, rng: np.random.Generator):
    items = []
    for amount, p, frame in itertools.product(
        descriptor.amounts, descriptor.probabilities, descriptor.frames
    ):
        items.append((amount, p, p * amount, frame, False))
    for (amount, p, sure), frame in itertools.product(descriptor.catch_trials, descriptor.frames):
        items.append((amount, p, sure, frame, True))
    items = items * descriptor.repeats_per_block
    return [items[i] for i in rng.permutation(len(items))]


def generate_synthetic_subject(
    descriptor: ExperimentDescriptor,
    utility: UtilityParams,
    attraction: AttractionParams,
    seed: int,
    subject_id: str = "synthetic",
) -> tuple[list[GameTrial], SyntheticSubject]:
    """Build a trial schedule and simulate a QDT agent playing it.

    Responses are Bernoulli draws from the agent's gamble probability; gamble
    outcomes are realised with the trial's win probability so that the
    running score and previous-outcome features evolve as in a real session.
    """
    rng = np.random.default_rng([seed, subject_stream_key(subject_id)])
    blocks = list(itertools.product(descriptor.time_limits, descriptor.need_levels))
    blocks = blocks * descriptor.block_repeats
    blocks = [blocks[i] for i in rng.permutation(len(blocks))]

    trials: list[GameTrial] = []
    schedule: list[GameTrial] = []
    for block_id, (time_limit, need_level) in enumerate(blocks, start=1):
        score = 0.0
        previous = Outcome.NONE
        for index, (amount, p, sure, frame, catch) in enumerate(
            _block_schedule(descriptor, rng), start=1
        ):
            trial = GameTrial(
                subject_id=subject_id,
                block_id=block_id,
                trial_index=index,
                initial_amount=amount,
                win_prob=p,
                framing=frame,
                time_limit=time_limit,
                need_level=need_level,
                current_score=score,
                sure_amount=sure,
                previous_outcome=previous,
                is_catch=catch,
                response=Response.MISSING,
            )
            schedule.append(trial)
            derived = DerivedTrial(trial, float(gamble_std(amount, p)), need_level - score)
            p_gamble = prospect_probabilities(derived, utility, attraction).p_gamble
            if rng.random() < p_gamble:
                response = Response.GAMBLE
                previous = Outcome.WON if rng.random() < p else Outcome.LOST
                score += amount if previous is Outcome.WON else 0.0
            else:
                response = Response.SURE
                previous = Outcome.SURE
                score += sure
            trials.append(GameTrial(**{**trial.__dict__, "response": response}))
    subject = SyntheticSubject(subject_id, utility, attraction, tuple(schedule), seed)
    return trials, subject


def draw_true_params(rng: np.random.Generator, min_abs_c: float = 0.05
                     ) -> tuple[UtilityParams, AttractionParams]:
    """Random parameters near the estimator's grid, with every ``|c_k| >= min_abs_c``.

    ``a`` is kept small because the need component scales with points in the
    thousands; larger values saturate ``tanh`` on nearly every trial.
    """
    up = UtilityParams(
        alpha=rng.uniform(0.7, 1.0),
        delta=rng.uniform(0.7, 1.3),
        gamma=rng.uniform(0.6, 1.0),
        phi=rng.uniform(0.1, 0.5),
    )
    sign = rng.choice([-1.0, 1.0], size=2)
    ap = AttractionParams(
        c1=rng.uniform(max(min_abs_c, 0.5), 1.0),
        c2=rng.uniform(max(min_abs_c, 0.05), 0.4),
        c3=float(sign[0] * rng.uniform(min_abs_c, 2 * min_abs_c)),
        c4=float(sign[1] * rng.uniform(min_abs_c, 2 * min_abs_c)),
        a=rng.uniform(0.002, 0.02),
    )
    return up, ap
