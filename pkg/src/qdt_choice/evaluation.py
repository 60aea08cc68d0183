"""Prediction metrics, calibration bins, factor histograms and response simulation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConstraintViolation, Empty, LengthMismatch, NoCatchTrials
from .estimation import ModelSpec, fit_subject, heldout_probabilities
from .model import AttractionParams, ProspectProbabilities, UtilityParams, prospect_arrays
from .simplex import SimplexConfig
from .trials import DerivedTrial, FoldPlan, Response, TrialTable, subject_stream_key

N_CALIBRATION_BINS = 10
SIMILARITY_BIN_WIDTH = 0.025
FACTOR_BIN_WIDTH = 0.05


def predict_choice(probs: ProspectProbabilities | float) -> Response:
    """Gamble iff its probability exceeds one half; an exact tie predicts Sure."""
    p = probs.p_gamble if isinstance(probs, ProspectProbabilities) else probs
    return Response.GAMBLE if p > 0.5 else Response.SURE


def predict_gamble(p_gamble) -> np.ndarray:
    """Vectorised :func:`predict_choice`, returning True where Gamble is predicted."""
    return np.asarray(p_gamble) > 0.5


def accuracy(predictions: Sequence, responses: Sequence) -> float:
    """Fraction of positions where prediction and response agree."""
    predictions, responses = list(predictions), list(responses)
    if len(predictions) != len(responses):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(responses)} responses")
    if not predictions:
        raise Empty("accuracy of an empty sequence")
    matches = sum(p == r for p, r in zip(predictions, responses))
    return matches / len(predictions)


# --------------------------------------------------------------------------
# Calibration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationBin:
    lower: float
    upper: float
    n_trials: int
    empirical_gamble_rate: float  # NaN for an empty bin

    @property
    def midpoint(self) -> float:
        return (self.lower + self.upper) / 2

    @property
    def in_band(self) -> bool:
        return bool(self.n_trials > 0 and self.lower <= self.empirical_gamble_rate <= self.upper)


@dataclass(frozen=True)
class CalibrationReport:
    bins: tuple[CalibrationBin, ...]

    @property
    def in_band_count(self) -> int:
        return sum(b.in_band for b in self.bins)

    @property
    def non_empty(self) -> int:
        return sum(b.n_trials > 0 for b in self.bins)

    @property
    def total_trials(self) -> int:
        return sum(b.n_trials for b in self.bins)

    def rows(self) -> list[dict]:
        return [
            {
                "bin_lower": b.lower,
                "bin_upper": b.upper,
                "midpoint": b.midpoint,
                "n": b.n_trials,
                "empirical_rate": b.empirical_gamble_rate,
            }
            for b in self.bins
        ]


_CALIBRATION_EDGES = np.arange(N_CALIBRATION_BINS + 1) / N_CALIBRATION_BINS


def calibration_bin_index(p) -> np.ndarray:
    """Bin ``b`` holds ``[b/10, (b+1)/10)``; the last bin also takes 1.0."""
    idx = np.searchsorted(_CALIBRATION_EDGES, np.asarray(p, dtype=float), side="right") - 1
    return np.clip(idx, 0, N_CALIBRATION_BINS - 1)


def calibration_bins(p_gamble, chose_gamble) -> CalibrationReport:
    """Group trials into ten probability bins and compare with the empirical gamble rate."""
    p = np.asarray(p_gamble, dtype=float)
    y = np.asarray(chose_gamble, dtype=float)
    if p.shape != y.shape:
        raise LengthMismatch("probabilities and responses differ in length")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    idx = calibration_bin_index(p)
    bins = []
    for b in range(N_CALIBRATION_BINS):
        members = y[idx == b]
        rate = float(members.mean()) if members.size else float("nan")
        bins.append(CalibrationBin(float(_CALIBRATION_EDGES[b]), float(_CALIBRATION_EDGES[b + 1]),
                                   int(members.size), rate))
    return CalibrationReport(tuple(bins))


# --------------------------------------------------------------------------
# Factor distributions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def rows(self) -> list[tuple[float, int]]:
        return [(float(lo), int(c)) for lo, c in zip(self.edges[:-1], self.counts)]


def histogram(values, lower: float, upper: float, width: float) -> Histogram:
    """Counts over ``[lower, upper]`` in bins of ``width``; the last bin is closed."""
    n = int(round((upper - lower) / width))
    edges = lower + width * np.arange(n + 1)
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=edges)
    return Histogram(edges, counts)


@dataclass(frozen=True)
class FactorDistributions:
    utility: Histogram
    attraction: Histogram
    probability: Histogram


def factor_histograms(f_gamble, q_gamble, p_gamble) -> FactorDistributions:
    q = np.asarray(q_gamble, dtype=float)
    if np.any(np.abs(q) > 0.5):
        raise ConstraintViolation("attraction factor outside [-0.5, 0.5]")
    return FactorDistributions(
        utility=histogram(f_gamble, 0.0, 1.0, FACTOR_BIN_WIDTH),
        attraction=histogram(q, -0.5, 0.5, FACTOR_BIN_WIDTH),
        probability=histogram(p_gamble, 0.0, 1.0, 1.0 / N_CALIBRATION_BINS),
    )


def factor_distributions(trials: Sequence[DerivedTrial], up: UtilityParams,
                         ap: AttractionParams) -> FactorDistributions:
    """Histograms of utility factor, attraction factor and gamble probability."""
    f, q, p = prospect_arrays(TrialTable.from_trials(trials), up, ap)
    return factor_histograms(f, q, p)


# --------------------------------------------------------------------------
# Monte-Carlo response simulation
# --------------------------------------------------------------------------


@dataclass
class SimulationReport:
    n_sims: int
    rng_seed: int
    samples: dict[str, np.ndarray] = field(repr=False)

    @property
    def all_samples(self) -> np.ndarray:
        if not self.samples:
            return np.empty(0)
        return np.concatenate([self.samples[s] for s in self.samples])

    @property
    def mean_similarity(self) -> float:
        return float(self.all_samples.mean())

    @property
    def histogram(self) -> Histogram:
        return histogram(self.all_samples, 0.0, 1.0, SIMILARITY_BIN_WIDTH)


def simulate_similarity(
    p_gamble: Mapping[str, np.ndarray],
    chose_gamble: Mapping[str, np.ndarray],
    n_sims: int = 1000,
    seed: int = 0,
) -> SimulationReport:
    """Replay each subject ``n_sims`` times and record the share of matching responses.

    Replicate ``r`` of subject ``s`` draws from a stream seeded by
    ``(seed, s, r)`` alone, so results do not depend on evaluation order.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    samples = {}
    for subject, p in p_gamble.items():
        p = np.asarray(p, dtype=float)
        y = np.asarray(chose_gamble[subject]) == 1
        key = subject_stream_key(subject)
        sims = np.empty(n_sims)
        for r in range(n_sims):
            draws = np.random.default_rng([seed, key, r]).random(p.size) < p
            sims[r] = np.mean(draws == y)
        samples[subject] = sims
    return SimulationReport(n_sims=n_sims, rng_seed=seed, samples=samples)


def simulate_responses(
    trials: Sequence[DerivedTrial],
    up: UtilityParams,
    ap: AttractionParams,
    n_sims: int = 1000,
    seed: int = 0,
) -> SimulationReport:
    """Simulate responses from one parameter set for every subject in ``trials``."""
    trials = [t for t in trials if t.trial.has_response]
    table = TrialTable.from_trials(trials)
    _, _, p = prospect_arrays(table, up, ap)
    subjects = np.array([t.trial.subject_id for t in trials])
    p_by, y_by = {}, {}
    for s in dict.fromkeys(subjects):
        mask = subjects == s
        p_by[s], y_by[s] = p[mask], table.chose_gamble[mask]
    return simulate_similarity(p_by, y_by, n_sims, seed)


# --------------------------------------------------------------------------
# Catch-trial ablation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CatchAblation:
    with_catch: float
    without_catch: float
    n_test: int
    n_train_with: int
    n_train_without: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def heldout_accuracy(trials: Sequence[DerivedTrial], p_gamble, fair_only: bool = False) -> float:
    keep = [i for i, t in enumerate(trials)
            if t.trial.has_response and not (fair_only and t.trial.is_catch)]
    predicted = predict_gamble(np.asarray(p_gamble)[keep])
    observed = [trials[i].trial.response is Response.GAMBLE for i in keep]
    return accuracy(predicted.tolist(), observed)


def catch_ablation(
    trials: Sequence[DerivedTrial],
    model: ModelSpec,
    folds: FoldPlan,
    config: SimplexConfig = SimplexConfig(),
    reg_weight: float = 1.0,
) -> CatchAblation:
    """Cross-validated fair-trial accuracy with and without catch trials in training."""
    trials = list(trials)
    if not any(t.trial.is_catch for t in trials):
        raise NoCatchTrials("subject has no catch trials")
    with_fits = fit_subject(trials, model, folds, config, reg_weight, include_catch=True)
    without_fits = fit_subject(trials, model, folds, config, reg_weight, include_catch=False)
    p_with = heldout_probabilities(trials, with_fits, folds)
    p_without = heldout_probabilities(trials, without_fits, folds)
    return CatchAblation(
        with_catch=heldout_accuracy(trials, p_with, fair_only=True),
        without_catch=heldout_accuracy(trials, p_without, fair_only=True),
        n_test=sum(t.trial.has_response and not t.trial.is_catch for t in trials),
        n_train_with=sum(f.n_train for f in with_fits),
        n_train_without=sum(f.n_train for f in without_fits),
    )
