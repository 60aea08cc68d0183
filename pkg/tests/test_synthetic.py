import math
from dataclasses import replace

import numpy as np
import pytest

from qdt_choice.errors import InvalidDescriptor
from qdt_choice.model import AttractionParams, UtilityParams
from qdt_choice.synthetic import (
    DATASET1,
    DATASET2,
    ExperimentDescriptor,
    draw_true_params,
    generate_synthetic_subject,
)
from qdt_choice.trials import GameTrial, Outcome, Response, derive_features


def test_trial_counts():
    assert DATASET1.n_trials == 960
    assert DATASET2.n_trials == 624
    up = UtilityParams()
    trials, subject = generate_synthetic_subject(DATASET1, up, AttractionParams(), seed=0)
    assert len(trials) == len(subject.schedule) == 960
    trials, _ = generate_synthetic_subject(DATASET2, up, AttractionParams(), seed=0)
    assert len(trials) == 624


@pytest.mark.parametrize("change", [
    {"amounts": ()},
    {"probabilities": (0.0,)},
    {"probabilities": (1.0,)},
    {"amounts": (-5.0,)},
    {"time_limits": (0.0,)},
    {"need_levels": (-1.0,)},
    {"repeats_per_block": 0},
    {"catch_trials": ((100.0, 1.2, 40.0),)},
])
def test_invalid_descriptor(change):
    with pytest.raises(InvalidDescriptor):
        replace(DATASET2, **change)


def test_deterministic_and_seed_sensitive():
    up, ap = UtilityParams(0.9, 1.0, 0.8, 0.3), AttractionParams(0.5, 0.1, 0.05, 0.05, 0.01)
    a, _ = generate_synthetic_subject(DATASET2, up, ap, seed=4, subject_id="x")
    b, _ = generate_synthetic_subject(DATASET2, up, ap, seed=4, subject_id="x")
    c, _ = generate_synthetic_subject(DATASET2, up, ap, seed=5, subject_id="x")
    assert a == b
    assert a != c


def test_schedule_layout():
    trials, _ = generate_synthetic_subject(DATASET1, UtilityParams(), AttractionParams(), seed=2)
    blocks = {}
    for t in trials:
        blocks.setdefault(t.block_id, []).append(t)
    assert len(blocks) == DATASET1.n_blocks == 12
    for block in blocks.values():
        assert len(block) == DATASET1.trials_per_block == 80
        assert [t.trial_index for t in block] == list(range(1, 81))
        assert len({(t.time_limit, t.need_level) for t in block}) == 1
        assert sum(t.is_catch for t in block) == 16
    pairs = [(b[0].time_limit, b[0].need_level) for b in blocks.values()]
    assert all(pairs.count(p) == 2 for p in set(pairs))


def test_invariants_hold():
    up, ap = draw_true_params(np.random.default_rng(1))
    trials, _ = generate_synthetic_subject(DATASET1, up, ap, seed=1)
    for t in trials:
        assert isinstance(t, GameTrial)  # constructor already validated the row
        assert t.response is not Response.MISSING
    # derive_features recomputes scores and previous outcomes and checks them
    derived = derive_features(trials)
    assert [d.trial for d in derived] == trials
    firsts = [t for t in trials if t.trial_index == 1]
    assert all(t.previous_outcome is Outcome.NONE and t.current_score == 0 for t in firsts)


def test_indifferent_agent_gambles_half_the_time():
    # phi = 0 and a = 0 make every gamble probability exactly one half
    trials, _ = generate_synthetic_subject(
        DATASET1, UtilityParams(phi=0.0), AttractionParams(c1=1.0, a=0.0), seed=8)
    n = len(trials)
    rate = sum(t.response is Response.GAMBLE for t in trials) / n
    assert abs(rate - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_draw_true_params_ranges():
    rng = np.random.default_rng(0)
    for _ in range(200):
        up, ap = draw_true_params(rng)
        assert 0.7 <= up.alpha <= 1.0 and 0.1 <= up.phi <= 0.5
        assert min(abs(ap.c1), abs(ap.c2), abs(ap.c3), abs(ap.c4)) >= 0.05
        assert 0 < ap.a <= 0.02


def test_custom_descriptor():
    tiny = ExperimentDescriptor(amounts=(10.0,), probabilities=(0.5,), time_limits=(2.0,),
                                need_levels=(100.0,), catch_trials=())
    trials, _ = generate_synthetic_subject(tiny, UtilityParams(), AttractionParams(), seed=0)
    assert len(trials) == tiny.n_trials == 2
    assert {t.framing for t in trials} == set(tiny.frames)
