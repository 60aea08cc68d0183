import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdt_choice.errors import (
    EmptyFile,
    InvariantViolation,
    MalformedRow,
    OrderingError,
    TooFewTrials,
)
from qdt_choice.synthetic import DATASET1, DATASET2, generate_synthetic_subject
from qdt_choice.model import AttractionParams, UtilityParams
from qdt_choice.trials import (
    CSV_COLUMNS,
    Framing,
    Outcome,
    Response,
    derive_features,
    drop_incomplete,
    gamble_std,
    incomplete_subjects,
    kfold_split,
    load_trials,
    write_trials,
)

from conftest import make_trial

HEADER = ",".join(CSV_COLUMNS)


def write_csv(tmp_path, rows, header=HEADER):
    path = tmp_path / "trials.csv"
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


class TestLoadTrials:
    def test_fair_gain_trial(self, tmp_path):
        path = write_csv(tmp_path, ["s1,1,1,100,0.4,gain,1,2500,0,40,none,0,gamble"])
        (trial,) = load_trials(path)
        assert trial.initial_amount == 100
        assert trial.sure_amount == 40
        assert trial.framing is Framing.GAIN
        assert trial.response is Response.GAMBLE

    def test_catch_trial_skips_fairness(self, tmp_path):
        path = write_csv(tmp_path, ["s1,1,1,100,0.7,loss,3,0,0,40,none,1,gamble"])
        (trial,) = load_trials(path)
        assert trial.is_catch

    def test_unfair_non_catch_rejected(self, tmp_path):
        path = write_csv(tmp_path, ["s1,1,1,100,0.7,loss,3,0,0,40,none,0,gamble"])
        with pytest.raises(InvariantViolation):
            load_trials(path)

    @pytest.mark.parametrize("p", ["0.0", "1.0", "1.5"])
    def test_win_prob_bounds(self, tmp_path, p):
        path = write_csv(tmp_path, [f"s1,1,1,100,{p},gain,1,0,0,0,none,1,sure"])
        with pytest.raises(InvariantViolation):
            load_trials(path)

    def test_column_count(self, tmp_path):
        path = write_csv(tmp_path, ["s1,1,1,100,0.4,gain,1,2500,0,40,none,0"])
        with pytest.raises(MalformedRow):
            load_trials(path)

    @pytest.mark.parametrize("row", [
        "s1,1,1,abc,0.4,gain,1,2500,0,40,none,0,gamble",
        "s1,x,1,100,0.4,gain,1,2500,0,40,none,0,gamble",
        "s1,1,1,100,0.4,neutral,1,2500,0,40,none,0,gamble",
        "s1,1,1,100,0.4,gain,1,2500,0,40,none,yes,gamble",
        "s1,1,1,100,0.4,gain,1,2500,0,40,maybe,0,gamble",
    ])
    def test_bad_values(self, tmp_path, row):
        with pytest.raises(MalformedRow):
            load_trials(write_csv(tmp_path, [row]))

    def test_bad_header(self, tmp_path):
        path = write_csv(tmp_path, ["s1,1,1,100,0.4,gain,1,2500,0,40,none,0,gamble"],
                         header="a,b,c")
        with pytest.raises(MalformedRow):
            load_trials(path)

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(EmptyFile):
            load_trials(path)
        with pytest.raises(EmptyFile):
            load_trials(write_csv(tmp_path, []))

    def test_orders_and_reports_incomplete(self, tmp_path, caplog):
        path = write_csv(tmp_path, [
            "b,1,2,100,0.4,gain,1,0,,40,,0,sure",
            "a,1,1,100,0.4,gain,1,0,0,40,none,0,sure",
            "b,1,1,100,0.4,gain,1,0,0,40,none,0,",
            "a,1,2,50,0.6,loss,1,0,40,30,sure,0,gamble",
        ])
        trials = load_trials(path)
        assert [t.key for t in trials] == [("b", 1, 1), ("b", 1, 2), ("a", 1, 1), ("a", 1, 2)]
        assert incomplete_subjects(trials) == ["b"]
        assert "b" in caplog.text
        kept, dropped = drop_incomplete(trials)
        assert dropped == ["b"]
        assert {t.subject_id for t in kept} == {"a"}

    def test_duplicate_trial(self, tmp_path):
        row = "s1,1,1,100,0.4,gain,1,0,0,40,none,0,sure"
        with pytest.raises(InvariantViolation):
            load_trials(write_csv(tmp_path, [row, row]))

    def test_round_trip(self, tmp_path):
        up = UtilityParams(0.9, 1.0, 0.8, 0.3)
        trials, _ = generate_synthetic_subject(DATASET2, up, AttractionParams(), seed=3)
        path = tmp_path / "synthetic.csv"
        write_trials(path, trials)
        assert load_trials(path) == trials


class TestDeriveFeatures:
    def test_std_oracle(self):
        # two-outcome variance: E[X^2] - E[X]^2 over {S w.p. p, 0 w.p. 1-p}
        s, p = 100.0, 0.4
        var = p * s**2 - (p * s) ** 2
        (d,) = derive_features([make_trial(initial_amount=s, win_prob=p)])
        assert d.std == pytest.approx(math.sqrt(var), abs=1e-12)
        assert d.std == pytest.approx(48.98979485566356, abs=1e-12)

    def test_coin_std(self):
        (d,) = derive_features([make_trial(initial_amount=2, win_prob=0.5)])
        assert d.std == 1.0

    def test_need_gap_at_target(self):
        (d,) = derive_features([make_trial(need_level=2500, current_score=2500)])
        assert d.need_gap == 0

    def test_recomputes_previous_and_score(self):
        trials = [
            make_trial(trial_index=1, current_score=None, previous_outcome=None,
                       response=Response.SURE),
            make_trial(trial_index=2, current_score=None, previous_outcome=None,
                       response=Response.GAMBLE),
            make_trial(trial_index=3, current_score=None, previous_outcome=Outcome.WON,
                       initial_amount=50, win_prob=0.6, response=Response.GAMBLE),
            make_trial(trial_index=4, current_score=None, previous_outcome=Outcome.LOST),
        ]
        d = derive_features(trials)
        assert [x.trial.previous_outcome for x in d] == [
            Outcome.NONE, Outcome.SURE, Outcome.WON, Outcome.LOST
        ]
        assert [x.trial.current_score for x in d] == [0.0, 40.0, 140.0, 140.0]
        assert [x.previous_indicator for x in d] == [0, 0, 1, -1]
        assert d[3].need_gap == 2500 - 140

    def test_outcome_from_score_delta(self):
        trials = [
            make_trial(trial_index=1, current_score=10, response=Response.GAMBLE),
            make_trial(trial_index=2, current_score=110, previous_outcome=None),
            make_trial(trial_index=3, current_score=None, previous_outcome=None,
                       response=Response.GAMBLE),
        ]
        trials[1] = replace(trials[1], response=Response.GAMBLE)
        with pytest.raises(InvariantViolation):
            derive_features(trials)  # trial 3 cannot know whether trial 2 was won
        d = derive_features(trials[:2])
        assert d[1].trial.previous_outcome is Outcome.WON

    def test_score_mismatch(self):
        trials = [
            make_trial(trial_index=1, current_score=0, response=Response.SURE),
            make_trial(trial_index=2, current_score=41, previous_outcome=Outcome.SURE),
        ]
        with pytest.raises(InvariantViolation):
            derive_features(trials)

    def test_previous_contradicts_response(self):
        trials = [
            make_trial(trial_index=1, response=Response.SURE),
            make_trial(trial_index=2, current_score=40, previous_outcome=Outcome.WON),
        ]
        with pytest.raises(InvariantViolation):
            derive_features(trials)

    def test_ordering_error(self):
        trials = [make_trial(trial_index=2), make_trial(trial_index=1)]
        with pytest.raises(OrderingError):
            derive_features(trials)

    def test_first_trial_of_each_block_has_no_previous(self):
        trials = [
            make_trial(block_id=1, trial_index=1, response=Response.SURE),
            make_trial(block_id=2, trial_index=1, previous_outcome=None, current_score=None),
        ]
        d = derive_features(trials)
        assert d[1].trial.previous_outcome is Outcome.NONE
        assert d[1].trial.current_score == 0.0

    def test_idempotent_and_matches_generator(self):
        up = UtilityParams(0.9, 1.0, 0.8, 0.3)
        ap = AttractionParams(0.5, 0.1, 0.05, 0.001, 0.02)
        trials, _ = generate_synthetic_subject(DATASET1, up, ap, seed=1)
        no_scores = [replace(t, current_score=None) for t in trials]
        no_previous = [replace(t, previous_outcome=None) for t in trials]
        once = derive_features(no_scores)
        assert [d.trial for d in once] == trials
        assert derive_features(no_previous) == once
        assert derive_features(once) == once
        assert derive_features(trials) == once


@given(s=st.floats(0.01, 1e4), p=st.floats(1e-6, 1 - 1e-6))
def test_std_symmetric(s, p):
    assert gamble_std(s, p) == pytest.approx(gamble_std(s, 1 - p), rel=1e-9)


class TestKFold:
    def _trials(self, n, subject="s1"):
        return [make_trial(subject_id=subject, trial_index=i + 1) for i in range(n)]

    def test_960_trials(self):
        plan = kfold_split(self._trials(960), 6, seed=1)
        assert plan.fold_sizes() == [160] * 6

    def test_pigeonhole(self):
        plan = kfold_split(self._trials(7), 6, seed=1)
        assert sorted(plan.fold_sizes(), reverse=True) == [2, 1, 1, 1, 1, 1]

    def test_deterministic(self):
        trials = self._trials(50)
        assert kfold_split(trials, 6, 3).assignments == kfold_split(trials, 6, 3).assignments
        assert kfold_split(trials, 6, 3).assignments != kfold_split(trials, 6, 4).assignments

    def test_too_few(self):
        with pytest.raises(TooFewTrials):
            kfold_split(self._trials(5), 6, 0)

    def test_subjects_independent(self):
        a, b = self._trials(30, "a"), self._trials(40, "b")
        alone = kfold_split(a, 6, 9).assignments
        together = kfold_split(a + b, 6, 9).assignments
        assert {k: v for k, v in together.items() if k[0] == "a"} == alone

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(2, 200), k=st.integers(2, 10), seed=st.integers(0, 2**31))
    def test_partition(self, n, k, seed):
        if n < k:
            return
        trials = self._trials(n)
        plan = kfold_split(trials, k, seed)
        assert set(plan.assignments) == {t.key for t in trials}
        sizes = plan.fold_sizes()
        assert sum(sizes) == n
        assert max(sizes) - min(sizes) <= 1
        assert set(np.unique(plan.fold_indices(trials))) <= set(range(k))
