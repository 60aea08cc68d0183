import time

import numpy as np
import pytest

from qdt_choice.estimation import ModelSpec, fit_subject, heldout_probabilities
from qdt_choice.model import prospect_arrays
from qdt_choice.synthetic import DATASET1, draw_true_params, generate_synthetic_subject
from qdt_choice.trials import (
    DerivedTrial,
    Framing,
    GameTrial,
    Outcome,
    Response,
    TrialTable,
    derive_features,
    gamble_std,
    kfold_split,
)

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record a one-line pass/fail verdict for the terminal summary."""

    def record(number: int, name: str, passed: bool | None, detail: str = "") -> None:
        verdict = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        _ACCEPTANCE_LINES.append(f"[{verdict}] criterion {number}: {name} {detail}".rstrip())
        print(_ACCEPTANCE_LINES[-1])

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_trial(
    initial_amount=100.0,
    win_prob=0.4,
    framing=Framing.GAIN,
    time_limit=1.0,
    need_level=2500.0,
    current_score=0.0,
    sure_amount=None,
    previous_outcome=Outcome.NONE,
    is_catch=False,
    response=Response.GAMBLE,
    subject_id="s1",
    block_id=1,
    trial_index=1,
) -> GameTrial:
    if sure_amount is None:
        sure_amount = win_prob * initial_amount
    return GameTrial(
        subject_id=subject_id,
        block_id=block_id,
        trial_index=trial_index,
        initial_amount=initial_amount,
        win_prob=win_prob,
        framing=framing,
        time_limit=time_limit,
        need_level=need_level,
        current_score=current_score,
        sure_amount=sure_amount,
        previous_outcome=previous_outcome,
        is_catch=is_catch,
        response=response,
    )


def make_derived(**kwargs) -> DerivedTrial:
    t = make_trial(**kwargs)
    return DerivedTrial(t, float(gamble_std(t.initial_amount, t.win_prob)),
                        t.need_level - t.current_score)


@pytest.fixture(scope="session")
def recovery_cohort():
    """Ten Dataset-1 synthetic subjects fitted with full QDT and CPT over six folds."""
    rng = np.random.default_rng(2026)
    qdt, cpt = ModelSpec.qdt(), ModelSpec.cpt()
    subjects = []
    start = time.perf_counter()
    for i in range(10):
        up, ap = draw_true_params(rng)
        trials, _ = generate_synthetic_subject(DATASET1, up, ap, seed=11, subject_id=f"R{i:02d}")
        derived = derive_features(trials)
        folds = kfold_split(derived, 6, seed=5)
        table = TrialTable.from_trials(derived)
        _, _, p_true = prospect_arrays(table, up, ap)
        qdt_fits = fit_subject(derived, qdt, folds)
        cpt_fits = fit_subject(derived, cpt, folds)
        subjects.append({
            "id": f"R{i:02d}",
            "utility": up,
            "attraction": ap,
            "trials": derived,
            "folds": folds,
            "chose_gamble": table.chose_gamble,
            "p_true": p_true,
            "qdt_fits": qdt_fits,
            "cpt_fits": cpt_fits,
            "p_qdt": heldout_probabilities(derived, qdt_fits, folds),
            "p_cpt": heldout_probabilities(derived, cpt_fits, folds),
        })
    return {"subjects": subjects, "seconds": time.perf_counter() - start}
