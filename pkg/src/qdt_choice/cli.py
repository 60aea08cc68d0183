"""Command-line interface: ``qdt-choice <command> [options]``.

Exit codes: 0 on success, 2 for data errors, 3 for configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import files
from .errors import DataError, InvalidDescriptor, MissingParams, QDTChoiceError
from .estimation import ModelSpec, fit_subject, heldout_probabilities
from .evaluation import (
    calibration_bins,
    catch_ablation,
    factor_histograms,
    predict_gamble,
    simulate_similarity,
)
from .model import Component, parse_components, prospect_arrays
from .simplex import SimplexConfig
from .synthetic import SHAPES, draw_true_params, generate_synthetic_subject
from .trials import (
    DerivedTrial,
    Response,
    TrialTable,
    derive_features,
    format_row,
    drop_incomplete,
    group_by_subject,
    kfold_split,
    load_trials,
    write_trials,
)

log = logging.getLogger("qdt_choice")

EXIT_DATA = 2
EXIT_CONFIG = 3


class ConfigError(QDTChoiceError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _components(text: str):
    try:
        return parse_components(text)
    except ValueError:
        valid = ",".join(c.value for c in Component)
        raise argparse.ArgumentTypeError(f"components must be a subset of {valid}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qdt-choice", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        if data:
            p.add_argument("--data", required=True, type=Path, help="canonical trial CSV")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, default=42)

    def model_opts(p):
        p.add_argument("--model", choices=("qdt", "cpt"), default="qdt")
        p.add_argument("--components", type=_components, default=frozenset(Component),
                       help="comma-separated subset of time_frame,memory,need")
        p.add_argument("--folds", type=int, default=6)
        p.add_argument("--reg-weight", type=float, default=1.0)

    p = sub.add_parser("fit", help="fit every subject with k-fold cross-validation")
    common(p)
    model_opts(p)
    p.add_argument("--no-catch-training", action="store_true",
                   help="exclude catch trials from the training folds")

    p = sub.add_parser("predict", help="write held-out per-trial predictions")
    common(p)

    p = sub.add_parser("evaluate", help="accuracy and calibration of fitted models")
    common(p)
    p.add_argument("--fair-only", action="store_true", help="score fair trials only")

    p = sub.add_parser("simulate", help="Monte-Carlo response similarity of fitted models")
    common(p)
    p.add_argument("--n-sims", type=int, default=1000)

    p = sub.add_parser("ablate", help="fit with and without catch trials in training")
    common(p)
    model_opts(p)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    common(p, data=False)
    p.add_argument("--shape", choices=sorted(SHAPES), default="dataset1")
    p.add_argument("--subjects", type=int, default=5)

    p = sub.add_parser("export-features", help="flat feature matrix for external models")
    common(p)
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _load_subjects(path: Path) -> dict[str, list[DerivedTrial]]:
    trials, dropped = drop_incomplete(load_trials(path))
    for subject in dropped:
        print(f"dropping subject {subject}: missing responses", file=sys.stderr)
    if not trials:
        raise DataError("no complete subjects in the data")
    return group_by_subject(derive_features(trials))


def _model(args) -> ModelSpec:
    if args.folds < 2:
        raise ConfigError("--folds must be >= 2")
    if args.reg_weight < 0:
        raise ConfigError("--reg-weight must be >= 0")
    if args.model == "cpt":
        return ModelSpec.cpt()
    return ModelSpec.qdt(args.components)


def _workers(n_tasks: int) -> int:
    env = os.environ.get("QDT_CHOICE_THREADS")
    try:
        cap = int(env) if env else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"QDT_CHOICE_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, n_tasks))


def _parallel_map(fn, tasks):
    tasks = list(tasks)
    workers = _workers(len(tasks))
    if workers == 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _fit_task(subject, trials, model, n_folds, seed, reg_weight, include_catch):
    folds = kfold_split(trials, n_folds, seed)
    return subject, fit_subject(trials, model, folds, SimplexConfig(), reg_weight, include_catch)


def _heldout(out_dir: Path, subjects: dict[str, list[DerivedTrial]]):
    """Per model label, per subject: (trials, fits, folds, held-out p_gamble)."""
    by_model: dict[str, dict] = {}
    for subject, trials in subjects.items():
        for label, (fits, settings) in files.load_fits(out_dir, subject).items():
            folds = kfold_split(trials, settings["n_folds"], settings["seed"])
            p = heldout_probabilities(trials, fits, folds)
            by_model.setdefault(label, {})[subject] = (trials, fits, folds, p)
    return dict(sorted(by_model.items()))


def _report_dir(out_dir: Path, label: str) -> Path:
    return out_dir / "reports" / label


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_fit(args) -> None:
    model = _model(args)
    subjects = _load_subjects(args.data)
    include_catch = not args.no_catch_training
    tasks = [
        (s, trials, model, args.folds, args.seed, args.reg_weight, include_catch)
        for s, trials in subjects.items()
    ]
    extra = {"seed": args.seed, "n_folds": args.folds, "include_catch": include_catch,
             "reg_weight": args.reg_weight}
    for subject, fits in _parallel_map(_fit_task, tasks):
        files.save_fits(args.out, subject, fits, extra)
        objectives = [f.objective for f in fits]
        print(f"{subject}\t{model.label}\tmean_objective={np.mean(objectives):.4f}\t"
              f"converged={sum(f.converged for f in fits)}/{len(fits)}")


def cmd_predict(args) -> None:
    subjects = _load_subjects(args.data)
    rows = []
    for label, per_subject in _heldout(args.out, subjects).items():
        for subject, (trials, fits, folds, _) in per_subject.items():
            table = TrialTable.from_trials(trials)
            fold_ids = folds.fold_indices(trials)
            for res in fits:
                mask = fold_ids == res.fold
                sub = table.subset(mask)
                if res.model.kind == "cpt":
                    p, _ = res.model.gamble_probabilities(sub, res.utility, None)
                    f, q = p, np.zeros_like(p)
                else:
                    f, q, p = prospect_arrays(sub, res.utility, res.attraction)
                for t, fi, qi, pi in zip(np.array(trials, dtype=object)[mask], f, q, p):
                    rows.append((subject, t.trial.block_id, t.trial.trial_index, label, res.fold,
                                 repr(float(fi)), repr(float(qi)), repr(float(pi)),
                                 "gamble" if pi > 0.5 else "sure", t.trial.response.value))
    files.write_csv(args.out / "predictions.csv",
                    ("subject", "block_id", "trial_index", "model", "fold", "f_gamble",
                     "q_gamble", "p_gamble", "predicted", "response"), rows)
    print(f"wrote {len(rows)} predictions to {args.out / 'predictions.csv'}")


def cmd_evaluate(args) -> None:
    subjects = _load_subjects(args.data)
    heldout = _heldout(args.out, subjects)
    acc_rows, summary_rows = [], []
    for label, per_subject in heldout.items():
        fold_means: dict[int, list[float]] = {}
        p_all, y_all, f_all, q_all = [], [], [], []
        for subject, (trials, fits, folds, p) in per_subject.items():
            fold_ids = folds.fold_indices(trials)
            keep = np.array([not (args.fair_only and t.trial.is_catch) for t in trials])
            y = TrialTable.from_trials(trials).chose_gamble
            for k in range(folds.n_folds):
                mask = keep & (fold_ids == k)
                if not mask.any():
                    continue
                acc = float(np.mean(predict_gamble(p[mask]) == (y[mask] == 1)))
                acc_rows.append((subject, label, k, repr(acc)))
                fold_means.setdefault(k, []).append(acc)
            p_all.append(p[keep])
            y_all.append(y[keep])
            if label != "cpt":
                table = TrialTable.from_trials(trials)
                for res in fits:
                    mask = keep & (fold_ids == res.fold)
                    f, q, _ = prospect_arrays(table.subset(mask), res.utility, res.attraction)
                    f_all.append(f)
                    q_all.append(q)
        per_fold = np.array([np.mean(v) for _, v in sorted(fold_means.items())])
        mean, std = float(per_fold.mean()), float(per_fold.std(ddof=1)) if per_fold.size > 1 else 0.0
        summary_rows.append((label, repr(mean), repr(std), len(per_subject)))
        print(f"{label}\taccuracy={mean:.3f}±{std:.3f}\tsubjects={len(per_subject)}")

        report = calibration_bins(np.concatenate(p_all), np.concatenate(y_all))
        rdir = _report_dir(args.out, label)
        files.write_csv(rdir / "calibration.csv",
                        ("bin_lower", "bin_upper", "midpoint", "n", "empirical_rate"),
                        ([repr(r["bin_lower"]), repr(r["bin_upper"]), repr(r["midpoint"]),
                          r["n"], "" if np.isnan(r["empirical_rate"]) else repr(r["empirical_rate"])]
                         for r in report.rows()))
        summary = {"model": label, "accuracy_mean": mean, "accuracy_std": std,
                   "fair_only": args.fair_only, "calibration_in_band": report.in_band_count,
                   "calibration_non_empty": report.non_empty,
                   "calibration": [{k: (None if isinstance(v, float) and np.isnan(v) else v)
                                    for k, v in r.items()} for r in report.rows()]}
        if f_all:
            dists = factor_histograms(np.concatenate(f_all), np.concatenate(q_all),
                                      np.concatenate(p_all))
            hist_rows = [("f", repr(lo), c) for lo, c in dists.utility.rows()]
            hist_rows += [("q", repr(lo), c) for lo, c in dists.attraction.rows()]
            files.write_csv(rdir / "factor_hist.csv", ("factor", "bin_lower", "count"), hist_rows)
        files.write_json(rdir / "evaluation.json", summary)
    files.write_csv(args.out / "accuracy.csv", ("subject", "model", "fold", "accuracy"), acc_rows)
    files.write_csv(args.out / "accuracy_summary.csv", ("model", "mean", "std", "n_subjects"),
                    summary_rows)


def cmd_simulate(args) -> None:
    if args.n_sims < 1:
        raise ConfigError("--n-sims must be >= 1")
    subjects = _load_subjects(args.data)
    summary = {}
    for label, per_subject in _heldout(args.out, subjects).items():
        p_by = {s: v[3] for s, v in per_subject.items()}
        y_by = {s: TrialTable.from_trials(v[0]).chose_gamble for s, v in per_subject.items()}
        report = simulate_similarity(p_by, y_by, args.n_sims, args.seed)
        files.write_csv(_report_dir(args.out, label) / "similarity_hist.csv",
                        ("bin_lower", "count"),
                        ((repr(lo), c) for lo, c in report.histogram.rows()))
        summary[label] = {
            "n_sims": args.n_sims,
            "rng_seed": args.seed,
            "mean_similarity": report.mean_similarity,
            "per_subject_mean": {s: float(v.mean()) for s, v in report.samples.items()},
        }
        print(f"{label}\tmean_similarity={report.mean_similarity:.4f}")
    files.write_json(args.out / "simulation.json", summary)


def _ablate_task(subject, trials, model, n_folds, seed, reg_weight):
    folds = kfold_split(trials, n_folds, seed)
    return subject, catch_ablation(trials, model, folds, SimplexConfig(), reg_weight)


def cmd_ablate(args) -> None:
    model = _model(args)
    subjects = _load_subjects(args.data)
    tasks = [(s, t, model, args.folds, args.seed, args.reg_weight) for s, t in subjects.items()]
    rows = []
    for subject, res in _parallel_map(_ablate_task, tasks):
        rows.append((subject, model.label, repr(res.with_catch), repr(res.without_catch),
                     res.n_test, res.n_train_with, res.n_train_without))
        print(f"{subject}\t{model.label}\twith_catch={res.with_catch:.3f}\t"
              f"without_catch={res.without_catch:.3f}")
    files.write_csv(args.out / "ablation.csv",
                    ("subject", "model", "with_catch", "without_catch", "n_test",
                     "n_train_with", "n_train_without"), rows)


def cmd_synth(args) -> None:
    if args.subjects < 1:
        raise ConfigError("--subjects must be >= 1")
    descriptor = SHAPES[args.shape]
    rng = np.random.default_rng(args.seed)
    all_trials, truth = [], {}
    for i in range(1, args.subjects + 1):
        subject = f"S{i:03d}"
        up, ap = draw_true_params(rng)
        trials, _ = generate_synthetic_subject(descriptor, up, ap, args.seed, subject)
        all_trials.extend(trials)
        truth[subject] = files.params_to_dict(up, ap)
    args.out.mkdir(parents=True, exist_ok=True)
    write_trials(args.out / "synthetic.csv", all_trials)
    files.write_json(args.out / "truth.json", truth)
    print(f"wrote {len(all_trials)} trials for {args.subjects} subjects to {args.out}")


def feature_rows(trials):
    """Canonical trial columns (minus the response), derived features and a 0/1 label."""
    for d in trials:
        t = d.trial
        label = "" if not t.has_response else ("1" if t.response is Response.GAMBLE else "0")
        yield format_row(t)[:-1] + [repr(float(d.std)), repr(float(d.need_gap)),
                                    str(d.previous_indicator), label]


def cmd_export_features(args) -> None:
    trials = derive_features(load_trials(args.data))
    files.write_csv(args.out / "features.csv", files.FEATURE_COLUMNS, feature_rows(trials))
    print(f"wrote {len(trials)} feature rows to {args.out / 'features.csv'}")


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
    "export-features": cmd_export_features,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ConfigError, InvalidDescriptor) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, MissingParams, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
