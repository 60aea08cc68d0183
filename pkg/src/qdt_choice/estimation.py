"""Per-subject maximum-likelihood fitting of the QDT and logit-CPT models."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TooFewTrials
from .model import (
    ALL_COMPONENTS,
    AttractionParams,
    Component,
    UtilityParams,
    cpt_arrays,
    parse_components,
    prospect_arrays,
    q_framing,
    q_memory,
    q_need,
    q_time,
    utility_factors,
    prelec_weight,
)
from .simplex import SimplexConfig, nelder_mead_minimize
from .trials import DerivedTrial, FoldPlan, TrialTable

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-9

UTILITY_GRID = {
    "alpha": (0.5, 0.88, 1.0),
    "delta": (0.5, 1.0, 1.5),
    "gamma": (0.5, 0.74, 1.0),
    "phi": (0.05, 0.5, 2.0),
    "lambda": (1.0, 2.25),
}
ATTRACTION_GRID = {
    "c1": (0.0, 0.1, 1.0),
    "c2": (0.0, 0.1, 1.0),
    "c3": (-0.1, 0.0, 0.1),
    "c4": (-0.1, 0.0, 0.1),
    # a = 0 keeps the attraction-free model inside the grid.
    "a": (0.0, 0.01, 0.1, 1.0),
}

_COMPONENT_PARAMS = {
    Component.TIME_FRAME: ("c1", "c2"),
    Component.MEMORY: ("c3",),
    Component.NEED: ("c4",),
}
_NONNEGATIVE = {"phi", "c1", "c2", "a"}
_POSITIVE = {"alpha", "delta", "gamma", "lambda"}


@dataclass(frozen=True)
class ModelSpec:
    """Which model is fitted: logit-CPT or QDT with a set of attraction components."""

    kind: str = "qdt"
    mask: frozenset[Component] = ALL_COMPONENTS

    def __post_init__(self) -> None:
        if self.kind not in ("qdt", "cpt"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "mask", frozenset(self.mask) if self.kind == "qdt" else frozenset())

    @classmethod
    def qdt(cls, components=ALL_COMPONENTS) -> "ModelSpec":
        components = [c.value if isinstance(c, Component) else c for c in
                      ([components] if isinstance(components, str) else components)]
        return cls("qdt", parse_components(",".join(components)))

    @classmethod
    def cpt(cls) -> "ModelSpec":
        return cls("cpt", frozenset())

    @classmethod
    def from_label(cls, label: str) -> "ModelSpec":
        if label == "cpt":
            return cls.cpt()
        kind, *components = label.split("+")
        if kind != "qdt":
            raise ValueError(f"unknown model label {label!r}")
        return cls.qdt(components)

    @property
    def label(self) -> str:
        """``cpt``, ``qdt`` or e.g. ``qdt+time_frame+need``."""
        if self.kind == "cpt":
            return "cpt"
        return "+".join(["qdt"] + [c.value for c in Component if c in self.mask])

    @property
    def attraction_names(self) -> tuple[str, ...]:
        if self.kind == "cpt" or not self.mask:
            return ()
        names = [n for c in Component if c in self.mask for n in _COMPONENT_PARAMS[c]]
        return tuple(names) + ("a",)

    @property
    def param_names(self) -> tuple[str, ...]:
        if self.kind == "cpt":
            return ("alpha", "delta", "gamma", "phi", "lambda")
        return ("alpha", "delta", "gamma", "phi") + self.attraction_names

    def in_bounds(self, vec) -> bool:
        for name, v in zip(self.param_names, vec):
            if not np.isfinite(v):
                return False
            if name in _POSITIVE and not v > 0:
                return False
            if name in _NONNEGATIVE and not v >= 0:
                return False
        return True

    def unpack(self, vec) -> tuple[UtilityParams, AttractionParams | None]:
        values = dict(zip(self.param_names, (float(v) for v in vec)))
        up = UtilityParams(
            alpha=values["alpha"],
            delta=values["delta"],
            gamma=values["gamma"],
            phi=values["phi"],
            lam=values.get("lambda", 1.0),
        )
        if self.kind == "cpt":
            return up, None
        ap = AttractionParams(
            c1=values.get("c1", 0.0),
            c2=values.get("c2", 0.0),
            c3=values.get("c3", 0.0),
            c4=values.get("c4", 0.0),
            a=values.get("a", 0.0),
            mask=self.mask,
        )
        return up, ap

    def pack(self, up: UtilityParams, ap: AttractionParams | None = None) -> np.ndarray:
        values = {"lambda": up.lam, **{k: v for k, v in up.to_dict().items() if k != "lambda"}}
        if ap is not None:
            values.update(c1=ap.c1, c2=ap.c2, c3=ap.c3, c4=ap.c4, a=ap.a)
        return np.array([values[n] for n in self.param_names], dtype=float)

    def gamble_probabilities(self, table: TrialTable, up: UtilityParams,
                             ap: AttractionParams | None):
        """``(p_gamble, p_sure)`` arrays for every trial in ``table``."""
        if self.kind == "cpt":
            p_gamble = cpt_arrays(table, up)
            return p_gamble, 1.0 - p_gamble
        f_gamble, q_gamble, p_gamble = prospect_arrays(table, up, ap)
        return p_gamble, (1.0 - f_gamble) - q_gamble


@dataclass
class ObjectiveSpec:
    """Training data and settings for one regularised likelihood."""

    trials: Sequence[DerivedTrial]
    model: ModelSpec = field(default_factory=ModelSpec)
    reg_weight: float = 1.0
    prob_floor: float = PROB_FLOOR
    regularize_a: bool = False
    penalty_value: float = 1e10

    def __post_init__(self) -> None:
        self.trials = [t for t in self.trials if t.trial.has_response]
        if not self.trials:
            raise TooFewTrials("objective needs at least one trial with a response")
        subjects = {t.trial.subject_id for t in self.trials}
        if len(subjects) != 1:
            raise ValueError(f"objective trials must share one subject, got {sorted(subjects)}")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be >= 0")
        self.table = TrialTable.from_trials(self.trials)

    @property
    def regularized_names(self) -> tuple[str, ...]:
        names = tuple(n for n in self.model.attraction_names if n != "a")
        return names + ("a",) if self.regularize_a and self.model.attraction_names else names

    def log_likelihood_terms(self, p_gamble, p_sure):
        eps = self.prob_floor
        y = self.table.chose_gamble
        return y * np.log(np.clip(p_gamble, eps, 1 - eps)) + (1 - y) * np.log(
            np.clip(p_sure, eps, 1 - eps)
        )

    def evaluate(self, vec) -> float:
        """Regularised negative log-likelihood of a packed parameter vector."""
        vec = np.asarray(vec, dtype=float)
        if not self.model.in_bounds(vec):
            return self.penalty_value
        up, ap = self.model.unpack(vec)
        with np.errstate(over="ignore", invalid="ignore"):
            p_gamble, p_sure = self.model.gamble_probabilities(self.table, up, ap)
            nll = -np.sum(self.log_likelihood_terms(p_gamble, p_sure))
        names = self.model.param_names
        reg = sum(abs(vec[names.index(n)]) for n in self.regularized_names)
        value = float(nll + self.reg_weight * reg)
        return value if np.isfinite(value) else self.penalty_value

    __call__ = evaluate


def regularized_nll(spec: ObjectiveSpec, up: UtilityParams,
                    ap: AttractionParams | None = None) -> float:
    """Negative log-likelihood plus ``reg_weight * sum(|c_k|)`` over enabled components.

    Returns ``spec.penalty_value`` when a hard bound is violated.
    """
    values = {"alpha": up.alpha, "delta": up.delta, "gamma": up.gamma, "phi": up.phi,
              "lambda": up.lam}
    if ap is not None:
        values.update(c1=ap.c1, c2=ap.c2, c3=ap.c3, c4=ap.c4, a=ap.a)
    return spec.evaluate([values[n] for n in spec.model.param_names])


# --------------------------------------------------------------------------
# Grid search
# --------------------------------------------------------------------------


def grid_axes(model: ModelSpec) -> list[tuple[str, tuple[float, ...]]]:
    """Grid axes in lexicographic order, matching ``model.param_names``."""
    axes = []
    for name in model.param_names:
        grid = UTILITY_GRID.get(name) or ATTRACTION_GRID[name]
        axes.append((name, grid))
    return axes


def _attraction_totals(table: TrialTable, model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """All component totals over the attraction grid, shape ``(n_combos, n_trials)``.

    Also returns the L1 norm of each combination's c values.
    """
    parts = []
    norms = []
    for component in Component:
        if component not in model.mask:
            continue
        if component is Component.TIME_FRAME:
            combos = list(itertools.product(ATTRACTION_GRID["c1"], ATTRACTION_GRID["c2"]))
            parts.append(np.array([
                q_time(table.time_limit, c2) * q_framing(table.std, table.framing, c1)
                for c1, c2 in combos
            ]))
            norms.append(np.array([abs(c1) + abs(c2) for c1, c2 in combos]))
        elif component is Component.MEMORY:
            grid = ATTRACTION_GRID["c3"]
            parts.append(np.array([q_memory(table.std, table.previous, c3) for c3 in grid]))
            norms.append(np.abs(np.array(grid)))
        else:
            grid = ATTRACTION_GRID["c4"]
            parts.append(np.array([
                q_need(table.need_gap, table.std, table.win_prob, c4) for c4 in grid
            ]))
            norms.append(np.abs(np.array(grid)))
    total = np.zeros((1, len(table)))
    norm = np.zeros(1)
    for part, part_norm in zip(parts, norms):
        total = (total[:, None, :] + part[None, :, :]).reshape(-1, len(table))
        norm = (norm[:, None] + part_norm[None, :]).reshape(-1)
    return total, norm


def grid_search_init(spec: ObjectiveSpec) -> np.ndarray:
    """Best grid point of the objective; ties go to the first point in lexicographic order."""
    model = spec.model
    table = spec.table
    axes = grid_axes(model)
    utility_names = [n for n, _ in axes if n in UTILITY_GRID]
    utility_combos = list(itertools.product(*(g for n, g in axes if n in UTILITY_GRID)))
    y = table.chose_gamble
    eps = spec.prob_floor

    def nll(p_gamble, p_sure):
        return -(y * np.log(np.clip(p_gamble, eps, 1 - eps))
                 + (1 - y) * np.log(np.clip(p_sure, eps, 1 - eps))).sum(axis=-1)

    if model.kind == "cpt" or not model.mask:
        values = np.empty(len(utility_combos))
        for i, combo in enumerate(utility_combos):
            up = UtilityParams(**_utility_kwargs(utility_names, combo))
            if model.kind == "cpt":
                p_gamble = cpt_arrays(table, up)
                values[i] = nll(p_gamble, 1.0 - p_gamble)
            else:
                p_gamble, p_sure = model.gamble_probabilities(table, up, AttractionParams(mask=()))
                values[i] = nll(p_gamble, p_sure)
        best = int(np.argmin(values))
        return np.array(utility_combos[best], dtype=float)

    totals, norms = _attraction_totals(table, model)
    a_grid = np.array(ATTRACTION_GRID["a"])
    reg = norms[:, None] + (a_grid[None, :] if spec.regularize_a else 0.0)
    scaled = np.tanh(a_grid[None, :, None] * totals[:, None, :])  # (combos, a, trials)
    values = np.empty((len(utility_combos), totals.shape[0], len(a_grid)))
    for i, combo in enumerate(utility_combos):
        up = UtilityParams(**_utility_kwargs(utility_names, combo))
        w = prelec_weight(table.win_prob, up)
        f_gamble, f_sure = utility_factors(
            w * table.initial_amount ** up.alpha, table.sure_amount ** up.alpha, up
        )
        q = np.minimum(f_gamble, f_sure) * scaled
        values[i] = nll(f_gamble + q, (1.0 - f_gamble) - q) + spec.reg_weight * reg
    best = np.unravel_index(int(np.argmin(values)), values.shape)
    attraction_combos = list(itertools.product(
        *(g for n, g in axes if n not in UTILITY_GRID and n != "a")
    ))
    return np.array(
        utility_combos[best[0]] + attraction_combos[best[1]] + (a_grid[best[2]],), dtype=float
    )


def _utility_kwargs(names, combo) -> dict:
    kwargs = dict(zip(names, combo))
    if "lambda" in kwargs:
        kwargs["lam"] = kwargs.pop("lambda")
    return kwargs


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------


@dataclass
class FitResult:
    model: ModelSpec
    utility: UtilityParams
    attraction: AttractionParams | None
    objective: float
    iterations: int
    converged: bool
    start_point: np.ndarray
    start_objective: float
    fold: int | None = None
    n_train: int = 0

    @property
    def vector(self) -> np.ndarray:
        return self.model.pack(self.utility, self.attraction)

    def to_dict(self) -> dict:
        out = {"model": self.model.label, "utility": self.utility.to_dict()}
        if self.attraction is not None:
            out["attraction"] = self.attraction.to_dict()
        out.update(
            fold=self.fold,
            objective=self.objective,
            iterations=self.iterations,
            converged=self.converged,
            start_point=[float(v) for v in self.start_point],
            start_objective=self.start_objective,
            n_train=self.n_train,
        )
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        model = ModelSpec.from_label(d["model"])
        attraction = d.get("attraction")
        return cls(
            model=model,
            utility=UtilityParams.from_dict(d["utility"]),
            attraction=None if attraction is None else AttractionParams.from_dict(attraction),
            objective=float(d["objective"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            start_point=np.array(d.get("start_point", []), dtype=float),
            start_objective=float(d.get("start_objective", np.nan)),
            fold=d.get("fold"),
            n_train=int(d.get("n_train", 0)),
        )


def fit(spec: ObjectiveSpec, config: SimplexConfig = SimplexConfig(),
        fold: int | None = None) -> FitResult:
    """Grid-search a start point, then refine it with Nelder-Mead."""
    start = grid_search_init(spec)
    start_value = spec.evaluate(start)
    result = nelder_mead_minimize(spec.evaluate, start, config)
    x, value = result.x, result.value
    if value > start_value:
        x, value = start, start_value
    up, ap = spec.model.unpack(x)
    return FitResult(
        model=spec.model,
        utility=up,
        attraction=ap,
        objective=value,
        iterations=result.iterations,
        converged=result.converged,
        start_point=start,
        start_objective=start_value,
        fold=fold,
        n_train=len(spec.trials),
    )


def fit_subject(
    trials: Sequence[DerivedTrial],
    model: ModelSpec,
    folds: FoldPlan,
    config: SimplexConfig = SimplexConfig(),
    reg_weight: float = 1.0,
    include_catch: bool = True,
    regularize_a: bool = False,
) -> list[FitResult]:
    """Fit one subject once per fold, training on every other fold."""
    trials = list(trials)
    fold_ids = folds.fold_indices(trials)
    results = []
    for k in range(folds.n_folds):
        train = [
            t for t, f in zip(trials, fold_ids)
            if f != k and t.trial.has_response and (include_catch or not t.trial.is_catch)
        ]
        if not train:
            raise TooFewTrials(f"fold {k} leaves no training trials")
        spec = ObjectiveSpec(train, model, reg_weight=reg_weight, regularize_a=regularize_a,
                             penalty_value=config.penalty_value)
        res = fit(spec, config, fold=k)
        log.debug("fold %d: objective %.4f after %d iterations", k, res.objective, res.iterations)
        results.append(res)
    return results


def heldout_probabilities(trials: Sequence[DerivedTrial], fits: Sequence[FitResult],
                          folds: FoldPlan) -> np.ndarray:
    """Gamble probability for each trial from the fit that held its fold out."""
    trials = list(trials)
    table = TrialTable.from_trials(trials)
    fold_ids = folds.fold_indices(trials)
    out = np.full(len(trials), np.nan)
    for res in fits:
        mask = fold_ids == res.fold
        if not mask.any():
            continue
        p_gamble, _ = res.model.gamble_probabilities(table.subset(mask), res.utility,
                                                     res.attraction)
        out[mask] = p_gamble
    return out
