"""Quantum-decision-theory choice probabilities for gamble-vs-sure trials.

The probability of choosing a prospect is ``P = f + q``: ``f`` is a logit
utility factor built from a power value function and Prelec-II weighting,
``q`` is an attraction factor assembled from framing/time, memory and need
components and bounded by ``min(f_gamble, f_sure)``.

All numeric functions are elementwise and accept numpy arrays as well as
scalars, so the per-trial API and the vectorised likelihood share one path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np
from scipy.special import expit

from .errors import ConstraintViolation, DomainError
from .trials import DerivedTrial, TrialTable

WEIGHT_FLOOR = 1e-9
CONSTRAINT_TOL = 1e-12
NEED_STD_MULTIPLIER = 5.0


class Component(Enum):
    TIME_FRAME = "time_frame"
    MEMORY = "memory"
    NEED = "need"


ALL_COMPONENTS = frozenset(Component)


def parse_components(names: Iterable[str] | str) -> frozenset[Component]:
    """Parse component names such as ``"time_frame,memory"``."""
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    return frozenset(Component(n.strip().lower()) for n in names)


@dataclass(frozen=True)
class UtilityParams:
    alpha: float = 1.0
    delta: float = 1.0
    gamma: float = 1.0
    phi: float = 1.0
    lam: float = 1.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.delta > 0 and self.gamma > 0 and self.lam > 0):
            raise DomainError(f"alpha, delta, gamma and lambda must be > 0: {self}")
        if not self.phi >= 0:
            raise DomainError(f"phi must be >= 0: {self}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "delta": self.delta,
            "gamma": self.gamma,
            "phi": self.phi,
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UtilityParams":
        return cls(
            alpha=float(d["alpha"]),
            delta=float(d["delta"]),
            gamma=float(d["gamma"]),
            phi=float(d["phi"]),
            lam=float(d.get("lambda", 1.0)),
        )


@dataclass(frozen=True)
class AttractionParams:
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    a: float = 0.0
    mask: frozenset[Component] = field(default=ALL_COMPONENTS)

    def __post_init__(self) -> None:
        if not (self.c1 >= 0 and self.c2 >= 0 and self.a >= 0):
            raise DomainError(f"c1, c2 and a must be >= 0: {self}")
        object.__setattr__(self, "mask", frozenset(self.mask))

    def to_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "c4": self.c4,
            "a": self.a,
            "mask": [c.value for c in Component if c in self.mask],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttractionParams":
        return cls(
            c1=float(d["c1"]),
            c2=float(d["c2"]),
            c3=float(d["c3"]),
            c4=float(d["c4"]),
            a=float(d["a"]),
            mask=parse_components(d.get("mask", [])),
        )


NO_ATTRACTION = AttractionParams(mask=frozenset())


@dataclass(frozen=True)
class ProspectProbabilities:
    """Utility factor, attraction factor and choice probability per option."""

    f_gamble: float
    f_sure: float
    q_gamble: float
    q_sure: float
    p_gamble: float
    p_sure: float

    def __post_init__(self) -> None:
        check_constraints(self.f_gamble, self.f_sure, self.q_gamble, self.q_sure,
                          self.p_gamble, self.p_sure)


def check_constraints(f_gamble, f_sure, q_gamble, q_sure, p_gamble, p_sure,
                      tol: float = CONSTRAINT_TOL) -> None:
    """Raise :class:`ConstraintViolation` unless the QDT constraints hold.

    Utility factors and probabilities each sum to one and lie in [0, 1];
    attraction factors sum to zero and ``|q| <= min(f_gamble, f_sure)``.
    """
    f_gamble, f_sure, q_gamble, q_sure, p_gamble, p_sure = map(
        np.asarray, (f_gamble, f_sure, q_gamble, q_sure, p_gamble, p_sure)
    )
    problems = []
    if np.any(np.abs(f_gamble + f_sure - 1.0) > tol):
        problems.append("f_gamble + f_sure != 1")
    if np.any(np.abs(q_gamble + q_sure) > tol):
        problems.append("q_gamble + q_sure != 0")
    if np.any(np.abs(p_gamble + p_sure - 1.0) > tol):
        problems.append("p_gamble + p_sure != 1")
    for name, arr in (("f", f_gamble), ("f", f_sure), ("p", p_gamble), ("p", p_sure)):
        if np.any((arr < 0.0) | (arr > 1.0)):
            problems.append(f"{name} outside [0, 1]")
    if np.any(np.abs(q_gamble) > np.minimum(f_gamble, f_sure)):
        problems.append("|q| exceeds min(f_gamble, f_sure)")
    if problems:
        raise ConstraintViolation("; ".join(dict.fromkeys(problems)))


# --------------------------------------------------------------------------
# Utility factor
# --------------------------------------------------------------------------


def value_fn(x, params: UtilityParams):
    """Power value function: ``x**alpha`` for gains, ``-lambda*(-x)**alpha`` for losses."""
    x = np.asarray(x, dtype=float)
    gains = np.abs(x) ** params.alpha
    out = np.where(x >= 0, gains, -params.lam * gains)
    return out if out.ndim else float(out)


def prelec_weight(p, params: UtilityParams):
    """Prelec-II probability weighting ``exp(-delta * (-ln p)**gamma)``."""
    p = np.maximum(np.asarray(p, dtype=float), WEIGHT_FLOOR)
    out = np.exp(-params.delta * (-np.log(p)) ** params.gamma)
    return out if out.ndim else float(out)


def option_utility_gain(amount_hi, p_hi, amount_lo, params: UtilityParams):
    """Gain-domain utility of a two-outcome option ``(amount_hi w.p. p_hi, amount_lo otherwise)``."""
    if np.any(np.asarray(amount_hi) < 0) or np.any(np.asarray(amount_lo) < 0):
        raise DomainError("gain-domain utility needs non-negative amounts")
    w = prelec_weight(p_hi, params)
    return w * value_fn(amount_hi, params) + (1.0 - w) * value_fn(amount_lo, params)


def _gain_utilities(table: TrialTable, params: UtilityParams):
    # value_fn(0) is 0, so the gamble's losing branch drops out.
    w = prelec_weight(table.win_prob, params)
    u_gamble = w * table.initial_amount ** params.alpha
    u_sure = table.sure_amount ** params.alpha
    return u_gamble, u_sure


def utility_factors(u_gamble, u_sure, params: UtilityParams):
    """Logit utility factors ``(f_gamble, f_sure)``.

    ``expit`` keeps the logistic finite for any exponent magnitude.
    """
    f_gamble = expit(params.phi * (np.asarray(u_gamble) - np.asarray(u_sure)))
    if np.ndim(f_gamble) == 0:
        f_gamble = float(f_gamble)
    return f_gamble, 1.0 - f_gamble


# --------------------------------------------------------------------------
# Attraction factor
# --------------------------------------------------------------------------


def q_framing(std, framing_indicator, c1: float):
    """Framing component, ``-I_framing * std**c1`` (``0**0 == 1``)."""
    return -1.0 * np.asarray(framing_indicator) * np.power(np.asarray(std, dtype=float), c1)


def q_time(time_limit, c2: float):
    """Time-pressure multiplier ``exp(-c2 * time_limit)`` applied to the framing component."""
    return np.exp(-c2 * np.asarray(time_limit, dtype=float))


def q_memory(std, previous_indicator, c3: float):
    return c3 * np.asarray(previous_indicator) * np.asarray(std, dtype=float)


def q_need(need_gap, std, win_prob, c4: float):
    """Need component: the need gap less the points a gamble is expected to bring in."""
    std = np.asarray(std, dtype=float)
    return c4 * (np.asarray(need_gap) - NEED_STD_MULTIPLIER * std * (1.0 - np.asarray(win_prob)))


def attraction_total(table: TrialTable, params: AttractionParams):
    """Sum of the enabled components for the gamble prospect."""
    total = np.zeros(len(table))
    if Component.TIME_FRAME in params.mask:
        total = total + q_time(table.time_limit, params.c2) * q_framing(
            table.std, table.framing, params.c1
        )
    if Component.MEMORY in params.mask:
        total = total + q_memory(table.std, table.previous, params.c3)
    if Component.NEED in params.mask:
        total = total + q_need(table.need_gap, table.std, table.win_prob, params.c4)
    return total


def _attraction_from_total(total, f_gamble, f_sure, a: float):
    # The sure option's component total is zero, so the difference is the gamble's total.
    cos_delta = np.tanh(a * total)
    q_gamble = np.minimum(f_gamble, f_sure) * cos_delta
    return q_gamble, -q_gamble


def attraction_factor(trial: DerivedTrial, f_gamble: float, f_sure: float,
                      params: AttractionParams) -> tuple[float, float]:
    """Attraction factors ``(q_gamble, q_sure)`` for one trial."""
    total = attraction_total(TrialTable.from_trials([trial]), params)
    q_gamble, q_sure = _attraction_from_total(total, f_gamble, f_sure, params.a)
    return float(q_gamble[0]), float(q_sure[0])


def prospect_arrays(table: TrialTable, up: UtilityParams, ap: AttractionParams):
    """Vectorised ``(f_gamble, q_gamble, p_gamble)`` over a trial table."""
    u_gamble, u_sure = _gain_utilities(table, up)
    f_gamble, f_sure = utility_factors(u_gamble, u_sure, up)
    q_gamble, _ = _attraction_from_total(attraction_total(table, ap), f_gamble, f_sure, ap.a)
    return f_gamble, q_gamble, f_gamble + q_gamble


def prospect_probabilities(trial: DerivedTrial, up: UtilityParams,
                           ap: AttractionParams) -> ProspectProbabilities:
    table = TrialTable.from_trials([trial])
    u_gamble, u_sure = _gain_utilities(table, up)
    f_gamble, f_sure = utility_factors(u_gamble, u_sure, up)
    q_gamble, q_sure = _attraction_from_total(attraction_total(table, ap), f_gamble, f_sure, ap.a)
    return ProspectProbabilities(
        f_gamble=float(f_gamble[0]),
        f_sure=float(f_sure[0]),
        q_gamble=float(q_gamble[0]),
        q_sure=float(q_sure[0]),
        p_gamble=float(f_gamble[0] + q_gamble[0]),
        p_sure=float(f_sure[0] + q_sure[0]),
    )


# --------------------------------------------------------------------------
# Logit-CPT baseline
# --------------------------------------------------------------------------


def cpt_arrays(table: TrialTable, up: UtilityParams):
    """Gamble choice probability under logit-CPT with the gamble's expected value as reference."""
    ref = table.win_prob * table.initial_amount
    w = prelec_weight(table.win_prob, up)
    u_gamble = w * value_fn(table.initial_amount - ref, up) + (1.0 - w) * value_fn(-ref, up)
    u_sure = value_fn(table.sure_amount - ref, up)
    return utility_factors(u_gamble, u_sure, up)[0]


def cpt_baseline_probability(trial: DerivedTrial, up: UtilityParams) -> float:
    return float(cpt_arrays(TrialTable.from_trials([trial]), up)[0])
