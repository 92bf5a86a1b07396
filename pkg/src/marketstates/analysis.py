"""Post-fit diagnostics.

likelihood_ratio compares two fitted states pointwise: the per-date
difference of their likelihood-mode scores, positive when the first
state explains that date better. The switching penalty is a property of
paths, not of single dates, so it never enters the ratio. summarize
tallies occupancy, switching, and per-state equal-weight return stats
from a label path.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .ingest import ReturnsPanel
from .segment import StatePath, score_states


@dataclass
class RatioSeries:
    """Per-date log-likelihood difference of state_a over state_b."""

    dates: list
    values: np.ndarray
    state_a: int
    state_b: int


@dataclass
class StateSummary:
    """Occupancy, switching, and equal-weight return stats per state."""

    counts: dict
    fractions: dict
    switches: int
    mean_run_length: dict
    mean_return: dict
    volatility: dict

    def to_dict(self) -> dict:
        return {
            "counts": {str(k): int(v) for k, v in self.counts.items()},
            "fractions": {str(k): float(v) for k, v in self.fractions.items()},
            "switches": int(self.switches),
            "mean_run_length": {str(k): float(v) for k, v in self.mean_run_length.items()},
            "mean_return": {str(k): float(v) for k, v in self.mean_return.items()},
            "volatility": {str(k): float(v) for k, v in self.volatility.items()},
        }


def likelihood_ratio(
    returns: ReturnsPanel, models, state_a: int, state_b: int
) -> RatioSeries:
    """Pointwise score difference between two states (penalty-free).

    values[t] = score(t, state_a) - score(t, state_b) in likelihood mode;
    swapping the states negates the series exactly.
    """
    k_len = len(models)
    for s in (state_a, state_b):
        if not 0 <= s < k_len:
            raise ValueError(f"state {s} out of range for {k_len} models")
    if state_a == state_b:
        raise ValueError("state_a and state_b must differ")
    scores = score_states(returns, [models[state_a], models[state_b]], "likelihood")
    return RatioSeries(
        dates=list(returns.dates),
        values=scores.values[:, 0] - scores.values[:, 1],
        state_a=state_a,
        state_b=state_b,
    )


def summarize(path: StatePath, returns: ReturnsPanel) -> StateSummary:
    """Tally a label path against its panel."""
    labels = np.asarray(path.labels)
    t_len = labels.shape[0]
    if t_len != len(returns.dates):
        raise ValueError(
            f"path length {t_len} does not match panel length {len(returns.dates)}"
        )
    states = [int(s) for s in np.unique(labels)]
    counts = {s: int(np.count_nonzero(labels == s)) for s in states}
    fractions = {s: counts[s] / t_len for s in states}
    switches = int(np.count_nonzero(np.diff(labels)))

    run_lengths: dict = {s: [] for s in states}
    for state, group in itertools.groupby(labels):
        run_lengths[int(state)].append(len(list(group)))
    mean_run_length = {s: float(np.mean(r)) for s, r in run_lengths.items()}

    equal_weight = returns.values.mean(axis=1)
    mean_return = {}
    volatility = {}
    for s in states:
        member = equal_weight[labels == s]
        mean_return[s] = float(member.mean())
        volatility[s] = float(member.std(ddof=1)) if member.size > 1 else 0.0

    return StateSummary(
        counts=counts,
        fractions=fractions,
        switches=switches,
        mean_run_length=mean_run_length,
        mean_return=mean_return,
        volatility=volatility,
    )


def suggest_ratio_states(path: StatePath, returns: ReturnsPanel) -> tuple:
    """Pick (crisis, bull) as the states of lowest/highest mean equal-weight return."""
    summary = summarize(path, returns)
    states = sorted(summary.mean_return)
    if len(states) < 2:
        raise ValueError("need at least two occupied states to compare")
    crisis = min(states, key=lambda s: (summary.mean_return[s], s))
    bull = max(states, key=lambda s: (summary.mean_return[s], -s))
    return crisis, bull


def label_agreement(labels_a, labels_b) -> float:
    """Fraction of points agreeing after maximum-overlap label matching.

    Builds the confusion matrix of the two label sequences and matches
    states by Hungarian assignment, so arbitrary per-run label identities
    do not matter. Sequences may use different state counts.
    """
    a = np.asarray(labels_a, dtype=int)
    b = np.asarray(labels_b, dtype=int)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label sequences must be 1-d and equally long")
    k_a = int(a.max()) + 1
    k_b = int(b.max()) + 1
    confusion = np.zeros((k_a, k_b), dtype=int)
    np.add.at(confusion, (a, b), 1)
    rows, cols = linear_sum_assignment(-confusion)
    return float(confusion[rows, cols].sum() / a.shape[0])
