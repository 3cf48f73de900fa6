"""Confidence estimation for generated answers.

Three estimates are computed per prediction: the sequence likelihood of the
decoded tokens (optionally length-normalized by geometric mean), the
probability the context can answer the question, and the probability that
resampled decodes agree with the reference. The ensemble is their plain
average. Supervision labels, verbal-score quantile buckets, and a
temperature-scaling baseline live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .answers import ContextSet, contains_answer, exact_match
from .errors import ValidationError

_VERBAL_SUM_TOL = 1e-9
_ENSEMBLE_TOL = 1e-12

#: Scaling-factor search grid: 0.05, 0.10, ... 10.00.
TEMPERATURE_GRID = tuple(k / 20.0 for k in range(1, 201))


class ConsistencyBucket(str, Enum):
    """Verbalized consistency levels, ordered High > Medium > Low."""

    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


@dataclass
class QuantileThresholds:
    """Cut points of the three-way equal-count consistency split (t1 <= t2)."""

    t1: float
    t2: float

    def __post_init__(self):
        if self.t1 > self.t2:
            raise ValidationError(f"thresholds out of order: t1={self.t1!r} > t2={self.t2!r}")


@dataclass
class CalibrationLabels:
    """Supervision pair for one prediction: answerability and sampling consistency."""

    answerability: int
    consistency: float
    consistency_bucket: ConsistencyBucket
    n_samples: int

    def __post_init__(self):
        if self.answerability not in (0, 1):
            raise ValidationError(f"answerability must be 0 or 1, got {self.answerability!r}")
        if not 0.0 <= self.consistency <= 1.0:
            raise ValidationError(f"consistency must lie in [0, 1], got {self.consistency!r}")
        if self.n_samples < 1:
            raise ValidationError(f"n_samples must be positive, got {self.n_samples!r}")
        count = self.consistency * self.n_samples
        if abs(count - round(count)) > 1e-6:
            raise ValidationError(
                f"consistency {self.consistency!r} is not a multiple of 1/{self.n_samples}"
            )


@dataclass
class ConfidenceBreakdown:
    """The three confidence estimates and their ensemble.

    ``p_answerable``/``p_consistent``/``ensemble`` may be None when the
    producing log carried no verbal-token likelihoods; the ensemble exists
    exactly when all three components do.
    """

    lm_likelihood: float
    p_answerable: float | None = None
    p_consistent: float | None = None
    ensemble: float | None = None

    def __post_init__(self):
        for name in ("lm_likelihood", "p_answerable", "p_consistent", "ensemble"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
        if self.ensemble is not None:
            if self.p_answerable is None or self.p_consistent is None:
                raise ValidationError("ensemble requires all three component scores")
            mean = (self.lm_likelihood + self.p_answerable + self.p_consistent) / 3.0
            if abs(self.ensemble - mean) > _ENSEMBLE_TOL:
                raise ValidationError(
                    f"ensemble {self.ensemble!r} is not the mean of its components ({mean!r})"
                )


def sequence_likelihood(step_probs: Sequence[float], length_normalize: bool = True) -> float:
    """Aggregate per-step chosen-token probabilities into one sequence score.

    The raw score is the product of the steps; with ``length_normalize`` the
    geometric mean is returned instead, which removes the length penalty:
    a sequence of k copies of p scores exactly p for every k.
    """
    if not step_probs:
        raise ValidationError("step_probs must be non-empty")
    for p in step_probs:
        if not 0.0 < p <= 1.0:
            raise ValidationError(f"step probability {p!r} outside (0, 1]")
    raw = math.prod(step_probs)
    if not length_normalize:
        return raw
    if raw > 0.0:
        return raw ** (1.0 / len(step_probs))
    # Product underflowed; the geometric mean is still well-defined in log space.
    return math.exp(math.fsum(math.log(p) for p in step_probs) / len(step_probs))


def answerability_label(contexts: ContextSet, golds: Sequence[str]) -> int:
    """1 iff some gold answer occurs in the (joined) context passages, else 0."""
    if not contexts.passages:
        raise ValidationError("answerability labeling requires at least one passage")
    return 1 if contains_answer(contexts.passages, golds) else 0


def consistency_label(samples: Sequence[str], golds: Sequence[str]) -> float:
    """Fraction of sampled answers that exact-match some gold answer."""
    if not samples:
        raise ValidationError("consistency_label requires at least one sample")
    matches = sum(1 for s in samples if exact_match(s, golds))
    return matches / len(samples)


def fit_quantiles(training_consistency_values: Sequence[float]) -> QuantileThresholds:
    """Three-way equal-count split of training consistency values.

    Values are sorted ascending and divided into contiguous Low/Medium/High
    groups whose sizes differ by at most one, any remainder going to the lower
    groups; the thresholds are the Low and Medium group maxima.
    """
    values = sorted(training_consistency_values)
    n = len(values)
    if n < 3:
        raise ValidationError(f"need at least 3 training values to fit quantiles, got {n}")
    base, rem = divmod(n, 3)
    low_size = base + (1 if rem >= 1 else 0)
    mid_size = base + (1 if rem >= 2 else 0)
    return QuantileThresholds(t1=values[low_size - 1], t2=values[low_size + mid_size - 1])


def bucketize(value: float, thresholds: QuantileThresholds) -> ConsistencyBucket:
    """Map a consistency value to its verbal bucket; boundary values fall low."""
    if value <= thresholds.t1:
        return ConsistencyBucket.LOW
    if value <= thresholds.t2:
        return ConsistencyBucket.MEDIUM
    return ConsistencyBucket.HIGH


def extract_verbal_probs(p_true: float, p_high: float, p_medium: float) -> tuple[float, float]:
    """Turn verbal-token likelihoods into (p_answerable, p_consistent).

    The True-token likelihood is the answerability estimate as-is; consistency
    weights the High token fully and the Medium token by half (Low contributes
    nothing).
    """
    for name, value in (("p_true", p_true), ("p_high", p_high), ("p_medium", p_medium)):
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
    if p_high + p_medium > 1.0 + _VERBAL_SUM_TOL:
        raise ValidationError(
            f"p_high + p_medium = {p_high + p_medium!r} exceeds 1 beyond tolerance"
        )
    return p_true, min(1.0, p_high + 0.5 * p_medium)


def ensemble_confidence(
    lm_likelihood: float, p_answerable: float, p_consistent: float
) -> ConfidenceBreakdown:
    """Average the three estimates into the final confidence."""
    for name, value in (
        ("lm_likelihood", lm_likelihood),
        ("p_answerable", p_answerable),
        ("p_consistent", p_consistent),
    ):
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
    ensemble = (lm_likelihood + p_answerable + p_consistent) / 3.0
    return ConfidenceBreakdown(lm_likelihood, p_answerable, p_consistent, ensemble)


def temperature_scale(confidence: float, temperature: float) -> float:
    """Rescale a sequence-level confidence as exp(log(c) / T).

    Strictly increasing in c for any fixed positive T, so confidence orderings
    (and with them selection outcomes and risk-coverage AUC) are unchanged;
    only calibration error moves.
    """
    if temperature <= 0:
        raise ValidationError(f"temperature must be positive, got {temperature!r}")
    if not 0.0 < confidence <= 1.0:
        raise ValidationError(f"confidence must lie in (0, 1], got {confidence!r}")
    return math.exp(math.log(confidence) / temperature)


def fit_temperature(dev_records: Sequence[tuple[float, bool]], bins: int = 10) -> float:
    """Grid-search the scaling factor minimizing density-based ECE on dev data.

    ``dev_records`` are (confidence, correct) pairs; the grid is
    :data:`TEMPERATURE_GRID` and ties resolve to the smallest factor.
    """
    from .evaluation import ece  # local import to avoid a module cycle

    if not dev_records:
        raise ValidationError("fit_temperature requires a non-empty dev set")
    best_t = TEMPERATURE_GRID[0]
    best_e = None
    for t in TEMPERATURE_GRID:
        scaled = [(temperature_scale(c, t), ok) for c, ok in dev_records]
        e = ece(scaled, bins)
        if best_e is None or e < best_e:
            best_t, best_e = t, e
    return best_t
