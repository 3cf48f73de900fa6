"""Knowledge-source selection and the calibration/QA evaluation suite.

All metrics are pure folds over immutable prediction collections. Sorts are
stable and performed once, so callers control tie order by passing records in
a canonical (id-sorted) order; sums run sequentially in that order, which
keeps every report bit-for-bit reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .answers import KnowledgeSource, Question, contains_answer
from .confidence import ConfidenceBreakdown
from .errors import ValidationError


class Criterion(str, Enum):
    """Which confidence estimate drives selection and curves."""

    LIKELIHOOD = "likelihood"
    ANSWERABILITY = "answerability"
    CONSISTENCY = "consistency"
    ENSEMBLE = "ensemble"


_CRITERION_FIELD = {
    Criterion.LIKELIHOOD: "lm_likelihood",
    Criterion.ANSWERABILITY: "p_answerable",
    Criterion.CONSISTENCY: "p_consistent",
    Criterion.ENSEMBLE: "ensemble",
}


@dataclass
class ScoredPrediction:
    """One source's answer with its confidence breakdown and EM correctness."""

    answer: str
    confidence: ConfidenceBreakdown
    correct: bool


@dataclass
class PairedPrediction:
    """The document-source and QA-history-source predictions for one question."""

    question: Question
    doc: ScoredPrediction
    qa: ScoredPrediction


@dataclass(frozen=True)
class RiskCoveragePoint:
    """Error rate among the most-confident fraction ``coverage`` of predictions."""

    coverage: float
    risk: float


@dataclass
class SubsetSelectionRatio:
    """How one analysis subset splits between the two knowledge sources."""

    n: int
    document: float
    qa_history: float


@dataclass
class EvalReport:
    """Aggregate selection-evaluation results for one criterion."""

    criterion: Criterion
    n_pairs: int
    em_accuracy: float
    doc_accuracy: float
    qa_accuracy: float
    oracle_accuracy: float
    ece: float
    auc: float
    selection_ratios: dict[str, SubsetSelectionRatio] = field(default_factory=dict)


def criterion_score(breakdown: ConfidenceBreakdown, criterion: Criterion | str) -> float:
    """Read the chosen criterion's value off a breakdown; missing is an error."""
    value = getattr(breakdown, _CRITERION_FIELD[Criterion(criterion)])
    if value is None:
        raise ValidationError(f"confidence breakdown has no {Criterion(criterion).value} score")
    return value


def select_answer(
    pair: PairedPrediction, criterion: Criterion | str
) -> tuple[KnowledgeSource, str]:
    """Pick the source whose confidence wins; exact ties go to QA-history."""
    conf_k = criterion_score(pair.qa.confidence, criterion)
    conf_d = criterion_score(pair.doc.confidence, criterion)
    if conf_k >= conf_d:
        return KnowledgeSource.QA_HISTORY, pair.qa.answer
    return KnowledgeSource.DOCUMENT, pair.doc.answer


def selected_stream(
    pairs: Sequence[PairedPrediction], criterion: Criterion | str
) -> list[tuple[float, bool]]:
    """(confidence, correct) of the chosen side for every pair, in input order."""
    criterion = Criterion(criterion)
    stream = []
    for pair in pairs:
        source, _ = select_answer(pair, criterion)
        side = pair.qa if source is KnowledgeSource.QA_HISTORY else pair.doc
        stream.append((criterion_score(side.confidence, criterion), side.correct))
    return stream


def ece(predictions: Sequence[tuple[float, bool]], bins: int = 10) -> float:
    """Density-based expected calibration error with equal-count bins.

    Args:
        predictions: (confidence, correct) pairs. They are sorted ascending by
            confidence with a stable sort, so equal confidences keep the
            caller's input order.
        bins: number of equal-count bins; the first ``n mod bins`` bins take
            one extra prediction.

    Returns:
        The unweighted mean over bins of |bin accuracy - bin confidence|.
    """
    preds = list(predictions)
    if not preds:
        raise ValidationError("ece requires at least one prediction")
    if bins < 1:
        raise ValidationError(f"bin count must be >= 1, got {bins!r}")
    if bins > len(preds):
        raise ValidationError(f"bin count {bins} exceeds prediction count {len(preds)}")
    ordered = sorted(preds, key=lambda pred: pred[0])
    total = 0.0
    for group in _equal_count_bins(ordered, bins):
        conf = sum(c for c, _ in group) / len(group)
        acc = sum(1 for _, ok in group if ok) / len(group)
        total += abs(acc - conf)
    return total / bins


def reliability_bins(
    predictions: Sequence[tuple[float, bool]], bins: int = 10
) -> list[tuple[int, float, float]]:
    """Per-bin (index, mean confidence, mean accuracy) rows for reliability curves.

    Uses the same equal-count binning as :func:`ece`.
    """
    preds = list(predictions)
    if not preds:
        raise ValidationError("reliability_bins requires at least one prediction")
    if not 1 <= bins <= len(preds):
        raise ValidationError(f"bin count {bins!r} out of range for {len(preds)} predictions")
    ordered = sorted(preds, key=lambda pred: pred[0])
    rows = []
    for m, group in enumerate(_equal_count_bins(ordered, bins)):
        conf = sum(c for c, _ in group) / len(group)
        acc = sum(1 for _, ok in group if ok) / len(group)
        rows.append((m, conf, acc))
    return rows


def _equal_count_bins(ordered: list, bins: int):
    base, rem = divmod(len(ordered), bins)
    start = 0
    for m in range(bins):
        size = base + (1 if m < rem else 0)
        yield ordered[start : start + size]
        start += size


def risk_coverage(predictions: Sequence[tuple[float, bool]]) -> list[RiskCoveragePoint]:
    """Risk at every coverage level k/n when answering only the top-k confident.

    Predictions are sorted descending by confidence (stable, so ties keep the
    caller's input order); point k is (k/n, error rate among the top k).
    """
    preds = list(predictions)
    if not preds:
        raise ValidationError("risk_coverage requires at least one prediction")
    ordered = sorted(preds, key=lambda pred: -pred[0])
    n = len(ordered)
    points = []
    wrong = 0
    for k, (_, ok) in enumerate(ordered, start=1):
        if not ok:
            wrong += 1
        points.append(RiskCoveragePoint(coverage=k / n, risk=wrong / k))
    return points


def auc(points: Sequence[RiskCoveragePoint]) -> float:
    """Area under the risk-coverage curve: the mean risk over the coverage grid."""
    if not points:
        raise ValidationError("auc requires at least one curve point")
    return sum(p.risk for p in points) / len(points)


def oracle_upper_bound(pairs: Sequence[PairedPrediction]) -> float:
    """Accuracy of a perfect selector: fraction of pairs where either side is right."""
    if not pairs:
        raise ValidationError("oracle_upper_bound requires at least one pair")
    return sum(1 for p in pairs if p.doc.correct or p.qa.correct) / len(pairs)


def selection_ratio(
    pairs: Sequence[PairedPrediction], criterion: Criterion | str
) -> dict[str, SubsetSelectionRatio]:
    """Fraction of pairs routed to each source, overall and per analysis subset.

    Subsets: ``all``; ``question_overlap``/``no_overlap`` where flags are
    present; ``case1`` (document right, QA-history wrong) and ``case2`` (the
    reverse). Empty subsets are omitted. In case2 the document fraction is the
    selector's residual error rate.
    """
    if not pairs:
        raise ValidationError("selection_ratio requires at least one pair")
    chosen = {id(p): select_answer(p, criterion)[0] for p in pairs}
    subsets: dict[str, list[PairedPrediction]] = {
        "all": list(pairs),
        "question_overlap": [p for p in pairs if p.question.question_overlap is True],
        "no_overlap": [p for p in pairs if p.question.question_overlap is False],
        "case1": [p for p in pairs if p.doc.correct and not p.qa.correct],
        "case2": [p for p in pairs if not p.doc.correct and p.qa.correct],
    }
    report = {}
    for name, subset in subsets.items():
        if not subset:
            continue
        docs = sum(1 for p in subset if chosen[id(p)] is KnowledgeSource.DOCUMENT)
        report[name] = SubsetSelectionRatio(
            n=len(subset),
            document=docs / len(subset),
            qa_history=(len(subset) - docs) / len(subset),
        )
    return report


def evaluate_pairs(
    pairs: Sequence[PairedPrediction],
    criterion: Criterion | str = Criterion.ENSEMBLE,
    bins: int = 10,
) -> EvalReport:
    """Run selection under ``criterion`` and aggregate the evaluation suite.

    ECE and risk-coverage AUC are computed over the selected stream: for each
    pair, the chosen side's criterion confidence against the chosen answer's
    correctness.
    """
    if not pairs:
        raise ValidationError("evaluate_pairs requires at least one pair")
    criterion = Criterion(criterion)
    selected = selected_stream(pairs, criterion)
    hits = sum(1 for _, ok in selected if ok)
    n = len(pairs)
    return EvalReport(
        criterion=criterion,
        n_pairs=n,
        em_accuracy=hits / n,
        doc_accuracy=sum(1 for p in pairs if p.doc.correct) / n,
        qa_accuracy=sum(1 for p in pairs if p.qa.correct) / n,
        oracle_accuracy=oracle_upper_bound(pairs),
        ece=ece(selected, min(bins, n)),
        auc=auc(risk_coverage(selected)),
        selection_ratios=selection_ratio(pairs, criterion),
    )


@dataclass
class RecallResult:
    """Recall@K over a retrieval set, with a count of questions short on contexts."""

    value: float
    truncated: int


def recall_at_k(
    retrievals: Iterable[tuple[Sequence[str], Sequence[str]]], k: int
) -> RecallResult:
    """Fraction of questions whose gold appears in the top-K ranked contexts.

    Questions offering fewer than K contexts are evaluated over what they have
    and counted in ``truncated``.
    """
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k!r}")
    items = list(retrievals)
    if not items:
        raise ValidationError("recall_at_k requires at least one retrieval")
    hits = 0
    truncated = 0
    for passages, golds in items:
        if k > len(passages):
            truncated += 1
        if contains_answer(list(passages)[:k], golds):
            hits += 1
    return RecallResult(value=hits / len(items), truncated=truncated)
