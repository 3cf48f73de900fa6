"""Pipeline stages over validated prediction records: label, score, select, evaluate.

Every stage is a pure function of (records, config). Records are processed in
(id, source) order and all aggregation sums run sequentially in that order, so
outputs are byte-identical across runs and platforms.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

from .answers import ContextSet, KnowledgeSource, Question, exact_match
from .confidence import (
    CalibrationLabels,
    ConfidenceBreakdown,
    ConsistencyBucket,
    QuantileThresholds,
    answerability_label,
    bucketize,
    consistency_label,
    ensemble_confidence,
    extract_verbal_probs,
    fit_quantiles,
    sequence_likelihood,
)
from .errors import ValidationError
from .evaluation import (
    Criterion,
    EvalReport,
    PairedPrediction,
    RecallResult,
    RiskCoveragePoint,
    ScoredPrediction,
    criterion_score,
    evaluate_pairs,
    recall_at_k,
    reliability_bins,
    risk_coverage,
    select_answer,
)
from .prompts import render_calibration_target
from .records import PredictionRecord, RunConfig, pair_records


@dataclass
class RecordLabels:
    """Label output for one record; consistency parts are None without samples."""

    id: str
    source: KnowledgeSource
    answerability: int
    consistency: float | None
    consistency_bucket: ConsistencyBucket | None
    n_samples: int | None
    target: str | None


def sort_records(records: Sequence[PredictionRecord]) -> list[PredictionRecord]:
    """Canonical processing order: by id, document before qa_history."""
    return sorted(records, key=lambda r: (r.id, r.source.value))


def quantile_thresholds(
    records: Sequence[PredictionRecord], config: RunConfig
) -> QuantileThresholds | None:
    """Thresholds per the config: explicit values, or fit from the records' samples.

    Returns None in fit mode when fewer than three records carry samples.
    """
    if config.quantile_mode == "explicit":
        return QuantileThresholds(config.quantile_t1, config.quantile_t2)
    values = [
        consistency_label(r.samples, r.gold_answers)
        for r in sort_records(records)
        if r.samples
    ]
    if len(values) < 3:
        return None
    return fit_quantiles(values)


def label_records(
    records: Sequence[PredictionRecord],
    config: RunConfig,
    thresholds: QuantileThresholds | None = None,
) -> list[RecordLabels]:
    """Compute supervision labels for every record, in canonical order.

    Answerability comes from the record's own contexts; consistency from its
    samples when present. Buckets (and the rendered output template) need
    thresholds, either passed in or derived per the config.
    """
    ordered = sort_records(records)
    if thresholds is None:
        thresholds = quantile_thresholds(records, config)
    out = []
    for record in ordered:
        if not record.contexts:
            raise ValidationError(
                f"record {record.id}/{record.source.value}: contexts empty, "
                "answerability label undefined"
            )
        answerable = answerability_label(
            ContextSet(record.source, record.contexts), record.gold_answers
        )
        consistency = bucket = target = n_samples = None
        if record.samples:
            consistency = consistency_label(record.samples, record.gold_answers)
            n_samples = len(record.samples)
            if thresholds is not None:
                bucket = bucketize(consistency, thresholds)
                # CalibrationLabels re-checks the label invariants.
                CalibrationLabels(answerable, consistency, bucket, n_samples)
                target = render_calibration_target(record.answer, bool(answerable), bucket).rendered
        out.append(
            RecordLabels(
                id=record.id,
                source=record.source,
                answerability=answerable,
                consistency=consistency,
                consistency_bucket=bucket,
                n_samples=n_samples,
                target=target,
            )
        )
    return out


def score_record(record: PredictionRecord, config: RunConfig) -> ConfidenceBreakdown:
    """Confidence breakdown for one record.

    The LM likelihood always requires token_probs; the verbal estimates (and
    with them the ensemble) exist only when the log carried p_true, p_high,
    and p_medium.
    """
    if not record.token_probs:
        raise ValidationError(
            f"record {record.id}/{record.source.value}: token_probs empty, "
            "likelihood scoring impossible"
        )
    likelihood = sequence_likelihood(record.token_probs, config.length_normalize)
    if record.p_true is None or record.p_high is None or record.p_medium is None:
        p_answerable = record.p_true
        return ConfidenceBreakdown(likelihood, p_answerable, None, None)
    p_answerable, p_consistent = extract_verbal_probs(record.p_true, record.p_high, record.p_medium)
    return ensemble_confidence(likelihood, p_answerable, p_consistent)


def score_records(
    records: Sequence[PredictionRecord], config: RunConfig
) -> dict[tuple[str, KnowledgeSource], ConfidenceBreakdown]:
    return {(r.id, r.source): score_record(r, config) for r in sort_records(records)}


def build_pairs(
    records: Sequence[PredictionRecord], config: RunConfig
) -> tuple[list[PairedPrediction], list[PredictionRecord]]:
    """Score records and join them into per-question pairs.

    Records lacking a counterpart are returned separately; cross-source
    mismatches in question text, gold answers, or overlap flags are errors.
    """
    breakdowns = score_records(records, config)
    record_pairs, unpaired = pair_records(records)
    pairs = []
    for doc, qa in record_pairs:
        if doc.question != qa.question:
            raise ValidationError(f"pair {doc.id!r}: question text differs across sources")
        if doc.gold_answers != qa.gold_answers:
            raise ValidationError(f"pair {doc.id!r}: gold answers differ across sources")
        overlap = doc.question_overlap if doc.question_overlap is not None else qa.question_overlap
        if (
            doc.question_overlap is not None
            and qa.question_overlap is not None
            and doc.question_overlap != qa.question_overlap
        ):
            raise ValidationError(f"pair {doc.id!r}: question_overlap flag differs across sources")
        question = Question(doc.id, doc.question, list(doc.gold_answers), overlap)
        pairs.append(
            PairedPrediction(
                question=question,
                doc=_scored(doc, breakdowns),
                qa=_scored(qa, breakdowns),
            )
        )
    return pairs, unpaired


def _scored(record: PredictionRecord, breakdowns) -> ScoredPrediction:
    return ScoredPrediction(
        answer=record.answer,
        confidence=breakdowns[(record.id, record.source)],
        correct=exact_match(record.answer, record.gold_answers),
    )


def run_eval(records: Sequence[PredictionRecord], config: RunConfig) -> tuple[EvalReport, int]:
    """Full selection evaluation; returns the report and the unpaired count."""
    pairs, unpaired = build_pairs(records, config)
    if not pairs:
        raise ValidationError("no document/qa_history pairs to evaluate")
    report = evaluate_pairs(pairs, config.criterion, config.bins)
    return report, len(unpaired)


def selection_rows(
    records: Sequence[PredictionRecord], config: RunConfig
) -> list[tuple[str, str, str, bool]]:
    """Per-question selection outcomes: (id, chosen source, answer, correct)."""
    pairs, _ = build_pairs(records, config)
    rows = []
    for pair in pairs:
        source, answer = select_answer(pair, config.criterion)
        side = pair.qa if source is KnowledgeSource.QA_HISTORY else pair.doc
        rows.append((pair.question.id, source.value, answer, side.correct))
    return rows


def record_stream(
    records: Sequence[PredictionRecord], config: RunConfig
) -> list[tuple[float, bool]]:
    """Every record as a (criterion confidence, EM correctness) pair.

    Treats each record independently (no pairing), which is what per-source
    calibration curves are computed from.
    """
    breakdowns = score_records(records, config)
    return [
        (
            criterion_score(breakdowns[(r.id, r.source)], config.criterion),
            exact_match(r.answer, r.gold_answers),
        )
        for r in sort_records(records)
    ]


def recall_by_source(
    records: Sequence[PredictionRecord], ks: Sequence[int]
) -> dict[str, dict[int, RecallResult]]:
    """Retrieval recall@K per knowledge source, from the records' contexts."""
    out: dict[str, dict[int, RecallResult]] = {}
    ordered = sort_records(records)
    for source in (KnowledgeSource.DOCUMENT, KnowledgeSource.QA_HISTORY):
        retrievals = [(r.contexts, r.gold_answers) for r in ordered if r.source is source]
        if not retrievals:
            continue
        out[source.value] = {k: recall_at_k(retrievals, k) for k in ks}
    return out


# --- report and curve serialization ----------------------------------------


def f4(value: float) -> str:
    return f"{value:.4f}"


def format_eval_report(report: EvalReport, unpaired: int, config: RunConfig) -> str:
    """Fixed-layout, 4-decimal evaluation report."""
    lines = [
        "selection evaluation",
        f"  criterion          : {report.criterion.value}",
        f"  pairs              : {report.n_pairs}",
        f"  unpaired_records   : {unpaired}",
        f"  bins               : {config.bins}",
        f"  length_normalize   : {str(config.length_normalize).lower()}",
        "",
        "accuracy",
        f"  em_accuracy        : {f4(report.em_accuracy)}",
        f"  doc_accuracy       : {f4(report.doc_accuracy)}",
        f"  qa_accuracy        : {f4(report.qa_accuracy)}",
        f"  oracle_accuracy    : {f4(report.oracle_accuracy)}",
        "",
        "calibration (selected stream)",
        f"  ece                : {f4(report.ece)}",
        f"  risk_coverage_auc  : {f4(report.auc)}",
        "",
        "selection ratios",
    ]
    for name in ("all", "question_overlap", "no_overlap", "case1", "case2"):
        ratio = report.selection_ratios.get(name)
        if ratio is None:
            continue
        line = (
            f"  {name:<19}: n={ratio.n} document={f4(ratio.document)} "
            f"qa_history={f4(ratio.qa_history)}"
        )
        if name == "case2":
            line += f" residual_error={f4(ratio.document)}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def write_risk_coverage_csv(points: Sequence[RiskCoveragePoint], path) -> None:
    """coverage,risk,accuracy rows (accuracy = 1 - risk on the same grid)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("coverage,risk,accuracy\n")
        for p in points:
            fh.write(f"{p.coverage:.6f},{p.risk:.6f},{1.0 - p.risk:.6f}\n")


def write_reliability_csv(rows: Sequence[tuple[int, float, float]], path) -> None:
    """bin_index,mean_confidence,mean_accuracy rows from equal-count bins."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bin_index,mean_confidence,mean_accuracy\n")
        for index, conf, acc in rows:
            fh.write(f"{index},{conf:.6f},{acc:.6f}\n")


def write_selection_csv(rows: Sequence[tuple[str, str, str, bool]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "chosen_source", "answer", "correct"])
        for qid, source, answer, correct in rows:
            writer.writerow([qid, source, answer, str(correct).lower()])


def curve_files(
    records: Sequence[PredictionRecord], config: RunConfig, out_dir
) -> list[str]:
    """Write risk-coverage and reliability curves for the record stream."""
    stream = record_stream(records, config)
    points = risk_coverage(stream)
    bins = min(config.bins, len(stream))
    rel = reliability_bins(stream, bins)
    os.makedirs(out_dir, exist_ok=True)
    rc_path = os.path.join(out_dir, "risk_coverage.csv")
    rel_path = os.path.join(out_dir, "reliability.csv")
    write_risk_coverage_csv(points, rc_path)
    write_reliability_csv(rel, rel_path)
    return [rc_path, rel_path]
