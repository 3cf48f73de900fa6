"""Self-contained demonstration pipeline driven entirely by table-model files.

The demo fabricates a small QA world: 12 training questions (used to fit the
consistency quantiles) and 20 evaluation questions whose two knowledge
sources have complementary strengths. It writes the toy models and the
prediction logs to disk, loads them back through the validating loaders, and
runs the full pipeline: decode, sample for consistency labels, label, score,
select, evaluate, and emit curves. Everything is a pure function of the seed,
so two runs with the same configuration produce byte-identical files.

The verbal estimator the scores would normally come from is simulated: each
record's True/High/Medium token likelihoods are drawn (deterministically, from
seeded jitter) around values that reflect the record's actual labels, with a
couple of deliberately confused records so no single estimate is perfect.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass

from .answers import KnowledgeSource
from .confidence import (
    ConsistencyBucket,
    QuantileThresholds,
    answerability_label,
    bucketize,
    consistency_label,
    fit_quantiles,
)
from .errors import ValidationError
from .evaluation import (
    Criterion,
    EvalReport,
    auc,
    ece,
    evaluate_pairs,
    reliability_bins,
    risk_coverage,
    selected_stream,
)
from .pipeline import (
    build_pairs,
    f4,
    format_eval_report,
    label_records,
    quantile_thresholds,
    record_stream,
    recall_by_source,
    sort_records,
    write_reliability_csv,
    write_risk_coverage_csv,
)
from .prompts import ContextMode, QAPair, assemble_contexts, build_qa_history_passage
from .records import PredictionRecord, RunConfig, dump_records, validate_and_load
from .toylm import ConditionalTable, Vocabulary, derive_seed, dump_models, greedy_decode, load_models, sample_decode

DOC_MODEL_NAME = "document-reader"
QA_MODEL_NAME = "qa-history-reader"
_EOS = "</s>"
_MAX_LEN = 3


@dataclass(frozen=True)
class _Side:
    """One knowledge source's designed behavior for a demo question."""

    decoded: str  # greedy answer (one or two tokens)
    p: float  # first-step probability of the decoded answer
    answerable: bool  # does this source's context contain the gold?
    alt: str  # single-token alternative carrying the remaining mass
    sim_bucket: str | None = None  # force the simulated verbal bucket (estimator confusion)


@dataclass(frozen=True)
class _DemoQ:
    qid: str
    text: str
    gold: str
    split: str  # "train" | "eval"
    overlap: bool | None
    doc: _Side
    qa: _Side
    doc_gold_rank: int | None  # 1-based rank of the gold-bearing document passage


_S = _Side
_ROSTER: tuple[_DemoQ, ...] = (
    # training split: consistency masses spread over [0.05, 0.95] for quantile fitting
    _DemoQ("tr01", "which river runs through the old harbor", "nile", "train", None,
           _S("nile", 0.95, True, "delta"), _S("nile", 0.90, True, "delta"), 1),
    _DemoQ("tr02", "which metal lines the vault door", "copper", "train", None,
           _S("copper", 0.85, True, "bronze"), _S("copper", 0.80, False, "bronze"), 2),
    _DemoQ("tr03", "which bird nests on the lighthouse", "sparrow", "train", None,
           _S("sparrow", 0.75, True, "falcon"), _S("sparrow", 0.70, False, "falcon"), 3),
    _DemoQ("tr04", "which game is played in the annex", "chess", "train", None,
           _S("chess", 0.65, True, "darts"), _S("chess", 0.60, True, "darts"), 1),
    _DemoQ("tr05", "which flower marks the north gate", "tulip", "train", None,
           _S("tulip", 0.55, False, "orchid"), _S("orchid", 0.55, True, "tulip"), None),
    _DemoQ("tr06", "which gas fills the middle balloon", "helium", "train", None,
           _S("argon", 0.60, True, "helium"), _S("argon", 0.65, False, "helium"), 2),
    _DemoQ("tr07", "which planet anchors the mural", "saturn", "train", None,
           _S("saturn", 0.90, True, "venus"), _S("venus", 0.70, True, "saturn"), 3),
    _DemoQ("tr08", "which city hosts the winter fair", "geneva", "train", None,
           _S("geneva", 0.80, True, "basel"), _S("basel", 0.75, False, "geneva"), 1),
    _DemoQ("tr09", "which instrument opens the recital", "violin", "train", None,
           _S("violin", 0.70, True, "cello"), _S("cello", 0.80, True, "violin"), 2),
    _DemoQ("tr10", "which fabric wraps the display", "linen", "train", None,
           _S("linen", 0.60, False, "cotton"), _S("cotton", 0.85, True, "linen"), None),
    _DemoQ("tr11", "which spice scents the entry hall", "saffron", "train", None,
           _S("saffron", 0.92, True, "cumin"), _S("cumin", 0.90, False, "saffron"), 3),
    _DemoQ("tr12", "which stone caps the fountain", "granite", "train", None,
           _S("granite", 0.88, True, "marble"), _S("marble", 0.95, True, "granite"), 1),
    # eval group A: documents right, QA-history confidently wrong
    _DemoQ("ev01", "what is the capital of france", "paris", "eval", False,
           _S("paris", 0.92, True, "lyon"), _S("lyon", 0.93, False, "nice"), 1),
    _DemoQ("ev02", "which ocean borders peru", "pacific", "eval", False,
           _S("pacific", 0.90, True, "atlantic"), _S("atlantic", 0.95, False, "arctic"), 2),
    _DemoQ("ev03", "which mountain overlooks the tea fields", "mount fuji", "eval", False,
           _S("mount fuji", 0.88, True, "everest"), _S("everest", 0.75, False, "alps"), 3),
    _DemoQ("ev04", "which element powers the red lamp", "neon", "eval", False,
           _S("neon", 0.86, True, "xenon"), _S("xenon", 0.94, False, "radon"), 1),
    _DemoQ("ev05", "which composer wrote the canal suite", "vivaldi", "eval", False,
           _S("vivaldi", 0.84, True, "handel"), _S("handel", 0.72, False, "brahms"), 2),
    _DemoQ("ev06", "which desert hides the salt flats", "atacama", "eval", False,
           _S("atacama", 0.82, True, "gobi", sim_bucket="Medium"),
           _S("gobi", 0.96, False, "sahara", sim_bucket="High"), 3),
    _DemoQ("ev07", "which port ships the amber crates", "gdansk", "eval", False,
           _S("gdansk", 0.85, True, "rotterdam"), _S("rotterdam", 0.74, False, "antwerp"), 1),
    _DemoQ("ev08", "which tree shades the court", "sycamore", "eval", False,
           _S("sycamore", 0.80, False, "willow"), _S("willow", 0.76, False, "aspen"), None),
    # eval group B: QA-history right, documents wrong
    _DemoQ("ev09", "who kept the north beacon lit", "brennan", "eval", True,
           _S("murphy", 0.78, False, "walsh"), _S("brennan", 0.90, True, "murphy"), None),
    _DemoQ("ev10", "who mapped the inner reef", "ichikawa", "eval", True,
           _S("tanaka", 0.95, False, "mori"), _S("ichikawa", 0.86, True, "tanaka"), None),
    _DemoQ("ev11", "who tuned the plaza organ", "ortega", "eval", True,
           _S("ramos", 0.72, False, "vega"), _S("ortega", 0.82, True, "ramos"), None),
    _DemoQ("ev12", "who carved the east lintel", "bakker", "eval", True,
           _S("devries", 0.70, False, "janssen", sim_bucket="High"),
           _S("bakker", 0.78, True, "devries", sim_bucket="Medium"), None),
    # ev13: the residual-error case — the document context contains the gold but
    # misleads the reader, while the QA side answers correctly from a context
    # that looks unanswerable.
    _DemoQ("ev13", "who sealed the archive vault", "castellan", "eval", True,
           _S("warden", 0.80, True, "castellan"), _S("castellan", 0.55, False, "warden"), 2),
    # eval group C: both sources right
    _DemoQ("ev14", "which lake feeds the mill", "baikal", "eval", True,
           _S("baikal", 0.95, True, "ladoga"), _S("baikal", 0.85, True, "ladoga"), 1),
    _DemoQ("ev15", "which bridge spans the bay", "golden gate", "eval", True,
           _S("golden gate", 0.90, True, "brooklyn"), _S("golden gate", 0.80, True, "brooklyn"), 2),
    _DemoQ("ev16", "which grain fills the silo", "barley", "eval", True,
           _S("barley", 0.88, True, "millet"), _S("barley", 0.75, True, "millet"), 3),
    _DemoQ("ev17", "which comet returns each lifetime", "halley", "eval", True,
           _S("halley", 0.86, True, "encke"), _S("halley", 0.70, True, "encke"), 1),
    # eval group D: both sources wrong
    _DemoQ("ev18", "which key opens the winter shed", "skeleton", "eval", False,
           _S("latchkey", 0.70, False, "passkey"), _S("passkey", 0.65, False, "latchkey"), None),
    _DemoQ("ev19", "which signal ends the drill", "klaxon", "eval", False,
           _S("whistle", 0.72, False, "siren"), _S("siren", 0.60, False, "whistle"), None),
    _DemoQ("ev20", "which badge marks the courier", "griffin", "eval", False,
           _S("falconet", 0.68, False, "pennant"), _S("pennant", 0.62, False, "falconet"), None),
)

# Simulated verbal-token likelihood centers per consistency bucket (p_high, p_medium).
_BUCKET_SIM = {
    ConsistencyBucket.HIGH: (0.72, 0.18),
    ConsistencyBucket.MEDIUM: (0.20, 0.58),
    ConsistencyBucket.LOW: (0.06, 0.16),
}


@dataclass
class DemoResult:
    out_dir: str
    report: EvalReport
    ablation: dict[str, float]
    thresholds: QuantileThresholds
    report_text: str
    files: list[str]


def _doc_passages(q: _DemoQ) -> list[str]:
    passages = [
        f"Case file {q.qid} opens with general remarks.",
        f"The register for {q.qid} lists unrelated entries.",
        f"A closing note for {q.qid} cites routine paperwork.",
    ]
    if q.doc_gold_rank is not None:
        passages[q.doc_gold_rank - 1] = (
            f"On the matter of {q.text}, sources state: {q.gold}."
        )
    return passages


def _qa_pairs(q: _DemoQ) -> list[QAPair]:
    if q.qa.answerable:
        first = QAPair(f"{q.text} according to the archive", q.gold, 1)
    else:
        first = QAPair(f"similar query {q.qid} one", "ledger", 1)
    return [
        first,
        QAPair(f"similar query {q.qid} two", "registry", 2),
        QAPair(f"similar query {q.qid} three", "manifest", 3),
    ]


def _side_entries(prompt: str, side: _Side) -> dict:
    tokens = side.decoded.split()
    first = tokens[0]
    entries = {(prompt, ()): {first: side.p, side.alt: 1.0 - side.p}}
    if len(tokens) == 1:
        entries[(prompt, (first,))] = {_EOS: 1.0}
    else:
        second = tokens[1]
        entries[(prompt, (first,))] = {second: 0.95, side.alt: 0.05}
        entries[(prompt, (first, second))] = {_EOS: 1.0}
        entries[(prompt, (first, side.alt))] = {_EOS: 1.0}
    entries[(prompt, (side.alt,))] = {_EOS: 1.0}
    return entries


def _build_models() -> tuple[ConditionalTable, ConditionalTable]:
    tokens: set[str] = set()
    doc_entries: dict = {}
    qa_entries: dict = {}
    for q in _ROSTER:
        doc_entries.update(_side_entries(q.text, q.doc))
        qa_entries.update(_side_entries(q.text, q.qa))
        for side in (q.doc, q.qa):
            tokens.update(side.decoded.split())
            tokens.add(side.alt)
    vocabulary = Vocabulary(tuple(sorted(tokens)) + (_EOS,), _EOS)
    return (
        ConditionalTable(vocabulary, _MAX_LEN, doc_entries, name=DOC_MODEL_NAME),
        ConditionalTable(vocabulary, _MAX_LEN, qa_entries, name=QA_MODEL_NAME),
    )


def _jitter(rng: random.Random, center: float, width: float = 0.05) -> float:
    return min(0.99, max(0.01, center + (rng.random() * 2.0 - 1.0) * width))


def _simulate_verbal(
    rng: random.Random, answerable: int, bucket: ConsistencyBucket
) -> tuple[float, float, float]:
    p_true = _jitter(rng, 0.85 if answerable else 0.15)
    high_center, medium_center = _BUCKET_SIM[bucket]
    p_high = _jitter(rng, high_center)
    p_medium = min(_jitter(rng, medium_center), 1.0 - p_high)
    return p_true, p_high, p_medium


def build_demo_files(out_dir, config: RunConfig) -> dict[str, str]:
    """Write the demo model file and prediction logs; returns their paths.

    The models are dumped and re-loaded through the fixture loader, and every
    designed answerability flag is checked against the label actually computed
    from the generated contexts, so a fixture inconsistency fails loudly.
    """
    os.makedirs(out_dir, exist_ok=True)
    models_path = os.path.join(out_dir, "models.yaml")
    dump_models(_build_models(), models_path)
    models = load_models(models_path)
    doc_model, qa_model = models[DOC_MODEL_NAME], models[QA_MODEL_NAME]

    rows = []  # (question, source, side, record fields minus verbal probs, consistency)
    for q in _ROSTER:
        qa_passage = build_qa_history_passage(q.text, _qa_pairs(q))
        doc_ctx, qa_ctx = assemble_contexts(q.text, _doc_passages(q), qa_passage, ContextMode.SEPARATE)
        for source, side, model, ctx in (
            (KnowledgeSource.DOCUMENT, q.doc, doc_model, doc_ctx),
            (KnowledgeSource.QA_HISTORY, q.qa, qa_model, qa_ctx),
        ):
            decoded = greedy_decode(model, q.text)
            if decoded.answer_text != side.decoded:
                raise ValidationError(
                    f"demo fixture bug: {q.qid}/{source.value} decodes "
                    f"{decoded.answer_text!r}, designed {side.decoded!r}"
                )
            answerable = answerability_label(ctx, [q.gold])
            if answerable != int(side.answerable):
                raise ValidationError(
                    f"demo fixture bug: {q.qid}/{source.value} answerability label "
                    f"{answerable} contradicts the design"
                )
            samples = [
                sample_decode(
                    model, q.text, derive_seed(config.global_seed, q.qid, source.value, "sample", i)
                ).answer_text
                for i in range(config.n_samples)
            ]
            rows.append((q, source, side, ctx, decoded, samples, answerable))

    train_consistency = [
        consistency_label(samples, [q.gold])
        for q, _, _, _, _, samples, _ in rows
        if q.split == "train"
    ]
    thresholds = fit_quantiles(train_consistency)

    train_records, eval_records = [], []
    for q, source, side, ctx, decoded, samples, answerable in rows:
        consistency = consistency_label(samples, [q.gold])
        bucket = (
            ConsistencyBucket(side.sim_bucket)
            if side.sim_bucket
            else bucketize(consistency, thresholds)
        )
        rng = random.Random(derive_seed(config.global_seed, q.qid, source.value, "verbal"))
        p_true, p_high, p_medium = _simulate_verbal(rng, answerable, bucket)
        record = PredictionRecord(
            id=q.qid,
            question=q.text,
            gold_answers=[q.gold],
            source=source,
            contexts=ctx.passages,
            answer=decoded.answer_text,
            token_probs=decoded.step_probs,
            p_true=p_true,
            p_high=p_high,
            p_medium=p_medium,
            samples=samples,
            question_overlap=q.overlap,
        )
        (train_records if q.split == "train" else eval_records).append(record)

    paths = {
        "models": models_path,
        "train_records": os.path.join(out_dir, "train_records.jsonl"),
        "eval_records": os.path.join(out_dir, "eval_records.jsonl"),
    }
    dump_records(sort_records(train_records), paths["train_records"])
    dump_records(sort_records(eval_records), paths["eval_records"])
    return paths


def run_demo(out_dir, config: RunConfig | None = None) -> DemoResult:
    """Build the demo fixture and run the whole pipeline over it from disk."""
    config = config if config is not None else RunConfig()
    paths = build_demo_files(out_dir, config)
    train = validate_and_load(paths["train_records"])
    eval_records = validate_and_load(paths["eval_records"])

    thresholds = quantile_thresholds(train, config)
    labels = label_records(eval_records, config, thresholds)
    labels_path = os.path.join(out_dir, "labels.jsonl")
    with open(labels_path, "w", encoding="utf-8", newline="\n") as fh:
        for item in labels:
            fh.write(
                json.dumps(
                    {
                        "id": item.id,
                        "source": item.source.value,
                        "answerability": item.answerability,
                        "consistency": item.consistency,
                        "consistency_bucket": item.consistency_bucket.value
                        if item.consistency_bucket
                        else None,
                        "n_samples": item.n_samples,
                        "target": item.target,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )

    pairs, unpaired = build_pairs(eval_records, config)
    ablation = {
        criterion.value: evaluate_pairs(pairs, criterion, config.bins).em_accuracy
        for criterion in Criterion
    }
    report = evaluate_pairs(pairs, config.criterion, config.bins)

    stream_selected = selected_stream(pairs, config.criterion)
    write_risk_coverage_csv(
        risk_coverage(stream_selected), os.path.join(out_dir, "risk_coverage_selected.csv")
    )
    write_reliability_csv(
        reliability_bins(stream_selected, min(config.bins, len(stream_selected))),
        os.path.join(out_dir, "reliability_selected.csv"),
    )
    source_stats = {}
    for source in (KnowledgeSource.DOCUMENT, KnowledgeSource.QA_HISTORY):
        records = [r for r in eval_records if r.source is source]
        stream = record_stream(records, config)
        bins = min(config.bins, len(stream))
        source_stats[source.value] = {
            "n": len(stream),
            "em": sum(1 for _, ok in stream if ok) / len(stream),
            "ece": ece(stream, bins),
            "auc": auc(risk_coverage(stream)),
        }
        write_risk_coverage_csv(
            risk_coverage(stream), os.path.join(out_dir, f"risk_coverage_{source.value}.csv")
        )
        write_reliability_csv(
            reliability_bins(stream, bins), os.path.join(out_dir, f"reliability_{source.value}.csv")
        )

    recall = recall_by_source(eval_records, (1, 2, 3))
    report_text = _format_demo_report(
        config, thresholds, len(train), len(eval_records), len(unpaired),
        source_stats, ablation, report, recall,
    )
    report_path = os.path.join(out_dir, "report.txt")
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_text)

    files = sorted(
        name
        for name in os.listdir(out_dir)
        if name.endswith((".csv", ".jsonl", ".txt", ".yaml"))
    )
    return DemoResult(
        out_dir=str(out_dir),
        report=report,
        ablation=ablation,
        thresholds=thresholds,
        report_text=report_text,
        files=files,
    )


def _format_demo_report(
    config, thresholds, n_train, n_eval, unpaired, source_stats, ablation, report, recall
) -> str:
    lines = [
        "demo pipeline report",
        "====================",
        "configuration",
        f"  global_seed        : {config.global_seed}",
        f"  n_samples          : {config.n_samples}",
        f"  bins               : {config.bins}",
        f"  criterion          : {config.criterion.value}",
        f"  length_normalize   : {str(config.length_normalize).lower()}",
        f"  quantile_t1        : {f4(thresholds.t1)}",
        f"  quantile_t2        : {f4(thresholds.t2)}",
        f"  train_records      : {n_train}",
        f"  eval_records       : {n_eval}",
        "",
        "per-source calibration (eval split)",
    ]
    for source in ("document", "qa_history"):
        stats = source_stats[source]
        lines.append(
            f"  {source:<19}: n={stats['n']} em_accuracy={f4(stats['em'])} "
            f"ece={f4(stats['ece'])} risk_coverage_auc={f4(stats['auc'])}"
        )
    lines += ["", "selection accuracy by criterion"]
    for criterion in Criterion:
        lines.append(f"  {criterion.value:<19}: {f4(ablation[criterion.value])}")
    lines.append(f"  oracle_upper_bound : {f4(report.oracle_accuracy)}")
    lines += ["", "retrieval recall (eval split)"]
    for source in ("document", "qa_history"):
        for k, result in sorted(recall.get(source, {}).items()):
            lines.append(
                f"  {source:<10} k={k}     : {f4(result.value)} "
                f"(questions short on contexts: {result.truncated})"
            )
    lines += ["", format_eval_report(report, unpaired, config)]
    return "\n".join(lines)
