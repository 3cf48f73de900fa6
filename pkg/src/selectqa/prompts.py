"""QA-history prompt assembly and the verbalized-calibration output template."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .answers import ContextSet, KnowledgeSource
from .errors import TemplateParseError, ValidationError

ANSWERABLE_WORDS = ("True", "False")
CONSISTENCY_WORDS = ("High", "Medium", "Low")

_ANSWER_PREFIX = "Answer: "
_ANSWERABLE_SEP = " Answerable: "
_CONSISTENCY_SEP = " Consistency: "


class ContextMode(str, Enum):
    """How document passages and the QA-history passage are combined."""

    SEPARATE = "separate"
    CONCAT = "concat"


@dataclass(frozen=True)
class QAPair:
    """One retrieved question/answer pair with its retrieval rank."""

    question: str
    answer: str
    retrieval_rank: int

    def __post_init__(self):
        if self.retrieval_rank < 1:
            raise ValidationError(f"retrieval_rank must be positive, got {self.retrieval_rank!r}")


@dataclass(frozen=True)
class CalibrationTarget:
    """A rendered output template carrying answer, answerability, and consistency."""

    answer_text: str
    answerable_word: str
    consistency_word: str
    rendered: str


def build_qa_history_passage(target_question: str, pairs: Sequence[QAPair]) -> str:
    """Render retrieved QA pairs as one pseudo-passage.

    Line 1 holds the target question with an empty answer slot; each retrieved
    pair follows on its own line, ordered by ascending retrieval rank. Lines
    are joined with a single newline.
    """
    if not pairs:
        raise ValidationError("build_qa_history_passage requires at least one QA pair")
    ranks = [p.retrieval_rank for p in pairs]
    if len(set(ranks)) != len(ranks):
        raise ValidationError("retrieval ranks must be unique within a retrieved list")
    ordered = sorted(pairs, key=lambda p: p.retrieval_rank)
    lines = [f"Question: {target_question}, Answer: "]
    lines.extend(f"Question: {p.question}, Answer: {p.answer}" for p in ordered)
    return "\n".join(lines)


def assemble_contexts(
    question: str,
    doc_passages: Sequence[str],
    qa_passage: str | None,
    mode: ContextMode | str = ContextMode.SEPARATE,
) -> list[ContextSet]:
    """Assemble per-source context sets or the single concatenated context.

    Separate mode yields one ContextSet per available source, feeding two
    independent inferences. Concat mode yields a single document-source
    ContextSet with the QA-history passage appended as the final passage.
    """
    docs = list(doc_passages)
    if not docs and not qa_passage:
        raise ValidationError(f"question {question!r}: no document passages and no QA passage")
    mode = ContextMode(mode)
    if mode is ContextMode.CONCAT:
        passages = docs + ([qa_passage] if qa_passage else [])
        return [ContextSet(KnowledgeSource.DOCUMENT, passages)]
    contexts = []
    if docs:
        contexts.append(ContextSet(KnowledgeSource.DOCUMENT, docs))
    if qa_passage:
        contexts.append(ContextSet(KnowledgeSource.QA_HISTORY, [qa_passage]))
    return contexts


def render_calibration_target(answer: str, answerable: bool, consistency_bucket) -> CalibrationTarget:
    """Instantiate the output template for the verbalized calibration scores.

    The template is exactly
    ``Answer: {answer} Answerable: {True|False} Consistency: {High|Medium|Low}``.
    Answers containing the literal field names are not escaped; the parser
    compensates by taking the last occurrence of each separator.
    """
    answerable_word = "True" if answerable else "False"
    consistency_word = getattr(consistency_bucket, "value", consistency_bucket)
    if consistency_word not in CONSISTENCY_WORDS:
        raise ValidationError(
            f"consistency bucket must be one of {CONSISTENCY_WORDS}, got {consistency_bucket!r}"
        )
    rendered = (
        f"{_ANSWER_PREFIX}{answer}"
        f"{_ANSWERABLE_SEP}{answerable_word}"
        f"{_CONSISTENCY_SEP}{consistency_word}"
    )
    return CalibrationTarget(answer, answerable_word, consistency_word, rendered)


def parse_calibration_target(rendered: str) -> CalibrationTarget:
    """Parse a rendered template back into its fields.

    Inverse of :func:`render_calibration_target`: the genuine separators are
    always the rightmost occurrences, so answers containing the field names
    still round-trip.
    """
    head, sep, consistency_word = rendered.rpartition(_CONSISTENCY_SEP)
    if not sep or consistency_word not in CONSISTENCY_WORDS:
        raise TemplateParseError(f"no valid consistency field in {rendered!r}")
    head, sep, answerable_word = head.rpartition(_ANSWERABLE_SEP)
    if not sep or answerable_word not in ANSWERABLE_WORDS:
        raise TemplateParseError(f"no valid answerable field in {rendered!r}")
    if not head.startswith(_ANSWER_PREFIX):
        raise TemplateParseError(f"template must start with {_ANSWER_PREFIX!r}: {rendered!r}")
    answer = head[len(_ANSWER_PREFIX):]
    return CalibrationTarget(answer, answerable_word, consistency_word, rendered)
