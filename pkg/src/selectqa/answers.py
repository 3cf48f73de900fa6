"""Core domain types plus answer-text normalization and matching predicates.

Matching follows the SQuAD convention: lowercase, strip ASCII punctuation,
drop the articles "a"/"an"/"the" as whole words, collapse whitespace.
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import ValidationError

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


class KnowledgeSource(str, Enum):
    """Where an answer's supporting context came from."""

    DOCUMENT = "document"
    QA_HISTORY = "qa_history"


@dataclass
class Question:
    """A question with its reference answers.

    ``question_overlap`` marks questions whose paraphrase was seen during
    training; it is ingested, never computed.
    """

    id: str
    text: str
    gold_answers: list[str]
    question_overlap: bool | None = None

    def __post_init__(self):
        if not self.gold_answers:
            raise ValidationError(f"question {self.id!r}: gold_answers must be non-empty")
        for gold in self.gold_answers:
            if not normalize_answer(gold):
                raise ValidationError(
                    f"question {self.id!r}: gold answer {gold!r} is empty after normalization"
                )


@dataclass
class ContextSet:
    """Ordered context passages from one knowledge source.

    Passage order is the retrieval rank order and is preserved.
    """

    source: KnowledgeSource
    passages: list[str]


def normalize_answer(text: str) -> str:
    """Normalize an answer string for comparison. Idempotent.

    Lowercases, removes ASCII punctuation, deletes whole-word articles, and
    collapses whitespace runs to single spaces. Non-ASCII characters pass
    through untouched apart from lowercasing.
    """
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, golds: Sequence[str]) -> bool:
    """True iff the normalized prediction equals some normalized gold answer."""
    if not golds:
        raise ValidationError("exact_match requires at least one gold answer")
    pred = normalize_answer(prediction)
    return any(pred == normalize_answer(gold) for gold in golds)


def contains_answer(passages: Sequence[str], golds: Sequence[str], *, joint: bool = True) -> bool:
    """True iff some normalized gold occurs as a substring of the passage text.

    With ``joint`` (the default) the passages are joined with a single space
    before normalization, so a gold answer spanning a passage boundary still
    counts. With ``joint=False`` each passage is searched on its own. Golds
    that normalize to the empty string are skipped (they would match
    vacuously).
    """
    if not golds:
        raise ValidationError("contains_answer requires at least one gold answer")
    needles = [n for n in (normalize_answer(gold) for gold in golds) if n]
    if not needles:
        return False
    if joint:
        haystacks = [normalize_answer(" ".join(passages))]
    else:
        haystacks = [normalize_answer(p) for p in passages]
    return any(needle in haystack for haystack in haystacks for needle in needles)
