"""Shared builders and independent oracles for the test suite.

The oracles here are deliberately written against the documented behavior
with different mechanics than the library (split/filter instead of regex,
index slicing instead of generators), so agreement is meaningful.
"""

import string

from selectqa.confidence import ConfidenceBreakdown, ensemble_confidence
from selectqa.answers import Question
from selectqa.evaluation import PairedPrediction, ScoredPrediction
from selectqa.toylm import ConditionalTable, Vocabulary

EOS = "</s>"


def fixture_f() -> ConditionalTable:
    """Two-outcome model: prompt "q1" -> paris 0.7 / london 0.3, then eos."""
    vocab = Vocabulary(("paris", "london", EOS), EOS)
    entries = {
        ("q1", ()): {"paris": 0.7, "london": 0.3},
        ("q1", ("paris",)): {EOS: 1.0},
        ("q1", ("london",)): {EOS: 1.0},
    }
    return ConditionalTable(vocab, 2, entries, name="fixture-f")


def oracle_normalize(text: str) -> str:
    """Independent normalizer: lowercase, drop ASCII punctuation chars,
    filter article words, re-join on single spaces."""
    kept = [ch for ch in text.lower() if ch not in string.punctuation]
    return " ".join(w for w in "".join(kept).split() if w not in ("a", "an", "the"))


def oracle_contains(passages, golds) -> bool:
    """Brute-force substring scan over the space-joined, normalized passages."""
    haystack = oracle_normalize(" ".join(passages))
    for gold in golds:
        needle = oracle_normalize(gold)
        if not needle:
            continue
        for start in range(len(haystack) - len(needle) + 1):
            if haystack[start : start + len(needle)] == needle:
                return True
    return False


def likelihood_pair(qid, doc_conf, qa_conf, doc_correct, qa_correct, overlap=None) -> PairedPrediction:
    """Pair carrying likelihood-only confidence breakdowns."""
    return PairedPrediction(
        question=Question(qid, f"question {qid}", ["gold"], overlap),
        doc=ScoredPrediction("doc answer", ConfidenceBreakdown(doc_conf), doc_correct),
        qa=ScoredPrediction("qa answer", ConfidenceBreakdown(qa_conf), qa_correct),
    )


def full_pair(qid, doc_scores, qa_scores, doc_correct, qa_correct, overlap=None) -> PairedPrediction:
    """Pair with complete breakdowns; scores are (lm, p_answerable, p_consistent)."""
    return PairedPrediction(
        question=Question(qid, f"question {qid}", ["gold"], overlap),
        doc=ScoredPrediction("doc answer", ensemble_confidence(*doc_scores), doc_correct),
        qa=ScoredPrediction("qa answer", ensemble_confidence(*qa_scores), qa_correct),
    )
