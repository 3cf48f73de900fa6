"""QA-history passage format, context assembly, and the output template."""

import pytest
from hypothesis import given, strategies as st

from selectqa.answers import KnowledgeSource
from selectqa.errors import TemplateParseError, ValidationError
from selectqa.prompts import (
    ContextMode,
    QAPair,
    assemble_contexts,
    build_qa_history_passage,
    parse_calibration_target,
    render_calibration_target,
)


class TestQAHistoryPassage:
    def test_documented_example_byte_for_byte(self):
        passage = build_qa_history_passage("who won X", [QAPair("q1", "a1", 1)])
        assert passage == "Question: who won X, Answer: \nQuestion: q1, Answer: a1"

    def test_fifty_pairs_give_fifty_one_lines(self):
        pairs = [QAPair(f"q{i}", f"a{i}", i) for i in range(1, 51)]
        passage = build_qa_history_passage("target", pairs)
        lines = passage.split("\n")
        assert len(lines) == 51
        assert lines[0] == "Question: target, Answer: "
        assert lines[1] == "Question: q1, Answer: a1"
        assert lines[50] == "Question: q50, Answer: a50"

    def test_pairs_sorted_by_rank(self):
        pairs = [QAPair("late", "z", 3), QAPair("early", "x", 1), QAPair("mid", "y", 2)]
        lines = build_qa_history_passage("t", pairs).split("\n")
        assert lines[1:] == [
            "Question: early, Answer: x",
            "Question: mid, Answer: y",
            "Question: late, Answer: z",
        ]

    def test_empty_pairs_rejected(self):
        with pytest.raises(ValidationError):
            build_qa_history_passage("t", [])

    def test_duplicate_ranks_rejected(self):
        with pytest.raises(ValidationError):
            build_qa_history_passage("t", [QAPair("a", "x", 1), QAPair("b", "y", 1)])

    def test_rank_must_be_positive(self):
        with pytest.raises(ValidationError):
            QAPair("a", "x", 0)

    @given(st.integers(1, 40))
    def test_line_count_and_empty_answer_slot(self, m):
        pairs = [QAPair(f"q{i}", f"a{i}", i) for i in range(1, m + 1)]
        lines = build_qa_history_passage("t", pairs).split("\n")
        assert len(lines) == m + 1
        assert lines[0].endswith("Answer: ")


class TestAssembleContexts:
    def test_concat_places_qa_passage_last(self):
        docs = ["d1", "d2", "d3"]
        (ctx,) = assemble_contexts("q", docs, "qa passage", ContextMode.CONCAT)
        assert ctx.source is KnowledgeSource.DOCUMENT
        assert ctx.passages == ["d1", "d2", "d3", "qa passage"]

    def test_separate_yields_both_sources(self):
        doc_ctx, qa_ctx = assemble_contexts("q", ["d1", "d2", "d3"], "qa passage", "separate")
        assert doc_ctx.source is KnowledgeSource.DOCUMENT
        assert doc_ctx.passages == ["d1", "d2", "d3"]
        assert qa_ctx.source is KnowledgeSource.QA_HISTORY
        assert qa_ctx.passages == ["qa passage"]

    def test_separate_without_documents(self):
        (ctx,) = assemble_contexts("q", [], "qa passage", ContextMode.SEPARATE)
        assert ctx.source is KnowledgeSource.QA_HISTORY

    def test_concat_without_qa_passage(self):
        (ctx,) = assemble_contexts("q", ["d1"], None, ContextMode.CONCAT)
        assert ctx.passages == ["d1"]

    def test_both_sources_empty_rejected(self):
        with pytest.raises(ValidationError):
            assemble_contexts("q", [], None, ContextMode.SEPARATE)


class TestCalibrationTemplate:
    def test_render_documented_example(self):
        target = render_calibration_target("paris", True, "High")
        assert target.rendered == "Answer: paris Answerable: True Consistency: High"

    def test_render_empty_answer_keeps_slot(self):
        target = render_calibration_target("", False, "Low")
        assert target.rendered == "Answer:  Answerable: False Consistency: Low"

    def test_render_rejects_bad_bucket(self):
        with pytest.raises(ValidationError):
            render_calibration_target("x", True, "Highest")

    def test_parse_inverts_render(self):
        target = render_calibration_target("mount fuji", True, "Medium")
        parsed = parse_calibration_target(target.rendered)
        assert parsed == target

    def test_parse_takes_last_separator_occurrences(self):
        tricky = "it is Answerable: True or Consistency: Low stuff"
        rendered = render_calibration_target(tricky, False, "High").rendered
        parsed = parse_calibration_target(rendered)
        assert parsed.answer_text == tricky
        assert parsed.answerable_word == "False"
        assert parsed.consistency_word == "High"

    @pytest.mark.parametrize(
        "bad",
        [
            "no template here",
            "Answer: x Answerable: maybe Consistency: High",
            "Answer: x Answerable: True Consistency: Highest",
            "Reply: x Answerable: True Consistency: High",
            "",
        ],
    )
    def test_parse_rejects_malformed(self, bad):
        with pytest.raises(TemplateParseError):
            parse_calibration_target(bad)

    @given(
        st.text(max_size=60),
        st.booleans(),
        st.sampled_from(["High", "Medium", "Low"]),
    )
    def test_round_trip_property(self, answer, answerable, bucket):
        target = render_calibration_target(answer, answerable, bucket)
        parsed = parse_calibration_target(target.rendered)
        assert parsed.answer_text == answer
        assert parsed.answerable_word == ("True" if answerable else "False")
        assert parsed.consistency_word == bucket
