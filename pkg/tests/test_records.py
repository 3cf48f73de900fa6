"""Record-log schema validation, pairing, and run configuration."""

import json

import pytest

from selectqa.errors import RecordValidationError, ValidationError
from selectqa.evaluation import Criterion
from selectqa.records import (
    CONFIG_ENV_VAR,
    PredictionRecord,
    RunConfig,
    dump_records,
    pair_records,
    validate_and_load,
)
from selectqa.answers import KnowledgeSource


def make_record(qid="q1", source="document", **overrides):
    data = {
        "id": qid,
        "question": "what is it",
        "gold_answers": ["paris"],
        "source": source,
        "contexts": ["it is paris"],
        "answer": "paris",
        "token_probs": [0.9, 1.0],
    }
    data.update(overrides)
    return data


def write_log(path, records, header='{"version": "v1"}'):
    lines = [header] + [json.dumps(r) for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestValidateAndLoad:
    def test_well_formed_file(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_log(path, [make_record("q1", "document"), make_record("q1", "qa_history")])
        records = validate_and_load(path)
        assert len(records) == 2
        assert records[0].source is KnowledgeSource.DOCUMENT
        assert records[1].token_probs == [0.9, 1.0]

    def test_zero_token_probability_names_line_and_field(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_log(path, [make_record(token_probs=[0.0, 1.0])])
        with pytest.raises(RecordValidationError) as err:
            validate_and_load(path)
        assert any("line 2: token_probs" in v for v in err.value.violations)

    def test_duplicate_id_source_rejected(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_log(path, [make_record("q1"), make_record("q1")])
        with pytest.raises(RecordValidationError) as err:
            validate_and_load(path)
        assert any("duplicate" in v for v in err.value.violations)

    def test_same_id_across_sources_allowed(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_log(path, [make_record("q1", "document"), make_record("q1", "qa_history")])
        assert len(validate_and_load(path)) == 2

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_log(path, [make_record(extra_field=1)])
        with pytest.raises(RecordValidationError) as err:
            validate_and_load(path)
        assert any("extra_field: unknown field" in v for v in err.value.violations)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text(json.dumps(make_record()) + "\n", encoding="utf-8")
        with pytest.raises(RecordValidationError) as err:
            validate_and_load(path)
        assert any("line 1: header" in v for v in err.value.violations)

    def test_wrong_version_rejected(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_log(path, [make_record()], header='{"version": "v2"}')
        with pytest.raises(RecordValidationError) as err:
            validate_and_load(path)
        assert any("version" in v for v in err.value.violations)

    def test_all_violations_reported_together(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_log(
            path,
            [
                make_record("q1", token_probs=[1.5]),
                make_record("q2", gold_answers=[]),
                make_record("q3", source="wiki"),
            ],
        )
        with pytest.raises(RecordValidationError) as err:
            validate_and_load(path)
        lines = {v.split(":")[0] for v in err.value.violations}
        assert lines == {"line 2", "line 3", "line 4"}

    def test_verbal_probability_bound_checked(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_log(path, [make_record(p_true=0.5, p_high=0.8, p_medium=0.3)])
        with pytest.raises(RecordValidationError) as err:
            validate_and_load(path)
        assert any("p_high" in v for v in err.value.violations)

    def test_gold_normalizing_to_empty_rejected(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_log(path, [make_record(gold_answers=["the !!"])])
        with pytest.raises(RecordValidationError):
            validate_and_load(path)

    def test_blank_line_rejected(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text('{"version": "v1"}\n\n' + json.dumps(make_record()) + "\n", encoding="utf-8")
        with pytest.raises(RecordValidationError) as err:
            validate_and_load(path)
        assert any("blank line" in v for v in err.value.violations)

    def test_dump_then_load_round_trips(self, tmp_path):
        records = [
            PredictionRecord(
                id="q1",
                question="what is it",
                gold_answers=["paris"],
                source=KnowledgeSource.DOCUMENT,
                contexts=["it is paris"],
                answer="paris",
                token_probs=[0.9, 1.0],
                p_true=0.8,
                p_high=0.6,
                p_medium=0.2,
                samples=["paris", "lyon"],
                question_overlap=True,
            )
        ]
        path = tmp_path / "log.jsonl"
        dump_records(records, path)
        assert validate_and_load(path) == records


class TestPairRecords:
    def _loaded(self, tmp_path, specs):
        path = tmp_path / "log.jsonl"
        write_log(path, [make_record(qid, source) for qid, source in specs])
        return validate_and_load(path)

    def test_full_pairing(self, tmp_path):
        records = self._loaded(
            tmp_path,
            [("a", "document"), ("b", "document"), ("c", "document"),
             ("a", "qa_history"), ("b", "qa_history"), ("c", "qa_history")],
        )
        pairs, unpaired = pair_records(records)
        assert len(pairs) == 3
        assert unpaired == []
        assert [doc.id for doc, _ in pairs] == ["a", "b", "c"]

    def test_partial_pairing_reports_leftovers(self, tmp_path):
        records = self._loaded(
            tmp_path,
            [("a", "document"), ("b", "document"), ("c", "document"),
             ("a", "qa_history"), ("b", "qa_history")],
        )
        pairs, unpaired = pair_records(records)
        assert len(pairs) == 2
        assert [(r.id, r.source.value) for r in unpaired] == [("c", "document")]

    def test_empty_input(self):
        assert pair_records([]) == ([], [])


class TestRunConfig:
    def test_defaults_match_reference_settings(self):
        config = RunConfig()
        assert config.n_samples == 30
        assert config.bins == 10
        assert config.length_normalize is True
        assert config.criterion is Criterion.ENSEMBLE

    def test_from_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(
            json.dumps({"global_seed": 9, "bins": 5, "criterion": "likelihood"}),
            encoding="utf-8",
        )
        config = RunConfig.from_file(path)
        assert config.global_seed == 9
        assert config.bins == 5
        assert config.criterion is Criterion.LIKELIHOOD

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"bogus": 1}), encoding="utf-8")
        with pytest.raises(ValidationError):
            RunConfig.from_file(path)

    def test_env_var_supplies_default_path(self, tmp_path, monkeypatch):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"global_seed": 123}), encoding="utf-8")
        monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
        assert RunConfig.default().global_seed == 123
        monkeypatch.delenv(CONFIG_ENV_VAR)
        assert RunConfig.default().global_seed == 0

    def test_explicit_quantiles_validated(self):
        config = RunConfig(quantile_mode="explicit", quantile_t1=0.3, quantile_t2=0.7)
        assert config.quantile_t1 == 0.3
        with pytest.raises(ValidationError):
            RunConfig(quantile_mode="explicit")
        with pytest.raises(ValidationError):
            RunConfig(quantile_mode="explicit", quantile_t1=0.8, quantile_t2=0.2)
