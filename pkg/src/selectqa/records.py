"""Prediction-log ingestion: record schema, validation, pairing, run config.

Log files are line-delimited JSON with a mandatory header line declaring the
schema version. The schema is closed: unknown fields are rejected so silent
producer drift fails loudly. Validation collects every violation (with line
number and field) before raising, so a whole file can be fixed in one pass.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields as dataclass_fields
from typing import Iterable, Sequence

from .answers import KnowledgeSource, normalize_answer
from .errors import RecordValidationError, ValidationError
from .evaluation import Criterion

SCHEMA_VERSION = "v1"
CONFIG_ENV_VAR = "SELECTQA_CONFIG"

_VERBAL_SUM_TOL = 1e-9


@dataclass
class PredictionRecord:
    """One (question, source) prediction unit as carried by the log schema."""

    id: str
    question: str
    gold_answers: list[str]
    source: KnowledgeSource
    contexts: list[str]
    answer: str
    token_probs: list[float]
    p_true: float | None = None
    p_high: float | None = None
    p_medium: float | None = None
    samples: list[str] | None = None
    question_overlap: bool | None = None


_REQUIRED_FIELDS = ("id", "question", "gold_answers", "source", "contexts", "answer", "token_probs")
_OPTIONAL_FIELDS = ("p_true", "p_high", "p_medium", "samples", "question_overlap")
_ALL_FIELDS = set(_REQUIRED_FIELDS) | set(_OPTIONAL_FIELDS)


@dataclass
class RunConfig:
    """Pipeline settings; the defaults match the method's reference settings."""

    global_seed: int = 0
    n_samples: int = 30
    bins: int = 10
    length_normalize: bool = True
    criterion: Criterion = Criterion.ENSEMBLE
    quantile_mode: str = "fit"  # "fit" (from the input) or "explicit" (t1/t2 below)
    quantile_t1: float | None = None
    quantile_t2: float | None = None

    def __post_init__(self):
        self.criterion = Criterion(self.criterion)
        if self.n_samples < 1:
            raise ValidationError(f"n_samples must be positive, got {self.n_samples!r}")
        if self.bins < 1:
            raise ValidationError(f"bins must be positive, got {self.bins!r}")
        if self.quantile_mode not in ("fit", "explicit"):
            raise ValidationError(f"quantile_mode must be 'fit' or 'explicit', got {self.quantile_mode!r}")
        if self.quantile_mode == "explicit":
            if self.quantile_t1 is None or self.quantile_t2 is None:
                raise ValidationError("explicit quantile_mode requires quantile_t1 and quantile_t2")
            if self.quantile_t1 > self.quantile_t2:
                raise ValidationError("quantile_t1 must not exceed quantile_t2")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """Read a JSON config; keys are the dataclass field names, all optional."""
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        known = {f.name for f in dataclass_fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def default(cls, explicit_path=None) -> "RunConfig":
        """Config from an explicit path, else $SELECTQA_CONFIG, else defaults."""
        path = explicit_path or os.environ.get(CONFIG_ENV_VAR)
        return cls.from_file(path) if path else cls()


def validate_and_load(path) -> list[PredictionRecord]:
    """Load a prediction log, or raise listing every violation found.

    The first line must be the header ``{"version": "v1"}``; each further line
    is one JSON record matching the closed schema.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    violations: list[str] = []
    if not lines:
        raise RecordValidationError(["line 1: header: file is empty, expected a version header"])
    _check_header(lines[0], violations)
    records: list[PredictionRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        record = _parse_record_line(line, lineno, violations)
        if record is None:
            continue
        key = (record.id, record.source.value)
        if key in seen:
            violations.append(f"line {lineno}: id: duplicate (id, source) pair {key!r}")
        seen.add(key)
        records.append(record)
    if violations:
        raise RecordValidationError(violations)
    return records


def _check_header(line: str, violations: list[str]):
    try:
        header = json.loads(line)
    except json.JSONDecodeError:
        violations.append("line 1: header: not valid JSON")
        return
    if not isinstance(header, dict) or set(header) != {"version"}:
        violations.append('line 1: header: expected exactly {"version": ...}')
        return
    if header["version"] != SCHEMA_VERSION:
        violations.append(
            f"line 1: version: unsupported schema version {header['version']!r}, "
            f"expected {SCHEMA_VERSION!r}"
        )


def _parse_record_line(line: str, lineno: int, violations: list[str]) -> PredictionRecord | None:
    if not line.strip():
        violations.append(f"line {lineno}: record: blank line")
        return None
    try:
        data = json.loads(line)
    except json.JSONDecodeError:
        violations.append(f"line {lineno}: record: not valid JSON")
        return None
    if not isinstance(data, dict):
        violations.append(f"line {lineno}: record: expected a JSON object")
        return None
    found = [f"line {lineno}: {name}: unknown field" for name in sorted(set(data) - _ALL_FIELDS)]
    found += [
        f"line {lineno}: {name}: missing required field"
        for name in _REQUIRED_FIELDS
        if name not in data
    ]
    if found:
        violations.extend(found)
        return None
    ok = True

    def bad(fieldname: str, message: str):
        nonlocal ok
        ok = False
        violations.append(f"line {lineno}: {fieldname}: {message}")

    for name in ("id", "question", "answer"):
        if not isinstance(data[name], str):
            bad(name, "must be a string")
    if data["source"] not in ("document", "qa_history"):
        bad("source", f"must be 'document' or 'qa_history', got {data['source']!r}")
    golds = data["gold_answers"]
    if not isinstance(golds, list) or not all(isinstance(g, str) for g in golds):
        bad("gold_answers", "must be a list of strings")
    elif not golds:
        bad("gold_answers", "must be non-empty")
    elif not all(normalize_answer(g) for g in golds):
        bad("gold_answers", "contains an answer that is empty after normalization")
    contexts = data["contexts"]
    if not isinstance(contexts, list) or not all(isinstance(c, str) for c in contexts):
        bad("contexts", "must be a list of strings")
    probs = data["token_probs"]
    if not isinstance(probs, list) or not all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in probs):
        bad("token_probs", "must be a list of numbers")
    elif not all(0.0 < p <= 1.0 for p in probs):
        bad("token_probs", "every value must lie in (0, 1]")
    for name in ("p_true", "p_high", "p_medium"):
        value = data.get(name)
        if value is None:
            continue
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            bad(name, "must be a number")
        elif not 0.0 <= value <= 1.0:
            bad(name, f"must lie in [0, 1], got {value!r}")
    p_high, p_medium = data.get("p_high"), data.get("p_medium")
    if (
        isinstance(p_high, (int, float))
        and isinstance(p_medium, (int, float))
        and p_high + p_medium > 1.0 + _VERBAL_SUM_TOL
    ):
        bad("p_high", f"p_high + p_medium = {p_high + p_medium!r} exceeds 1 beyond tolerance")
    samples = data.get("samples")
    if samples is not None and (
        not isinstance(samples, list) or not all(isinstance(s, str) for s in samples)
    ):
        bad("samples", "must be a list of strings")
    overlap = data.get("question_overlap")
    if overlap is not None and not isinstance(overlap, bool):
        bad("question_overlap", "must be a boolean")
    if not ok:
        return None
    return PredictionRecord(
        id=data["id"],
        question=data["question"],
        gold_answers=list(golds),
        source=KnowledgeSource(data["source"]),
        contexts=list(contexts),
        answer=data["answer"],
        token_probs=[float(p) for p in probs],
        p_true=data.get("p_true"),
        p_high=data.get("p_high"),
        p_medium=data.get("p_medium"),
        samples=list(samples) if samples is not None else None,
        question_overlap=overlap,
    )


def dump_records(records: Iterable[PredictionRecord], path) -> None:
    """Write records in the ingestion format (header line + one record per line)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"version": SCHEMA_VERSION}) + "\n")
        for record in records:
            data = {
                "id": record.id,
                "question": record.question,
                "gold_answers": record.gold_answers,
                "source": record.source.value,
                "contexts": record.contexts,
                "answer": record.answer,
                "token_probs": record.token_probs,
            }
            for name in _OPTIONAL_FIELDS:
                value = getattr(record, name)
                if value is not None:
                    data[name] = value
            fh.write(json.dumps(data, ensure_ascii=False) + "\n")


def pair_records(
    records: Sequence[PredictionRecord],
) -> tuple[list[tuple[PredictionRecord, PredictionRecord]], list[PredictionRecord]]:
    """Join document and QA-history records by question id.

    Returns (pairs sorted by id, unpaired records sorted by id then source).
    Unpaired records are excluded from selection metrics but still usable for
    single-source analysis.
    """
    by_key: dict[tuple[str, KnowledgeSource], PredictionRecord] = {}
    for record in records:
        by_key[(record.id, record.source)] = record
    pairs = []
    unpaired = []
    for qid in sorted({r.id for r in records}):
        doc = by_key.get((qid, KnowledgeSource.DOCUMENT))
        qa = by_key.get((qid, KnowledgeSource.QA_HISTORY))
        if doc is not None and qa is not None:
            pairs.append((doc, qa))
        elif doc is not None:
            unpaired.append(doc)
        else:
            unpaired.append(qa)
    return pairs, unpaired
