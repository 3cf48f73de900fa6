"""Deterministic table-driven conditional token model.

A :class:`ConditionalTable` maps (prompt, decoded prefix) states to
probability distributions over a small vocabulary. Termination is enforced
by construction: every reachable state one step short of the horizon puts
all its mass on the end-of-sequence token, so decoding always produces a
complete sequence and exhaustive enumeration yields exact probabilities.

Greedy decoding, temperature sampling, and enumeration are pure functions
of (table, inputs, seed); per-record seeds come from :func:`derive_seed`,
a SHA-256 based mix that is stable across platforms and Python versions.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import yaml

from .errors import ModelCoverageError, ValidationError

#: Sampling temperatures below this dispatch to greedy decoding (T -> 0 limit).
GREEDY_TEMPERATURE_FLOOR = 1e-6

_SUM_TOL = 1e-9

State = tuple[str, tuple[str, ...]]


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token inventory with a designated end-of-sequence token.

    The ordering is total and used to break ties deterministically (earliest
    token wins).
    """

    tokens: tuple[str, ...]
    eos: str
    _order: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("vocabulary tokens must be unique")
        if self.eos not in self.tokens:
            raise ValidationError(f"end-of-sequence token {self.eos!r} is not in the vocabulary")
        object.__setattr__(self, "_order", {t: i for i, t in enumerate(self.tokens)})

    def index(self, token: str) -> int:
        try:
            return self._order[token]
        except KeyError:
            raise ValidationError(f"token {token!r} is not in the vocabulary") from None

    def __contains__(self, token: str) -> bool:
        return token in self._order


@dataclass
class DecodedAnswer:
    """A complete decoded sequence with its per-step chosen-token probabilities.

    ``tokens`` always ends with the end-of-sequence token; ``step_probs`` has
    one entry per emitted token (end-of-sequence step included) and records
    the plain table probability even under tempered sampling. ``answer_text``
    is the tokens joined with single spaces, end-of-sequence dropped.
    """

    tokens: list[str]
    step_probs: list[float]
    answer_text: str

    def __post_init__(self):
        if len(self.tokens) != len(self.step_probs):
            raise ValidationError("step_probs must have one entry per token")
        for p in self.step_probs:
            if not 0.0 < p <= 1.0:
                raise ValidationError(f"step probability {p!r} outside (0, 1]")


class ConditionalTable:
    """Finite conditional distribution table P(token | prompt, prefix).

    Construction validates every invariant and raises
    :class:`~selectqa.errors.ValidationError` naming the first offending
    state: distributions sum to one, all reachable states up to ``max_len``
    are covered, and states at depth ``max_len - 1`` put all mass on the
    end-of-sequence token.
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        max_len: int,
        entries: dict[State, dict[str, float]],
        name: str = "model",
    ):
        self.vocabulary = vocabulary
        self.max_len = max_len
        self.entries = dict(entries)
        self.name = name
        self._validate()

    def prompts(self) -> list[str]:
        return sorted({prompt for prompt, _ in self.entries})

    def distribution(self, prompt: str, prefix: Sequence[str]) -> dict[str, float]:
        key = (prompt, tuple(prefix))
        try:
            return self.entries[key]
        except KeyError:
            raise ModelCoverageError(
                f"model {self.name!r}: no distribution for prompt={prompt!r}, "
                f"prefix={list(prefix)!r}"
            ) from None

    def _validate(self):
        if self.max_len < 1:
            raise ValidationError(f"model {self.name!r}: max_len must be >= 1")
        eos = self.vocabulary.eos
        for (prompt, prefix), dist in self.entries.items():
            state = f"model {self.name!r}, prompt={prompt!r}, prefix={list(prefix)!r}"
            if eos in prefix:
                raise ValidationError(f"{state}: prefix contains the end-of-sequence token")
            if len(prefix) >= self.max_len:
                raise ValidationError(f"{state}: prefix length exceeds max_len - 1")
            for token in prefix:
                if token not in self.vocabulary:
                    raise ValidationError(f"{state}: prefix token {token!r} not in vocabulary")
            if not dist:
                raise ValidationError(f"{state}: empty distribution")
            for token, p in dist.items():
                if token not in self.vocabulary:
                    raise ValidationError(f"{state}: distribution token {token!r} not in vocabulary")
                if not isinstance(p, (int, float)) or math.isnan(p) or p < 0:
                    raise ValidationError(f"{state}: probability of {token!r} is {p!r}, must be >= 0")
            total = sum(dist.values())
            if abs(total - 1.0) > _SUM_TOL:
                raise ValidationError(f"{state}: distribution sums to {total!r}, not 1")
        for prompt in {prompt for prompt, _ in self.entries}:
            self._check_reachable(prompt)

    def _check_reachable(self, prompt: str):
        # Walk every positive-probability path; each non-terminal state needs an
        # entry, and the horizon step must be forced to end-of-sequence.
        eos = self.vocabulary.eos
        stack: list[tuple[str, ...]] = [()]
        while stack:
            prefix = stack.pop()
            state = f"model {self.name!r}, prompt={prompt!r}, prefix={list(prefix)!r}"
            dist = self.entries.get((prompt, prefix))
            if dist is None:
                raise ValidationError(f"{state}: reachable state has no distribution")
            at_horizon = len(prefix) == self.max_len - 1
            for token, p in dist.items():
                if p <= 0:
                    continue
                if at_horizon and token != eos:
                    raise ValidationError(
                        f"{state}: mass on {token!r} at the final step; "
                        f"all mass must be on {eos!r}"
                    )
                if token != eos:
                    stack.append(prefix + (token,))


def greedy_decode(model: ConditionalTable, prompt: str, max_len: int | None = None) -> DecodedAnswer:
    """Decode by picking the maximum-probability token at every step.

    Ties break toward the earliest token in vocabulary order. Stops at the
    end-of-sequence token or ``max_len`` (defaults to the model horizon);
    hitting the cap without end-of-sequence is a coverage error, which cannot
    happen for a validated table decoded at its own horizon.
    """
    limit = _decode_limit(model, max_len)
    eos = model.vocabulary.eos
    tokens: list[str] = []
    probs: list[float] = []
    prefix: tuple[str, ...] = ()
    for _ in range(limit):
        dist = model.distribution(prompt, prefix)
        best = max(dist.values())
        token = min((t for t, p in dist.items() if p == best), key=model.vocabulary.index)
        tokens.append(token)
        probs.append(dist[token])
        if token == eos:
            return _finish(tokens, probs)
        prefix = prefix + (token,)
    raise ModelCoverageError(
        f"model {model.name!r}: prompt {prompt!r} produced no end-of-sequence "
        f"within {limit} steps (tokens so far: {tokens!r})"
    )


def sample_decode(
    model: ConditionalTable,
    prompt: str,
    seed: int,
    temperature: float = 1.0,
    max_len: int | None = None,
) -> DecodedAnswer:
    """Sample a complete sequence; deterministic given (model, prompt, seed, temperature).

    Tokens are drawn with probability proportional to ``p ** (1 / temperature)``
    over the positive-probability support, renormalized. ``step_probs`` record
    the un-tempered table probability of each chosen token. Temperatures below
    :data:`GREEDY_TEMPERATURE_FLOOR` dispatch to :func:`greedy_decode`.
    """
    if temperature <= 0:
        raise ValidationError(f"temperature must be positive, got {temperature!r}")
    if temperature < GREEDY_TEMPERATURE_FLOOR:
        return greedy_decode(model, prompt, max_len)
    limit = _decode_limit(model, max_len)
    eos = model.vocabulary.eos
    rng = random.Random(seed)
    tokens: list[str] = []
    probs: list[float] = []
    prefix: tuple[str, ...] = ()
    for _ in range(limit):
        dist = model.distribution(prompt, prefix)
        # Iterate the support in vocabulary order so the draw does not depend
        # on dict insertion order.
        support = sorted((t for t, p in dist.items() if p > 0), key=model.vocabulary.index)
        weights = [dist[t] ** (1.0 / temperature) for t in support]
        total = sum(weights)
        u = rng.random() * total
        token = support[-1]
        acc = 0.0
        for candidate, w in zip(support, weights):
            acc += w
            if u < acc:
                token = candidate
                break
        tokens.append(token)
        probs.append(dist[token])
        if token == eos:
            return _finish(tokens, probs)
        prefix = prefix + (token,)
    raise ModelCoverageError(
        f"model {model.name!r}: prompt {prompt!r} produced no end-of-sequence "
        f"within {limit} steps (tokens so far: {tokens!r})"
    )


def enumerate_outputs(
    model: ConditionalTable, prompt: str, max_len: int | None = None
) -> list[tuple[str, float]]:
    """Exhaustively enumerate complete sequences with exact path probabilities.

    Entries with identical answer text are merged by summing; the result is
    sorted by descending probability, ties by answer text. Total mass is 1 up
    to float rounding.
    """
    limit = _decode_limit(model, max_len)
    eos = model.vocabulary.eos
    merged: dict[str, float] = {}

    def walk(prefix: tuple[str, ...], path_prob: float):
        dist = model.distribution(prompt, prefix)
        for token in sorted(dist, key=model.vocabulary.index):
            p = dist[token]
            if p <= 0:
                continue
            if token == eos:
                text = " ".join(prefix)
                merged[text] = merged.get(text, 0.0) + path_prob * p
            elif len(prefix) + 1 < limit:
                walk(prefix + (token,), path_prob * p)
            else:
                raise ModelCoverageError(
                    f"model {model.name!r}: prompt {prompt!r} has mass beyond "
                    f"{limit} steps at prefix {list(prefix + (token,))!r}"
                )

    walk((), 1.0)
    return sorted(merged.items(), key=lambda item: (-item[1], item[0]))


def derive_seed(*parts) -> int:
    """Mix arbitrary parts (global seed, record id, draw index) into a 64-bit seed.

    Hash-based so the result is identical across platforms and Python runs,
    unlike the builtin ``hash``.
    """
    text = "\x1f".join(str(part) for part in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _decode_limit(model: ConditionalTable, max_len: int | None) -> int:
    limit = model.max_len if max_len is None else max_len
    if limit < 1:
        raise ValidationError(f"max_len must be >= 1, got {limit!r}")
    return limit


def _finish(tokens: list[str], probs: list[float]) -> DecodedAnswer:
    return DecodedAnswer(tokens, probs, " ".join(tokens[:-1]))


# --- fixture files ---------------------------------------------------------

_MODEL_KEYS = {"name", "vocabulary", "eos", "max_len", "entries"}
_ENTRY_KEYS = {"prompt", "prefix", "distribution"}


def parse_model(doc: dict, origin: str = "<memory>") -> ConditionalTable:
    """Build a validated :class:`ConditionalTable` from one fixture document."""
    if not isinstance(doc, dict):
        raise ValidationError(f"{origin}: model document must be a mapping")
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ValidationError(f"{origin}: unknown model keys {sorted(unknown)}")
    missing = _MODEL_KEYS - {"name"} - set(doc)
    if missing:
        raise ValidationError(f"{origin}: missing model keys {sorted(missing)}")
    name = doc.get("name", "model")
    tokens = doc["vocabulary"]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise ValidationError(f"{origin}: vocabulary must be a list of strings")
    vocabulary = Vocabulary(tuple(tokens), doc["eos"])
    max_len = doc["max_len"]
    if not isinstance(max_len, int):
        raise ValidationError(f"{origin}: max_len must be an integer")
    entries: dict[State, dict[str, float]] = {}
    for i, entry in enumerate(doc["entries"]):
        where = f"{origin}: entry {i}"
        if not isinstance(entry, dict) or set(entry) != _ENTRY_KEYS:
            raise ValidationError(f"{where}: expected keys {sorted(_ENTRY_KEYS)}")
        prefix = entry["prefix"]
        if not isinstance(prefix, list):
            raise ValidationError(f"{where}: prefix must be a list of tokens")
        key = (entry["prompt"], tuple(prefix))
        if key in entries:
            raise ValidationError(
                f"{where}: duplicate state prompt={key[0]!r}, prefix={list(key[1])!r}"
            )
        dist = entry["distribution"]
        if not isinstance(dist, dict):
            raise ValidationError(f"{where}: distribution must be a token -> probability mapping")
        entries[key] = {t: float(p) for t, p in dist.items()}
    return ConditionalTable(vocabulary, max_len, entries, name=name)


def load_models(path) -> dict[str, ConditionalTable]:
    """Load every model from a YAML fixture file (one document per model).

    Validation stops at the first violation, reporting the offending state.
    """
    with open(path, "r", encoding="utf-8") as fh:
        docs = [d for d in yaml.safe_load_all(fh) if d is not None]
    if not docs:
        raise ValidationError(f"{path}: no model documents found")
    models: dict[str, ConditionalTable] = {}
    for i, doc in enumerate(docs):
        model = parse_model(doc, origin=f"{path}, document {i}")
        if model.name in models:
            raise ValidationError(f"{path}: duplicate model name {model.name!r}")
        models[model.name] = model
    return models


def dump_models(models: Iterable[ConditionalTable], path) -> None:
    """Write models to a YAML fixture file, one document per model."""
    docs = []
    for model in models:
        docs.append(
            {
                "name": model.name,
                "vocabulary": list(model.vocabulary.tokens),
                "eos": model.vocabulary.eos,
                "max_len": model.max_len,
                "entries": [
                    {"prompt": prompt, "prefix": list(prefix), "distribution": dict(dist)}
                    for (prompt, prefix), dist in sorted(model.entries.items())
                ],
            }
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump_all(docs, fh, sort_keys=False, allow_unicode=True)
