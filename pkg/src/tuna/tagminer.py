"""Caption-to-tag mining with a deterministic rule grammar.

Each caption is tokenized, every token gets a context-free word class
(stopword, verb, adjective, noun, other), and two kinds of tags are emitted:

* noun-phrase tags: maximal ``ADJ* NOUN+`` spans, lowercased;
* entity tags: maximal runs of capitalized tokens, casing preserved.

A token belonging to an entity is never part of a noun phrase. Stopwords never
start or end a tag. Tags longer than ``max_tag_len`` characters are dropped.
"""
from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from . import _lexicon
from .errors import EmptyAfterNormalizeError, EmptyTextError

_TOKEN_RE = re.compile(r"[^\W_]+(?:['\-][^\W_]+)*")
_SENTENCE_END = re.compile(r"[.!?]")

STOP, VERB, ADJ, NOUN, OTHER = "stop", "verb", "adj", "noun", "other"

AVERAGING_CONVENTION = (
    "chars_per_tag: mean character length over distinct tags; "
    "tags_per_image: mean tag-set size over all records (empty sets included)"
)


@dataclass(frozen=True)
class MinerConfig:
    max_tag_len: int = 30
    stopwords: frozenset = _lexicon.STOPWORDS
    verbs: frozenset = _lexicon.VERBS
    adjectives: frozenset = _lexicon.ADJECTIVES
    nouns: frozenset = _lexicon.NOUNS
    noun_suffixes: tuple = _lexicon.NOUN_SUFFIXES
    adj_suffixes: tuple = _lexicon.ADJ_SUFFIXES
    other_suffixes: tuple = _lexicon.OTHER_SUFFIXES
    entities: bool = True

    def __post_init__(self):
        if not isinstance(self.max_tag_len, int) or self.max_tag_len < 1:
            raise ValueError(f"max_tag_len must be a positive int, got {self.max_tag_len!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "MinerConfig":
        """Build from JSON-style overrides.

        Recognized keys: ``max_tag_len``, ``entities`` and ``extra_stopwords`` /
        ``extra_verbs`` / ``extra_adjectives`` / ``extra_nouns`` (lists merged
        into the bundled lexicon).
        """
        base = cls()
        kwargs = {}
        if "max_tag_len" in data:
            kwargs["max_tag_len"] = int(data["max_tag_len"])
        if "entities" in data:
            kwargs["entities"] = bool(data["entities"])
        for name in ("stopwords", "verbs", "adjectives", "nouns"):
            extra = data.get("extra_" + name)
            if extra:
                kwargs[name] = getattr(base, name) | frozenset(w.lower() for w in extra)
        return cls(**kwargs)


@dataclass(frozen=True)
class CaptionRecord:
    id: str
    caption: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("caption record id is empty")
        if not self.caption or not self.caption.strip():
            raise EmptyTextError(f"caption for {self.id!r} is empty")


@dataclass(frozen=True)
class CorpusStats:
    unique_tags: int
    chars_per_tag: float
    tags_per_image: float

    def to_dict(self) -> dict:
        return {
            "unique_tags": self.unique_tags,
            "chars_per_tag": self.chars_per_tag,
            "tags_per_image": self.tags_per_image,
            "averaging": AVERAGING_CONVENTION,
        }


@dataclass
class _Token:
    text: str
    start: int
    sentence_initial: bool
    break_before: bool  # punctuation (not just whitespace) separates it from the previous token


def _tokenize(caption: str) -> list[_Token]:
    tokens = []
    prev_end = 0
    for m in _TOKEN_RE.finditer(caption):
        gap = caption[prev_end:m.start()]
        first = not tokens
        tokens.append(
            _Token(
                text=m.group(),
                start=m.start(),
                sentence_initial=first or bool(_SENTENCE_END.search(gap)),
                break_before=not first and gap.strip() != "",
            )
        )
        prev_end = m.end()
    return tokens


def word_class(word: str, config: MinerConfig) -> str:
    """Context-free word class of one token."""
    w = word.lower()
    if w in config.stopwords:
        return STOP
    if w in config.verbs:
        return VERB
    if w in config.adjectives:
        return ADJ
    if w in config.nouns:
        return NOUN
    if any(ch.isdigit() for ch in w):
        return OTHER
    if w.endswith(config.noun_suffixes):
        return NOUN
    if w.endswith(config.adj_suffixes):
        return ADJ
    if w.endswith(config.other_suffixes):
        return OTHER
    return NOUN


def normalize_tag(raw: str, is_entity: bool = False) -> str:
    """Trim, drop control characters, collapse whitespace; lowercase non-entities."""
    cleaned = "".join(ch for ch in raw if unicodedata.category(ch)[0] != "C" or ch.isspace())
    tag = " ".join(cleaned.split())
    if not tag:
        raise EmptyAfterNormalizeError(f"tag {raw!r} is empty after normalization")
    return tag if is_entity else tag.lower()


def _entity_spans(tokens: list[_Token], config: MinerConfig) -> list[tuple[int, int]]:
    """Token index spans ``[i, j)`` of entity runs."""
    spans = []
    i, n = 0, len(tokens)
    while i < n:
        if not tokens[i].text[0].isupper():
            i += 1
            continue
        j = i + 1
        while j < n and tokens[j].text[0].isupper() and not tokens[j].break_before \
                and not tokens[j].sentence_initial:
            j += 1
        whole_caption = i == 0 and j == n
        a, b = i, j
        while a < b and tokens[a].text.lower() in config.stopwords:
            a += 1
        while b > a and tokens[b - 1].text.lower() in config.stopwords:
            b -= 1
        # a lone capitalized word at sentence start carries no evidence of a name
        if b - a == 1 and tokens[a].sentence_initial and not whole_caption:
            a = b
        if a < b:
            spans.append((a, b))
        i = j
    return spans


def extract_entities(caption: str, config: MinerConfig | None = None) -> list[str]:
    if not caption or not caption.strip():
        raise EmptyTextError("caption is empty")
    config = config or MinerConfig()
    tokens = _tokenize(caption)
    return [" ".join(t.text for t in tokens[a:b]) for a, b in _entity_spans(tokens, config)]


def _noun_phrase_spans(tokens, classes, blocked, nouns) -> list[tuple[int, int]]:
    spans = []
    i, n = 0, len(tokens)
    while i < n:
        if blocked[i] or classes[i] not in (ADJ, NOUN):
            i += 1
            continue
        j = i
        while j < n and classes[j] == ADJ and not blocked[j] and (j == i or not tokens[j].break_before):
            j += 1
        k = j
        while k < n and classes[k] == NOUN and not blocked[k] and (k == i or not tokens[k].break_before):
            k += 1
        if k > j:
            spans.append((i, k))
            i = k
        elif tokens[j - 1].text.lower() in nouns:
            # adjective/noun homograph heading the span ("an orange")
            spans.append((i, j))
            i = j
        else:
            # adjectives not followed by a noun; restart after them
            i = max(j, i + 1)
    return spans


def mine_tags(caption: str, config: MinerConfig | None = None) -> list[str]:
    """Tags of one caption in first-occurrence order, deduplicated and length-filtered."""
    if not caption or not caption.strip():
        raise EmptyTextError("caption is empty")
    config = config or MinerConfig()
    tokens = _tokenize(caption)
    classes = [word_class(t.text, config) for t in tokens]
    blocked = [False] * len(tokens)
    found = []
    if config.entities:
        for a, b in _entity_spans(tokens, config):
            for t in range(a, b):
                blocked[t] = True
            found.append((a, True, " ".join(t.text for t in tokens[a:b])))
    for a, b in _noun_phrase_spans(tokens, classes, blocked, config.nouns):
        found.append((a, False, " ".join(t.text for t in tokens[a:b])))
    found.sort(key=lambda item: item[0])

    tags, seen = [], set()
    for _, is_entity, raw in found:
        tag = normalize_tag(raw, is_entity)
        if len(tag) > config.max_tag_len or tag in seen:
            continue
        seen.add(tag)
        tags.append(tag)
    return tags


@dataclass
class StatsAccumulator:
    """Mergeable fold state for :func:`corpus_stats`."""

    distinct: set = field(default_factory=set)
    records: int = 0
    tag_total: int = 0

    def add(self, tags: Iterable[str]) -> None:
        tags = list(tags)
        self.records += 1
        self.tag_total += len(tags)
        self.distinct.update(tags)

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        return StatsAccumulator(
            self.distinct | other.distinct,
            self.records + other.records,
            self.tag_total + other.tag_total,
        )

    def finalize(self) -> CorpusStats:
        unique = len(self.distinct)
        chars = sum(len(t) for t in self.distinct) / unique if unique else 0.0
        per_image = self.tag_total / self.records if self.records else 0.0
        return CorpusStats(unique, chars, per_image)


def corpus_stats(records: Iterable) -> CorpusStats:
    """Stats over ``(CaptionRecord, tags)`` pairs; a bare tag list is accepted too."""
    acc = StatsAccumulator()
    for item in records:
        tags = item[1] if isinstance(item, tuple) else item
        acc.add(tags)
    return acc.finalize()


def read_captions(lines: Iterable[str]) -> Iterator[tuple[int, CaptionRecord]]:
    """Parse caption JSONL, yielding ``(line_number, record)``; blank lines skipped.

    Raises ``ValueError`` whose message names the offending line.
    """
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            yield lineno, CaptionRecord(str(obj["id"]), str(obj["caption"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
