"""Prompt-layout assembly: retrieval, tag pooling, encoding, weighting, ordering.

A layout is the token-slot sequence handed to the language model::

    [image_grid x H*W] [tag_image_token, tag_text_token x T]* [instruction_token]*

Tag groups are ordered by descending weight, ties broken by tag string, except
in ``no_tuner`` mode where every weight is 1 and the pooled order is kept.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .datastore import DEFAULT_K, QueryHit, search
from .embedder import EncoderSpec, SeededStream, stub_image_embed
from .errors import EmptyTextError, MissingCaptionError
from .tag_encoder import TagEncoder, TagTuple, tune_weights

IMAGE_GRID = "image_grid"
TAG_IMAGE_TOKEN = "tag_image_token"
TAG_TEXT_TOKEN = "tag_text_token"
INSTRUCTION_TOKEN = "instruction_token"


class AblationMode(str, Enum):
    FULL = "full"
    NO_TUNER = "no_tuner"
    NO_TAGS = "no_tags"
    RANDOM_TAGS = "random_tags"
    CAPTIONS = "captions"

    @classmethod
    def parse(cls, value) -> "AblationMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).replace("-", "_"))


@dataclass
class RetrievalPool:
    hits: list[QueryHit] = field(default_factory=list)
    tags: list[str] = field(default_factory=list)
    source_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tags": list(self.tags), "source_counts": dict(self.source_counts)}


def pool_tags(tag_lists) -> tuple[list[str], dict[str, int]]:
    """Concatenate in order, keep first occurrences, count contributing lists per tag."""
    pooled, counts = [], {}
    for tags in tag_lists:
        for t in dict.fromkeys(tags):
            if t not in counts:
                pooled.append(t)
                counts[t] = 0
            counts[t] += 1
    return pooled, counts


def retrieve_tag_pool(cls_vec, store, k: int = DEFAULT_K, exclude_id: str | None = None,
                      nprobe: int | None = None) -> RetrievalPool:
    hits = search(store, cls_vec, k, nprobe=nprobe, exclude_id=exclude_id)
    tags, counts = pool_tags(h.tags for h in hits)
    return RetrievalPool(hits, tags, counts)


@dataclass
class Segment:
    kind: str
    payload: np.ndarray
    tag: str | None = None
    weight: float | None = None
    token: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tag": self.tag,
            "token": self.token,
            "weight": self.weight,
            "dim": int(self.payload.shape[0]),
            "values": self.payload.tolist(),
        }


@dataclass
class PromptLayout:
    mode: AblationMode
    segments: list[Segment]
    pool: RetrievalPool
    tuples: list[TagTuple] = field(default_factory=list)

    def tag_segments(self) -> list[Segment]:
        return [s for s in self.segments if s.kind in (TAG_IMAGE_TOKEN, TAG_TEXT_TOKEN)]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "segments": [s.to_dict() for s in self.segments],
            "pool": self.pool.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def weights_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tag", "raw_score", "weight"])
        for t in self.tuples:
            w.writerow([t.tag, f"{t.raw_score:.8f}", f"{t.weight:.8f}"])
        return buf.getvalue()


def _random_pool(store, count: int, seed: int) -> list[str]:
    vocab = store.vocabulary()
    return [vocab[i] for i in SeededStream(seed, "random-tags").sample(len(vocab), count)]


def _caption_pool(hits: list[QueryHit], store) -> list[str]:
    flat = store.flat
    missing, captions = [], []
    for h in hits:
        cap = flat.captions[flat.position(h.image_id)]
        if cap is None or not cap.strip():
            missing.append(h.image_id)
        else:
            captions.append(cap)
    if missing:
        raise MissingCaptionError(missing)
    return list(dict.fromkeys(captions))


def assemble(image_id: str, instruction: str, store, mode="full",
             encoder: TagEncoder | EncoderSpec | None = None, seed: int = 0,
             k: int = DEFAULT_K, exclude_id: str | None = None,
             nprobe: int | None = None) -> PromptLayout:
    if not instruction or not instruction.strip():
        raise EmptyTextError("instruction is empty")
    mode = AblationMode.parse(mode)
    if not isinstance(encoder, TagEncoder):
        encoder = TagEncoder(encoder or EncoderSpec())

    grid, cls_vec = stub_image_embed(image_id, encoder.spec)
    segments = [Segment(IMAGE_GRID, row) for row in encoder.image_tokens(grid)]

    pool = RetrievalPool()
    tuples: list[TagTuple] = []
    if mode is not AblationMode.NO_TAGS:
        pool = retrieve_tag_pool(cls_vec, store, k, exclude_id, nprobe)
        if mode is AblationMode.RANDOM_TAGS:
            texts = _random_pool(store, len(pool.tags), seed)
        elif mode is AblationMode.CAPTIONS:
            texts = _caption_pool(pool.hits, store)
        else:
            texts = pool.tags
        tuples = [encoder.encode(t, grid, cls_vec)[0] for t in texts]
        if tuples:
            if mode is AblationMode.NO_TUNER:
                weights = [1.0] * len(tuples)
            else:
                weights = tune_weights([t.raw_score for t in tuples])
            for t, w in zip(tuples, weights):
                t.weight = w
            if mode is not AblationMode.NO_TUNER:
                tuples.sort(key=lambda t: (-t.weight, t.tag))
        if mode in (AblationMode.RANDOM_TAGS, AblationMode.CAPTIONS):
            counts = pool.source_counts
            pool = RetrievalPool(pool.hits, list(texts), {t: counts[t] for t in texts if t in counts})

    for t in tuples:
        img_tok, txt_toks = t.weighted()
        segments.append(Segment(TAG_IMAGE_TOKEN, img_tok, tag=t.tag, weight=t.weight))
        for tok, row in zip(t.tokens, txt_toks):
            segments.append(Segment(TAG_TEXT_TOKEN, row, tag=t.tag, weight=t.weight, token=tok))

    tokens, inst = encoder.embed_tokens(instruction)
    segments.extend(Segment(INSTRUCTION_TOKEN, row, token=tok) for tok, row in zip(tokens, inst))
    return PromptLayout(mode, segments, pool, tuples)
