"""Beam search and the two-pass document translation protocol.

Hypotheses are ranked by total log-probability with no length
normalization; exact ties fall back to the lexicographically smaller
token-id sequence, which makes decoding a deterministic total order.
A hypothesis that produces EOS keeps its beam slot with its final score
and stops expanding, so only candidates that survive selection can ever
be returned. When the length budget runs out, still-unfinished
hypotheses compete with their raw scores.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bpe import EOS_ID
from .model import BaseModel, Cadec


@dataclass(frozen=True)
class Hypothesis:
    ids: tuple[int, ...]
    score: float
    finished: bool

    def __post_init__(self):
        if self.finished != (bool(self.ids) and self.ids[-1] == EOS_ID):
            raise ValueError("finished must hold exactly when the sequence ends with EOS")

    @property
    def content(self) -> list[int]:
        return list(self.ids[:-1] if self.finished else self.ids)

    def sort_key(self) -> tuple[float, tuple[int, ...]]:
        return (-self.score, self.ids)


def beam_search(step_fn, beam_size: int, max_len: int) -> Hypothesis:
    """Best hypothesis under ``step_fn`` (prefix list -> [n, V] next-token
    log-probs). Content length is capped at max_len - 1 so a terminating
    EOS always fits within max_len positions."""
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")

    def done(ids: tuple[int, ...]) -> bool:
        return bool(ids) and ids[-1] == EOS_ID

    beam: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    for _ in range(max_len - 1):
        growing = [(score, ids) for score, ids in beam if not done(ids)]
        if not growing:
            break
        log_probs = step_fn([list(ids) for _, ids in growing])
        candidates = [(score, ids) for score, ids in beam if done(ids)]
        for (score, ids), row in zip(growing, log_probs):
            for token, lp in enumerate(row):
                candidates.append((score + float(lp), ids + (token,)))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        beam = candidates[:beam_size]
    score, ids = min(beam, key=lambda c: (-c[0], c[1]))
    return Hypothesis(ids, score, done(ids))


def translate_sentence(base: BaseModel, src: list[int], beam_size: int = 4) -> list[int]:
    """Context-agnostic translation of one source (content ids in and out)."""
    return beam_search(base.step_scorer(src), beam_size, base.cfg.max_len).content


def translate_document(
    base: BaseModel, cadec: Cadec, srcs: list[list[int]], beam_size: int = 4
) -> list[list[int]]:
    """Two-pass translation of an in-order sentence group.

    The first sentence has no context and keeps its base translation. Every
    later sentence gets a base first pass, then a second-pass rewrite
    conditioned on up to max_context previous sources and the final
    translations already produced for them.
    """
    max_len = base.cfg.max_len
    outputs: list[list[int]] = []
    for j, src in enumerate(srcs):
        first = beam_search(base.step_scorer(src), beam_size, max_len).content
        if j == 0:
            outputs.append(first)
            continue
        k = min(j, cadec.cfg.max_context)
        ctx_srcs = [srcs[j - d] for d in range(1, k + 1)]
        ctx_tgts = [outputs[j - d] for d in range(1, k + 1)]
        step = cadec.step_scorer([src, *ctx_srcs], first, ctx_tgts)
        outputs.append(beam_search(step, beam_size, max_len).content)
    return outputs
