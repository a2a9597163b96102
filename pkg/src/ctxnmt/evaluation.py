"""Corpus BLEU and the contrastive consistency evaluation protocol.

BLEU follows the classic multi-bleu script: corpus-level modified 1-4-gram
precisions, geometric mean, multiplicative brevity penalty, no smoothing
(any zero n-gram precision zeroes the score), whitespace tokenization, and
an optional lowercasing flag. Scores live on the 0-100 scale.

Consistency accuracy is the proportion of instances whose true candidate
scores strictly higher than every contrastive candidate; ties count as
failures. Scorers are callables ``scorer(instance, group) -> float`` where
``group`` is a candidate list of target sentences.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable

from .bpe import BpeModel
from .data import ContrastiveInstance
from .decoding import beam_search
from .model import BaseModel, Cadec, pad_batch, with_eos
from .tensor import no_grad

Scorer = Callable[[ContrastiveInstance, list[str]], float]


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class BleuResult:
    score: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    candidate_length: int
    reference_length: int


def bleu_details(
    candidates: list[str], references: list[str], lowercase: bool = False
) -> BleuResult:
    if len(candidates) != len(references):
        raise ValueError(
            f"candidate/reference line counts differ: {len(candidates)} vs {len(references)}"
        )
    if not candidates:
        raise ValueError("cannot score an empty corpus")
    matched = [0] * 4
    total = [0] * 4
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        if lowercase:
            cand, ref = cand.lower(), ref.lower()
        c_tokens, r_tokens = cand.split(), ref.split()
        cand_len += len(c_tokens)
        ref_len += len(r_tokens)
        for n in range(1, 5):
            c_counts = _ngrams(c_tokens, n)
            r_counts = _ngrams(r_tokens, n)
            total[n - 1] += max(len(c_tokens) - n + 1, 0)
            matched[n - 1] += sum(min(count, r_counts[gram]) for gram, count in c_counts.items())
    precisions = tuple(m / t if t else 0.0 for m, t in zip(matched, total))
    if cand_len == 0 or ref_len == 0:
        return BleuResult(0.0, precisions, 0.0, cand_len, ref_len)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    if any(p == 0.0 for p in precisions):
        return BleuResult(0.0, precisions, bp, cand_len, ref_len)
    log_mean = sum(math.log(p) for p in precisions) / 4.0
    return BleuResult(100.0 * bp * math.exp(log_mean), precisions, bp, cand_len, ref_len)


def bleu(candidates: list[str], references: list[str], lowercase: bool = False) -> float:
    return bleu_details(candidates, references, lowercase).score


def forced_score_base(base: BaseModel, src: list[int], tgt: list[int]) -> float:
    """Unnormalized sum of token log-probabilities (EOS included) of a
    forced decoding of ``tgt`` given ``src`` (both content ids)."""
    seq = with_eos(tgt)
    with no_grad():
        lp = base.forward(pad_batch([with_eos(src)]), pad_batch([seq])).data[0]
    return float(sum(lp[t, tok] for t, tok in enumerate(seq)))


def forced_score_cadec(
    cadec: Cadec, srcs: list[list[int]], first_pass: list[int], ctx_tgts: list[list[int]], tgt: list[int]
) -> float:
    seq = with_eos(tgt)
    with no_grad():
        lp = cadec.forward(srcs, first_pass, ctx_tgts, tgt).data
    return float(sum(lp[t, tok] for t, tok in enumerate(seq)))


def make_base_scorer(base: BaseModel, src_bpe: BpeModel, tgt_bpe: BpeModel) -> Scorer:
    """Context-agnostic candidate scorer: force-decodes only the final
    sentence of the group, ignoring all context."""

    def scorer(instance: ContrastiveInstance, group: list[str]) -> float:
        return forced_score_base(base, src_bpe.encode(instance.src[-1]), tgt_bpe.encode(group[-1]))

    return scorer


def make_cadec_scorer(
    base: BaseModel, cadec: Cadec, src_bpe: BpeModel, tgt_bpe: BpeModel, beam_size: int = 4
) -> Scorer:
    """Two-pass candidate scorer. The final sentence's candidate is force-
    decoded with the group's own context translations as context; the
    first-pass input is the base model's beam translation of the current
    source (cached per source across candidates)."""
    first_passes: dict[tuple[int, ...], list[int]] = {}

    def scorer(instance: ContrastiveInstance, group: list[str]) -> float:
        n_ctx = min(len(instance.src) - 1, cadec.cfg.max_context)
        current = src_bpe.encode(instance.src[-1])
        srcs = [current] + [src_bpe.encode(instance.src[-1 - k]) for k in range(1, n_ctx + 1)]
        ctx_tgts = [tgt_bpe.encode(group[-1 - k]) for k in range(1, n_ctx + 1)]
        key = tuple(current)
        if key not in first_passes:
            first_passes[key] = beam_search(base.step_scorer(current), beam_size, base.cfg.max_len).content
        return forced_score_cadec(cadec, srcs, first_passes[key], ctx_tgts, tgt_bpe.encode(group[-1]))

    return scorer


@dataclass
class ConsistencyReport:
    """Accuracy of a scorer on one phenomenon's contrastive instances."""

    phenomenon: str
    total: int
    correct: int
    by_distance: dict[int | None, tuple[int, int]]  # distance -> (correct, total)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def distance_accuracy(self, distance: int | None) -> float | None:
        if distance not in self.by_distance:
            return None
        correct, total = self.by_distance[distance]
        return correct / total if total else None


def evaluate_consistency(
    scorer: Scorer, instances: Iterable[ContrastiveInstance]
) -> ConsistencyReport:
    """Accuracy of ``scorer``: the true group must strictly outscore every
    contrastive group of an instance for it to count as correct."""
    instances = list(instances)
    if not instances:
        raise ValueError("cannot evaluate an empty instance list")
    phenomena = {i.phenomenon for i in instances}
    phenomenon = phenomena.pop() if len(phenomena) == 1 else "mixed"
    total = correct = 0
    by_distance: dict[int | None, list[int]] = {}
    for inst in instances:
        true_score = scorer(inst, inst.true_tgt)
        ok = all(true_score > scorer(inst, group) for group in inst.contrastive_tgts)
        total += 1
        correct += ok
        bucket = by_distance.setdefault(inst.latest_relevant_distance, [0, 0])
        bucket[0] += ok
        bucket[1] += 1
    return ConsistencyReport(
        phenomenon=phenomenon,
        total=total,
        correct=correct,
        by_distance={d: (c, t) for d, (c, t) in sorted(by_distance.items(), key=lambda kv: (kv[0] is None, kv[0]))},
    )


def evaluate_by_phenomenon(
    scorer: Scorer, instances: Iterable[ContrastiveInstance]
) -> dict[str, ConsistencyReport]:
    groups: dict[str, list[ContrastiveInstance]] = {}
    for inst in instances:
        groups.setdefault(inst.phenomenon, []).append(inst)
    return {ph: evaluate_consistency(scorer, insts) for ph, insts in groups.items()}


def report_tsv(reports: Iterable[ConsistencyReport]) -> str:
    """TSV rows: phenomenon, bucket (total or a distance), accuracy, count."""
    lines = ["phenomenon\tbucket\taccuracy\tcount"]
    for report in reports:
        lines.append(f"{report.phenomenon}\ttotal\t{100.0 * report.accuracy:.1f}\t{report.total}")
        for distance, (c, t) in report.by_distance.items():
            bucket = "na" if distance is None else str(distance)
            lines.append(f"{report.phenomenon}\t{bucket}\t{100.0 * c / t:.1f}\t{t}")
    return "\n".join(lines) + "\n"


def format_report_table(reports: Iterable[ConsistencyReport]) -> str:
    """Aligned text table with total accuracy and the 1st/2nd/3rd distance
    buckets, mirroring the usual presentation of these test suites."""
    header = f"{'phenomenon':<14} {'total':>7} {'1st':>7} {'2nd':>7} {'3rd':>7} {'n':>6}"
    rows = [header, "-" * len(header)]
    for report in reports:
        cells = [f"{report.phenomenon:<14}", f"{100.0 * report.accuracy:>7.1f}"]
        for distance in (1, 2, 3):
            acc = report.distance_accuracy(distance)
            cells.append(f"{'-':>7}" if acc is None else f"{100.0 * acc:>7.1f}")
        cells.append(f"{report.total:>6}")
        rows.append(" ".join(cells))
    return "\n".join(rows) + "\n"
