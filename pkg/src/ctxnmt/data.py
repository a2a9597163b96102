"""Parallel-corpus types, context fragmenting, and on-disk formats.

A corpus is a TSV of subtitle-style sentence pairs with start/end times and
an alignment-overlap score. Consecutive pairs whose start times are close
form runs; sliding 4-sentence windows over a run become training fragments
(up to three context sentences plus the current one). Contrastive test sets
live in a blank-line-separated block format, one instance per block.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

PHENOMENA = ("deixis", "lex_cohesion", "ellipsis_infl", "ellipsis_vp")


@dataclass(frozen=True)
class SubtitlePair:
    """One aligned sentence pair with timing and alignment quality."""

    src: str
    tgt: str
    start: float
    end: float
    overlap: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError(f"overlap must be in [0, 1], got {self.overlap}")
        if self.end < self.start:
            raise ValueError(f"end {self.end} precedes start {self.start}")


@dataclass(frozen=True)
class Fragment:
    """Up to three context pairs (oldest first) plus the current pair."""

    context: tuple[SubtitlePair, ...]
    current: SubtitlePair

    def __post_init__(self) -> None:
        if len(self.context) > 3:
            raise ValueError(f"at most 3 context pairs allowed, got {len(self.context)}")
        starts = [p.start for p in self.context] + [self.current.start]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValueError("fragment timestamps must be nondecreasing")

    @property
    def pairs(self) -> tuple[SubtitlePair, ...]:
        return self.context + (self.current,)


@dataclass
class ContrastiveInstance:
    """A true translation group plus contrastive groups sharing its sources.

    ``latest_relevant_distance`` is how many sentences back the nearest
    context sentence revealing the phenomenon sits (1-3), or None when the
    notion does not apply (target-only ellipsis instances).
    """

    phenomenon: str
    src: list[str]
    true_tgt: list[str]
    contrastive_tgts: list[list[str]]
    latest_relevant_distance: int | None = None

    def __post_init__(self) -> None:
        if self.phenomenon not in PHENOMENA:
            raise ValueError(f"unknown phenomenon {self.phenomenon!r}")
        if not 1 <= len(self.src) <= 4:
            raise ValueError(f"instances carry 1-4 sentences, got {len(self.src)}")
        if len(self.true_tgt) != len(self.src):
            raise ValueError("true translation group must match the source sentence count")
        if not self.contrastive_tgts:
            raise ValueError("at least one contrastive group is required")
        for group in self.contrastive_tgts:
            if len(group) != len(self.src):
                raise ValueError("contrastive groups must match the source sentence count")
            if group == self.true_tgt:
                raise ValueError("contrastive group identical to the true group")
        if self.latest_relevant_distance is not None and not (
            1 <= self.latest_relevant_distance <= 3
        ):
            raise ValueError(
                f"latest_relevant_distance must be 1-3 or None, got {self.latest_relevant_distance}"
            )


def filter_pairs(pairs: list[SubtitlePair], min_overlap: float = 0.9) -> list[SubtitlePair]:
    """Keep pairs whose alignment overlap is at least ``min_overlap`` (inclusive)."""
    return [p for p in pairs if p.overlap >= min_overlap]


def split_runs(pairs: list[SubtitlePair], max_gap: float = 7.0) -> list[list[SubtitlePair]]:
    """Split into runs of consecutive pairs; a new run starts whenever the
    start-time gap to the previous pair exceeds ``max_gap`` seconds."""
    for a, b in zip(pairs, pairs[1:]):
        if b.start < a.start:
            raise ValueError("pairs must be ordered by nondecreasing start time")
    runs: list[list[SubtitlePair]] = []
    for pair in pairs:
        if runs and pair.start - runs[-1][-1].start <= max_gap:
            runs[-1].append(pair)
        else:
            runs.append([pair])
    return runs


def fragment_runs(
    runs: list[list[SubtitlePair]],
    window: int = 4,
    include_short_prefixes: bool = False,
) -> list[Fragment]:
    """Sliding ``window``-sentence fragments per run, oldest context first.

    A run of n >= window sentences yields n - window + 1 fragments. With
    ``include_short_prefixes`` the two short run-initial fragments (first two
    and first three sentences) are emitted as well, giving second-pass
    training data with less context.
    """
    fragments: list[Fragment] = []
    for run in runs:
        if include_short_prefixes:
            for size in (2, 3):
                if len(run) >= size and size < window:
                    fragments.append(Fragment(tuple(run[: size - 1]), run[size - 1]))
        for i in range(len(run) - window + 1):
            chunk = run[i : i + window]
            fragments.append(Fragment(tuple(chunk[:-1]), chunk[-1]))
    return fragments


def group_and_fragment(
    pairs: list[SubtitlePair],
    max_gap: float = 7.0,
    window: int = 4,
    include_short_prefixes: bool = False,
) -> list[Fragment]:
    return fragment_runs(split_runs(pairs, max_gap), window, include_short_prefixes)


def concat_fragment_pairs(fragment: Fragment, sep: str = "<sep>") -> tuple[str, str]:
    """SEP-joined source and target texts (data transform for concatenation
    baselines; no training recipe is attached to it here)."""
    src = f" {sep} ".join(p.src for p in fragment.pairs)
    tgt = f" {sep} ".join(p.tgt for p in fragment.pairs)
    return src, tgt


def save_corpus(path: str | os.PathLike, pairs: list[SubtitlePair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            if "\t" in p.src or "\t" in p.tgt:
                raise ValueError("corpus sentences must not contain tabs")
            fh.write(f"{p.src}\t{p.tgt}\t{p.start:g}\t{p.end:g}\t{p.overlap:g}\n")


def load_corpus(path: str | os.PathLike) -> list[SubtitlePair]:
    pairs: list[SubtitlePair] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
            src, tgt, start, end, overlap = parts
            try:
                pairs.append(SubtitlePair(src, tgt, float(start), float(end), float(overlap)))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return pairs


class TestsetFormatError(ValueError):
    __test__ = False  # keep pytest from collecting this as a test class


def save_testset(path: str | os.PathLike, instances: list[ContrastiveInstance]) -> None:
    """Block format: a header comment, source lines ``S<i>``, true-group lines
    ``T<i>``, and contrastive lines ``C<k>.<i>``; blank line between blocks."""
    with open(path, "w", encoding="utf-8") as fh:
        for n, inst in enumerate(instances):
            if n:
                fh.write("\n")
            distance = "na" if inst.latest_relevant_distance is None else str(inst.latest_relevant_distance)
            fh.write(f"# phenomenon={inst.phenomenon} distance={distance}\n")
            for i, sent in enumerate(inst.src, 1):
                fh.write(f"S{i} {sent}\n")
            for i, sent in enumerate(inst.true_tgt, 1):
                fh.write(f"T{i} {sent}\n")
            for k, group in enumerate(inst.contrastive_tgts, 1):
                for i, sent in enumerate(group, 1):
                    fh.write(f"C{k}.{i} {sent}\n")


def _parse_block(path, start_line: int, lines: list[str]) -> ContrastiveInstance:
    header = lines[0]
    if not header.startswith("# "):
        raise TestsetFormatError(f"{path}:{start_line}: block must start with a '# ' header")
    fields = dict(part.split("=", 1) for part in header[2:].split() if "=" in part)
    if "phenomenon" not in fields or "distance" not in fields:
        raise TestsetFormatError(f"{path}:{start_line}: header needs phenomenon= and distance=")
    distance = None if fields["distance"] == "na" else int(fields["distance"])

    src: dict[int, str] = {}
    true_tgt: dict[int, str] = {}
    contrastive: dict[int, dict[int, str]] = {}
    for offset, line in enumerate(lines[1:], 1):
        lineno = start_line + offset
        tag, _, text = line.partition(" ")
        if not _:
            raise TestsetFormatError(f"{path}:{lineno}: missing text after tag {tag!r}")
        if tag.startswith("S") and tag[1:].isdigit():
            src[int(tag[1:])] = text
        elif tag.startswith("T") and tag[1:].isdigit():
            true_tgt[int(tag[1:])] = text
        elif tag.startswith("C") and "." in tag:
            k_str, _, i_str = tag[1:].partition(".")
            if not (k_str.isdigit() and i_str.isdigit()):
                raise TestsetFormatError(f"{path}:{lineno}: malformed contrastive tag {tag!r}")
            contrastive.setdefault(int(k_str), {})[int(i_str)] = text
        else:
            raise TestsetFormatError(f"{path}:{lineno}: unrecognized tag {tag!r}")

    def ordered(d: dict[int, str], what: str) -> list[str]:
        if sorted(d) != list(range(1, len(d) + 1)):
            raise TestsetFormatError(f"{path}:{start_line}: {what} indices not contiguous from 1")
        return [d[i] for i in sorted(d)]

    groups = []
    if sorted(contrastive) != list(range(1, len(contrastive) + 1)):
        raise TestsetFormatError(f"{path}:{start_line}: contrastive group indices not contiguous")
    for k in sorted(contrastive):
        groups.append(ordered(contrastive[k], f"contrastive group {k}"))
    try:
        return ContrastiveInstance(
            phenomenon=fields["phenomenon"],
            src=ordered(src, "source"),
            true_tgt=ordered(true_tgt, "true group"),
            contrastive_tgts=groups,
            latest_relevant_distance=distance,
        )
    except ValueError as exc:
        raise TestsetFormatError(f"{path}:{start_line}: {exc}") from exc


def load_testset(path: str | os.PathLike) -> list[ContrastiveInstance]:
    instances: list[ContrastiveInstance] = []
    block: list[str] = []
    block_start = 1
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if line:
                if not block:
                    block_start = lineno
                block.append(line)
            elif block:
                instances.append(_parse_block(path, block_start, block))
                block = []
    if block:
        instances.append(_parse_block(path, block_start, block))
    return instances
