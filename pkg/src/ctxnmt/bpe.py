"""Byte-pair encoding over word-internal character sequences.

Training repeatedly merges the most frequent adjacent symbol pair, breaking
count ties toward the lexicographically smaller pair. Word boundaries are
never crossed. Non-final symbols of a word carry the ``@@`` continuation
suffix from the initial alphabet onward, so "ab" starts as ``a@@ b`` and the
alphabet distinguishes continuation forms from word-final forms; the vocab
size identity is ``alphabet_size + num_merges + len(SPECIALS)`` (when no merge
reproduces an existing symbol).

Source and target sides of a corpus get independent models.
"""
from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field

MARKER = "@@"

PAD, BOS, EOS, UNK, SEP = "<pad>", "<s>", "</s>", "<unk>", "<sep>"
SPECIALS = (PAD, BOS, EOS, UNK, SEP)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, SEP_ID = range(5)
N_SPECIAL = len(SPECIALS)


def _word_symbols(word: str) -> tuple[str, ...]:
    """Initial symbol sequence for a word: every char but the last is a
    continuation symbol."""
    return tuple(c + MARKER for c in word[:-1]) + (word[-1],)


def _join(left: str, right: str) -> str:
    """Merge two adjacent symbols. The left one is always a continuation
    symbol (it has a right neighbor), so its marker disappears inside the
    merge; the joined symbol inherits the right symbol's finality."""
    return left[: -len(MARKER)] + right


@dataclass
class BpeModel:
    """Learned merge list plus the resulting symbol vocabulary."""

    merges: list[tuple[str, str]]
    vocab: dict[str, int]
    alphabet_size: int
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False)
    _inverse: dict[int, str] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._inverse = {i: tok for tok, i in self.vocab.items()}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode_word(self, word: str) -> list[str]:
        symbols = list(_word_symbols(word))
        while len(symbols) > 1:
            best = None
            for i in range(len(symbols) - 1):
                rank = self._ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best is None or rank < best):
                    best = rank
            if best is None:
                break
            left, right = self.merges[best]
            merged: list[str] = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
                    merged.append(_join(left, right))
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        return symbols

    def encode(self, text: str) -> list[int]:
        """Token ids for whitespace-separated words; unknown symbols map to UNK."""
        ids: list[int] = []
        for word in text.split():
            for sym in self.encode_word(word):
                ids.append(self.vocab.get(sym, UNK_ID))
        return ids

    def decode(self, ids: list[int]) -> str:
        """Invert ``encode``. Unknown-token ids render as the visible UNK marker."""
        words: list[str] = []
        current: list[str] = []
        for i in ids:
            if i not in self._inverse:
                raise ValueError(f"unknown token id {i}")
            sym = self._inverse[i]
            if sym in SPECIALS:
                if sym == UNK:
                    current.append(UNK)
                    words.append("".join(current))
                    current = []
                continue
            if sym.endswith(MARKER):
                current.append(sym[: -len(MARKER)])
            else:
                current.append(sym)
                words.append("".join(current))
                current = []
        if current:
            words.append("".join(current))
        return " ".join(words)


def train_bpe(corpus: list[str], num_merges: int) -> BpeModel:
    """Learn ``num_merges`` merges from whitespace-tokenized lines."""
    word_counts = Counter()
    for line in corpus:
        word_counts.update(line.split())
    words: list[tuple[list[str], int]] = [
        [list(_word_symbols(w)), n] for w, n in sorted(word_counts.items())
    ]
    alphabet = sorted({sym for syms, _ in words for sym in syms})

    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pair_counts: Counter = Counter()
        for syms, n in words:
            for i in range(len(syms) - 1):
                pair_counts[(syms[i], syms[i + 1])] += n
        if not pair_counts:
            break
        # Highest count first; ties go to the lexicographically smaller pair.
        best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        left, right = best
        joined = _join(left, right)
        for entry in words:
            syms = entry[0]
            i = 0
            while i < len(syms) - 1:
                if syms[i] == left and syms[i + 1] == right:
                    syms[i : i + 2] = [joined]
                else:
                    i += 1

    vocab: dict[str, int] = {tok: i for i, tok in enumerate(SPECIALS)}
    for sym in alphabet:
        vocab.setdefault(sym, len(vocab))
    for left, right in merges:
        vocab.setdefault(_join(left, right), len(vocab))
    return BpeModel(merges=merges, vocab=vocab, alphabet_size=len(alphabet))


def save_bpe(path: str | os.PathLike, model: BpeModel) -> None:
    """Plain-text model file: header with counts, merge pairs, then the vocab."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"BPE1 merges={len(model.merges)} alphabet={model.alphabet_size} "
            f"specials={len(SPECIALS)} marker={MARKER}\n"
        )
        for left, right in model.merges:
            fh.write(f"{left}\t{right}\n")
        for tok, i in sorted(model.vocab.items(), key=lambda kv: kv[1]):
            fh.write(f"{tok}\t{i}\n")


def load_bpe(path: str | os.PathLike) -> BpeModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if not header or header[0] != "BPE1":
            raise ValueError(f"{path}: not a version-1 BPE model file")
        fields = dict(part.split("=", 1) for part in header[1:])
        n_merges, alphabet_size = int(fields["merges"]), int(fields["alphabet"])
        merges: list[tuple[str, str]] = []
        for _ in range(n_merges):
            left, right = fh.readline().rstrip("\n").split("\t")
            merges.append((left, right))
        vocab: dict[str, int] = {}
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            tok, i = line.split("\t")
            vocab[tok] = int(i)
    return BpeModel(merges=merges, vocab=vocab, alphabet_size=alphabet_size)
