"""Automatic builders for the discourse test suites.

Three phenomena get builders: politeness deixis (T/V switching), lexical
cohesion (named-entity translation swapping), and verb-phrase ellipsis
(target-side verb substitution).  Ellipsis-inflection instances have no
builder; they are authored directly in the generic instance format.

All builders are pure over their inputs and rely on an injectable
:class:`~ctxnmt.morphology.ToyLexicon`-style provider, so the same code
runs against the bundled romanized lexicon or a real analyzer.  Anything
the rules cannot resolve mechanically is skipped (or raises, for the
single-sentence operations), never guessed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .data import ContrastiveInstance
from .morphology import Analysis, analysis_key

__all__ = [
    "DEFAULT_POLITENESS_BLOCKLIST",
    "detect_politeness",
    "switch_politeness",
    "build_deixis_instances",
    "LexicalTable",
    "load_lexical_table",
    "save_lexical_table",
    "lemma_masses",
    "alternative_translations",
    "top_do_lemmas",
    "AlignedFragment",
    "build_cohesion_instances",
    "EllipsisSeed",
    "build_vp_ellipsis_instances",
    "load_frequency_list",
    "load_alignments",
    "save_alignments",
]

# Nominal markers that pin formality independent of grammar; fragments
# mentioning one (either language side) are ineligible for deixis switching.
DEFAULT_POLITENESS_BLOCKLIST = frozenset(
    {"mr.", "mrs.", "ms.", "sir", "madam", "officer", "honey", "dude"}
)

Lemmatizer = Callable[[str], str]


# ---------------------------------------------------------------------------
# politeness deixis


def _indicator_number(analysis: Analysis) -> str | None:
    """"T" / "V" when the analysis is a second-person form with a clear number."""
    if "2per" not in analysis.tags:
        return None
    if "sg" in analysis.tags:
        return "T"
    if "pl" in analysis.tags:
        return "V"
    return None


def _token_vote(token: str, morph) -> str | None:
    votes = {v for a in morph.analyze(token) if (v := _indicator_number(a)) is not None}
    if len(votes) == 1:
        return votes.pop()
    # no second-person reading, or readings that disagree on number
    return None


def detect_politeness(tokens: Sequence[str], morph) -> str | None:
    """Classify a tokenized sentence as informal ("T"), formal ("V") or None.

    Every token casts at most one vote through its second-person analyses
    (pronouns, possessives, finite verbs and imperatives all carry the same
    person/number tags, so one rule covers all four indicator classes).
    Unanimous votes win; no votes or a split verdict yield None.
    """
    votes = {v for t in tokens if (v := _token_vote(t, morph)) is not None}
    if len(votes) == 1:
        return votes.pop()
    return None


def switch_politeness(tokens: Sequence[str], morph) -> list[str]:
    """Re-inflect every second-person indicator to the opposite number.

    Raises ValueError when the sentence has no unambiguous politeness (there
    is nothing to switch) or when some indicator has no opposite-number form
    in the lexicon; the error names every such token so callers can route
    the sentence to manual handling instead of silently corrupting it.
    """
    if detect_politeness(tokens, morph) is None:
        raise ValueError("sentence has no unambiguous politeness to switch")
    out: list[str] = []
    stuck: list[str] = []
    for token in tokens:
        readings = sorted(
            (a for a in morph.analyze(token) if _indicator_number(a) is not None),
            key=analysis_key,
        )
        if not readings:
            out.append(token)
            continue
        flipped = None
        for a in readings:
            number = {"pl"} if "sg" in a.tags else {"sg"}
            target = frozenset((a.tags - {"sg", "pl"}) | number)
            surface = morph.inflect(a.lemma, target)
            if surface is not None:
                flipped = surface
                break
        if flipped is None:
            stuck.append(token)
        else:
            out.append(flipped)
    if stuck:
        raise ValueError(
            "no opposite-number form for indicator token(s): " + ", ".join(stuck)
        )
    return out


def _mentions_blocked(sentences: Iterable[str], blocklist: frozenset[str]) -> bool:
    return any(tok.lower() in blocklist for s in sentences for tok in s.split())


def build_deixis_instances(
    fragments: Sequence[tuple[Sequence[str], Sequence[str]]],
    morph,
    blocklist: frozenset[str] = DEFAULT_POLITENESS_BLOCKLIST,
) -> list[ContrastiveInstance]:
    """Emit the symmetric T/V instance pair for each eligible fragment.

    A fragment is a (source sentences, target sentences) pair, context first.
    Eligible means: consistent politeness across every indicator-bearing
    target sentence, an indicator in the final sentence plus at least one
    context sentence, and no blocklisted nominal marker on either side.
    Each eligible fragment yields one all-T and one all-V true group, each
    paired with a single contrastive group whose final sentence has the
    opposite formality.
    """
    out: list[ContrastiveInstance] = []
    for src_sents, tgt_sents in fragments:
        if len(src_sents) != len(tgt_sents):
            raise ValueError("fragment sides must pair up sentence by sentence")
        if not 2 <= len(src_sents) <= 4:
            continue  # no room for context, or more than the format carries
        if _mentions_blocked(list(src_sents) + list(tgt_sents), blocklist):
            continue
        tokenized = [s.split() for s in tgt_sents]
        labels = [detect_politeness(toks, morph) for toks in tokenized]
        seen = {lab for lab in labels if lab is not None}
        if len(seen) != 1:
            continue  # indicator-free or internally inconsistent fragment
        if labels[-1] is None or all(lab is None for lab in labels[:-1]):
            continue  # phenomenon needs the signal in current + some context
        distance = next(
            d for d in range(1, len(labels)) if labels[-1 - d] is not None
        )

        def harmonized(formality: str) -> list[str]:
            sents = []
            for toks, lab in zip(tokenized, labels):
                if lab is None or lab == formality:
                    sents.append(" ".join(toks))
                else:
                    sents.append(" ".join(switch_politeness(toks, morph)))
            return sents

        versions = {"T": harmonized("T"), "V": harmonized("V")}
        for formality, other in (("T", "V"), ("V", "T")):
            true_group = versions[formality]
            contrastive = true_group[:-1] + [versions[other][-1]]
            out.append(
                ContrastiveInstance(
                    phenomenon="deixis",
                    src=list(src_sents),
                    true_tgt=true_group,
                    contrastive_tgts=[contrastive],
                    latest_relevant_distance=distance,
                )
            )
    return out


# ---------------------------------------------------------------------------
# lexical table and lemma grouping

LexicalTable = dict[str, list[tuple[str, float]]]


def load_lexical_table(path) -> LexicalTable:
    """Read ``src<TAB>tgt<TAB>prob`` lines into a translation table."""
    table: LexicalTable = {}
    sums: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            src, tgt, prob_text = parts
            try:
                prob = float(prob_text)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad probability {prob_text!r}") from None
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"{path}:{lineno}: probability {prob} outside [0, 1]")
            table.setdefault(src, []).append((tgt, prob))
            sums[src] = sums.get(src, 0.0) + prob
            if sums[src] > 1.0 + 1e-9:
                raise ValueError(
                    f"{path}:{lineno}: probabilities for {src!r} sum past 1"
                )
    return table


def save_lexical_table(path, table: LexicalTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for src in sorted(table):
            for tgt, prob in table[src]:
                fh.write(f"{src}\t{tgt}\t{prob:.6g}\n")


def lemma_masses(
    table: LexicalTable, src_word: str, lemmatize: Lemmatizer
) -> list[tuple[str, float]]:
    """Translation probability mass per target lemma, heaviest first.

    Ties in mass break toward the lexicographically smaller lemma so the
    ranking is deterministic.
    """
    masses: dict[str, float] = {}
    for tgt, prob in table.get(src_word, []):
        lemma = lemmatize(tgt)
        masses[lemma] = masses.get(lemma, 0.0) + prob
    return sorted(masses.items(), key=lambda kv: (-kv[1], kv[0]))


def alternative_translations(
    table: LexicalTable,
    src_word: str,
    lemmatize: Lemmatizer,
    min_prob: float = 0.1,
) -> list[tuple[str, float]]:
    """Target lemmas whose summed surface probability reaches ``min_prob``."""
    if not 0.0 < min_prob <= 1.0:
        raise ValueError(f"min_prob must lie in (0, 1], got {min_prob}")
    return [(lemma, mass) for lemma, mass in lemma_masses(table, src_word, lemmatize) if mass >= min_prob]


def top_do_lemmas(
    table: LexicalTable, lemmatize: Lemmatizer, k: int = 10, src_word: str = "do"
) -> list[str]:
    """The k heaviest target lemmas translating the placeholder verb."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    return [lemma for lemma, _ in lemma_masses(table, src_word, lemmatize)[:k]]


# ---------------------------------------------------------------------------
# lexical cohesion


@dataclass(frozen=True)
class AlignedFragment:
    """A translation fragment plus word-alignment links per sentence.

    ``links[s]`` holds (source index, target index) pairs for sentence s,
    both 0-based over whitespace tokens.
    """

    src_sents: tuple[str, ...]
    tgt_sents: tuple[str, ...]
    links: tuple[frozenset[tuple[int, int]], ...]

    def __post_init__(self) -> None:
        if not (len(self.src_sents) == len(self.tgt_sents) == len(self.links)):
            raise ValueError("sentence and alignment counts must agree")
        for s, pairs in enumerate(self.links):
            n_src = len(self.src_sents[s].split())
            n_tgt = len(self.tgt_sents[s].split())
            for i, j in pairs:
                if not (0 <= i < n_src and 0 <= j < n_tgt):
                    raise ValueError(
                        f"alignment {i}-{j} outside sentence {s} ({n_src}x{n_tgt} tokens)"
                    )


def _single_tags(morph, surface: str) -> frozenset[str] | None:
    """The unique tag set of a surface, or None when absent or ambiguous."""
    tag_sets = {a.tags for a in morph.analyze(surface)}
    if len(tag_sets) == 1:
        return next(iter(tag_sets))
    return None


def build_cohesion_instances(
    fragments: Sequence[AlignedFragment],
    table: LexicalTable,
    lemmatize: Lemmatizer,
    freq_list: Sequence[str],
    morph,
    freq_cutoff: int = 5000,
    min_prob: float = 0.1,
) -> list[ContrastiveInstance]:
    """Instances that swap a repeated entity's translation in the last sentence.

    Candidate entities are source words outside the ``freq_cutoff`` most
    frequent, mentioned in the final sentence and at least one context
    sentence, each mention aligned to exactly one target token, with all
    original translations sharing a lemma.  For every alternative lemma A
    (translation mass ≥ ``min_prob``, ≥ 2 alternatives, inflectable at every
    mention) one true group renders all mentions with A; its contrastive
    groups re-render only the final-sentence mentions with each other
    alternative B.
    """
    frequent = {w.lower() for w in freq_list[:freq_cutoff]}
    out: list[ContrastiveInstance] = []
    for frag in fragments:
        n = len(frag.src_sents)
        if not 2 <= n <= 4:
            continue
        src_tokens = [s.split() for s in frag.src_sents]
        tgt_tokens = [s.split() for s in frag.tgt_sents]
        candidates = sorted(
            {w for w in src_tokens[-1] if w.lower() not in frequent}
        )
        for word in candidates:
            alts = alternative_translations(table, word, lemmatize, min_prob)
            if len(alts) < 2:
                continue
            mentions: list[tuple[int, int]] = []  # (sentence, target index)
            aligned_cleanly = True
            for s in range(n):
                for i, tok in enumerate(src_tokens[s]):
                    if tok != word:
                        continue
                    targets = sorted(j for a, j in frag.links[s] if a == i)
                    if len(targets) != 1:
                        aligned_cleanly = False
                        break
                    mentions.append((s, targets[0]))
                if not aligned_cleanly:
                    break
            if not aligned_cleanly or not mentions:
                continue
            context_mentions = [s for s, _ in mentions if s != n - 1]
            if (n - 1) not in {s for s, _ in mentions} or not context_mentions:
                continue
            originals = {lemmatize(tgt_tokens[s][j]) for s, j in mentions}
            if len(originals) != 1:
                continue  # translated inconsistently already; not an anchor
            mention_tags = []
            for s, j in mentions:
                tags = _single_tags(morph, tgt_tokens[s][j])
                if tags is None:
                    break
                mention_tags.append(tags)
            if len(mention_tags) != len(mentions):
                continue
            renderings: list[tuple[str, list[str]]] = []
            for lemma, _mass in alts:
                forms = [morph.inflect(lemma, tags) for tags in mention_tags]
                if all(f is not None for f in forms):
                    renderings.append((lemma, forms))
            if len(renderings) < 2:
                continue
            distance = (n - 1) - max(context_mentions)
            for lemma_a, forms_a in renderings:
                true_tokens = [list(toks) for toks in tgt_tokens]
                for (s, j), form in zip(mentions, forms_a):
                    true_tokens[s][j] = form
                true_group = [" ".join(toks) for toks in true_tokens]
                contrastives = []
                for lemma_b, forms_b in renderings:
                    if lemma_b == lemma_a:
                        continue
                    mixed = [list(toks) for toks in true_tokens]
                    for (s, j), form in zip(mentions, forms_b):
                        if s == n - 1:
                            mixed[s][j] = form
                    group = [" ".join(toks) for toks in mixed]
                    if group != true_group:
                        contrastives.append(group)
                if contrastives:
                    out.append(
                        ContrastiveInstance(
                            phenomenon="lex_cohesion",
                            src=list(frag.src_sents),
                            true_tgt=true_group,
                            contrastive_tgts=contrastives,
                            latest_relevant_distance=distance,
                        )
                    )
    return out


# ---------------------------------------------------------------------------
# verb-phrase ellipsis


@dataclass(frozen=True)
class EllipsisSeed:
    """A fragment whose final target sentence spells out an elided verb.

    ``verb_index`` points at that verb token; the ellipsis lives on the
    source side, so no distance applies unless the curator supplies one.
    """

    src_sents: tuple[str, ...]
    tgt_sents: tuple[str, ...]
    verb_index: int
    latest_relevant_distance: int | None = None

    def __post_init__(self) -> None:
        if len(self.src_sents) != len(self.tgt_sents):
            raise ValueError("seed sides must pair up sentence by sentence")
        if not 1 <= len(self.src_sents) <= 4:
            raise ValueError("seeds carry 1-4 sentence pairs")
        if not 0 <= self.verb_index < len(self.tgt_sents[-1].split()):
            raise ValueError(f"verb_index {self.verb_index} outside the final sentence")


def build_vp_ellipsis_instances(
    seeds: Sequence[EllipsisSeed],
    table: LexicalTable,
    lemmatize: Lemmatizer,
    morph,
    k: int = 10,
    src_do_word: str = "do",
) -> list[ContrastiveInstance]:
    """Replace each seed's marked verb with the top-k "do"-translation lemmas.

    The true lemma is excluded, every substitute is inflected to the marked
    verb's own tags, and candidates the lexicon cannot inflect are skipped
    with a warning.  Seeds left with no substitutes are dropped.
    """
    lemmas = top_do_lemmas(table, lemmatize, k, src_do_word)
    out: list[ContrastiveInstance] = []
    for seed in seeds:
        final = seed.tgt_sents[-1].split()
        verb = final[seed.verb_index]
        readings = sorted(morph.analyze(verb), key=analysis_key)
        if len(readings) != 1:
            warnings.warn(
                f"verb {verb!r} has {len(readings)} analyses; seed skipped",
                stacklevel=2,
            )
            continue
        true_lemma, tags = readings[0].lemma, readings[0].tags
        contrastives: list[list[str]] = []
        for lemma in lemmas:
            if lemma == true_lemma:
                continue
            surface = morph.inflect(lemma, tags)
            if surface is None:
                warnings.warn(
                    f"cannot inflect {lemma!r} with tags of {verb!r}; candidate skipped",
                    stacklevel=2,
                )
                continue
            if surface == verb:
                continue
            swapped = list(final)
            swapped[seed.verb_index] = surface
            contrastives.append(list(seed.tgt_sents[:-1]) + [" ".join(swapped)])
        if not contrastives:
            continue
        out.append(
            ContrastiveInstance(
                phenomenon="ellipsis_vp",
                src=list(seed.src_sents),
                true_tgt=list(seed.tgt_sents),
                contrastive_tgts=contrastives,
                latest_relevant_distance=seed.latest_relevant_distance,
            )
        )
    return out


# ---------------------------------------------------------------------------
# auxiliary file formats


def load_frequency_list(path) -> list[str]:
    """One token per line, most frequent first."""
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def load_alignments(path) -> list[tuple[frozenset[tuple[int, int]], ...]]:
    """Pharaoh-style alignments, one fragment per blank-line-separated block.

    Each block line carries the ``i-j`` pairs of one sentence; a bare "-"
    stands for a sentence with no links, keeping line counts aligned with
    the fragment's sentences.
    """
    fragments: list[tuple[frozenset[tuple[int, int]], ...]] = []
    block: list[frozenset[tuple[int, int]]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                if block:
                    fragments.append(tuple(block))
                    block = []
                continue
            if line == "-":
                block.append(frozenset())
                continue
            pairs = set()
            for chunk in line.split():
                left, dash, right = chunk.partition("-")
                if not dash or not left.isdigit() or not right.isdigit():
                    raise ValueError(f"{path}:{lineno}: bad alignment pair {chunk!r}")
                pairs.add((int(left), int(right)))
            block.append(frozenset(pairs))
    if block:
        fragments.append(tuple(block))
    return fragments


def save_alignments(path, fragments: Sequence[Sequence[frozenset[tuple[int, int]]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f, block in enumerate(fragments):
            if f:
                fh.write("\n")
            for pairs in block:
                if pairs:
                    fh.write(" ".join(f"{i}-{j}" for i, j in sorted(pairs)) + "\n")
                else:
                    fh.write("-\n")
