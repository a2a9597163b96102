"""Building contrastive discourse test sets from curated material.

Three builders, three phenomena. Each consumes hand-checkable inputs (a
toy morphological lexicon, a lexical translation table, word alignments)
and emits ContrastiveInstance blocks a scorer can rank.
"""

from ctxnmt.morphology import ToyLexicon
from ctxnmt.testset import (
    AlignedFragment,
    EllipsisSeed,
    alternative_translations,
    build_cohesion_instances,
    build_deixis_instances,
    build_vp_ellipsis_instances,
    detect_politeness,
    switch_politeness,
    top_do_lemmas,
)

lex = ToyLexicon.bundled()

# --- politeness machinery -------------------------------------------------
# Second-person morphology votes T (informal singular) or V (formal plural);
# a sentence counts only when its indicators agree unanimously.
for sent in ["ty vidish dom", "vy vidite dom", "segodnya horosho"]:
    print(f"{sent!r:28} -> {detect_politeness(sent.split(), lex)}")

switched = switch_politeness("ty vidish tvoy dom".split(), lex)
print("switched:", " ".join(switched))
assert switch_politeness(switched, lex) == "ty vidish tvoy dom".split()  # involution

# --- deixis ----------------------------------------------------------------
# One eligible fragment yields an exactly symmetric T/V instance pair, so a
# context-blind scorer lands on 50% by construction.
fragment = (
    ("you see the house", "you are here"),
    ("ty vidish dom", "ty zdes"),
)
instances = build_deixis_instances([fragment], lex)
for inst in instances:
    print("\ntrue:", inst.true_tgt, " distance:", inst.latest_relevant_distance)
    print("contrastive:", inst.contrastive_tgts[0])

# --- lexical cohesion ------------------------------------------------------
# A lexical table groups translation probability by lemma; named entities
# with two strong renderings become test material.
table = {"house": [("dom", 0.3), ("doma", 0.2), ("zdanie", 0.3), ("hata", 0.2)]}
print("\nlemma alternatives for 'house':",
      alternative_translations(table, "house", lex.lemmatize))

freq = ["the", "is", "big", "i", "see", "a", "you"]  # "house" is rare enough
aligned = AlignedFragment(
    src_sents=("the house is big", "i see the house"),
    tgt_sents=("dom ochen horosho", "ya vidit doma"),
    links=(frozenset({(1, 0)}), frozenset({(3, 2)})),
)
cohesion = build_cohesion_instances([aligned], table, lex.lemmatize, freq, lex)
print(f"{len(cohesion)} cohesion instances (one per rendering)")
for inst in cohesion:
    print("  true:", inst.true_tgt, "vs", [g[-1] for g in inst.contrastive_tgts])

# --- verb-phrase ellipsis ---------------------------------------------------
# "do" on the source side stands in for some verb; contrastives re-inflect
# the top competing lemmas into the marked slot.
do_table = {
    "do": [("delat", 0.4), ("sdelat", 0.2), ("rabotat", 0.2), ("igrat", 0.2)]
}
print("\ntop 'do' lemmas:", top_do_lemmas(do_table, lex.lemmatize, k=4))
seed = EllipsisSeed(
    src_sents=("he worked a lot", "yes he did"),
    tgt_sents=("on mnogo rabotal", "da rabotal"),
    verb_index=1,
)
ellipsis = build_vp_ellipsis_instances([seed], do_table, lex.lemmatize, lex)
inst = ellipsis[0]
print("true:", inst.true_tgt[-1])
print("contrastive finals:", [g[-1] for g in inst.contrastive_tgts])
