"""Discourse test-suite builders: deixis, lexical cohesion, VP ellipsis."""

import pytest

from ctxnmt.data import load_testset, save_testset
from ctxnmt.evaluation import evaluate_consistency
from ctxnmt.morphology import ToyLexicon
from ctxnmt.testset import (
    AlignedFragment,
    EllipsisSeed,
    alternative_translations,
    build_cohesion_instances,
    build_deixis_instances,
    build_vp_ellipsis_instances,
    detect_politeness,
    lemma_masses,
    load_alignments,
    load_lexical_table,
    save_alignments,
    save_lexical_table,
    switch_politeness,
    top_do_lemmas,
)


@pytest.fixture(scope="module")
def lex():
    return ToyLexicon.bundled()


# ---------------------------------------------------------------------------
# politeness detection and switching


def test_detect_informal_pronoun(lex):
    assert detect_politeness(["ty", "vidish"], lex) == "T"


def test_detect_formal_verb_agreement(lex):
    assert detect_politeness(["vy", "vidite"], lex) == "V"
    assert detect_politeness(["znaete"], lex) == "V"


def test_detect_imperative_and_possessive(lex):
    assert detect_politeness(["idi", "domoy"], lex) == "T"
    assert detect_politeness(["vash", "dom"], lex) == "V"


def test_detect_no_second_person_forms(lex):
    assert detect_politeness(["ya", "znaet", "dom"], lex) is None


def test_detect_conflict_is_none(lex):
    assert detect_politeness(["ty", "vidite"], lex) is None


def test_number_ambiguous_token_casts_no_vote():
    rows = [
        "ty\tty\tNPRO,2per,sg,nomn",
        "vy\tty\tNPRO,2per,pl,nomn",
        "thee\tthou\tNPRO,2per,sg,gent",
        "thee\tthouv\tNPRO,2per,pl,gent",
    ]
    lex = ToyLexicon.from_lines(rows, origin="<test>")
    assert detect_politeness(["thee"], lex) is None
    assert detect_politeness(["ty", "thee"], lex) == "T"
    # and switching fails loudly because "thee" has no opposite-number cell
    with pytest.raises(ValueError, match="thee"):
        switch_politeness(["ty", "thee"], lex)


def test_switch_spec_pair(lex):
    assert switch_politeness(["ty", "vidish"], lex) == ["vy", "vidite"]


def test_switch_is_involution(lex):
    sentence = ["ty", "vidish", "tvoy", "dom"]
    flipped = switch_politeness(sentence, lex)
    assert flipped == ["vy", "vidite", "vash", "dom"]
    assert switch_politeness(flipped, lex) == sentence


def test_switch_keeps_non_indicators(lex):
    assert switch_politeness(["idi", "zzz"], lex) == ["idite", "zzz"]


def test_switch_without_indicators_rejected(lex):
    with pytest.raises(ValueError, match="no unambiguous politeness"):
        switch_politeness(["ya", "znaet"], lex)


# ---------------------------------------------------------------------------
# deixis builder


def _fragment(*pairs):
    srcs = tuple(p[0] for p in pairs)
    tgts = tuple(p[1] for p in pairs)
    return (srcs, tgts)


def test_deixis_eligible_fragment_yields_symmetric_pair(lex):
    frag = _fragment(("you see", "ty vidish"), ("you know", "ty znaesh"))
    instances = build_deixis_instances([frag], lex)
    assert len(instances) == 2
    assert all(i.phenomenon == "deixis" for i in instances)
    assert all(i.latest_relevant_distance == 1 for i in instances)
    t_group = ["ty vidish", "ty znaesh"]
    v_group = ["vy vidite", "vy znaete"]
    truths = {tuple(i.true_tgt) for i in instances}
    assert truths == {tuple(t_group), tuple(v_group)}
    for inst in instances:
        other = v_group if inst.true_tgt == t_group else t_group
        assert inst.contrastive_tgts == [inst.true_tgt[:-1] + [other[-1]]]
        assert inst.src == ["you see", "you know"]


def test_deixis_mixed_formality_fragment_skipped(lex):
    frag = _fragment(("you see", "ty vidish"), ("you know", "vy znaete"))
    assert build_deixis_instances([frag], lex) == []


def test_deixis_needs_indicator_in_current_and_context(lex):
    no_current = _fragment(("you see", "ty vidish"), ("he knows", "on znaet"))
    no_context = _fragment(("he knows", "on znaet"), ("you see", "ty vidish"))
    assert build_deixis_instances([no_current, no_context], lex) == []


def test_deixis_single_sentence_fragment_skipped(lex):
    assert build_deixis_instances([_fragment(("you see", "ty vidish"))], lex) == []


def test_deixis_blocklisted_marker_skipped(lex):
    src_side = _fragment(("you see Sir", "ty vidish"), ("you know", "ty znaesh"))
    tgt_side = _fragment(("you see", "ty vidish dude"), ("you know", "ty znaesh"))
    assert build_deixis_instances([src_side, tgt_side], lex) == []
    # a custom blocklist reinstates eligibility
    assert len(build_deixis_instances([src_side], lex, blocklist=frozenset())) == 2


def test_deixis_distance_reaches_farthest_context(lex):
    frag = _fragment(
        ("you see", "ty vidish"),
        ("he knows", "on znaet"),
        ("she sees", "ona vidit"),
        ("you know", "ty znaesh"),
    )
    instances = build_deixis_instances([frag], lex)
    assert len(instances) == 2
    assert all(i.latest_relevant_distance == 3 for i in instances)


def test_deixis_mismatched_sides_rejected(lex):
    with pytest.raises(ValueError, match="pair up"):
        build_deixis_instances([(("a", "b"), ("x",))], lex)


def test_deixis_context_agnostic_scorer_sits_at_half(lex):
    fragments = [
        _fragment(("you see", "ty vidish"), ("you know", "ty znaesh")),
        _fragment(("go home", "idi domoy"), ("you hear", "ty slyshish")),
        _fragment(("your house", "tvoy dom"), ("you can", "ty mozhesh")),
    ]
    instances = build_deixis_instances(fragments, lex)
    assert len(instances) == 6

    def last_sentence_score(instance, group):
        # deterministic, context-blind, injective enough to avoid ties
        return float(sum((i + 1) * ord(c) for i, c in enumerate(group[-1])))

    report = evaluate_consistency(last_sentence_score, instances)
    assert report.accuracy == 0.5


def test_deixis_instances_roundtrip_file_format(lex, tmp_path):
    frag = _fragment(("you see", "ty vidish"), ("you know", "ty znaesh"))
    instances = build_deixis_instances([frag], lex)
    path = tmp_path / "deixis.txt"
    save_testset(path, instances)
    assert load_testset(path) == instances


# ---------------------------------------------------------------------------
# lexical table helpers


def _mapped_lemmatizer(mapping):
    return lambda word: mapping.get(word, word)


def test_alternative_translations_groups_by_lemma():
    table = {"w": [("t1", 0.5), ("t2", 0.4), ("t3", 0.08)]}
    lemmatize = _mapped_lemmatizer({"t1": "L1", "t2": "L1", "t3": "L2"})
    alts = alternative_translations(table, "w", lemmatize, min_prob=0.1)
    assert [lemma for lemma, _ in alts] == ["L1"]
    assert alts[0][1] == pytest.approx(0.9)


def test_alternative_translations_single_certain_lemma():
    table = {"w": [("t", 1.0)]}
    assert alternative_translations(table, "w", str, 0.1) == [("t", 1.0)]


def test_alternative_translations_all_below_threshold():
    table = {"w": [("a", 0.05), ("b", 0.04)]}
    assert alternative_translations(table, "w", str, 0.1) == []


def test_alternative_translations_absent_word_empty():
    assert alternative_translations({}, "missing", str, 0.1) == []


def test_alternative_translations_min_prob_validated():
    with pytest.raises(ValueError, match="min_prob"):
        alternative_translations({}, "w", str, 0.0)


def test_lemma_masses_order_is_deterministic():
    table = {"w": [("b", 0.3), ("a", 0.3), ("c", 0.4)]}
    assert lemma_masses(table, "w", str) == [("c", 0.4), ("a", 0.3), ("b", 0.3)]


def test_top_do_lemmas_ranking_and_k():
    table = {"do": [("x", 0.5), ("y", 0.3), ("z", 0.2)]}
    assert top_do_lemmas(table, str, k=2) == ["x", "y"]
    with pytest.raises(ValueError, match="k"):
        top_do_lemmas(table, str, k=0)


def test_lexical_table_file_roundtrip(tmp_path):
    table = {"house": [("dom", 0.5), ("zdanie", 0.25)], "do": [("delal", 0.125)]}
    path = tmp_path / "lex.tsv"
    save_lexical_table(path, table)
    assert load_lexical_table(path) == table


def test_lexical_table_rejects_bad_rows(tmp_path):
    cases = [
        ("house\tdom\n", "3 tab-separated"),
        ("house\tdom\tmany\n", "bad probability"),
        ("house\tdom\t1.5\n", "outside"),
        ("house\tdom\t0.7\nhouse\tzdanie\t0.4\n", "sum past 1"),
    ]
    for text, pattern in cases:
        path = tmp_path / "bad.tsv"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ValueError, match=pattern):
            load_lexical_table(path)


# ---------------------------------------------------------------------------
# lexical cohesion builder


HOUSE_TABLE = {
    "house": [("dom", 0.3), ("doma", 0.2), ("zdanie", 0.3), ("hata", 0.2)]
}
FREQ = ["the", "is", "big", "i", "see", "a", "you"]


def _house_fragment():
    return AlignedFragment(
        src_sents=("the house is big", "i see the house"),
        tgt_sents=("dom ochen horosho", "ya vidit doma"),
        links=(frozenset({(1, 0)}), frozenset({(3, 2)})),
    )


def test_cohesion_three_way_entity(lex):
    instances = build_cohesion_instances(
        [_house_fragment()], HOUSE_TABLE, lex.lemmatize, FREQ, lex
    )
    # one true group per alternative lemma, two contrastives each
    assert len(instances) == 3
    assert all(i.phenomenon == "lex_cohesion" for i in instances)
    assert all(i.latest_relevant_distance == 1 for i in instances)
    assert all(len(i.contrastive_tgts) == 2 for i in instances)
    by_truth = {tuple(i.true_tgt): i for i in instances}
    assert set(by_truth) == {
        ("dom ochen horosho", "ya vidit doma"),
        ("zdanie ochen horosho", "ya vidit zdaniya"),
        ("hata ochen horosho", "ya vidit haty"),
    }
    dom_inst = by_truth[("dom ochen horosho", "ya vidit doma")]
    # context mention stays; only the current-sentence mention switches
    assert dom_inst.contrastive_tgts == [
        ["dom ochen horosho", "ya vidit zdaniya"],
        ["dom ochen horosho", "ya vidit haty"],
    ]


def test_cohesion_single_alternative_no_instance(lex):
    table = {"house": [("dom", 0.9)]}
    assert (
        build_cohesion_instances([_house_fragment()], table, lex.lemmatize, FREQ, lex)
        == []
    )


def test_cohesion_requires_context_mention(lex):
    frag = AlignedFragment(
        src_sents=("it is big", "i see the house"),
        tgt_sents=("ono ochen horosho", "ya vidit doma"),
        links=(frozenset(), frozenset({(3, 2)})),
    )
    assert build_cohesion_instances([frag], HOUSE_TABLE, lex.lemmatize, FREQ, lex) == []


def test_cohesion_requires_current_mention(lex):
    frag = AlignedFragment(
        src_sents=("the house is big", "i see it"),
        tgt_sents=("dom ochen horosho", "ya vidit ono"),
        links=(frozenset({(1, 0)}), frozenset()),
    )
    assert build_cohesion_instances([frag], HOUSE_TABLE, lex.lemmatize, FREQ, lex) == []


def test_cohesion_frequent_word_excluded(lex):
    freq = FREQ + ["house"]
    assert (
        build_cohesion_instances([_house_fragment()], HOUSE_TABLE, lex.lemmatize, freq, lex)
        == []
    )


def test_cohesion_multi_link_mention_disqualifies(lex):
    frag = AlignedFragment(
        src_sents=("the house is big", "i see the house"),
        tgt_sents=("dom ochen horosho", "ya vidit doma"),
        links=(frozenset({(1, 0)}), frozenset({(3, 2), (3, 1)})),
    )
    assert build_cohesion_instances([frag], HOUSE_TABLE, lex.lemmatize, FREQ, lex) == []


def test_cohesion_inconsistent_original_translation_skipped(lex):
    frag = AlignedFragment(
        src_sents=("the house is big", "i see the house"),
        tgt_sents=("dom ochen horosho", "ya vidit zdaniya"),
        links=(frozenset({(1, 0)}), frozenset({(3, 2)})),
    )
    assert build_cohesion_instances([frag], HOUSE_TABLE, lex.lemmatize, FREQ, lex) == []


def test_cohesion_ambiguous_mention_surface_skipped(lex):
    table = {"stove": [("pech", 0.6), ("dom", 0.4)]}
    frag = AlignedFragment(
        src_sents=("the stove is big", "i see the stove"),
        tgt_sents=("pech ochen horosho", "ya vidit pech"),
        links=(frozenset({(1, 0)}), frozenset({(3, 2)})),
    )
    assert build_cohesion_instances([frag], table, lex.lemmatize, FREQ, lex) == []


def test_cohesion_distance_uses_nearest_context_mention(lex):
    frag = AlignedFragment(
        src_sents=(
            "the house is big",
            "he knows",
            "she sees",
            "i see the house",
        ),
        tgt_sents=(
            "dom ochen horosho",
            "on znaet",
            "ona vidit",
            "ya vidit doma",
        ),
        links=(
            frozenset({(1, 0)}),
            frozenset(),
            frozenset(),
            frozenset({(3, 2)}),
        ),
    )
    instances = build_cohesion_instances([frag], HOUSE_TABLE, lex.lemmatize, FREQ, lex)
    assert instances and all(i.latest_relevant_distance == 3 for i in instances)


def test_cohesion_instances_roundtrip_file_format(lex, tmp_path):
    instances = build_cohesion_instances(
        [_house_fragment()], HOUSE_TABLE, lex.lemmatize, FREQ, lex
    )
    path = tmp_path / "cohesion.txt"
    save_testset(path, instances)
    assert load_testset(path) == instances


def test_aligned_fragment_validates_link_range():
    with pytest.raises(ValueError, match="outside"):
        AlignedFragment(("a b",), ("x",), (frozenset({(0, 1)}),))
    with pytest.raises(ValueError, match="counts"):
        AlignedFragment(("a",), ("x", "y"), (frozenset(),))


# ---------------------------------------------------------------------------
# VP ellipsis builder


DO_TABLE = {
    "do": [
        ("delal", 0.20),
        ("sdelal", 0.15),
        ("postupal", 0.12),
        ("rabotal", 0.10),
        ("igral", 0.09),
        ("skazal", 0.08),
        ("pomog", 0.07),
        ("otvechal", 0.06),
        ("pel", 0.05),
        ("chital", 0.04),
        ("pisal", 0.03),
        ("idyot", 0.01),
    ]
}


def _seed(verb_sentence, verb_index, distance=None):
    return EllipsisSeed(
        src_sents=("i worked yesterday", "so did he"),
        tgt_sents=("ya rabotal", verb_sentence),
        verb_index=verb_index,
        latest_relevant_distance=distance,
    )


def test_ellipsis_true_verb_in_topk_gives_nine_groups(lex):
    seed = _seed("on rabotal", 1, distance=1)
    instances = build_vp_ellipsis_instances([seed], DO_TABLE, lex.lemmatize, lex, k=10)
    assert len(instances) == 1
    inst = instances[0]
    assert inst.phenomenon == "ellipsis_vp"
    assert inst.latest_relevant_distance == 1
    assert inst.true_tgt == ["ya rabotal", "on rabotal"]
    assert len(inst.contrastive_tgts) == 9  # top-10 minus the true lemma
    swapped = {g[-1].split()[1] for g in inst.contrastive_tgts}
    assert "rabotal" not in swapped
    # context sentences never change
    assert all(g[:-1] == inst.true_tgt[:-1] for g in inst.contrastive_tgts)


def test_ellipsis_contrastive_verbs_share_tags(lex):
    seed = _seed("on rabotal", 1)
    (inst,) = build_vp_ellipsis_instances([seed], DO_TABLE, lex.lemmatize, lex, k=10)
    (true_reading,) = lex.analyze("rabotal")
    for group in inst.contrastive_tgts:
        verb = group[-1].split()[1]
        readings = lex.analyze(verb)
        assert len(readings) == 1
        assert next(iter(readings)).tags == true_reading.tags


def test_ellipsis_k_one_equal_lemma_drops_instance(lex):
    table = {"do": [("delal", 0.9)]}
    seed = _seed("on delal", 1)
    assert build_vp_ellipsis_instances([seed], table, lex.lemmatize, lex, k=1) == []


def test_ellipsis_uninflectable_candidate_warns_and_skips(lex):
    # idti has no masculine-past cell in the toy lexicon
    table = {"do": [("delal", 0.6), ("idyot", 0.4)]}
    seed = _seed("on delal", 1)
    with pytest.warns(UserWarning, match="idti"):
        out = build_vp_ellipsis_instances([seed], table, lex.lemmatize, lex, k=2)
    assert out == []


def test_ellipsis_ambiguous_marked_verb_skips_seed(lex):
    seed = _seed("ya pech", 1)
    with pytest.warns(UserWarning, match="pech"):
        out = build_vp_ellipsis_instances([seed], DO_TABLE, lex.lemmatize, lex, k=10)
    assert out == []


def test_ellipsis_seed_validation():
    with pytest.raises(ValueError, match="verb_index"):
        EllipsisSeed(("a",), ("x y",), verb_index=2)
    with pytest.raises(ValueError, match="pair up"):
        EllipsisSeed(("a", "b"), ("x",), verb_index=0)


def test_ellipsis_instances_roundtrip_file_format(lex, tmp_path):
    seed = _seed("on rabotal", 1)
    instances = build_vp_ellipsis_instances([seed], DO_TABLE, lex.lemmatize, lex, k=10)
    path = tmp_path / "ellipsis.txt"
    save_testset(path, instances)
    assert load_testset(path) == instances


# ---------------------------------------------------------------------------
# auxiliary formats


def test_alignment_file_roundtrip(tmp_path):
    fragments = [
        (frozenset({(0, 0), (1, 2)}), frozenset()),
        (frozenset({(2, 1)}),),
    ]
    path = tmp_path / "align.txt"
    save_alignments(path, fragments)
    assert load_alignments(path) == [tuple(f) for f in fragments]
    text = path.read_text(encoding="utf-8")
    assert "-\n" in text  # linkless sentence keeps its line


def test_alignment_loader_rejects_garbage(tmp_path):
    path = tmp_path / "align.txt"
    path.write_text("0-0 nonsense\n", encoding="utf-8")
    with pytest.raises(ValueError, match="nonsense"):
        load_alignments(path)
