"""Deterministic synthetic bilingual corpus with discourse phenomena.

The language is word-by-word translatable: every source token has a fixed
target token, except for two kinds of discourse-dependent tokens.

* Register (deixis surrogate): every 4-sentence scene opens with a register
  marker token, formal or informal, at the start of its first source
  sentence and nowhere else. Later sentences may contain agreement trigger
  words whose target rendering depends on that marker. Deixis scenes are
  emitted in mirrored register pairs, so a scorer that ignores context gets
  exactly half of the derived contrastive set right.

* Entity rendering (lexical-cohesion surrogate): entity words each have two
  valid target renderings; a scene picks one and uses it consistently.
  Cohesion scenes are emitted in mirrored rendering pairs with identical
  sources.

Register-dependent sentences are kept to a small fraction of the corpus so
corpus BLEU stays nearly blind to consistency, as with real data.

Everything is a pure function of the seed: word lists are fixed constants
and all sampling goes through one generator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ContrastiveInstance, SubtitlePair

_CONSONANTS = "btkdgmnprsvz"
_VOWELS = "aeiou"
_SYLLABLES = [c + v for c in _CONSONANTS for v in _VOWELS]


def _words(count: int, start: int, syllables: int, taken: set[str]) -> list[str]:
    out: list[str] = []
    k = start
    while len(out) < count:
        word = "".join(
            _SYLLABLES[(k // len(_SYLLABLES) ** j) % len(_SYLLABLES)] for j in range(syllables)
        )
        k += 1
        if word not in taken:
            taken.add(word)
            out.append(word)
    return out


_taken: set[str] = set()
CONTENT_SRC = _words(40, 0, 2, _taken)
CONTENT_TGT = _words(40, 200, 2, _taken)
MARKER_SRC = _words(2, 500, 3, _taken)  # index 0 = formal, 1 = informal
MARKER_TGT = _words(2, 600, 3, _taken)
TRIGGER_SRC = _words(3, 700, 2, _taken)
TRIGGER_TGT = (_words(3, 800, 2, _taken), _words(3, 900, 2, _taken))  # [register][trigger]
ENTITY_SRC = _words(6, 1000, 3, _taken)
ENTITY_TGT = (_words(6, 1100, 3, _taken), _words(6, 1200, 3, _taken))  # [rendering][entity]
del _taken

FORMAL, INFORMAL = 0, 1


@dataclass
class SyntheticConfig:
    """Knobs for corpus composition; the defaults are the acceptance profile."""

    deixis_fraction: float = 0.06
    cohesion_fraction: float = 0.10
    min_len: int = 9
    max_len: int = 13
    dev_scenes: int = 150
    deixis_dev_scenes: int = 40
    deixis_test_scenes: int = 120
    cohesion_dev_scenes: int = 40
    cohesion_test_scenes: int = 120
    scene_gap: float = 100.0
    sentence_gap: float = 2.0


@dataclass
class _Scene:
    """Source/target token grids for the four sentences of one scene."""

    src: list[list[str]]
    tgt: list[list[str]]
    distance: int | None = None  # for phenomenon scenes: latest relevant context distance
    flip_sentence: int = 3
    flip_position: int = 0
    flip_alternative: str = ""  # target token the contrastive version uses


@dataclass
class SyntheticData:
    train_pairs: list[SubtitlePair]
    dev_pairs: list[SubtitlePair]
    deixis_dev: list[ContrastiveInstance]
    deixis_test: list[ContrastiveInstance]
    cohesion_dev: list[ContrastiveInstance]
    cohesion_test: list[ContrastiveInstance]

    @property
    def test_instances(self) -> list[ContrastiveInstance]:
        return self.deixis_test + self.cohesion_test


def _content_sentence(rng: np.random.Generator, cfg: SyntheticConfig) -> tuple[list[str], list[str]]:
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    idx = rng.integers(0, len(CONTENT_SRC), size=length)
    return [CONTENT_SRC[i] for i in idx], [CONTENT_TGT[i] for i in idx]


def _base_scene(rng: np.random.Generator, cfg: SyntheticConfig, register: int) -> _Scene:
    src, tgt = [], []
    for i in range(4):
        s, t = _content_sentence(rng, cfg)
        if i == 0:
            s = [MARKER_SRC[register]] + s
            t = [MARKER_TGT[register]] + t
        src.append(s)
        tgt.append(t)
    return _Scene(src=src, tgt=tgt)


def _flip_register(scene: _Scene) -> _Scene:
    """The mirrored-register twin: marker and every trigger rendering swapped."""
    src = [list(s) for s in scene.src]
    tgt = [list(t) for t in scene.tgt]
    for i in range(4):
        for j, token in enumerate(src[i]):
            if token in MARKER_SRC:
                reg = MARKER_SRC.index(token)
                src[i][j] = MARKER_SRC[1 - reg]
                tgt[i][j] = MARKER_TGT[1 - reg]
            elif token in TRIGGER_SRC:
                k = TRIGGER_SRC.index(token)
                reg = 0 if tgt[i][j] == TRIGGER_TGT[0][k] else 1
                tgt[i][j] = TRIGGER_TGT[1 - reg][k]
    out = _Scene(src=src, tgt=tgt, distance=scene.distance,
                 flip_sentence=scene.flip_sentence, flip_position=scene.flip_position)
    if scene.flip_alternative:
        out.flip_alternative = scene.tgt[scene.flip_sentence][scene.flip_position]
    return out


def _deixis_scene(rng: np.random.Generator, cfg: SyntheticConfig) -> _Scene:
    register = int(rng.integers(0, 2))
    scene = _base_scene(rng, cfg, register)
    distance = int(rng.choice([1, 2, 3]))
    # distance 3 leaves the marker in sentence 1 as the only revealing
    # context; 1 and 2 add a second trigger that close to the current one.
    trigger_sentences = [3] if distance == 3 else [3 - distance, 3]
    for i in trigger_sentences:
        k = int(rng.integers(0, len(TRIGGER_SRC)))
        pos = int(rng.integers(0, len(scene.src[i])))
        scene.src[i][pos] = TRIGGER_SRC[k]
        scene.tgt[i][pos] = TRIGGER_TGT[register][k]
        if i == 3:
            scene.distance = distance
            scene.flip_position = pos
            scene.flip_alternative = TRIGGER_TGT[1 - register][k]
    return scene


def _cohesion_scene(rng: np.random.Generator, cfg: SyntheticConfig) -> _Scene:
    register = int(rng.integers(0, 2))
    scene = _base_scene(rng, cfg, register)
    entity = int(rng.integers(0, len(ENTITY_SRC)))
    rendering = int(rng.integers(0, 2))
    distance = int(rng.choice([1, 2, 3]))
    context_sentence = 3 - distance
    for i in (context_sentence, 3):
        lo = 1 if i == 0 else 0  # slot 0 of sentence 1 is the marker
        pos = int(rng.integers(lo, len(scene.src[i])))
        scene.src[i][pos] = ENTITY_SRC[entity]
        scene.tgt[i][pos] = ENTITY_TGT[rendering][entity]
        if i == 3:
            scene.distance = distance
            scene.flip_position = pos
            scene.flip_alternative = ENTITY_TGT[1 - rendering][entity]
    return scene


def _flip_rendering(scene: _Scene) -> _Scene:
    """The mirrored-rendering twin: identical sources, other entity rendering."""
    src = [list(s) for s in scene.src]
    tgt = [list(t) for t in scene.tgt]
    for i in range(4):
        for j, token in enumerate(src[i]):
            if token in ENTITY_SRC:
                k = ENTITY_SRC.index(token)
                rendering = 0 if tgt[i][j] == ENTITY_TGT[0][k] else 1
                tgt[i][j] = ENTITY_TGT[1 - rendering][k]
    return _Scene(src=src, tgt=tgt, distance=scene.distance,
                  flip_sentence=scene.flip_sentence, flip_position=scene.flip_position,
                  flip_alternative=scene.tgt[scene.flip_sentence][scene.flip_position])


def _scene_pairs(scene: _Scene, scene_index: int, cfg: SyntheticConfig) -> list[SubtitlePair]:
    base = scene_index * cfg.scene_gap
    return [
        SubtitlePair(
            src=" ".join(scene.src[i]),
            tgt=" ".join(scene.tgt[i]),
            start=base + i * cfg.sentence_gap,
            end=base + i * cfg.sentence_gap + 1.5,
            overlap=1.0,
        )
        for i in range(4)
    ]


def _scene_instance(scene: _Scene, phenomenon: str) -> ContrastiveInstance:
    contrastive = [" ".join(t) for t in scene.tgt]
    tokens = list(scene.tgt[scene.flip_sentence])
    tokens[scene.flip_position] = scene.flip_alternative
    contrastive[scene.flip_sentence] = " ".join(tokens)
    return ContrastiveInstance(
        phenomenon=phenomenon,
        src=[" ".join(s) for s in scene.src],
        true_tgt=[" ".join(t) for t in scene.tgt],
        contrastive_tgts=[contrastive],
        latest_relevant_distance=scene.distance,
    )


def _gen_scenes(rng: np.random.Generator, cfg: SyntheticConfig, count: int) -> list[_Scene]:
    scenes: list[_Scene] = []
    while len(scenes) < count:
        r = rng.random()
        if r < cfg.deixis_fraction / 2:
            scene = _deixis_scene(rng, cfg)
            scenes.extend([scene, _flip_register(scene)])
        elif r < (cfg.deixis_fraction + cfg.cohesion_fraction) / 2:
            scene = _cohesion_scene(rng, cfg)
            scenes.extend([scene, _flip_rendering(scene)])
        else:
            register = int(rng.integers(0, 2))
            scenes.append(_base_scene(rng, cfg, register))
    return scenes[:count]


def _phenomenon_instances(
    rng: np.random.Generator, cfg: SyntheticConfig, count: int, phenomenon: str
) -> list[ContrastiveInstance]:
    instances: list[ContrastiveInstance] = []
    while len(instances) < 2 * count:
        if phenomenon == "deixis":
            scene = _deixis_scene(rng, cfg)
            twin = _flip_register(scene)
        else:
            scene = _cohesion_scene(rng, cfg)
            twin = _flip_rendering(scene)
        instances.append(_scene_instance(scene, phenomenon))
        instances.append(_scene_instance(twin, phenomenon))
    return instances


def gen_synthetic_corpus(
    seed: int, n_fragments: int, cfg: SyntheticConfig | None = None
) -> SyntheticData:
    """Generate ``n_fragments`` training scenes plus dev data and the
    contrastive dev/test sets, all deterministically from ``seed``."""
    cfg = cfg or SyntheticConfig()
    rng = np.random.default_rng(seed)
    train_scenes = _gen_scenes(rng, cfg, n_fragments)
    dev_scenes = _gen_scenes(rng, cfg, cfg.dev_scenes)
    deixis = _phenomenon_instances(rng, cfg, cfg.deixis_dev_scenes + cfg.deixis_test_scenes, "deixis")
    cohesion = _phenomenon_instances(
        rng, cfg, cfg.cohesion_dev_scenes + cfg.cohesion_test_scenes, "lex_cohesion"
    )
    n_dd, n_cd = 2 * cfg.deixis_dev_scenes, 2 * cfg.cohesion_dev_scenes
    train_pairs = [p for i, s in enumerate(train_scenes) for p in _scene_pairs(s, i, cfg)]
    dev_pairs = [p for i, s in enumerate(dev_scenes) for p in _scene_pairs(s, i, cfg)]
    return SyntheticData(
        train_pairs=train_pairs,
        dev_pairs=dev_pairs,
        deixis_dev=deixis[:n_dd],
        deixis_test=deixis[n_dd:],
        cohesion_dev=cohesion[:n_cd],
        cohesion_test=cohesion[n_cd:],
    )


# Surface-level oracles. These re-derive everything from the emitted tokens
# so they stay independent of the generator's internal bookkeeping.

_TRIGGER_FORM = {
    form: (reg, k) for reg in (0, 1) for k, form in enumerate(TRIGGER_TGT[reg])
}
_ENTITY_FORM = {
    form: (r, k) for r in (0, 1) for k, form in enumerate(ENTITY_TGT[r])
}


def validate_scene(src_sentences: list[str], tgt_sentences: list[str]) -> None:
    """Raise if a 4-sentence scene violates the construction rules: marker in
    the first source sentence only, and all register/rendering-dependent
    tokens consistent with it."""
    if len(src_sentences) != 4 or len(tgt_sentences) != 4:
        raise ValueError("a scene has exactly 4 sentence pairs")
    src_tokens = [s.split() for s in src_sentences]
    tgt_tokens = [t.split() for t in tgt_sentences]
    if src_tokens[0][0] not in MARKER_SRC:
        raise ValueError("first source sentence must open with a register marker")
    register = MARKER_SRC.index(src_tokens[0][0])
    if tgt_tokens[0][0] != MARKER_TGT[register]:
        raise ValueError("marker translation disagrees with the source marker")
    for i in range(4):
        for j, token in enumerate(src_tokens[i]):
            if (i, j) != (0, 0) and token in MARKER_SRC:
                raise ValueError(f"marker token outside sentence 1 at sentence {i + 1}")
            if token in TRIGGER_SRC:
                k = TRIGGER_SRC.index(token)
                if tgt_tokens[i][j] != TRIGGER_TGT[register][k]:
                    raise ValueError(
                        f"trigger rendering {tgt_tokens[i][j]!r} disagrees with register"
                    )
    renderings: dict[int, int] = {}
    for i in range(4):
        for j, token in enumerate(src_tokens[i]):
            if token in ENTITY_SRC:
                k = ENTITY_SRC.index(token)
                got = _ENTITY_FORM.get(tgt_tokens[i][j])
                if got is None or got[1] != k:
                    raise ValueError(f"unknown entity rendering {tgt_tokens[i][j]!r}")
                if renderings.setdefault(k, got[0]) != got[0]:
                    raise ValueError(f"inconsistent renderings for entity {token!r}")


def validate_corpus(pairs: list[SubtitlePair]) -> int:
    """Validate every scene of an emitted corpus; returns the scene count."""
    if len(pairs) % 4:
        raise ValueError("synthetic corpora consist of 4-sentence scenes")
    for i in range(0, len(pairs), 4):
        chunk = pairs[i : i + 4]
        validate_scene([p.src for p in chunk], [p.tgt for p in chunk])
    return len(pairs) // 4


def oracle_score(instance: ContrastiveInstance, group: list[str]) -> float:
    """Score 1.0 if the group's final sentence agrees with the register or
    entity rendering its context reveals, else 0.0."""
    context = group[:-1]
    final = group[-1].split()
    register = None
    for sentence in context:
        for token in sentence.split():
            if token in MARKER_TGT:
                register = MARKER_TGT.index(token)
            elif token in _TRIGGER_FORM:
                register = _TRIGGER_FORM[token][0]
    entity_rendering: dict[int, int] = {}
    for sentence in context:
        for token in sentence.split():
            if token in _ENTITY_FORM:
                r, k = _ENTITY_FORM[token]
                entity_rendering[k] = r
    for token in final:
        if token in _TRIGGER_FORM and register is not None:
            if _TRIGGER_FORM[token][0] != register:
                return 0.0
        if token in _ENTITY_FORM:
            r, k = _ENTITY_FORM[token]
            if k in entity_rendering and entity_rendering[k] != r:
                return 0.0
    return 1.0
