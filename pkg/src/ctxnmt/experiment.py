"""End-to-end synthetic experiment: corpus, tokenizers, both passes, reports.

This module glues the building blocks into the reference workflow the CLI
exposes: generate the synthetic bilingual corpus, train subword models,
train the context-agnostic base translator, freeze it, train the
context-aware second pass on top, and score both on the contrastive
dev/test suites plus corpus BLEU.  Everything is deterministic given the
config's seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .bpe import BpeModel, train_bpe
from .data import SubtitlePair
from .decoding import translate_document, translate_sentence
from .evaluation import (
    ConsistencyReport,
    bleu,
    evaluate_by_phenomenon,
    make_base_scorer,
    make_cadec_scorer,
)
from .model import (
    BaseModel,
    Cadec,
    ModelConfig,
    init_base_params,
    init_cadec_params,
    pad_batch,
    with_eos,
)
from .synth import SyntheticConfig, SyntheticData, gen_synthetic_corpus
from .training import (
    CadecExample,
    MixedObjectiveConfig,
    TrainConfig,
    TrainResult,
    cadec_training_loss,
    cycle_batches,
    train_loop,
)

__all__ = [
    "ExperimentConfig",
    "PreparedData",
    "ExperimentResult",
    "AblationRow",
    "prepare",
    "prepare_from",
    "scenes_of",
    "examples_from_scenes",
    "train_base",
    "train_cadec",
    "corpus_bleu_base",
    "corpus_bleu_cadec",
    "consistency_reports",
    "run_synthetic_experiment",
    "ablate_p",
    "ablation_tsv",
    "ablation_table",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """One flat record of every knob; round-trips through kv files."""

    seed: int = 0
    n_fragments: int = 2000
    dev_scenes: int = 60
    testset_scenes: int = 120
    bpe_merges: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    d_ff: int = 128
    max_len: int = 32
    max_context: int = 3
    base_steps: int = 2400
    cadec_steps: int = 1800
    eval_every: int = 200
    warmup_steps: int = 150
    lr_scale: float = 0.25
    batch_budget: int = 2200
    # second-pass examples carry their whole context in the length measure,
    # so matching the base token budget starves each step of examples;
    # the second pass gets its own, larger budget
    cadec_batch_budget: int = 8800
    patience: int = 12
    average_last: int = 5
    p_corrupted: float = 0.5
    corruption_rate: float = 0.2
    beam_size: int = 4
    dev_eval_sentences: int = 32  # dev subset decoded per evaluation pass
    dev_eval_instances: int = 32  # contrastive dev subset per evaluation pass

    def to_kv(self) -> dict[str, str]:
        return {f.name: repr(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "ExperimentConfig":
        casts = {f.name: f.type for f in fields(cls)}
        values = {}
        for name, text in kv.items():
            if name not in casts:
                raise ValueError(f"unknown experiment config key {name!r}")
            values[name] = float(text) if casts[name] == "float" else int(text)
        return cls(**values)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


@dataclass
class PreparedData:
    """Synthetic corpus plus tokenizers and everything already in id space."""

    data: SyntheticData
    src_bpe: BpeModel
    tgt_bpe: BpeModel
    base_cfg: ModelConfig
    train_pairs: list[tuple[list[int], list[int]]]
    cadec_examples: list[CadecExample]
    dev_scenes: list[tuple[list[str], list[str]]]

    def encode_src(self, text: str) -> list[int]:
        return self.src_bpe.encode(text)

    def decode_tgt(self, ids: list[int]) -> str:
        return self.tgt_bpe.decode(ids)


def scenes_of(pairs: list[SubtitlePair], size: int = 4) -> list[tuple[list[str], list[str]]]:
    """Split a scene-structured corpus into (source, target) sentence groups."""
    if len(pairs) % size:
        raise ValueError(f"corpus length {len(pairs)} is not a multiple of {size}")
    out = []
    for i in range(0, len(pairs), size):
        chunk = pairs[i : i + size]
        out.append(([p.src for p in chunk], [p.tgt for p in chunk]))
    return out


def examples_from_scenes(
    scenes: list[tuple[list[str], list[str]]],
    src_bpe: BpeModel,
    tgt_bpe: BpeModel,
    max_context: int,
    max_len: int,
) -> list[CadecExample]:
    """Second-pass training examples: one per scene sentence with context.

    Context translations are the references, most recent first.  Sentences
    whose encoding leaves no room for EOS under ``max_len`` are dropped
    together with any example they would appear in.
    """
    examples: list[CadecExample] = []
    limit = max_len - 1
    for src_sents, tgt_sents in scenes:
        src_ids = [src_bpe.encode(s) for s in src_sents]
        tgt_ids = [tgt_bpe.encode(t) for t in tgt_sents]
        for j in range(1, len(src_sents)):
            k = min(j, max_context)
            srcs = [src_ids[j]] + [src_ids[j - d] for d in range(1, k + 1)]
            ctxs = [tgt_ids[j - d] for d in range(1, k + 1)]
            if any(len(s) > limit for s in srcs + ctxs + [tgt_ids[j]]):
                continue
            examples.append(
                CadecExample(
                    srcs=tuple(tuple(s) for s in srcs),
                    ctx_tgts=tuple(tuple(c) for c in ctxs),
                    tgt=tuple(tgt_ids[j]),
                )
            )
    return examples


def prepare(cfg: ExperimentConfig) -> PreparedData:
    """Generate the corpus and tokenizers; encode training material."""
    synth_cfg = SyntheticConfig(
        dev_scenes=cfg.dev_scenes,
        deixis_test_scenes=cfg.testset_scenes,
        cohesion_test_scenes=cfg.testset_scenes,
    )
    data = gen_synthetic_corpus(cfg.seed, cfg.n_fragments, synth_cfg)
    return prepare_from(data, cfg)


def prepare_from(
    data: SyntheticData,
    cfg: ExperimentConfig,
    src_bpe: BpeModel | None = None,
    tgt_bpe: BpeModel | None = None,
) -> PreparedData:
    """Encode an already-loaded corpus, training tokenizers unless given."""
    if src_bpe is None:
        src_bpe = train_bpe([p.src for p in data.train_pairs], cfg.bpe_merges)
    if tgt_bpe is None:
        tgt_bpe = train_bpe([p.tgt for p in data.train_pairs], cfg.bpe_merges)
    base_cfg = ModelConfig(
        src_vocab=src_bpe.vocab_size,
        tgt_vocab=tgt_bpe.vocab_size,
        n_layers=cfg.n_layers,
        n_heads=cfg.n_heads,
        d_model=cfg.d_model,
        d_ff=cfg.d_ff,
        max_len=cfg.max_len,
        max_context=cfg.max_context,
    )
    limit = cfg.max_len - 1
    train_pairs = []
    for p in data.train_pairs:
        s, t = src_bpe.encode(p.src), tgt_bpe.encode(p.tgt)
        if len(s) <= limit and len(t) <= limit:
            train_pairs.append((s, t))
    train_scenes = scenes_of(data.train_pairs)
    cadec_examples = examples_from_scenes(
        train_scenes, src_bpe, tgt_bpe, cfg.max_context, cfg.max_len
    )
    return PreparedData(
        data=data,
        src_bpe=src_bpe,
        tgt_bpe=tgt_bpe,
        base_cfg=base_cfg,
        train_pairs=train_pairs,
        cadec_examples=cadec_examples,
        dev_scenes=scenes_of(data.dev_pairs),
    )


def _train_config(cfg: ExperimentConfig, steps: int, batch_budget: int | None = None) -> TrainConfig:
    return TrainConfig(
        max_steps=steps,
        eval_every=cfg.eval_every,
        warmup_steps=cfg.warmup_steps,
        lr_scale=cfg.lr_scale,
        batch_budget=batch_budget or cfg.batch_budget,
        patience=cfg.patience,
        average_last=cfg.average_last,
        seed=cfg.seed,
    )


def _dev_sentences(prep: PreparedData, limit: int) -> list[tuple[str, str]]:
    flat = [
        (s, t)
        for src_sents, tgt_sents in prep.dev_scenes
        for s, t in zip(src_sents, tgt_sents)
    ]
    return flat[:limit]


def train_base(prep: PreparedData, cfg: ExperimentConfig) -> tuple[BaseModel, TrainResult]:
    """First pass: a context-agnostic sentence translator, then frozen."""
    params = init_base_params(prep.base_cfg, np.random.default_rng(cfg.seed))
    base = BaseModel(prep.base_cfg, params)
    dev = _dev_sentences(prep, cfg.dev_eval_sentences)

    def dev_bleu() -> float:
        cands = [
            prep.decode_tgt(translate_sentence(base, prep.encode_src(s), beam_size=1))
            for s, _ in dev
        ]
        return bleu(cands, [t for _, t in dev])

    batches = cycle_batches(
        prep.train_pairs,
        cfg.batch_budget,
        lambda pair: len(pair[0]) + len(pair[1]),
        seed=cfg.seed,
    )
    result = train_loop(
        params,
        batches,
        lambda batch: base.nll(
            _pad(batch, 0), _pad(batch, 1)
        ),
        _train_config(cfg, cfg.base_steps),
        evaluators={"dev_bleu": dev_bleu},
    )
    return base, result


def _pad(batch: list[tuple[list[int], list[int]]], side: int) -> np.ndarray:
    return pad_batch([with_eos(pair[side]) for pair in batch])


def train_cadec(
    prep: PreparedData,
    cfg: ExperimentConfig,
    base: BaseModel,
    p_corrupted: float | None = None,
) -> tuple[Cadec, TrainResult]:
    """Second pass over the frozen base, under the mixed first-pass objective."""
    p = cfg.p_corrupted if p_corrupted is None else p_corrupted
    mix = MixedObjectiveConfig(p=p, corruption_rate=cfg.corruption_rate)
    params = init_cadec_params(prep.base_cfg, np.random.default_rng(cfg.seed + 1))
    cadec = Cadec(prep.base_cfg, params, base)
    draw_rng = np.random.default_rng(cfg.seed + 2)
    calls = 0

    def loss_fn(batch: list[CadecExample]):
        nonlocal calls
        calls += 1
        if calls % 100 == 0:
            cadec.clear_caches()  # first-pass draws would otherwise pile up
        value, _ = cadec_training_loss(batch, base, cadec, mix, draw_rng)
        return value

    scorer = make_cadec_scorer(base, cadec, prep.src_bpe, prep.tgt_bpe, beam_size=cfg.beam_size)
    dev_instances = _interleave(prep.data.deixis_dev, prep.data.cohesion_dev)
    dev_instances = dev_instances[: cfg.dev_eval_instances]
    dev_docs = prep.dev_scenes[: max(1, cfg.dev_eval_sentences // 4)]

    def dev_consistency() -> float:
        correct = sum(
            1 for inst in dev_instances
            if scorer(inst, inst.true_tgt) > max(scorer(inst, g) for g in inst.contrastive_tgts)
        )
        return correct / len(dev_instances)

    def dev_bleu() -> float:
        cands, refs = [], []
        for src_sents, tgt_sents in dev_docs:
            outputs = translate_document(
                base, cadec, [prep.encode_src(s) for s in src_sents], beam_size=cfg.beam_size
            )
            cands.extend(prep.decode_tgt(ids) for ids in outputs)
            refs.extend(tgt_sents)
        return bleu(cands, refs)

    evaluators = {"dev_bleu": dev_bleu}
    if dev_instances:
        evaluators["dev_consistency"] = dev_consistency
    batches = cycle_batches(
        prep.cadec_examples,
        cfg.cadec_batch_budget,
        _example_tokens,
        seed=cfg.seed + 3,
    )
    result = train_loop(
        params,
        batches,
        loss_fn,
        _train_config(cfg, cfg.cadec_steps, cfg.cadec_batch_budget),
        evaluators=evaluators,
    )
    cadec.clear_caches()
    return cadec, result


def _example_tokens(example: CadecExample) -> int:
    return (
        sum(len(s) for s in example.srcs)
        + sum(len(c) for c in example.ctx_tgts)
        + len(example.tgt)
    )


def _interleave(a: list, b: list) -> list:
    out = []
    for x, y in zip(a, b):
        out.extend((x, y))
    longer = a if len(a) > len(b) else b
    out.extend(longer[min(len(a), len(b)):])
    return out


def corpus_bleu_base(base: BaseModel, prep: PreparedData, beam_size: int = 4) -> float:
    """Sentence-by-sentence decoding of the whole dev set."""
    cands, refs = [], []
    for src_sents, tgt_sents in prep.dev_scenes:
        for s in src_sents:
            cands.append(prep.decode_tgt(translate_sentence(base, prep.encode_src(s), beam_size)))
        refs.extend(tgt_sents)
    return bleu(cands, refs)


def corpus_bleu_cadec(
    base: BaseModel, cadec: Cadec, prep: PreparedData, beam_size: int = 4
) -> float:
    """Document decoding (base first pass + second-pass rewrite) of the dev set."""
    cands, refs = [], []
    for src_sents, tgt_sents in prep.dev_scenes:
        outputs = translate_document(
            base, cadec, [prep.encode_src(s) for s in src_sents], beam_size=beam_size
        )
        cands.extend(prep.decode_tgt(ids) for ids in outputs)
        refs.extend(tgt_sents)
    return bleu(cands, refs)


def consistency_reports(
    scorer, prep: PreparedData
) -> dict[str, ConsistencyReport]:
    """Per-phenomenon accuracy of a scorer on the held-out contrastive sets."""
    return evaluate_by_phenomenon(scorer, prep.data.test_instances)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    base_bleu: float
    cadec_bleu: float
    base_reports: dict[str, ConsistencyReport]
    cadec_reports: dict[str, ConsistencyReport]
    base_train: TrainResult
    cadec_train: TrainResult
    train_seconds: float


def run_synthetic_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """The whole desk-scale pipeline for one seed at one p value."""
    prep = prepare(cfg)
    started = time.monotonic()
    base, base_result = train_base(prep, cfg)
    cadec, cadec_result = train_cadec(prep, cfg, base)
    train_seconds = time.monotonic() - started
    base_scorer = make_base_scorer(base, prep.src_bpe, prep.tgt_bpe)
    cadec_scorer = make_cadec_scorer(base, cadec, prep.src_bpe, prep.tgt_bpe, beam_size=cfg.beam_size)
    return ExperimentResult(
        config=cfg,
        base_bleu=corpus_bleu_base(base, prep, cfg.beam_size),
        cadec_bleu=corpus_bleu_cadec(base, cadec, prep, cfg.beam_size),
        base_reports=consistency_reports(base_scorer, prep),
        cadec_reports=consistency_reports(cadec_scorer, prep),
        base_train=base_result,
        cadec_train=cadec_result,
        train_seconds=train_seconds,
    )


@dataclass(frozen=True)
class AblationRow:
    p: float
    bleu: float
    deixis: float
    lex_cohesion: float


def ablate_p(cfg: ExperimentConfig, p_values: list[float]) -> list[AblationRow]:
    """Train one base model, then one second pass per requested p."""
    if not p_values:
        raise ValueError("need at least one p value")
    prep = prepare(cfg)
    base, _ = train_base(prep, cfg)
    rows = []
    for p in p_values:
        cadec, _ = train_cadec(prep, cfg, base, p_corrupted=p)
        scorer = make_cadec_scorer(base, cadec, prep.src_bpe, prep.tgt_bpe, beam_size=cfg.beam_size)
        reports = consistency_reports(scorer, prep)
        rows.append(
            AblationRow(
                p=p,
                bleu=corpus_bleu_cadec(base, cadec, prep, cfg.beam_size),
                deixis=reports["deixis"].accuracy,
                lex_cohesion=reports["lex_cohesion"].accuracy,
            )
        )
    return rows


def ablation_tsv(rows: list[AblationRow]) -> str:
    lines = ["p\tbleu\tdeixis\tlex_cohesion"]
    for r in rows:
        lines.append(f"{r.p:g}\t{r.bleu:.2f}\t{100 * r.deixis:.1f}\t{100 * r.lex_cohesion:.1f}")
    return "\n".join(lines) + "\n"


def ablation_table(rows: list[AblationRow]) -> str:
    header = f"{'p':>5}  {'BLEU':>6}  {'deixis':>7}  {'lex. cohesion':>13}"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.p:>5g}  {r.bleu:>6.2f}  {100 * r.deixis:>7.1f}  {100 * r.lex_cohesion:>13.1f}"
        )
    return "\n".join(lines) + "\n"
