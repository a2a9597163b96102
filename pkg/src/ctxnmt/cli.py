"""Command-line entry points for the full workflow.

Subcommands cover corpus generation and preparation, both training passes,
translation, BLEU, test-set construction, contrastive evaluation, and the
corrupted-reference-probability ablation.  Every artifact-producing command
writes a kv manifest (command, seed, config) next to its outputs so a run
can be reproduced from the manifest alone.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bpe import BpeModel, load_bpe, save_bpe, train_bpe
from .checkpoint import load_checkpoint, load_kv, save_checkpoint, save_kv
from .data import (
    filter_pairs,
    group_and_fragment,
    load_corpus,
    load_testset,
    save_corpus,
    save_testset,
)
from .decoding import translate_document, translate_sentence
from .evaluation import (
    bleu,
    evaluate_by_phenomenon,
    format_report_table,
    make_base_scorer,
    make_cadec_scorer,
    report_tsv,
)
from .experiment import (
    ExperimentConfig,
    ablate_p,
    ablation_table,
    ablation_tsv,
    prepare_from,
    train_base,
    train_cadec,
)
from .model import BaseModel, Cadec, ModelConfig, config_from_kv, config_to_kv
from .morphology import ToyLexicon
from .synth import SyntheticConfig, SyntheticData, gen_synthetic_corpus
from .tensor import Tensor
from .testset import (
    AlignedFragment,
    DEFAULT_POLITENESS_BLOCKLIST,
    EllipsisSeed,
    build_cohesion_instances,
    build_deixis_instances,
    build_vp_ellipsis_instances,
    load_alignments,
    load_frequency_list,
    load_lexical_table,
)

# flags shared by the training-flavored commands, mapped onto ExperimentConfig
_CONFIG_FLAGS = (
    ("--seed", "seed", int),
    ("--fragments", "n_fragments", int),
    ("--dev-scenes", "dev_scenes", int),
    ("--testset-scenes", "testset_scenes", int),
    ("--merges", "bpe_merges", int),
    ("--n-layers", "n_layers", int),
    ("--n-heads", "n_heads", int),
    ("--d-model", "d_model", int),
    ("--d-ff", "d_ff", int),
    ("--max-len", "max_len", int),
    ("--max-context", "max_context", int),
    ("--base-steps", "base_steps", int),
    ("--cadec-steps", "cadec_steps", int),
    ("--eval-every", "eval_every", int),
    ("--warmup-steps", "warmup_steps", int),
    ("--lr-scale", "lr_scale", float),
    ("--batch-budget", "batch_budget", int),
    ("--cadec-batch-budget", "cadec_batch_budget", int),
    ("--patience", "patience", int),
    ("--average-last", "average_last", int),
    ("--p", "p_corrupted", float),
    ("--corruption-rate", "corruption_rate", float),
    ("--beam", "beam_size", int),
    ("--dev-eval-sentences", "dev_eval_sentences", int),
    ("--dev-eval-instances", "dev_eval_instances", int),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="kv config file; flags override its values")
    for flag, dest, kind in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=dest, type=kind, default=None)


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_kv(load_kv(args.config))
    overrides = {
        dest: getattr(args, dest)
        for _, dest, _ in _CONFIG_FLAGS
        if getattr(args, dest, None) is not None
    }
    return cfg.with_overrides(**overrides)


def _manifest(path: Path, command: str, cfg: ExperimentConfig | None, **extra) -> None:
    record: dict[str, object] = {"command": command}
    if cfg is not None:
        record["seed"] = cfg.seed
        record.update({f"config.{k}": v for k, v in cfg.to_kv().items()})
    record.update(extra)
    save_kv(path, record)


def _read_groups(path) -> list[list[str]]:
    """Blank-line-separated sentence groups."""
    groups: list[list[str]] = []
    current: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line:
                current.append(line)
            elif current:
                groups.append(current)
                current = []
    if current:
        groups.append(current)
    return groups


def _write_groups(path, groups: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, group in enumerate(groups):
            if i:
                fh.write("\n")
            for sentence in group:
                fh.write(sentence + "\n")


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def _load_data_dir(data_dir: str, train_file: str, dev_file: str) -> SyntheticData:
    root = Path(data_dir)

    def testset_or_empty(name: str):
        p = root / name
        return load_testset(p) if p.exists() else []

    return SyntheticData(
        train_pairs=load_corpus(root / train_file),
        dev_pairs=load_corpus(root / dev_file),
        deixis_dev=testset_or_empty("deixis_dev.txt"),
        deixis_test=testset_or_empty("deixis_test.txt"),
        cohesion_dev=testset_or_empty("cohesion_dev.txt"),
        cohesion_test=testset_or_empty("cohesion_test.txt"),
    )


def _load_tokenizers(data_dir: str) -> tuple[BpeModel, BpeModel]:
    root = Path(data_dir)
    return load_bpe(root / "src.bpe"), load_bpe(root / "tgt.bpe")


def _load_model_dir(model_dir: str, name: str) -> tuple[ModelConfig, dict[str, Tensor]]:
    root = Path(model_dir)
    cfg = config_from_kv(load_kv(root / f"{name}.cfg.tsv"))
    raw = load_checkpoint(root / f"{name}.ckpt")
    params = {k: Tensor(v, requires_grad=True) for k, v in raw.items()}
    return cfg, params


def _load_base(model_dir: str) -> BaseModel:
    cfg, params = _load_model_dir(model_dir, "base")
    return BaseModel(cfg, params)


def _load_cadec(model_dir: str, base: BaseModel) -> Cadec:
    cfg, params = _load_model_dir(model_dir, "cadec")
    return Cadec(cfg, params, base)


def _lexicon(args: argparse.Namespace) -> ToyLexicon:
    if getattr(args, "lexicon", None):
        return ToyLexicon.from_file(args.lexicon)
    return ToyLexicon.bundled()


# ---------------------------------------------------------------------------
# commands


def _cmd_gen_synth(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    synth_cfg = SyntheticConfig(
        dev_scenes=cfg.dev_scenes,
        deixis_test_scenes=cfg.testset_scenes,
        cohesion_test_scenes=cfg.testset_scenes,
    )
    data = gen_synthetic_corpus(cfg.seed, cfg.n_fragments, synth_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(out / "train.tsv", data.train_pairs)
    save_corpus(out / "dev.tsv", data.dev_pairs)
    save_testset(out / "deixis_dev.txt", data.deixis_dev)
    save_testset(out / "deixis_test.txt", data.deixis_test)
    save_testset(out / "cohesion_dev.txt", data.cohesion_dev)
    save_testset(out / "cohesion_test.txt", data.cohesion_test)
    _manifest(
        out / "manifest.tsv",
        "gen-synth",
        cfg,
        train_pairs=len(data.train_pairs),
        dev_pairs=len(data.dev_pairs),
        deixis_test=len(data.deixis_test),
        cohesion_test=len(data.cohesion_test),
    )
    print(f"wrote {len(data.train_pairs)} training pairs to {out}")
    return 0


def _cmd_prepare_data(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    pairs = load_corpus(args.corpus)
    kept = filter_pairs(pairs, min_overlap=args.min_overlap)
    fragments = group_and_fragment(kept, max_gap=args.max_gap)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(out / "filtered.tsv", kept)
    flat = [p for f in fragments for p in f.pairs]
    save_corpus(out / "fragments.tsv", flat)
    src_bpe = train_bpe([p.src for p in kept], cfg.bpe_merges)
    tgt_bpe = train_bpe([p.tgt for p in kept], cfg.bpe_merges)
    save_bpe(out / "src.bpe", src_bpe)
    save_bpe(out / "tgt.bpe", tgt_bpe)
    _manifest(
        out / "prepare_manifest.tsv",
        "prepare-data",
        cfg,
        corpus=str(args.corpus),
        pairs_in=len(pairs),
        pairs_kept=len(kept),
        fragments=len(fragments),
        src_vocab=src_bpe.vocab_size,
        tgt_vocab=tgt_bpe.vocab_size,
    )
    print(
        f"kept {len(kept)}/{len(pairs)} pairs, {len(fragments)} fragments; "
        f"vocab {src_bpe.vocab_size}/{tgt_bpe.vocab_size}"
    )
    return 0


def _cmd_train_base(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    data = _load_data_dir(args.data, args.train_file, args.dev_file)
    src_bpe, tgt_bpe = _load_tokenizers(args.data)
    prep = prepare_from(data, cfg, src_bpe, tgt_bpe)
    base, result = train_base(prep, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "base.ckpt", base.params)
    save_kv(out / "base.cfg.tsv", config_to_kv(prep.base_cfg))
    (out / "metrics.tsv").write_text(result.log_tsv(), encoding="utf-8")
    _manifest(
        out / "manifest.tsv",
        "train-base",
        cfg,
        data=str(args.data),
        steps_run=result.steps_run,
        metrics="metrics.tsv",
    )
    final = {name: value for _, name, value in result.history}
    print(f"trained base for {result.steps_run} steps; dev BLEU {final.get('dev_bleu', 0.0):.2f}")
    return 0


def _cmd_train_cadec(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    data = _load_data_dir(args.data, args.train_file, args.dev_file)
    src_bpe, tgt_bpe = _load_tokenizers(args.data)
    prep = prepare_from(data, cfg, src_bpe, tgt_bpe)
    base = _load_base(args.base)
    cadec, result = train_cadec(prep, cfg, base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "cadec.ckpt", cadec.params)
    save_kv(out / "cadec.cfg.tsv", config_to_kv(cadec.cfg))
    (out / "metrics.tsv").write_text(result.log_tsv(), encoding="utf-8")
    _manifest(
        out / "manifest.tsv",
        "train-cadec",
        cfg,
        data=str(args.data),
        base=str(args.base),
        steps_run=result.steps_run,
        metrics="metrics.tsv",
    )
    final = {name: value for _, name, value in result.history}
    print(
        f"trained second pass for {result.steps_run} steps; "
        f"dev consistency {100 * final.get('dev_consistency', 0.0):.1f}%"
    )
    return 0


def _cmd_translate(args: argparse.Namespace) -> int:
    src_bpe, tgt_bpe = _load_tokenizers(args.data)
    base = _load_base(args.base)
    groups = _read_groups(args.input)
    outputs: list[list[str]] = []
    if args.cadec:
        cadec = _load_cadec(args.cadec, base)
        for group in groups:
            ids = translate_document(
                base, cadec, [src_bpe.encode(s) for s in group], beam_size=args.beam
            )
            outputs.append([tgt_bpe.decode(i) for i in ids])
    else:
        for group in groups:
            outputs.append(
                [
                    tgt_bpe.decode(translate_sentence(base, src_bpe.encode(s), args.beam))
                    for s in group
                ]
            )
    _write_groups(args.output, outputs)
    _manifest(
        Path(str(args.output) + ".manifest.tsv"),
        "translate",
        None,
        input=str(args.input),
        output=str(args.output),
        base=str(args.base),
        cadec=str(args.cadec or ""),
        beam=args.beam,
        groups=len(groups),
    )
    print(f"translated {sum(len(g) for g in groups)} sentences in {len(groups)} groups")
    return 0


def _cmd_bleu(args: argparse.Namespace) -> int:
    cands = _read_lines(args.candidates)
    refs = _read_lines(args.references)
    score = bleu(cands, refs, lowercase=args.lowercase)
    print(f"BLEU = {score:.2f}")
    return 0


def _cmd_build_testset(args: argparse.Namespace) -> int:
    morph = _lexicon(args)
    if args.phenomenon == "deixis":
        src_groups = _read_groups(args.src_file)
        tgt_groups = _read_groups(args.tgt_file)
        if len(src_groups) != len(tgt_groups):
            raise ValueError("source and target files carry different group counts")
        blocklist = (
            frozenset(w.strip().lower() for w in args.blocklist.split(",") if w.strip())
            if args.blocklist is not None
            else DEFAULT_POLITENESS_BLOCKLIST
        )
        instances = build_deixis_instances(
            list(zip(src_groups, tgt_groups)), morph, blocklist
        )
    elif args.phenomenon == "lex_cohesion":
        src_groups = _read_groups(args.src_file)
        tgt_groups = _read_groups(args.tgt_file)
        blocks = load_alignments(args.alignments)
        if not (len(src_groups) == len(tgt_groups) == len(blocks)):
            raise ValueError("source, target, and alignment files must align")
        fragments = [
            AlignedFragment(tuple(s), tuple(t), links)
            for s, t, links in zip(src_groups, tgt_groups, blocks)
        ]
        instances = build_cohesion_instances(
            fragments,
            load_lexical_table(args.lexical_table),
            morph.lemmatize,
            load_frequency_list(args.frequency_list),
            morph,
            freq_cutoff=args.freq_cutoff,
            min_prob=args.min_prob,
        )
    else:  # ellipsis_vp
        seeds = []
        with open(args.seeds, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    seeds.append(
                        EllipsisSeed(
                            src_sents=tuple(record["src"]),
                            tgt_sents=tuple(record["tgt"]),
                            verb_index=record["verb_index"],
                            latest_relevant_distance=record.get("distance"),
                        )
                    )
                except (KeyError, json.JSONDecodeError) as exc:
                    raise ValueError(f"{args.seeds}:{lineno}: bad seed record: {exc}") from exc
        instances = build_vp_ellipsis_instances(
            seeds,
            load_lexical_table(args.lexical_table),
            morph.lemmatize,
            morph,
            k=args.k,
            src_do_word=args.do_word,
        )
    save_testset(args.out, instances)
    _manifest(
        Path(str(args.out) + ".manifest.tsv"),
        f"build-testset {args.phenomenon}",
        None,
        out=str(args.out),
        instances=len(instances),
    )
    print(f"wrote {len(instances)} {args.phenomenon} instances to {args.out}")
    return 0


def _cmd_eval_consistency(args: argparse.Namespace) -> int:
    instances = load_testset(args.testset)
    src_bpe, tgt_bpe = _load_tokenizers(args.data)
    base = _load_base(args.base)
    if args.cadec:
        cadec = _load_cadec(args.cadec, base)
        scorer = make_cadec_scorer(base, cadec, src_bpe, tgt_bpe, beam_size=args.beam)
    else:
        scorer = make_base_scorer(base, src_bpe, tgt_bpe)
    reports = list(evaluate_by_phenomenon(scorer, instances).values())
    table = format_report_table(reports)
    print(table, end="")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "consistency.tsv").write_text(report_tsv(reports), encoding="utf-8")
    (out / "consistency.txt").write_text(table, encoding="utf-8")
    _manifest(
        out / "consistency_manifest.tsv",
        "eval-consistency",
        None,
        testset=str(args.testset),
        base=str(args.base),
        cadec=str(args.cadec or ""),
        beam=args.beam,
        instances=len(instances),
    )
    return 0


def _cmd_ablate_p(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    try:
        values = [float(v) for v in args.p_list.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"--p-list must be comma-separated numbers, got {args.p_list!r}") from None
    rows = ablate_p(cfg, values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.tsv").write_text(ablation_tsv(rows), encoding="utf-8")
    table = ablation_table(rows)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    _manifest(out / "manifest.tsv", "ablate-p", cfg, p_list=args.p_list)
    print(table, end="")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxnmt",
        description="Two-pass context-aware translation laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate the synthetic bilingual corpus")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("prepare-data", help="filter, fragment, and learn subwords")
    _add_config_flags(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-overlap", type=float, default=0.9)
    p.add_argument("--max-gap", type=float, default=7.0)
    p.set_defaults(func=_cmd_prepare_data)

    for name, fn in (("train-base", _cmd_train_base), ("train-cadec", _cmd_train_cadec)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} on a prepared data directory")
        _add_config_flags(p)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--train-file", default="train.tsv")
        p.add_argument("--dev-file", default="dev.tsv")
        if name == "train-cadec":
            p.add_argument("--base", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("translate", help="translate blank-line-separated groups")
    p.add_argument("--data", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--cadec", default=None)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--beam", type=int, default=4)
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("bleu", help="corpus BLEU between two sentence-per-line files")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--lowercase", action="store_true")
    p.set_defaults(func=_cmd_bleu)

    p = sub.add_parser("build-testset", help="build a contrastive test suite")
    p.add_argument("phenomenon", choices=("deixis", "lex_cohesion", "ellipsis_vp"))
    p.add_argument("--out", required=True)
    p.add_argument("--src-file")
    p.add_argument("--tgt-file")
    p.add_argument("--alignments")
    p.add_argument("--lexical-table")
    p.add_argument("--frequency-list")
    p.add_argument("--seeds")
    p.add_argument("--lexicon")
    p.add_argument("--blocklist", default=None)
    p.add_argument("--freq-cutoff", type=int, default=5000)
    p.add_argument("--min-prob", type=float, default=0.1)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--do-word", default="do")
    p.set_defaults(func=_cmd_build_testset)

    p = sub.add_parser("eval-consistency", help="score a model on a contrastive set")
    p.add_argument("--testset", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--cadec", default=None)
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_eval_consistency)

    p = sub.add_parser("ablate-p", help="sweep the corrupted-reference probability")
    _add_config_flags(p)
    p.add_argument("--p-list", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate_p)

    return parser


_REQUIRED_BY_PHENOMENON = {
    "deixis": ("src_file", "tgt_file"),
    "lex_cohesion": ("src_file", "tgt_file", "alignments", "lexical_table", "frequency_list"),
    "ellipsis_vp": ("seeds", "lexical_table"),
}


def _validate_build_args(args: argparse.Namespace) -> None:
    missing = [
        "--" + name.replace("_", "-")
        for name in _REQUIRED_BY_PHENOMENON[args.phenomenon]
        if getattr(args, name) is None
    ]
    if missing:
        raise ValueError(
            f"build-testset {args.phenomenon} requires {', '.join(missing)}"
        )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "build-testset":
            _validate_build_args(args)
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
