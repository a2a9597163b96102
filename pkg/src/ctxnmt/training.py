"""Optimization: Adam with the warmup/decay schedule, reference
corruption, the stochastic mixed first-pass objective for the second
pass, token-budget batching, checkpoint averaging, and a training loop
with a two-metric early-stopping rule.

The loop is model-agnostic: it consumes a batch iterator, a loss
callable, and named evaluator callables. Stopping: when no monitored
metric has improved for `patience` consecutive evaluations, training
ends and the last `average_last` snapshots are averaged elementwise.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import tensor as T
from .bpe import N_SPECIAL
from .model import BaseModel, Cadec, masked_token_nll, pad_batch, with_eos
from .tensor import Tensor


class TrainingDiverged(RuntimeError):
    pass


def lr_at(step: int, warmup_steps: int, scale: float) -> float:
    """scale * min(step^-0.5, step * warmup^-1.5); rises during warmup,
    decays as 1/sqrt(step) afterwards."""
    if step < 1:
        raise ValueError("learning-rate schedule starts at step 1")
    # branch instead of min(): the linear ramp evaluated at step == warmup
    # can land one ulp under warmup^-0.5, and the boundary value is a contract
    if step < warmup_steps:
        return scale * step * warmup_steps ** -1.5
    return scale * step ** -0.5


class Adam:
    def __init__(
        self,
        params: dict[str, Tensor],
        warmup_steps: int,
        scale: float,
        beta1: float = 0.9,
        beta2: float = 0.98,
        eps: float = 1e-9,
    ):
        self.params = params
        self.warmup_steps = warmup_steps
        self.scale = scale
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_num = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        T.zero_grads(self.params)

    def step(self) -> float:
        """One bias-corrected update from current gradients; returns the lr used."""
        self.step_num += 1
        lr = lr_at(self.step_num, self.warmup_steps, self.scale)
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad ** 2
            m_hat = m / (1 - b1 ** self.step_num)
            v_hat = v / (1 - b2 ** self.step_num)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return lr


def corrupt_reference(
    ref: Sequence[int], rate: float, vocab_size: int, rng: np.random.Generator
) -> list[int]:
    """Replace round(rate*n) positions (half away from zero) of a content
    token sequence with uniform random non-special tokens != the original."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("corruption rate must be in [0, 1]")
    n = len(ref)
    if n == 0:
        raise ValueError("cannot corrupt an empty reference")
    if vocab_size <= N_SPECIAL + 1:
        raise ValueError("vocabulary has no alternative content tokens")
    count = math.floor(rate * n + 0.5)
    out = list(ref)
    for pos in rng.choice(n, size=count, replace=False):
        draw = int(rng.integers(N_SPECIAL, vocab_size - 1))
        out[pos] = draw + 1 if draw >= out[pos] else draw  # skip the original
    return out


@dataclass(frozen=True)
class MixedObjectiveConfig:
    p: float
    corruption_rate: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("Bernoulli parameter p must be in [0, 1]")
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError("corruption_rate must be in [0, 1]")


@dataclass(frozen=True)
class CadecExample:
    """One second-pass training example: sources current-first, reference
    translations of the context sentences, reference current translation."""

    srcs: tuple[tuple[int, ...], ...]
    ctx_tgts: tuple[tuple[int, ...], ...]
    tgt: tuple[int, ...]

    def __post_init__(self):
        if not self.srcs:
            raise ValueError("need the current source sentence")
        if len(self.ctx_tgts) != len(self.srcs) - 1:
            raise ValueError("context translations must align with context sources")
        if not self.tgt:
            raise ValueError("empty reference translation")


def draw_first_pass(
    example: CadecExample, base: BaseModel, mix: MixedObjectiveConfig, rng: np.random.Generator
) -> tuple[list[int], bool]:
    """Bernoulli(p) choice of the first-pass translation: the corrupted
    reference (True) or a fresh base-model sample (False)."""
    if rng.random() < mix.p:
        return corrupt_reference(example.tgt, mix.corruption_rate, base.cfg.tgt_vocab, rng), True
    return base.sample(list(example.srcs[0]), rng), False


def cadec_training_loss(
    examples: Sequence[CadecExample],
    base: BaseModel,
    cadec: Cadec,
    mix: MixedObjectiveConfig,
    rng: np.random.Generator,
) -> tuple[Tensor, int]:
    """Mean per-token NLL of the references under the second pass, with a
    single Monte-Carlo first-pass draw per example; also reports how many
    examples took the corrupted-reference branch. Branch decisions are made
    per example in order; the sampled branches then share one batched draw."""
    firsts: list[list[int] | None] = []
    to_sample: list[int] = []
    for i, ex in enumerate(examples):
        if rng.random() < mix.p:
            firsts.append(corrupt_reference(ex.tgt, mix.corruption_rate, base.cfg.tgt_vocab, rng))
        else:
            firsts.append(None)
            to_sample.append(i)
    corrupted = len(examples) - len(to_sample)
    if to_sample:
        drawn = base.sample_batch([list(examples[i].srcs[0]) for i in to_sample], rng)
        for i, first in zip(to_sample, drawn):
            firsts[i] = first
    enc_mems, dec_mems, tgts = [], [], []
    for ex, first in zip(examples, firsts):
        srcs = [list(s) for s in ex.srcs]
        enc_mems.append(cadec.encoder_memory(srcs))
        dec_mems.append(cadec.decoder_memory(srcs, first, [list(t) for t in ex.ctx_tgts]))
        tgts.append(with_eos(list(ex.tgt)))
    tgt_ids = pad_batch(tgts)
    loss = masked_token_nll(cadec.forward_batch(enc_mems, dec_mems, tgt_ids), tgt_ids)
    return loss, corrupted


def base_training_loss(pairs: Sequence[tuple[Sequence[int], Sequence[int]]], base: BaseModel) -> Tensor:
    srcs = pad_batch([with_eos(list(s)) for s, _ in pairs])
    tgts = pad_batch([with_eos(list(t)) for _, t in pairs])
    return base.nll(srcs, tgts)


def make_batches(
    items: Sequence, budget: int, length_fn: Callable[[object], int], rng: np.random.Generator | None = None
) -> list[list]:
    """Group items into batches of at most `budget` total length, bucketing
    by approximate length first so padding stays small. Every item lands in
    exactly one batch; an oversized item gets a batch of its own. When an
    rng is given, batch order (not membership) is shuffled."""
    if budget < 1:
        raise ValueError("token budget must be positive")
    order = sorted(range(len(items)), key=lambda i: (length_fn(items[i]), i))
    batches: list[list] = []
    current: list = []
    used = 0
    for idx in order:
        need = length_fn(items[idx])
        if current and used + need > budget:
            batches.append(current)
            current, used = [], 0
        current.append(items[idx])
        used += need
    if current:
        batches.append(current)
    if rng is not None:
        rng.shuffle(batches)
    return batches


def average_checkpoints(checkpoints: Sequence[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    """Elementwise arithmetic mean of parameter sets with identical names
    and shapes."""
    if not checkpoints:
        raise ValueError("no checkpoints to average")
    names = set(checkpoints[0])
    for i, ckpt in enumerate(checkpoints[1:], start=2):
        if set(ckpt) != names:
            raise ValueError(f"checkpoint {i} has different parameter names")
        for name in names:
            if ckpt[name].shape != checkpoints[0][name].shape:
                raise ValueError(f"checkpoint {i} shape mismatch for {name}")
    # anchored mean: averaging identical checkpoints must be the identity,
    # and snapshots taken a few hundred steps apart are nearly equal anyway
    k = float(len(checkpoints))
    out = {}
    for name in names:
        anchor = checkpoints[0][name]
        drift = sum(c[name] - anchor for c in checkpoints[1:])
        out[name] = anchor + drift / k if len(checkpoints) > 1 else anchor.copy()
    return out


def snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in params.items()}


def load_into(params: dict[str, Tensor], values: dict[str, np.ndarray]) -> None:
    if set(params) != set(values):
        raise ValueError("parameter names do not match")
    for k, p in params.items():
        if p.data.shape != values[k].shape:
            raise ValueError(f"shape mismatch for {k}")
        p.data = values[k].astype(p.data.dtype, copy=True)


@dataclass(frozen=True)
class TrainConfig:
    max_steps: int
    eval_every: int
    warmup_steps: int = 16000
    lr_scale: float = 4.0
    batch_budget: int = 16000
    patience: int = 5
    average_last: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("max_steps", "eval_every", "warmup_steps", "batch_budget", "patience", "average_last"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class TrainResult:
    final_params: dict[str, np.ndarray]
    history: list[tuple[int, str, float]] = field(default_factory=list)
    steps_run: int = 0

    def log_tsv(self) -> str:
        return "".join(f"{step}\t{metric}\t{value}\n" for step, metric, value in self.history)


def train_loop(
    params: dict[str, Tensor],
    batches: Iterator,
    loss_fn: Callable[[object], Tensor],
    cfg: TrainConfig,
    evaluators: dict[str, Callable[[], float]] | None = None,
) -> TrainResult:
    """Generic optimize-evaluate-stop loop over an endless batch iterator.

    Dev metrics are 'higher is better'. A NaN or infinite loss aborts with
    TrainingDiverged. The returned parameters are the average of the last
    `average_last` evaluation-time snapshots, and `params` is updated in
    place to that average.
    """
    evaluators = evaluators or {}
    opt = Adam(params, cfg.warmup_steps, cfg.lr_scale)
    result = TrainResult(final_params={})
    snapshots: deque[dict[str, np.ndarray]] = deque(maxlen=cfg.average_last)
    best: dict[str, float] = {}
    stale = 0
    loss_acc, loss_n = 0.0, 0
    for step in range(1, cfg.max_steps + 1):
        loss = loss_fn(next(batches))
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(f"non-finite loss {value} at step {step}")
        opt.zero_grad()
        T.backward(loss)
        opt.step()
        result.steps_run = step
        loss_acc += value
        loss_n += 1
        if step % cfg.eval_every and step != cfg.max_steps:
            continue
        result.history.append((step, "train_loss", loss_acc / loss_n))
        loss_acc, loss_n = 0.0, 0
        snapshots.append(snapshot(params))
        improved = not evaluators
        for name, evaluate in evaluators.items():
            score = float(evaluate())
            result.history.append((step, name, score))
            if name not in best or score > best[name]:
                best[name] = score
                improved = True
        stale = 0 if improved else stale + 1
        if stale >= cfg.patience:
            break
    if not snapshots:
        snapshots.append(snapshot(params))
    result.final_params = average_checkpoints(list(snapshots))
    load_into(params, result.final_params)
    return result


def cycle_batches(
    items: Sequence, budget: int, length_fn: Callable[[object], int], seed: int
) -> Iterator[list]:
    """Endless epoch iterator: token-budget batches, reshuffled each epoch."""
    rng = np.random.default_rng(seed)
    while True:
        yield from make_batches(items, budget, length_fn, rng)
