"""Context-agnostic Transformer and the context-aware second-pass decoder.

The base model is a standard post-norm encoder-decoder Transformer trained
on isolated sentence pairs. The second-pass decoder rewrites its output: a
decoder-only stack whose layers run masked self-attention, then attention
over base-encoder states of the current and up to ``max_context`` previous
source sentences, then attention over base-decoder representations of the
first-pass translation and the context translations, then a feed-forward
block. Sentence distance (0 = current) is appended to every attended state
as a one-hot vector, so the encoder-side keys/values have d_model + C + 1
features and the decoder-side ones 2*d_model + C + 1 (base decoder state
concatenated with the raw target embedding of the input token at that
position). The base model is frozen whenever the second pass is involved:
its activations enter second-pass computations as plain arrays.

Token conventions: public APIs take content token ids (no specials). A
source is encoded as content + EOS, a target scored as content + EOS with
a BOS-shifted decoder input, and PAD fills batch slack.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .bpe import BOS_ID, EOS_ID, PAD_ID
from .tensor import Tensor, no_grad

NEG_INF = -1e9


@dataclass(frozen=True)
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    d_ff: int = 128
    max_len: int = 32
    max_context: int = 3
    ln_eps: float = 1e-6

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.n_heads} heads")
        if self.max_context < 0:
            raise ValueError("max_context must be >= 0")
        if self.max_len < 2:
            raise ValueError("max_len must fit at least one token plus EOS")
        for name in ("src_vocab", "tgt_vocab"):
            if getattr(self, name) < 6:
                raise ValueError(f"{name} must cover the 5 special ids plus content")

    @classmethod
    def paper_scale(cls, src_vocab: int, tgt_vocab: int) -> "ModelConfig":
        return cls(src_vocab, tgt_vocab, n_layers=6, n_heads=8, d_model=512, d_ff=2048, max_len=128)


_CONFIG_FIELDS = (
    "src_vocab", "tgt_vocab", "n_layers", "n_heads",
    "d_model", "d_ff", "max_len", "max_context", "ln_eps",
)


def config_to_kv(cfg: ModelConfig) -> dict[str, str]:
    return {name: repr(getattr(cfg, name)) for name in _CONFIG_FIELDS}


def config_from_kv(values: dict[str, str]) -> ModelConfig:
    kwargs = {}
    for name in _CONFIG_FIELDS:
        if name not in values:
            raise ValueError(f"missing model config key: {name}")
        raw = values[name]
        kwargs[name] = float(raw) if name == "ln_eps" else int(raw)
    return ModelConfig(**kwargs)


def sinusoidal_positions(max_len: int, d_model: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(i / 2.0) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def pad_batch(seqs: list[list[int]], width: int | None = None) -> np.ndarray:
    if not seqs:
        raise ValueError("empty batch")
    w = max(len(s) for s in seqs)
    if width is not None:
        if width < w:
            raise ValueError(f"width {width} shorter than longest sequence {w}")
        w = width
    out = np.full((len(seqs), w), PAD_ID, dtype=np.int64)
    for row, seq in enumerate(seqs):
        out[row, : len(seq)] = seq
    return out


def with_eos(content: list[int]) -> list[int]:
    return list(content) + [EOS_ID]


def shift_right(tgt_ids: np.ndarray) -> np.ndarray:
    """Decoder inputs: BOS then the target shifted one right (PAD slack kept)."""
    bos = np.full((tgt_ids.shape[0], 1), BOS_ID, dtype=tgt_ids.dtype)
    return np.concatenate([bos, tgt_ids[:, :-1]], axis=1)


def padding_mask(ids: np.ndarray) -> np.ndarray:
    return np.where(ids == PAD_ID, NEG_INF, 0.0)[:, None, None, :]


def causal_mask(n: int) -> np.ndarray:
    return np.triu(np.full((n, n), NEG_INF), k=1)[None, None]


# Attention-weight capture used by tests and demos: every attention call
# appends its post-softmax weights (a plain array) to the innermost trace.
_TRACE_STACK: list[list[np.ndarray]] = []


class trace_attention:
    def __enter__(self) -> list[np.ndarray]:
        records: list[np.ndarray] = []
        _TRACE_STACK.append(records)
        return records

    def __exit__(self, *exc) -> bool:
        _TRACE_STACK.pop()
        return False


def _glorot(rng: np.random.Generator, n_in: int, n_out: int) -> Tensor:
    bound = math.sqrt(6.0 / (n_in + n_out))
    return Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True)


def _attn_params(rng, d_model: int, name: str, kv_dim: int | None = None) -> dict[str, Tensor]:
    kv = kv_dim if kv_dim is not None else d_model
    return {
        f"{name}.wq": _glorot(rng, d_model, d_model),
        f"{name}.wk": _glorot(rng, kv, d_model),
        f"{name}.wv": _glorot(rng, kv, d_model),
        f"{name}.wo": _glorot(rng, d_model, d_model),
    }


def _ln_params(d_model: int, name: str) -> dict[str, Tensor]:
    return {
        f"{name}.g": Tensor(np.ones(d_model), requires_grad=True),
        f"{name}.b": Tensor(np.zeros(d_model), requires_grad=True),
    }


def _ffn_params(rng, d_model: int, d_ff: int, name: str) -> dict[str, Tensor]:
    return {
        f"{name}.w1": _glorot(rng, d_model, d_ff),
        f"{name}.b1": Tensor(np.zeros(d_ff), requires_grad=True),
        f"{name}.w2": _glorot(rng, d_ff, d_model),
        f"{name}.b2": Tensor(np.zeros(d_model), requires_grad=True),
    }


def init_base_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    d = cfg.d_model
    params: dict[str, Tensor] = {
        "src_emb": _glorot(rng, cfg.src_vocab, d),
        "tgt_emb": _glorot(rng, cfg.tgt_vocab, d),
    }
    for i in range(cfg.n_layers):
        params.update(_attn_params(rng, d, f"enc{i}.self"))
        params.update(_ln_params(d, f"enc{i}.ln1"))
        params.update(_ffn_params(rng, d, cfg.d_ff, f"enc{i}.ffn"))
        params.update(_ln_params(d, f"enc{i}.ln2"))
    for i in range(cfg.n_layers):
        params.update(_attn_params(rng, d, f"dec{i}.self"))
        params.update(_ln_params(d, f"dec{i}.ln1"))
        params.update(_attn_params(rng, d, f"dec{i}.cross"))
        params.update(_ln_params(d, f"dec{i}.ln2"))
        params.update(_ffn_params(rng, d, cfg.d_ff, f"dec{i}.ffn"))
        params.update(_ln_params(d, f"dec{i}.ln3"))
    params["out.w"] = _glorot(rng, d, cfg.tgt_vocab)
    params["out.b"] = Tensor(np.zeros(cfg.tgt_vocab), requires_grad=True)
    return params


def init_cadec_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    d, c = cfg.d_model, cfg.max_context
    params: dict[str, Tensor] = {"emb": _glorot(rng, cfg.tgt_vocab, d)}
    for i in range(cfg.n_layers):
        params.update(_attn_params(rng, d, f"lay{i}.self"))
        params.update(_ln_params(d, f"lay{i}.ln1"))
        params.update(_attn_params(rng, d, f"lay{i}.src", kv_dim=d + c + 1))
        params.update(_ln_params(d, f"lay{i}.ln2"))
        params.update(_attn_params(rng, d, f"lay{i}.tgt", kv_dim=2 * d + c + 1))
        params.update(_ln_params(d, f"lay{i}.ln3"))
        params.update(_ffn_params(rng, d, cfg.d_ff, f"lay{i}.ffn"))
        params.update(_ln_params(d, f"lay{i}.ln4"))
    params["out.w"] = _glorot(rng, d, cfg.tgt_vocab)
    params["out.b"] = Tensor(np.zeros(cfg.tgt_vocab), requires_grad=True)
    return params


def _attend(params, name: str, n_heads: int, query_in: Tensor, kv_in: Tensor, mask) -> Tensor:
    q = query_in @ params[f"{name}.wq"]
    k = kv_in @ params[f"{name}.wk"]
    v = kv_in @ params[f"{name}.wv"]
    b, tq, d = q.shape
    dk = d // n_heads
    q = q.reshape(b, tq, n_heads, dk).swapaxes(1, 2)
    k = k.reshape(b, k.shape[1], n_heads, dk).swapaxes(1, 2)
    v = v.reshape(b, v.shape[1], n_heads, dk).swapaxes(1, 2)
    scores = (q @ k.swapaxes(2, 3)) * (1.0 / math.sqrt(dk))
    if mask is not None:
        scores = scores + mask
    probs = T.softmax(scores, axis=-1)
    if _TRACE_STACK:
        _TRACE_STACK[-1].append(probs.data)
    merged = (probs @ v).swapaxes(1, 2).reshape(b, tq, d)
    return merged @ params[f"{name}.wo"]


def _ffn(params, name: str, x: Tensor) -> Tensor:
    hidden = T.relu(x @ params[f"{name}.w1"] + params[f"{name}.b1"])
    return hidden @ params[f"{name}.w2"] + params[f"{name}.b2"]


def masked_token_nll(log_probs: Tensor, tgt_ids: np.ndarray) -> Tensor:
    """Mean negative log-likelihood per non-PAD target token."""
    picked = T.gather(log_probs, tgt_ids)
    mask = (tgt_ids != PAD_ID).astype(np.float64)
    count = mask.sum()
    if count == 0:
        raise ValueError("no unpadded target tokens to score")
    return -(picked * mask).sum() / count


class BaseModel:
    """Sentence-level encoder-decoder; also the representation provider
    (encoder states, forced-decoding states) for the second pass."""

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor]):
        self.cfg = cfg
        self.params = params
        self._pos = sinusoidal_positions(cfg.max_len, cfg.d_model)

    def _check_len(self, ids: np.ndarray) -> None:
        if ids.shape[1] > self.cfg.max_len:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len {self.cfg.max_len}")

    def _embed(self, table: str, ids: np.ndarray) -> Tensor:
        self._check_len(ids)
        scaled = T.embedding(self.params[table], ids) * math.sqrt(self.cfg.d_model)
        return scaled + self._pos[: ids.shape[1]]

    def _sub(self, name: str, x: Tensor, out: Tensor) -> Tensor:
        p = self.params
        return T.layer_norm(x + out, p[f"{name}.g"], p[f"{name}.b"], eps=self.cfg.ln_eps)

    def encode(self, src_ids: np.ndarray) -> tuple[Tensor, np.ndarray]:
        """Last-layer encoder states [B,S,d] and the source padding mask."""
        p, h = self.params, self.cfg.n_heads
        mask = padding_mask(src_ids)
        x = self._embed("src_emb", src_ids)
        for i in range(self.cfg.n_layers):
            x = self._sub(f"enc{i}.ln1", x, _attend(p, f"enc{i}.self", h, x, x, mask))
            x = self._sub(f"enc{i}.ln2", x, _ffn(p, f"enc{i}.ffn", x))
        return x, mask

    def decoder_states(self, tgt_in: np.ndarray, enc_out: Tensor, src_mask: np.ndarray) -> Tensor:
        p, h = self.params, self.cfg.n_heads
        mask = causal_mask(tgt_in.shape[1]) + padding_mask(tgt_in)
        x = self._embed("tgt_emb", tgt_in)
        for i in range(self.cfg.n_layers):
            x = self._sub(f"dec{i}.ln1", x, _attend(p, f"dec{i}.self", h, x, x, mask))
            x = self._sub(f"dec{i}.ln2", x, _attend(p, f"dec{i}.cross", h, x, enc_out, src_mask))
            x = self._sub(f"dec{i}.ln3", x, _ffn(p, f"dec{i}.ffn", x))
        return x

    def forward(self, src_ids: np.ndarray, tgt_ids: np.ndarray) -> Tensor:
        """Per-position log-probabilities [B,T,V] for targets ``tgt_ids``
        (content + EOS [+ PAD]); decoder inputs are the BOS-shifted targets."""
        enc_out, src_mask = self.encode(src_ids)
        states = self.decoder_states(shift_right(tgt_ids), enc_out, src_mask)
        logits = states @ self.params["out.w"] + self.params["out.b"]
        return T.log_softmax(logits, axis=-1)

    def nll(self, src_ids: np.ndarray, tgt_ids: np.ndarray) -> Tensor:
        return masked_token_nll(self.forward(src_ids, tgt_ids), tgt_ids)

    def sample(self, src: list[int], rng: np.random.Generator, max_len: int | None = None) -> list[int]:
        """Ancestral sample of content tokens (EOS stripped) for one source."""
        limit = (max_len or self.cfg.max_len) - 1  # room for EOS when re-encoded
        src_ids = pad_batch([with_eos(src)])
        out: list[int] = []
        with no_grad():
            enc_out, src_mask = self.encode(src_ids)
            for _ in range(limit):
                tgt_in = np.array([[BOS_ID] + out], dtype=np.int64)
                states = self.decoder_states(tgt_in, enc_out, src_mask)
                logits = states.data[0, -1] @ self.params["out.w"].data + self.params["out.b"].data
                probs = np.exp(logits - logits.max())
                probs /= probs.sum()
                token = int(rng.choice(self.cfg.tgt_vocab, p=probs))
                if token == EOS_ID:
                    break
                out.append(token)
        return out

    def sample_batch(
        self, srcs: Sequence[list[int]], rng: np.random.Generator, max_len: int | None = None
    ) -> list[list[int]]:
        """Ancestral samples (content tokens, EOS stripped) for several
        sources, sharing forward passes across sequences; each step draws a
        token per still-open sequence in input order."""
        if not srcs:
            return []
        limit = (max_len or self.cfg.max_len) - 1  # room for EOS when re-encoded
        outs: list[list[int]] = [[] for _ in srcs]
        open_: list[int] = list(range(len(srcs)))
        with no_grad():
            enc_out, src_mask = self.encode(pad_batch([with_eos(list(s)) for s in srcs]))
            enc_data = enc_out.data
            w, b = self.params["out.w"].data, self.params["out.b"].data
            for _ in range(limit):
                tgt_in = pad_batch([[BOS_ID] + outs[i] for i in open_])
                states = self.decoder_states(tgt_in, Tensor(enc_data[open_]), src_mask[open_])
                still_open: list[int] = []
                for row, i in enumerate(open_):
                    logits = states.data[row, len(outs[i])] @ w + b
                    probs = np.exp(logits - logits.max())
                    probs /= probs.sum()
                    token = int(rng.choice(self.cfg.tgt_vocab, p=probs))
                    if token != EOS_ID:
                        outs[i].append(token)
                        still_open.append(i)
                open_ = still_open
                if not open_:
                    break
        return outs

    def step_scorer(self, src: list[int]):
        """Next-token log-prob function over prefixes, for beam search."""
        with no_grad():
            enc_out, src_mask = self.encode(pad_batch([with_eos(src)]))
        enc_data = enc_out.data

        def step(prefixes: list[list[int]]) -> np.ndarray:
            rows = [[BOS_ID] + list(p) for p in prefixes]
            tgt_in = pad_batch(rows)
            n = len(rows)
            with no_grad():
                enc = Tensor(np.repeat(enc_data, n, axis=0))
                states = self.decoder_states(tgt_in, enc, np.repeat(src_mask, n, axis=0))
                logits = states @ self.params["out.w"] + self.params["out.b"]
                log_probs = T.log_softmax(logits, axis=-1).data
            return np.stack([log_probs[i, len(rows[i]) - 1] for i in range(n)])

        return step

    def forced_states(self, src: list[int], tgt: list[int]) -> tuple[np.ndarray, np.ndarray]:
        """Teacher-forced last-layer decoder states and input-token ids for
        target ``tgt`` (content): rows cover inputs BOS + content, so row t
        is the state after reading input t. Plain arrays (no graph)."""
        tgt_in = np.array([[BOS_ID] + list(tgt)], dtype=np.int64)
        with no_grad():
            enc_out, src_mask = self.encode(pad_batch([with_eos(src)]))
            states = self.decoder_states(tgt_in, enc_out, src_mask)
        return states.data[0], tgt_in[0]


class Cadec:
    """Second-pass decoder over frozen base-model representations.

    Sentence lists are ordered current-first: ``srcs[k]`` is the source at
    distance k (k = 0 current, k = 1 immediately preceding). Base-model
    activations are cached per sentence; callers must not mutate base
    parameters while a Cadec instance is alive (clear_caches undoes that).
    """

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor], base: BaseModel):
        if cfg.max_context != base.cfg.max_context or cfg.d_model != base.cfg.d_model:
            raise ValueError("second-pass config must share d_model and max_context with the base")
        self.cfg = cfg
        self.params = params
        self.base = base
        self._pos = sinusoidal_positions(cfg.max_len, cfg.d_model)
        self._enc_cache: dict[tuple[int, ...], np.ndarray] = {}
        self._dec_cache: dict[tuple[tuple[int, ...], tuple[int, ...]], np.ndarray] = {}

    def clear_caches(self) -> None:
        self._enc_cache.clear()
        self._dec_cache.clear()

    def _one_hot(self, distance: int, rows: int) -> np.ndarray:
        c = self.cfg.max_context
        if not 0 <= distance <= c:
            raise ValueError(f"sentence distance {distance} outside 0..{c}")
        block = np.zeros((rows, c + 1))
        block[:, distance] = 1.0
        return block

    def _encoded(self, src: list[int]) -> np.ndarray:
        key = tuple(src)
        if key not in self._enc_cache:
            with no_grad():
                enc_out, _ = self.base.encode(pad_batch([with_eos(src)]))
            self._enc_cache[key] = enc_out.data[0]
        return self._enc_cache[key]

    def _forced(self, src: list[int], tgt: list[int]) -> np.ndarray:
        key = (tuple(src), tuple(tgt))
        if key not in self._dec_cache:
            states, tgt_in = self.base.forced_states(src, tgt)
            emb = self.base.params["tgt_emb"].data[tgt_in]
            self._dec_cache[key] = np.concatenate([states, emb], axis=1)
        return self._dec_cache[key]

    def encoder_memory(self, srcs: list[list[int]]) -> np.ndarray:
        """Keys/values [M, d+C+1] over current + context source sentences."""
        if not srcs:
            raise ValueError("need at least the current sentence")
        if len(srcs) - 1 > self.cfg.max_context:
            raise ValueError(f"{len(srcs) - 1} context sentences exceed max_context {self.cfg.max_context}")
        blocks = []
        for distance, src in enumerate(srcs):
            states = self._encoded(src)
            blocks.append(np.concatenate([states, self._one_hot(distance, states.shape[0])], axis=1))
        return np.concatenate(blocks, axis=0)

    def decoder_memory(self, srcs: list[list[int]], first_pass: list[int], ctx_tgts: list[list[int]]) -> np.ndarray:
        """Keys/values [M, 2d+C+1] over the first-pass translation (distance
        0) and context translations, via forced decoding by the base model."""
        if len(ctx_tgts) != len(srcs) - 1:
            raise ValueError("context translations must align with context sources")
        blocks = []
        for distance, (src, tgt) in enumerate(zip(srcs, [first_pass, *ctx_tgts])):
            rows = self._forced(src, tgt)
            blocks.append(np.concatenate([rows, self._one_hot(distance, rows.shape[0])], axis=1))
        return np.concatenate(blocks, axis=0)

    def _embed(self, ids: np.ndarray) -> Tensor:
        if ids.shape[1] > self.cfg.max_len:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len {self.cfg.max_len}")
        scaled = T.embedding(self.params["emb"], ids) * math.sqrt(self.cfg.d_model)
        return scaled + self._pos[: ids.shape[1]]

    def _sub(self, name: str, x: Tensor, out: Tensor) -> Tensor:
        p = self.params
        return T.layer_norm(x + out, p[f"{name}.g"], p[f"{name}.b"], eps=self.cfg.ln_eps)

    @staticmethod
    def _pad_memories(mems: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        rows = max(m.shape[0] for m in mems)
        kv = np.zeros((len(mems), rows, mems[0].shape[1]))
        mask = np.full((len(mems), 1, 1, rows), NEG_INF)
        for i, m in enumerate(mems):
            kv[i, : m.shape[0]] = m
            mask[i, :, :, : m.shape[0]] = 0.0
        return kv, mask

    def forward_batch(
        self, enc_mems: list[np.ndarray], dec_mems: list[np.ndarray], tgt_ids: np.ndarray
    ) -> Tensor:
        """Log-probabilities [B,T,V] for targets given per-example memories."""
        if not (len(enc_mems) == len(dec_mems) == tgt_ids.shape[0]):
            raise ValueError("memory lists must match the batch size")
        p, h = self.params, self.cfg.n_heads
        enc_kv, enc_mask = self._pad_memories(enc_mems)
        dec_kv, dec_mask = self._pad_memories(dec_mems)
        enc_kv, dec_kv = Tensor(enc_kv), Tensor(dec_kv)
        tgt_in = shift_right(tgt_ids)
        mask = causal_mask(tgt_in.shape[1]) + padding_mask(tgt_in)
        x = self._embed(tgt_in)
        for i in range(self.cfg.n_layers):
            x = self._sub(f"lay{i}.ln1", x, _attend(p, f"lay{i}.self", h, x, x, mask))
            x = self._sub(f"lay{i}.ln2", x, _attend(p, f"lay{i}.src", h, x, enc_kv, enc_mask))
            x = self._sub(f"lay{i}.ln3", x, _attend(p, f"lay{i}.tgt", h, x, dec_kv, dec_mask))
            x = self._sub(f"lay{i}.ln4", x, _ffn(p, f"lay{i}.ffn", x))
        logits = x @ p["out.w"] + p["out.b"]
        return T.log_softmax(logits, axis=-1)

    def forward(
        self,
        srcs: list[list[int]],
        first_pass: list[int],
        ctx_tgts: list[list[int]],
        tgt: list[int],
    ) -> Tensor:
        """Log-probabilities [T,V] for one example's target (content + EOS)."""
        enc_mem = self.encoder_memory(srcs)
        dec_mem = self.decoder_memory(srcs, first_pass, ctx_tgts)
        tgt_ids = pad_batch([with_eos(tgt)])
        return self.forward_batch([enc_mem], [dec_mem], tgt_ids).reshape(
            tgt_ids.shape[1], self.cfg.tgt_vocab
        )

    def step_scorer(self, srcs: list[list[int]], first_pass: list[int], ctx_tgts: list[list[int]]):
        """Next-token log-prob function over prefixes, for beam search."""
        enc_mem = self.encoder_memory(srcs)
        dec_mem = self.decoder_memory(srcs, first_pass, ctx_tgts)

        def step(prefixes: list[list[int]]) -> np.ndarray:
            rows = [[BOS_ID] + list(p) for p in prefixes]
            widths = [len(r) for r in rows]
            batch = pad_batch(rows)
            # forward_batch BOS-shifts internally, so hand it rows whose
            # shift reproduces our explicit BOS-prefixed inputs
            fake_tgt = np.concatenate([batch[:, 1:], np.full((len(rows), 1), PAD_ID, dtype=np.int64)], axis=1)
            n = len(rows)
            with no_grad():
                log_probs = self.forward_batch([enc_mem] * n, [dec_mem] * n, fake_tgt).data
            return np.stack([log_probs[i, widths[i] - 1] for i in range(n)])

        return step
