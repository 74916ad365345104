"""Shared transformer feature extractor with an NER head and a domain head.

Parameters live in three groups: ``theta_f`` (embeddings and encoder
layers), ``theta_n`` (token classifier) and ``theta_d`` (domain
discriminator, reached through gradient reversal).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import compute as C
from .corpus import Sentence, Vocab, encode_batch, repair_iob2
from .errors import InvalidConfig


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 0
    n_tags: int = 0
    d_model: int = 64
    n_encoder_layers: int = 2
    n_heads: int = 4
    d_ffn: int = 128
    max_len: int = 256
    dropout: float = 0.1
    head_hidden: int = 0  # 0 means d_model

    def __post_init__(self):
        if self.head_hidden == 0:
            object.__setattr__(self, "head_hidden", self.d_model)

    @classmethod
    def full_scale(cls, vocab_size, n_tags):
        """768-d embeddings with 512-unit encoder feed-forward layers."""
        return cls(vocab_size=vocab_size, n_tags=n_tags, d_model=768, n_heads=12,
                   d_ffn=512, max_len=512, head_hidden=768)

    def validate(self):
        if self.vocab_size < 2 or self.n_tags < 1:
            raise InvalidConfig("vocab_size must be >= 2 and n_tags >= 1")
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise InvalidConfig(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.n_encoder_layers < 2:
            raise InvalidConfig("need at least 2 encoder layers")
        if self.d_ffn < 1 or self.max_len < 1 or self.head_hidden < 1:
            raise InvalidConfig("d_ffn, max_len and head_hidden must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfig("dropout must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name: f.type for f in fields(cls)}
        return cls(**{k: (float(v) if k == "dropout" else int(v)) for k, v in d.items() if k in names})


@dataclass
class ModelParams:
    theta_f: dict
    theta_n: dict
    theta_d: dict

    def groups(self):
        return {"theta_f": self.theta_f, "theta_n": self.theta_n, "theta_d": self.theta_d}

    def named(self):
        """``(qualified_name, tensor)`` pairs in a fixed order."""
        for group, params in self.groups().items():
            for name, t in params.items():
                yield f"{group}.{name}", t

    def tensors(self):
        return [t for _, t in self.named()]

    def zero_grad(self):
        for t in self.tensors():
            t.grad = None

    def grads(self):
        """Gradients in ``named()`` order, zeros where no loss reached a tensor."""
        return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in self.tensors()]

    def copy(self):
        def dup(group):
            return {k: C.Tensor(v.data.copy(), requires_grad=True) for k, v in group.items()}

        return ModelParams(dup(self.theta_f), dup(self.theta_n), dup(self.theta_d))

    def astype(self, dtype):
        def cast(group):
            return {k: C.Tensor(v.data.astype(dtype), requires_grad=True) for k, v in group.items()}

        return ModelParams(cast(self.theta_f), cast(self.theta_n), cast(self.theta_d))

    @property
    def dtype(self):
        return self.theta_f["tok_emb"].dtype


def _trunc_normal(rng, shape, std=0.02):
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def init_model(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    config.validate()
    rng = np.random.default_rng(seed)
    d, h = config.d_model, config.head_hidden

    def dense(n_in, n_out):
        return _trunc_normal(rng, (n_in, n_out))

    f = {}
    f["tok_emb"] = rng.normal(0.0, 0.02, (config.vocab_size, d))
    f["tok_emb"][0] = 0.0  # PAD
    f["pos_emb"] = rng.normal(0.0, 0.02, (config.max_len, d))
    f["emb_ln.g"], f["emb_ln.b"] = np.ones(d), np.zeros(d)
    for i in range(config.n_encoder_layers):
        p = f"enc{i}."
        for name in ("q", "k", "v", "o"):
            f[p + "w" + name] = dense(d, d)
            if name != "k":  # a key bias shifts every score in a row equally: softmax ignores it
                f[p + "b" + name] = np.zeros(d)
        f[p + "ln1.g"], f[p + "ln1.b"] = np.ones(d), np.zeros(d)
        f[p + "w1"], f[p + "b1"] = dense(d, config.d_ffn), np.zeros(config.d_ffn)
        f[p + "w2"], f[p + "b2"] = dense(config.d_ffn, d), np.zeros(d)
        f[p + "ln2.g"], f[p + "ln2.b"] = np.ones(d), np.zeros(d)

    n = {"w1": dense(d, h), "b1": np.zeros(h), "w2": dense(h, config.n_tags), "b2": np.zeros(config.n_tags)}
    dd = {"w1": dense(2 * d, h), "b1": np.zeros(h), "w2": dense(h, 2), "b2": np.zeros(2)}

    def wrap(group):
        return {k: C.Tensor(np.ascontiguousarray(v, dtype=dtype), requires_grad=True) for k, v in group.items()}

    return ModelParams(wrap(f), wrap(n), wrap(dd))


def n_parameters(params: ModelParams) -> int:
    return sum(t.data.size for t in params.tensors())


def no_decay(qualified_name: str) -> bool:
    """Biases and layer-norm tensors are exempt from weight decay."""
    last = qualified_name.rsplit(".", 1)[-1]
    return last.startswith("b") or ".ln" in qualified_name or "_ln" in qualified_name


# -- forward ------------------------------------------------------------------


def _encoder_layer(p, i, x, mask, n_heads, drop, rng, train):
    pre = f"enc{i}."

    def lin(a, name):
        return C.linear(a, p[pre + "w" + name], p[pre + "b" + name])

    a = C.attention(lin(x, "q"), C.matmul(x, p[pre + "wk"]), lin(x, "v"), mask, n_heads)
    a = C.dropout(lin(a, "o"), drop, rng, train)
    x = C.layer_norm(C.add(x, a), p[pre + "ln1.g"], p[pre + "ln1.b"])
    ff = C.gelu(C.linear(x, p[pre + "w1"], p[pre + "b1"]))
    ff = C.dropout(C.linear(ff, p[pre + "w2"], p[pre + "b2"]), drop, rng, train)
    return C.layer_norm(C.add(x, ff), p[pre + "ln2.g"], p[pre + "ln2.b"])


def extract_features(params: ModelParams, config: ModelConfig, ids, mask, *, train=False, rng=None):
    """Run the encoder; return the outputs of its final two layers ``(H_last, H_prev)``."""
    p = params.theta_f
    T = ids.shape[1]
    tok = C.embedding(p["tok_emb"], ids)
    pos = C.embedding(p["pos_emb"], np.arange(T))
    x = C.layer_norm(C.add(tok, pos), p["emb_ln.g"], p["emb_ln.b"])
    x = C.dropout(x, config.dropout, rng, train)
    outputs = []
    for i in range(config.n_encoder_layers):
        x = _encoder_layer(p, i, x, mask, config.n_heads, config.dropout, rng, train)
        outputs.append(x)
    return outputs[-1], outputs[-2]


def ner_log_probs(params: ModelParams, h_last, mask=None):
    """Per-token log-probabilities over tags, ``[B, T, n_tags]``."""
    p = params.theta_n
    hidden = C.gelu(C.linear(h_last, p["w1"], p["b1"]))
    return C.log_softmax(C.linear(hidden, p["w2"], p["b2"]))


def domain_log_probs(params: ModelParams, h_last, h_prev, mask, lam=1.0, *, reverse=True):
    """Sentence-level log-probabilities over {source=0, target=1}, ``[B, 2]``.

    ``reverse=False`` swaps the gradient-reversal op for the identity; it
    exists for gradient checks.
    """
    p = params.theta_d
    pooled = C.concat([C.masked_mean(h_last, mask), C.masked_mean(h_prev, mask)])
    if reverse:
        pooled = C.gradient_reversal(pooled, lam)
    hidden = C.gelu(C.linear(pooled, p["w1"], p["b1"]))
    return C.log_softmax(C.linear(hidden, p["w2"], p["b2"]))


# -- inference ----------------------------------------------------------------


def predict_batch(params, config, sentences, vocab: Vocab, tag_index: dict, batch_size=64):
    """Tag many sentences; returns one IOB2-valid tag tuple per sentence.

    Tokens beyond ``config.max_len`` are tagged ``O``.
    """
    id_to_tag = {i: t for t, i in tag_index.items()}
    results = []
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start:start + batch_size]
        batch = encode_batch([Sentence(s.tokens) for s in chunk], vocab, tag_index, config.max_len)
        h_last, _ = extract_features(params, config, batch.ids, batch.mask)
        best = ner_log_probs(params, h_last).data.argmax(axis=-1)
        for b, s in enumerate(chunk):
            n = min(len(s), config.max_len)
            tags = [id_to_tag[int(i)] for i in best[b, :n]] + ["O"] * (len(s) - n)
            results.append(repair_iob2(tags))
    return results


def predict_tags(params, config, sentence, vocab, tag_index):
    return predict_batch(params, config, [sentence], vocab, tag_index)[0]
