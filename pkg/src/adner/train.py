"""Joint source/target training: batching, AdamW, LR schedule, early stopping."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import build_tag_index, build_vocab, encode_batch
from .errors import DivergedError, InvalidConfig, NonFiniteError, NonFiniteGradient
from .metrics import score
from .model import (
    ModelConfig,
    ModelParams,
    domain_log_probs,
    extract_features,
    init_model,
    ner_log_probs,
    no_decay,
    predict_batch,
)
from .objective import adversarial_loss, ner_loss, total_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 2e-5
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 16
    alpha: float = 2.0
    grl_lambda: float = 1.0
    warmup_frac: float = 0.1
    seed: int = 0
    early_stop_metric: str = "token_accuracy"
    patience: int = 3
    adapt: bool = True
    min_freq: int = 2
    clip_norm: float = 1.0

    def validate(self):
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if not 0 <= self.warmup_frac < 1:
            raise InvalidConfig("warmup_frac must lie in [0, 1)")
        if self.lr <= 0:
            raise InvalidConfig("lr must be > 0")
        if self.alpha < 0 or self.grl_lambda <= 0:
            raise InvalidConfig("alpha must be >= 0 and grl_lambda > 0")
        if self.early_stop_metric not in ("token_accuracy", "span_f1"):
            raise InvalidConfig(f"unknown early_stop_metric {self.early_stop_metric!r}")
        if self.max_epochs < 1 or self.patience < 1 or self.min_freq < 1:
            raise InvalidConfig("max_epochs, patience and min_freq must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    l_ner: float
    l_adv: float
    l_total: float
    val_metric: float
    lr_last: float


@dataclass
class History:
    records: list = field(default_factory=list)
    best_epoch: int = 0
    step: int = 0

    @property
    def best_metric(self):
        return max(r.val_metric for r in self.records)

    def to_json(self):
        return json.dumps([asdict(r) for r in self.records], indent=2) + "\n"


@dataclass
class TrainResult:
    params: ModelParams
    history: History
    model_config: ModelConfig
    vocab: object
    tag_index: dict


# -- batching -----------------------------------------------------------------


def make_batches(source, target, batch_size: int, seed: int, epoch: int):
    """Pair each shuffled source batch with a batch from a cycling target stream.

    The epoch length follows the source. The target stream is shuffled
    independently and wraps when exhausted; with no target every pair is
    ``(src, None)``.
    """
    src = source.sentences
    order = np.random.default_rng([seed, epoch, 0]).permutation(len(src))
    n_steps = math.ceil(len(src) / batch_size)
    src_batches = [[src[i] for i in order[k * batch_size:(k + 1) * batch_size]] for k in range(n_steps)]
    if target is None:
        return [(b, None) for b in src_batches]

    tgt = target.sentences
    rng = np.random.default_rng([seed, epoch, 1])
    stream, pos = rng.permutation(len(tgt)), 0
    pairs = []
    for b in src_batches:
        picked = []
        while len(picked) < batch_size:
            if pos == len(stream):
                stream, pos = rng.permutation(len(tgt)), 0
            take = min(batch_size - len(picked), len(stream) - pos)
            picked.extend(stream[pos:pos + take])
            pos += take
        pairs.append((b, [tgt[i] for i in picked]))
    return pairs


# -- optimisation -------------------------------------------------------------


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: ModelParams, grads, state: AdamState, lr_t: float, config: TrainConfig):
    """One AdamW update in place; ``grads`` follows ``params.named()`` order.

    ``p -= lr_t * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`` with
    biases and layer-norm tensors exempt from the decay term.
    """
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or Inf")
    state.t += 1
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for (name, p), g in zip(params.named(), grads):
        dt = p.dtype.type
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = dt(b1) * m + dt(1.0 - b1) * g
        v = dt(b2) * v + dt(1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        update = (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(eps))
        if config.weight_decay and not no_decay(name):
            update = update + dt(config.weight_decay) * p.data
        p.data -= dt(lr_t) * update


def clip_grad_norm(grads, max_norm: float):
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
    if total > max_norm:
        factor = max_norm / (total + 1e-6)
        grads = [g * g.dtype.type(factor) for g in grads]
    return grads, total


def lr_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear warmup to ``config.lr`` then linear decay to 0 at ``total_steps``."""
    warm = math.floor(config.warmup_frac * total_steps)
    if step < warm:
        return config.lr * step / warm
    if total_steps == warm:
        return config.lr
    return config.lr * max(0.0, (total_steps - step) / (total_steps - warm))


# -- loop ---------------------------------------------------------------------


def step_losses(params, model_config, src, tgt, config: TrainConfig, *, train=True, rng_src=None, rng_tgt=None):
    """Forward one (source, target) batch pair; returns ``(l_total, l_ner, l_adv)`` tensors.

    ``l_adv`` is None when ``tgt`` is None or adaptation is off.
    """
    h_last, h_prev = extract_features(params, model_config, src.ids, src.mask, train=train, rng=rng_src)
    l_ner = ner_loss(ner_log_probs(params, h_last), src.tag_ids, src.mask)
    if tgt is None or not config.adapt:
        return l_ner, l_ner, None
    t_last, t_prev = extract_features(params, model_config, tgt.ids, tgt.mask, train=train, rng=rng_tgt)
    d_src = domain_log_probs(params, h_last, h_prev, src.mask, config.grl_lambda)
    d_tgt = domain_log_probs(params, t_last, t_prev, tgt.mask, config.grl_lambda)
    _, _, l_adv = adversarial_loss(d_src, d_tgt)
    return total_loss(l_ner, l_adv, config.alpha), l_ner, l_adv


def evaluate(params, model_config, dataset, vocab, tag_index, metric="token_accuracy"):
    pred = predict_batch(params, model_config, list(dataset.sentences), vocab, tag_index)
    report = score(dataset, pred)
    return report.token_accuracy if metric == "token_accuracy" else report.f1


def prepare(model_config: ModelConfig, config: TrainConfig, train_set):
    """Vocabulary, tag index and resolved model config for a training run.

    Both come from the training split alone; target tokens unseen there map
    to UNK.
    """
    vocab = build_vocab(train_set, config.min_freq)
    tag_index = build_tag_index(train_set.classes)
    model_config = ModelConfig(**{**model_config.to_dict(), "vocab_size": len(vocab), "n_tags": len(tag_index)})
    model_config.validate()
    return model_config, vocab, tag_index


def train(model_config: ModelConfig, config: TrainConfig, splits, target=None, *, dtype=np.float32,
          progress=None) -> TrainResult:
    """Train on ``splits = (train, val[, test])`` with an optional target corpus.

    Returns the snapshot from the best validation epoch, not the last one.
    """
    config.validate()
    train_set, val_set = splits[0], splits[1]
    model_config, vocab, tag_index = prepare(model_config, config, train_set)
    params = init_model(model_config, config.seed, dtype=dtype)
    use_target = target if config.adapt else None

    steps_per_epoch = math.ceil(train_set.n / config.batch_size)
    total_steps = steps_per_epoch * config.max_epochs
    rng_src = np.random.default_rng([config.seed, 101])
    rng_tgt = np.random.default_rng([config.seed, 202])
    state = AdamState()
    history = History()
    best_params, best_metric, stale = params.copy(), -math.inf, 0

    for epoch in range(1, config.max_epochs + 1):
        sums = np.zeros(3)
        lr_t = 0.0
        for src_s, tgt_s in make_batches(train_set, use_target, config.batch_size, config.seed, epoch):
            src = encode_batch(src_s, vocab, tag_index, model_config.max_len)
            tgt = encode_batch(tgt_s, vocab, tag_index, model_config.max_len) if tgt_s is not None else None
            try:
                l_total, l_ner, l_adv = step_losses(params, model_config, src, tgt, config,
                                                    rng_src=rng_src, rng_tgt=rng_tgt)
            except NonFiniteError as e:
                raise DivergedError(f"epoch {epoch} step {history.step}: {e}") from e
            params.zero_grad()
            l_total.backward()
            grads, _ = clip_grad_norm(params.grads(), config.clip_norm)
            lr_t = lr_at(history.step, total_steps, config)
            adamw_step(params, grads, state, lr_t, config)
            history.step += 1
            sums += (l_ner.item(), l_adv.item() if l_adv is not None else 0.0, l_total.item())
        params.zero_grad()
        means = sums / steps_per_epoch
        val = evaluate(params, model_config, val_set, vocab, tag_index, config.early_stop_metric)
        history.records.append(EpochRecord(epoch, float(means[0]), float(means[1]), float(means[2]), val, lr_t))
        log.info("epoch %d l_ner=%.4f l_adv=%.4f val=%.4f", epoch, means[0], means[1], val)
        if progress:
            progress(history.records[-1])
        if val > best_metric:
            best_metric, best_params, stale = val, params.copy(), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    return TrainResult(best_params, history, model_config, vocab, tag_index)
