"""Shared oracles and fixtures for the test suite."""

import numpy as np

from adner import compute as C
from adner.corpus import split_dataset, tags_to_spans
from adner.metrics import score
from adner.model import ModelConfig, domain_log_probs, extract_features, init_model, ner_log_probs, predict_batch
from adner.objective import adversarial_loss, ner_loss
from adner.synth import SynthConfig, generate
from adner.train import TrainConfig, train

# learning rate for training from scratch at desk scale
DESK_LR = 1e-3

TINY = ModelConfig(vocab_size=50, n_tags=5, d_model=16, n_encoder_layers=2, n_heads=2, d_ffn=32,
                   max_len=16, dropout=0.0)


class GradProblem:
    """A tiny double-precision model with fixed source and target batches.

    The weights are redrawn from N(0, 0.3) so that no gradient entry sits
    near the noise floor of the finite-difference oracle, which runs on an
    extended-precision copy of the same point.
    """

    def __init__(self, seed=1, data_seed=0):
        params = init_model(TINY, 0, dtype=np.float64)
        rng = np.random.default_rng(seed)
        for name, t in params.named():
            t.data[...] = rng.normal(0.0, 0.3, t.shape) + (1.0 if name.endswith(".g") else 0.0)
        params.theta_f["tok_emb"].data[0] = 0.0
        self.params = params
        self.oracle = params.astype(np.longdouble)

        rng = np.random.default_rng(data_seed)
        self.ids = rng.integers(2, TINY.vocab_size, (2, 5))
        self.mask = np.ones((2, 5), dtype=bool)
        self.mask[1, 3:] = False
        self.ids[~self.mask] = 0
        self.tags = rng.integers(0, TINY.n_tags, (2, 5))
        self.tags[~self.mask] = -1
        self.tgt_ids = rng.integers(2, TINY.vocab_size, (2, 4))
        self.tgt_mask = np.ones((2, 4), dtype=bool)

    def l_ner(self, params):
        h, _ = extract_features(params, TINY, self.ids, self.mask)
        return ner_loss(ner_log_probs(params, h), self.tags, self.mask)

    def l_adv(self, params, reverse=True):
        h, hp = extract_features(params, TINY, self.ids, self.mask)
        t, tp = extract_features(params, TINY, self.tgt_ids, self.tgt_mask)
        d_src = domain_log_probs(params, h, hp, self.mask, reverse=reverse)
        d_tgt = domain_log_probs(params, t, tp, self.tgt_mask, reverse=reverse)
        return adversarial_loss(d_src, d_tgt)[2]

    def compare(self, loss, group, sign=1.0, names=None, eps=1e-6):
        """Worst relative error between reverse-mode and ``sign`` times FD.

        The FD side never reverses gradients, so ``sign=-1`` checks that the
        reversal layer negates exactly the part of the gradient that
        crosses it.
        """
        params = self.params
        params.zero_grad()
        loss(params).backward()
        names = names or list(params.groups()[group])
        live = [params.groups()[group][n] for n in names]
        ext = [self.oracle.groups()[group][n] for n in names]

        def f(_):
            return self.l_adv(self.oracle, reverse=False) if loss == self.l_adv else loss(self.oracle)

        fd = C.finite_diff_grad(f, ext, eps=eps)
        errors = {}
        for n, t, g in zip(names, live, fd):
            got = t.grad if t.grad is not None else np.zeros_like(t.data)
            errors[n] = C.max_rel_error(got, sign * g)
        return errors


def brute_force_counts(gold_tags, pred_tags):
    """Count gold, predicted and matching spans by naive enumeration."""
    n_gold = n_pred = n_correct = 0
    for g, p in zip(gold_tags, pred_tags):
        gold = [(s.start, s.end, s.cls) for s in tags_to_spans(g)]
        pred = [(s.start, s.end, s.cls) for s in tags_to_spans(p)]
        n_gold += len(gold)
        n_pred += len(pred)
        for span in pred:
            n_correct += any(span == other for other in gold)
    return n_gold, n_pred, n_correct


def train_and_score(seed, *, shift=0.7, adapt=False, synth=None, **train_kw):
    """Train on synthetic domain A; return (in-domain F1, shifted F1)."""
    source, target, test_in, test_shift = generate(SynthConfig(shift=shift, seed=seed, **(synth or {})))
    config = TrainConfig(lr=DESK_LR, seed=seed, adapt=adapt, **train_kw)
    result = train(ModelConfig(), config, split_dataset(source, seed), target)
    out = []
    for test in (test_in, test_shift):
        pred = predict_batch(result.params, result.model_config, list(test.sentences), result.vocab,
                             result.tag_index)
        out.append(score(test, pred).f1)
    return tuple(out)
