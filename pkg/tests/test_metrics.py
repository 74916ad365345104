import json

import numpy as np
import pytest
from helpers import brute_force_counts
from hypothesis import given, settings
from hypothesis import strategies as st

from adner.corpus import LabeledDataset, Sentence, iob1_to_iob2, tags_to_spans
from adner.errors import LengthMismatch
from adner.metrics import score

TAGS = ["O", "B-PER", "I-PER", "B-LOC", "I-LOC"]


def _gold(*seqs):
    return LabeledDataset(tuple(Sentence(tuple(f"t{i}" for i in range(len(s))), s) for s in seqs))


def random_pairs(rng, n):
    for _ in range(n):
        length = int(rng.integers(1, 12))
        gold = iob1_to_iob2(rng.choice(TAGS, size=length).tolist())
        pred = iob1_to_iob2(rng.choice(TAGS, size=length).tolist())
        yield gold, pred


class TestExamples:
    def test_identity(self):
        g = ("B-PER", "I-PER", "O", "B-LOC")
        r = score(_gold(g), [g])
        assert (r.precision, r.recall, r.f1, r.token_accuracy) == (1.0, 1.0, 1.0, 1.0)

    def test_no_prediction(self):
        r = score(_gold(("B-PER", "O")), [("O", "O")])
        assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
        assert (r.n_gold, r.n_pred) == (1, 0)

    def test_boundary_mismatch(self):
        r = score(_gold(("B-PER", "I-PER")), [("B-PER", "O")])
        assert r.n_correct == 0
        assert (r.precision, r.recall) == (0.0, 0.0)
        assert r.token_accuracy == 0.5

    def test_class_mismatch_is_wrong(self):
        r = score(_gold(("B-PER",)), [("B-LOC",)])
        assert r.n_correct == 0 and r.per_class["PER"][3] == 1

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            score(_gold(("O", "O")), [("O",)])
        with pytest.raises(LengthMismatch):
            score(_gold(("O",)), [])

    def test_report_formats(self):
        r = score(_gold(("B-PER", "O", "B-LOC"), ("B-LOC",)), [("B-PER", "O", "O"), ("B-LOC",)])
        d = json.loads(r.to_json())
        assert set(d) == {"precision", "recall", "f1", "token_accuracy", "per_class", "counts"}
        assert d["counts"] == {"n_gold": 3, "n_pred": 2, "n_correct": 2}
        assert d["per_class"]["LOC"]["support"] == 2
        text = r.to_text()
        assert "micro" in text and "0.800" in text
        assert len({len(line) for line in text.splitlines()[:-1]}) == 1


def test_matches_brute_force():
    rng = np.random.default_rng(0)
    pairs = list(random_pairs(rng, 1000))
    for gold, pred in pairs:
        r = score([gold], [pred])
        assert (r.n_gold, r.n_pred, r.n_correct) == brute_force_counts([gold], [pred])
    golds, preds = zip(*pairs)
    r = score(list(golds), list(preds))
    assert (r.n_gold, r.n_pred, r.n_correct) == brute_force_counts(golds, preds)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    golds, preds = zip(*random_pairs(rng, 6))
    perm = rng.permutation(6)
    a = score(list(golds), list(preds))
    b = score([golds[i] for i in perm], [preds[i] for i in perm])
    assert a.to_dict() == b.to_dict()


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fixing_a_span_never_hurts(seed):
    rng = np.random.default_rng(seed)
    (gold, pred), = random_pairs(rng, 1)
    spans = tags_to_spans(gold)
    if not spans:
        return
    span = spans[int(rng.integers(len(spans)))]
    fixed = list(pred)
    fixed[span.start:span.end] = gold[span.start:span.end]
    # keep the repaired span closed on the right
    if span.end < len(fixed) and fixed[span.end].startswith("I-"):
        fixed[span.end] = "B-" + fixed[span.end][2:]
    before, after = score([gold], [pred]), score([gold], [tuple(fixed)])
    assert after.precision >= before.precision
    assert after.recall >= before.recall
    assert after.f1 >= before.f1
