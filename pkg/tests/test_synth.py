import numpy as np
import pytest
from helpers import train_and_score

from adner.corpus import serialize_conll, split_dataset, validate_iob2
from adner.errors import InvalidConfig
from adner.synth import SynthConfig, build_domains, generate

SMALL = dict(n_source_labeled=300, n_target_unlabeled=300, n_test_shifted=100)
SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="module")
def corpora():
    return generate(SynthConfig(seed=3, **SMALL))


def test_counts_and_kinds(corpora):
    source, target, test_in, test_shift = corpora
    assert (source.n, target.n, test_in.n, test_shift.n) == (300, 300, 100, 100)
    assert all(s.tags is None for s in target.sentences)
    assert source.classes == ("LOC", "MISC", "ORG", "PER")


def test_tags_valid_and_shapes_in_range(corpora):
    source, _, test_in, test_shift = corpora
    for ds in (source, test_in, test_shift):
        for s in ds.sentences:
            assert validate_iob2(s.tags) == []
            assert 5 <= len(s) <= 25
            assert 1 <= sum(t.startswith("B-") for t in s.tags) <= 3


def test_deterministic():
    a = [serialize_conll(x) for x in generate(SynthConfig(seed=9, **SMALL))]
    b = [serialize_conll(x) for x in generate(SynthConfig(seed=9, **SMALL))]
    c = [serialize_conll(x) for x in generate(SynthConfig(seed=10, **SMALL))]
    assert a == b
    assert a != c


def _vocab(ds):
    return {t for s in ds.sentences for t in s.tokens}


def test_full_shift_is_disjoint():
    _, _, test_in, test_shift = generate(SynthConfig(shift=1.0, shared_entity_frac=0.0, seed=2, **SMALL))
    assert not _vocab(test_in) & _vocab(test_shift)


def test_zero_shift_shares_words_and_templates():
    dom_a, dom_b = build_domains(SynthConfig(shift=0.0, seed=2))
    assert dom_a.words == dom_b.words
    assert dom_a.templates == dom_b.templates
    dom_a, dom_b = build_domains(SynthConfig(shift=0.5, seed=2))
    assert sum(a != b for a, b in zip(dom_a.words, dom_b.words)) == round(0.5 * len(dom_a.words))
    assert sum(t not in dom_a.templates for t in dom_b.templates) == 10


def test_partial_shift_overlaps(corpora):
    _, _, test_in, test_shift = corpora
    shared = _vocab(test_in) & _vocab(test_shift)
    assert shared and _vocab(test_shift) - _vocab(test_in)


def test_no_test_leakage(corpora):
    source, target, test_in, test_shift = corpora
    train_split = split_dataset(source, 0)[0]
    seen = {s.tokens for s in train_split.sentences} | {s.tokens for s in target.sentences}
    for test in (test_in, test_shift):
        assert not seen & {s.tokens for s in test.sentences}


@pytest.mark.parametrize("bad", [dict(shift=1.5), dict(shared_entity_frac=-0.1), dict(n_source_labeled=0),
                                 dict(classes=())])
def test_invalid_config(bad):
    with pytest.raises(InvalidConfig):
        generate(SynthConfig(**bad))


@pytest.fixture(scope="module")
def shift_grid():
    return {shift: np.array([train_and_score(seed, shift=shift) for seed in SEEDS]) for shift in (0.0, 0.5, 1.0)}


def test_zero_shift_scores_alike():
    # with every entity form shared too, the two domains are the same distribution
    scores = np.array([train_and_score(seed, shift=0.0, synth=dict(shared_entity_frac=1.0)) for seed in SEEDS])
    in_domain, shifted = scores.mean(axis=0)
    assert abs(in_domain - shifted) <= 0.02


def test_baseline_degrades_with_shift(shift_grid):
    means = [shift_grid[s][:, 1].mean() for s in (0.0, 0.5, 1.0)]
    assert means[0] >= means[1] >= means[2]
