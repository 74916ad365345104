"""Paired synthetic corpora for two domains with controllable shift.

Domain A supplies the labeled source set and the in-domain test set;
domain B supplies the unlabeled target corpus and the shifted test set.
Sentences are rendered from templates: fixed or wildcard function-word
slots, and entity slots each preceded by a class cue word. Domain B swaps
a ``shift`` fraction of the function words and of the templates for its
own, and keeps only ``shared_entity_frac`` of the entity names.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LabeledDataset, Sentence, UnlabeledCorpus, spans_to_tags
from .errors import InvalidConfig

N_FILLERS = 80
CUES_PER_CLASS = 3
WILDCARD = -1

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SynthConfig:
    n_source_labeled: int = 2000
    n_target_unlabeled: int = 4000
    n_test_shifted: int = 500
    shift: float = 0.7
    classes: tuple[str, ...] = ("PER", "LOC", "ORG", "MISC")
    entity_lexicon_size: int = 50
    shared_entity_frac: float = 0.5
    templates: int = 20
    seed: int = 0

    def validate(self):
        counts = (self.n_source_labeled, self.n_target_unlabeled, self.n_test_shifted,
                  self.entity_lexicon_size, self.templates)
        if min(counts) < 1:
            raise InvalidConfig("all counts must be >= 1")
        if not 0.0 <= self.shift <= 1.0:
            raise InvalidConfig("shift must lie in [0, 1]")
        if not 0.0 <= self.shared_entity_frac <= 1.0:
            raise InvalidConfig("shared_entity_frac must lie in [0, 1]")
        if not self.classes or len(set(self.classes)) != len(self.classes):
            raise InvalidConfig("classes must be nonempty and distinct")


@dataclass
class Domain:
    words: list  # function-word surface form per index
    templates: list  # each a list of ("w", index) | ("e", class) items
    entities: dict  # class -> list of token tuples


class _WordFactory:
    """Unique pronounceable pseudo-words."""

    def __init__(self, rng):
        self.rng = rng
        self.used = set()

    def make(self, capital=False):
        while True:
            n = int(self.rng.integers(2, 4))
            w = "".join(self.rng.choice(list(_CONSONANTS)) + self.rng.choice(list(_VOWELS)) for _ in range(n))
            if w not in self.used:
                self.used.add(w)
                return w.capitalize() if capital else w


def _make_template(rng, classes):
    """Slots referencing function-word indices, plus 1-3 cued entity slots.

    Cue index for class c is ``N_FILLERS + c * CUES_PER_CLASS + j``.
    """
    k = int(rng.integers(1, 4))
    lo, hi = max(3, 5 - 2 * k), min(14, 25 - 4 * k)
    n_fill = int(rng.integers(lo, hi + 1))
    slots = [("w", int(rng.integers(N_FILLERS)) if rng.random() < 0.7 else WILDCARD) for _ in range(n_fill)]
    for _ in range(k):
        c = int(rng.integers(len(classes)))
        cue = N_FILLERS + c * CUES_PER_CLASS + int(rng.integers(CUES_PER_CLASS))
        at = int(rng.integers(len(slots) + 1))
        slots[at:at] = [("w", cue), ("e", classes[c])]
    return slots


def _render(rng, domain: Domain):
    template = domain.templates[int(rng.integers(len(domain.templates)))]
    tokens, spans = [], []
    for kind, value in template:
        if kind == "w":
            idx = int(rng.integers(N_FILLERS)) if value == WILDCARD else value
            tokens.append(domain.words[idx])
        else:
            lexicon = domain.entities[value]
            ent = lexicon[int(rng.integers(len(lexicon)))]
            spans.append((len(tokens), len(tokens) + len(ent), value))
            tokens.extend(ent)
    return Sentence(tuple(tokens), spans_to_tags(spans, len(tokens)))


def build_domains(config: SynthConfig):
    rng = np.random.default_rng([config.seed, 7])
    words = _WordFactory(rng)
    classes = list(config.classes)
    n_words = N_FILLERS + CUES_PER_CLASS * len(classes)

    words_a = [words.make() for _ in range(n_words)]
    words_b = list(words_a)
    n_swap = round(config.shift * n_words)
    for i in rng.permutation(n_words)[:n_swap]:
        words_b[i] = words.make()

    templates_a = [_make_template(rng, classes) for _ in range(config.templates)]
    n_unique = round(config.shift * config.templates)
    templates_b = list(templates_a[:config.templates - n_unique])
    templates_b += [_make_template(rng, classes) for _ in range(n_unique)]

    def entity():
        return tuple(words.make(capital=True) for _ in range(int(rng.choice([1, 1, 2, 2, 3]))))

    n_shared = round(config.shared_entity_frac * config.entity_lexicon_size)
    ents_a, ents_b = {}, {}
    for cls in classes:
        shared = [entity() for _ in range(n_shared)]
        ents_a[cls] = shared + [entity() for _ in range(config.entity_lexicon_size - n_shared)]
        ents_b[cls] = shared + [entity() for _ in range(config.entity_lexicon_size - n_shared)]
    return Domain(words_a, templates_a, ents_a), Domain(words_b, templates_b, ents_b)


def _sample(rng, domain, n, exclude=frozenset(), max_tries=1000):
    out = []
    for _ in range(n):
        for _ in range(max_tries):
            s = _render(rng, domain)
            if s.tokens not in exclude:
                break
        else:
            raise InvalidConfig("cannot draw test sentences distinct from the training data")
        out.append(s)
    return out


def generate(config: SynthConfig):
    """Return ``(source, target, test_in_domain, test_shifted)``.

    Test sentences never repeat a source or target sentence verbatim.
    """
    config.validate()
    dom_a, dom_b = build_domains(config)
    rng = np.random.default_rng([config.seed, 11])
    source = _sample(rng, dom_a, config.n_source_labeled)
    target = _sample(rng, dom_b, config.n_target_unlabeled)
    train_seen = frozenset(s.tokens for s in source) | frozenset(s.tokens for s in target)
    test_in = _sample(rng, dom_a, config.n_test_shifted, train_seen)
    test_shift = _sample(rng, dom_b, config.n_test_shifted, train_seen)
    classes = tuple(config.classes)
    return (
        LabeledDataset(tuple(source), classes),
        UnlabeledCorpus(tuple(Sentence(s.tokens) for s in target)),
        LabeledDataset(tuple(test_in), classes),
        LabeledDataset(tuple(test_shift), classes),
    )
