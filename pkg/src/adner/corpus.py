"""CoNLL 2002 corpora with IOB2 as the internal tag scheme.

Reading, writing, tag-scheme conversion and validation, span views,
train/val/test splitting, vocabulary construction and batch encoding.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    EmptySentence,
    InvalidScheme,
    InvalidTag,
    LengthMismatch,
    MalformedLine,
    OutOfRange,
    OverlapError,
    TooSmall,
    UnknownTag,
)

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
IGNORE = -1
DOCSTART = "-DOCSTART-"


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    tags: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.tags is not None:
            object.__setattr__(self, "tags", tuple(self.tags))
            if len(self.tags) != len(self.tokens):
                raise LengthMismatch("tags and tokens differ in length")
        if not self.tokens:
            raise EmptySentence("a sentence needs at least one token")

    def __len__(self):
        return len(self.tokens)

    @property
    def labeled(self):
        return self.tags is not None


@dataclass(frozen=True)
class LabeledDataset:
    sentences: tuple[Sentence, ...]
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.classes:
            object.__setattr__(self, "classes", classes_of(self.sentences))
        else:
            object.__setattr__(self, "classes", tuple(sorted(set(self.classes))))

    @property
    def n(self):
        return len(self.sentences)

    def __len__(self):
        return len(self.sentences)


@dataclass(frozen=True)
class UnlabeledCorpus:
    sentences: tuple[Sentence, ...]

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))

    @property
    def n(self):
        return len(self.sentences)

    def __len__(self):
        return len(self.sentences)


@dataclass(frozen=True)
class EntitySpan:
    start: int
    end: int
    cls: str


def strip_labels(dataset) -> UnlabeledCorpus:
    return UnlabeledCorpus(tuple(Sentence(s.tokens) for s in dataset.sentences))


def classes_of(sentences: Iterable[Sentence]) -> tuple[str, ...]:
    found = set()
    for s in sentences:
        for t in s.tags or ():
            if t != "O":
                found.add(t[2:])
    return tuple(sorted(found))


# -- tag schemes --------------------------------------------------------------


def _split_tag(tag, line_no=None):
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in "BI":
        return tag[0], tag[2:]
    raise InvalidTag(line_no, tag)


def validate_iob2(tags: Sequence[str]) -> list[tuple[int, str]]:
    """Return ``(index, reason)`` for every IOB2 violation; empty when valid."""
    violations = []
    prev_cls = None
    for i, tag in enumerate(tags):
        try:
            prefix, cls = _split_tag(tag)
        except InvalidTag:
            violations.append((i, f"invalid tag {tag!r}"))
            prev_cls = None
            continue
        if prefix == "I":
            if prev_cls is None:
                violations.append((i, "I- without preceding B-/I- of same class"))
            elif prev_cls != cls:
                violations.append((i, "class mismatch"))
        prev_cls = cls
    return violations


def iob1_to_iob2(tags: Sequence[str]) -> tuple[str, ...]:
    """Rewrite tags read under IOB1 semantics so that every entity opens with B-.

    Under IOB1 an ``I-X`` following ``O`` or another class starts an entity,
    and ``B-X`` only appears to split two adjacent entities of class X. Valid
    IOB2 input is returned unchanged.
    """
    out = []
    prev_cls = None
    for tag in tags:
        prefix, cls = _split_tag(tag)
        if prefix == "I" and prev_cls != cls:
            out.append("B-" + cls)
        else:
            out.append(tag)
        prev_cls = cls
    return tuple(out)


def tags_to_spans(tags: Sequence[str]) -> list[EntitySpan]:
    bad = validate_iob2(tags)
    if bad:
        raise InvalidScheme(None, bad)
    spans = []
    start = cls = None
    for i, tag in enumerate(tags):
        if tag == "O" or tag[0] == "B":
            if start is not None:
                spans.append(EntitySpan(start, i, cls))
                start = cls = None
            if tag != "O":
                start, cls = i, tag[2:]
    if start is not None:
        spans.append(EntitySpan(start, len(tags), cls))
    return spans


def spans_to_tags(spans: Iterable, length: int) -> tuple[str, ...]:
    tags = ["O"] * length
    for span in sorted(spans, key=lambda s: (s[0], s[1]) if isinstance(s, tuple) else (s.start, s.end)):
        start, end, cls = (span.start, span.end, span.cls) if isinstance(span, EntitySpan) else span
        if not 0 <= start < end <= length:
            raise OutOfRange(f"span ({start}, {end}) outside [0, {length})")
        if any(t != "O" for t in tags[start:end]):
            raise OverlapError(f"span ({start}, {end}, {cls}) overlaps another span")
        tags[start] = "B-" + cls
        for i in range(start + 1, end):
            tags[i] = "I-" + cls
    return tuple(tags)


def repair_iob2(tags: Sequence[str]) -> tuple[str, ...]:
    """Promote every illegal ``I-X`` to ``B-X``."""
    out = []
    prev_cls = None
    for tag in tags:
        if tag == "O":
            prev_cls = None
            out.append(tag)
            continue
        cls = tag[2:]
        if tag[0] == "I" and prev_cls != cls:
            tag = "B-" + cls
        out.append(tag)
        prev_cls = cls
    return tuple(out)


# -- CoNLL IO -----------------------------------------------------------------


def parse_conll(text: str, labeled: bool = True, strict: bool = False):
    """Parse CoNLL 2002 column text.

    The first column is the token; with ``labeled`` the last column is the
    tag, so 3-column token/POS/tag files load as-is. IOB1 tags are converted
    to IOB2 unless ``strict``, in which case any IOB2 violation raises.
    Returns a `LabeledDataset` or an `UnlabeledCorpus`.
    """
    sentences = []
    tokens, tags, tag_lines = [], [], []

    def flush():
        if not tokens:
            return
        if labeled:
            for tag, line_no in zip(tags, tag_lines):
                _split_tag(tag, line_no)
            fixed = tuple(tags) if strict else iob1_to_iob2(tags)
            bad = validate_iob2(fixed)
            if bad:
                raise InvalidScheme(len(sentences), bad)
            sentences.append(Sentence(tuple(tokens), fixed))
        else:
            sentences.append(Sentence(tuple(tokens)))
        tokens.clear()
        tags.clear()
        tag_lines.clear()

    for line_no, line in enumerate(text.split("\n"), start=1):
        cols = line.split()
        if not cols:
            flush()
            continue
        if cols[0] == DOCSTART:
            continue
        if labeled:
            if len(cols) < 2:
                raise MalformedLine(line_no, line)
            tags.append(cols[-1])
            tag_lines.append(line_no)
        tokens.append(cols[0])
    flush()

    if not sentences:
        raise EmptyInput()
    if labeled:
        return LabeledDataset(tuple(sentences))
    return UnlabeledCorpus(tuple(sentences))


def lint_conll(text: str) -> list[str]:
    """Every problem in a labeled CoNLL file, one message each; empty when clean."""
    problems = []
    tags, first_line, sent_idx = [], None, 0

    def check():
        nonlocal sent_idx
        if tags:
            for i, reason in validate_iob2(tags):
                problems.append(f"line {first_line + i}: sentence {sent_idx}: {reason}")
            sent_idx += 1
        tags.clear()

    for line_no, line in enumerate(text.split("\n"), start=1):
        cols = line.split()
        if not cols:
            check()
            continue
        if cols[0] == DOCSTART:
            continue
        if len(cols) < 2:
            problems.append(f"line {line_no}: expected at least 2 columns")
            continue
        try:
            _split_tag(cols[-1], line_no)
        except InvalidTag as e:
            problems.append(str(e))
            continue
        if not tags:
            first_line = line_no
        tags.append(cols[-1])
    check()
    if sent_idx == 0 and not problems:
        problems.append("input contains no sentences")
    return problems


def parse_text(text: str) -> UnlabeledCorpus:
    """One whitespace-tokenised sentence per non-blank line."""
    sentences = [Sentence(tuple(line.split())) for line in text.split("\n") if line.split()]
    if not sentences:
        raise EmptyInput()
    return UnlabeledCorpus(tuple(sentences))


def serialize_conll(dataset) -> str:
    lines = []
    for s in dataset.sentences:
        if s.tags is None:
            lines.extend(s.tokens)
        else:
            lines.extend(f"{tok} {tag}" for tok, tag in zip(s.tokens, s.tags))
        lines.append("")
    return "".join(line + "\n" for line in lines)


def read_conll(path, labeled=True):
    with open(path, encoding="utf-8") as f:
        return parse_conll(f.read(), labeled=labeled)


def write_conll(dataset, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_conll(dataset))


# -- splitting ----------------------------------------------------------------


def split_sizes(n: int) -> tuple[int, int, int]:
    if n < 10:
        raise TooSmall(f"need at least 10 sentences to split, got {n}")
    n_test = n * 20 // 100
    n_val = (n - n_test) * 10 // 100
    if n_val == 0:
        n_val = 1
    return n - n_test - n_val, n_val, n_test


def split_dataset(dataset: LabeledDataset, seed: int):
    """Shuffle by ``seed`` and cut into (train, val, test).

    test takes 20% of the sentences and val 10% of what remains (floors, with
    at least one validation sentence). Each split keeps the parent's class
    set and the original sentence order.
    """
    n_train, n_val, n_test = split_sizes(dataset.n)
    perm = np.random.default_rng(seed).permutation(dataset.n)
    test_idx = np.sort(perm[:n_test])
    val_idx = np.sort(perm[n_test:n_test + n_val])
    train_idx = np.sort(perm[n_test + n_val:])

    def take(idx):
        return LabeledDataset(tuple(dataset.sentences[i] for i in idx), dataset.classes)

    return take(train_idx), take(val_idx), take(test_idx)


# -- vocabulary and encoding --------------------------------------------------


@dataclass
class Vocab:
    token_to_id: dict[str, int] = field(default_factory=lambda: {PAD_TOKEN: PAD, UNK_TOKEN: UNK})
    min_freq: int = 2

    def __len__(self):
        return len(self.token_to_id)

    def __getitem__(self, token):
        return self.token_to_id.get(token, UNK)

    def encode(self, tokens):
        get = self.token_to_id.get
        return [get(t, UNK) for t in tokens]


def build_vocab(data, min_freq: int = 2) -> Vocab:
    """Vocabulary over one dataset or several (e.g. a training split plus an
    unlabeled corpus). Ids from 2 upward by descending frequency, ties
    broken lexicographically; tokens rarer than ``min_freq`` are left out.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    parts = data if isinstance(data, (list, tuple)) else [data]
    counts = Counter()
    for part in parts:
        for s in part.sentences:
            counts.update(s.tokens)
    vocab = Vocab(min_freq=min_freq)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    for tok in kept:
        if tok not in vocab.token_to_id:
            vocab.token_to_id[tok] = len(vocab.token_to_id)
    return vocab


def build_tag_index(classes: Iterable[str]) -> dict[str, int]:
    index = {"O": 0}
    for cls in sorted(classes):
        index["B-" + cls] = len(index)
        index["I-" + cls] = len(index)
    return index


def format_tag_index(tag_index: dict[str, int]) -> str:
    return "".join(f"{tag}\t{i}\n" for tag, i in sorted(tag_index.items(), key=lambda kv: kv[1]))


def parse_tag_index(text: str) -> dict[str, int]:
    index = {}
    for line in text.splitlines():
        if line.strip():
            tag, i = line.split("\t")
            index[tag] = int(i)
    return index


@dataclass
class EncodedBatch:
    ids: np.ndarray  # [B, T] int64
    mask: np.ndarray  # [B, T] bool
    tag_ids: np.ndarray  # [B, T] int64, IGNORE at pads and unlabeled rows
    truncated: int = 0

    @property
    def shape(self):
        return self.ids.shape


def encode_batch(sentences, vocab: Vocab, tag_index: dict[str, int], max_len: int = 256) -> EncodedBatch:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    sentences = list(sentences)
    width = min(max(len(s) for s in sentences), max_len)
    ids = np.full((len(sentences), width), PAD, dtype=np.int64)
    tag_ids = np.full((len(sentences), width), IGNORE, dtype=np.int64)
    mask = np.zeros((len(sentences), width), dtype=bool)
    truncated = 0
    for b, s in enumerate(sentences):
        if len(s) > max_len:
            truncated += 1
        n = min(len(s), max_len)
        ids[b, :n] = vocab.encode(s.tokens[:n])
        mask[b, :n] = True
        if s.tags is not None:
            for t, tag in enumerate(s.tags[:n]):
                try:
                    tag_ids[b, t] = tag_index[tag]
                except KeyError:
                    raise UnknownTag(tag) from None
    if truncated:
        log.warning("truncated %d sentence(s) to %d tokens", truncated, max_len)
    return EncodedBatch(ids, mask, tag_ids, truncated)


def corpus_stats(dataset) -> dict:
    lengths = [len(s) for s in dataset.sentences]
    entity_counts = Counter()
    for s in dataset.sentences:
        if s.tags is not None:
            for span in tags_to_spans(s.tags):
                entity_counts[span.cls] += 1
    bins = Counter(min(length // 5 * 5, 100) for length in lengths)
    return {
        "sentences": len(lengths),
        "tokens": sum(lengths),
        "labeled": isinstance(dataset, LabeledDataset),
        "classes": {cls: entity_counts.get(cls, 0) for cls in getattr(dataset, "classes", ())},
        "length": {
            "min": min(lengths),
            "max": max(lengths),
            "mean": sum(lengths) / len(lengths),
            "histogram": {f"{lo}-{lo + 4}" if lo < 100 else "100+": bins[lo] for lo in sorted(bins)},
        },
    }
