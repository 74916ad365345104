"""Entity-level (exact boundary and class) and token-level scoring."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import tags_to_spans
from .errors import LengthMismatch


def _prf(n_correct, n_pred, n_gold):
    p = n_correct / n_pred if n_pred else 0.0
    r = n_correct / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    token_accuracy: float
    n_gold: int
    n_pred: int
    n_correct: int
    per_class: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "token_accuracy": self.token_accuracy,
            "per_class": {
                cls: {"precision": p, "recall": r, "f1": f, "support": s}
                for cls, (p, r, f, s) in sorted(self.per_class.items())
            },
            "counts": {"n_gold": self.n_gold, "n_pred": self.n_pred, "n_correct": self.n_correct},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self):
        rows = [("class", "precision", "recall", "f1", "support")]
        for cls, (p, r, f, s) in sorted(self.per_class.items()):
            rows.append((cls, f"{p:.3f}", f"{r:.3f}", f"{f:.3f}", str(s)))
        rows.append(("micro", f"{self.precision:.3f}", f"{self.recall:.3f}", f"{self.f1:.3f}", str(self.n_gold)))
        widths = [max(len(row[i]) for row in rows) for i in range(5)]
        lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
                 for row in rows]
        lines.insert(1, "-" * len(lines[0]))
        lines.insert(len(lines) - 1, "-" * len(lines[0]))
        lines.append(f"token accuracy: {self.token_accuracy:.3f}")
        return "\n".join(lines) + "\n"


def score(gold, pred) -> MetricsReport:
    """Score predicted tag sequences against a labeled dataset.

    ``gold`` is a LabeledDataset (or a sequence of tag sequences); ``pred``
    holds one IOB2 tag sequence per gold sentence.
    """
    gold_tags = [s.tags for s in gold.sentences] if hasattr(gold, "sentences") else list(gold)
    pred = list(pred)
    if len(gold_tags) != len(pred):
        raise LengthMismatch(f"{len(gold_tags)} gold sentences vs {len(pred)} predictions")

    n_gold = n_pred = n_correct = 0
    n_tok = n_tok_correct = 0
    by_class: dict[str, list[int]] = {}  # cls -> [correct, pred, gold]
    for i, (g, p) in enumerate(zip(gold_tags, pred)):
        if len(g) != len(p):
            raise LengthMismatch(f"sentence {i}: {len(g)} gold tags vs {len(p)} predicted")
        n_tok += len(g)
        n_tok_correct += sum(a == b for a, b in zip(g, p))
        gs = {(s.start, s.end, s.cls) for s in tags_to_spans(g)}
        ps = {(s.start, s.end, s.cls) for s in tags_to_spans(p)}
        hits = gs & ps
        n_gold += len(gs)
        n_pred += len(ps)
        n_correct += len(hits)
        for idx, spans in ((0, hits), (1, ps), (2, gs)):
            for _, _, cls in spans:
                by_class.setdefault(cls, [0, 0, 0])[idx] += 1

    precision, recall, f1 = _prf(n_correct, n_pred, n_gold)
    classes = set(by_class) | set(getattr(gold, "classes", ()))
    per_class = {}
    for cls in classes:
        c, np_, ng = by_class.get(cls, (0, 0, 0))
        per_class[cls] = (*_prf(c, np_, ng), ng)
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        token_accuracy=n_tok_correct / n_tok if n_tok else 0.0,
        n_gold=n_gold,
        n_pred=n_pred,
        n_correct=n_correct,
        per_class=per_class,
    )
