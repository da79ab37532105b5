"""Learns field-value co-occurrence statistics from stored instances and
ranks context-sensitive value suggestions.

Scores are exact rationals: with usable context pairs the score is the
averaged conditional co-occurrence frequency, otherwise the marginal
frequency of the candidate value.  Ties break on support count, then on
the value key, so rankings are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import TemplateMismatch
from .model import MetadataInstance, ResolvedTemplate, flatten_instance, is_iri, literal_value_key


@dataclass(frozen=True)
class ContextPair:
    path: str
    value_key: str


@dataclass(frozen=True)
class Suggestion:
    value_key: str
    display: str
    score: Fraction
    support_count: int

    def to_dict(self) -> dict:
        return {
            "valueKey": self.value_key,
            "display": self.display,
            "score": float(self.score),
            "supportCount": self.support_count,
        }


def _pair_key(a: tuple, b: tuple) -> tuple:
    return (a, b) if a <= b else (b, a)


def normalize_context_value(rt: ResolvedTemplate | None, path: str, raw: str) -> str:
    """Field-type-aware normalization of a raw context value: term fields keep
    the IRI verbatim, number fields canonicalize the decimal, the rest get
    the literal text key."""
    field_type = None
    if rt is not None:
        node = rt
        for segment in path.split("/"):
            children = getattr(node, "children", ())
            node = next((c for c in children if c.name == segment), None)
            if node is None:
                break
        if node is not None and hasattr(node, "field_type"):
            field_type = node.field_type
    if field_type == "term":
        return raw
    if field_type == "number":
        return literal_value_key(raw, "number")
    if field_type is None and is_iri(raw):
        return raw
    return literal_value_key(raw, "string")


@dataclass
class CorpusIndex:
    """Co-occurrence counts for one template's instance corpus.

    Mutation happens through ``add_instance`` only; concurrent readers get
    consistency by swapping whole index objects (see ``clone``).
    """

    template_id: str
    n: int = 0
    unary: dict = field(default_factory=dict)     # (path, key) -> occurrence count
    pairwise: dict = field(default_factory=dict)  # unordered pair -> instance count
    display: dict = field(default_factory=dict)   # (path, key) -> latest display

    def add_instance(self, m: MetadataInstance) -> None:
        if m.template_id != self.template_id:
            raise TemplateMismatch(
                f"instance belongs to template {m.template_id}, index is for {self.template_id}")
        pairs = flatten_instance(m)
        self.n += 1
        for p in pairs:
            key = (p.path, p.value_key)
            self.unary[key] = self.unary.get(key, 0) + 1
            self.display[key] = p.display
        present = sorted({(p.path, p.value_key) for p in pairs})
        for i, a in enumerate(present):
            for b in present[i + 1:]:
                key = _pair_key(a, b)
                self.pairwise[key] = self.pairwise.get(key, 0) + 1

    def clone(self) -> "CorpusIndex":
        return CorpusIndex(self.template_id, self.n, dict(self.unary),
                           dict(self.pairwise), dict(self.display))


def index_corpus(template_id: str, instances: list[MetadataInstance]) -> CorpusIndex:
    index = CorpusIndex(template_id)
    for m in instances:
        index.add_instance(m)
    return index


def suggest(idx: CorpusIndex, target_path: str, context: list[ContextPair],
            k: int, min_support: int = 1) -> list[Suggestion]:
    """Top-k value suggestions for ``target_path`` given the filled context."""
    if k < 1:
        raise ValueError("k must be positive")
    deduped: list[ContextPair] = []
    seen = set()
    for c in context:
        if c.path == target_path:
            raise ValueError(f"context pair {c.path!r} clashes with the target path")
        pair = (c.path, c.value_key)
        if pair not in seen:
            seen.add(pair)
            deduped.append(c)

    candidates = [
        (key[1], count) for key, count in idx.unary.items()
        if key[0] == target_path and count >= min_support
    ]
    if not candidates:
        return []

    usable = [
        (c.path, c.value_key) for c in deduped
        if idx.unary.get((c.path, c.value_key), 0) > 0
    ]

    suggestions = []
    for value_key, support in candidates:
        target = (target_path, value_key)
        if usable:
            total = Fraction(0)
            for ctx_key in usable:
                co = idx.pairwise.get(_pair_key(ctx_key, target), 0)
                total += Fraction(co, idx.unary[ctx_key])
            score = total / len(usable)
        elif idx.n:
            score = Fraction(support, idx.n)
        else:
            score = Fraction(0)
        suggestions.append(Suggestion(value_key, idx.display[target], score, support))

    suggestions.sort(key=lambda s: (-s.score, -s.support_count, s.value_key))
    return suggestions[:k]
