"""Stage 1: turn a natural-language query into a weighted term set.

Weights encode linguistic specificity: proper nouns 3.0, nouns 2.0, verbs 1.0,
plus 1.0 when the token sits inside a named-entity span. Expansion stages
attach their own fixed weights (entity hops 2.5, pseudo-relevance feedback
0.5) through the same term type.
"""

from __future__ import annotations

from dataclasses import dataclass

from .annotate import ENTITY_LABELS, Annotator
from .errors import EmptyTermSetError

POS_WEIGHTS = {"PROPN": 3.0, "NOUN": 2.0, "VERB": 1.0}
PROVENANCES = ("query", "entity-hop", "prf")
ENTITY_HOP_WEIGHT = 2.5
PRF_WEIGHT = 0.5
_QUERY_WEIGHTS = (1.0, 2.0, 3.0, 4.0)


@dataclass(frozen=True)
class WeightedTerm:
    surface: str
    weight: float
    provenance: str

    def __post_init__(self) -> None:
        if not self.surface:
            raise ValueError("term surface must be non-empty")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == "query" and self.weight not in _QUERY_WEIGHTS:
            raise ValueError(f"query term weight must be one of {_QUERY_WEIGHTS}")
        if self.provenance == "entity-hop" and self.weight != ENTITY_HOP_WEIGHT:
            raise ValueError(f"entity-hop terms weigh {ENTITY_HOP_WEIGHT}")
        if self.provenance == "prf" and self.weight != PRF_WEIGHT:
            raise ValueError(f"prf terms weigh {PRF_WEIGHT}")


@dataclass(frozen=True)
class WeightedTermSet:
    """Terms with case-insensitive unique surfaces; max weight wins on clash."""

    terms: tuple[WeightedTerm, ...]
    query_text: str

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for term in self.terms:
            key = term.surface.lower()
            if key in seen:
                raise ValueError(f"duplicate term surface {term.surface!r}")
            seen.add(key)

    @staticmethod
    def from_terms(terms: list[WeightedTerm], query_text: str) -> "WeightedTermSet":
        """Dedup case-insensitively, keeping the max-weight reading per surface.

        First occurrence fixes position and casing; a later higher-weight
        reading upgrades the weight in place.
        """
        order: list[str] = []
        best: dict[str, WeightedTerm] = {}
        for term in terms:
            key = term.surface.lower()
            if key not in best:
                order.append(key)
                best[key] = term
            elif term.weight > best[key].weight:
                best[key] = WeightedTerm(
                    surface=best[key].surface,
                    weight=term.weight,
                    provenance=term.provenance,
                )
        return WeightedTermSet(
            terms=tuple(best[key] for key in order), query_text=query_text
        )

    def surfaces_lower(self) -> frozenset[str]:
        return frozenset(term.surface.lower() for term in self.terms)

    def contains_surface(self, surface: str) -> bool:
        return surface.lower() in self.surfaces_lower()

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


def parse_query(query: str, annotator: Annotator) -> WeightedTermSet:
    """Extract weighted terms from the query; raises EmptyTermSetError when
    nothing qualifies (the retrieval layer then falls back to semantic search).
    """
    if not query:
        raise ValueError("query must be non-empty")
    annotations = annotator.annotate(query)
    terms: list[WeightedTerm] = []
    for annotation in annotations:
        weight = POS_WEIGHTS.get(annotation.pos)
        if weight is None:
            continue
        if annotation.entity_label in ENTITY_LABELS:
            weight += 1.0
        terms.append(WeightedTerm(surface=annotation.token, weight=weight,
                                  provenance="query"))
    for mention in annotator.extract_entities(query):
        if " " not in mention.surface:
            continue
        terms.append(WeightedTerm(
            surface=mention.surface,
            weight=_head_weight(mention.surface, terms),
            provenance="query",
        ))
    term_set = WeightedTermSet.from_terms(terms, query_text=query)
    if not term_set.terms:
        raise EmptyTermSetError(f"no content terms in query {query!r}")
    return term_set


def _head_weight(surface: str, terms: list[WeightedTerm]) -> float:
    """Weight of the mention's first word, as already scored token-wise."""
    head = surface.split()[0].strip(".,;:!?")
    for term in terms:
        if term.surface.lower() == head.lower():
            return term.weight
    return POS_WEIGHTS["PROPN"] + 1.0
