"""POS tags and named-entity spans from deterministic lexicon-and-suffix rules.

The rule annotator is the default and ships its own lexicon data files. An
adapter over the scoring-service line protocol (kind="annotate") lets an
external statistical tagger take its place without touching the rest of the
pipeline; both expose the same two operations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Protocol

from .errors import PartialResponseError
from .service import ServiceClient

POS_TAGS = ("PROPN", "NOUN", "VERB", "OTHER")
ENTITY_LABELS = ("PERSON", "ORG", "LOC", "EVENT")

# Letters/digits with internal apostrophes or hyphens; underscores excluded.
_TOKEN_RE = re.compile(r"[^\W_]+(?:['’\-][^\W_]+)*")
_SENTENCE_END = (".", "!", "?", "\n", "…")
_NOUN_SUFFIXES = ("tion", "sion", "ment", "ness", "ity", "ship", "hood",
                  "ism", "ence", "ance", "ology", "er", "or", "ist")
_VERB_SUFFIXES = ("ify", "ize", "ise")


@dataclass(frozen=True)
class TokenAnnotation:
    token: str
    pos: str
    entity_label: str | None = None


@dataclass(frozen=True)
class EntityMention:
    surface: str
    label: str
    passage_id: str | None = None


class Annotator(Protocol):
    def annotate(self, text: str) -> list[TokenAnnotation]: ...

    def extract_entities(self, text: str) -> list[EntityMention]: ...


# --- lexicon plumbing ---

def _read_lexicon(name: str, root: Path | None) -> list[str]:
    if root is not None:
        raw = (root / name).read_text(encoding="utf-8")
    else:
        raw = (resources.files("memgrep.data.lexicon") / name).read_text(
            encoding="utf-8"
        )
    entries = []
    for line in raw.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.append(line)
    return entries


def _lower_set(entries: Iterable[str]) -> frozenset[str]:
    return frozenset(entry.lower() for entry in entries)


@dataclass(frozen=True)
class _Tok:
    raw: str          # text slice as written, possessive marker included
    core: str         # raw with a trailing 's / 's clipped off
    start: int
    end: int          # end of core, not of raw
    sentence_initial: bool


class RuleAnnotator:
    """Capitalization, lexicon, and suffix heuristics; no model, no state.

    Read-only after construction; one instance can serve concurrent callers.
    """

    def __init__(self, lexicon_dir: str | Path | None = None) -> None:
        root = Path(lexicon_dir) if lexicon_dir is not None else None
        self._stopwords = _lower_set(_read_lexicon("stopwords.txt", root))
        self._first_names = _lower_set(_read_lexicon("first_names.txt", root))
        self._verbs = _lower_set(_read_lexicon("verbs.txt", root))
        self._date_words = _lower_set(_read_lexicon("date_words.txt", root))
        self._honorifics = _lower_set(_read_lexicon("honorifics.txt", root))
        self._org_keywords = _lower_set(_read_lexicon("org_keywords.txt", root))
        self._event_keywords = _lower_set(_read_lexicon("event_keywords.txt", root))
        places = _read_lexicon("places.txt", root)
        self._places_full = frozenset(" ".join(p.split()).lower() for p in places)
        self._places_single = _lower_set(p for p in places if " " not in p)

    # --- public operations ---

    def annotate(self, text: str) -> list[TokenAnnotation]:
        annotations, _ = self._analyze(text)
        return annotations

    def extract_entities(self, text: str) -> list[EntityMention]:
        _, mentions = self._analyze(text)
        deduped: list[EntityMention] = []
        seen: set[tuple[str, str]] = set()
        for mention in mentions:
            key = (mention.surface.lower(), mention.label)
            if key not in seen:
                seen.add(key)
                deduped.append(mention)
        return deduped

    # --- internals ---

    def _analyze(self, text: str) -> tuple[list[TokenAnnotation], list[EntityMention]]:
        if not text.strip():
            raise ValueError("text must be non-empty")
        tokens = self._tokenize(text)
        tags = [self._classify(tokens, i) for i in range(len(tokens))]
        spans = self._entity_spans(text, tokens, tags)
        labels: dict[int, str] = {}
        mentions: list[EntityMention] = []
        for first, last, label in spans:
            surface = text[tokens[first].start:tokens[last].end]
            mentions.append(EntityMention(surface=surface, label=label))
            for i in range(first, last + 1):
                labels[i] = label
        annotations = [
            TokenAnnotation(token=tok.core, pos=tag, entity_label=labels.get(i))
            for i, (tok, tag) in enumerate(zip(tokens, tags))
        ]
        return annotations, mentions

    def _tokenize(self, text: str) -> list[_Tok]:
        tokens: list[_Tok] = []
        prev_end = 0
        for match in _TOKEN_RE.finditer(text):
            raw = match.group(0)
            core = raw
            if len(core) > 2 and core[-2:] in ("'s", "’s"):
                core = core[:-2]
            gap = text[prev_end:match.start()]
            if not tokens:
                initial = True
            elif any(ch in gap for ch in _SENTENCE_END):
                initial = not self._honorific_gap(tokens[-1], gap)
            else:
                initial = False
            tokens.append(_Tok(
                raw=raw, core=core,
                start=match.start(), end=match.start() + len(core),
                sentence_initial=initial,
            ))
            prev_end = match.end()
        return tokens

    def _honorific_gap(self, prev: _Tok, gap: str) -> bool:
        """A period right after an honorific does not end the sentence."""
        return (
            prev.core.lower() in self._honorifics
            and gap.lstrip(".").strip() == ""
            and gap.count(".") == 1
        )

    def _classify(self, tokens: list[_Tok], i: int) -> str:
        tok = tokens[i]
        low = tok.core.lower()
        if low in self._stopwords:
            return "OTHER"
        if any(ch.isdigit() for ch in tok.core):
            return "OTHER"
        if low in self._date_words:
            return "OTHER"
        if tok.core[0].isupper() and self._proper_reading(tokens, i, low):
            return "PROPN"
        if low in self._verbs:
            return "VERB"
        if low.endswith("ed") and len(low) >= 4:
            return "VERB"
        if low.endswith("ing") and len(low) >= 5:
            return "NOUN"
        if low.endswith(_NOUN_SUFFIXES):
            return "NOUN"
        if low.endswith(_VERB_SUFFIXES):
            return "VERB"
        return "NOUN"

    def _proper_reading(self, tokens: list[_Tok], i: int, low: str) -> bool:
        tok = tokens[i]
        if not tok.sentence_initial:
            return True
        if low in self._first_names or low in self._places_single \
                or low in self._honorifics:
            return True
        # Sentence-initial capitalized word right before another capitalized
        # content word usually opens a multi-word name ("New York is...").
        # Known verbs are exempt so imperatives keep their verb reading.
        if low in self._verbs:
            return False
        if i + 1 < len(tokens):
            nxt = tokens[i + 1]
            nxt_low = nxt.core.lower()
            return (
                not nxt.sentence_initial
                and nxt.core[0].isupper()
                and nxt_low not in self._stopwords
                and nxt_low not in self._date_words
            )
        return False

    def _entity_spans(
        self, text: str, tokens: list[_Tok], tags: list[str]
    ) -> list[tuple[int, int, str]]:
        spans: list[tuple[int, int, str]] = []
        i = 0
        while i < len(tokens):
            if tags[i] != "PROPN":
                i += 1
                continue
            j = i
            while j + 1 < len(tokens) and tags[j + 1] == "PROPN":
                raw_end = tokens[j].start + len(tokens[j].raw)
                gap = text[raw_end:tokens[j + 1].start]
                if gap.strip() == "" or self._honorific_gap(tokens[j], gap):
                    j += 1
                else:
                    break
            spans.append((i, j, self._label_span(text, tokens, i, j)))
            i = j + 1
        return spans

    def _label_span(
        self, text: str, tokens: list[_Tok], first: int, last: int
    ) -> str:
        surface = text[tokens[first].start:tokens[last].end]
        normalized = " ".join(surface.split()).lower()
        cores = [tokens[i].core.lower() for i in range(first, last + 1)]
        if normalized in self._places_full:
            return "LOC"
        if any(core in self._org_keywords for core in cores):
            return "ORG"
        if any(core in self._event_keywords for core in cores):
            return "EVENT"
        if any(core in self._places_single for core in cores):
            return "LOC"
        return "PERSON"


class ServiceAnnotator:
    """Same contract as RuleAnnotator, served over the line protocol."""

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 1) -> None:
        self._client = ServiceClient(endpoint=endpoint, timeout=timeout,
                                     retries=retries)

    def annotate(self, text: str) -> list[TokenAnnotation]:
        if not text.strip():
            raise ValueError("text must be non-empty")
        entry = self._client.annotate([text])[0]
        tokens = entry.get("tokens")
        if not isinstance(tokens, list):
            raise PartialResponseError("annotation entry lacks a tokens list")
        out = []
        for item in tokens:
            pos = item.get("pos")
            label = item.get("entity_label")
            if item.get("token") is None or pos not in POS_TAGS:
                raise PartialResponseError(f"bad token annotation: {item!r}")
            if label is not None and label not in ENTITY_LABELS + ("OTHER",):
                raise PartialResponseError(f"bad entity label: {label!r}")
            out.append(TokenAnnotation(token=str(item["token"]), pos=pos,
                                       entity_label=label))
        return out

    def extract_entities(self, text: str) -> list[EntityMention]:
        if not text.strip():
            raise ValueError("text must be non-empty")
        entry = self._client.annotate([text])[0]
        entities = entry.get("entities")
        if not isinstance(entities, list):
            raise PartialResponseError("annotation entry lacks an entities list")
        deduped: list[EntityMention] = []
        seen: set[tuple[str, str]] = set()
        for item in entities:
            surface = item.get("surface")
            label = item.get("label")
            if not surface or label not in ENTITY_LABELS:
                raise PartialResponseError(f"bad entity mention: {item!r}")
            key = (surface.lower(), label)
            if key not in seen:
                seen.add(key)
                deduped.append(EntityMention(surface=surface, label=label))
        return deduped


def annotation_payload(annotator: Annotator, texts: list[str]) -> list[dict]:
    """Serve-side helper: wrap an annotator as annotate_fn for ReferenceServer."""
    payload = []
    for text in texts:
        annotations = annotator.annotate(text) if text else []
        entities = annotator.extract_entities(text) if text else []
        payload.append({
            "tokens": [
                {"token": a.token, "pos": a.pos, "entity_label": a.entity_label}
                for a in annotations
            ],
            "entities": [
                {"surface": e.surface, "label": e.label} for e in entities
            ],
        })
    return payload
