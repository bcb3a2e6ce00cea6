"""Minimum-cost retrieval traces via shortest-path search over search actions.

For a question with known gold evidence passages, the oracle asks: what is
the shortest sequence of search actions that covers all of them? Nodes are
search states (gold covered so far, term surfaces discovered so far); edges
are unit-cost (tool, term-subset) actions. Unit cost makes Dijkstra's
algorithm collapse to breadth-first search, which is what runs; the API
keeps the cost field so non-unit costs remain possible.

The oracle sees gold passage ids only. Nothing in this module reads or
accepts answer text.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from .annotate import Annotator
from .corpus import Corpus, GoldAnnotation
from .errors import EmptyTermSetError
from .parse import WeightedTerm, WeightedTermSet, parse_query
from .retrieve import grep_search, semantic_fallback

TOOLS = ("grep-or", "grep-and", "semantic")
ENTITY_SOURCE_TOP = 10  # passages mined for new terms after each action
ACTION_SPACE_NOTE = "term subsets restricted to singletons and pairs"


@dataclass(frozen=True)
class Action:
    tool: str
    term_surfaces: frozenset[str]

    def __post_init__(self) -> None:
        if self.tool not in TOOLS:
            raise ValueError(f"unknown tool {self.tool!r}")
        if self.tool == "semantic" and self.term_surfaces:
            raise ValueError("semantic actions take the raw query, not terms")
        if self.tool != "semantic" and not self.term_surfaces:
            raise ValueError("grep actions need at least one term")

    def sort_key(self) -> tuple:
        return (TOOLS.index(self.tool), tuple(sorted(self.term_surfaces)))


@dataclass(frozen=True)
class SearchLimits:
    max_states: int = 10_000
    max_edges: int = 100_000

    def __post_init__(self) -> None:
        if self.max_states < 1 or self.max_edges < 1:
            raise ValueError("search limits must be positive")


@dataclass(frozen=True)
class OracleTrace:
    question_id: str
    actions: tuple[Action, ...]
    cost: int
    hops: int
    success: bool
    reason: str | None = None

    def __post_init__(self) -> None:
        if self.success and self.cost != len(self.actions):
            raise ValueError("cost must equal the action count")


def derive_trace(
    question: str,
    gold: GoldAnnotation,
    corpus: Corpus,
    annotator: Annotator,
    dense_scorer=None,
    limits: SearchLimits | None = None,
) -> OracleTrace:
    """Breadth-first search from (covered=empty, discovered=query terms).

    Each action greps (or semantically scores) the corpus, adds retrieved
    gold passages to `covered`, and adds entities from the top retrieved
    passages to `discovered`. The goal is full gold coverage. Failure inside
    the state/edge limits is reported, not raised; the trace records why.
    """
    gold_ids = frozenset(gold.gold_passage_ids)
    if not gold_ids:
        raise ValueError("gold set must be non-empty")
    if limits is None:
        limits = SearchLimits()

    casing: dict[str, str] = {}
    try:
        query_terms = parse_query(question, annotator)
        for term in query_terms.terms:
            casing.setdefault(term.surface.lower(), term.surface)
        initial_terms = frozenset(casing)
    except EmptyTermSetError:
        initial_terms = frozenset()

    def fail(reason: str) -> OracleTrace:
        return OracleTrace(question_id=gold.question_id, actions=(), cost=0,
                           hops=0, success=False, reason=reason)

    if not initial_terms and dense_scorer is None:
        return fail("no-path")

    # Action results are state-independent, so execution is memoized on the
    # action identity alone.
    memo: dict[tuple[str, frozenset[str]], tuple[frozenset[str], frozenset[str]]] = {}

    def execute(action: Action) -> tuple[frozenset[str], frozenset[str]]:
        key = (action.tool, action.term_surfaces)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if action.tool == "semantic":
            result = semantic_fallback(question, corpus, dense_scorer)
        else:
            term_set = WeightedTermSet(
                terms=tuple(
                    WeightedTerm(surface=casing[low], weight=1.0,
                                 provenance="query")
                    for low in sorted(action.term_surfaces)
                ),
                query_text=question,
            )
            mode = "AND" if action.tool == "grep-and" else "OR"
            result = grep_search(corpus, term_set, mode)
        covered_gain = frozenset(c.passage_id for c in result.candidates) & gold_ids
        found_terms = set()
        for candidate in result.candidates[:ENTITY_SOURCE_TOP]:
            for mention in annotator.extract_entities(
                corpus.get(candidate.passage_id).text
            ):
                low = mention.surface.lower()
                casing.setdefault(low, mention.surface)
                found_terms.add(low)
        outcome = (covered_gain, frozenset(found_terms))
        memo[key] = outcome
        return outcome

    def action_space(discovered: frozenset[str]) -> list[Action]:
        surfaces = sorted(discovered)
        actions = [Action(tool="grep-or", term_surfaces=frozenset((s,)))
                   for s in surfaces]
        for a, b in combinations(surfaces, 2):
            pair = frozenset((a, b))
            actions.append(Action(tool="grep-or", term_surfaces=pair))
            actions.append(Action(tool="grep-and", term_surfaces=pair))
        if dense_scorer is not None:
            actions.append(Action(tool="semantic", term_surfaces=frozenset()))
        actions.sort(key=Action.sort_key)
        return actions

    # nodes: (covered, discovered, parent index, action taken to get here)
    nodes: list[tuple[frozenset[str], frozenset[str], int, Action | None]] = [
        (frozenset(), initial_terms, -1, None)
    ]
    visited = {(frozenset(), initial_terms)}
    queue = deque([0])
    expanded = 0
    edges = 0

    def reconstruct(index: int) -> OracleTrace:
        actions: list[Action] = []
        while index >= 0:
            _, _, parent, action = nodes[index]
            if action is not None:
                actions.append(action)
            index = parent
        actions.reverse()
        return OracleTrace(
            question_id=gold.question_id,
            actions=tuple(actions),
            cost=len(actions),
            hops=len(actions),
            success=True,
        )

    while queue:
        index = queue.popleft()
        covered, discovered, _, _ = nodes[index]
        expanded += 1
        if expanded > limits.max_states:
            return fail("search-budget-exhausted")
        for action in action_space(discovered):
            edges += 1
            if edges > limits.max_edges:
                return fail("search-budget-exhausted")
            covered_gain, found_terms = execute(action)
            next_state = (covered | covered_gain, discovered | found_terms)
            if next_state in visited:
                continue
            visited.add(next_state)
            nodes.append((next_state[0], next_state[1], index, action))
            if next_state[0] == gold_ids:
                return reconstruct(len(nodes) - 1)
            queue.append(len(nodes) - 1)
    return fail("no-path")


# --- aggregation ---

_TOOL_POWER = {"grep-or": 0, "grep-and": 1, "semantic": 2}


def trace_stats(traces: list[OracleTrace]) -> dict:
    """Hop distribution, tool attribution, and success rate over traces.

    A successful trace counts toward the most powerful tool it used
    (semantic > grep-and > grep-or). Distributions are fractions of
    successful traces; an empty input yields an all-zero record.
    """
    total = len(traces)
    successes = [t for t in traces if t.success]
    record: dict = {
        "total": total,
        "successes": len(successes),
        "success_rate": (len(successes) / total) if total else 0.0,
        "hop_distribution": {},
        "tool_distribution": {},
        "failure_reasons": {},
    }
    for trace in traces:
        if not trace.success:
            reason = trace.reason or "unknown"
            record["failure_reasons"][reason] = \
                record["failure_reasons"].get(reason, 0) + 1
    if not successes:
        return record
    hop_counts: dict[int, int] = {}
    tool_counts: dict[str, int] = {}
    for trace in successes:
        hop_counts[trace.hops] = hop_counts.get(trace.hops, 0) + 1
        strongest = max(
            (action.tool for action in trace.actions),
            key=lambda tool: _TOOL_POWER[tool],
        )
        tool_counts[strongest] = tool_counts.get(strongest, 0) + 1
    n = len(successes)
    record["hop_distribution"] = {
        hops: count / n for hops, count in sorted(hop_counts.items())
    }
    record["tool_distribution"] = {
        tool: count / n
        for tool, count in sorted(tool_counts.items())
    }
    return record


# --- trace artifacts ---

def traces_to_jsonl(
    traces: list[OracleTrace],
    limits: SearchLimits,
    semantic_enabled: bool,
) -> str:
    """Header record first (limits and action-space restriction), then one
    trace per line; stable key order throughout."""
    header = {
        "record": "header",
        "max_states": limits.max_states,
        "max_edges": limits.max_edges,
        "action_space": ACTION_SPACE_NOTE,
        "semantic_enabled": semantic_enabled,
    }
    lines = [json.dumps(header, sort_keys=True, ensure_ascii=False)]
    for trace in traces:
        lines.append(json.dumps({
            "record": "trace",
            "question_id": trace.question_id,
            "actions": [
                {"tool": a.tool, "terms": sorted(a.term_surfaces)}
                for a in trace.actions
            ],
            "cost": trace.cost,
            "hops": trace.hops,
            "success": trace.success,
            "reason": trace.reason,
        }, sort_keys=True, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def write_traces(
    traces: list[OracleTrace],
    path: str | Path,
    limits: SearchLimits,
    semantic_enabled: bool,
) -> None:
    Path(path).write_text(
        traces_to_jsonl(traces, limits, semantic_enabled), encoding="utf-8"
    )
