#!/usr/bin/env python3
"""Fuse two scorer orderings with reciprocal rank fusion.

A scorer served over the line protocol and the in-process lexical scorer
disagree about the fixture passages; RRF combines them by rank position
only, so their score scales never need to be comparable.
"""

from importlib import resources

from memgrep import (
    ReferenceServer,
    RetrieveConfig,
    ScorerHandle,
    rank,
    read_corpus,
    retrieve,
)


def length_preference(query, items):
    # A deliberately contrarian scorer: shorter passages score higher.
    return [1.0 / (1 + len(text)) for text in items]


def main() -> None:
    corpus_path = resources.files("memgrep").joinpath(
        "data", "fixture", "corpus.jsonl"
    )
    corpus = read_corpus(corpus_path)
    question = "Where did Javier go hiking?"
    candidates = retrieve(question, corpus, RetrieveConfig())

    with ReferenceServer(score_fn=length_preference) as server:
        scorers = [
            ScorerHandle(name="cross", kind="pointwise-cross",
                         transport="service-adapter",
                         endpoint=server.endpoint),
            ScorerHandle(name="late", kind="lexical-test"),
        ]
        ranked, vectors = rank(candidates, question, corpus, scorers)

    by_name = {v.scorer_name: v for v in vectors}
    print(f"question: {question}\n")
    for name, vector in by_name.items():
        order = sorted(vector.scores, key=lambda pid: -vector.scores[pid])
        print(f"{name:>5} ordering: {order}")

    print("\nfused (weights 0.7 cross / 0.3 late, k=60):")
    for entry in ranked.entries:
        positions = ", ".join(f"{n} rank {r}" for n, r in entry.ranks.items())
        print(f"  [{entry.passage_id}] fused {entry.fused_score:.6f}"
              f"  ({positions})")


if __name__ == "__main__":
    main()
