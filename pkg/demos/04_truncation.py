#!/usr/bin/env python3
"""Fixed versus score-adaptive truncation at a tight word budget."""

from importlib import resources

from memgrep import (
    ScorerHandle,
    TruncationConfig,
    read_corpus,
    run_question,
)


def main() -> None:
    corpus_path = resources.files("memgrep").joinpath(
        "data", "fixture", "corpus.jsonl"
    )
    corpus = read_corpus(corpus_path)
    question = "Where did Javier go hiking?"
    scorers = [ScorerHandle(name="lexical", kind="lexical-test")]

    configs = [
        ("fixed, 30 word budget",
         TruncationConfig(strategy="fixed", word_budget=30)),
        ("adaptive, alpha=0.2 of max score, 30 word ceiling",
         TruncationConfig(strategy="adaptive", word_budget=30, alpha=0.2)),
    ]
    print(f"question: {question}\n")
    for label, cfg in configs:
        run = run_question(question, corpus, scorers, trunc_cfg=cfg)
        ctx = run.context
        print(f"{label}:")
        print(f"  kept {ctx.passage_ids}, {ctx.word_count} words,"
              f" ~{ctx.estimated_tokens} tokens")
        print(f"  pruned: {ctx.pruned_by_threshold} by threshold,"
              f" {ctx.pruned_by_budget} by budget")
        print("  rendered context:")
        for line in run.rendered.splitlines():
            print(f"    {line}")
        print()


if __name__ == "__main__":
    main()
