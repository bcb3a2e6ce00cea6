#!/usr/bin/env python3
"""Derive minimum-cost retrieval traces, then sweep truncation offline.

The oracle answers "how many search actions does each question actually
need?" by breadth-first search over (tool, term-subset) actions. The sweep
then replays truncation from a frozen score matrix: no scorer calls, just
arithmetic over stored word counts and scores.
"""

from importlib import resources

from memgrep import (
    RuleAnnotator,
    ScorerHandle,
    build_matrix,
    derive_trace,
    load_questions,
    read_corpus,
    render_sweep_text,
    simulate_truncation,
    trace_stats,
)


def main() -> None:
    data = resources.files("memgrep").joinpath("data", "fixture")
    corpus = read_corpus(data.joinpath("corpus.jsonl"))
    questions = load_questions(data.joinpath("questions.json"), corpus)
    annotator = RuleAnnotator()

    print("oracle traces (unit cost per search action):")
    traces = []
    for question in questions:
        trace = derive_trace(question.text, question.gold, corpus, annotator)
        traces.append(trace)
        actions = " ; ".join(
            f"{a.tool}({', '.join(sorted(a.term_surfaces))})"
            for a in trace.actions
        )
        print(f"  {question.question_id}: cost {trace.cost}  {actions}")

    stats = trace_stats(traces)
    print(f"\nsuccess rate {stats['success_rate']:.0%}, "
          f"hop distribution {stats['hop_distribution']}")

    scorers = [ScorerHandle(name="lexical", kind="lexical-test")]
    matrix = build_matrix(questions, corpus, scorers)
    cells = simulate_truncation(matrix, budgets=[20, 40, 80],
                                alphas=[0.0, 0.3], ceiling=80)
    print("\noffline truncation sweep (tiny budgets, fixture-sized):")
    print(render_sweep_text(cells))


if __name__ == "__main__":
    main()
