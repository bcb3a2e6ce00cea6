#!/usr/bin/env python3
"""Parse a question into weighted terms and grep the bundled corpus.

Run from the repository root after `pip install -e .`:

    python3 demos/01_search_basics.py
"""

from importlib import resources

from memgrep import RuleAnnotator, parse_query, grep_search, read_corpus


def main() -> None:
    corpus_path = resources.files("memgrep").joinpath(
        "data", "fixture", "corpus.jsonl"
    )
    corpus = read_corpus(corpus_path)
    annotator = RuleAnnotator()

    question = "Where did Javier go hiking?"
    terms = parse_query(question, annotator)

    print(f"question: {question}")
    print("parsed terms (proper nouns 3+1 with entity bonus, nouns 2, verbs 1):")
    for term in terms.terms:
        print(f"  {term.surface:<10} weight {term.weight:.1f}")

    result = grep_search(corpus, terms, mode="OR")
    print(f"\nsubstring matches, best first ({len(result)} passages):")
    for candidate in result.candidates:
        matched = ", ".join(surface for surface, _ in candidate.matched_terms)
        text = corpus.get(candidate.passage_id).text
        print(f"  [{candidate.passage_id}] score {candidate.match_score:.1f}"
              f" via {matched}")
        print(f"      {text}")


if __name__ == "__main__":
    main()
