"""Deterministic toy corpus: 50 episodes, 5 queries, graded judgments.

Five topics, ten episodes each. Within a topic the first three episodes are
strongly on-topic (grade 2), the next three mildly (grade 1), and the rest
are judged non-relevant background chatter. Judgments are emitted per
segment under the default two-minute segmentation. Also writes a small
labeled-pairs file usable for head training demos.

Run as a module: python -m podrank.toydata --out-dir data
"""

from __future__ import annotations

import argparse
import json
import os
import random

from .corpus import Episode, Query, Segment, TranscriptWord, segment_episode, write_corpus, write_queries
from .trec_eval import Qrels, write_qrels

_SECONDS_PER_WORD = 0.4

TOPICS = {
    "cooking": {
        "words": [
            "pasta", "sauce", "garlic", "basil", "oven", "roast", "recipe", "simmer",
            "butter", "flour", "dough", "knead", "season", "pepper", "olive", "skillet",
            "braise", "stock", "tomato", "parmesan", "whisk", "tender", "crumb", "glaze",
        ],
        "query": "easy pasta sauce recipe",
        "description": "Looking for episodes that walk through cooking a simple pasta sauce from scratch.",
    },
    "astronomy": {
        "words": [
            "telescope", "galaxy", "nebula", "orbit", "comet", "eclipse", "lunar",
            "stellar", "quasar", "photon", "gravity", "parallax", "supernova", "aperture",
            "mars", "saturn", "crater", "cosmic", "redshift", "observatory", "meteor",
            "spectrum", "exoplanet", "horizon",
        ],
        "query": "amateur telescope observing galaxies",
        "description": "Episodes about backyard astronomy and what equipment reveals distant galaxies.",
    },
    "soccer": {
        "words": [
            "goal", "midfield", "striker", "penalty", "keeper", "offside", "tackle",
            "corner", "league", "derby", "fixture", "transfer", "winger", "header",
            "pitch", "referee", "defender", "counter", "pressing", "formation",
            "crossbar", "volley", "stadium", "cup",
        ],
        "query": "league title race analysis",
        "description": "Episodes breaking down the title race, fixtures, and tactical formations.",
    },
    "programming": {
        "words": [
            "compiler", "debugger", "refactor", "closure", "thread", "mutex", "socket",
            "parser", "syntax", "runtime", "kernel", "binary", "garbage", "allocator",
            "latency", "cache", "stack", "queue", "hashmap", "iterator", "typing",
            "bytecode", "profiler", "regex",
        ],
        "query": "debugging memory allocator bugs",
        "description": "Episodes where engineers discuss tracking down allocator and memory corruption bugs.",
    },
    "music": {
        "words": [
            "guitar", "chord", "melody", "tempo", "rhythm", "bassline", "chorus",
            "verse", "harmony", "drummer", "vinyl", "studio", "mixing", "mastering",
            "synth", "sampler", "octave", "riff", "acoustic", "amplifier", "falsetto",
            "lyric", "cadence", "encore",
        ],
        "query": "recording acoustic guitar at home",
        "description": "Episodes with practical advice on home studio recording of acoustic guitar.",
    },
}

BACKGROUND = [
    "today", "really", "think", "people", "going", "about", "right", "actually",
    "kind", "little", "thing", "want", "maybe", "because", "always", "never",
    "story", "friend", "week", "year", "start", "point", "world", "great",
    "question", "moment", "idea", "talk", "listen", "show", "guest", "welcome",
]

# (grade, topic word density) per position within a topic's ten episodes.
_EPISODE_PLAN = [
    (2, 0.55), (2, 0.5), (2, 0.45),
    (1, 0.25), (1, 0.2), (1, 0.18),
    (0, 0.04), (0, 0.03), (0, 0.0), (0, 0.0),
]


def _transcript(rng: random.Random, n_words: int, topic_words: list[str], density: float,
                timestamped: bool) -> list[TranscriptWord]:
    words = []
    for i in range(n_words):
        pool = topic_words if rng.random() < density else BACKGROUND
        text = pool[rng.randrange(len(pool))]
        if timestamped:
            start = round(i * _SECONDS_PER_WORD, 2)
            words.append(TranscriptWord(text=text, start_s=start, end_s=round(start + 0.35, 2)))
        else:
            words.append(TranscriptWord(text=text))
    return words


def build_toy_corpus(seed: int = 7) -> tuple[list[Episode], list[Query], Qrels]:
    rng = random.Random(seed)
    episodes: list[Episode] = []
    queries: list[Query] = []
    judgments: dict[tuple[str, str], int] = {}

    for t_index, (topic, info) in enumerate(sorted(TOPICS.items())):
        qid = f"q{t_index + 1}"
        queries.append(Query(qid=qid, query=info["query"], description=info["description"]))
        for e_index, (grade, density) in enumerate(_EPISODE_PLAN):
            number = t_index * 10 + e_index + 1
            episode_id = f"ep{number:03d}"
            n_words = rng.randrange(350, 900)
            timestamped = number % 7 != 0
            transcript = _transcript(rng, n_words, info["words"], density, timestamped)
            if number == 50:
                transcript = []  # one episode with no transcript at all
            title_word = info["words"][e_index % len(info["words"])]
            episodes.append(
                Episode(
                    episode_id=episode_id,
                    show_name=f"{topic} weekly",
                    title=f"{topic} episode {e_index + 1}: {title_word if grade else 'odds and ends'}",
                    description=(
                        f"A {topic} conversation about {title_word}."
                        if grade
                        else "Loose chat, listener mail, and announcements."
                    ),
                    transcript=transcript,
                )
            )
            if grade or e_index in (6, 7):  # include some judged non-relevant segments
                for segment in segment_episode(episodes[-1]):
                    judgments[(qid, segment.segment_id)] = grade

    return episodes, queries, Qrels(judgments)


def training_pairs(episodes: list[Episode], queries: list[Query], qrels: Qrels,
                   per_class: int = 8) -> list[dict]:
    """Balanced (query, segment text) pairs derived from the judgments."""
    segments: dict[str, Segment] = {}
    for episode in episodes:
        for segment in segment_episode(episode):
            segments[segment.segment_id] = segment
    pairs = []
    for query in queries:
        rels = qrels.for_qid(query.qid)
        positives = sorted(s for s, rel in rels.items() if rel >= 1)[:per_class]
        negatives = sorted(s for s, rel in rels.items() if rel == 0)[:per_class]
        for label, ids in ((1, positives), (0, negatives)):
            for segment_id in ids:
                pairs.append(
                    {
                        "label": label,
                        "query": query.query,
                        "description": query.description,
                        "doc": segments[segment_id].text,
                    }
                )
    return pairs


def write_toy_dataset(out_dir: str, seed: int = 7) -> dict[str, str]:
    episodes, queries, qrels = build_toy_corpus(seed)
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "corpus": os.path.join(out_dir, "corpus.jsonl"),
        "queries": os.path.join(out_dir, "queries.jsonl"),
        "qrels": os.path.join(out_dir, "qrels.txt"),
        "pairs": os.path.join(out_dir, "pairs.jsonl"),
    }
    write_corpus(paths["corpus"], episodes)
    write_queries(paths["queries"], queries)
    write_qrels(paths["qrels"], qrels)
    with open(paths["pairs"], "w", encoding="utf-8") as handle:
        for pair in training_pairs(episodes, queries, qrels):
            handle.write(json.dumps(pair, sort_keys=True) + "\n")
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Generate the bundled toy dataset.")
    parser.add_argument("--out-dir", default="toydata", help="output directory")
    parser.add_argument("--seed", type=int, default=7, help="generation seed")
    args = parser.parse_args(argv)
    paths = write_toy_dataset(args.out_dir, args.seed)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
