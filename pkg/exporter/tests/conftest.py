"""Shared fixtures: a ten-episode sample dataset and a tiny local encoder.

The encoder is a randomly initialized permutation-LM checkpoint with a
whitespace word-level tokenizer, saved to disk so it loads through the same
pretrained-model path as a full-size checkpoint would.
"""

import json

import pytest
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace

from podrank.corpus import segment_episode, write_corpus, write_queries
from podrank.toydata import build_toy_corpus
from podrank.trec_eval import Qrels, write_qrels

EXTRA_WORDS = [
    "hello", "world", "quick", "brown", "fox", "jumps", "over", "lazy", "dog",
    "one", "two", "three",
]


@pytest.fixture(scope="session")
def sample_dataset(tmp_path_factory):
    """Ten episodes on one topic, the matching query, qrels, and the
    (key, text) records an export run needs to serve that pipeline."""
    out = tmp_path_factory.mktemp("sample")
    episodes, queries, qrels = build_toy_corpus(seed=7)
    episodes = episodes[:10]
    keep = {e.episode_id for e in episodes}
    queries = [q for q in queries if q.qid == "q1"]
    judged = Qrels({
        (qid, sid): rel
        for (qid, sid), rel in qrels.judgments.items()
        if qid == "q1" and sid.rsplit("_", 1)[0] in keep
    })

    texts: dict[str, str] = {}
    for query in queries:
        texts[query.qid] = f"{query.query} {query.description}".strip()
    for episode in episodes:
        for segment in segment_episode(episode):
            if segment.text.strip():
                texts[segment.segment_id] = segment.text

    paths = {
        "corpus": str(out / "corpus.jsonl"),
        "queries": str(out / "queries.jsonl"),
        "qrels": str(out / "qrels.txt"),
        "records": str(out / "records.jsonl"),
    }
    write_corpus(paths["corpus"], episodes)
    write_queries(paths["queries"], queries)
    write_qrels(paths["qrels"], judged)
    with open(paths["records"], "w", encoding="utf-8") as handle:
        for key in sorted(texts):
            handle.write(json.dumps({"key": key, "text": texts[key]}) + "\n")
    paths["texts"] = texts
    return paths


@pytest.fixture(scope="session")
def tiny_encoder(tmp_path_factory, sample_dataset):
    import torch
    from transformers import PreTrainedTokenizerFast, XLNetConfig, XLNetModel

    words = set(EXTRA_WORDS)
    pre = Whitespace()
    for text in sample_dataset["texts"].values():
        words.update(w for w, _ in pre.pre_tokenize_str(text))

    vocab = {"[UNK]": 0, "[SEP]": 1, "[CLS]": 2, "[PAD]": 3}
    for word in sorted(words):
        vocab[word] = len(vocab)
    tokenizer = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tokenizer.pre_tokenizer = Whitespace()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        unk_token="[UNK]", sep_token="[SEP]", cls_token="[CLS]", pad_token="[PAD]",
    )

    torch.manual_seed(0)
    config = XLNetConfig(
        vocab_size=len(vocab), d_model=16, n_layer=3, n_head=2, d_inner=32
    )
    model = XLNetModel(config)

    model_dir = tmp_path_factory.mktemp("encoder")
    fast.save_pretrained(str(model_dir))
    model.save_pretrained(str(model_dir))
    return str(model_dir)
