"""Acceptance gate: one test per shipped guarantee, with pinned tolerances.

Each test prints a single PASS line (with its runtime) on success; under
`pytest -v` the per-criterion verdict is also visible as the test outcome.
Runtime budgets are asserted, not just documented.
"""

import filecmp
import itertools
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from oracles import (
    oracle_bm25_scores,
    oracle_kernel_head,
    oracle_ndcg,
    oracle_rm3_expand,
    random_token_docs,
)
from podrank.cli import main
from podrank.embedding import hash_embed, read_embedding_file, write_embedding_file
from podrank.errors import ExpansionError
from podrank.fusion import FusionParams, fuse
from podrank.index import (
    Bm25Params,
    CollectionStats,
    build_index,
    idf,
    load_index,
    save_index,
    search,
    weighted,
)
from podrank.prf import Rm3Params, expand_query, query_lm, rm1, rm3_interpolate
from podrank.rerank import (
    LOSS_CROSS_ENTROPY,
    LOSS_HINGE,
    KernelBank,
    LabeledPair,
    RegressionHead,
    ScoringHead,
    TrainConfig,
    TrainingExample,
    _get_params,
    _pre_sigmoid,
    default_kernel_bank,
    grad_check,
    head_score,
    kernel_pool,
    prepare_example,
    sigmoid,
    train_head,
    training_accuracy,
)
from podrank.trec_eval import (
    METRICS,
    Qrels,
    RankedList,
    RunFile,
    evaluate,
    ndcg_at_k,
    read_run,
    write_run,
)


@contextmanager
def _criterion(name: str, budget_s: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"FAIL {name}")
        raise
    elapsed = time.perf_counter() - start
    print(f"PASS {name} ({elapsed:.2f}s, budget {budget_s:g}s)")
    assert elapsed < budget_s, f"{name}: {elapsed:.2f}s exceeded the {budget_s:g}s budget"


VOCAB = [f"term{i}" for i in range(18)]


def test_criterion_1_bm25_oracle_equivalence():
    with _criterion("bm25-oracle-equivalence", budget_s=1.0):
        # spot value: 100 docs, term in 10 of them
        stats = CollectionStats(n_docs=100, avgdl=10.0, total_tokens=1000,
                                df={"x": 10}, cf={"x": 10})
        assert idf("x", stats) == pytest.approx(2.263745, abs=1e-6)

        rng = np.random.default_rng(1001)
        params = Bm25Params()
        for _ in range(10):
            n_docs = int(rng.integers(20, 101))
            token_docs = random_token_docs(rng, n_docs, VOCAB, min_len=3, max_len=30)
            index = build_index(
                (doc_id, " ".join(toks)) for doc_id, toks in token_docs.items()
            )
            query = [VOCAB[int(i)] for i in rng.integers(0, len(VOCAB), size=3)]
            got = search(index, weighted(query), n_docs, params)

            want_scores = {
                d: s for d, s in oracle_bm25_scores(token_docs, query).items() if s > 0.0
            }
            want_order = sorted(want_scores.items(), key=lambda kv: (-kv[1], kv[0]))
            assert got.doc_ids() == [d for d, _ in want_order]
            for (_, got_s), (_, want_s) in zip(got, want_order):
                assert got_s == pytest.approx(want_s, rel=1e-9)


def test_criterion_2_rm3_suite():
    with _criterion("rm3-expansion-suite", budget_s=1.0):
        rng = np.random.default_rng(1002)

        # every expansion distribution sums to 1 +- 1e-9
        for _ in range(10):
            token_docs = random_token_docs(rng, 12, VOCAB)
            index = build_index(
                (doc_id, " ".join(toks)) for doc_id, toks in token_docs.items()
            )
            query = [VOCAB[int(i)] for i in rng.integers(0, len(VOCAB), size=2)]
            try:
                expanded = expand_query(index, query, Rm3Params(fb_docs=5, fb_terms=8))
            except ExpansionError:
                continue
            assert sum(w for _, w in expanded.terms) == pytest.approx(1.0, abs=1e-9)

        # interpolation endpoints are exact
        index = build_index([("d1", "a a b"), ("d2", "a c"), ("d3", "b c c")])
        q_model = query_lm(["a", "b"])
        relevance = rm1(["a", "b"], index, Rm3Params(fb_docs=3, dirichlet_mu=10.0))
        at_zero = rm3_interpolate(q_model, relevance, 0.0)
        for term, p in q_model.probs.items():
            assert at_zero.probs[term] == p
        at_one = rm3_interpolate(q_model, relevance, 1.0)
        for term, p in relevance.probs.items():
            assert at_one.probs[term] == p

        # 4-doc end-to-end expansion against the brute-force oracle
        checked = 0
        while checked < 10:
            token_docs = random_token_docs(rng, 4, VOCAB[:8], min_len=3, max_len=10)
            index = build_index(
                (doc_id, " ".join(toks)) for doc_id, toks in token_docs.items()
            )
            query = [VOCAB[int(i)] for i in rng.integers(0, 8, size=2)]
            params = Rm3Params(fb_docs=3, fb_terms=4, rm3_alpha=0.6, dirichlet_mu=20.0)
            try:
                got = expand_query(index, query, params).terms
            except ExpansionError:
                continue
            want = oracle_rm3_expand(
                token_docs, query, params.fb_docs, params.fb_terms,
                params.rm3_alpha, params.dirichlet_mu,
            )
            assert [t for t, _ in got] == [t for t, _ in want]
            for (_, got_w), (_, want_w) in zip(got, want):
                assert got_w == pytest.approx(want_w, rel=1e-9)
            checked += 1


def test_criterion_3_kernel_head_oracle():
    with _criterion("kernel-head-oracle", budget_s=1.0):
        # single-point checks
        bank = KernelBank(mus=(0.9,), sigmas=(0.1,))
        K = kernel_pool(np.array([[0.8]]), bank)
        assert K[0, 0] == pytest.approx(0.606531, abs=1e-6)
        assert sigmoid(0.0) == 0.5

        rng = np.random.default_rng(1003)
        for _ in range(100):
            n_kernels = int(rng.integers(2, 13))
            mus = tuple(rng.uniform(-1.0, 1.0, size=n_kernels))
            sigmas = tuple(rng.uniform(0.05, 0.5, size=n_kernels))
            bank = KernelBank(mus=mus, sigmas=sigmas)
            head = ScoringHead(
                w1=rng.normal(size=n_kernels),
                w2=rng.normal(size=n_kernels),
                head_alpha=float(rng.uniform(0.1, 1.5)),
                head_beta=float(rng.uniform(0.1, 1.5)),
            )
            n_q, n_d = int(rng.integers(1, 6)), int(rng.integers(1, 9))
            M = rng.uniform(-1.0, 1.0, size=(n_q, n_d))
            got, _ = head_score(kernel_pool(M, bank), n_d, head)
            want = oracle_kernel_head(
                M.tolist(), mus, sigmas, head.w1, head.w2,
                head.head_alpha, head.head_beta, head.log_base, head.epsilon, n_d,
            )
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_criterion_4_gradient_check():
    with _criterion("gradient-check", budget_s=10.0):
        rng = np.random.default_rng(1004)
        losses = (LOSS_CROSS_ENTROPY, LOSS_HINGE)

        def smooth(head, ex):
            # finite differences are only valid away from the loss kinks:
            # the CE probability clamp and the hinge corner at margin 1
            s = _pre_sigmoid(head, ex)
            if ex.loss == LOSS_CROSS_ENTROPY:
                return abs(s) < 25.0
            return abs((2 * ex.label - 1) * s - 1.0) > 1e-3

        checked = 0
        while checked < 50:  # similarity head draws
            k = int(rng.integers(3, 13))
            head = ScoringHead(
                w1=0.3 * rng.normal(size=k),
                w2=0.3 * rng.normal(size=k),
                head_alpha=float(rng.uniform(0.1, 1.5)),
                head_beta=float(rng.uniform(0.1, 1.5)),
            )
            ex = TrainingExample(
                label=int(rng.integers(0, 2)),
                loss=losses[checked % 2],
                phi_log=rng.normal(scale=2.0, size=k),
                phi_len=rng.normal(scale=2.0, size=k),
            )
            if not smooth(head, ex):
                continue
            assert grad_check(head, ex, h=1e-5) < 1e-4
            checked += 1

        checked = 0
        while checked < 50:  # regression head draws
            dim = int(rng.integers(4, 33))
            head = RegressionHead(weights=rng.normal(size=dim), bias=float(rng.normal()))
            ex = TrainingExample(
                label=int(rng.integers(0, 2)),
                loss=losses[checked % 2],
                pooled=rng.normal(scale=1.0, size=dim),
            )
            if not smooth(head, ex):
                continue
            assert grad_check(head, ex, h=1e-5) < 1e-4
            checked += 1


def _separable_pairs(n_per_class):
    pairs = []
    for i in range(n_per_class):
        pairs.append(LabeledPair(
            label=1,
            query_tokens=["topic", "words"],
            doc_tokens=["topic", "words", f"extra{i}"],
        ))
        pairs.append(LabeledPair(
            label=0,
            query_tokens=["topic", "words"],
            doc_tokens=[f"noise{i}", f"junk{i}"],
        ))
    return pairs


def test_criterion_5_head_training():
    with _criterion("head-training", budget_s=30.0):
        pairs = _separable_pairs(100)  # 200 pairs
        assert len(pairs) == 200
        embed = lambda tokens: hash_embed(tokens, 16, 2, 0)  # noqa: E731
        cfg = TrainConfig(
            loss=LOSS_CROSS_ENTROPY, learning_rate=0.05, weight_decay=0.0,
            max_epochs=25, patience=25, seed=42, batch_size=25,
        )
        result = train_head(pairs, ScoringHead.zeros(11), cfg, embed)
        assert result.steps <= 200

        bank = default_kernel_bank()
        examples = [prepare_example(p, result.head, cfg.loss, embed, bank) for p in pairs]
        assert training_accuracy(result.head, examples) >= 0.95

        rerun = train_head(pairs, ScoringHead.zeros(11), cfg, embed)
        np.testing.assert_array_equal(_get_params(result.head), _get_params(rerun.head))


def test_criterion_6_fusion_properties():
    with _criterion("fusion-properties", budget_s=1.0):
        assert fuse(0.8, 0.0, FusionParams(alpha=1.0)) == 0.4

        rng = np.random.default_rng(1006)
        identity = FusionParams(alpha=0.0)
        for _ in range(50):
            neural = float(rng.uniform(0.0, 1.0))
            lexical = float(rng.uniform(0.0, 20.0))
            assert fuse(neural, lexical, identity) == neural

        for alpha in (0.2, 1.0, 3.0):
            params = FusionParams(alpha=alpha)
            # range [0, 1] over the pipeline's score domain
            for _ in range(200):
                fused = fuse(float(rng.uniform(0, 1)), float(rng.uniform(0, 30)), params)
                assert 0.0 <= fused <= 1.0
            # monotone in the neural score
            grid = [fuse(s, 2.0, params) for s in np.linspace(0.0, 1.0, 9)]
            assert all(a < b for a, b in zip(grid, grid[1:]))
            # monotone in the lexical score
            grid = [fuse(0.5, lx, params) for lx in np.linspace(0.0, 10.0, 9)]
            assert all(a < b for a, b in zip(grid, grid[1:]))


def test_criterion_7_metrics():
    with _criterion("ranking-metrics", budget_s=5.0):
        rels = {"a": 1, "b": 0, "c": 2}
        assert ndcg_at_k(["a", "b", "c"], rels, 3) == pytest.approx(0.688528, abs=1e-6)

        # every permutation of a 6-doc list matches the definitional oracle
        perm_rels = {"a": 2, "b": 1, "c": 0, "d": 3, "e": 0, "f": 1}
        for k in (1, 2, 4, 6):
            for perm in itertools.permutations(sorted(perm_rels)):
                got = ndcg_at_k(list(perm), perm_rels, k)
                want = oracle_ndcg(
                    [perm_rels[d] for d in perm], list(perm_rels.values()), k
                )
                assert got == pytest.approx(want, rel=1e-12)

        # the ideal ranking earns 1.0 in every nDCG column
        ideal_docs = {"a": 3.0, "b": 2.0, "c": 1.0}
        run = RunFile.from_ranked(
            [("q1", RankedList.from_scores(ideal_docs))], tag="ideal"
        )
        qrels = Qrels({("q1", "a"): 3, ("q1", "b"): 1, ("q1", "c"): 0})
        report = evaluate(run, qrels)
        for metric in METRICS:
            if metric.startswith("nDCG"):
                assert report.per_query["q1"][metric] == pytest.approx(1.0, rel=1e-12)


def _pipeline_flags(dataset, out_dir):
    return [
        "--corpus", str(dataset["corpus"]),
        "--queries", str(dataset["queries"]),
        "--qrels", str(dataset["qrels"]),
        "--out-dir", str(out_dir),
        "--seed", "42",
        "--dim", "16",
    ]


PIPELINE_FILES = (
    "index.pidx", "episodes.run", "segments.jsonl",
    "neural.run", "final.run", "metrics.txt",
)


def test_criterion_8_determinism_and_formats(toy_dataset, tmp_path, capsys):
    with _criterion("determinism-and-formats", budget_s=60.0):
        run_a, run_b, staged = tmp_path / "a", tmp_path / "b", tmp_path / "staged"

        # byte-identical run files across two invocations
        assert main(["pipeline", *_pipeline_flags(toy_dataset, run_a)]) == 0
        assert main(["pipeline", *_pipeline_flags(toy_dataset, run_b)]) == 0
        for name in PIPELINE_FILES:
            assert filecmp.cmp(run_a / name, run_b / name, shallow=False), name

        # staged subcommands reproduce the pipeline byte for byte
        for cmd in ("index", "search", "segment", "rerank", "fuse", "evaluate"):
            assert main([cmd, *_pipeline_flags(toy_dataset, staged)]) == 0
        for name in PIPELINE_FILES:
            assert filecmp.cmp(staged / name, run_a / name, shallow=False), name

        # index round-trips bit-exactly
        index = load_index(run_a / "index.pidx")
        save_index(index, tmp_path / "rt.pidx")
        assert (tmp_path / "rt.pidx").read_bytes() == (run_a / "index.pidx").read_bytes()

        # embedding files round-trip bit-exactly
        assert main(["embed", *_pipeline_flags(toy_dataset, staged)]) == 0
        emb_path = staged / "embeddings.emb"
        loaded = read_embedding_file(emb_path)
        write_embedding_file(tmp_path / "rt.emb", loaded.records)
        assert (tmp_path / "rt.emb").read_bytes() == emb_path.read_bytes()

        # run files round-trip bit-exactly
        final = read_run(run_a / "final.run")
        write_run(tmp_path / "rt.run", final)
        assert (tmp_path / "rt.run").read_bytes() == (run_a / "final.run").read_bytes()
