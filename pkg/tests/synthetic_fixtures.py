"""Shared synthetic fixtures for training and evaluation tests.

The separable corpus has four disjoint vocabulary clusters. Chunk texts
draw only from their cluster's document vocabulary; queries draw only
from the cluster's *query* vocabulary, which never appears in any chunk.
An untrained encoder therefore ranks by noise, while a trained one must
have learned to associate query words with their cluster's document
words. Every chunk of a query's cluster counts as relevant.
"""

from __future__ import annotations

import numpy as np

from policyrag.contrastive import LabeledQuery
from policyrag.corpus import Corpus, corpus_from_records
from policyrag.encoder import EncoderParams
from policyrag.evalsuite import Qrels, RetrievalRun, mrr
from policyrag.retriever import build_index, search

CLUSTERS = ("alpha", "bravo", "charlie", "delta")
CHUNKS_PER_CLUSTER = 10
QUERY_WORDS_PER_CLUSTER = 6
DOC_WORDS_PER_CLUSTER = 8


def make_separable_fixture(
    seed: int = 1234,
    positives_per_query: int = 7,
    labeled_negatives_per_query: int = 3,
    queries_per_cluster: int = 5,
):
    """Returns (corpus, labeled_queries, heldout [(query, cluster)], qrels)."""
    rng = np.random.default_rng(seed)
    query_vocab = {c: [f"q{c}{i}" for i in range(QUERY_WORDS_PER_CLUSTER)] for c in CLUSTERS}
    doc_vocab = {c: [f"d{c}{i}" for i in range(DOC_WORDS_PER_CLUSTER)] for c in CLUSTERS}

    records = []
    for ci, cluster in enumerate(CLUSTERS):
        for j in range(CHUNKS_PER_CLUSTER):
            words = list(rng.choice(doc_vocab[cluster], size=6, replace=False))
            records.append(
                {
                    "chunk_id": f"segment_{ci}_{j}",
                    "doc_id": f"doc_{ci}",
                    "segment_index": j,
                    "text": " ".join(words),
                    "document_name": "Synthetic Policy",
                    "authority": "Synthetic Authority",
                    "doc_type": "law",
                    "dates": [],
                }
            )
    corpus = corpus_from_records(records)
    cluster_chunks = {
        cluster: [f"segment_{ci}_{j}" for j in range(CHUNKS_PER_CLUSTER)]
        for ci, cluster in enumerate(CLUSTERS)
    }

    def sample_queries() -> list[tuple[str, str]]:
        out = []
        for cluster in CLUSTERS:
            for _ in range(queries_per_cluster):
                words = list(rng.choice(query_vocab[cluster], size=3, replace=False))
                out.append((" ".join(words), cluster))
        return out

    train_queries = sample_queries()
    heldout_queries = sample_queries()

    labeled = []
    for query, cluster in train_queries:
        positives = list(rng.choice(cluster_chunks[cluster], size=positives_per_query, replace=False))
        others = [cid for c, ids in cluster_chunks.items() if c != cluster for cid in ids]
        negatives = list(rng.choice(others, size=labeled_negatives_per_query, replace=False))
        labeled.append(LabeledQuery(query=query, positives=tuple(positives), negatives=tuple(negatives)))

    qrels = Qrels(
        relevant={
            f"h{i}": frozenset(cluster_chunks[cluster])
            for i, (_, cluster) in enumerate(heldout_queries)
        }
    )
    return corpus, labeled, heldout_queries, qrels


def heldout_mrr(
    corpus: Corpus,
    params: EncoderParams,
    heldout: list[tuple[str, str]],
    qrels: Qrels,
) -> float:
    index = build_index(corpus, params)
    run = RetrievalRun(
        rankings={
            f"h{i}": tuple(search(index, query, k=len(corpus.chunks)).chunk_ids())
            for i, (query, _) in enumerate(heldout)
        }
    )
    return mrr(run, qrels)
