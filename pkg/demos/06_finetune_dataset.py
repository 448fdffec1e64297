"""Building the fine-tuning dataset: reranked positives plus BM25 negatives.

For each claim, the gold article's chunks are ranked against the gold
verdict by a cross-encoder (positives), BM25 retrieves hard negatives with
the gold verdict as query, and the blocks are shuffled with a seeded RNG
into {prompt, completion, metadata} training rows.
"""

import json
import tempfile
from pathlib import Path

from factrag import (
    ChunkingConfig,
    KbMode,
    SparseRetriever,
    build_finetune_dataset,
    build_gold_kb,
    load_toy_corpus,
)
from factrag.mocks import SubstringReranker
from factrag.pipeline import BlockLabel, sample_training_claims, save_finetune_dataset

corpus = load_toy_corpus()
kb, _ = build_gold_kb(
    corpus.articles, corpus.claims, KbMode.GOLD_CHUNKS, ChunkingConfig(max_chunk_tokens=40)
)
print(f"chunk KB: {len(kb.documents)} documents\n")

# Subsample per style the way a real training set is drawn (seeded).
train_claims = sample_training_claims(corpus.claims, seed=0, n_neutral=6)
print(f"sampled {len(train_claims)} training claims")

examples = build_finetune_dataset(
    train_claims,
    corpus.articles,
    kb,
    reranker=SubstringReranker(),
    sparse=SparseRetriever(kb, "bm25"),
    n_negatives=3,
    seed=0,
)

example = examples[0]
positives = sum(1 for _, label in example.context_blocks if label is BlockLabel.POSITIVE)
negatives = len(example.context_blocks) - positives
print(f"\nclaim {example.claim_id}: {positives} positive + {negatives} negative context blocks")
for text, label in example.context_blocks[:4]:
    print(f"  [{label.value:<8}] {text[:64]}...")

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "finetune.jsonl"
    save_finetune_dataset(examples, out, seed=0)
    row = json.loads(out.read_text().splitlines()[0])
    print(f"\nfirst JSONL row keys: {sorted(row)}")
    print(f"completion: {row['completion'][:70]}...")
    print(f"block labels in prompt order: {row['metadata']['labels']}")
