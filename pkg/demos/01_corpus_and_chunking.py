"""Corpus loading, sentence splitting, and sentence-aware chunking.

Walks the bundled toy corpus through the text layer: claims and articles,
rule-based sentence boundaries, and greedy packing into 100-token chunks
that never split a sentence.
"""

from factrag import ChunkingConfig, chunk_document, load_toy_corpus, split_sentences

corpus = load_toy_corpus()
print(f"toy corpus: {len(corpus.claims)} claims, {len(corpus.articles)} articles\n")

claim = corpus.claims[0]
article = corpus.articles_by_id[claim.article_id]
print(f"claim {claim.id} ({claim.style.value}): {claim.text}")
print(f"gold verdict: {claim.gold_verdict}\n")

# Sentence splitting keeps abbreviations like "Dr." and "e.g." intact.
sentences = split_sentences(article.text)
print(f"article {article.id} has {len(sentences)} sentences:")
for sentence in sentences[:4]:
    print(f"  [{sentence.token_count:>3} tokens] {sentence.text}")
print("  ...\n")

# Greedy packing: whole sentences only, 100 whitespace tokens per chunk.
for budget in (100, 40):
    chunks = chunk_document(article, ChunkingConfig(max_chunk_tokens=budget))
    sizes = [c.token_count for c in chunks]
    print(f"max_chunk_tokens={budget}: {len(chunks)} chunks with sizes {sizes}")

# A single oversized sentence becomes its own flagged chunk instead of
# being split mid-sentence.
from factrag import ArticleRecord

monster = ArticleRecord(id="x", title="", text=" ".join(f"w{i}" for i in range(150)) + ".")
chunk = chunk_document(monster, ChunkingConfig(max_chunk_tokens=100))[0]
print(f"\noversized sentence: {chunk.token_count} tokens, oversized={chunk.oversized}")
