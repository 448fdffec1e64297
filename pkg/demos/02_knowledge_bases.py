"""Building the three knowledge-base configurations.

Gold KBs index the fact-checking articles (whole or chunked). The silver KB
drops the gold articles and indexes the external evidence they cite, after
filtering social-network links and claim sources. A fixture fetcher stands
in for the web so the demo runs offline.
"""

from factrag import (
    ChunkingConfig,
    KbMode,
    build_gold_kb,
    build_silver_kb,
    extract_evidence_urls,
    fetch_evidence,
    load_kb,
    load_toy_corpus,
    save_kb,
)

corpus = load_toy_corpus()

for mode in (KbMode.GOLD_ARTICLES, KbMode.GOLD_CHUNKS):
    kb, qrels = build_gold_kb(corpus.articles, corpus.claims, mode, ChunkingConfig(max_chunk_tokens=60))
    relevant = len(qrels[corpus.claims[0].id])
    print(
        f"{mode.value}: {kb.stats.document_count} documents, "
        f"avg {kb.stats.avg_words_per_source_doc:.0f} words/article, "
        f"{relevant} relevant doc(s) for claim {corpus.claims[0].id}"
    )

# The evidence filter drops social platforms, claim sources, and duplicates.
article = corpus.articles[0]
print(f"\n{article.id} evidence urls: {list(article.evidence_urls)}")
print(f"claim sources:           {list(article.claim_source_urls)}")
print(f"kept after filtering:    {extract_evidence_urls(article)}")

# Fetch the surviving urls with a canned fetcher and extract main text.
FIXTURE_PAGE = """
<html><body>
<nav><a href='/'>Home</a> <a href='/about'>About</a> <a href='/data'>Data</a></nav>
<p>The audited figures were published in full last quarter. They show a smaller
overrun than the leaflet claimed.</p>
<p>Independent analysts reproduced the numbers from the public ledger. The
difference traces to an unapproved second phase.</p>
<footer><a href='/terms'>Terms</a></footer>
</body></html>
"""

pairs = [(article.id, url) for url in extract_evidence_urls(article)]
records, failures = fetch_evidence(pairs, fetcher=lambda url: FIXTURE_PAGE)
print(f"\nfetched {len(records)} evidence pages ({len(failures)} failures)")
print(f"first record text starts: {records[0].text[:60]}...")

silver_kb, silver_qrels = build_silver_kb(records, corpus.claims, ChunkingConfig(max_chunk_tokens=100))
print(
    f"silver kb: {silver_kb.stats.document_count} chunks from {len(records)} evidence docs, "
    f"avg {silver_kb.stats.avg_evidence_per_article:.1f} evidence docs per article"
)

# KBs persist as a manifest + documents file and load back verified.
import tempfile

with tempfile.TemporaryDirectory() as tmp:
    save_kb(silver_kb, tmp)
    reloaded = load_kb(tmp)
    print(f"round trip ok: {reloaded.documents == silver_kb.documents}")
