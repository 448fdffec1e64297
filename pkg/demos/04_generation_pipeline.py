"""From a noisy claim to a scored verdict.

Fact extraction rewrites a social-media claim into its core fact, retrieval
supplies context, the prompt template wraps it, and the verdict parser pulls
the reply out of the raw model text. Scripted mocks stand in for the LLMs.
"""

from factrag import (
    ClaimRecord,
    KbMode,
    SparseRetriever,
    Style,
    assemble_context,
    build_gold_kb,
    build_prompt,
    evaluate_generation,
    extract_fact,
    generate_verdict,
    load_toy_corpus,
)
from factrag.mocks import OverlapScorer, ScriptedGenerator
from factrag.pipeline import CONTEXT_SEPARATOR, Exemplar, PromptMode

corpus = load_toy_corpus()
base = corpus.claims[0]

noisy = ClaimRecord(
    id=f"{base.id}-emo",
    style=Style.EMOTIONAL,
    emotion="anger",
    text=f"I am absolutely livid!! {base.text} How do they get away with this?! #waste",
    article_id=base.article_id,
    gold_verdict=base.gold_verdict,
)
print(f"noisy claim: {noisy.text}\n")

# Fact extraction sends the one-shot rewriting prompt and parses FACT:...
extractor_model = ScriptedGenerator([f'FACT:"{base.text}"'])
extracted = extract_fact(noisy, extractor_model)
print(f"extracted fact (fallback={extracted.fallback}): {extracted.text}\n")

# Retrieve context with the cleaned query, then build the verdict prompt.
kb, qrels = build_gold_kb(corpus.articles, corpus.claims, KbMode.GOLD_ARTICLES)
retriever = SparseRetriever(kb, "bm25plus")
run = retriever.retrieve(extracted.text, 5, query_id=noisy.id)
contexts = assemble_context(run, kb)  # article mode: top-1 document
print(f"retrieved context (top-1 article {run.entries[0][0]}), {len(contexts)} block(s)")

prompt = build_prompt(noisy.text, contexts)
print(f"zero-shot prompt is {len(prompt.rendered)} chars; tail:\n...{prompt.rendered[-90:]}\n")

# One-shot prompting adds a worked exemplar between instruction and context.
exemplar = Exemplar(
    claim="The bridge was never inspected.",
    context="Inspection logs list 14 routine checks.",
    reply="Records show 14 routine inspections, so the claim is false.",
)
one_shot = build_prompt(noisy.text, contexts, PromptMode.ONE_SHOT, exemplar)
print(f"one-shot prompt grows to {len(one_shot.rendered)} chars\n")

# Generate and parse. The mock replies in the required Reply: format.
generator = ScriptedGenerator(
    ['Reply: [Audited accounts show an 11 million pound overrun, far below the figure claimed.]']
)
verdict = generate_verdict(prompt, generator, claim_id=noisy.id, kb_mode=kb.mode.value)
print(f"parsed verdict (fallback={verdict.parse_fallback}): {verdict.text}\n")

# Score adherence to context and similarity to the gold verdict.
report = evaluate_generation(
    [verdict.text],
    [CONTEXT_SEPARATOR.join(contexts)],
    [noisy.gold_verdict],
    scorer=OverlapScorer(),
)
print(
    f"rouge_lsum_f={report.rouge_lsum_f:.3f}  "
    f"faithfulness={report.faithfulness:.3f}  "
    f"consistency={report.consistency:.3f}  "
    f"gold_similarity={report.gold_similarity:.3f}"
)
