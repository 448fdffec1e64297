"""Bundled 12-claim / 12-article fictional corpus for tests, demos, and smoke runs.

Every article opens by quoting its claim verbatim, so an IdentityEmbedder
keyed on the claim texts retrieves each gold article exactly.
"""

from __future__ import annotations

from importlib import resources

from .corpus import ArticleRecord, ClaimRecord, Corpus, link_corpus, load_articles, load_claims


def _data_path(name: str):
    return resources.files("factrag").joinpath("data").joinpath("toy").joinpath(name)


def load_toy_claims() -> list[ClaimRecord]:
    with resources.as_file(_data_path("claims.jsonl")) as path:
        return load_claims(path)


def load_toy_articles() -> list[ArticleRecord]:
    with resources.as_file(_data_path("articles.jsonl")) as path:
        return load_articles(path)


def load_toy_corpus() -> Corpus:
    return link_corpus(load_toy_claims(), load_toy_articles())
