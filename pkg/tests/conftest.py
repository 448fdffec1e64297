import random

import pytest

import factrag as fr

_acceptance_results = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, description): marks a test as one acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker:
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _acceptance_results.append((marker.args[0], marker.args[1], status))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, description, status in sorted(_acceptance_results):
        terminalreporter.write_line(f"[{status}] criterion {num}: {description}")


@pytest.fixture(scope="session")
def toy_corpus() -> fr.Corpus:
    return fr.load_toy_corpus()


@pytest.fixture(scope="session")
def toy_article_kb(toy_corpus):
    return fr.build_gold_kb(toy_corpus.articles, toy_corpus.claims, fr.KbMode.GOLD_ARTICLES)


@pytest.fixture(scope="session")
def toy_chunk_kb(toy_corpus):
    return fr.build_gold_kb(
        toy_corpus.articles, toy_corpus.claims, fr.KbMode.GOLD_CHUNKS, fr.ChunkingConfig(max_chunk_tokens=60)
    )


def random_sentence(rng: random.Random, n_tokens: int) -> str:
    words = [f"tok{rng.randint(0, 400)}" for _ in range(n_tokens)]
    return (" ".join(words)).capitalize() + "."


def random_article_text(rng: random.Random, n_sentences: int | None = None, long_tail: bool = True) -> str:
    n = n_sentences if n_sentences is not None else rng.randint(1, 25)
    sentences = []
    for _ in range(n):
        if long_tail and rng.random() < 0.04:
            size = rng.randint(101, 180)  # oversized on purpose
        else:
            size = rng.randint(1, 60)
        sentences.append(random_sentence(rng, size))
    return " ".join(sentences)
