import re
from pathlib import Path

import pytest

import factrag.providers as providers
from factrag.errors import InvalidScore, ProviderError, UnsupportedKind
from factrag.mocks import (
    EchoGenerator,
    HashingEmbedder,
    IdentityEmbedder,
    OverlapScorer,
    ScriptedGenerator,
    SubstringReranker,
)
from factrag.providers import (
    GenerationRequest,
    ProviderConfig,
    ScoreKind,
    embed_batch,
    generate,
    rerank_batch,
    score_pairs,
)

CFG = ProviderConfig(endpoint_url="http://fake", model_name="m", batch_size=2, max_retries=1)


class FakeTransport:
    """Records calls and replays scripted (status, body) responses."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def __call__(self, url, payload, headers, timeout_s):
        self.calls.append((url, payload))
        if not self.responses:
            raise AssertionError("unexpected extra call")
        response = self.responses.pop(0)
        if isinstance(response, Exception):
            raise response
        return response


def embedding_body(texts, dim=3):
    return {"data": [{"index": i, "embedding": [float(i + 1)] * dim} for i, _ in enumerate(texts)]}


class TestConfigValidation:
    def test_bad_timeout(self):
        with pytest.raises(ValueError):
            ProviderConfig(endpoint_url="x", model_name="m", timeout_ms=0)

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            ProviderConfig(endpoint_url="x", model_name="m", batch_size=0)

    def test_request_validation(self):
        with pytest.raises(ValueError):
            GenerationRequest(user_text="x", max_new_tokens=0)
        with pytest.raises(ValueError):
            GenerationRequest(user_text="x", temperature=-1)


class TestEmbedBatch:
    def test_batching_and_order(self):
        transport = FakeTransport(
            [
                (200, {"data": [{"embedding": [1.0, 0.0]}, {"embedding": [2.0, 0.0]}]}),
                (200, {"data": [{"embedding": [3.0, 0.0]}]}),
            ]
        )
        vectors = embed_batch(CFG, ["a", "b", "c"], transport=transport)
        assert len(transport.calls) == 2
        assert transport.calls[0][1]["input"] == ["a", "b"]
        assert [v[0] for v in vectors] == [1.0, 2.0, 3.0]

    def test_retry_then_success(self, monkeypatch):
        monkeypatch.setattr(providers, "_sleep", lambda s: None)
        transport = FakeTransport(
            [(500, "boom"), (200, {"data": [{"embedding": [1.0]}]})]
        )
        vectors = embed_batch(CFG, ["a"], transport=transport)
        assert vectors == [[1.0]]
        assert len(transport.calls) == 2

    def test_provider_error_after_retries(self, monkeypatch):
        monkeypatch.setattr(providers, "_sleep", lambda s: None)
        transport = FakeTransport([(503, "down"), (503, "down")])
        with pytest.raises(ProviderError):
            embed_batch(CFG, ["a"], transport=transport)
        assert len(transport.calls) == CFG.max_retries + 1

    def test_no_retry_on_client_error(self, monkeypatch):
        monkeypatch.setattr(providers, "_sleep", lambda s: None)
        transport = FakeTransport([(401, "denied")])
        with pytest.raises(ProviderError):
            embed_batch(CFG, ["a"], transport=transport)
        assert len(transport.calls) == 1

    def test_empty_texts_rejected(self):
        with pytest.raises(ValueError):
            embed_batch(CFG, [])


class TestGenerate:
    def test_http_generation_parses_content(self):
        transport = FakeTransport(
            [(200, {"choices": [{"message": {"content": "hi"}, "finish_reason": "stop"}]})]
        )
        result = generate(CFG, GenerationRequest(user_text="say hi", seed=7), transport=transport)
        assert result.text == "hi" and not result.truncated
        payload = transport.calls[0][1]
        assert payload["messages"][-1] == {"role": "user", "content": "say hi"}
        assert payload["seed"] == 7

    def test_truncation_flag_from_finish_reason(self):
        transport = FakeTransport(
            [(200, {"choices": [{"message": {"content": "partial"}, "finish_reason": "length"}]})]
        )
        result = generate(CFG, GenerationRequest(user_text="x"), transport=transport)
        assert result.truncated


class TestRerankAndScore:
    def test_rerank_batching_call_count(self):
        cfg = ProviderConfig(endpoint_url="http://fake", model_name="m", batch_size=32)
        docs = [f"doc {i}" for i in range(100)]
        responses = []
        for start in range(0, 100, 32):
            size = min(32, 100 - start)
            responses.append(
                (200, {"results": [{"index": i, "relevance_score": float(start + i)} for i in range(size)]})
            )
        transport = FakeTransport(responses)
        scores = rerank_batch(cfg, "q", docs, transport=transport)
        assert len(transport.calls) == 4
        assert scores == [float(i) for i in range(100)]

    def test_single_doc(self):
        transport = FakeTransport([(200, {"results": [{"index": 0, "relevance_score": 0.5}]})])
        assert rerank_batch(CFG, "q", ["only"], transport=transport) == [0.5]

    def test_consistency_range_validated(self):
        transport = FakeTransport([(200, {"scores": [1.5]})])
        with pytest.raises(InvalidScore):
            score_pairs(CFG, ScoreKind.CONSISTENCY, [("a", "b")], transport=transport)

    def test_unsupported_kind(self):
        transport = FakeTransport([(400, "kind unsupported by this backend")])
        with pytest.raises(UnsupportedKind):
            score_pairs(CFG, ScoreKind.FAITHFULNESS, [("a", "b")], transport=transport)


class TestMocks:
    def test_hashing_embedder_deterministic(self):
        embedder = HashingEmbedder()
        first, second = embedder.embed(["same text", "same text"])
        assert first == second
        assert embedder.embed(["same text"])[0] == first

    def test_identity_embedder_basis(self):
        embedder = IdentityEmbedder(keys=["aaa", "bbb"])
        va, vb = embedder.embed(["aaa", "prefix bbb suffix"])
        assert va == [1.0, 0.0] and vb == [0.0, 1.0]

    def test_echo_generator_contract(self):
        result = EchoGenerator().generate(GenerationRequest(user_text="claim about vaccines and more"))
        assert result.text == 'Reply: "ECHO:claim about vaccines"'
        assert not result.truncated

    def test_echo_generator_truncates(self):
        result = EchoGenerator().generate(GenerationRequest(user_text="xyz", max_new_tokens=1))
        assert result.truncated
        assert result.text == "Reply:"

    def test_echo_pure(self):
        request = GenerationRequest(user_text="abc", temperature=0.0, seed=1)
        assert EchoGenerator().generate(request) == EchoGenerator().generate(request)

    def test_scripted_generator_sequence(self):
        generator = ScriptedGenerator(["one", "two"])
        request = GenerationRequest(user_text="x")
        outs = [generator.generate(request).text for _ in range(3)]
        assert outs == ["one", "two", "two"]

    def test_substring_reranker_rule(self):
        scores = SubstringReranker().rerank("53 people", ["53 people died in town", "unrelated"])
        assert scores[0] > scores[1]
        assert scores[0] == 1.0

    def test_overlap_scorer_bounds(self):
        scorer = OverlapScorer()
        assert scorer.score_pairs(ScoreKind.SIMILARITY, [("a b c", "a b c")]) == [1.0]
        assert scorer.score_pairs(ScoreKind.CONSISTENCY, [("a b", "x y")]) == [0.0]

    def test_mock_purity(self):
        embedder = HashingEmbedder()
        assert embedder.embed(["x", "y"]) == embedder.embed(["x", "y"])
        reranker = SubstringReranker()
        assert reranker.rerank("q", ["a", "b"]) == reranker.rerank("q", ["a", "b"])
        scorer = OverlapScorer()
        pair = [("alpha beta", "beta gamma")]
        assert scorer.score_pairs(ScoreKind.SIMILARITY, pair) == scorer.score_pairs(
            ScoreKind.SIMILARITY, pair
        )


def test_inflight_semaphore_resize():
    original = providers._inflight
    try:
        providers.set_max_inflight(2)
        assert providers._inflight is not original
        with pytest.raises(ValueError):
            providers.set_max_inflight(0)
    finally:
        providers._inflight = original


def test_only_providers_module_talks_to_the_network():
    src = Path(__file__).resolve().parents[1] / "src" / "factrag"
    network_imports = re.compile(
        r"^\s*(import requests|from requests|import socket|import urllib\.request|import http\.client)",
        re.MULTILINE,
    )
    offenders = []
    for path in sorted(src.rglob("*.py")):
        if path.name == "providers.py":
            continue
        if network_imports.search(path.read_text(encoding="utf-8")):
            offenders.append(path.name)
    assert offenders == []
