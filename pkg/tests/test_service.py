import json

import pytest
from fastapi.testclient import TestClient

from phraseqa.config import load_settings
from phraseqa.entity import EntityDictionary
from phraseqa.service import (
    Engine,
    QueryError,
    build_engine,
    create_app,
    load_engine,
    save_engine,
)

SMALL = dict(dense_dim=64, num_centroids=4, kmeans_iters=8, seed=3)


def small_dictionary():
    d = EntityDictionary()
    d.add("D006331", "heart disease", "disease", ["cardiac disease"])
    d.add("D011153", "masks", "drug", [])
    return d


@pytest.fixture(scope="module")
def engine(tiny_corpus):
    settings = load_settings(**SMALL)
    return build_engine(tiny_corpus, settings, dictionary=small_dictionary())


class TestAsk:
    def test_response_shape(self, engine):
        resp = engine.ask("how does the virus spread", k=3)
        assert resp.query == "how does the virus spread"
        assert len(resp.phrase_results) <= 3
        assert resp.index_version == engine.index.index_version
        for key in ("encode", "dense_search", "rerank_assemble", "entity_search", "total"):
            assert resp.timing_ms[key] >= 0.0

    def test_answer_span_round_trip(self, engine):
        resp = engine.ask("respiratory droplets", k=5)
        assert resp.phrase_results
        for ans in resp.phrase_results:
            b, e = ans.answer_span
            assert ans.sentence_text[b:e] == ans.phrase_text

    def test_planted_sentence_found(self, engine):
        resp = engine.ask("how long does vaccine development take", k=5)
        sents = [a.sentence_text for a in resp.phrase_results]
        assert any("12-18 months" in s for s in sents)

    def test_entity_results_on_match(self, engine):
        resp = engine.ask("heart disease risk", k=3)
        assert resp.entity_results
        assert resp.entity_results[0].cui == "D006331"

    def test_absent_vocabulary_still_well_formed(self, engine):
        # tokens hash to valid vectors even when unseen in the corpus
        resp = engine.ask("zzzqqq xylophone", k=3)
        assert isinstance(resp.phrase_results, list)
        assert resp.entity_results == []

    def test_degenerate_query_raises(self, engine):
        # whitespace survives the non-empty check but tokenizes to nothing
        with pytest.raises(QueryError):
            engine.ask("   ", k=3)

    def test_punctuation_only_query_is_not_degenerate(self, engine):
        resp = engine.ask("...", k=3)
        assert isinstance(resp.phrase_results, list)

    def test_bad_k_raises(self, engine):
        with pytest.raises(QueryError):
            engine.ask("virus", k=0)

    def test_deterministic_modulo_timing(self, engine):
        a = engine.ask("masks reduce spread", k=5).to_dict()
        b = engine.ask("masks reduce spread", k=5).to_dict()
        a.pop("timing_ms")
        b.pop("timing_ms")
        assert a == b

    def test_results_sorted_by_total(self, engine):
        resp = engine.ask("virus spread", k=10)
        totals = [a.total for a in resp.phrase_results]
        assert totals == sorted(totals, reverse=True)

    def test_one_answer_per_sentence(self, engine):
        resp = engine.ask("virus spread", k=10)
        keys = [(a.doc_id, a.sent_index) for a in resp.phrase_results]
        assert len(keys) == len(set(keys))

    def test_nprobe_clamped_to_centroid_count(self, engine):
        low = engine.ask("virus", nprobe=10 ** 6)
        assert len(low.phrase_results) >= 1

    def test_answer_sentences_swallows_degenerate(self, engine):
        assert engine.answer_sentences("   ", k=3) == []
        assert engine.answer_sentences("virus", k=3)

    def test_to_json_sorted_keys(self, engine):
        raw = engine.ask("virus", k=1).to_json()
        parsed = json.loads(raw)
        assert list(parsed) == sorted(parsed)
        assert raw == json.dumps(parsed, sort_keys=True, separators=(",", ":"))


class TestPersistence:
    def test_save_load_identical_answers(self, engine, tiny_corpus, tmp_path):
        save_engine(engine, tmp_path, dictionary=small_dictionary())
        loaded = load_engine(tmp_path, load_settings(**SMALL))
        assert loaded.index.index_version == engine.index.index_version
        for q in ("virus spread", "heart disease", "vaccine months", "masks"):
            a = engine.ask(q, k=5).to_dict()
            b = loaded.ask(q, k=5).to_dict()
            a.pop("timing_ms")
            b.pop("timing_ms")
            assert a == b

    def test_load_without_entity_layer(self, engine, tmp_path):
        save_engine(engine, tmp_path)  # no dictionary file written
        loaded = load_engine(tmp_path, load_settings(**SMALL))
        assert loaded.entity_index is not None  # entity.json is still saved
        assert loaded.annotations == {}  # but mentions need the dictionary


@pytest.fixture(scope="module")
def client(engine):
    return TestClient(create_app(engine))


class TestHttp:
    def test_health(self, client, engine):
        r = client.get("/api/health")
        assert r.status_code == 200
        assert r.json() == {"status": "ok", "index_version": engine.index.index_version}

    def test_ask_matches_engine(self, client, engine):
        r = client.get("/api/ask", params={"q": "virus spread", "k": 3})
        assert r.status_code == 200
        got = r.json()
        want = engine.ask("virus spread", k=3).to_dict()
        got.pop("timing_ms")
        want.pop("timing_ms")
        assert got == want

    def test_ask_defaults_applied(self, client):
        r = client.get("/api/ask", params={"q": "virus"})
        assert r.status_code == 200
        assert len(r.json()["phrase_results"]) >= 1

    def test_missing_q_is_422(self, client):
        assert client.get("/api/ask").status_code == 422

    def test_invalid_k_is_422(self, client):
        assert client.get("/api/ask", params={"q": "virus", "k": 0}).status_code == 422
        assert client.get("/api/ask", params={"q": "virus", "k": 2000}).status_code == 422

    def test_degenerate_query_is_400(self, client):
        r = client.get("/api/ask", params={"q": "   "})
        assert r.status_code == 400
        assert "token" in r.json()["detail"]

    def test_no_engine_is_503(self):
        bare = TestClient(create_app(None))
        assert bare.get("/api/health").status_code == 503
        assert bare.get("/api/ask", params={"q": "x"}).status_code == 503

    def test_body_is_deterministic_bytes(self, client):
        a = client.get("/api/ask", params={"q": "virus", "k": 2})
        b = client.get("/api/ask", params={"q": "virus", "k": 2})
        ja, jb = a.json(), b.json()
        ja.pop("timing_ms")
        jb.pop("timing_ms")
        assert ja == jb
        assert a.headers["content-type"] == "application/json"
